"""Pairwise image dissimilarity from patch feature sets.

Patches are matched all-to-all by brute force; only bidirectionally
consistent best matches (mutual nearest neighbors) count, and the image
dissimilarity is their mean embedding distance. Pairwise values fill a
symmetric k x k matrix whose entries feed spanning-tree construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .describe import FeatureSet
from .errors import EmptySetError, InvalidInputError


@dataclass
class DissimilarityMatrix:
    image_ids: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        k = len(self.image_ids)
        if self.values.shape != (k, k):
            raise InvalidInputError(f"{k} ids need a {k}x{k} matrix, got {self.values.shape}")
        if len(set(self.image_ids)) != k:
            raise InvalidInputError("image ids must be distinct")
        if not np.allclose(self.values, self.values.T):
            raise InvalidInputError("matrix must be symmetric")
        if np.any(np.diag(self.values) != 0):
            raise InvalidInputError("diagonal must be zero")
        if np.any(self.values < 0):
            raise InvalidInputError("dissimilarities must be non-negative")

    def to_dict(self) -> dict:
        return {"image_ids": list(self.image_ids), "values": [[float(v) for v in row] for row in self.values]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DissimilarityMatrix":
        return cls(image_ids=list(d["image_ids"]), values=np.array(d["values"], dtype=np.float64))

    @classmethod
    def from_json(cls, text: str) -> "DissimilarityMatrix":
        return cls.from_dict(json.loads(text))


def _distance_table(a: FeatureSet, b: FeatureSet) -> np.ndarray:
    if len(a) == 0 or len(b) == 0:
        raise EmptySetError("cannot match against an empty feature set")
    return cdist(a.embeddings.astype(np.float64), b.embeddings.astype(np.float64))


def mutual_best_matches(a: FeatureSet, b: FeatureSet):
    """(index_in_a, index_in_b, distance) triples where each side is the
    other's nearest neighbor. Ties resolve to the lowest index."""
    table = _distance_table(a, b)
    best_in_b = np.argmin(table, axis=1)
    best_in_a = np.argmin(table, axis=0)
    matches = []
    for u, v in enumerate(best_in_b):
        if best_in_a[v] == u:
            matches.append((u, int(v), float(table[u, v])))
    return matches


def image_dissimilarity(a: FeatureSet, b: FeatureSet) -> float:
    """Mean distance over mutual best matches.

    If no mutual pair exists (possible only under ties that argmin resolves
    asymmetrically), fall back to the mean of the two one-directional
    best-match means, which keeps the value symmetric.
    """
    table = _distance_table(a, b)
    best_in_b = np.argmin(table, axis=1)
    best_in_a = np.argmin(table, axis=0)
    mutual = [table[u, v] for u, v in enumerate(best_in_b) if best_in_a[v] == u]
    if mutual:
        # sorted before averaging so the value is exactly symmetric in (a, b)
        return float(np.mean(np.sort(mutual)))
    return float((table.min(axis=1).mean() + table.min(axis=0).mean()) / 2.0)


def build_matrix(sets) -> DissimilarityMatrix:
    """Symmetric dissimilarity matrix over all C(k,2) feature-set pairs,
    ordered by input order."""
    if len(sets) < 2:
        raise InvalidInputError("need at least 2 feature sets")
    ids = [s.image_id for s in sets]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("duplicate image ids in feature sets")
    k = len(sets)
    values = np.zeros((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(i + 1, k):
            d = image_dissimilarity(sets[i], sets[j])
            values[i, j] = values[j, i] = d
    return DissimilarityMatrix(image_ids=ids, values=values)
