"""Quadruplet dataset construction and synthetic provenance journals.

A quadruplet is (anchor, positive, weak positive, negative): the positive is
the anchor patch after an M-transform chain, the weak positive continues with
N more transforms, and the negative comes from an unrelated image. Difficulty
controls the (M, M+N) profile: easy pairs are (1,4)/(2,5), hard are
(1,2)/(2,3).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage

from .errors import (
    FeatureFileError,
    InvalidConfigError,
    InvalidInputError,
    ManifestParseError,
    TooSmallImageError,
)
from .transforms import (
    Keypoint,
    TransformChain,
    compose_chain,
    extract_patch,
    propagate_keypoints,
)

EASY_PROFILES = ((1, 4), (2, 5))  # (m, m + n)
HARD_PROFILES = ((1, 2), (2, 3))

DEFAULT_PATCH_SIZE = 64
DETECTOR_MAX_KEYPOINTS = 2000


@dataclass
class PatchRef:
    """Reference to a square patch: source image, center pixel, side length."""

    image_id: str
    center: tuple
    size: int

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, "center": [self.center[0], self.center[1]], "size": self.size}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchRef":
        return cls(image_id=d["image_id"], center=(int(d["center"][0]), int(d["center"][1])), size=int(d["size"]))


@dataclass
class QuadrupletRecord:
    anchor: PatchRef
    positive: PatchRef
    weak_positive: PatchRef
    negative: PatchRef
    m: int
    n: int
    difficulty: str
    chain_ids: list = field(default_factory=list)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise InvalidInputError(f"m and n must be >= 1, got m={self.m} n={self.n}")
        profile = (self.m, self.m + self.n)
        expected = EASY_PROFILES if self.difficulty == "easy" else HARD_PROFILES
        if self.difficulty not in ("easy", "hard"):
            raise InvalidInputError(f"unknown difficulty {self.difficulty!r}")
        if profile not in expected:
            raise InvalidInputError(f"profile {profile} does not match difficulty {self.difficulty!r}")
        if self.negative.image_id == self.anchor.image_id:
            raise InvalidInputError("negative patch must come from a different image")

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor.to_dict(),
            "positive": self.positive.to_dict(),
            "weak_positive": self.weak_positive.to_dict(),
            "negative": self.negative.to_dict(),
            "m": self.m,
            "n": self.n,
            "difficulty": self.difficulty,
            "chain_ids": list(self.chain_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuadrupletRecord":
        return cls(
            anchor=PatchRef.from_dict(d["anchor"]),
            positive=PatchRef.from_dict(d["positive"]),
            weak_positive=PatchRef.from_dict(d["weak_positive"]),
            negative=PatchRef.from_dict(d["negative"]),
            m=int(d["m"]),
            n=int(d["n"]),
            difficulty=d["difficulty"],
            chain_ids=list(d["chain_ids"]),
        )


class PatchStore:
    """Flat in-memory store of fixed-size uint8 RGB patches.

    make_quadruplets appends four patches per record in (anchor, positive,
    weak positive, negative) order, so record k owns store slots 4k..4k+3.
    On disk: a small header followed by one contiguous blob of raw patch bytes.
    """

    MAGIC = b"PTPS"
    VERSION = 1

    def __init__(self, patch_size: int = DEFAULT_PATCH_SIZE):
        self.patch_size = patch_size
        self._patches: list = []

    def __len__(self) -> int:
        return len(self._patches)

    def add(self, patch: np.ndarray) -> int:
        patch = np.asarray(patch, dtype=np.uint8)
        if patch.shape != (self.patch_size, self.patch_size, 3):
            raise InvalidInputError(f"patch shape {patch.shape} does not match store size {self.patch_size}")
        self._patches.append(patch)
        return len(self._patches) - 1

    def get(self, index: int) -> np.ndarray:
        return self._patches[index]

    def as_array(self) -> np.ndarray:
        if not self._patches:
            return np.zeros((0, self.patch_size, self.patch_size, 3), dtype=np.uint8)
        return np.stack(self._patches)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.MAGIC)
            header = np.array([self.VERSION, len(self._patches), self.patch_size, 3], dtype="<u4")
            f.write(header.tobytes())
            f.write(self.as_array().tobytes())

    @classmethod
    def load(cls, path) -> "PatchStore":
        with open(path, "rb") as f:
            data = f.read()
        if data[:4] != cls.MAGIC:
            raise FeatureFileError(f"{path}: bad magic, not a patch store")
        header = np.frombuffer(data[4:20], dtype="<u4")
        if len(header) < 4 or header[0] != cls.VERSION:
            raise FeatureFileError(f"{path}: unsupported header")
        count, size, channels = int(header[1]), int(header[2]), int(header[3])
        expected = 20 + count * size * size * channels
        if len(data) != expected:
            raise FeatureFileError(f"{path}: expected {expected} bytes, found {len(data)} (truncated or padded)")
        store = cls(patch_size=size)
        if count:
            arr = np.frombuffer(data[20:], dtype=np.uint8).reshape(count, size, size, channels)
            store._patches = [arr[i].copy() for i in range(count)]
        return store


def record_patches(store: PatchStore, record_index: int):
    """The (anchor, positive, weak positive, negative) patches of record k."""
    base = 4 * record_index
    return tuple(store.get(base + i) for i in range(4))


def _luma(image: np.ndarray) -> np.ndarray:
    return cv2.cvtColor(image, cv2.COLOR_RGB2GRAY).astype(np.float64) / 255.0


def hessian_response(gray: np.ndarray, sigmas=(1.6, 2.4, 3.6, 5.4)) -> np.ndarray:
    """Scale-normalized determinant-of-Hessian response, max over scales.

    The absolute value is taken so both blobs and saddle-type corners (e.g.
    checkerboard intersections) produce positive responses.
    """
    best = np.zeros_like(gray)
    for sigma in sigmas:
        lxx = ndimage.gaussian_filter(gray, sigma, order=(0, 2))
        lyy = ndimage.gaussian_filter(gray, sigma, order=(2, 0))
        lxy = ndimage.gaussian_filter(gray, sigma, order=(1, 1))
        det = sigma**4 * np.abs(lxx * lyy - lxy * lxy)
        best = np.maximum(best, det)
    return best


def detect_keypoints(
    image: np.ndarray,
    max_count: int,
    patch_size: int = DEFAULT_PATCH_SIZE,
    threshold: float = 1e-6,
):
    """Blob/corner keypoints sorted by descending response.

    Only positions whose centered patch_size window fits inside the image are
    returned. A structure-free (constant) image yields an empty list.
    """
    if max_count < 1:
        raise InvalidConfigError("max_count must be >= 1")
    h, w = image.shape[:2]
    if h < patch_size or w < patch_size:
        raise TooSmallImageError(f"image {w}x{h} smaller than patch window {patch_size}")
    resp = hessian_response(_luma(image))
    peaks = (ndimage.maximum_filter(resp, size=3, mode="nearest") == resp) & (resp > threshold)
    half = patch_size // 2
    valid = np.zeros_like(peaks)
    # window [c-half, c-half+patch_size) must stay inside the image
    valid[half : h - patch_size + half + 1, half : w - patch_size + half + 1] = True
    ys, xs = np.nonzero(peaks & valid)
    if len(ys) == 0:
        return []
    responses = resp[ys, xs]
    order = np.lexsort((xs, ys, -responses))
    kps = [Keypoint(x=float(xs[i]), y=float(ys[i]), response=float(responses[i])) for i in order[:max_count]]
    return kps


def grid_centers(w: int, h: int, patch_size: int, stride: int):
    half = patch_size // 2
    xs = range(half, w - patch_size + half + 1, stride)
    ys = range(half, h - patch_size + half + 1, stride)
    return [(x, y) for y in ys for x in xs]


def make_quadruplets(
    anchor_image: np.ndarray,
    negative_image: np.ndarray,
    difficulty: str,
    count: int,
    rng: np.random.Generator,
    anchor_id: str = "anchor",
    negative_id: str = "negative",
    patch_size: int = DEFAULT_PATCH_SIZE,
    ranges: dict | None = None,
    store: PatchStore | None = None,
    chains_out: dict | None = None,
):
    """Build up to `count` quadruplet records from one anchor/negative image pair.

    For each anchor keypoint an M-chain produces the positive image and an
    N-chain (continuing the no-repeat constraint) the weak positive image; the
    keypoint is tracked through both homographies and the record is skipped if
    its patch window falls outside either output. Fewer than `count` surviving
    records is not an error.
    """
    if difficulty not in ("easy", "hard"):
        raise InvalidConfigError(f"difficulty must be 'easy' or 'hard', got {difficulty!r}")
    if anchor_id == negative_id:
        raise InvalidInputError("anchor and negative images must be distinct")
    profiles = EASY_PROFILES if difficulty == "easy" else HARD_PROFILES
    store = store if store is not None else PatchStore(patch_size=patch_size)

    anchor_kps = detect_keypoints(anchor_image, DETECTOR_MAX_KEYPOINTS, patch_size=patch_size)
    neg_kps = detect_keypoints(negative_image, DETECTOR_MAX_KEYPOINTS, patch_size=patch_size)
    if not neg_kps:
        nh, nw = negative_image.shape[:2]
        neg_centers = grid_centers(nw, nh, patch_size, patch_size // 2)
    else:
        neg_centers = [(int(round(kp.x)), int(round(kp.y))) for kp in neg_kps]

    records = []
    for kp in anchor_kps:
        if len(records) >= count:
            break
        m, m_plus_n = profiles[int(rng.integers(len(profiles)))]
        n = m_plus_n - m

        pos_image, chain_m = compose_chain(anchor_image, m, rng, no_repeat=True, ranges=ranges)
        ph, pw = pos_image.shape[:2]
        tracked = propagate_keypoints([kp], chain_m, (pw, ph), patch_size)
        if not tracked:
            continue
        kp_pos = tracked[0]

        wp_image, chain_n = compose_chain(
            pos_image, n, rng, no_repeat=True, ranges=ranges, exclude=chain_m.kinds()
        )
        wh, ww = wp_image.shape[:2]
        tracked = propagate_keypoints([kp_pos], chain_n, (ww, wh), patch_size)
        if not tracked:
            continue
        kp_wp = tracked[0]

        neg_cx, neg_cy = neg_centers[int(rng.integers(len(neg_centers)))]
        idx = len(records)
        chain_id_m = f"{anchor_id}:q{idx}:m"
        chain_id_n = f"{anchor_id}:q{idx}:n"
        record = QuadrupletRecord(
            anchor=PatchRef(anchor_id, (int(round(kp.x)), int(round(kp.y))), patch_size),
            positive=PatchRef(f"{anchor_id}+m", (int(round(kp_pos.x)), int(round(kp_pos.y))), patch_size),
            weak_positive=PatchRef(f"{anchor_id}+mn", (int(round(kp_wp.x)), int(round(kp_wp.y))), patch_size),
            negative=PatchRef(negative_id, (neg_cx, neg_cy), patch_size),
            m=m,
            n=n,
            difficulty=difficulty,
            chain_ids=[chain_id_m, chain_id_n],
        )
        store.add(extract_patch(anchor_image, kp.x, kp.y, patch_size))
        store.add(extract_patch(pos_image, kp_pos.x, kp_pos.y, patch_size))
        store.add(extract_patch(wp_image, kp_wp.x, kp_wp.y, patch_size))
        store.add(extract_patch(negative_image, neg_cx, neg_cy, patch_size))
        if chains_out is not None:
            chains_out[chain_id_m] = chain_m
            chains_out[chain_id_n] = chain_n
        records.append(record)

    return records, store


@dataclass
class GroundTruthJournal:
    """Ground-truth manipulation history: a tree of image versions."""

    case_id: str
    nodes: list
    edges: list
    chains: dict = field(default_factory=dict)

    def __post_init__(self):
        self.edges = [(a, b) for a, b in self.edges]
        self.validate()

    def validate(self) -> None:
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise InvalidInputError("journal has duplicate node ids")
        if len(self.edges) != len(self.nodes) - 1:
            raise InvalidInputError(f"{len(self.nodes)} nodes need {len(self.nodes) - 1} edges, got {len(self.edges)}")
        parent = {n: n for n in self.nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in self.edges:
            if a not in node_set or b not in node_set:
                raise InvalidInputError(f"edge ({a}, {b}) references unknown node")
            ra, rb = find(a), find(b)
            if ra == rb:
                raise InvalidInputError(f"edge ({a}, {b}) creates a cycle")
            parent[ra] = rb

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "nodes": list(self.nodes),
            "edges": [[a, b] for a, b in self.edges],
            "chains": {f"{a}|{b}": self.chains[(a, b)].to_dict() for a, b in self.edges if (a, b) in self.chains},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthJournal":
        chains = {}
        for key, chain_dict in d.get("chains", {}).items():
            a, b = key.split("|", 1)
            chains[(a, b)] = TransformChain.from_dict(chain_dict)
        return cls(
            case_id=d["case_id"],
            nodes=list(d["nodes"]),
            edges=[tuple(e) for e in d["edges"]],
            chains=chains,
        )


def save_journal(journal: GroundTruthJournal, path) -> None:
    if any("|" in n for n in journal.nodes):
        raise InvalidInputError("node ids must not contain '|'")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(journal.to_dict(), f, sort_keys=True, ensure_ascii=False)
        f.write("\n")


def load_journal(path) -> GroundTruthJournal:
    with open(path, "r", encoding="utf-8") as f:
        return GroundTruthJournal.from_dict(json.load(f))


def make_synthetic_journal(
    seed_image: np.ndarray,
    n_nodes: int,
    branching: float,
    rng: np.random.Generator,
    case_id: str = "case",
    ranges: dict | None = None,
    min_chain: int = 1,
    max_chain: int = 3,
    min_side: int = DEFAULT_PATCH_SIZE,
):
    """Grow a random provenance tree of transformed copies of seed_image.

    With probability `branching` a new node forks off a uniformly chosen
    existing node; otherwise it extends the most recent one, so branching=0
    yields a pure chain. Chains that would shrink a node below min_side are
    resampled.
    """
    if n_nodes < 2:
        raise InvalidConfigError("a journal needs at least 2 nodes")
    node_id = lambda i: f"{case_id}_n{i:03d}"
    images = {node_id(0): seed_image}
    nodes = [node_id(0)]
    edges = []
    chains = {}
    for i in range(1, n_nodes):
        if i == 1 or rng.random() >= branching:
            parent = nodes[-1]
        else:
            parent = nodes[int(rng.integers(len(nodes)))]
        length = int(rng.integers(min_chain, max_chain + 1))
        child_img = None
        for _ in range(20):
            candidate, chain = compose_chain(images[parent], length, rng, no_repeat=True, ranges=ranges)
            if candidate.shape[0] >= min_side and candidate.shape[1] >= min_side:
                child_img = candidate
                break
        if child_img is None:
            raise InvalidInputError(f"could not grow node {i} of {case_id} above {min_side}px after 20 tries")
        child = node_id(i)
        images[child] = child_img
        nodes.append(child)
        edges.append((parent, child))
        chains[(parent, child)] = chain
    journal = GroundTruthJournal(case_id=case_id, nodes=nodes, edges=edges, chains=chains)
    return images, journal


def write_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False))
            f.write("\n")


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as f:
        content = f.read()
    records = []
    for i, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            raise ManifestParseError("blank line", i)
        try:
            records.append(QuadrupletRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, InvalidInputError) as exc:
            raise ManifestParseError(str(exc), i) from exc
    return records


def split_indices_by_anchor_image(records, val_fraction: float = 0.1, seed: int = 0):
    """Record indices for a train/validation split grouped by anchor image,
    so no anchor image spans both splits. Index lists keep manifest order."""
    if not 0.0 < val_fraction < 1.0:
        raise InvalidConfigError("val_fraction must be in (0, 1)")
    groups: dict = {}
    for idx, record in enumerate(records):
        groups.setdefault(record.anchor.image_id, []).append(idx)
    image_ids = sorted(groups)
    rng = np.random.default_rng(seed)
    rng.shuffle(image_ids)
    target = val_fraction * len(records)
    val_idx: set = set()
    for image_id in image_ids:
        if len(val_idx) >= target:
            break
        val_idx.update(groups[image_id])
    train = [i for i in range(len(records)) if i not in val_idx]
    val = sorted(val_idx)
    return train, val


def split_by_anchor_image(records, val_fraction: float = 0.1, seed: int = 0):
    """Record-level view of split_indices_by_anchor_image."""
    train_idx, val_idx = split_indices_by_anchor_image(records, val_fraction, seed)
    return [records[i] for i in train_idx], [records[i] for i in val_idx]


def synthesize_image(rng: np.random.Generator, size=(256, 256)) -> np.ndarray:
    """Procedural textured test image: smooth color field, random shapes,
    band-limited noise. Plenty of blob/corner structure for the detector."""
    h, w = size[1], size[0]
    corners = rng.integers(0, 256, size=(2, 2, 3)).astype(np.float64)
    ys = np.linspace(0, 1, h)[:, None, None]
    xs = np.linspace(0, 1, w)[None, :, None]
    top = corners[0, 0] * (1 - xs) + corners[0, 1] * xs
    bottom = corners[1, 0] * (1 - xs) + corners[1, 1] * xs
    canvas = (top * (1 - ys) + bottom * ys).astype(np.float64)

    img = canvas.astype(np.uint8).copy()
    n_shapes = int(rng.integers(12, 25))
    for _ in range(n_shapes):
        color = tuple(int(c) for c in rng.integers(0, 256, size=3))
        shape = int(rng.integers(3))
        if shape == 0:
            center = (int(rng.integers(w)), int(rng.integers(h)))
            radius = int(rng.integers(4, max(8, min(w, h) // 6)))
            cv2.circle(img, center, radius, color, -1)
        elif shape == 1:
            x0, y0 = int(rng.integers(w)), int(rng.integers(h))
            x1 = min(w - 1, x0 + int(rng.integers(6, w // 3)))
            y1 = min(h - 1, y0 + int(rng.integers(6, h // 3)))
            cv2.rectangle(img, (x0, y0), (x1, y1), color, -1)
        else:
            p0 = (int(rng.integers(w)), int(rng.integers(h)))
            p1 = (int(rng.integers(w)), int(rng.integers(h)))
            cv2.line(img, p0, p1, color, int(rng.integers(1, 4)))

    noise = rng.normal(0.0, 18.0, size=(h, w, 3))
    noise = cv2.GaussianBlur(noise.astype(np.float32), (5, 5), 0)
    out = np.clip(img.astype(np.float64) + noise, 0, 255).astype(np.uint8)
    return out


def synthesize_corpus(rng: np.random.Generator, n: int, size=(256, 256)):
    """n procedural images with stable ids img000, img001, ..."""
    return [(f"img{i:03d}", synthesize_image(rng, size=size)) for i in range(n)]
