"""Test-time patch sampling and description.

Turns a whole image into a FeatureSet: patch references plus unit-norm
embeddings from a trained network. Sampling is keypoint-driven to match the
training distribution, with a regular-grid fallback for structure-poor images.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .embednet import EmbeddingNet, embed_patches
from .errors import FeatureFileError, InvalidConfigError, TooSmallImageError
from .quadgen import DEFAULT_PATCH_SIZE, PatchRef, grid_centers, detect_keypoints
from .transforms import extract_patch

DEFAULT_MAX_PATCHES = 500
GRID_STRIDE = 32
MIN_KEYPOINTS = 20

FEATURE_MAGIC = b"PTFS"
FEATURE_VERSION = 1


@dataclass
class FeatureSet:
    image_id: str
    patches: list
    embeddings: np.ndarray = field(default_factory=lambda: np.zeros((0, 256), dtype=np.float32))

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        if self.embeddings.ndim != 2:
            raise InvalidConfigError(f"embeddings must be 2-d, got shape {self.embeddings.shape}")
        if len(self.patches) != len(self.embeddings):
            raise InvalidConfigError(
                f"{len(self.patches)} patch refs but {len(self.embeddings)} embeddings"
            )
        if len(self.embeddings):
            norms = np.linalg.norm(self.embeddings.astype(np.float64), axis=1)
            if not np.allclose(norms, 1.0, atol=1e-4):
                raise InvalidConfigError("embeddings must be unit-norm")

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


def sample_test_patches(
    image: np.ndarray,
    strategy: str = "keypoint",
    max_count: int = DEFAULT_MAX_PATCHES,
    image_id: str = "image",
    patch_size: int = DEFAULT_PATCH_SIZE,
    stride: int = GRID_STRIDE,
    min_keypoints: int = MIN_KEYPOINTS,
):
    """Patch references fully inside the image.

    keypoint strategy: response-ranked detections, falling back to the grid
    when fewer than min_keypoints fire. grid strategy: row-major regular grid
    with the given stride. Both are capped at max_count.
    """
    if strategy not in ("keypoint", "grid"):
        raise InvalidConfigError(f"unknown sampling strategy {strategy!r}")
    if max_count < 1:
        raise InvalidConfigError("max_count must be >= 1")
    h, w = image.shape[:2]
    if h < patch_size or w < patch_size:
        raise TooSmallImageError(f"image {w}x{h} smaller than patch window {patch_size}")

    if strategy == "keypoint":
        kps = detect_keypoints(image, max_count, patch_size=patch_size)
        if len(kps) >= min_keypoints:
            return [PatchRef(image_id, (int(round(k.x)), int(round(k.y))), patch_size) for k in kps]
    centers = grid_centers(w, h, patch_size, stride)[:max_count]
    return [PatchRef(image_id, (x, y), patch_size) for x, y in centers]


def describe_image(
    network: EmbeddingNet,
    image: np.ndarray,
    image_id: str = "image",
    strategy: str = "keypoint",
    max_count: int = DEFAULT_MAX_PATCHES,
    batch_size: int = 64,
) -> FeatureSet:
    """Sample patches and embed them with the network in evaluation mode."""
    refs = sample_test_patches(image, strategy, max_count, image_id=image_id)
    patches = np.stack([extract_patch(image, r.center[0], r.center[1], r.size) for r in refs])
    embeddings = embed_patches(network, patches, batch_size=batch_size)
    return FeatureSet(image_id=image_id, patches=refs, embeddings=embeddings)


def save_features(fs: FeatureSet, path) -> None:
    """Binary feature file: header, packed patch refs, float32 embeddings."""
    image_id = fs.image_id.encode("utf-8")
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<II", FEATURE_VERSION, len(image_id)))
        f.write(image_id)
        f.write(struct.pack("<II", len(fs), fs.dim))
        for ref in fs.patches:
            f.write(struct.pack("<iii", ref.center[0], ref.center[1], ref.size))
        f.write(fs.embeddings.astype("<f4").tobytes())


def load_features(path) -> FeatureSet:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic, not a feature file")
    offset = 4
    try:
        version, id_len = struct.unpack_from("<II", data, offset)
    except struct.error as exc:
        raise FeatureFileError(f"{path}: truncated header") from exc
    if version != FEATURE_VERSION:
        raise FeatureFileError(f"{path}: unsupported version {version}")
    offset += 8
    if len(data) < offset + id_len + 8:
        raise FeatureFileError(f"{path}: truncated header")
    image_id = data[offset : offset + id_len].decode("utf-8")
    offset += id_len
    count, dim = struct.unpack_from("<II", data, offset)
    offset += 8

    refs = []
    for i in range(count):
        try:
            x, y, size = struct.unpack_from("<iii", data, offset)
        except struct.error as exc:
            raise FeatureFileError(f"{path}: truncated at patch record {i}") from exc
        refs.append(PatchRef(image_id, (x, y), size))
        offset += 12

    payload = data[offset:]
    row_bytes = dim * 4
    if len(payload) != count * row_bytes:
        bad_row = len(payload) // row_bytes
        raise FeatureFileError(f"{path}: truncated at embedding record {bad_row}")
    embeddings = np.frombuffer(payload, dtype="<f4").reshape(count, dim) if count else np.zeros((0, dim), dtype=np.float32)
    return FeatureSet(image_id=image_id, patches=refs, embeddings=embeddings.copy())
