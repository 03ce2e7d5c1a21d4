"""Image transformation pool: sampling, application, chain composition.

All images are uint8 RGB arrays of shape (H, W, 3). Points are (x, y) pixel
coordinates with pixel centers on the integer lattice, so an image of width W
spans x in [0, W-1]. Geometric transforms return the exact 3x3 matrix taking
source coordinates to output coordinates; photometric transforms return the
identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import DegenerateTransformError, InvalidConfigError, InvalidInputError, ShapeError

KINDS = (
    "scale",
    "rotation",
    "flip",
    "shear",
    "projection",
    "brightness",
    "contrast",
    "gamma",
    "grayscale",
    "blur",
    "sharpen",
    "jpeg_compress",
)

GEOMETRIC_KINDS = ("scale", "rotation", "flip", "shear", "projection")

# Sampling ranges. The pool itself is fixed; every range can be overridden by
# passing a modified copy to sample_transform / compose_chain.
DEFAULT_RANGES: dict = {
    "scale": {"factor": (0.5, 1.5)},
    "rotation": {
        "degrees": (-30.0, 30.0),
        "right_angles": (90.0, 180.0, 270.0),
        "right_angle_chance": 0.25,
    },
    "flip": {"orientations": ("horizontal",)},  # add "vertical" to enable
    "shear": {"factor": (-0.2, 0.2)},
    "projection": {"max_offset": 0.10},  # corner offsets, fraction of side
    "brightness": {"factor": (0.6, 1.4)},
    "contrast": {"factor": (0.6, 1.4)},
    "gamma": {"exponent": (0.5, 2.0)},
    "grayscale": {},
    "blur": {"radii": (1, 2, 3)},
    "sharpen": {"amount": (0.5, 2.0), "radius": 2},
    "jpeg_compress": {"quality": (30, 90)},
}


@dataclass
class TransformSpec:
    """One parameterized transformation drawn from the pool."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfigError(f"unknown transform kind {self.kind!r}")

    def is_geometric(self) -> bool:
        return self.kind in GEOMETRIC_KINDS

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        return cls(kind=d["kind"], params=dict(d["params"]))


@dataclass
class TransformChain:
    """Ordered transform sequence with its composed geometric mapping."""

    specs: list
    homography: np.ndarray

    def __post_init__(self):
        self.homography = np.asarray(self.homography, dtype=np.float64)
        if self.homography.shape != (3, 3):
            raise ShapeError("homography must be 3x3")
        if abs(np.linalg.det(self.homography)) < 1e-12:
            raise InvalidInputError("chain homography is singular")

    def kinds(self) -> tuple:
        return tuple(s.kind for s in self.specs)

    def to_dict(self) -> dict:
        return {
            "specs": [s.to_dict() for s in self.specs],
            "homography": self.homography.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformChain":
        return cls(
            specs=[TransformSpec.from_dict(s) for s in d["specs"]],
            homography=np.array(d["homography"], dtype=np.float64),
        )

    @classmethod
    def from_json(cls, text: str) -> "TransformChain":
        return cls.from_dict(json.loads(text))


@dataclass
class Keypoint:
    """Detector keypoint: position in pixels plus response strength."""

    x: float
    y: float
    response: float


def identity_matrix() -> np.ndarray:
    return np.eye(3, dtype=np.float64)


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ShapeError(f"expected uint8 RGB image of shape (H, W, 3), got {image.shape} {image.dtype}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ShapeError("empty image")
    return image


def sample_transform(rng: np.random.Generator, exclude=frozenset(), ranges: dict | None = None) -> TransformSpec:
    """Draw one transform uniformly over the allowed kinds, params uniform per kind."""
    ranges = DEFAULT_RANGES if ranges is None else ranges
    exclude = set(exclude)
    unknown = exclude - set(KINDS)
    if unknown:
        raise InvalidConfigError(f"exclude contains unknown kinds: {sorted(unknown)}")
    allowed = [k for k in KINDS if k not in exclude and k in ranges]
    if not allowed:
        raise InvalidConfigError("no transform kinds left to sample from")
    kind = allowed[int(rng.integers(len(allowed)))]
    r = ranges[kind]
    params: dict = {}
    if kind == "scale":
        params["factor"] = float(rng.uniform(*r["factor"]))
    elif kind == "rotation":
        angles = r.get("right_angles", ())
        if angles and rng.random() < r.get("right_angle_chance", 0.0):
            params["degrees"] = float(angles[int(rng.integers(len(angles)))])
        else:
            params["degrees"] = float(rng.uniform(*r["degrees"]))
    elif kind == "flip":
        orientations = r["orientations"]
        params["orientation"] = orientations[int(rng.integers(len(orientations)))]
    elif kind == "shear":
        params["factor"] = float(rng.uniform(*r["factor"]))
    elif kind == "projection":
        m = r["max_offset"]
        for i in range(4):
            params[f"dx{i}"] = float(rng.uniform(-m, m))
            params[f"dy{i}"] = float(rng.uniform(-m, m))
    elif kind in ("brightness", "contrast"):
        params["factor"] = float(rng.uniform(*r["factor"]))
    elif kind == "gamma":
        params["exponent"] = float(rng.uniform(*r["exponent"]))
    elif kind == "blur":
        radii = r["radii"]
        params["radius"] = float(radii[int(rng.integers(len(radii)))])
    elif kind == "sharpen":
        params["amount"] = float(rng.uniform(*r["amount"]))
        params["radius"] = float(r["radius"])
    elif kind == "jpeg_compress":
        lo, hi = r["quality"]
        params["quality"] = float(rng.integers(lo, hi + 1))
    # grayscale takes no parameters
    return TransformSpec(kind=kind, params=params)


def _corners(w: int, h: int) -> np.ndarray:
    return np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)


def _map_points(matrix: np.ndarray, pts: np.ndarray) -> np.ndarray:
    homog = np.hstack([pts, np.ones((len(pts), 1))])
    mapped = homog @ matrix.T
    return mapped[:, :2] / mapped[:, 2:3]


def _fit_canvas(matrix: np.ndarray, w: int, h: int):
    """Translate the mapping so the transformed image lies in the positive quadrant."""
    mapped = _map_points(matrix, _corners(w, h))
    min_xy = mapped.min(axis=0)
    max_xy = mapped.max(axis=0)
    shift = np.eye(3)
    shift[0, 2] = -min_xy[0]
    shift[1, 2] = -min_xy[1]
    out_w = int(math.ceil(max_xy[0] - min_xy[0])) + 1
    out_h = int(math.ceil(max_xy[1] - min_xy[1])) + 1
    return shift @ matrix, out_w, out_h


def _quad_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _rotation_matrix(degrees: float, w: int, h: int) -> np.ndarray:
    theta = math.radians(degrees)
    if degrees % 90.0 == 0.0:
        c = round(math.cos(theta))
        s = round(math.sin(theta))
    else:
        c, s = math.cos(theta), math.sin(theta)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    to_origin = np.eye(3)
    to_origin[0, 2], to_origin[1, 2] = -cx, -cy
    back = np.eye(3)
    back[0, 2], back[1, 2] = cx, cy
    return back @ rot @ to_origin


def _unsharp(image: np.ndarray, amount: float, radius: int) -> np.ndarray:
    ksize = 2 * int(radius) + 1
    blurred = cv2.GaussianBlur(image, (ksize, ksize), 0)
    sharp = image.astype(np.float64) + amount * (image.astype(np.float64) - blurred.astype(np.float64))
    return np.clip(sharp, 0, 255).astype(np.uint8)


def apply_transform(image: np.ndarray, spec: TransformSpec):
    """Apply one transform. Returns (output image, 3x3 source->output mapping)."""
    image = _check_image(image)
    h, w = image.shape[:2]
    p = spec.params
    kind = spec.kind

    if kind == "scale":
        s = p["factor"]
        out_w, out_h = int(round(w * s)), int(round(h * s))
        if out_w < 1 or out_h < 1:
            raise DegenerateTransformError(f"scale {s} collapses {w}x{h} image")
        matrix = np.diag([out_w / w, out_h / h, 1.0])
        out = cv2.warpPerspective(image, matrix, (out_w, out_h), flags=cv2.INTER_LINEAR)
        return out, matrix

    if kind == "rotation":
        matrix, out_w, out_h = _fit_canvas(_rotation_matrix(p["degrees"], w, h), w, h)
        out = cv2.warpPerspective(image, matrix, (out_w, out_h), flags=cv2.INTER_LINEAR)
        return out, matrix

    if kind == "flip":
        orientation = p.get("orientation", "horizontal")
        if orientation not in ("horizontal", "vertical"):
            raise InvalidInputError(f"unknown flip orientation {orientation!r}")
        vertical = orientation == "vertical"
        matrix = np.eye(3)
        if vertical:
            matrix[1, 1], matrix[1, 2] = -1.0, h - 1
            out = cv2.flip(image, 0)
        else:
            matrix[0, 0], matrix[0, 2] = -1.0, w - 1
            out = cv2.flip(image, 1)
        return out, matrix

    if kind == "shear":
        k = p["factor"]
        shear = np.array([[1.0, k, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        matrix, out_w, out_h = _fit_canvas(shear, w, h)
        out = cv2.warpPerspective(image, matrix, (out_w, out_h), flags=cv2.INTER_LINEAR)
        return out, matrix

    if kind == "projection":
        src = _corners(w, h).astype(np.float32)
        dst = src.copy()
        for i in range(4):
            dst[i, 0] += p[f"dx{i}"] * (w - 1)
            dst[i, 1] += p[f"dy{i}"] * (h - 1)
        if _quad_area(dst.astype(np.float64)) < 1.0:
            raise DegenerateTransformError("projection collapses image below one pixel")
        persp = cv2.getPerspectiveTransform(src, dst).astype(np.float64)
        matrix, out_w, out_h = _fit_canvas(persp, w, h)
        out = cv2.warpPerspective(image, matrix, (out_w, out_h), flags=cv2.INTER_LINEAR)
        return out, matrix

    if kind == "brightness":
        out = np.clip(image.astype(np.float64) * p["factor"], 0, 255).astype(np.uint8)
        return out, identity_matrix()

    if kind == "contrast":
        out = np.clip((image.astype(np.float64) - 127.5) * p["factor"] + 127.5, 0, 255).astype(np.uint8)
        return out, identity_matrix()

    if kind == "gamma":
        lut = np.clip(255.0 * (np.arange(256) / 255.0) ** p["exponent"], 0, 255).astype(np.uint8)
        return cv2.LUT(image, lut), identity_matrix()

    if kind == "grayscale":
        gray = cv2.cvtColor(image, cv2.COLOR_RGB2GRAY)
        return np.repeat(gray[:, :, None], 3, axis=2), identity_matrix()

    if kind == "blur":
        ksize = 2 * int(p["radius"]) + 1
        return cv2.GaussianBlur(image, (ksize, ksize), 0), identity_matrix()

    if kind == "sharpen":
        return _unsharp(image, p["amount"], int(p.get("radius", 2))), identity_matrix()

    if kind == "jpeg_compress":
        quality = int(p["quality"])
        ok, buf = cv2.imencode(".jpg", cv2.cvtColor(image, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_JPEG_QUALITY, quality])
        if not ok:
            raise InvalidInputError("jpeg encoding failed")
        decoded = cv2.imdecode(buf, cv2.IMREAD_COLOR)
        return cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB), identity_matrix()

    raise InvalidConfigError(f"unknown transform kind {kind!r}")


def compose_chain(
    image: np.ndarray,
    length: int,
    rng: np.random.Generator,
    no_repeat: bool = True,
    ranges: dict | None = None,
    exclude=frozenset(),
):
    """Apply `length` sampled transforms in sequence.

    With no_repeat, no kind appears twice; `exclude` seeds the used-kind set so
    a chain can continue an earlier one under the same constraint.
    """
    if length < 1:
        raise InvalidConfigError("chain length must be >= 1")
    used = set(exclude)
    if no_repeat and length + len(used) > len(KINDS):
        raise InvalidConfigError(
            f"cannot draw {length} distinct kinds with {len(used)} already used (pool has {len(KINDS)})"
        )
    matrix = identity_matrix()
    specs = []
    out = image
    for _ in range(length):
        spec = sample_transform(rng, exclude=used if no_repeat else exclude, ranges=ranges)
        out, step = apply_transform(out, spec)
        matrix = step @ matrix
        specs.append(spec)
        if no_repeat:
            used.add(spec.kind)
    return out, TransformChain(specs=specs, homography=matrix)


def propagate_keypoints(kps, chain: TransformChain, out_bounds, patch_size: int):
    """Map keypoints through a chain's homography, dropping those whose patch
    window would exceed the output bounds. Order is preserved."""
    out_w, out_h = out_bounds
    half = patch_size // 2
    matrix = chain.homography
    kept = []
    for kp in kps:
        v = matrix @ np.array([kp.x, kp.y, 1.0])
        if abs(v[2]) < 1e-12:
            continue
        x, y = v[0] / v[2], v[1] / v[2]
        cx, cy = int(round(x)), int(round(y))
        if cx - half < 0 or cx - half + patch_size > out_w:
            continue
        if cy - half < 0 or cy - half + patch_size > out_h:
            continue
        kept.append(Keypoint(x=float(x), y=float(y), response=kp.response))
    return kept


def extract_patch(image: np.ndarray, x: float, y: float, size: int) -> np.ndarray:
    """Crop the size x size window centered (after rounding) at (x, y)."""
    image = _check_image(image)
    h, w = image.shape[:2]
    half = size // 2
    cx, cy = int(round(x)), int(round(y))
    left, top = cx - half, cy - half
    if left < 0 or top < 0 or left + size > w or top + size > h:
        raise InvalidInputError(f"patch window at ({x:.1f}, {y:.1f}) exceeds {w}x{h} image")
    return image[top : top + size, left : left + size].copy()
