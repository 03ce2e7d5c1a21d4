"""Walk through the transformation library: single edits, random sampling,
and composed chains with keypoint tracking.

Run from the repository root:

    python3 demos/01_transformations.py
"""

import numpy as np

from provtrace.quadgen import synthesize_image
from provtrace.transforms import (
    GEOMETRIC_KINDS,
    KINDS,
    Keypoint,
    TransformSpec,
    apply_transform,
    compose_chain,
    propagate_keypoints,
    sample_transform,
)

rng = np.random.default_rng(7)
image = synthesize_image(rng)
print(f"source image: {image.shape[1]}x{image.shape[0]}")

# Every supported edit once, with hand-picked parameters. Geometric kinds
# move pixels and return a homography; photometric kinds leave it identity.
showcase = [
    TransformSpec("scale", {"factor": 0.8}),
    TransformSpec("rotation", {"degrees": 20.0}),
    TransformSpec("flip", {"orientation": "horizontal"}),
    TransformSpec("shear", {"factor": 0.15}),
    TransformSpec("projection", {"dx0": 0.05, "dy0": 0.0, "dx1": -0.04, "dy1": 0.02,
                                 "dx2": 0.0, "dy2": -0.03, "dx3": 0.03, "dy3": 0.0}),
    TransformSpec("brightness", {"factor": 1.3}),
    TransformSpec("contrast", {"factor": 0.7}),
    TransformSpec("gamma", {"exponent": 1.8}),
    TransformSpec("grayscale", {}),
    TransformSpec("blur", {"radius": 2}),
    TransformSpec("sharpen", {"amount": 1.0, "radius": 2}),
    TransformSpec("jpeg_compress", {"quality": 40}),
]
assert {s.kind for s in showcase} == set(KINDS)

print("\none pass per kind:")
for spec in showcase:
    out, hom = apply_transform(image, spec)
    family = "geometric  " if spec.kind in GEOMETRIC_KINDS else "photometric"
    moved = "moves pixels" if not np.allclose(hom, np.eye(3)) else "identity map"
    print(f"  {spec.kind:14s} {family}  {moved}  -> {out.shape[1]}x{out.shape[0]}")

# Random sampling is what the dataset generator actually uses.
print("\nfive random draws:")
for _ in range(5):
    spec = sample_transform(rng)
    print(f"  {spec.kind:14s} params={spec.params}")

# Chains are how near-duplicates happen in the wild: a few edits in sequence,
# no kind repeated. The composed homography tracks any source location.
derived, chain = compose_chain(image, 3, rng, no_repeat=True)
print(f"\na 3-step chain: {' -> '.join(chain.kinds())}")
print(f"  result size: {derived.shape[1]}x{derived.shape[0]}")

center = Keypoint(x=(image.shape[1] - 1) / 2.0, y=(image.shape[0] - 1) / 2.0, response=1.0)
kept = propagate_keypoints(
    [center], chain, (derived.shape[1], derived.shape[0]), patch_size=64
)
if kept:
    print(f"  center pixel lands at ({kept[0].x:.1f}, {kept[0].y:.1f}); "
          f"a 64px patch window still fits")
else:
    print("  center pixel left the canvas (or its patch window no longer fits)")
