import json

import cv2
import numpy as np
import pytest

from provtrace.errors import (
    DegenerateTransformError,
    InvalidConfigError,
    InvalidInputError,
    ShapeError,
)
from provtrace.transforms import (
    GEOMETRIC_KINDS,
    KINDS,
    Keypoint,
    TransformChain,
    TransformSpec,
    apply_transform,
    compose_chain,
    extract_patch,
    identity_matrix,
    propagate_keypoints,
    sample_transform,
)

PHOTOMETRIC_KINDS = tuple(k for k in KINDS if k not in GEOMETRIC_KINDS)


def map_point(H, x, y):
    v = H @ np.array([x, y, 1.0])
    return v[0] / v[2], v[1] / v[2]


def checker(w=120, h=90, cell=10):
    ys, xs = np.mgrid[0:h, 0:w]
    tile = (((ys // cell) + (xs // cell)) % 2 * 255).astype(np.uint8)
    return np.stack([tile] * 3, axis=-1)


def dot_image(w=201, h=161, x=65, y=40):
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[y - 1 : y + 2, x - 1 : x + 2] = 128
    img[y, x] = 255
    return img


def brightest(img):
    gray = img.sum(axis=2)
    idx = np.argmax(gray)
    y, x = divmod(int(idx), img.shape[1])
    return x, y


class TestSampling:
    def test_deterministic_under_seed(self):
        a = [sample_transform(np.random.default_rng(7)) for _ in range(5)]
        b = [sample_transform(np.random.default_rng(7)) for _ in range(5)]
        assert [s.to_dict() for s in a] == [s.to_dict() for s in b]

    def test_forced_choice(self):
        rng = np.random.default_rng(0)
        spec = sample_transform(rng, exclude=tuple(k for k in KINDS if k != "gamma"))
        assert spec.kind == "gamma"

    def test_all_kinds_reachable(self):
        rng = np.random.default_rng(1)
        seen = {sample_transform(rng).kind for _ in range(10_000)}
        assert seen == set(KINDS)

    def test_unknown_exclude_rejected(self):
        with pytest.raises(InvalidConfigError):
            sample_transform(np.random.default_rng(0), exclude=("sepia",))

    def test_empty_pool_rejected(self):
        with pytest.raises(InvalidConfigError):
            sample_transform(np.random.default_rng(0), exclude=KINDS)

    def test_params_within_design_ranges(self):
        rng = np.random.default_rng(2)
        for _ in range(2000):
            spec = sample_transform(rng)
            if spec.kind == "scale":
                assert 0.5 <= spec.params["factor"] <= 1.5
            elif spec.kind == "rotation":
                deg = spec.params["degrees"]
                assert -30 <= deg <= 30 or deg in (90, 180, 270)
            elif spec.kind == "shear":
                assert -0.2 <= spec.params["factor"] <= 0.2
            elif spec.kind == "gamma":
                assert 0.5 <= spec.params["exponent"] <= 2.0
            elif spec.kind == "jpeg_compress":
                assert 30 <= spec.params["quality"] <= 90


class TestSpecValidation:
    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidConfigError):
            TransformSpec(kind="vignette", params={})

    def test_wrong_image_shape_rejected(self):
        gray = np.zeros((64, 64), dtype=np.uint8)
        with pytest.raises(ShapeError):
            apply_transform(gray, TransformSpec("flip", {"orientation": "horizontal"}))

    def test_wrong_dtype_rejected(self):
        img = np.zeros((64, 64, 3), dtype=np.float32)
        with pytest.raises(ShapeError):
            apply_transform(img, TransformSpec("flip", {"orientation": "horizontal"}))


class TestGeometric:
    def test_scale_half_shrinks_canvas_and_matrix(self):
        img = checker(100, 100)
        out, H = apply_transform(img, TransformSpec("scale", {"factor": 0.5}))
        assert out.shape == (50, 50, 3)
        assert np.allclose(H, np.diag([0.5, 0.5, 1.0]))

    def test_scale_below_one_pixel_is_degenerate(self):
        img = checker(4, 4)
        with pytest.raises(DegenerateTransformError):
            apply_transform(img, TransformSpec("scale", {"factor": 0.1}))

    def test_right_angle_rotation_exact_size(self):
        img = checker(120, 90)
        out, H = apply_transform(img, TransformSpec("rotation", {"degrees": 90}))
        assert out.shape[:2] == (120, 90)
        # pixel content must match a pure np.rot90 up to the chosen direction
        assert np.array_equal(out, np.rot90(img, k=-1)) or np.array_equal(out, np.rot90(img, k=1))

    def test_rotation_180_is_double_flip(self):
        img = checker(80, 60)
        out, _ = apply_transform(img, TransformSpec("rotation", {"degrees": 180}))
        assert np.array_equal(out, img[::-1, ::-1])

    def test_rotation_homography_round_trip(self):
        img = checker(131, 97)
        out, H = apply_transform(img, TransformSpec("rotation", {"degrees": 23.0}))
        Hinv = np.linalg.inv(H)
        for x, y in [(10.0, 20.0), (65.0, 48.0), (130.0, 96.0)]:
            fx, fy = map_point(H, x, y)
            bx, by = map_point(Hinv, fx, fy)
            assert abs(bx - x) < 1e-6 and abs(by - y) < 1e-6

    def test_rotated_corners_inside_canvas(self):
        img = checker(131, 97)
        for deg in (-29.0, -7.5, 12.0, 29.9):
            out, H = apply_transform(img, TransformSpec("rotation", {"degrees": deg}))
            h, w = out.shape[:2]
            for x, y in [(0, 0), (130, 0), (0, 96), (130, 96)]:
                fx, fy = map_point(H, x, y)
                assert -0.5 <= fx <= w - 0.5 and -0.5 <= fy <= h - 0.5

    def test_flip_maps_left_edge_to_right_edge(self):
        img = dot_image(101, 81, x=5, y=33)
        out, H = apply_transform(img, TransformSpec("flip", {"orientation": "horizontal"}))
        assert out.shape == img.shape
        fx, fy = map_point(H, 5, 33)
        assert (fx, fy) == (95, 33)
        assert brightest(out) == (95, 33)

    def test_flip_vertical(self):
        img = dot_image(101, 81, x=5, y=33)
        out, H = apply_transform(img, TransformSpec("flip", {"orientation": "vertical"}))
        fx, fy = map_point(H, 5, 33)
        assert (fx, fy) == (5, 47)
        assert np.array_equal(out, img[::-1])

    def test_shear_keeps_rows(self):
        img = checker(100, 80)
        out, H = apply_transform(img, TransformSpec("shear", {"factor": 0.2}))
        # horizontal shear: y coordinates pass through unchanged
        fx, fy = map_point(H, 30.0, 41.0)
        assert fy == pytest.approx(41.0)
        assert out.shape[0] == 80

    def test_projection_degenerate_rejected(self):
        # pull all four corners into the center: zero-area quad
        img = checker(100, 80)
        params = {
            "dx0": 0.5, "dy0": 0.5,
            "dx1": -0.5, "dy1": 0.5,
            "dx2": -0.5, "dy2": -0.5,
            "dx3": 0.5, "dy3": -0.5,
        }
        with pytest.raises(DegenerateTransformError):
            apply_transform(img, TransformSpec("projection", params))

    @pytest.mark.parametrize("kind", GEOMETRIC_KINDS)
    def test_delta_dot_follows_homography(self, kind):
        # warp an isolated bright dot; its new argmax must land where the
        # returned homography says the old center went
        rng = np.random.default_rng(11)
        for _ in range(8):
            spec = sample_transform(rng, exclude=tuple(k for k in KINDS if k != kind))
            img = dot_image()
            out, H = apply_transform(img, spec)
            fx, fy = map_point(H, 65, 40)
            bx, by = brightest(out)
            assert abs(bx - fx) <= 1.0 and abs(by - fy) <= 1.0


class TestPhotometric:
    @pytest.mark.parametrize("kind", PHOTOMETRIC_KINDS)
    def test_identity_homography_and_shape(self, kind):
        rng = np.random.default_rng(3)
        img = checker()
        spec = sample_transform(rng, exclude=tuple(k for k in KINDS if k != kind))
        out, H = apply_transform(img, spec)
        assert out.shape == img.shape
        assert np.array_equal(H, identity_matrix())

    def test_brightness_direction(self):
        img = np.full((32, 32, 3), 100, dtype=np.uint8)
        up, _ = apply_transform(img, TransformSpec("brightness", {"factor": 1.4}))
        down, _ = apply_transform(img, TransformSpec("brightness", {"factor": 0.6}))
        assert np.all(up == 140) and np.all(down == 60)

    def test_contrast_pivots_at_midpoint(self):
        img = np.full((64, 64, 3), 200, dtype=np.uint8)
        out, _ = apply_transform(img, TransformSpec("contrast", {"factor": 0.5}))
        assert np.all(out == int(127.5 + 0.5 * (200 - 127.5)))

    def test_gamma_identity_exponent(self):
        img = checker()
        out, _ = apply_transform(img, TransformSpec("gamma", {"exponent": 1.0}))
        assert np.array_equal(out, img)

    def test_grayscale_equalizes_channels(self):
        rng = np.random.default_rng(4)
        img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        out, _ = apply_transform(img, TransformSpec("grayscale", {}))
        assert np.array_equal(out[..., 0], out[..., 1])
        assert np.array_equal(out[..., 1], out[..., 2])

    def test_jpeg_is_lossy_but_bounded(self):
        img = checker()
        hi, _ = apply_transform(img, TransformSpec("jpeg_compress", {"quality": 90}))
        lo, _ = apply_transform(img, TransformSpec("jpeg_compress", {"quality": 30}))
        err_hi = np.abs(hi.astype(int) - img.astype(int)).mean()
        err_lo = np.abs(lo.astype(int) - img.astype(int)).mean()
        assert 0 < err_hi < err_lo < 60

    def test_blur_reduces_variance(self):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        out, _ = apply_transform(img, TransformSpec("blur", {"radius": 3}))
        assert out.std() < img.std()


class TestChains:
    def test_homography_composes_pointwise(self):
        # tracking a point step by step must agree with the composed matrix
        rng = np.random.default_rng(6)
        for _ in range(20):
            img = checker(160, 120)
            out, chain = compose_chain(img, 4, rng)
            pts = [(0.0, 0.0), (80.0, 60.0), (159.0, 119.0)]
            step_img = img
            tracked = pts
            for spec in chain.specs:
                step_img, H = apply_transform(step_img, spec)
                tracked = [map_point(H, x, y) for x, y in tracked]
            assert step_img.shape == out.shape
            for (sx, sy), (x, y) in zip(tracked, (map_point(chain.homography, *p) for p in pts)):
                assert abs(sx - x) < 1e-9 and abs(sy - y) < 1e-9

    def test_no_repeat_within_chain(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            _, chain = compose_chain(checker(), 5, rng)
            kinds = chain.kinds()
            assert len(kinds) == len(set(kinds)) == 5

    def test_exclude_continues_across_chains(self):
        rng = np.random.default_rng(8)
        img = checker(200, 160)
        out1, chain1 = compose_chain(img, 2, rng)
        _, chain2 = compose_chain(out1, 3, rng, exclude=chain1.kinds())
        combined = chain1.kinds() + chain2.kinds()
        assert len(combined) == len(set(combined)) == 5

    def test_capacity_exceeded_rejected(self):
        rng = np.random.default_rng(9)
        with pytest.raises(InvalidConfigError):
            compose_chain(checker(), len(KINDS) + 1, rng)

    def test_zero_length_rejected(self):
        with pytest.raises(InvalidConfigError):
            compose_chain(checker(), 0, np.random.default_rng(0))

    def test_deterministic_under_seed(self):
        img = checker(150, 110)
        out1, chain1 = compose_chain(img, 3, np.random.default_rng(42))
        out2, chain2 = compose_chain(img, 3, np.random.default_rng(42))
        assert np.array_equal(out1, out2)
        assert chain1.to_dict() == chain2.to_dict()

    def test_json_round_trip(self):
        rng = np.random.default_rng(10)
        _, chain = compose_chain(checker(), 3, rng)
        restored = TransformChain.from_json(chain.to_json())
        assert restored.to_dict() == chain.to_dict()
        assert np.allclose(restored.homography, chain.homography)
        payload = json.loads(chain.to_json())
        assert list(payload) == sorted(payload)

    def test_singular_homography_rejected(self):
        with pytest.raises(InvalidInputError):
            TransformChain(specs=[], homography=np.zeros((3, 3)))


class TestKeypoints:
    def test_propagation_matches_delta_warp(self):
        # oracle: warp a dot image with the chain and compare argmax against
        # the propagated keypoint
        rng = np.random.default_rng(12)
        photometric = tuple(k for k in KINDS if k not in GEOMETRIC_KINDS)
        for _ in range(10):
            img = dot_image(221, 181, x=110, y=90)
            out, chain = compose_chain(img, 3, rng, exclude=photometric)
            kps = propagate_keypoints([Keypoint(110, 90, 1.0)], chain, (out.shape[1], out.shape[0]), 32)
            if not kps:
                continue
            bx, by = brightest(out)
            assert abs(bx - kps[0].x) <= 1.0 and abs(by - kps[0].y) <= 1.0

    def test_border_keypoint_dropped(self):
        img = checker(200, 200)
        chain = TransformChain(specs=[], homography=identity_matrix())
        kept = propagate_keypoints([Keypoint(2, 100, 1.0), Keypoint(100, 100, 1.0)], chain, (200, 200), 64)
        assert [(k.x, k.y) for k in kept] == [(100, 100)]

    def test_order_preserved(self):
        chain = TransformChain(specs=[], homography=identity_matrix())
        kps = [Keypoint(x, 100, float(-x)) for x in (100, 80, 120)]
        kept = propagate_keypoints(kps, chain, (200, 200), 64)
        assert [k.x for k in kept] == [100, 80, 120]

    def test_extract_patch_contents(self):
        img = np.arange(100 * 100 * 3, dtype=np.uint8).reshape(100, 100, 3)
        patch = extract_patch(img, 50, 40, 16)
        assert patch.shape == (16, 16, 3)
        assert np.array_equal(patch, img[32:48, 42:58])

    def test_extract_patch_out_of_bounds(self):
        img = checker(100, 100)
        with pytest.raises(InvalidInputError):
            extract_patch(img, 5, 50, 64)

    def test_extract_patch_rounds_center(self):
        img = np.arange(100 * 100 * 3, dtype=np.uint8).reshape(100, 100, 3)
        assert np.array_equal(extract_patch(img, 49.6, 40.2, 16), extract_patch(img, 50, 40, 16))
