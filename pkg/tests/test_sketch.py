import numpy as np
import pytest
from scipy.ndimage import generate_binary_structure, label

from tests.conftest import ball
from voxcascade.config.settings import EDGE_CEILING, LABEL_VALUE
from voxcascade.exceptions import GeometryError
from voxcascade.logic.scale_plan import plan_scales
from voxcascade.logic.sketch import (Sketch, build_sketch_pyramid, canny3d,
                                     gradient3d, overlay_labels,
                                     transform_mask)
from voxcascade.logic.volume import Volume3


def gaussian_oracle(voxels, sigma, truncate=3.0):
    radius = int(truncate * sigma + 0.5)
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-offsets ** 2 / (2 * sigma ** 2))
    kernel /= kernel.sum()
    out = voxels
    for axis in range(3):
        padded = np.pad(out, [(radius, radius) if a == axis else (0, 0) for a in range(3)], mode="edge")
        n = out.shape[axis]
        out = sum(w * np.take(padded, np.arange(i, i + n), axis=axis) for i, w in enumerate(kernel))
    return out


def difference_oracle(voxels, axis):
    d = np.empty_like(voxels)
    moved, target = np.moveaxis(voxels, axis, 0), np.moveaxis(d, axis, 0)
    target[1:-1] = (moved[2:] - moved[:-2]) / 2
    target[0] = moved[1] - moved[0]
    target[-1] = moved[-1] - moved[-2]
    return d


class TestGradient:
    def test_ramp_without_smoothing(self):
        nx = 12
        v = Volume3(np.broadcast_to(np.arange(nx) / nx, (6, 7, nx)))
        gx, gy, gz, magnitude = gradient3d(v, sigma=0)
        assert np.allclose(gx.voxels[:, :, 1:-1], 1 / nx)
        assert not gy.voxels.any() and not gz.voxels.any()
        assert np.allclose(magnitude.voxels, np.abs(gx.voxels))

    def test_constant_has_no_gradient(self):
        for g in gradient3d(Volume3(np.full((8, 8, 8), 3.0)), sigma=1):
            assert np.max(np.abs(g.voxels)) < 1e-12

    def test_matches_explicit_gaussian_and_differences(self, random_volume):
        v = random_volume(16, 16, 16)
        smooth = gaussian_oracle(v.voxels, 1.0)
        gz, gy, gx = (difference_oracle(smooth, axis) for axis in range(3))
        out = gradient3d(v, sigma=1.0)
        for got, expected in zip(out, (gx, gy, gz, np.sqrt(gx ** 2 + gy ** 2 + gz ** 2))):
            assert np.max(np.abs(got.voxels - expected)) < 1e-6

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            gradient3d(Volume3(np.zeros((4, 4, 4))), sigma=-1)


class TestCanny:
    def test_sphere_edges_lie_on_its_surface(self):
        inside, distance = ball((48, 48, 48), (24, 24, 24), 10)
        sketch = canny3d(Volume3(inside.astype(np.float64)), sigma=1.0)
        edges = sketch.voxels > 0
        assert edges.any()
        near = np.abs(distance[edges] - 10) <= 1.0
        assert near.mean() >= 0.95

    def test_edge_weights_stay_below_the_label_band(self):
        inside, _ = ball((32, 32, 32), (16, 16, 16), 8)
        sketch = canny3d(Volume3(inside.astype(np.float64)))
        assert isinstance(sketch, Sketch)
        assert sketch.voxels.min() >= 0
        assert sketch.voxels.max() <= EDGE_CEILING + 1e-12
        assert sketch.voxels.max() > 0

    def test_constant_volume_is_degenerate(self):
        sketch = canny3d(Volume3(np.full((16, 16, 16), 0.4)))
        assert sketch.degenerate
        assert not sketch.voxels.any()

    def test_nested_spheres_give_two_shells(self):
        outer, _ = ball((48, 48, 48), (24, 24, 24), 16)
        inner, _ = ball((48, 48, 48), (24, 24, 24), 7)
        v = Volume3(0.5 * outer + 0.5 * inner)
        edges = canny3d(v, sigma=1.0).voxels > 0
        _, count = label(edges, structure=generate_binary_structure(3, 3))
        assert count == 2

    def test_edge_set_ignores_affine_intensity_changes(self):
        inside, _ = ball((32, 32, 32), (15.5, 16, 16.5), 9)
        v = Volume3(inside.astype(np.float64))
        a = canny3d(v).voxels > 0
        b = canny3d(Volume3(2.5 * v.voxels + 3.0)).voxels > 0
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("lo, hi", [(0.9, 0.7), (0.0, 0.5), (0.5, 1.0)])
    def test_bad_percentiles(self, lo, hi):
        with pytest.raises(ValueError):
            canny3d(Volume3(np.zeros((4, 4, 4))), lo_pct=lo, hi_pct=hi)


class TestLabels:
    @pytest.fixture
    def sketch(self, rng):
        voxels = np.where(rng.random((24, 24, 24)) < 0.1, 0.5, 0.0)
        return Sketch(voxels)

    def test_empty_mask_leaves_the_sketch(self, sketch):
        out = overlay_labels(sketch, Volume3(np.zeros(sketch.shape)))
        assert np.array_equal(out.voxels, sketch.voxels)
        assert overlay_labels(sketch, None) is sketch

    def test_overlay_only_touches_label_voxels(self, sketch, ball_mask):
        mask = ball_mask(sketch.shape, (12, 12, 12), 4)
        out = overlay_labels(sketch, mask).voxels
        inside = mask.voxels > 0.5
        assert np.all(out[inside] == LABEL_VALUE)
        assert np.array_equal(out[~inside], sketch.voxels[~inside])

    def test_mask_shape_must_match(self, sketch):
        with pytest.raises(GeometryError):
            overlay_labels(sketch, Volume3(np.ones((4, 4, 4))))

    def test_mirror_twice_is_the_identity(self):
        voxels = np.zeros((24, 24, 24), dtype=np.float32)
        voxels[8:12, 5:9, 10:13] = 1
        voxels[9, 9:14, 11] = 1
        mask = Volume3(voxels)
        once = transform_mask(mask, "mirror-y")
        assert not np.array_equal(once.voxels, voxels)
        assert once.voxels.sum() == voxels.sum()
        assert np.array_equal(transform_mask(once, "mirror-y").voxels, voxels)

    @pytest.mark.parametrize("transform, factor", [("scale-1.15", 1.15), ("scale-0.85", 0.85)])
    def test_scaling_changes_the_volume_by_the_cube(self, ball_mask, transform, factor):
        mask = ball_mask((40, 40, 40), (20, 20, 20), 8)
        scaled = transform_mask(mask, transform).voxels.sum()
        assert scaled == pytest.approx(factor ** 3 * mask.voxels.sum(), rel=0.10)

    def test_unknown_transform(self, ball_mask):
        with pytest.raises(ValueError):
            transform_mask(ball_mask((8, 8, 8), (4, 4, 4), 2), "rotate-90")


def test_pyramid_follows_the_plan(ball_mask):
    inside, _ = ball((40, 40, 40), (20, 20, 20), 12)
    volume = Volume3(inside.astype(np.float64))
    plan = plan_scales(volume.shape, lr_side=16, patch_side=8)
    mask = ball_mask(volume.shape, (20, 20, 20), 3)
    pyramid = build_sketch_pyramid(volume, plan, mask)
    assert [s.shape for s in pyramid] == [(32, 32, 32), (32, 32, 32), (64, 64, 64)]
    for sketch in pyramid:
        assert (sketch.voxels == LABEL_VALUE).any()
        assert sketch.voxels.max() <= LABEL_VALUE


def test_pyramid_checks_the_volume_shape(random_volume):
    with pytest.raises(GeometryError):
        build_sketch_pyramid(random_volume(8, 8, 8), plan_scales((16, 16, 16), 8, 4))
