import logging
from itertools import product
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter, generate_binary_structure, label

from voxcascade.config.settings import (DEFAULT_CANNY_HIGH, DEFAULT_CANNY_LOW,
                                        DEFAULT_CANNY_SIGMA, DIRECTION_SNAP,
                                        EDGE_CEILING, GAUSSIAN_TRUNCATE,
                                        LABEL_TRANSFORMS, LABEL_VALUE,
                                        MAGNITUDE_RESOLUTION)
from voxcascade.exceptions import GeometryError
from voxcascade.logic.scale_plan import ScalePlan
from voxcascade.logic.volume import (Volume3, embed_in_working_shape,
                                     resample_nearest, resample_trilinear)

logger = logging.getLogger(__name__)

# Only one of every pair of opposite directions: the first nonzero component is positive.
DIRECTIONS = [d for d in product((-1, 0, 1), repeat=3) if d != (0, 0, 0) and next(c for c in d if c) > 0]
# Full 26-connectivity for the hysteresis components.
CONNECTIVITY_MASK = generate_binary_structure(3, 3)


class Sketch(Volume3):
    """
    Conditioning volume: 0 off edges, edge voxels weighted in (0, EDGE_CEILING] by their
    gradient magnitude, and label voxels exactly LABEL_VALUE.
    """


def gradient3d(v: Volume3, sigma: float = DEFAULT_CANNY_SIGMA) -> Tuple[Volume3, Volume3, Volume3, Volume3]:
    """
    Gaussian-smoothed central-difference gradient.

    :param v: input volume.
    :param sigma: smoothing standard deviation in voxels, 0 for none; kernels are
        truncated at GAUSSIAN_TRUNCATE sigmas and borders replicate the edge voxels.
    :return: gx, gy, gz and the gradient magnitude, as volumes on v's grid.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    voxels = v.voxels.astype(np.float64)
    if sigma > 0:
        voxels = gaussian_filter(voxels, sigma, mode="nearest", truncate=GAUSSIAN_TRUNCATE)
    gz, gy, gx = np.gradient(voxels)
    magnitude = np.sqrt(gx * gx + gy * gy + gz * gz)
    return tuple(Volume3(g, v.spacing) for g in (gx, gy, gz, magnitude))


def _snap_directions(gz: np.ndarray, gy: np.ndarray, gx: np.ndarray) -> np.ndarray:
    """
    Index into DIRECTIONS of the 26-neighbourhood direction closest to each gradient, or -1.
    """
    components = np.stack([gz, gy, gx])
    size = np.abs(components)
    steps = np.where(size >= DIRECTION_SNAP * size.max(axis=0), np.sign(components), 0).astype(int)
    # make the first nonzero step positive, so d and -d share one entry
    first = np.zeros(gz.shape, dtype=int)
    for axis in (2, 1, 0):
        first = np.where(steps[axis] != 0, steps[axis], first)
    steps *= np.where(first == 0, 1, first)

    codes = np.full(gz.shape, -1)
    for index, d in enumerate(DIRECTIONS):
        codes[(steps[0] == d[0]) & (steps[1] == d[1]) & (steps[2] == d[2])] = index
    return codes


def _shift(padded: np.ndarray, d: Tuple[int, int, int], shape) -> np.ndarray:
    return padded[tuple(slice(1 + o, 1 + o + n) for o, n in zip(d, shape))]


def non_maximum_suppression(magnitude: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """
    Voxels that are a maximum of the magnitude along their snapped gradient direction.

    Ties go to the voxel further along the direction: strictly larger than the one behind,
    at least as large as the one ahead.
    """
    padded = np.pad(magnitude, 1)
    keep = np.zeros(magnitude.shape, dtype=bool)
    for index, d in enumerate(DIRECTIONS):
        selected = codes == index
        if not selected.any():
            continue
        ahead = _shift(padded, d, magnitude.shape)
        behind = _shift(padded, tuple(-o for o in d), magnitude.shape)
        keep |= selected & (magnitude > behind) & (magnitude >= ahead)
    return keep & (magnitude > 0)


def hysteresis(candidates: np.ndarray, strong: np.ndarray) -> np.ndarray:
    """
    Candidate voxels 26-connected to at least one strong voxel.
    """
    labels, count = label(candidates, structure=CONNECTIVITY_MASK)
    if count == 0:
        return candidates
    seeded = np.unique(labels[strong & candidates])
    return np.isin(labels, seeded[seeded > 0])


def canny3d(v: Volume3, sigma: float = DEFAULT_CANNY_SIGMA, lo_pct: float = DEFAULT_CANNY_LOW,
            hi_pct: float = DEFAULT_CANNY_HIGH) -> Sketch:
    """
    3D Canny edges weighted by gradient magnitude.

    :param v: input volume.
    :param sigma: smoothing before differentiation.
    :param lo_pct: hysteresis low threshold, percentile of the nonzero magnitudes.
    :param hi_pct: hysteresis high threshold, percentile of the nonzero magnitudes.
    :return: a sketch with EDGE_CEILING * magnitude / max magnitude on edge voxels.
    """
    if not 0 < lo_pct < hi_pct < 1:
        raise ValueError(f"Percentiles must satisfy 0 < lo < hi < 1, got {lo_pct}, {hi_pct}")
    gx, gy, gz, magnitude = gradient3d(v, sigma)
    peak = magnitude.voxels.max()
    if peak <= 0:
        logger.warning("Constant volume of shape %s has no edges", v.shape)
        return Sketch(np.zeros(v.shape), v.spacing, degenerate=True)

    # relative magnitudes on a fixed grid, so that rescaling the intensities cannot flip ties
    relative = np.round(magnitude.voxels / peak, int(round(-np.log10(MAGNITUDE_RESOLUTION))))
    codes = _snap_directions(gz.voxels, gy.voxels, gx.voxels)
    maxima = non_maximum_suppression(relative, codes)

    lo, hi = np.quantile(relative[relative > 0], [lo_pct, hi_pct])
    edges = hysteresis(maxima & (relative >= lo), maxima & (relative >= hi))
    return Sketch(np.where(edges, EDGE_CEILING * relative, 0.0), v.spacing)


def _round_half_even(numerator: int, denominator: int) -> int:
    quotient, remainder = divmod(numerator, denominator)
    if 2 * remainder > denominator or (2 * remainder == denominator and quotient % 2):
        return quotient + 1
    return quotient


def transform_mask(mask: Volume3, transform: str = "identity") -> Volume3:
    """
    Label-level augmentation about the mask centroid, resampled nearest-neighbour.

    :param mask: binary label volume.
    :param transform: one of LABEL_TRANSFORMS: identity, mirror-y, scale-0.85, scale-1.15.
    :return: the transformed binary mask on the same grid; voxels mapped outside are dropped.
    """
    if transform not in LABEL_TRANSFORMS:
        raise ValueError(f"Unknown label transform {transform!r}, expected one of {LABEL_TRANSFORMS}")
    inside = mask.voxels > 0.5
    if transform == "identity" or not inside.any():
        return mask.with_voxels(inside.astype(mask.voxels.dtype))

    points = np.argwhere(inside)
    out = np.zeros(mask.shape, dtype=bool)
    if transform == "mirror-y":
        # y -> k - y with k the integer nearest to twice the centroid, computed exactly
        k = _round_half_even(2 * int(points[:, 1].sum()), len(points))
        points[:, 1] = k - points[:, 1]
        valid = (points[:, 1] >= 0) & (points[:, 1] < mask.shape[1])
        out[tuple(points[valid].T)] = True
    else:
        factor = float(transform.split("-")[1])
        centroid = points.mean(axis=0)
        # only the scaled bounding box can be hit
        lo = np.maximum(np.floor(centroid + (points.min(axis=0) - centroid) * factor) - 1, 0).astype(int)
        hi = np.minimum(np.ceil(centroid + (points.max(axis=0) - centroid) * factor) + 2, mask.shape).astype(int)
        grid = np.stack(np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij"), axis=-1)
        source = np.rint(centroid + (grid.reshape(-1, 3) - centroid) / factor).astype(int)
        valid = np.all((source >= 0) & (source < np.array(mask.shape)), axis=1)
        hit = np.zeros(len(source), dtype=bool)
        hit[valid] = inside[tuple(source[valid].T)]
        out[tuple(slice(a, b) for a, b in zip(lo, hi))] = hit.reshape(grid.shape[:3])
    return mask.with_voxels(out.astype(mask.voxels.dtype))


def overlay_labels(s: Sketch, mask: Optional[Volume3], transform: str = "identity") -> Sketch:
    """
    Sets the (transformed) label voxels of a sketch to exactly LABEL_VALUE.

    :param s: edge sketch.
    :param mask: binary label volume on the sketch grid, or None.
    :param transform: label transform applied before overlaying.
    :return: the sketch with labels; unchanged when the mask is empty.
    """
    if mask is None:
        return s
    if mask.shape != s.shape:
        raise GeometryError(f"Mask shape {mask.shape} differs from sketch shape {s.shape}")
    labels = transform_mask(mask, transform).voxels > 0.5
    if not labels.any():
        return s
    voxels = np.array(s.voxels)
    voxels[labels] = LABEL_VALUE
    return Sketch(voxels, s.spacing, s.degenerate)


def build_sketch_pyramid(volume: Volume3, plan: ScalePlan, mask: Volume3 = None, transform: str = "identity",
                         sigma: float = DEFAULT_CANNY_SIGMA, lo_pct: float = DEFAULT_CANNY_LOW,
                         hi_pct: float = DEFAULT_CANNY_HIGH) -> List[Sketch]:
    """
    Sketches for every scale of a plan, each extracted from the volume resampled to that scale.

    :param volume: source volume at the plan's original shape.
    :param plan: scale ladder.
    :param mask: optional label mask at the original shape, overlaid at every scale.
    :param transform: label transform applied to the mask.
    :return: [x_0 at twice lr_side, x_1, ..., x_n at the working shapes].
    """
    if volume.shape != plan.original_shape:
        raise GeometryError(f"Volume shape {volume.shape} differs from the plan's {plan.original_shape}")
    working, _ = embed_in_working_shape(volume, plan.working_shape)
    if mask is not None:
        mask, _ = embed_in_working_shape(transform_mask(mask, transform), plan.working_shape, mode="constant")

    shapes = [plan.lr_sketch_shape] + [plan.working_shape_at(i) for i in range(1, plan.n_scales + 1)]
    pyramid = []
    for shape in shapes:
        sketch = canny3d(resample_trilinear(working, shape), sigma, lo_pct, hi_pct)
        level_mask = None if mask is None else resample_nearest(mask, shape)
        pyramid.append(overlay_labels(sketch, level_mask))
    return pyramid
