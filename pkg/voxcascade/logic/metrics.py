import math
from typing import Dict, Sequence, Tuple

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.special import betainc

from voxcascade.config.settings import (DYNAMIC_RANGE, SSIM_K1, SSIM_K2,
                                        SSIM_WINDOW)
from voxcascade.exceptions import DegenerateInputError, GeometryError
from voxcascade.logic.volume import Box3, Volume3


def _pair(a: Volume3, b: Volume3) -> Tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise GeometryError(f"Cannot compare volumes of shapes {a.shape} and {b.shape}")
    return a.voxels.astype(np.float64), b.voxels.astype(np.float64)


def ssim3d(a: Volume3, b: Volume3, window: int = SSIM_WINDOW, k1: float = SSIM_K1, k2: float = SSIM_K2) -> float:
    """
    Mean structural similarity over every fully interior cubic window.

    :param a: first volume, intensities in [0, 1].
    :param b: second volume, same shape.
    :param window: side of the uniform window.
    :return: mean SSIM, 1.0 for identical volumes.
    """
    x, y = _pair(a, b)
    if min(x.shape) < window:
        raise GeometryError(f"Volume of shape {x.shape} is smaller than the {window}^3 SSIM window")
    c1 = (k1 * DYNAMIC_RANGE) ** 2
    c2 = (k2 * DYNAMIC_RANGE) ** 2

    # window means centered on every voxel; only centers whose window fits are kept
    half = window // 2
    interior = tuple(slice(half, n - (window - 1 - half)) for n in x.shape)

    def local_mean(values):
        return uniform_filter(values, size=window, mode="constant")[interior]

    mu_x, mu_y = local_mean(x), local_mean(y)
    var_x = local_mean(x * x) - mu_x * mu_x
    var_y = local_mean(y * y) - mu_y * mu_y
    cov = local_mean(x * y) - mu_x * mu_y
    ssim = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
    return float(ssim.mean())


def mae(a: Volume3, b: Volume3) -> float:
    x, y = _pair(a, b)
    return float(np.abs(x - y).mean())


def mse(a: Volume3, b: Volume3) -> float:
    x, y = _pair(a, b)
    return float(((x - y) ** 2).mean())


def psnr(a: Volume3, b: Volume3) -> float:
    """
    10 log10(L^2 / MSE) in dB; +inf for identical volumes.
    """
    error = mse(a, b)
    if error == 0:
        return math.inf
    return float(10 * np.log10(DYNAMIC_RANGE ** 2 / error))


def evaluate(a: Volume3, b: Volume3) -> Dict[str, float]:
    """
    The four comparison columns: ssim, mae, mse, psnr.
    """
    return {"ssim": ssim3d(a, b), "mae": mae(a, b), "mse": mse(a, b), "psnr": psnr(a, b)}


def student_t_sf2(t: float, dof: int) -> float:
    """
    Two-sided tail probability of Student's t, through the regularized incomplete beta.
    """
    return float(betainc(dof / 2, 0.5, dof / (dof + t * t)))


def paired_ttest(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    """
    Paired two-sided t-test.

    :param xs: first sample.
    :param ys: paired second sample, same length.
    :return: (t statistic, two-sided p value).
    """
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise GeometryError(f"Paired samples need equal lengths of at least 2, got {xs.shape} and {ys.shape}")
    differences = xs - ys
    spread = differences.std(ddof=1)
    if spread == 0:
        raise DegenerateInputError("All paired differences are identical; the t statistic is undefined")
    dof = len(differences) - 1
    t = differences.mean() / (spread / math.sqrt(len(differences)))
    return float(t), student_t_sf2(t, dof)


def seam_jump_ratio(v: Volume3, paste_boxes: Sequence[Box3]) -> float:
    """
    Mean absolute jump across the faces between paste regions, over the mean jump between
    neighbours inside a region.

    :param v: assembled volume.
    :param paste_boxes: paste regions that tile `v`.
    :return: 1.0 when seams look like any other neighbour pair, larger when they show.
    """
    voxels = v.voxels.astype(np.float64)
    seam_sum = seam_count = interior_sum = interior_count = 0.0
    for axis in range(3):
        # a seam sits between index i - 1 and i whenever some box starts at i > 0
        starts = sorted({box[axis][0] for box in paste_boxes if box[axis][0] > 0})
        jumps = np.abs(np.diff(voxels, axis=axis))
        seam = np.zeros(voxels.shape[axis] - 1, dtype=bool)
        seam[[s - 1 for s in starts]] = True
        shape = [1, 1, 1]
        shape[axis] = -1
        seam = np.broadcast_to(seam.reshape(shape), jumps.shape)
        seam_sum += jumps[seam].sum()
        seam_count += seam.sum()
        interior_sum += jumps[~seam].sum()
        interior_count += (~seam).sum()
    if seam_count == 0 or interior_count == 0 or interior_sum == 0:
        raise DegenerateInputError("No seams or no interior variation to compare")
    return float((seam_sum / seam_count) / (interior_sum / interior_count))
