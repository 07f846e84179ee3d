import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from voxcascade.config.settings import (DEFAULT_LR_SIDE, DEFAULT_PATCH_SIDE,
                                        DEFAULT_VALID_MARGIN)
from voxcascade.exceptions import CoverageError, GeometryError
from voxcascade.logic.volume import (Box3, Shape3, Volume3, axis_coordinates,
                                     interpolate_axis)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScalePlan:
    """
    The resolution ladder: scale i works on an isotropic cube of side lr_side * 2**i, and
    the last one is cropped back to the original shape.
    """
    original_shape: Shape3
    lr_side: int
    patch_side: int
    n_scales: int

    def working_side_at(self, scale: int) -> int:
        if not 0 <= scale <= self.n_scales:
            raise GeometryError(f"Scale {scale} is outside the plan's 0..{self.n_scales}")
        return self.lr_side * 2 ** scale

    def working_shape_at(self, scale: int) -> Shape3:
        side = self.working_side_at(scale)
        return side, side, side

    @property
    def working_shape(self) -> Shape3:
        return self.working_shape_at(self.n_scales)

    @property
    def lr_sketch_shape(self) -> Shape3:
        return 2 * self.lr_side, 2 * self.lr_side, 2 * self.lr_side

    @property
    def crop_window(self) -> Box3:
        """
        Where the original volume sits inside the final working cube (centered).
        """
        return tuple(((w - n) // 2, (w - n) // 2 + n) for w, n in zip(self.working_shape, self.original_shape))


@dataclass(frozen=True)
class PatchJob:
    """
    One patch of one HR scale.

    out_region is generated at scale i from in_region of scale i - 1, whose center doubled
    is out_region's center. Only paste_region is written to the assembled volume;
    padding records how far in_region sticks out of the scale i - 1 cube, per axis (low, high),
    filled by edge replication.
    """
    scale: int
    out_region: Box3
    in_region: Box3
    paste_region: Box3
    valid_margin: int
    padding: Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]]


def plan_scales(original_shape: Sequence[int], lr_side: int = DEFAULT_LR_SIDE,
                patch_side: int = DEFAULT_PATCH_SIDE) -> ScalePlan:
    """
    Builds the scale ladder for a volume.

    :param original_shape: (nz, ny, nx) of the volume to generate.
    :param lr_side: side of the scale 0 image.
    :param patch_side: side of the patches generated above scale 0.
    :return: a plan with the fewest doublings whose working cube holds the original.
    """
    original_shape = tuple(int(n) for n in original_shape)
    if len(original_shape) != 3 or min(original_shape) <= 0:
        raise GeometryError(f"Original shape must hold three positive counts, got {original_shape}")
    if lr_side <= 0 or patch_side <= 0:
        raise GeometryError(f"lr_side and patch_side must be positive, got {lr_side}, {patch_side}")
    # patch_side / 4 is the offset between a patch and its input region one scale down
    if patch_side % 4:
        raise GeometryError(f"patch_side must be a multiple of 4, got {patch_side}")
    if patch_side >= lr_side:
        raise GeometryError(f"patch_side {patch_side} must be smaller than lr_side {lr_side}")

    n_scales = 0
    while lr_side * 2 ** n_scales < max(original_shape):
        n_scales += 1
    return ScalePlan(original_shape, lr_side, patch_side, n_scales)


def _axis_jobs(side: int, patch_side: int, margin: int) -> List[Tuple[int, int, int]]:
    """
    (start, paste_lo, paste_hi) of every patch along one axis.

    Patches advance by patch_side - 2 * margin and the last one is shifted inward to end
    at the border; where two valid regions overlap the later patch owns the overlap.
    """
    stride = patch_side - 2 * margin
    count = -(-(side - 2 * margin) // stride)
    starts = [min(k * stride, side - patch_side) for k in range(count)]
    lows = [0] + [s + margin for s in starts[1:]]
    highs = lows[1:] + [side]
    return list(zip(starts, lows, highs))


def patch_job(plan: ScalePlan, scale_i: int, start: Sequence[int], paste_region: Box3 = None,
              valid_margin: int = 0) -> PatchJob:
    """
    The job generating the patch whose out_region starts at `start` on scale i.

    :param start: (z, y, x) corner, even on every axis.
    :param paste_region: defaults to the whole out_region.
    """
    prev_side = plan.working_side_at(scale_i - 1)
    quarter = plan.patch_side // 4
    out_region = tuple((s, s + plan.patch_side) for s in start)
    in_region = tuple((s // 2 - quarter, s // 2 - quarter + plan.patch_side) for s in start)
    padding = tuple((max(0, -lo), max(0, hi - prev_side)) for lo, hi in in_region)
    return PatchJob(scale_i, out_region, in_region, paste_region or out_region, valid_margin, padding)


def patch_grid(plan: ScalePlan, scale_i: int, valid_margin: int = DEFAULT_VALID_MARGIN) -> List[PatchJob]:
    """
    Patch jobs whose paste regions tile the scale-i working cube exactly once.

    :param plan: scale ladder.
    :param scale_i: HR scale, 1..n_scales.
    :param valid_margin: border of each generated patch that is not pasted.
    :return: jobs in z, y, x order.
    """
    if not 1 <= scale_i <= plan.n_scales:
        raise GeometryError(f"Patch jobs exist for scales 1..{plan.n_scales}, got {scale_i}")
    if not 0 <= 2 * valid_margin < plan.patch_side:
        raise GeometryError(f"valid_margin {valid_margin} leaves an empty paste region "
                            f"in a patch of side {plan.patch_side}")

    axis = _axis_jobs(plan.working_side_at(scale_i), plan.patch_side, valid_margin)
    jobs = [patch_job(plan, scale_i, (z[0], y[0], x[0]), ((z[1], z[2]), (y[1], y[2]), (x[1], x[2])), valid_margin)
            for z in axis for y in axis for x in axis]
    logger.debug("Scale %d: %d jobs of side %d, margin %d", scale_i, len(jobs), plan.patch_side, valid_margin)
    return jobs


def extract_patch(v, region: Box3) -> np.ndarray:
    """
    Copies a box out of a volume; coordinates outside it take the nearest edge voxel.

    :param v: Volume3 or 3D array.
    :param region: box to copy, may stick out of the volume.
    :return: array of the box's shape.
    """
    voxels = v.voxels if isinstance(v, Volume3) else np.asarray(v)
    index = np.ix_(*[np.clip(np.arange(lo, hi), 0, n - 1) for (lo, hi), n in zip(region, voxels.shape)])
    return voxels[index]


def upsample_patch(prev_patch: np.ndarray, job: PatchJob, prev_shape: Sequence[int],
                   out_shape: Sequence[int]) -> np.ndarray:
    """
    Trilinear upsampling of an extracted in_region onto the job's out_region.

    The sampling coordinates are the ones resample_trilinear uses for the whole cube, shifted
    to the patch, so every patch agrees voxel for voxel with the global upsampling.
    """
    patch = prev_patch
    for axis, ((out_lo, out_hi), (in_lo, _), n_prev, n_out) in enumerate(
            zip(job.out_region, job.in_region, prev_shape, out_shape)):
        coords = axis_coordinates(n_prev, n_out)[out_lo:out_hi]
        patch = interpolate_axis(patch, axis, coords, n_prev, origin=in_lo)
    return patch


def _local(box: Box3, origin: Box3) -> Tuple[slice, ...]:
    return tuple(slice(lo - o, hi - o) for (lo, hi), (o, _) in zip(box, origin))


def _global(box: Box3) -> Tuple[slice, ...]:
    return tuple(slice(lo, hi) for lo, hi in box)


class Assembler:
    """
    Write-once reassembly of one scale: every voxel must be pasted by exactly one job.
    """
    def __init__(self, shape: Sequence[int], dtype=np.float32, spacing: Sequence[float] = (1.0, 1.0, 1.0)):
        self.shape = tuple(shape)
        self.spacing = tuple(spacing)
        self.voxels = np.zeros(self.shape, dtype=dtype)
        self.covered = np.zeros(self.shape, dtype=bool)

    def paste(self, job: PatchJob, patch: np.ndarray) -> None:
        side = [hi - lo for lo, hi in job.out_region]
        if list(patch.shape) != side:
            raise GeometryError(f"Patch of shape {patch.shape} for an out_region of shape {tuple(side)}")
        target = _global(job.paste_region)
        if self.covered[target].any():
            raise GeometryError(f"Paste region {job.paste_region} overlaps an already pasted region")
        self.voxels[target] = patch[_local(job.paste_region, job.out_region)]
        self.covered[target] = True

    def finish(self) -> Volume3:
        if not self.covered.all():
            missing = np.argwhere(~self.covered)
            box = tuple((int(lo), int(hi) + 1) for lo, hi in zip(missing.min(axis=0), missing.max(axis=0)))
            raise CoverageError(box)
        return Volume3(self.voxels, self.spacing)


def assemble(jobs: Iterable[Tuple[PatchJob, np.ndarray]], shape: Sequence[int], dtype=np.float32,
             spacing: Sequence[float] = (1.0, 1.0, 1.0)) -> Volume3:
    """
    Batch form of Assembler.

    :param jobs: (job, generated out_region patch) pairs.
    :param shape: working shape of the scale.
    :return: the assembled volume.
    """
    assembler = Assembler(shape, dtype, spacing)
    for job, patch in jobs:
        assembler.paste(job, patch)
    return assembler.finish()


def plan_to_json(plan: ScalePlan, valid_margin: int = DEFAULT_VALID_MARGIN, with_jobs: bool = True) -> Dict[str, Any]:
    """
    JSON-ready description of a plan and, optionally, every patch job of every HR scale.
    """
    description = {
        "original_shape": list(plan.original_shape),
        "lr_side": plan.lr_side,
        "patch_side": plan.patch_side,
        "n_scales": plan.n_scales,
        "lr_sketch_shape": list(plan.lr_sketch_shape),
        "working_shapes": [list(plan.working_shape_at(i)) for i in range(plan.n_scales + 1)],
        "crop_window": [list(axis) for axis in plan.crop_window],
        "valid_margin": valid_margin,
        "scales": []
    }
    for scale in range(1, plan.n_scales + 1):
        jobs = patch_grid(plan, scale, valid_margin)
        entry = {"scale": scale, "job_count": len(jobs)}
        if with_jobs:
            entry["jobs"] = [{
                "out_region": [list(a) for a in job.out_region],
                "in_region": [list(a) for a in job.in_region],
                "paste_region": [list(a) for a in job.paste_region],
                "padding": [list(a) for a in job.padding],
            } for job in jobs]
        description["scales"].append(entry)
    return description
