import logging
from multiprocessing.pool import ThreadPool
from typing import List, Sequence

import numpy as np

from voxcascade.base_classes.base_network import BaseNetwork, get_network
from voxcascade.config.settings import DEFAULT_VALID_MARGIN
from voxcascade.exceptions import CheckpointMismatchError, GeometryError
from voxcascade.logic.memory_tracker import workspace
from voxcascade.logic.scale_plan import (Assembler, PatchJob, ScalePlan,
                                         extract_patch, patch_grid,
                                         upsample_patch)
from voxcascade.logic.volume import Volume3, crop, resample_trilinear
from voxcascade.nn.checkpoint import Checkpoint
from voxcascade.nn.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


def identity_checkpoints(plan: ScalePlan) -> List[Checkpoint]:
    """
    Parameter-free checkpoints for every scale: the cascade then reduces to trilinear upsampling.
    """
    identity = get_network("identity")
    return [Checkpoint(i, 0, {"generator": identity(scale=i)}) for i in range(plan.n_scales + 1)]


def _check_inputs(sketch_pyramid: Sequence[Volume3], checkpoints: Sequence[Checkpoint], plan: ScalePlan) -> None:
    if len(checkpoints) != plan.n_scales + 1:
        raise CheckpointMismatchError(f"The plan has {plan.n_scales + 1} scales, got {len(checkpoints)} checkpoints")
    for i, checkpoint in enumerate(checkpoints):
        if checkpoint.scale != i:
            raise CheckpointMismatchError(f"Checkpoint {i} was trained for scale {checkpoint.scale}")
        generator = checkpoint.generator
        if generator.in_channels != (1 if i == 0 else 2):
            raise CheckpointMismatchError(f"Generator of family {generator.family} does not fit scale {i}")
        expected = {"lr_side": plan.lr_side} if i == 0 else {"patch_side": plan.patch_side}
        for key, value in expected.items():
            if generator.config.get(key, value) != value:
                raise CheckpointMismatchError(f"Scale {i} generator has {key} {generator.config[key]}, "
                                              f"the plan needs {value}")
    shapes = [plan.lr_sketch_shape] + [plan.working_shape_at(i) for i in range(1, plan.n_scales + 1)]
    if len(sketch_pyramid) != len(shapes):
        raise GeometryError(f"The plan needs {len(shapes)} sketches, got {len(sketch_pyramid)}")
    for i, (sketch, shape) in enumerate(zip(sketch_pyramid, shapes)):
        if sketch.shape != shape:
            raise GeometryError(f"Sketch {i} has shape {sketch.shape}, the plan needs {shape}")


def generate_lr(sketch: Volume3, generator: BaseNetwork) -> Volume3:
    """
    y_0: the whole low-resolution volume from the 2x sketch.
    """
    generator.eval()
    with no_grad():
        x = Tensor(np.asarray(sketch.voxels, dtype=generator.dtype)[None, None])
        return Volume3(np.array(generator(x).data[0, 0], dtype=np.float32))


def generate_patch(job: PatchJob, sketch: Volume3, prev: Volume3, generator: BaseNetwork,
                   out_shape: Sequence[int], use_edges: bool = True, use_prev_scale: bool = True) -> np.ndarray:
    """
    Runs one patch job: sketch patch and upsampled previous-scale patch in, out_region patch out.
    """
    sketch_patch = extract_patch(sketch, job.out_region) * float(use_edges)
    prev_patch = upsample_patch(extract_patch(prev, job.in_region), job, prev.shape, out_shape)
    x = np.stack([sketch_patch, prev_patch * float(use_prev_scale)])[None].astype(generator.dtype)
    return generator(Tensor(x)).data[0, 0]


def infer_scale(scale_i: int, sketch: Volume3, prev: Volume3, generator: BaseNetwork, plan: ScalePlan,
                valid_margin: int = DEFAULT_VALID_MARGIN, use_edges: bool = True, use_prev_scale: bool = True,
                threads: int = 1) -> Volume3:
    """
    y_i assembled from the patch jobs of scale i.

    Patches are generated inside the "patch" memory workspace; with threads > 1 they are
    generated concurrently but pasted in job order.
    """
    jobs = patch_grid(plan, scale_i, valid_margin)
    out_shape = plan.working_shape_at(scale_i)
    logger.info("Scale %d: %d patch jobs, margin %d", scale_i, len(jobs), valid_margin)
    generator.eval()
    assembler = Assembler(out_shape)

    def run(job):
        return generate_patch(job, sketch, prev, generator, out_shape, use_edges, use_prev_scale)

    with no_grad(), workspace("patch"):
        if threads <= 1:
            for job in jobs:
                assembler.paste(job, run(job))
        else:
            with ThreadPool(threads) as pool:
                for job, patch in zip(jobs, pool.imap(run, jobs)):
                    assembler.paste(job, patch)
    return assembler.finish()


def infer_cascade(sketch_pyramid: Sequence[Volume3], checkpoints: Sequence[Checkpoint], plan: ScalePlan,
                  valid_margin: int = DEFAULT_VALID_MARGIN, use_edges: bool = True, use_prev_scale: bool = True,
                  threads: int = 1) -> List[Volume3]:
    """
    Generates the whole image at low resolution, then refines it scale by scale with patches.

    :param sketch_pyramid: [x_0 at twice lr_side, x_1, ..., x_n].
    :param checkpoints: one per scale, in scale order.
    :param plan: scale ladder.
    :param valid_margin: border of every generated patch that is not pasted.
    :param use_edges: feed the sketch channel to the HR generators.
    :param use_prev_scale: feed the previous-scale channel to the HR generators.
    :param threads: patch jobs generated concurrently.
    :return: [y_0, ..., y_n], the last one cropped to the original shape.
    """
    _check_inputs(sketch_pyramid, checkpoints, plan)
    outputs = [generate_lr(sketch_pyramid[0], checkpoints[0].generator)]
    logger.info("Scale 0: %s volume generated", "x".join(map(str, outputs[0].shape)))
    for i in range(1, plan.n_scales + 1):
        outputs.append(infer_scale(i, sketch_pyramid[i], outputs[-1], checkpoints[i].generator, plan,
                                   valid_margin, use_edges, use_prev_scale, threads))
    outputs[-1] = crop(outputs[-1], plan.crop_window)
    return outputs


def infer_lr_only(sketch_pyramid: Sequence[Volume3], checkpoint: Checkpoint, plan: ScalePlan) -> Volume3:
    """
    Baseline without HR scales: y_0 trilinearly rescaled to the final working shape and cropped.
    """
    if checkpoint.scale != 0:
        raise CheckpointMismatchError(f"The LR baseline needs the scale 0 checkpoint, got scale {checkpoint.scale}")
    y0 = generate_lr(sketch_pyramid[0], checkpoint.generator)
    return crop(resample_trilinear(y0, plan.working_shape), plan.crop_window)


def infer_patchwise(sketch_pyramid: Sequence[Volume3], checkpoints: Sequence[Checkpoint], plan: ScalePlan,
                    threads: int = 1) -> List[Volume3]:
    """
    Straight-forward patch-wise baseline: independent patches, no previous-scale input and
    no margin, so neighbouring patches never see each other.
    """
    return infer_cascade(sketch_pyramid, checkpoints, plan, valid_margin=0, use_prev_scale=False, threads=threads)
