import csv
import logging
import multiprocessing
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from voxcascade.base_classes.base_network import BaseNetwork, get_network
from voxcascade.config.settings import (ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
                                        ADAM_LR, BLUR_PROBABILITY,
                                        BLUR_SIGMA_RANGE, CHECKPOINT_NAME,
                                        DEFAULT_EPOCHS,
                                        DEFAULT_PATCHES_PER_VOLUME,
                                        EPOCH_CHECKPOINT_NAME,
                                        GAUSSIAN_TRUNCATE, HALVE_PROBABILITY,
                                        LABEL_PATCH_SHARE, LABEL_TRANSFORMS,
                                        LAMBDA_L1, LOSS_COLUMNS,
                                        LOSS_LOG_NAME, NOISE_STD)
from voxcascade.exceptions import TrainingError
from voxcascade.logic.losses import discriminator_loss, generator_loss
from voxcascade.logic.scale_plan import (ScalePlan, extract_patch, patch_job,
                                         upsample_patch)
from voxcascade.logic.sketch import (Sketch, build_sketch_pyramid,
                                     transform_mask)
from voxcascade.logic.volume import (Volume3, embed_in_working_shape,
                                     resample_nearest, resample_trilinear)
from voxcascade.nn.checkpoint import Checkpoint, save_checkpoint
from voxcascade.nn.functional import concat
from voxcascade.nn.optim import Adam
from voxcascade.nn.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """
    Everything one scale's training run depends on. Equal configs give bit-identical runs.
    """
    scale: int = 0
    epochs: int = DEFAULT_EPOCHS
    patches_per_volume: int = DEFAULT_PATCHES_PER_VOLUME
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    lambda_l1: float = LAMBDA_L1
    blur_probability: float = BLUR_PROBABILITY
    halve_probability: float = HALVE_PROBABILITY
    noise_std: float = NOISE_STD
    blur_sigma_range: Tuple[float, float] = BLUR_SIGMA_RANGE
    label_patch_share: float = LABEL_PATCH_SHARE
    seed: int = 0
    use_edges: bool = True
    use_prev_scale: bool = True
    dtype: str = "float32"
    # keyword overrides for the networks built for the scale (widths, depth, ...)
    generator: Dict[str, Any] = field(default_factory=dict)
    discriminator: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("blur_probability", "halve_probability", "label_patch_share"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must not be negative, got {self.noise_std}")
        if self.epochs < 1 or self.patches_per_volume < 1:
            raise ValueError(f"epochs and patches_per_volume must be positive, got {self.epochs}, "
                             f"{self.patches_per_volume}")


@dataclass(frozen=True)
class TrainingSample:
    """
    One training volume, precomputed for every scale of a plan.
    """
    sketches: Tuple[Sketch, ...]
    images: Tuple[Volume3, ...]
    # (N, 3) voxel coordinates of the label mask on each scale's grid, empty without a mask
    labels: Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class Augmentation:
    blur: bool
    sigma: float
    halve: bool


def prepare_sample(volume: Volume3, plan: ScalePlan, mask: Volume3 = None,
                   transform: str = "identity") -> TrainingSample:
    """
    Sketch pyramid, real image and label coordinates of a volume on every scale.

    :param volume: training volume at the plan's original shape.
    :param mask: optional lesion mask, same shape.
    :param transform: label transform used for label augmentation.
    """
    working, _ = embed_in_working_shape(volume, plan.working_shape)
    shapes = [plan.working_shape_at(i) for i in range(plan.n_scales + 1)]
    images = tuple(resample_trilinear(working, shape) for shape in shapes)
    sketches = tuple(build_sketch_pyramid(volume, plan, mask, transform))
    if mask is None:
        labels = tuple(np.zeros((0, 3), dtype=np.int64) for _ in shapes)
    else:
        embedded, _ = embed_in_working_shape(transform_mask(mask, transform), plan.working_shape, mode="constant")
        labels = tuple(np.argwhere(resample_nearest(embedded, shape).voxels > 0.5) for shape in shapes)
    return TrainingSample(sketches, images, labels)


def balance_dataset(dataset: Sequence[Tuple[Volume3, Optional[Volume3]]],
                    transforms: Sequence[str] = LABEL_TRANSFORMS[1:]) -> List[Tuple[Volume3, Volume3, str]]:
    """
    Label augmentation: every volume with a non-empty mask is repeated once per transform,
    its lesion label moved accordingly.

    :return: (volume, mask, transform) triples, the untransformed ones first.
    """
    balanced = [(volume, mask, "identity") for volume, mask in dataset]
    for volume, mask in dataset:
        if mask is not None and mask.voxels.any():
            balanced.extend((volume, mask, transform) for transform in transforms)
    logger.info("Label augmentation: %d volumes balanced to %d samples", len(dataset), len(balanced))
    return balanced


def draw_augmentations(cfg: TrainConfig, rng: np.random.Generator) -> Augmentation:
    """
    Draws which augmentations a patch gets; blur and resolution halving are independent.
    """
    blur = rng.random() < cfg.blur_probability
    sigma = rng.uniform(*cfg.blur_sigma_range)
    halve = rng.random() < cfg.halve_probability
    return Augmentation(bool(blur), float(sigma), bool(halve))


def _halve(patch: np.ndarray) -> np.ndarray:
    nz, ny, nx = (n // 2 for n in patch.shape)
    coarse = patch.reshape(nz, 2, ny, 2, nx, 2).mean(axis=(1, 3, 5))
    return coarse.repeat(2, 0).repeat(2, 1).repeat(2, 2).astype(patch.dtype)


def augment_patch(prev_patch: np.ndarray, sketch_patch: np.ndarray, cfg: TrainConfig,
                  rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Simulates lower-scale generation errors on inputs taken from real volumes.

    Both patches get clamped additive Gaussian noise; the previous-scale patch is then
    blurred and/or reduced to half resolution according to the drawn augmentations.

    :param prev_patch: previous-scale patch, even side.
    :param sketch_patch: sketch patch of the same shape.
    :return: (prev', sketch').
    """
    if prev_patch.shape != sketch_patch.shape:
        raise ValueError(f"Patches of shapes {prev_patch.shape} and {sketch_patch.shape} cannot be augmented together")
    augmentation = draw_augmentations(cfg, rng)
    prev, sketch = np.array(prev_patch), np.array(sketch_patch)
    if cfg.noise_std > 0:
        prev = np.clip(prev + rng.normal(0, cfg.noise_std, prev.shape), 0, 1).astype(prev_patch.dtype)
        sketch = np.clip(sketch + rng.normal(0, cfg.noise_std, sketch.shape), 0, 1).astype(sketch_patch.dtype)
    if augmentation.blur:
        prev = gaussian_filter(prev, augmentation.sigma, mode="nearest", truncate=GAUSSIAN_TRUNCATE)
    if augmentation.halve:
        prev = _halve(prev)
    return prev, sketch


def build_scale_networks(plan: ScalePlan, scale_i: int, cfg: TrainConfig) -> Tuple[BaseNetwork, BaseNetwork]:
    """
    Freshly initialized (generator, discriminator) of one scale.
    """
    common = dict(dtype=cfg.dtype)
    if scale_i == 0:
        generator = get_network("lr_unet")(lr_side=plan.lr_side, seed=cfg.seed, **common, **cfg.generator)
        discriminator = get_network("discriminator")(in_channels=2, seed=cfg.seed + 1, **common, **cfg.discriminator)
    else:
        generator = get_network("hr_resnet")(patch_side=plan.patch_side, seed=cfg.seed + 2 * scale_i, **common,
                                             **cfg.generator)
        discriminator = get_network("discriminator")(in_channels=3, seed=cfg.seed + 2 * scale_i + 1, **common,
                                                     **cfg.discriminator)
    return generator, discriminator


def _sample_start(side: int, patch_side: int, labels: np.ndarray, forced: bool,
                  rng: np.random.Generator) -> Tuple[int, ...]:
    # starts are even so the patch maps onto whole voxels one scale down
    if forced and len(labels):
        center = labels[rng.integers(len(labels))]
        return tuple(int(min(max(c - patch_side // 2, 0), side - patch_side)) // 2 * 2 for c in center)
    return tuple(int(s) * 2 for s in rng.integers(0, (side - patch_side) // 2 + 1, 3))


def _downsample_sketch(sketch: np.ndarray) -> np.ndarray:
    nz, ny, nx = (n // 2 for n in sketch.shape)
    return sketch.reshape(nz, 2, ny, 2, nx, 2).mean(axis=(1, 3, 5))


def training_pairs(sample: TrainingSample, plan: ScalePlan, scale_i: int, cfg: TrainConfig,
                   rng: np.random.Generator):
    """
    Yields (generator input, discriminator condition, real) arrays, each (1, C, z, y, x).

    Scale 0 gives one whole-image pair. Higher scales give cfg.patches_per_volume random
    patches whose previous-scale input is the real image one scale down, augmented.
    """
    if scale_i == 0:
        sketch = sample.sketches[0].voxels
        if cfg.noise_std > 0:
            sketch = np.clip(sketch + rng.normal(0, cfg.noise_std, sketch.shape), 0, 1)
        real = sample.images[0].voxels
        yield sketch[None, None], _downsample_sketch(sketch)[None, None], real[None, None]
        return

    side = plan.working_side_at(scale_i)
    prev_shape = plan.working_shape_at(scale_i - 1)
    out_shape = plan.working_shape_at(scale_i)
    for _ in range(cfg.patches_per_volume):
        forced = rng.random() < cfg.label_patch_share
        job = patch_job(plan, scale_i, _sample_start(side, plan.patch_side, sample.labels[scale_i], forced, rng))
        sketch = extract_patch(sample.sketches[scale_i], job.out_region)
        prev = extract_patch(sample.images[scale_i - 1], job.in_region)
        real = extract_patch(sample.images[scale_i], job.out_region)
        prev, sketch = augment_patch(prev, sketch, cfg, rng)
        prev = upsample_patch(prev, job, prev_shape, out_shape)
        condition = np.stack([sketch * float(cfg.use_edges), prev * float(cfg.use_prev_scale)])[None]
        yield condition, condition, real[None, None]


def train_step(generator: BaseNetwork, discriminator: BaseNetwork, opt_g: Adam, opt_d: Adam,
               g_input: np.ndarray, condition: np.ndarray, real: np.ndarray,
               lambda_l1: float = LAMBDA_L1) -> Tuple[float, float, float]:
    """
    One discriminator update followed by one generator update.

    :return: (loss_D, loss_G_adv, loss_G_L1).
    """
    dtype = generator.dtype
    x = Tensor(np.asarray(g_input, dtype=dtype))
    cond = Tensor(np.asarray(condition, dtype=dtype))
    y = Tensor(np.asarray(real, dtype=dtype))
    fake = generator(x)

    opt_d.zero_grad()
    loss_d = discriminator_loss(discriminator(concat([cond, y])), discriminator(concat([cond, Tensor(fake.data)])))
    loss_d.backward()
    opt_d.step()

    opt_g.zero_grad()
    opt_d.zero_grad()
    loss_g, adversarial, l1 = generator_loss(discriminator(concat([cond, fake])), fake, y, lambda_l1)
    loss_g.backward()
    opt_g.step()
    return float(loss_d.data), float(adversarial.data), float(l1.data)


def _samples(dataset, plan: ScalePlan) -> List[TrainingSample]:
    samples = []
    for item in dataset:
        if isinstance(item, TrainingSample):
            samples.append(item)
        else:
            volume, *rest = item
            samples.append(prepare_sample(volume, plan, *rest))
    return samples


def _write_losses(path: str, history: Sequence[Tuple[float, float, float]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOSS_COLUMNS)
        for step, losses in enumerate(history, start=1):
            writer.writerow([step, *(repr(value) for value in losses)])


def train_scale(dataset: Sequence[Union[TrainingSample, Tuple]], plan: ScalePlan, scale_i: int,
                cfg: TrainConfig, out_dir: str = None) -> Checkpoint:
    """
    Alternating adversarial training of one scale's generator and discriminator.

    :param dataset: prepared samples, or (volume, mask[, transform]) tuples to prepare.
    :param plan: scale ladder the samples were prepared for.
    :param scale_i: scale to train, 0 for the whole-volume GAN.
    :param cfg: hyperparameters, augmentation and ablation switches.
    :param out_dir: when given, receives the loss log and one checkpoint per epoch.
    :return: the trained checkpoint.
    """
    samples = _samples(dataset, plan)
    if not samples:
        raise TrainingError(f"Empty dataset for scale {scale_i}", 0, [])
    plan.working_side_at(scale_i)
    cfg = replace(cfg, scale=scale_i)

    generator, discriminator = build_scale_networks(plan, scale_i, cfg)
    opt_g = Adam(generator.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    opt_d = Adam(discriminator.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, scale_i])
    networks = {"generator": generator, "discriminator": discriminator}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    history: List[Tuple[float, float, float]] = []
    for epoch in range(cfg.epochs):
        first = len(history)
        for index in rng.permutation(len(samples)):
            for g_input, condition, real in training_pairs(samples[index], plan, scale_i, cfg, rng):
                losses = train_step(generator, discriminator, opt_g, opt_d, g_input, condition, real, cfg.lambda_l1)
                history.append(losses)
                if not np.all(np.isfinite(losses)):
                    logger.error("Scale %d: non-finite loss at step %d, last losses %s",
                                 scale_i, len(history), history[-5:])
                    raise TrainingError(f"Non-finite loss on scale {scale_i}", len(history), history)
        means = np.mean(history[first:], axis=0)
        logger.info("Scale %d epoch %d/%d: loss_D %.4f, loss_G_adv %.4f, loss_G_L1 %.4f",
                    scale_i, epoch + 1, cfg.epochs, *means)
        if out_dir:
            save_checkpoint(Checkpoint(scale_i, cfg.seed, networks, epoch),
                            os.path.join(out_dir, EPOCH_CHECKPOINT_NAME.format(scale=scale_i, epoch=epoch)))

    checkpoint = Checkpoint(scale_i, cfg.seed, networks, cfg.epochs - 1)
    if out_dir:
        save_checkpoint(checkpoint, os.path.join(out_dir, CHECKPOINT_NAME.format(scale=scale_i)))
        _write_losses(os.path.join(out_dir, LOSS_LOG_NAME.format(scale=scale_i)), history)
    return checkpoint


def _train_worker(arguments):
    # Pool.map sends arguments as tuples so we have to unpack them ourself.
    samples, plan, scale_i, cfg, out_dir = arguments
    return train_scale(samples, plan, scale_i, cfg, out_dir)


def train_cascade(dataset: Sequence[Union[TrainingSample, Tuple]], plan: ScalePlan, cfg: TrainConfig,
                  out_dir: str = None, scales: Sequence[int] = None, threads: int = 1) -> List[Checkpoint]:
    """
    Trains several scales; HR scales read real lower-scale images, so every scale trains independently
    and, with threads > 1, in its own process.

    :param scales: scales to train, all of the plan by default.
    :param threads: worker processes; 1 trains in this process.
    :return: checkpoints in the order of `scales`.
    """
    scales = list(range(plan.n_scales + 1)) if scales is None else list(scales)
    samples = _samples(dataset, plan)
    tasks = [(samples, plan, scale_i, replace(cfg, scale=scale_i), out_dir) for scale_i in scales]
    if threads <= 1 or len(tasks) == 1:
        return [_train_worker(task) for task in tasks]
    with multiprocessing.Pool(min(threads, len(tasks))) as pool:
        return pool.map(_train_worker, tasks)
