import logging
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

from voxcascade.config.settings import (CHECKPOINT_NAME, DEFAULT_CANNY_HIGH,
                                        DEFAULT_CANNY_LOW,
                                        DEFAULT_CANNY_SIGMA,
                                        DEFAULT_HIGH_PERCENTILE,
                                        DEFAULT_LOW_PERCENTILE,
                                        DEFAULT_LR_SIDE, DEFAULT_PATCH_SIDE,
                                        DEFAULT_VALID_MARGIN, MASK_SUFFIX,
                                        VOLUME_EXTENSIONS)
from voxcascade.exceptions import CheckpointMismatchError, GeometryError
from voxcascade.logic.cascade import (infer_cascade, infer_lr_only,
                                      infer_patchwise)
from voxcascade.logic.metrics import evaluate
from voxcascade.logic.scale_plan import ScalePlan, plan_scales
from voxcascade.logic.sketch import Sketch, build_sketch_pyramid
from voxcascade.logic.trainer import (TrainConfig, balance_dataset,
                                      train_cascade)
from voxcascade.logic.volume import (Volume3, find_volumes, load_volume,
                                     normalize_intensity)
from voxcascade.nn.checkpoint import Checkpoint, load_checkpoint

logger = logging.getLogger(__name__)

Dataset = List[Tuple[Volume3, Optional[Volume3]]]


class VoxCascade:
    def __init__(self, config: Dict[str, Any] = None):
        self.config = config or {}

        # scale ladder
        self.lr_side = self.config.get("lr_side", DEFAULT_LR_SIDE)
        self.patch_side = self.config.get("patch_side", DEFAULT_PATCH_SIDE)
        self.valid_margin = self.config.get("valid_margin", DEFAULT_VALID_MARGIN)

        # sketch extraction
        canny = self.config.get("canny", {})
        self.sigma = canny.get("sigma", DEFAULT_CANNY_SIGMA)
        self.canny_low = canny.get("low", DEFAULT_CANNY_LOW)
        self.canny_high = canny.get("high", DEFAULT_CANNY_HIGH)

        # if volumes should be normalized on load, None|false keeps raw intensities
        normalize = self.config.get("normalize", [DEFAULT_LOW_PERCENTILE, DEFAULT_HIGH_PERCENTILE])
        self.percentiles = tuple(normalize) if normalize else None

        self.seed = self.config.get("seed", 0)
        self.threads = self.config.get("threads", 1)
        self.training = TrainConfig(**{"seed": self.seed, **self.config.get("training", {})})

    def plan(self, shape: Sequence[int]) -> ScalePlan:
        return plan_scales(shape, self.lr_side, self.patch_side)

    def read_volume(self, path: str) -> Volume3:
        """
        Reads a VOL1 volume, normalized to [0, 1] unless the config turns normalization off.
        """
        volume = load_volume(path)
        if self.percentiles:
            volume = normalize_intensity(volume, *self.percentiles)
        return volume

    def read_dataset(self, path: str, extensions: Sequence[str] = VOLUME_EXTENSIONS) -> Dataset:
        """
        Every volume under a directory, each with the <stem>.mask.vol sitting next to it, if any.

        :param path: dataset directory.
        :param extensions: volume file extensions.
        :return: (volume, mask or None) pairs in path order.
        """
        dataset = []
        for file_path in find_volumes(path, extensions):
            if file_path.endswith(MASK_SUFFIX):
                continue
            mask_path = os.path.splitext(file_path)[0] + MASK_SUFFIX
            mask = load_volume(mask_path) if os.path.exists(mask_path) else None
            dataset.append((self.read_volume(file_path), mask))
        logger.info("Read %d volumes from %s", len(dataset), path)
        return dataset

    def sketch(self, volume: Volume3, mask: Volume3 = None, transform: str = "identity",
               plan: ScalePlan = None) -> List[Sketch]:
        """
        The sketch pyramid of a volume, for the plan of its shape unless one is given.
        """
        plan = plan or self.plan(volume.shape)
        return build_sketch_pyramid(volume, plan, mask, transform, self.sigma, self.canny_low, self.canny_high)

    def train(self, dataset: Dataset, out_dir: str = None, scales: Sequence[int] = None,
              balance: bool = False) -> List[Checkpoint]:
        """
        Trains the scales of the plan fitting the dataset's volumes.

        :param dataset: (volume, mask or None) pairs, all of one shape.
        :param out_dir: receives loss logs and checkpoints.
        :param scales: scales to train, all by default.
        :param balance: repeat labelled volumes with transformed labels.
        :return: checkpoints in the order of `scales`.
        """
        if not dataset:
            raise GeometryError("Cannot train on an empty dataset")
        shapes = {volume.shape for volume, _ in dataset}
        if len(shapes) != 1:
            raise GeometryError(f"Training volumes must share one shape, got {sorted(shapes)}")
        plan = self.plan(shapes.pop())
        samples = balance_dataset(dataset) if balance else dataset
        return train_cascade(samples, plan, self.training, out_dir, scales, self.threads)

    def train_directory(self, path: str, out_dir: str, scales: Sequence[int] = None,
                        balance: bool = False) -> List[Checkpoint]:
        return self.train(self.read_dataset(path), out_dir, scales, balance)

    @staticmethod
    def load_checkpoints(directory: str) -> List[Checkpoint]:
        """
        scale0.ckpt, scale1.ckpt, ... up to the first missing scale.
        """
        checkpoints = []
        while True:
            path = os.path.join(directory, CHECKPOINT_NAME.format(scale=len(checkpoints)))
            if not os.path.exists(path):
                break
            checkpoints.append(load_checkpoint(path))
        if not checkpoints:
            raise CheckpointMismatchError(f"No {CHECKPOINT_NAME.format(scale=0)} in {directory}")
        return checkpoints

    def plan_for(self, shape: Sequence[int], checkpoints: Sequence[Checkpoint]) -> ScalePlan:
        """
        The plan of a shape, with lr_side and patch_side taken from the checkpoints when they record them.
        """
        lr_side = checkpoints[0].generator.config.get("lr_side", self.lr_side)
        patch_side = self.patch_side
        if len(checkpoints) > 1:
            patch_side = checkpoints[1].generator.config.get("patch_side", patch_side)
        return plan_scales(shape, lr_side, patch_side)

    def translate(self, volume: Volume3, checkpoints: Sequence[Checkpoint], mask: Volume3 = None,
                  use_edges: bool = True, use_prev_scale: bool = True) -> List[Volume3]:
        """
        Regenerates a volume from its own sketch with trained generators.

        :return: every scale's output, the last one at the volume's shape.
        """
        plan = self.plan_for(volume.shape, checkpoints)
        return infer_cascade(self.sketch(volume, mask, plan=plan), checkpoints, plan, self.valid_margin,
                             use_edges, use_prev_scale, self.threads)

    def translate_lr_only(self, volume: Volume3, checkpoints: Sequence[Checkpoint], mask: Volume3 = None) -> Volume3:
        plan = self.plan_for(volume.shape, checkpoints)
        return infer_lr_only(self.sketch(volume, mask, plan=plan), checkpoints[0], plan)

    def translate_patchwise(self, volume: Volume3, checkpoints: Sequence[Checkpoint],
                            mask: Volume3 = None) -> List[Volume3]:
        plan = self.plan_for(volume.shape, checkpoints)
        return infer_patchwise(self.sketch(volume, mask, plan=plan), checkpoints, plan, self.threads)

    @staticmethod
    def evaluate(a: Volume3, b: Volume3) -> Dict[str, float]:
        return evaluate(a, b)
