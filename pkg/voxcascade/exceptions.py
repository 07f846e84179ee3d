from typing import List, Sequence, Tuple


class VoxCascadeError(Exception):
    pass


class VolumeFormatError(VoxCascadeError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class GeometryError(VoxCascadeError):
    pass


class CoverageError(VoxCascadeError):
    def __init__(self, box: Sequence[Tuple[int, int]]):
        self.box = tuple(tuple(axis) for axis in box)
        spans = " x ".join(f"[{lo}, {hi})" for lo, hi in self.box)
        super().__init__(f"Paste box {spans} is not covered by any job")


class DegenerateInputError(VoxCascadeError):
    pass


class CheckpointMismatchError(VoxCascadeError):
    pass


class TrainingError(VoxCascadeError):
    def __init__(self, message: str, step: int, history: List[Tuple[float, float, float]]):
        tail = ", ".join(f"(D={d:.4g}, G_adv={g:.4g}, G_L1={l1:.4g})" for d, g, l1 in history[-5:])
        super().__init__(f"{message} at step {step}; last losses: {tail or 'none'}")
        self.step = step
        self.history = list(history)
