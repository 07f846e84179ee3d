import csv
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, TextIO, Tuple

import matplotlib
import numpy as np

from voxcascade.base_classes.base_architecture import get_architecture
from voxcascade.config.settings import (ACTIVATION_COPIES,
                                        BASELINE_ARCHITECTURES,
                                        BYTES_PER_SCALAR, MEMORY_COLUMNS,
                                        OPTIMIZER_COPIES)
from voxcascade.logic.memory_tracker import MemoryTracker
from voxcascade.nn.layers import LayerRow

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

# Sides the regression curves of the baselines are drawn up to.
EXTRAPOLATE_TO = 512
GIGABYTE = 1e9


@dataclass(frozen=True)
class MemoryReport:
    """
    Bytes of one training step (one G and one D forward/backward pass, batch size one).
    """
    arch: str
    side: int
    activations_G: int
    activations_D: int
    params: int
    grads: int
    optimizer: int
    images: int
    rows: Tuple[LayerRow, ...] = ()

    @property
    def total(self) -> int:
        return (self.activations_G + self.activations_D + self.params + self.grads + self.optimizer
                + self.images)

    def as_row(self) -> List:
        return [self.arch, self.side, self.activations_G, self.activations_D, self.params, self.grads,
                self.optimizer, self.images, self.total]


def _activation_bytes(rows: Sequence[LayerRow]) -> int:
    return ACTIVATION_COPIES * BYTES_PER_SCALAR * sum(row.scalars for row in rows)


def estimate_memory(arch_id: str, side: int) -> MemoryReport:
    """
    Walks the layer rows of an architecture and adds up what a training step keeps alive.

    :param arch_id: key of ARCHITECTURES.
    :param side: final image side, in voxels.
    :return: the byte breakdown.
    """
    architecture = get_architecture(arch_id)()
    architecture.check_side(side)
    g_rows = architecture.generator_rows(side)
    d_rows = architecture.discriminator_rows(side)
    params = BYTES_PER_SCALAR * sum(row.params for row in g_rows + d_rows)
    report = MemoryReport(
        arch=arch_id,
        side=side,
        activations_G=_activation_bytes(g_rows),
        activations_D=_activation_bytes(d_rows),
        params=params,
        grads=params,
        optimizer=OPTIMIZER_COPIES * params,
        images=BYTES_PER_SCALAR * architecture.image_scalars(side),
        rows=tuple(g_rows + d_rows),
    )
    logger.debug("%s at %d^3: %d bytes over %d rows", arch_id, side, report.total, len(report.rows))
    return report


def fit_growth(reports: Sequence[MemoryReport]) -> Dict[str, float]:
    """
    Least-squares slope of log(total) against log(side), per architecture.

    :param reports: at least three distinct sides per architecture.
    :return: growth exponent per architecture id.
    """
    by_arch = defaultdict(dict)
    for report in reports:
        by_arch[report.arch][report.side] = report.total
    exponents = {}
    for arch, totals in by_arch.items():
        if len(totals) < 3:
            raise ValueError(f"Fitting the growth of {arch} needs at least 3 sides, got {sorted(totals)}")
        sides = sorted(totals)
        slope, _ = np.polyfit(np.log(sides), np.log([totals[s] for s in sides]), 1)
        exponents[arch] = float(slope)
    return exponents


def measure(run: Callable[[], object]) -> MemoryTracker:
    """
    Runs a closure under a fresh tracker and hands the tracker back for its per-component peaks.
    """
    with MemoryTracker() as tracker:
        run()
    return tracker


def measure_runtime_memory(run: Callable[[], object]) -> int:
    """
    High-water mark, in bytes, of the tensor and volume buffers a closure allocates.
    """
    return measure(run).peak


def reports_to_csv(reports: Sequence[MemoryReport], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(MEMORY_COLUMNS)
    for report in reports:
        writer.writerow(report.as_row())


def reports_from_csv(stream: TextIO) -> List[MemoryReport]:
    """
    Reads reports written by reports_to_csv; the layer rows are not stored.
    """
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != MEMORY_COLUMNS:
        raise ValueError(f"Expected the columns {','.join(MEMORY_COLUMNS)}, got {reader.fieldnames}")
    reports = []
    for line in reader:
        report = MemoryReport(line["arch"], *(int(line[column]) for column in MEMORY_COLUMNS[1:-1]))
        if report.total != int(line["total_bytes"]):
            raise ValueError(f"Row {report.arch}/{report.side}: total_bytes does not match its components")
        reports.append(report)
    return reports


def plot_memory(reports: Sequence[MemoryReport], path: str) -> None:
    """
    Log-scale chart of training memory against image side: measured points and a cubic
    regression for the whole-volume baselines, flat lines for the cascade networks.

    :param reports: reports of any architectures and sides.
    :param path: SVG file to write.
    """
    by_arch = defaultdict(dict)
    for report in reports:
        by_arch[report.arch][report.side] = report.total / GIGABYTE
    all_sides = sorted({report.side for report in reports})
    xs = np.geomspace(all_sides[0], max(all_sides[-1], EXTRAPOLATE_TO), 64)

    with matplotlib.rc_context({"svg.hashsalt": "voxcascade", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for arch in sorted(by_arch):
            sides = np.array(sorted(by_arch[arch]), dtype=np.float64)
            totals = np.array([by_arch[arch][s] for s in sorted(by_arch[arch])])
            if arch in BASELINE_ARCHITECTURES:
                points = ax.plot(sides, totals, "o", label=arch)[0]
                if len(sides) >= 2:
                    # cubic in the side, fitted as a line in side^3
                    slope, intercept = np.polyfit(sides ** 3, totals, 1)
                    ax.plot(xs, slope * xs ** 3 + intercept, "--", color=points.get_color())
            else:
                ax.plot(xs, np.full_like(xs, totals.max()), "-", label=arch)
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("image side (voxels)")
        ax.set_ylabel("training memory (GB)")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.info("Memory chart of %d reports written to %s", len(reports), path)
