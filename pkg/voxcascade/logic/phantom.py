import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from voxcascade.config.settings import (PHANTOM_BACKGROUND,
                                        PHANTOM_INTENSITY_RANGE,
                                        PHANTOM_LESION_VALUE,
                                        PHANTOM_SHELL_SCALE, SHARPEN_AMOUNT,
                                        SMOOTH_SIGMA, SPECKLE_STD)
from voxcascade.exceptions import GeometryError
from voxcascade.logic.volume import Volume3

logger = logging.getLogger(__name__)

DOMAINS = ("smooth", "noisy")
# Shell contrast against the blob it sits in.
SHELL_OFFSET = 0.2


@dataclass(frozen=True)
class PhantomSpec:
    seed: int
    side: int = 64
    n_blobs: int = 4
    domain: str = "smooth"
    lesion_radius: Optional[float] = None
    # voxel coordinates (z, y, x); None puts the lesion at the center of the first blob
    lesion_center: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if self.side < 64 or self.side & (self.side - 1):
            raise GeometryError(f"Phantom side must be a power of two of at least 64, got {self.side}")
        if self.n_blobs < 1:
            raise GeometryError(f"A phantom needs at least one blob, got {self.n_blobs}")
        if self.domain not in DOMAINS:
            raise ValueError(f"Unknown phantom domain {self.domain!r}, expected one of {DOMAINS}")


def _ellipsoid(grid: np.ndarray, center: np.ndarray, axes: np.ndarray) -> np.ndarray:
    return (((grid - center.reshape(3, 1, 1, 1)) / axes.reshape(3, 1, 1, 1)) ** 2).sum(axis=0) <= 1


def phantom_geometry(spec: PhantomSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    Appearance-free phantom: blobs on a dark background, a nested shell per blob and the lesion.

    Depends on the seed, side, blob count and lesion only, never on the domain.

    :return: (intensities, binary lesion mask) as float32 arrays.
    """
    rng = np.random.default_rng(spec.seed)
    side = spec.side
    grid = np.indices((side, side, side), dtype=np.float32)
    volume = np.full((side, side, side), PHANTOM_BACKGROUND, dtype=np.float32)

    low, high = PHANTOM_INTENSITY_RANGE
    # one intensity per evenly spaced slot, so blobs never share a value
    slots = rng.permutation(spec.n_blobs)
    intensities = low + (high - low) * (slots + rng.uniform(0.2, 0.8, spec.n_blobs)) / spec.n_blobs
    centers, axes = [], []
    for intensity in intensities:
        center = rng.uniform(0.3, 0.7, 3) * side
        semi_axes = rng.uniform(0.12, 0.25, 3) * side
        shell = intensity + SHELL_OFFSET if intensity < 0.6 else intensity - SHELL_OFFSET
        volume[_ellipsoid(grid, center, semi_axes)] = intensity
        volume[_ellipsoid(grid, center, semi_axes * PHANTOM_SHELL_SCALE)] = shell
        centers.append(center)
        axes.append(semi_axes)

    mask = np.zeros_like(volume)
    if spec.lesion_radius:
        center = np.asarray(spec.lesion_center if spec.lesion_center is not None else centers[0], dtype=np.float32)
        radius = spec.lesion_radius
        if np.any(center - radius < 0) or np.any(center + radius > side - 1):
            raise GeometryError(f"Lesion of radius {radius} at {tuple(center)} does not fit in a {side}^3 phantom")
        ball = _ellipsoid(grid, center, np.full(3, radius, dtype=np.float32))
        volume[ball] = PHANTOM_LESION_VALUE
        mask[ball] = 1
    return volume, mask


def apply_appearance(geometry: np.ndarray, domain: str, seed: int) -> np.ndarray:
    """
    Domain-specific rendering: Gaussian blur for "smooth", multiplicative speckle then
    unsharp masking for "noisy". Clipped to [0, 1].
    """
    if domain == "smooth":
        rendered = gaussian_filter(geometry, SMOOTH_SIGMA)
    else:
        rng = np.random.default_rng([seed, 1])
        speckled = geometry * (1 + SPECKLE_STD * rng.standard_normal(geometry.shape, dtype=np.float32))
        rendered = speckled + SHARPEN_AMOUNT * (speckled - gaussian_filter(speckled, SMOOTH_SIGMA))
    return np.clip(rendered, 0, 1).astype(np.float32)


def gen_phantom(spec: PhantomSpec) -> Tuple[Volume3, Volume3]:
    """
    Deterministic phantom of one appearance domain.

    :param spec: seed, size, blobs, domain and optional lesion.
    :return: (volume, lesion mask).
    """
    geometry, mask = phantom_geometry(spec)
    logger.debug("Phantom seed %d, side %d, domain %s", spec.seed, spec.side, spec.domain)
    return Volume3(apply_appearance(geometry, spec.domain, spec.seed)), Volume3(mask)
