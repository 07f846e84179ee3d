import fnmatch
import json
import logging
import os
import struct
from dataclasses import dataclass
from hashlib import sha1
from typing import List, Sequence, Tuple

import numpy as np

from voxcascade.config.settings import (DEFAULT_HIGH_PERCENTILE,
                                        DEFAULT_LOW_PERCENTILE, DISK_FLOAT,
                                        FIELD_DTYPE, FIELD_SHAPE,
                                        FIELD_SPACING, VOLUME_DTYPE,
                                        VOLUME_MAGIC)
from voxcascade.exceptions import GeometryError, VolumeFormatError
from voxcascade.logic.memory_tracker import track

logger = logging.getLogger(__name__)

Shape3 = Tuple[int, int, int]
# (lo, hi) per axis, hi exclusive.
Box3 = Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]]

_HEADER_OFFSET = len(VOLUME_MAGIC) + 4


@dataclass(frozen=True)
class Volume3:
    """
    Immutable 3D scalar field stored (z, y, x) in C order, so x is the fastest axis.

    The voxel array is a read-only view; the caller's buffer is never frozen.
    """
    voxels: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    degenerate: bool = False

    def __post_init__(self):
        voxels = np.asarray(self.voxels)
        if voxels.ndim != 3 or min(voxels.shape) <= 0:
            raise GeometryError(f"A volume needs three positive axes, got shape {voxels.shape}")
        if not np.issubdtype(voxels.dtype, np.floating):
            voxels = voxels.astype(np.float64)
        if not np.all(np.isfinite(voxels)):
            raise GeometryError("Volume voxels must be finite")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise GeometryError(f"Spacing components must be positive, got {self.spacing}")

        voxels = voxels.view()
        voxels.flags.writeable = False
        object.__setattr__(self, "voxels", track(voxels, "volume"))
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> Shape3:
        return tuple(int(n) for n in self.voxels.shape)

    def with_voxels(self, voxels: np.ndarray, spacing: Sequence[float] = None, degenerate: bool = False):
        """
        A volume of the same kind on the given voxels, keeping the spacing unless told otherwise.
        """
        return type(self)(voxels, self.spacing if spacing is None else tuple(spacing), degenerate)


def save_volume(v: Volume3, path: str) -> None:
    """
    Writes a volume in the VOL1 layout: magic, u32 LE header length, JSON header,
    then the voxels as little-endian 32-bit floats, x fastest.

    :param v: volume to write.
    :param path: destination file.
    """
    header = json.dumps({
        FIELD_SHAPE: list(v.shape),
        FIELD_SPACING: list(v.spacing),
        FIELD_DTYPE: VOLUME_DTYPE
    }).encode("utf8")
    with open(path, "wb") as f:
        f.write(VOLUME_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(v.voxels, dtype=DISK_FLOAT).tobytes())


def load_volume(path: str) -> Volume3:
    """
    Reads a VOL1 file.

    :param path: file to read.
    :return: the stored volume, voxels as float32.
    """
    with open(path, "rb") as f:
        data = f.read()

    if data[:len(VOLUME_MAGIC)] != VOLUME_MAGIC:
        raise VolumeFormatError(f"Bad magic {data[:len(VOLUME_MAGIC)]!r}, expected {VOLUME_MAGIC!r}", 0)
    if len(data) < _HEADER_OFFSET:
        raise VolumeFormatError("Truncated header length", len(data))

    (header_length,) = struct.unpack("<I", data[len(VOLUME_MAGIC):_HEADER_OFFSET])
    payload_offset = _HEADER_OFFSET + header_length
    if len(data) < payload_offset:
        raise VolumeFormatError(f"Truncated header: expected {header_length} bytes", len(data))

    try:
        header = json.loads(data[_HEADER_OFFSET:payload_offset].decode("utf8"))
        shape = tuple(int(n) for n in header[FIELD_SHAPE])
        spacing = tuple(float(s) for s in header.get(FIELD_SPACING, (1.0, 1.0, 1.0)))
        dtype = header.get(FIELD_DTYPE, VOLUME_DTYPE)
    except (ValueError, KeyError, TypeError) as err:
        raise VolumeFormatError(f"Unreadable header: {err}", _HEADER_OFFSET)

    if len(shape) != 3 or min(shape) <= 0:
        raise VolumeFormatError(f"Shape must hold three positive counts, got {list(shape)}", _HEADER_OFFSET)
    if dtype != VOLUME_DTYPE:
        raise VolumeFormatError(f"Unsupported dtype {dtype!r}", _HEADER_OFFSET)
    if len(spacing) != 3 or min(spacing) <= 0:
        raise VolumeFormatError(f"Spacing must hold three positive values, got {list(spacing)}", _HEADER_OFFSET)

    expected = int(np.prod(shape))
    end = payload_offset + expected * 4
    if len(data) < end:
        found = (len(data) - payload_offset) // 4
        raise VolumeFormatError(f"Truncated payload: expected {expected} floats, found {found}",
                                payload_offset + found * 4)
    if len(data) > end:
        raise VolumeFormatError(f"{len(data) - end} trailing bytes after {expected} floats", end)

    voxels = np.frombuffer(data, dtype=DISK_FLOAT, count=expected, offset=payload_offset)
    return Volume3(voxels.astype(np.float32).reshape(shape), spacing)


def axis_coordinates(n_in: int, n_out: int) -> np.ndarray:
    """
    Source coordinates sampled by each output index along one axis.

    Corner voxel centers map onto corner voxel centers:
        c(i) = i * (n_in - 1) / (n_out - 1)
    so 2x up- and down-scaling nest inside each other and patches cut out of the
    same grid sample exactly the same positions.
    """
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * (n_in - 1) / (n_out - 1)


def interpolate_axis(array: np.ndarray, axis: int, coords: np.ndarray, n_full: int, origin: int = 0) -> np.ndarray:
    """
    Linear interpolation of `array` along one axis at global coordinates.

    :param array: data along the axis, starting at global index `origin`.
    :param axis: axis to interpolate.
    :param coords: global sampling coordinates.
    :param n_full: length of the global axis, used to clamp the upper neighbour.
    :param origin: global index of array position 0.
    :return: interpolated array, `len(coords)` long along `axis`.
    """
    lower = np.floor(coords)
    weights = coords - lower
    i0 = np.clip(lower.astype(int), 0, n_full - 1)
    i1 = np.minimum(i0 + 1, n_full - 1)

    shape = [1] * array.ndim
    shape[axis] = len(coords)
    weights = weights.reshape(shape)
    return np.take(array, i0 - origin, axis=axis) * (1 - weights) + np.take(array, i1 - origin, axis=axis) * weights


def resample_trilinear(v: Volume3, target_shape: Sequence[int]) -> Volume3:
    """
    Trilinear resampling with corner-aligned sampling (see `axis_coordinates`).

    Output spacing is scaled by n_in / n_out per axis, keeping the field of view.
    """
    target_shape = _check_shape(target_shape)
    voxels = v.voxels
    for axis, n_out in enumerate(target_shape):
        n_in = voxels.shape[axis]
        if n_out != n_in:
            voxels = interpolate_axis(voxels, axis, axis_coordinates(n_in, n_out), n_in)
    spacing = tuple(s * n_in / n_out for s, n_in, n_out in zip(v.spacing, v.shape, target_shape))
    return v.with_voxels(voxels.astype(v.voxels.dtype, copy=False), spacing)


def resample_nearest(mask: Volume3, target_shape: Sequence[int]) -> Volume3:
    """
    Nearest-neighbour resampling on the same corner-aligned grid, for label volumes.
    """
    target_shape = _check_shape(target_shape)
    index = np.ix_(*[np.rint(axis_coordinates(n_in, n_out)).astype(int)
                     for n_in, n_out in zip(mask.shape, target_shape)])
    spacing = tuple(s * n_in / n_out for s, n_in, n_out in zip(mask.spacing, mask.shape, target_shape))
    return mask.with_voxels(mask.voxels[index], spacing)


def normalize_intensity(v: Volume3, lo_pct: float = DEFAULT_LOW_PERCENTILE,
                        hi_pct: float = DEFAULT_HIGH_PERCENTILE) -> Volume3:
    """
    Maps the lo_pct/hi_pct intensity percentiles to 0/1 and clamps to [0, 1].

    A volume with no percentile span comes back all zeros and flagged degenerate.
    """
    if not 0 <= lo_pct < hi_pct <= 1:
        raise ValueError(f"Percentiles must satisfy 0 <= lo < hi <= 1, got {lo_pct}, {hi_pct}")
    lo, hi = np.quantile(v.voxels, [lo_pct, hi_pct])
    if hi - lo <= 0:
        logger.warning("Constant volume of shape %s, normalized to zeros", v.shape)
        return v.with_voxels(np.zeros(v.shape, dtype=v.voxels.dtype), degenerate=True)
    voxels = np.clip((v.voxels - lo) / (hi - lo), 0, 1)
    return v.with_voxels(voxels.astype(v.voxels.dtype, copy=False))


def embed_in_working_shape(v: Volume3, working_shape: Sequence[int], mode: str = "edge") -> Tuple[Volume3, Box3]:
    """
    Centers a volume inside a larger working grid, filling the rest by edge replication
    ("edge") or with zeros ("constant", for label masks).

    :param v: original volume.
    :param working_shape: grid at least as large as `v` on every axis.
    :return: the embedded volume and the crop window that gives `v` back.
    """
    working_shape = _check_shape(working_shape)
    if any(w < n for w, n in zip(working_shape, v.shape)):
        raise GeometryError(f"Working shape {working_shape} is smaller than {v.shape}")
    window = tuple(((w - n) // 2, (w - n) // 2 + n) for w, n in zip(working_shape, v.shape))
    pad = [(lo, w - hi) for (lo, hi), w in zip(window, working_shape)]
    return v.with_voxels(np.pad(v.voxels, pad, mode=mode)), window


def crop(v: Volume3, window: Box3) -> Volume3:
    index = tuple(slice(lo, hi) for lo, hi in window)
    return v.with_voxels(v.voxels[index])


def unique_hash(file_path: str, block_size: int = 2**20) -> str:
    """
    SHA1 of a file's bytes, read block by block so large volumes are fine.

    :param file_path: path to file.
    :param block_size: read block size.
    :return: a hash in an hexadecimal string form.
    """
    s = sha1()
    with open(file_path, "rb") as f:
        while True:
            buf = f.read(block_size)
            if not buf:
                break
            s.update(buf)
    return s.hexdigest().upper()


def find_volumes(path: str, extensions: Sequence[str] = (".vol",)) -> List[str]:
    """
    Get all files under a directory that meet the specified extensions.

    :param path: path to a directory with volumes.
    :param extensions: file extensions to look for, with or without the dot.
    :return: sorted file paths.
    """
    extensions = [e.replace(".", "") for e in extensions]

    results = []
    for dirpath, dirnames, files in os.walk(path):
        for extension in extensions:
            for f in fnmatch.filter(files, f"*.{extension}"):
                results.append(os.path.join(dirpath, f))
    return sorted(results)


def _check_shape(shape: Sequence[int]) -> Shape3:
    shape = tuple(int(n) for n in shape)
    if len(shape) != 3 or min(shape) <= 0:
        raise GeometryError(f"Target shape must hold three positive counts, got {shape}")
    return shape
