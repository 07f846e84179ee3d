import json
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from voxcascade.base_classes.base_network import BaseNetwork, get_network
from voxcascade.config.settings import (CHECKPOINT_MAGIC, DISK_FLOAT,
                                        FIELD_CONFIG, FIELD_EPOCH,
                                        FIELD_FAMILY, FIELD_NAME,
                                        FIELD_NETWORKS, FIELD_PARAMETERS,
                                        FIELD_SCALE, FIELD_SEED)
from voxcascade.exceptions import CheckpointMismatchError, VolumeFormatError

_HEADER_OFFSET = len(CHECKPOINT_MAGIC) + 4


@dataclass
class Checkpoint:
    """
    The networks of one scale, usually "generator" and "discriminator".
    """
    scale: int
    seed: int
    networks: Dict[str, BaseNetwork] = field(default_factory=dict)
    epoch: Optional[int] = None

    @property
    def generator(self) -> BaseNetwork:
        try:
            return self.networks["generator"]
        except KeyError:
            raise CheckpointMismatchError(f"Checkpoint of scale {self.scale} holds no generator")

    @property
    def discriminator(self) -> Optional[BaseNetwork]:
        return self.networks.get("discriminator")


def checkpoint_bytes(checkpoint: Checkpoint) -> bytes:
    header = {
        FIELD_SCALE: checkpoint.scale,
        FIELD_SEED: checkpoint.seed,
        FIELD_EPOCH: checkpoint.epoch,
        FIELD_NETWORKS: [{
            FIELD_NAME: name,
            FIELD_FAMILY: network.family,
            FIELD_CONFIG: network.config,
            FIELD_PARAMETERS: [list(p.shape) for p in network.parameters()],
        } for name, network in checkpoint.networks.items()]
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf8")
    payload = b"".join(np.ascontiguousarray(p.data, dtype=DISK_FLOAT).tobytes()
                       for network in checkpoint.networks.values() for p in network.parameters())
    return CHECKPOINT_MAGIC + struct.pack("<I", len(encoded)) + encoded + payload


def save_checkpoint(checkpoint: Checkpoint, path: str) -> None:
    """
    Writes CKPT1: magic, u32 LE JSON length, JSON description of every network (family,
    config, parameter shapes), scale and seed, then all parameters as little-endian 32-bit
    floats in declaration order.
    """
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(checkpoint))


def load_checkpoint(path: str, dtype: str = None) -> Checkpoint:
    """
    Rebuilds the networks of a CKPT1 file.

    :param path: file to read.
    :param dtype: optional compute dtype overriding the one stored in the configs.
    :return: the checkpoint with its networks.
    """
    with open(path, "rb") as f:
        data = f.read()

    if data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise VolumeFormatError(f"Bad magic {data[:len(CHECKPOINT_MAGIC)]!r}, expected {CHECKPOINT_MAGIC!r}", 0)
    if len(data) < _HEADER_OFFSET:
        raise VolumeFormatError("Truncated header length", len(data))
    (header_length,) = struct.unpack("<I", data[len(CHECKPOINT_MAGIC):_HEADER_OFFSET])
    offset = _HEADER_OFFSET + header_length
    try:
        header = json.loads(data[_HEADER_OFFSET:offset].decode("utf8"))
        entries = header[FIELD_NETWORKS]
    except (ValueError, KeyError) as err:
        raise VolumeFormatError(f"Unreadable header: {err}", _HEADER_OFFSET)

    checkpoint = Checkpoint(header[FIELD_SCALE], header[FIELD_SEED], epoch=header.get(FIELD_EPOCH))
    for entry in entries:
        config = dict(entry[FIELD_CONFIG])
        if dtype:
            config["dtype"] = dtype
        network = get_network(entry[FIELD_FAMILY])(**config)
        params = network.parameters()
        shapes = [tuple(s) for s in entry[FIELD_PARAMETERS]]
        if shapes != [p.shape for p in params]:
            raise CheckpointMismatchError(f"Network {entry[FIELD_NAME]!r} of family {entry[FIELD_FAMILY]!r} "
                                          f"does not match the stored parameter shapes")
        for p in params:
            size = p.data.size * 4
            if len(data) < offset + size:
                raise VolumeFormatError("Truncated parameter payload", len(data))
            p.data[...] = np.frombuffer(data, dtype=DISK_FLOAT, count=p.data.size, offset=offset).reshape(p.shape)
            offset += size
        checkpoint.networks[entry[FIELD_NAME]] = network
    if offset != len(data):
        raise VolumeFormatError(f"{len(data) - offset} trailing bytes after the parameters", offset)
    return checkpoint
