"""
Versioned binary checkpoint container

Layout (all integers little-endian)::

    8 bytes   magic  b"PUTRCKPT"
    u32       format version
    u32       length of the ModelConfig JSON, then the JSON bytes
    u32       number of arrays, then per array:
                u16 name length, name (utf-8), u8 ndim, u32 x ndim shape,
                float32 little-endian data (row-major)
    u32       CRC32 of everything above
"""
import dataclasses
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from src.utils.errors import CheckpointError

MAGIC = b"PUTRCKPT"
VERSION = 1


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint: wanted {n} bytes at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def encode_checkpoint(params, config):
    """Serialize named float arrays and a config dataclass to bytes."""
    body = bytearray(MAGIC)
    body += struct.pack("<I", VERSION)
    config_json = json.dumps(dataclasses.asdict(config), sort_keys=True).encode("utf-8")
    body += struct.pack("<I", len(config_json)) + config_json
    body += struct.pack("<I", len(params))
    for name in sorted(params):
        array = np.ascontiguousarray(params[name], dtype="<f4")
        encoded = name.encode("utf-8")
        body += struct.pack("<H", len(encoded)) + encoded
        body += struct.pack("<B", array.ndim)
        body += struct.pack(f"<{array.ndim}I", *array.shape)
        body += array.tobytes(order="C")
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    return bytes(body)


def decode_checkpoint(data):
    """Inverse of encode_checkpoint. Returns (config dict, {name: float32 array})."""
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    (config_len,) = reader.unpack("<I")
    try:
        config = json.loads(reader.take(config_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt config block: {e}") from None

    (n_arrays,) = reader.unpack("<I")
    params = {}
    for _ in range(n_arrays):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8", errors="replace")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        raw = reader.take(4 * count)
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)

    end = reader.pos
    (crc,) = reader.unpack("<I")
    if reader.pos != len(data):
        raise CheckpointError(f"{len(data) - reader.pos} trailing bytes after checkpoint")
    if zlib.crc32(data[:end]) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint CRC mismatch")
    return config, params


def checkpoint_save(path, params, config):
    """Write ``params`` (name -> array) and ``config`` to ``path``."""
    data = encode_checkpoint(params, config)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return path


def checkpoint_load(path, config=None):
    """
    Read a checkpoint

    Args:
        path: checkpoint file
        config: optional ModelConfig the caller wants; parameter shapes must match it

    Returns:
        (ModelConfig, {name: float32 array})
    """
    from src.algorithms.model import ModelConfig, parameter_shapes

    stored, params = decode_checkpoint(Path(path).read_bytes())
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    try:
        stored_config = ModelConfig(**{k: v for k, v in stored.items() if k in known})
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"invalid ModelConfig in checkpoint: {e}") from None

    wanted = config if config is not None else stored_config
    expected = parameter_shapes(wanted)
    missing = sorted(set(expected) - set(params))
    unexpected = sorted(set(params) - set(expected))
    if missing or unexpected:
        raise CheckpointError(f"parameter names differ: missing {missing}, unexpected {unexpected}")
    for name, shape in expected.items():
        if tuple(params[name].shape) != tuple(shape):
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {tuple(params[name].shape)}, config {tuple(shape)}")
    return wanted, params
