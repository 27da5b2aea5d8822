"""Self-describing tensor container used for encoder and agent checkpoints.

Layout: a 7-byte ASCII magic, then for each tensor until end of file::

    uint32 name_len | name (utf-8) | uint32 rank | uint32 dims[rank] | float32 values[prod(dims)]

All integers and floats are little-endian; values are row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

ENCODER_MAGIC = b"PUSHAE1"
AGENT_MAGIC = b"PUSHRL1"


class CheckpointError(ValueError):
    pass


def write_tensors(path, magic: bytes, tensors: dict[str, np.ndarray]) -> None:
    if len(magic) != 7:
        raise ValueError("magic must be 7 bytes")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(magic)
        for name, value in tensors.items():
            arr = np.ascontiguousarray(np.asarray(value, dtype="<f4"))
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_tensors(path, magic: bytes) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:7] != magic:
        raise CheckpointError(f"{path}: expected magic {magic!r}, found {data[:7]!r}")
    out: dict[str, np.ndarray] = {}
    pos = 7
    try:
        while pos < len(data):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * count > len(data):
                raise CheckpointError(f"{path}: tensor {name!r} truncated")
            out[name] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(dims).copy()
            pos += 4 * count
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    return out
