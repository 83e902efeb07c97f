"""Binary parameter checkpoints.

Layout (little-endian): magic ``b"DGRD"``, version ``u32``, then for each
parameter until end of file: name length ``u32``, UTF-8 name, rank ``u32``,
``rank`` dims as ``u64``, and the ``float64`` data in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"DGRD"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params):
    """Serialise an ordered ``{name: array}`` mapping to bytes."""
    out = [MAGIC, struct.pack("<I", VERSION)]
    for name, value in params.items():
        arr = np.asarray(value.data if isinstance(value, Tensor) else value, dtype="<f8", order="C")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(blob):
    """Parse bytes produced by :func:`dumps` into ``{name: array}``."""
    if blob[:4] != MAGIC:
        raise CheckpointError("bad checkpoint magic at offset 0")
    if len(blob) < 8:
        raise CheckpointError("truncated checkpoint header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos, params = 8, {}
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            if len(name.encode("utf-8")) != n:
                raise CheckpointError(f"truncated parameter name at offset {pos}")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            if pos + 8 * count > len(blob):
                raise CheckpointError(f"truncated data for parameter {name!r}")
            params[name] = np.frombuffer(blob, "<f8", count, pos).reshape(shape).astype(np.float64)
            pos += 8 * count
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint at offset {pos}") from exc
    return params


def save(params, path):
    Path(path).write_bytes(dumps(params))


def load(path):
    return loads(Path(path).read_bytes())
