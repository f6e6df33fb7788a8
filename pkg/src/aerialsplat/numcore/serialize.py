"""Flat binary parameter files.

Layout (all little-endian)::

    b"ANYC" | version u32 | count u32
    repeated count times:
        name_len u32 | utf-8 name | rank u32 | dims u64 * rank | f64 payload
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"ANYC"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def dumps(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != MAGIC:
        raise CheckpointFormatError("bad magic")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}")
    off = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<I", buf, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", buf, off)
            off += 8 * rank
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(dims)
            off += 8 * size
            out[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise CheckpointFormatError(f"truncated checkpoint: {exc}") from None
    return out


def save_arrays(path, arrays: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(arrays))


def load_arrays(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def save_parameters(path, params) -> None:
    """Write Parameters (iterable, each with ``name``) to ``path``."""
    save_arrays(path, {p.name: p.data for p in params})


def load_parameters(path, params, strict: bool = True) -> None:
    arrays = load_arrays(path)
    names = {p.name for p in params}
    if strict:
        missing = names - arrays.keys()
        if missing:
            raise CheckpointFormatError(f"missing parameters: {sorted(missing)[:5]}")
    for p in params:
        if p.name in arrays:
            p.assign(arrays[p.name])
