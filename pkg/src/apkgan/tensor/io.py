"""Checkpoint file layout for ParamSets.

All integers little-endian::

    magic      8 bytes  b"APKGPSET"
    version    u32      (1)
    count      u32      number of tensors
    per tensor:
      name_len u16, name (utf-8)
      ndim     u8, dims u32 * ndim
      payload  float64 * prod(dims)
"""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatViolation
from .core import Tensor
from .nn import ParamSet

MAGIC = b"APKGPSET"
VERSION = 1


def dumps_params(params: ParamSet) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, t in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


def loads_params(blob: bytes) -> ParamSet:
    if blob[:8] != MAGIC:
        raise FormatViolation("not a parameter checkpoint")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise FormatViolation(f"unsupported checkpoint version {version}")
    off = 16
    ps = ParamSet()
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            n = int(np.prod(dims)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(dims)
            off += 8 * n
            ps.add(name, Tensor(data, requires_grad=True))
    except (struct.error, ValueError) as exc:
        raise FormatViolation(f"truncated checkpoint: {exc}") from None
    if off != len(blob):
        raise FormatViolation("trailing bytes after checkpoint payload")
    return ps


def save_params(params: ParamSet, path) -> str:
    """Write a checkpoint and return its sha256 hex digest."""
    blob = dumps_params(params)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return hashlib.sha256(blob).hexdigest()


def load_params(path) -> ParamSet:
    return loads_params(Path(path).read_bytes())
