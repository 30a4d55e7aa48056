"""Byte streams to fixed-size grayscale rasters, and their PGM storage."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import EmptyStream, FormatViolation, IoFailure, ShapeMismatch

DEFAULT_SIZES = (32, 64, 128, 256, 360, 400)


class EntryKind(str, enum.Enum):
    DEX = "dex"
    MANIFEST = "manifest"
    RAW = "raw"


@dataclass(frozen=True)
class ByteStream:
    data: bytes
    source_id: str
    entry_kind: EntryKind = EntryKind.RAW

    def __post_init__(self):
        if len(self.data) < 1:
            raise EmptyStream(f"empty byte stream from {self.source_id!r}")

    def __len__(self):
        return len(self.data)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Square 8-bit raster; ``pixels`` is a (width, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, copy=True)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise ShapeMismatch(f"GrayImage must be square, got {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
                raise ValueError("pixel values must be integers in [0, 255]")
            px = px.astype(np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash(self.tobytes())


def resample_bytes(values: np.ndarray, target: int, method: str = "linear") -> np.ndarray:
    """Resample a 1-D byte vector to ``target`` entries with exact integer arithmetic.

    Target index j sits at source position j*(L-1)/(T-1).  Linear interpolation
    is rounded half-up; ``nearest`` picks the half-up rounded source index.
    """
    v = np.asarray(values, dtype=np.int64)
    n = v.size
    if n < 1:
        raise EmptyStream("cannot resample an empty stream")
    if n == 1:
        return np.full(target, v[0], dtype=np.uint8)
    if target == 1:
        return v[:1].astype(np.uint8)
    den = target - 1
    num = np.arange(target, dtype=np.int64) * (n - 1)
    i0 = num // den
    rem = num % den
    if method == "nearest":
        idx = (2 * num + den) // (2 * den)
        return v[idx].astype(np.uint8)
    if method != "linear":
        raise ValueError(f"unknown resampling method {method!r}")
    i1 = np.minimum(i0 + 1, n - 1)
    # value*den = v0*den + (v1-v0)*rem; round half-up: floor(value + 1/2)
    scaled = v[i0] * den + (v[i1] - v[i0]) * rem
    out = (2 * scaled + den) // (2 * den)
    return out.astype(np.uint8)


def bytes_to_image(stream: ByteStream | bytes, width: int, method: str = "linear") -> GrayImage:
    data = stream.data if isinstance(stream, ByteStream) else bytes(stream)
    if len(data) == 0:
        raise EmptyStream("cannot image an empty stream")
    if width < 1:
        raise ValueError("width must be positive")
    vec = np.frombuffer(data, dtype=np.uint8)
    return GrayImage(resample_bytes(vec, width * width, method).reshape(width, width))


def resize_image(image: GrayImage, width: int, method: str = "linear") -> GrayImage:
    """Re-run the vector resampler on an image's row-major pixels (used for upscaling)."""
    if image.width == width:
        return image
    return bytes_to_image(image.tobytes(), width, method)


# ---------------------------------------------------------------------------
# binary PGM
# ---------------------------------------------------------------------------

def encode_pgm(image: GrayImage) -> bytes:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.tobytes()


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def decode_pgm(blob: bytes) -> GrayImage:
    fields = []
    pos = 0
    for _ in range(4):
        m = _TOKEN.match(blob, pos)
        if m is None:
            raise FormatViolation("truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields
    if magic != b"P5":
        raise FormatViolation(f"not a binary PGM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatViolation("non-integer PGM header field") from None
    if maxval != 255:
        raise FormatViolation(f"maxval must be 255, got {maxval}")
    if w != h:
        raise FormatViolation(f"expected a square image, got {w}x{h}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise FormatViolation("missing whitespace after PGM header")
    raster = blob[pos + 1:]
    if len(raster) != w * h:
        raise FormatViolation(f"raster has {len(raster)} bytes, expected {w * h}")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy())


def write_image(image: GrayImage, path) -> bytes:
    """Write ``image`` as binary PGM; returns the bytes written."""
    blob = encode_pgm(image)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return blob


def read_image(path) -> GrayImage:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return decode_pgm(blob)
