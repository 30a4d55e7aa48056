"""Synthetic byte-level perturbations standing in for app obfuscation.

Five transforms, applied in a fixed order so results depend only on
(stream, kinds, seed, params):

* ``byte_remap``     - seeded permutation of ASCII letters (identifier renaming)
* ``block_reorder``  - shuffle fixed-size blocks (basic-block reordering)
* ``segment_encrypt``- XOR-keystream one segment and prepend a short stub
* ``xor_mask``       - XOR every byte with a single key
* ``junk_insertion`` - insert random bytes at random offsets

Output length never exceeds twice the input length.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from ..errors import ConfigError, EmptyStream
from .imaging import ByteStream


class Perturbation(str, enum.Enum):
    BYTE_REMAP = "byte_remap"
    BLOCK_REORDER = "block_reorder"
    SEGMENT_ENCRYPT = "segment_encrypt"
    XOR_MASK = "xor_mask"
    JUNK_INSERTION = "junk_insertion"


ORDER = tuple(Perturbation)
STUB_MAX = 16


@dataclass(frozen=True)
class PerturbParams:
    junk_bytes: int | None = None    # default: L // 10
    block_size: int | None = None    # default: max(1, L // 8)
    xor_key: int | None = None       # default: seeded nonzero key
    segment_fraction: float = 0.25


def parse_kinds(kinds) -> tuple[Perturbation, ...]:
    if isinstance(kinds, str):
        kinds = [k for k in kinds.split(",") if k.strip()]
    out = {Perturbation(str(getattr(k, "value", k)).strip().lower()) for k in kinds}
    if not out:
        raise ConfigError("at least one perturbation kind is required")
    return tuple(k for k in ORDER if k in out)


def _rng(seed: int, kind: Perturbation) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, ORDER.index(kind) + 1], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _remap(b: np.ndarray, rng) -> np.ndarray:
    table = np.arange(256, dtype=np.uint8)
    for lo in (ord("a"), ord("A")):
        table[lo:lo + 26] = lo + rng.permutation(26)
    return table[b]


def _reorder(b: np.ndarray, block: int, rng) -> np.ndarray:
    nblocks = -(-b.size // block)
    if nblocks <= 1:
        return b.copy()
    pieces = [b[i * block:(i + 1) * block] for i in range(nblocks)]
    return np.concatenate([pieces[i] for i in rng.permutation(nblocks)])


def _encrypt(b: np.ndarray, frac: float, rng) -> np.ndarray:
    n = b.size
    seg = max(1, int(n * frac))
    start = int(rng.integers(0, n - seg + 1))
    out = b.copy()
    out[start:start + seg] ^= rng.integers(0, 256, size=seg, dtype=np.uint8)
    stub = rng.integers(0, 256, size=min(STUB_MAX, n), dtype=np.uint8)
    return np.concatenate([stub, out])


def _junk(b: np.ndarray, k: int, rng) -> np.ndarray:
    if k <= 0:
        return b.copy()
    junk = rng.integers(0, 256, size=k, dtype=np.uint8)
    where = np.sort(rng.integers(0, b.size + 1, size=k))
    return np.insert(b, where, junk)


def perturb_stream(stream: ByteStream, kinds: Iterable, seed: int,
                   params: PerturbParams = PerturbParams()) -> ByteStream:
    kinds = parse_kinds(kinds)
    src = np.frombuffer(stream.data, dtype=np.uint8)
    n = src.size
    if n == 0:
        raise EmptyStream("cannot perturb an empty stream")
    b = src.copy()
    for kind in kinds:
        rng = _rng(seed, kind)
        if kind is Perturbation.BYTE_REMAP:
            b = _remap(b, rng)
        elif kind is Perturbation.BLOCK_REORDER:
            b = _reorder(b, params.block_size or max(1, n // 8), rng)
        elif kind is Perturbation.SEGMENT_ENCRYPT:
            b = _encrypt(b, params.segment_fraction, rng)
        elif kind is Perturbation.XOR_MASK:
            key = params.xor_key if params.xor_key is not None else int(rng.integers(1, 256))
            b = b ^ np.uint8(key & 0xFF)
        elif kind is Perturbation.JUNK_INSERTION:
            want = n // 10 if params.junk_bytes is None else params.junk_bytes
            b = _junk(b, min(want, 2 * n - b.size), rng)
    tag = "+".join(k.value for k in kinds)
    return replace(stream, data=b.tobytes(), source_id=f"{stream.source_id}|perturbed:{tag}:{seed}")


def perturb_manifest(manifest, kinds, seed: int, fraction: float = 0.5, mode: str = "duplicate",
                     params: PerturbParams = PerturbParams(), method: str = "linear"):
    """Perturb a seeded ``fraction`` of each class's real sources and image them.

    ``mode="duplicate"`` adds Perturbed records next to the originals;
    ``mode="replace"`` drops the originals of the perturbed sources.  Source bytes
    are re-read from the manifest's ``input_dir``.
    """
    from pathlib import Path

    from .manifest import Label, Origin, SampleRecord, sha256_hex, streams_for_file
    from .imaging import EntryKind, bytes_to_image, write_image

    if mode not in ("duplicate", "replace"):
        raise ConfigError(f"unknown perturbation mode {mode!r}")
    if not manifest.input_dir:
        raise ConfigError("manifest does not record its input directory")
    kinds = parse_kinds(kinds)
    rng = np.random.Generator(np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF))
    real = [r for r in manifest.records if r.origin is Origin.REAL]
    chosen: set[str] = set()
    for label in Label:
        sources = sorted({r.source_id for r in real if r.label is label})
        k = int(np.floor(fraction * len(sources) + 0.5))
        chosen.update(sources[i] for i in sorted(rng.permutation(len(sources))[:k]))

    new_records = []
    by_source: dict[str, list] = {}
    for r in real:
        by_source.setdefault(r.source_id, []).append(r)
    for sid in sorted(chosen):
        recs = by_source[sid]
        fname = sid.split("!", 1)[0]
        stream = streams_for_file(Path(manifest.input_dir) / fname, EntryKind(manifest.source))
        pert = perturb_stream(stream, kinds, seed, params)
        for r in recs:
            image = bytes_to_image(pert, r.image_size, method)
            rel = str(Path(r.image_path).with_name(Path(r.image_path).stem + f".p{seed}.pgm"))
            blob = write_image(image, manifest.root / rel)
            new_records.append(SampleRecord(rel, r.label, r.split, sha256_hex(blob),
                                            Origin.PERTURBED, pert.source_id, r.image_size))
    kept = manifest.records
    if mode == "replace":
        kept = [r for r in kept if not (r.origin is Origin.REAL and r.source_id in chosen)]
    return manifest.with_records(list(kept) + new_records)
