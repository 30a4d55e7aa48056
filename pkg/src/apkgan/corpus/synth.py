"""Two-class synthetic byte corpus for desk-scale runs.

Benign streams are smooth: a couple of low-frequency sinusoids around mid-grey
with a light per-byte jitter.  Malware streams share that smooth carrier but
carry a heavier per-byte texture and, with probability ``HEADER_PROB``, a fixed
64-byte header.  Texture amplitudes of the two classes overlap on purpose, so a
classifier lands in the low/mid 0.9s rather than at a trivial 1.0.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .imaging import EntryKind
from .manifest import CorpusManifest, Label, build_corpus, split_corpus

BENIGN_TEXTURE = (0.0, 0.5)
MALWARE_TEXTURE = (0.45, 1.0)
TEXTURE_SCALE = 45.0
HEADER_PROB = 0.5
HEADER = bytes((0x64, 0x65, 0x78, 0x0A, 0x30, 0x33, 0x35, 0x00) * 8)


def _rng(seed: int, label: Label, index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (index << 1) | (label is Label.MALWARE)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def synth_stream(label: Label, width: int, rng: np.random.Generator) -> bytes:
    n = int(width * width * rng.uniform(0.9, 1.1))
    pos = np.arange(n) / n
    carrier = 128.0
    for amp in (50.0, 25.0):
        f = rng.uniform(1.0, 4.0)
        carrier = carrier + amp * rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * f * pos + rng.uniform(0, 2 * np.pi))
    lo, hi = MALWARE_TEXTURE if label is Label.MALWARE else BENIGN_TEXTURE
    texture = rng.uniform(lo, hi) * TEXTURE_SCALE * rng.standard_normal(n)
    values = np.clip(np.rint(carrier + texture), 0, 255).astype(np.uint8)
    if label is Label.MALWARE and rng.uniform() < HEADER_PROB:
        k = min(len(HEADER), n)
        values[:k] = np.frombuffer(HEADER[:k], dtype=np.uint8)
    return values.tobytes()


def synth_corpus(n_per_class: int, width: int, seed: int, out_dir, gan_fraction: float = 0.30,
                 test_fraction: float | None = None, size_set=None,
                 upscale_from: int | None = None) -> CorpusManifest:
    """Write ``2 * n_per_class`` raw streams, image them and split them.

    Streams land in ``out_dir/streams`` with a ``labels.csv``; the corpus is then
    built through the same path as real inputs, so perturbation and re-imaging work
    unchanged.  The returned manifest is already split (a held-out Test partition
    exists) and saved as ``out_dir/manifest.jsonl``.
    """
    if n_per_class < 20:
        raise ConfigError("synth_corpus needs at least 20 samples per class")
    out_dir = Path(out_dir)
    stream_dir = out_dir / "streams"
    stream_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for label in (Label.BENIGN, Label.MALWARE):
        for i in range(n_per_class):
            name = f"{label.value}_{i:05d}.bin"
            (stream_dir / name).write_bytes(synth_stream(label, width, _rng(seed, label, i)))
            lines.append(f"{name},{label.value}")
    (out_dir / "labels.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    labels = {ln.split(",")[0]: Label(ln.split(",")[1]) for ln in lines}
    sizes = tuple(size_set) if size_set else (width,)
    manifest = build_corpus(stream_dir, labels, sizes, seed, out_dir, source=EntryKind.RAW,
                            upscale_from=upscale_from)
    manifest = split_corpus(manifest, gan_fraction, test_fraction, seed)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest
