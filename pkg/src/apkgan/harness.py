"""Experiment matrix: sizes x regimes x GAN variants x seeds.

A *cell* is one (image_size, regime, gan_variant, seed) combination.  Cells that
need synthetic images share the per-class GANs of their (size, variant, seed)
group, so Model2 and Model3 are trained on the same gated batch.  Everything a
cell produces is a function of the config fields listed in ``cell_hash``; wall
times are kept out of ``results.csv`` so reruns compare byte for byte.

Run layout::

    <out_dir>/corpus/<hash>/       images + split manifest for one seed
    <out_dir>/gan_logs/<hash>/     per-class GAN checkpoints, train logs, gated synthetics
    <out_dir>/cells/<hash>.json    per-cell report (confusion matrix, metrics, artifacts)
    <out_dir>/results.csv, timings.csv, failures.csv, fid_series.csv, artifacts.json
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import yaml

from .classifier import CnnSpec, ConfusionMatrix, Regime, TrainRegime, evaluate, metrics, train_classifier
from .corpus import (DEFAULT_SIZES, CorpusManifest, EntryKind, Label, Origin, SampleRecord, Split,
                     build_corpus, load_label_map, resize_image, split_corpus, synth_corpus)
from .corpus.manifest import store_image
from .errors import ApkganError, ConfigError, UnmatchedCells
from .fid import RandomConvFeatures, embed, fid_infinity, series_from_values
from .gan import (GanConfig, GanVariant, TrainState, fid_gated_generate, generate, images_to_array,
                  train_gan_on_array)

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["image_size", "regime", "gan_variant", "seed", "accuracy", "precision", "recall",
                  "f1", "specificity", "fid_inf_of_training_synthetics"]
METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "specificity")


class CellTimeout(ApkganError):
    """A cell exceeded its wall-clock budget."""


@dataclass
class ExperimentConfig:
    out_dir: str = "runs/default"
    # corpus: a real labelled directory, or the synthetic corpus when input_dir is empty
    input_dir: str | None = None
    labels: str | None = None
    source: str = "dex"
    synth_n: int = 100
    synth_width: int = 32
    sizes: tuple = DEFAULT_SIZES
    upscale_above: int | None = 128     # None: convert every size natively
    gan_fraction: float = 0.30
    test_fraction: float | None = None
    seeds: tuple = (0,)
    regimes: tuple = ("model1", "model2", "model3")
    variants: tuple = ("wgan-gp", "dcgan")
    # GAN
    gan_epochs: int = 100
    gan_batch_size: int = 32
    gan_alpha: float = 1e-4
    gan_lam: float = 10.0
    gan_n_critic: int = 5
    latent_dim: int = 100
    # FID gate and series
    fid_threshold: float = 90.0
    fid_dim: int = 8
    fid_seed: int = 0
    n_generate: int = 1000
    gate_rounds: int = 3
    gate_epochs: int = 10
    fid_every: int = 10
    fid_n: int = 200
    # classifier
    clf_epochs: int = 30
    clf_batch_size: int = 16
    clf_alpha: float = 1e-3
    synthetic_count: int | None = None
    # execution
    cell_timeout_s: float | None = None

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.regimes = tuple(Regime(r).value for r in self.regimes)
        self.variants = tuple(GanVariant(v).value for v in self.variants)
        if not self.sizes:
            raise ConfigError("sizes must not be empty")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if not self.regimes:
            raise ConfigError("regimes must not be empty")
        if any(r != "model1" for r in self.regimes) and not self.variants:
            raise ConfigError("regimes model2/model3 need at least one GAN variant")
        if not 0.2 <= self.gan_fraction <= 0.35:
            raise ConfigError("gan_fraction must lie in [0.2, 0.35]")
        if self.input_dir and not self.labels:
            raise ConfigError("a real input_dir needs a labels file")
        EntryKind(self.source)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh) or {}
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("sizes", "seeds", "regimes", "variants"):
            d[k] = list(d[k])
        return d

    def gan_size(self, size: int) -> int:
        return size if not self.upscale_above or size <= self.upscale_above else self.upscale_above

    def corpus_sizes(self) -> tuple:
        return tuple(sorted(set(self.sizes) | {self.gan_size(s) for s in self.sizes}))


# Small-real-pool augmentation setting on the synthetic corpus: 100 samples per
# class, half held out for test, so 50 real training images per class of which
# 30 feed each class's GAN.  The GAN step size is 1e-3 rather than the 1e-4
# default: with ~4 generator steps per epoch, 1e-4 leaves the generator near
# noise (FID_inf ~300) inside a desk-scale epoch budget.
AUGMENTATION_PRESET = dict(
    synth_n=100, synth_width=32, sizes=(32,), test_fraction=0.5,
    regimes=("model1", "model2", "model3"), variants=("wgan-gp",), seeds=(0, 1, 2, 3, 4),
    gan_epochs=200, gan_batch_size=8, gan_alpha=1e-3,
    n_generate=200, gate_rounds=2, gate_epochs=0, fid_every=50, fid_n=200,
)


@dataclass(frozen=True)
class Cell:
    image_size: int
    regime: str
    gan_variant: str | None
    seed: int

    @property
    def key(self) -> tuple:
        return (self.image_size, self.regime, self.gan_variant or "", self.seed)


@dataclass
class ResultRow:
    image_size: int
    regime: str
    gan_variant: str | None
    seed: int
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    specificity: float | None
    fid_inf_of_training_synthetics: float | None = None
    wall_time_s: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRow":
        return cls(**{k: d.get(k) for k in (f.name for f in fields(cls)) if k in d})


@dataclass
class RunSummary:
    rows: list[ResultRow]
    failures: list[dict]
    ran: int
    skipped: int
    out_dir: Path

    @property
    def all_failed(self) -> bool:
        return not self.rows and bool(self.failures)


# ---------------------------------------------------------------------------
# hashing
# ---------------------------------------------------------------------------

def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


_CORPUS_KEYS = ("input_dir", "labels", "source", "synth_n", "synth_width", "upscale_above",
                "gan_fraction", "test_fraction")
_GAN_KEYS = ("gan_epochs", "gan_batch_size", "gan_alpha", "gan_lam", "gan_n_critic", "latent_dim",
             "fid_threshold", "fid_dim", "fid_seed", "n_generate", "gate_rounds", "gate_epochs",
             "fid_every", "fid_n")
_CLF_KEYS = ("clf_epochs", "clf_batch_size", "clf_alpha", "synthetic_count")


def corpus_hash(cfg: ExperimentConfig, seed: int) -> str:
    d = {k: getattr(cfg, k) for k in _CORPUS_KEYS}
    return _digest({**d, "sizes": list(cfg.corpus_sizes()), "seed": seed})


def gan_hash(cfg: ExperimentConfig, size: int, variant: str, seed: int) -> str:
    d = {k: getattr(cfg, k) for k in _GAN_KEYS}
    return _digest({**d, "corpus": corpus_hash(cfg, seed), "gan_size": cfg.gan_size(size),
                    "size": size, "variant": variant, "seed": seed})


def cell_hash(cfg: ExperimentConfig, cell: Cell) -> str:
    d = {k: getattr(cfg, k) for k in _CLF_KEYS}
    d.update(corpus=corpus_hash(cfg, cell.seed), size=cell.image_size, regime=cell.regime,
             seed=cell.seed)
    if cell.gan_variant is not None:
        d["gan"] = gan_hash(cfg, cell.image_size, cell.gan_variant, cell.seed)
    return _digest(d)


def enumerate_cells(cfg: ExperimentConfig) -> list[Cell]:
    cells = []
    for size in cfg.sizes:
        for regime in cfg.regimes:
            variants = [None] if regime == "model1" else list(cfg.variants)
            for v in variants:
                for seed in cfg.seeds:
                    cells.append(Cell(size, regime, v, seed))
    return sorted(cells, key=lambda c: c.key)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def prepare_corpus(cfg: ExperimentConfig, seed: int) -> CorpusManifest:
    """Build (or reuse) the split corpus for one seed."""
    root = Path(cfg.out_dir) / "corpus" / corpus_hash(cfg, seed)
    path = root / "manifest.jsonl"
    if path.exists():
        return CorpusManifest.load(path)
    sizes = cfg.corpus_sizes()
    if cfg.input_dir:
        labels = load_label_map(cfg.labels)
        manifest = build_corpus(cfg.input_dir, labels, sizes, seed, root, cfg.source,
                                upscale_from=cfg.upscale_above, manifest_name="converted.jsonl")
        manifest = split_corpus(manifest, cfg.gan_fraction, cfg.test_fraction, seed)
        manifest.save(path)
        return manifest
    return synth_corpus(cfg.synth_n, cfg.synth_width, seed, root, cfg.gan_fraction, cfg.test_fraction,
                        size_set=sizes, upscale_from=cfg.upscale_above)


def _class_seed(seed: int, label: Label) -> int:
    return 2 * seed + (1 if label is Label.MALWARE else 0)


def _deadline_check(deadline: float | None) -> None:
    if deadline is not None and time.monotonic() > deadline:
        raise CellTimeout("wall-clock budget exceeded")


def train_group_gans(cfg: ExperimentConfig, manifest: CorpusManifest, size: int, variant: str, seed: int,
                     deadline: float | None = None) -> dict:
    """Train both class GANs, gate their output and store the synthetics.

    Returns the group record (also written to ``done.json``) with synthetic
    records, FID values and checkpoint hashes.  A finished group is reused.
    """
    gdir = Path(cfg.out_dir) / "gan_logs" / gan_hash(cfg, size, variant, seed)
    done = gdir / "done.json"
    if done.exists():
        return json.loads(done.read_text(encoding="utf-8"))
    gsize = cfg.gan_size(size)
    extractor = RandomConvFeatures(seed=cfg.fid_seed, dim=cfg.fid_dim)
    out = {"size": size, "gan_size": gsize, "variant": variant, "seed": seed, "classes": {}}
    for label in (Label.BENIGN, Label.MALWARE):
        ldir = gdir / label.value
        cs = _class_seed(seed, label)
        gcfg = GanConfig(lam=cfg.gan_lam, n_critic=cfg.gan_n_critic, batch_size=cfg.gan_batch_size,
                         alpha=cfg.gan_alpha, latent_dim=cfg.latent_dim, epochs=cfg.gan_epochs,
                         image_size=gsize, variant=variant, seed=cs)
        train_recs = manifest.select(label=label, split=Split.GAN_TRAIN, origin=Origin.REAL, image_size=gsize)
        ref_recs = manifest.select(label=label, split={Split.GAN_TRAIN, Split.CLASSIFIER_TRAIN},
                                   origin=Origin.REAL, image_size=gsize)
        data = images_to_array([manifest.load_image(r) for r in train_recs])
        reference = embed([manifest.load_image(r) for r in ref_recs], extractor, "real")
        fid_epochs, fid_values = [], []

        def on_epoch(epoch, model):
            _deadline_check(deadline)
            if cfg.fid_every and epoch % cfg.fid_every == 0:
                fake = embed(generate(model, cfg.fid_n, cs), extractor)
                value = fid_infinity(reference, fake, seed=cs).value
                fid_epochs.append(epoch)
                fid_values.append(value)
                return value
            return None

        state = TrainState.fresh(gcfg)
        model, train_log, state = train_gan_on_array(data, gcfg, label, ldir, state=state, on_epoch=on_epoch)
        extra = {"epochs": gcfg.epochs}

        def train_round(m):
            nonlocal state
            _deadline_check(deadline)
            rcfg = GanConfig.from_dict({**gcfg.to_dict(), "epochs": cfg.gate_epochs})
            m, _, state = train_gan_on_array(data, rcfg, label, None, model=m, state=state,
                                             epoch_offset=extra["epochs"])
            extra["epochs"] += cfg.gate_epochs
            return m

        gate = fid_gated_generate(model, reference, extractor, cfg.fid_threshold, cfg.gate_rounds,
                                  cfg.n_generate, cs, train_round=train_round if cfg.gate_epochs else None)
        records = []
        for i, img in enumerate(gate.images):
            if img.width != size:
                img = resize_image(img, size)
            rel = os.path.relpath(ldir / "synthetic" / f"{label.value}_{i:05d}.pgm", manifest.root)
            digest = store_image(img, manifest.root, rel)
            records.append(SampleRecord(rel, label, Split.CLASSIFIER_TRAIN, digest, Origin.SYNTHETIC,
                                        f"gan:{variant}:{gsize}:{cs}", size).to_json())
        series = series_from_values(fid_epochs, fid_values)
        series.write_csv(ldir / "fid_series.csv")
        out["classes"][label.value] = {
            "fid_inf": gate.fid_inf, "accepted": gate.accepted, "rounds": gate.rounds,
            "history": gate.history, "epochs_trained": extra["epochs"],
            "checkpoints": [[e, h] for e, h in train_log.checkpoints],
            "fid_series": [[e, v, a] for e, v, a in zip(series.epochs, series.values, series.is_anomaly)],
            "records": records,
        }
    _atomic_write(done, json.dumps(out, indent=1))
    return out


def run_cell(cfg: ExperimentConfig, cell: Cell, manifest: CorpusManifest, group: dict | None) -> dict:
    t0 = time.perf_counter()
    cdir = Path(cfg.out_dir) / "cells" / cell_hash(cfg, cell)
    fid_value = None
    if group is not None:
        recs = [SampleRecord.from_dict(json.loads(r)) for c in group["classes"].values() for r in c["records"]]
        manifest = manifest.with_records(list(manifest.records) + recs)
        fid_value = statistics.fmean(c["fid_inf"] for c in group["classes"].values())
    regime = TrainRegime(Regime(cell.regime), cfg.synthetic_count, cfg.clf_epochs, cfg.clf_batch_size,
                         cfg.clf_alpha, seed=cell.seed)
    model, _ = train_classifier(manifest, regime, CnnSpec(image_size=cell.image_size), out_dir=cdir)
    cm, report = evaluate(model, manifest, Split.TEST)
    row = ResultRow(cell.image_size, cell.regime, cell.gan_variant, cell.seed,
                    *(getattr(report, k) for k in METRIC_NAMES), fid_value, time.perf_counter() - t0)
    ckpt = cdir / "classifier.ckpt"
    return {
        "status": "ok",
        "cell": asdict(cell),
        "hash": cell_hash(cfg, cell),
        "confusion": asdict(cm),
        "row": asdict(row),
        "classifier_sha256": hashlib.sha256(ckpt.read_bytes()).hexdigest(),
        "gan_checkpoints": None if group is None else
        {k: c["checkpoints"] for k, c in group["classes"].items()},
    }


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _cell_file(cfg: ExperimentConfig, cell: Cell) -> Path:
    return Path(cfg.out_dir) / "cells" / f"{cell_hash(cfg, cell)}.json"


def _run_job(cfg: ExperimentConfig, cells: list[Cell]) -> int:
    """Run the cells of one (size, variant, seed) group in order; returns cells attempted."""
    manifest = None
    group = None
    for cell in cells:
        deadline = time.monotonic() + cfg.cell_timeout_s if cfg.cell_timeout_s else None
        try:
            if manifest is None:
                manifest = prepare_corpus(cfg, cell.seed)
            if cell.gan_variant is not None and group is None:
                group = train_group_gans(cfg, manifest, cell.image_size, cell.gan_variant, cell.seed, deadline)
            _deadline_check(deadline)
            result = run_cell(cfg, cell, manifest, group)
        except Exception as exc:  # noqa: BLE001 - a cell failure must not stop the run
            log.warning("cell %s failed: %s", cell, exc)
            result = {"status": "failed", "cell": asdict(cell), "hash": cell_hash(cfg, cell),
                      "reason": f"{type(exc).__name__}: {exc}"}
        _atomic_write(_cell_file(cfg, cell), json.dumps(result, indent=1))
    return len(cells)


def _load_cell(cfg: ExperimentConfig, cell: Cell) -> dict | None:
    p = _cell_file(cfg, cell)
    if not p.exists():
        return None
    return json.loads(p.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, workers: int = 1, resume: bool = True) -> RunSummary:
    """Run every pending cell and (re)write the merged tables.

    Completed cells are skipped when ``resume``; failed cells are retried.
    Corpora are built in this process first so parallel jobs never race on them.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True), encoding="utf-8")
    cells = enumerate_cells(cfg)
    pending = []
    for cell in cells:
        prev = _load_cell(cfg, cell) if resume else None
        if prev is None or prev.get("status") != "ok":
            pending.append(cell)
    for seed in sorted({c.seed for c in pending}):
        prepare_corpus(cfg, seed)

    groups: dict[tuple, list[Cell]] = {}
    for cell in pending:
        key = (cell.image_size, cell.gan_variant or "", cell.seed)
        groups.setdefault(key, []).append(cell)
    jobs = [groups[k] for k in sorted(groups)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_run_job, [cfg] * len(jobs), jobs))
    else:
        for job in jobs:
            _run_job(cfg, job)

    rows, failures, timings = [], [], []
    for cell in cells:
        res = _load_cell(cfg, cell)
        if res is None or res["status"] != "ok":
            failures.append({**asdict(cell), "reason": "missing" if res is None else res["reason"]})
            continue
        row = ResultRow.from_dict(res["row"])
        rows.append(row)
        timings.append((res["hash"], row))
    write_results_csv(rows, out / "results.csv")
    _write_timings(timings, out / "timings.csv")
    _write_failures(failures, out / "failures.csv")
    fid_rows = write_fid_series(cfg, out / "fid_series.csv")
    emit_plot_data(rows, fid_rows, out / "plots")
    _write_artifacts(cfg, cells, out / "artifacts.json")
    return RunSummary(rows, failures, len(pending), len(cells) - len(pending), out)


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_results_csv(rows: Sequence[ResultRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in RESULT_COLUMNS])


def read_results_csv(path) -> list[ResultRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for d in csv.DictReader(fh):
            vals = {}
            for k in RESULT_COLUMNS:
                v = d.get(k, "")
                if k in ("image_size", "seed"):
                    vals[k] = int(v)
                elif k in ("regime", "gan_variant"):
                    vals[k] = v or None
                else:
                    vals[k] = float(v) if v != "" else None
            rows.append(ResultRow(**vals))
    return rows


def _write_timings(items, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_hash", "image_size", "regime", "gan_variant", "seed", "wall_time_s"])
        for h, r in items:
            w.writerow([h, r.image_size, r.regime, r.gan_variant or "", r.seed, f"{r.wall_time_s:.3f}"])


def _write_failures(failures, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_size", "regime", "gan_variant", "seed", "reason"])
        for f in failures:
            w.writerow([f["image_size"], f["regime"], f["gan_variant"] or "", f["seed"], f["reason"]])


def _gan_groups(cfg: ExperimentConfig):
    seen = set()
    for cell in enumerate_cells(cfg):
        if cell.gan_variant is None:
            continue
        key = (cell.image_size, cell.gan_variant, cell.seed)
        if key not in seen:
            seen.add(key)
            yield key


FID_SERIES_COLUMNS = ["gan_variant", "image_size", "seed", "label", "epoch", "fid_inf", "is_anomaly"]


def collect_fid_series(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for size, variant, seed in _gan_groups(cfg):
        done = Path(cfg.out_dir) / "gan_logs" / gan_hash(cfg, size, variant, seed) / "done.json"
        if not done.exists():
            continue
        g = json.loads(done.read_text(encoding="utf-8"))
        for label, c in sorted(g["classes"].items()):
            for e, v, a in c["fid_series"]:
                rows.append({"gan_variant": variant, "image_size": size, "seed": seed, "label": label,
                             "epoch": e, "fid_inf": v, "is_anomaly": int(a)})
    return rows


def write_fid_series(cfg: ExperimentConfig, path) -> list[dict]:
    rows = collect_fid_series(cfg)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, FID_SERIES_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "fid_inf": repr(float(r["fid_inf"]))})
    return rows


def _write_artifacts(cfg: ExperimentConfig, cells, path) -> None:
    out = Path(cfg.out_dir)
    arts = {"results": "results.csv", "timings": "timings.csv", "failures": "failures.csv",
            "fid_series": "fid_series.csv", "config": "config.yaml",
            "plots": ["plots/fid_vs_epoch.csv", "plots/f1_vs_size.csv", "plots/README.md"],
            "corpora": sorted(f"corpus/{corpus_hash(cfg, s)}/manifest.jsonl" for s in cfg.seeds),
            "gan_logs": sorted(f"gan_logs/{gan_hash(cfg, *k)}" for k in _gan_groups(cfg)),
            "cells": {}}
    for cell in cells:
        h = cell_hash(cfg, cell)
        if (out / "cells" / f"{h}.json").exists():
            arts["cells"][f"{cell.image_size}/{cell.regime}/{cell.gan_variant or '-'}/{cell.seed}"] = {
                "report": f"cells/{h}.json", "classifier": f"cells/{h}/classifier.ckpt"}
    _atomic_write(Path(path), json.dumps(arts, indent=1, sort_keys=True))


def recompute_f1(cell_json: dict) -> float | None:
    """f1 from a stored confusion matrix, for cross-checking results.csv."""
    return metrics(ConfusionMatrix(**cell_json["confusion"])).f1


# ---------------------------------------------------------------------------
# variant comparison and plot data
# ---------------------------------------------------------------------------

@dataclass
class VariantDiff:
    image_size: int
    seed: int
    wgan_f1: float | None
    dcgan_f1: float | None

    @property
    def diff(self) -> float:
        # an undefined f1 (no positive predictions and no positives) counts as 0
        return (self.wgan_f1 or 0.0) - (self.dcgan_f1 or 0.0)


@dataclass
class VariantComparison:
    diffs: list[VariantDiff]
    regime: str = "model2"

    @property
    def n_positive(self) -> int:
        return sum(d.diff > 0 for d in self.diffs)

    @property
    def n_negative(self) -> int:
        return sum(d.diff < 0 for d in self.diffs)

    @property
    def n_zero(self) -> int:
        return sum(d.diff == 0 for d in self.diffs)

    @property
    def median_diff(self) -> float:
        return statistics.median(d.diff for d in self.diffs)

    def summary(self) -> str:
        lines = [f"WGAN-GP minus DCGAN, {self.regime} f1, {len(self.diffs)} matched cells"]
        for d in self.diffs:
            lines.append(f"  size {d.image_size:>4} seed {d.seed:>3}: {d.diff:+.4f}")
        lines.append(f"positive {self.n_positive}, negative {self.n_negative}, zero {self.n_zero}; "
                     f"median {self.median_diff:+.4f}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image_size", "seed", "wgan_f1", "dcgan_f1", "diff"])
            for d in self.diffs:
                w.writerow([d.image_size, d.seed, _fmt(d.wgan_f1), _fmt(d.dcgan_f1), repr(d.diff)])


def compare_variants(results: Sequence[ResultRow], regime: str = "model2") -> VariantComparison:
    """Paired per-(size, seed) f1 differences WGAN-GP minus DCGAN."""
    by = {GanVariant.WGAN_GP.value: {}, GanVariant.DCGAN.value: {}}
    for r in results:
        if r.regime == regime and r.gan_variant in by:
            by[r.gan_variant][(r.image_size, r.seed)] = r.f1
    w, d = by[GanVariant.WGAN_GP.value], by[GanVariant.DCGAN.value]
    unmatched = sorted(set(w) ^ set(d))
    if unmatched:
        raise UnmatchedCells(f"{regime} cells without a partner variant: {unmatched}")
    if not w:
        raise UnmatchedCells(f"no {regime} rows for both variants")
    return VariantComparison([VariantDiff(k[0], k[1], w[k], d[k]) for k in sorted(w)], regime)


PLOT_README = """# Plot data

fid_vs_epoch.csv
  gan_variant, image_size, seed, label, epoch, fid_inf, is_anomaly
  One row per FID evaluation during GAN training.  is_anomaly marks points more
  than 3 scaled MADs from the series median; plot the clean points per variant.

f1_vs_size.csv
  regime, gan_variant, image_size, n_seeds, f1_median, f1_min, f1_max
  One row per (regime, variant, size); gan_variant is empty for model1.
  Undefined f1 values are skipped; f1_median is empty when none remain.
"""


def emit_plot_data(results: Sequence[ResultRow], fid_series: Sequence[dict], out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fid_path = out / "fid_vs_epoch.csv"
    with open(fid_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, FID_SERIES_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in fid_series:
            w.writerow(r)
    groups: dict[tuple, list] = {}
    for r in results:
        groups.setdefault((r.regime, r.gan_variant or "", r.image_size), []).append(r.f1)
    f1_path = out / "f1_vs_size.csv"
    with open(f1_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "gan_variant", "image_size", "n_seeds", "f1_median", "f1_min", "f1_max"])
        for key in sorted(groups):
            vals = [v for v in groups[key] if v is not None]
            stats = [statistics.median(vals), min(vals), max(vals)] if vals else [None, None, None]
            w.writerow([*key, len(groups[key]), *(_fmt(s) for s in stats)])
    readme = out / "README.md"
    readme.write_text(PLOT_README, encoding="utf-8")
    return {"fid_vs_epoch": fid_path, "f1_vs_size": f1_path, "readme": readme}


def median_f1(rows: Sequence[ResultRow], regime: str, variant: str | None = None, size: int | None = None):
    vals = [r.f1 or 0.0 for r in rows
            if r.regime == regime and (variant is None or r.gan_variant == variant)
            and (size is None or r.image_size == size)]
    return statistics.median(vals) if vals else None
