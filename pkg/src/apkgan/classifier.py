"""2-D CNN malware/benign classifier, training regimes and confusion-matrix metrics."""
from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CorpusManifest, GrayImage, Label, Origin, SampleRecord, Split, classifier_train_pool
from .errors import ConfigError, EmptyPool, LengthMismatch, SizeMismatch
from .tensor import (AdamState, ParamSet, ParamSpec, Tensor, adam_step, conv2d, init_params,
                     leaky_relu, linear, load_params, max_pool2d, mean, no_grad, parameters_grad,
                     reshape, save_params, sigmoid, softplus, sub, mul)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CnnSpec:
    image_size: int
    channels: tuple[int, ...] = (8, 16)
    kernel: int = 3
    pool: int = 2
    dense: int = 64
    slope: float = 0.2

    def __post_init__(self):
        shrink = self.pool ** len(self.channels)
        if self.image_size % shrink:
            raise ConfigError(f"image size {self.image_size} not divisible by {shrink}")

    @property
    def flat_features(self) -> int:
        side = self.image_size // self.pool ** len(self.channels)
        return self.channels[-1] * side * side

    def param_specs(self) -> list[ParamSpec]:
        specs, cin = [], 1
        for i, c in enumerate(self.channels, 1):
            specs += [ParamSpec(f"conv{i}.w", (c, cin, self.kernel, self.kernel)),
                      ParamSpec(f"conv{i}.b", (c,), "bias")]
            cin = c
        specs += [ParamSpec("fc.w", (self.flat_features, self.dense)), ParamSpec("fc.b", (self.dense,), "bias"),
                  ParamSpec("out.w", (self.dense, 1)), ParamSpec("out.b", (1,), "bias")]
        return specs


def to_input(images: Sequence[GrayImage] | np.ndarray) -> np.ndarray:
    """Stack images into an (N, 1, S, S) array scaled to [-1, 1]."""
    if isinstance(images, np.ndarray):
        arr = images.astype(np.float64)
    else:
        sizes = {im.width for im in images}
        if len(sizes) > 1:
            raise SizeMismatch(f"mixed image sizes {sorted(sizes)}")
        arr = np.stack([im.pixels for im in images]).astype(np.float64)
    if arr.ndim == 3:
        arr = arr[:, None]
    return arr / 127.5 - 1.0


def features(params: ParamSet, spec: CnnSpec, x: Tensor) -> Tensor:
    """Penultimate (dense) activations."""
    h = x
    for i in range(1, len(spec.channels) + 1):
        h = conv2d(h, params[f"conv{i}.w"], params[f"conv{i}.b"], 1, spec.kernel // 2)
        h = max_pool2d(leaky_relu(h, spec.slope), spec.pool)
    h = reshape(h, (x.shape[0], spec.flat_features))
    return leaky_relu(linear(h, params["fc.w"], params["fc.b"]), spec.slope)


def logits(params: ParamSet, spec: CnnSpec, x: Tensor) -> Tensor:
    return linear(features(params, spec, x), params["out.w"], params["out.b"])


def bce_with_logits(z: Tensor, y: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid(z) against 0/1 targets."""
    y = Tensor(np.asarray(y, dtype=np.float64).reshape(z.shape))
    return mean(sub(softplus(z), mul(y, z)))


@dataclass
class ClassifierModel:
    spec: CnnSpec
    params: ParamSet

    @classmethod
    def init(cls, spec: CnnSpec, seed: int) -> "ClassifierModel":
        return cls(spec, init_params(spec.param_specs(), seed))

    def predict_proba(self, images, batch: int = 256) -> np.ndarray:
        x = to_input(images)
        if x.shape[-1] != self.spec.image_size or x.shape[-2] != self.spec.image_size:
            raise SizeMismatch(f"model expects {self.spec.image_size}px images, got {x.shape[-1]}px")
        out = []
        with no_grad():
            for i in range(0, len(x), batch):
                out.append(sigmoid(logits(self.params, self.spec, Tensor(x[i:i + batch]))).data[:, 0])
        return np.concatenate(out) if out else np.zeros(0)

    def embed(self, images, batch: int = 256) -> np.ndarray:
        x = to_input(images)
        with no_grad():
            return np.concatenate([features(self.params, self.spec, Tensor(x[i:i + batch])).data
                                   for i in range(0, len(x), batch)])

    def save(self, path) -> str:
        path = Path(path)
        digest = save_params(self.params, path)
        spec = asdict(self.spec)
        path.with_suffix(".json").write_text(json.dumps(spec, indent=2) + "\n", encoding="utf-8")
        return digest

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        path = Path(path)
        raw = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        raw["channels"] = tuple(raw["channels"])
        return cls(CnnSpec(**raw), load_params(path))


def predict(model: ClassifierModel, images, threshold: float = 0.5) -> list[Label]:
    """Malware iff sigmoid output >= threshold."""
    return [Label.MALWARE if p >= threshold else Label.BENIGN for p in model.predict_proba(images)]


# ---------------------------------------------------------------------------
# regimes
# ---------------------------------------------------------------------------

class Regime(str, enum.Enum):
    MODEL1 = "model1"   # real only
    MODEL2 = "model2"   # GAN-generated only
    MODEL3 = "model3"   # real + generated


@dataclass(frozen=True)
class TrainRegime:
    regime: Regime = Regime.MODEL1
    synthetic_count: int | None = None   # per class; default = real pool size per class
    epochs: int = 30
    batch_size: int = 16
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0


class ImageStore:
    """Loads record images through the manifest and keeps an access log."""

    def __init__(self, manifest: CorpusManifest):
        self.manifest = manifest
        self.accessed: list[SampleRecord] = []
        self._cache: dict[str, GrayImage] = {}

    def load(self, record: SampleRecord) -> GrayImage:
        self.accessed.append(record)
        img = self._cache.get(record.image_path)
        if img is None:
            img = self._cache[record.image_path] = self.manifest.load_image(record)
        return img


def assemble_pool(manifest: CorpusManifest, regime: TrainRegime, image_size: int) -> list[SampleRecord]:
    real = classifier_train_pool(manifest, image_size=image_size)
    pool: list[SampleRecord] = []
    if regime.regime in (Regime.MODEL1, Regime.MODEL3):
        pool += real
    if regime.regime in (Regime.MODEL2, Regime.MODEL3):
        for label in (Label.BENIGN, Label.MALWARE):
            synth = [r for r in manifest.select(origin=Origin.SYNTHETIC, label=label, image_size=image_size)]
            k = regime.synthetic_count
            if k is None:
                k = sum(1 for r in real if r.label is label)
            pool += synth[:k]
    if not pool:
        raise EmptyPool(f"{regime.regime.value}: no training records at size {image_size}")
    return pool


def train_classifier(manifest: CorpusManifest, regime: TrainRegime, spec: CnnSpec,
                     store: ImageStore | None = None, out_dir=None):
    """Train the CNN on the regime's pool.

    Returns ``(model, curve)`` where curve is a list of per-epoch dicts
    (epoch, loss, accuracy).  With ``out_dir`` the checkpoint and ``curve.csv``
    are written there.
    """
    store = store or ImageStore(manifest)
    pool = assemble_pool(manifest, regime, spec.image_size)
    images = [store.load(r) for r in pool]
    x_all = to_input(images)
    if x_all.shape[-1] != spec.image_size:
        raise SizeMismatch(f"pool images are {x_all.shape[-1]}px, spec wants {spec.image_size}px")
    y_all = np.array([1.0 if r.label is Label.MALWARE else 0.0 for r in pool])

    model = ClassifierModel.init(spec, regime.seed)
    state = AdamState(alpha=regime.alpha, beta1=regime.beta1, beta2=regime.beta2)
    rng = np.random.Generator(np.random.Philox(key=[regime.seed & 0xFFFFFFFFFFFFFFFF, 0xC1A55]))
    curve = []
    n = len(pool)
    for epoch in range(1, regime.epochs + 1):
        order = rng.permutation(n)
        total, correct = 0.0, 0
        for i in range(0, n, regime.batch_size):
            idx = order[i:i + regime.batch_size]
            z = logits(model.params, spec, Tensor(x_all[idx]))
            loss = bce_with_logits(z, y_all[idx])
            adam_step(model.params, parameters_grad(loss, model.params.tensors()), state)
            total += loss.item() * len(idx)
            correct += int(np.sum((z.data[:, 0] >= 0) == (y_all[idx] == 1)))
        curve.append({"epoch": epoch, "loss": total / n, "accuracy": correct / n})
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        model.save(out_dir / "classifier.ckpt")
        write_curve(curve, out_dir / "curve.csv")
    return model, curve


def write_curve(curve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy"])
        for row in curve:
            w.writerow([row["epoch"], repr(row["loss"]), repr(row["accuracy"])])


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    """Rates in [0, 1]; ``None`` marks a metric whose denominator is zero."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    specificity: float | None


def confusion(predictions: Sequence, truth: Sequence) -> ConfusionMatrix:
    """Counts with Malware as the positive class."""
    if len(predictions) != len(truth):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truth)} labels")
    tp = fp = fn = tn = 0
    for p, t in zip(predictions, truth):
        p, t = Label.parse(p), Label.parse(t)
        if p is Label.MALWARE:
            if t is Label.MALWARE:
                tp += 1
            else:
                fp += 1
        elif t is Label.MALWARE:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def f1_score(precision: float | None, recall: float | None) -> float | None:
    """Harmonic mean of precision and recall; None when either is undefined or both are 0."""
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = f1_score(precision, recall)
    return MetricsReport(
        accuracy=_ratio(cm.tp + cm.tn, cm.total),
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
    )


def report_dict(cm: ConfusionMatrix, report: MetricsReport | None = None) -> dict:
    report = report or metrics(cm)
    out = asdict(report)
    out.update(tp=cm.tp, fp=cm.fp, fn=cm.fn, tn=cm.tn)
    return out


def evaluate(model: ClassifierModel, manifest: CorpusManifest, split: Split = Split.TEST,
             threshold: float = 0.5, store: ImageStore | None = None):
    """Confusion matrix and metrics over one split of the real/perturbed records."""
    store = store or ImageStore(manifest)
    records = manifest.select(split=split, image_size=model.spec.image_size,
                              origin={Origin.REAL, Origin.PERTURBED})
    if not records:
        raise EmptyPool(f"no {split.value} records at size {model.spec.image_size}")
    preds = predict(model, [store.load(r) for r in records], threshold)
    cm = confusion(preds, [r.label for r in records])
    return cm, metrics(cm)
