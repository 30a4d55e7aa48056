"""Labeled image catalogs: records, JSON-lines persistence, corpus building and splits."""
from __future__ import annotations

import datetime as _dt
import enum
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ..errors import ApkganError, ConfigError, FormatViolation, InsufficientSamples
from .archive import ARCHIVE_SUFFIXES, extract_streams
from .imaging import ByteStream, EntryKind, GrayImage, bytes_to_image, read_image, resize_image, write_image

log = logging.getLogger(__name__)

RECORD_FIELDS = ("image_path", "label", "split", "content_hash", "origin", "source_id", "image_size")


class Label(str, enum.Enum):
    MALWARE = "malware"
    BENIGN = "benign"

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        v = str(value).strip().lower()
        aliases = {"1": "malware", "mal": "malware", "malicious": "malware",
                   "0": "benign", "ben": "benign", "goodware": "benign"}
        return cls(aliases.get(v, v))


class Split(str, enum.Enum):
    GAN_TRAIN = "gan_train"
    CLASSIFIER_TRAIN = "classifier_train"
    TEST = "test"


class Origin(str, enum.Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"
    PERTURBED = "perturbed"


@dataclass(frozen=True)
class SampleRecord:
    image_path: str
    label: Label
    split: Split | None
    content_hash: str
    origin: Origin
    source_id: str
    image_size: int

    def __post_init__(self):
        if self.origin is Origin.SYNTHETIC and self.split is Split.TEST:
            raise ConfigError("synthetic records may not be placed in the test split")

    def to_json(self) -> str:
        obj = {
            "image_path": self.image_path,
            "label": self.label.value,
            "split": None if self.split is None else self.split.value,
            "content_hash": self.content_hash,
            "origin": self.origin.value,
            "source_id": self.source_id,
            "image_size": self.image_size,
        }
        return json.dumps(obj, sort_keys=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping) -> "SampleRecord":
        return cls(
            image_path=d["image_path"],
            label=Label(d["label"]),
            split=None if d.get("split") is None else Split(d["split"]),
            content_hash=d["content_hash"],
            origin=Origin(d["origin"]),
            source_id=d["source_id"],
            image_size=int(d["image_size"]),
        )

    @property
    def parent_source(self) -> str:
        """Source id of the real sample a perturbed record was derived from."""
        return self.source_id.split("|", 1)[0]


@dataclass
class CorpusManifest:
    records: list[SampleRecord]
    seed: int = 0
    size_set: tuple[int, ...] = ()
    created_at: str = ""
    root: Path = field(default_factory=Path)
    skipped: list[dict] = field(default_factory=list)
    input_dir: str = ""
    source: str = EntryKind.DEX.value

    def __len__(self):
        return len(self.records)

    def resolve(self, record: SampleRecord) -> Path:
        p = Path(record.image_path)
        return p if p.is_absolute() else self.root / p

    def load_image(self, record: SampleRecord) -> GrayImage:
        return read_image(self.resolve(record))

    def select(self, *, label=None, split=None, origin=None, image_size=None) -> list[SampleRecord]:
        def ok(value, want):
            if want is None:
                return True
            if isinstance(want, (set, frozenset, tuple, list)):
                return value in want
            return value == want

        return [r for r in self.records
                if ok(r.label, label) and ok(r.split, split) and ok(r.origin, origin)
                and ok(r.image_size, image_size)]

    def with_records(self, records: Iterable[SampleRecord]) -> "CorpusManifest":
        return replace(self, records=list(records))

    # -- persistence ------------------------------------------------------
    def meta(self) -> dict:
        return {"seed": self.seed, "size_set": list(self.size_set), "created_at": self.created_at,
                "input_dir": self.input_dir, "source": self.source, "skipped": self.skipped}

    def save(self, path) -> Path:
        """Write records as JSON lines plus a ``<name>.meta.json`` sidecar.

        The JSON-lines file holds only records, so identical inputs give a
        byte-identical file; the timestamp lives in the sidecar.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        body = "".join(r.to_json() + "\n" for r in self.records)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(body, encoding="utf-8")
        tmp.replace(path)
        meta_path(path).write_text(json.dumps(self.meta(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        path = Path(path)
        records = []
        for no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                records.append(SampleRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatViolation(f"{path}:{no}: bad manifest record ({exc})") from None
        meta = {}
        if meta_path(path).exists():
            meta = json.loads(meta_path(path).read_text(encoding="utf-8"))
        return cls(records=records, seed=int(meta.get("seed", 0)),
                   size_set=tuple(meta.get("size_set", sorted({r.image_size for r in records}))),
                   created_at=meta.get("created_at", ""), root=path.parent,
                   skipped=list(meta.get("skipped", [])), input_dir=meta.get("input_dir", ""),
                   source=meta.get("source", EntryKind.DEX.value))


def meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def now_stamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def sha256_hex(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def store_image(image: GrayImage, root: Path, rel: str) -> str:
    """Persist ``image`` under ``root/rel``; returns the content hash of the file."""
    return sha256_hex(write_image(image, root / rel))


# ---------------------------------------------------------------------------
# building
# ---------------------------------------------------------------------------

def load_label_map(path) -> dict[str, Label]:
    """Read ``name,label`` lines (CSV/TSV, ``#`` comments) or a JSON object."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return {k: Label.parse(v) for k, v in json.loads(text).items()}
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.replace("\t", ",").split(",")]
        if len(parts) < 2 or parts[0].lower() in ("name", "file", "filename"):
            continue
        out[parts[0]] = Label.parse(parts[1])
    return out


def streams_for_file(path: Path, source: EntryKind) -> ByteStream:
    blob = path.read_bytes()
    if path.suffix.lower() in ARCHIVE_SUFFIXES:
        return extract_streams(blob, source, source=path.name)[0]
    return extract_streams(blob, EntryKind.RAW, source=path.name)[0]


def _convert_one(path: Path, label: Label, sizes, source, upscale_from, method):
    stream = streams_for_file(path, source)
    images = {}
    native = {}
    for w in sizes:
        if upscale_from and w > upscale_from:
            if upscale_from not in native:
                native[upscale_from] = bytes_to_image(stream, upscale_from, method)
            images[w] = resize_image(native[upscale_from], w, method)
        else:
            native[w] = images[w] = bytes_to_image(stream, w, method)
    return stream.source_id, images


def build_corpus(input_dir, label_map: Mapping[str, Label], size_set: Iterable[int], seed: int,
                 out_dir, source: EntryKind | str = EntryKind.DEX, workers: int = 1,
                 upscale_from: int | None = None, method: str = "linear",
                 manifest_name: str = "manifest.jsonl") -> CorpusManifest:
    """Convert every labeled file in ``input_dir`` to one image per size.

    Archives (``.apk``/``.zip``/``.jar``) go through :func:`extract_streams` with
    ``source``; anything else is imaged from its raw bytes.  Per-file failures are
    logged, listed in ``manifest.skipped`` and do not stop the run.
    """
    input_dir, out_dir = Path(input_dir), Path(out_dir)
    sizes = tuple(sorted(set(int(s) for s in size_set)))
    if not sizes:
        raise ConfigError("size_set is empty")
    source = EntryKind(source)
    files = sorted(p for p in input_dir.iterdir() if p.is_file())
    skipped: list[dict] = []
    jobs = []
    for p in files:
        label = label_map.get(p.name)
        if label is None:
            skipped.append({"file": p.name, "reason": "no label"})
            continue
        jobs.append((p, Label.parse(label)))

    def work(job):
        p, label = job
        try:
            return _convert_one(p, label, sizes, source, upscale_from, method)
        except (ApkganError, OSError) as exc:
            return exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    records = []
    seen: set[str] = set()
    for (p, label), res in zip(jobs, results):
        if isinstance(res, Exception):
            log.warning("skipping %s: %s", p.name, res)
            skipped.append({"file": p.name, "reason": f"{type(res).__name__}: {res}"})
            continue
        source_id, images = res
        for w in sizes:
            rel = f"images/{w}/{label.value}/{p.name}.pgm"
            digest = store_image(images[w], out_dir, rel)
            if digest in seen:
                skipped.append({"file": p.name, "reason": f"duplicate image at size {w}"})
                continue
            seen.add(digest)
            records.append(SampleRecord(rel, label, None, digest, Origin.REAL, source_id, w))
    if skipped:
        log.info("build_corpus: %d file(s) skipped", len(skipped))
    manifest = CorpusManifest(records, seed, sizes, now_stamp(), out_dir, skipped,
                              str(input_dir.resolve()), source.value)
    manifest.save(out_dir / manifest_name)
    return manifest


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_corpus(manifest: CorpusManifest, gan_fraction: float = 0.30, test_fraction: float | None = None,
                 seed: int | None = None) -> CorpusManifest:
    """Stratified split of the real samples.

    Splitting is by source (every size of one app lands in the same split), per
    label.  ``gan_fraction`` of each class becomes GanTrain, which is also the
    classifier's training pool; ``test_fraction`` (default: the rest) becomes
    Test; anything left over is ClassifierTrain.  Perturbed records follow their
    parent's split; synthetic records are left as they are.
    """
    if not 0.2 <= gan_fraction <= 0.35:
        raise ConfigError(f"gan_fraction must lie in [0.2, 0.35], got {gan_fraction}")
    if test_fraction is None:
        test_fraction = 1.0 - gan_fraction
    if test_fraction <= 0 or gan_fraction + test_fraction > 1.0 + 1e-12:
        raise ConfigError(f"fractions {gan_fraction} + {test_fraction} exceed 1")
    seed = manifest.seed if seed is None else seed
    rng = np.random.Generator(np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF))

    real = [r for r in manifest.records if r.origin is Origin.REAL]
    assignment: dict[str, Split] = {}
    for label in Label:
        sources = sorted({r.source_id for r in real if r.label is label})
        if not sources:
            continue
        n = len(sources)
        n_gan = _round_half_up(gan_fraction * n)
        n_test = min(_round_half_up(test_fraction * n), n - n_gan)
        if n_gan < 1 or n_test < 1:
            raise InsufficientSamples(
                f"{label.value}: {n} sources cannot fill gan={n_gan}, test={n_test}")
        order = rng.permutation(n)
        for rank, i in enumerate(order):
            if rank < n_gan:
                assignment[sources[i]] = Split.GAN_TRAIN
            elif rank < n_gan + n_test:
                assignment[sources[i]] = Split.TEST
            else:
                assignment[sources[i]] = Split.CLASSIFIER_TRAIN
    if {r.label for r in real} != set(Label):
        raise InsufficientSamples("both labels need real samples to split")

    out = []
    for r in manifest.records:
        if r.origin is Origin.REAL:
            out.append(replace(r, split=assignment[r.source_id]))
        elif r.origin is Origin.PERTURBED:
            out.append(replace(r, split=assignment.get(r.parent_source, r.split)))
        else:
            out.append(r)
    return replace(manifest, records=out, seed=seed)


def classifier_train_pool(manifest: CorpusManifest, **filters) -> list[SampleRecord]:
    """Real/perturbed records the classifier may train on (GanTrain ∪ ClassifierTrain)."""
    return manifest.select(split={Split.GAN_TRAIN, Split.CLASSIFIER_TRAIN},
                           origin={Origin.REAL, Origin.PERTURBED}, **filters)
