"""Command line entry point: ``apkgan <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .errors import ApkganError

log = logging.getLogger("apkgan")


def _sizes(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())


def parse_schedule(text: str | None, n: int):
    """``n4,n2,n`` style tokens (n/k rounded up) or plain integers."""
    if not text:
        return None
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if tok == "n":
            out.append(n)
        elif tok.startswith("n"):
            out.append(math.ceil(n / int(tok[1:])))
        else:
            out.append(int(tok))
    return tuple(out)


def _merge_synthetic(manifest, paths):
    """Append records of other manifests with their paths made absolute."""
    from dataclasses import replace

    from .corpus import CorpusManifest

    extra = []
    for p in paths or ():
        other = CorpusManifest.load(p)
        extra += [replace(r, image_path=str(other.resolve(r).resolve())) for r in other.records]
    return manifest.with_records(list(manifest.records) + extra) if extra else manifest


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_convert(a):
    from .corpus import build_corpus, load_label_map

    m = build_corpus(a.input, load_label_map(a.labels), _sizes(a.sizes), a.seed, a.out, a.source,
                     workers=a.workers, upscale_from=a.upscale_from)
    print(f"{len(m.records)} images, {len(m.skipped)} skipped -> {Path(a.out) / 'manifest.jsonl'}")


def cmd_split(a):
    from .corpus import CorpusManifest, split_corpus

    m = split_corpus(CorpusManifest.load(a.manifest), a.gan_frac, a.test_frac, a.seed)
    out = m.save(a.out or a.manifest)
    counts = {}
    for r in m.records:
        counts[r.split.value if r.split else "none"] = counts.get(r.split.value if r.split else "none", 0) + 1
    print(json.dumps(counts, sort_keys=True), "->", out)


def cmd_perturb(a):
    from .corpus import CorpusManifest, perturb_manifest

    m = perturb_manifest(CorpusManifest.load(a.manifest), a.kinds, a.seed, a.fraction, a.mode)
    out = m.save(a.out or a.manifest)
    print(f"{len(m.records)} records -> {out}")


def cmd_synth_corpus(a):
    from .corpus import synth_corpus

    sizes = _sizes(a.sizes) if a.sizes else None
    m = synth_corpus(a.n, a.size, a.seed, a.out, a.gan_frac, a.test_frac, size_set=sizes)
    print(f"{len(m.records)} images -> {Path(a.out) / 'manifest.jsonl'}")


def cmd_train_gan(a):
    from .corpus import CorpusManifest, Label
    from .gan import GanConfig, train_gan

    cfg = GanConfig(lam=a.lam, n_critic=a.n_critic, batch_size=a.batch_size, alpha=a.alpha,
                    latent_dim=a.latent_dim, epochs=a.epochs, image_size=a.size, variant=a.variant,
                    seed=a.seed, checkpoint_every=a.checkpoint_every)
    model, tlog = train_gan(CorpusManifest.load(a.manifest), Label.parse(a.label), cfg, a.out)
    print(f"{len(tlog.entries)} epochs; checkpoints: {', '.join(h[:12] for _, h in tlog.checkpoints)}")


def _reference(manifest, label, size, extractor):
    from .corpus import Origin, Split
    from .fid import embed

    recs = manifest.select(label=label, split={Split.GAN_TRAIN, Split.CLASSIFIER_TRAIN},
                           origin=Origin.REAL, image_size=size)
    return embed([manifest.load_image(r) for r in recs], extractor, "real")


def cmd_generate(a):
    from .corpus import CorpusManifest, Origin, SampleRecord, Split
    from .corpus.manifest import now_stamp, store_image
    from .fid import make_extractor
    from .gan import GanModel, fid_gated_generate, generate

    model = GanModel.load(a.model)
    out = Path(a.out)
    result = None
    if a.fid_gate is not None:
        if not a.ref_manifest:
            raise SystemExit("--fid-gate needs --ref-manifest")
        if model.class_label is None:
            raise SystemExit("model has no class label; cannot pick reference images")
        ref = CorpusManifest.load(a.ref_manifest)
        extractor = make_extractor(a.extractor, dim=a.fid_dim)
        reference = _reference(ref, model.class_label, model.config.image_size, extractor)
        result = fid_gated_generate(model, reference, extractor, a.fid_gate, a.rounds, a.n, a.seed,
                                    strict=a.strict)
        images = result.images
    else:
        images = generate(model, a.n, a.seed)
    label = model.class_label
    records = []
    for i, img in enumerate(images):
        rel = f"images/{img.width}/{label.value if label else 'unlabeled'}/gen_{i:05d}.pgm"
        digest = store_image(img, out, rel)
        if label is not None:
            records.append(SampleRecord(rel, label, Split.CLASSIFIER_TRAIN, digest, Origin.SYNTHETIC,
                                        f"gan:{Path(a.model).name}:{a.seed}", img.width))
    CorpusManifest(records, a.seed, (model.config.image_size,), now_stamp(), out).save(out / "manifest.jsonl")
    if result is not None:
        (out / "gate.json").write_text(json.dumps({"fid_inf": result.fid_inf, "accepted": result.accepted,
                                                   "rounds": result.rounds, "history": result.history},
                                                  indent=1), encoding="utf-8")
        print(f"FID_inf {result.fid_inf:.2f} ({'accepted' if result.accepted else 'NOT accepted'}, "
              f"{result.rounds} round(s))")
    print(f"{len(images)} images -> {out}")


def cmd_fid(a):
    from .corpus import CorpusManifest, Label, Origin
    from .fid import embed, fid_infinity, make_extractor, write_fid_csv

    extractor = make_extractor(a.extractor, dim=a.dim)

    def pick(path, origins):
        m = CorpusManifest.load(path)
        recs = m.select(label=Label.parse(a.label) if a.label else None, image_size=a.size, origin=origins)
        return embed([m.load_image(r) for r in recs], extractor, str(path))

    real = pick(a.real, {Origin.REAL, Origin.PERTURBED})
    fake = pick(a.fake, None)
    est = fid_infinity(real, fake, parse_schedule(a.schedule, min(real.n, fake.n)), a.resamples, a.seed)
    write_fid_csv(est, a.out)
    print(f"FID_inf {est.value:.4f} (n={est.n_used}) -> {a.out}")


def cmd_train_clf(a):
    from .classifier import CnnSpec, Regime, TrainRegime, train_classifier
    from .corpus import CorpusManifest

    manifest = _merge_synthetic(CorpusManifest.load(a.manifest), a.synthetic)
    regime = TrainRegime(Regime(a.regime), a.synthetic_count, a.epochs, a.batch_size, a.alpha, seed=a.seed)
    _, curve = train_classifier(manifest, regime, CnnSpec(image_size=a.size), out_dir=a.out)
    last = curve[-1] if curve else {"loss": float("nan"), "accuracy": float("nan")}
    print(f"{len(curve)} epochs, final loss {last['loss']:.4f} acc {last['accuracy']:.3f} -> {a.out}")


def cmd_evaluate(a):
    from .classifier import ClassifierModel, evaluate, report_dict
    from .corpus import CorpusManifest, Split

    cm, rep = evaluate(ClassifierModel.load(a.model), CorpusManifest.load(a.manifest), Split(a.split))
    d = report_dict(cm, rep)
    text = json.dumps(d, indent=1)
    if a.out:
        Path(a.out).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_experiment(a):
    from .harness import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.from_file(a.config)
    if a.out:
        cfg.out_dir = a.out
    s = run_experiment(cfg, workers=a.workers, resume=a.resume)
    print(f"{len(s.rows)} completed, {len(s.failures)} failed, {s.ran} run, {s.skipped} reused -> {s.out_dir}")
    for f in s.failures:
        print(f"  failed {f['image_size']}/{f['regime']}/{f['gan_variant'] or '-'}/{f['seed']}: {f['reason']}")
    return 1 if s.all_failed else 0


def cmd_compare(a):
    from .harness import compare_variants, read_results_csv

    cmp = compare_variants(read_results_csv(a.results), a.regime)
    if a.out:
        cmp.write_csv(a.out)
    print(cmp.summary())


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apkgan", description="Byte-image malware corpora, GAN augmentation, FID gating")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("convert", help="image a labelled directory of archives / byte files")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--sizes", default="32,64,128,256,360,400")
    s.add_argument("--source", default="dex", choices=["dex", "manifest", "raw"])
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--upscale-from", type=int, default=None, help="image sizes above this by upscaling")
    s.set_defaults(fn=cmd_convert)

    s = sub.add_parser("split", help="stratified GanTrain / ClassifierTrain / Test split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--gan-frac", type=float, default=0.30)
    s.add_argument("--test-frac", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None, help="defaults to overwriting --manifest")
    s.set_defaults(fn=cmd_split)

    s = sub.add_parser("perturb", help="add byte-level perturbed variants")
    s.add_argument("--manifest", required=True)
    s.add_argument("--kinds", required=True, help="comma list: byte_remap,block_reorder,segment_encrypt,"
                                                 "xor_mask,junk_insertion")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fraction", type=float, default=0.5)
    s.add_argument("--mode", choices=["duplicate", "replace"], default="duplicate")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_perturb)

    s = sub.add_parser("synth-corpus", help="write and split a two-class synthetic corpus")
    s.add_argument("--n", type=int, default=200, help="samples per class")
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--sizes", default=None, help="image sizes (default: --size only)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--gan-frac", type=float, default=0.30)
    s.add_argument("--test-frac", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth_corpus)

    s = sub.add_parser("train-gan", help="train one class's GAN on its GanTrain pool")
    s.add_argument("--manifest", required=True)
    s.add_argument("--class", dest="label", required=True, choices=["malware", "benign"])
    s.add_argument("--variant", default="wgan-gp", choices=["wgan-gp", "dcgan"])
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--alpha", type=float, default=1e-4)
    s.add_argument("--lam", type=float, default=10.0)
    s.add_argument("--n-critic", type=int, default=5)
    s.add_argument("--latent-dim", type=int, default=100)
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train_gan)

    s = sub.add_parser("generate", help="sample images, optionally FID-gated")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fid-gate", type=float, default=None, help="FID_inf threshold, e.g. 90")
    s.add_argument("--ref-manifest", default=None)
    s.add_argument("--rounds", type=int, default=5)
    s.add_argument("--strict", action="store_true", help="fail when no batch passes the gate")
    s.add_argument("--extractor", default="random")
    s.add_argument("--fid-dim", type=int, default=8)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_generate)

    s = sub.add_parser("fid", help="FID_inf between two manifests")
    s.add_argument("--real", required=True)
    s.add_argument("--fake", required=True)
    s.add_argument("--extractor", default="random", help="random | classifier:CKPT")
    s.add_argument("--dim", type=int, default=8)
    s.add_argument("--schedule", default="n4,n2,n")
    s.add_argument("--resamples", type=int, default=5)
    s.add_argument("--label", default=None)
    s.add_argument("--size", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_fid)

    s = sub.add_parser("train-clf", help="train the CNN under one regime")
    s.add_argument("--manifest", required=True)
    s.add_argument("--synthetic", action="append", help="manifest of generated images (repeatable)")
    s.add_argument("--regime", default="model1", choices=["model1", "model2", "model3"])
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch-size", type=int, default=16)
    s.add_argument("--alpha", type=float, default=1e-3)
    s.add_argument("--synthetic-count", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train_clf)

    s = sub.add_parser("evaluate", help="confusion matrix and metrics on one split")
    s.add_argument("--model", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default="test", choices=["gan_train", "classifier_train", "test"])
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("experiment", help="run the experiment matrix from a YAML config")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--resume", action="store_true", help="skip cells already completed")
    s.add_argument("--out", default=None, help="override out_dir")
    s.set_defaults(fn=cmd_experiment)

    s = sub.add_parser("compare", help="paired WGAN-GP minus DCGAN f1 differences")
    s.add_argument("--results", required=True)
    s.add_argument("--regime", default="model2")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.fn(args)
    except ApkganError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
