"""The ten acceptance criteria, each reporting one PASS/FAIL line.

Slow criteria (toy convergence, the augmentation run) share their expensive
computations with the unit tests through session fixtures.
"""
import hashlib
import json
import math
import time
import zlib

import numpy as np
import pytest

from apkgan.classifier import ConfusionMatrix, f1_score, metrics
from apkgan.corpus import Label, Split, bytes_to_image, encode_pgm, extract_streams
from apkgan.corpus.imaging import EntryKind
from apkgan.fid import (EmbeddingSet, GaussianStats, embed, extrapolate, fid_infinity, frechet_distance,
                        make_extractor, matrix_sqrt_psd)
from apkgan.gan import (GanConfig, GanModel, TrainState, critic_loss, fid_gated_generate, train_step)
from apkgan.harness import (AUGMENTATION_PRESET, ExperimentConfig, ResultRow, compare_variants, median_f1,
                            run_experiment)
from apkgan.tensor import mul, reshape, sum_

from helpers import PRIMITIVES, primitive_trials, tanh_critic_penalty_check


def test_c01_imaging_golden(criterion, fixture_archive, fixture_golden):
    t0 = time.perf_counter()
    ok = bytes_to_image(bytes(range(16)), 4).pixels.ravel().tolist() == list(range(16))
    ok &= bytes_to_image(bytes([0, 255]), 2).pixels.ravel().tolist() == [0, 85, 170, 255]
    ok &= bool(np.all(bytes_to_image(bytes([77] * 10), 6).pixels == 77))
    [dex] = extract_streams(fixture_archive, EntryKind.DEX)
    [man] = extract_streams(fixture_archive, EntryKind.MANIFEST)
    mismatched = [f"{kind}@{w}" for kind, stream in (("dex", dex), ("manifest", man))
                  for w, h in fixture_golden[kind].items()
                  if hashlib.sha256(encode_pgm(bytes_to_image(stream, int(w)))).hexdigest() != h]
    dt = time.perf_counter() - t0
    criterion(1, ok and not mismatched and dt < 5,
              f"resampling examples {'ok' if ok else 'WRONG'}; golden mismatches {mismatched or 'none'}; {dt:.2f}s")


def test_c02_autodiff(criterion):
    t0 = time.perf_counter()
    worst = {name: primitive_trials(name, 100, seed=zlib.crc32(name.encode())) for name in PRIMITIVES}
    gp = tanh_critic_penalty_check(seed=3)
    dt = time.perf_counter() - t0
    name, err = max(worst.items(), key=lambda kv: kv[1])
    criterion(2, err <= 1e-4 and gp <= 1e-3 and dt < 60,
              f"{len(PRIMITIVES)} primitives x 100 FD checks, worst {name} {err:.1e}; "
              f"penalty double-backprop {gp:.1e}; {dt:.1f}s")


def test_c03_wgan_loss_units(criterion):
    const = lambda x: mul(reshape(sum_(mul(x, 0.0)), (1, 1)), 1.0) + np.full((x.shape[0], 1), 2.5)  # noqa: E731
    x = np.random.default_rng(0).normal(size=(6, 1, 4, 4))
    per = critic_loss(const, x, -x, 0.5 * x, GanConfig().lam).per_sample
    unit = critic_loss(lambda v: reshape(v, (v.shape[0], 1)), np.ones((1, 1)), np.zeros((1, 1)),
                       np.full((1, 1), 0.5), 10.0)
    cfg = GanConfig(image_size=8, latent_dim=4, gen_channels=(4, 2), critic_channels=(2, 4), batch_size=4)
    model, state = GanModel.init(cfg), TrainState.fresh(cfg)
    sampler = lambda m: np.zeros((m, 1, 8, 8))  # noqa: E731
    for _ in range(3):
        train_step(model, sampler, state)
    ok = bool(np.all(per == 10.0)) and unit.penalty[0] == 0.0 and unit.loss.item() == -1.0
    ok &= (state.critic_adam.t, state.gen_adam.t) == (15, 3)
    criterion(3, ok, f"constant critic per-sample {sorted(set(per.tolist()))}; unit-slope penalty "
                     f"{unit.penalty[0]}; Adam steps critic {state.critic_adam.t} : generator {state.gen_adam.t}")


@pytest.mark.slow
def test_c04_toy_convergence(criterion, toy_runs):
    parts, ok, total = [], True, 0.0
    for variant in ("wgan-gp", "dcgan"):
        runs, secs = toy_runs(variant)
        total += secs
        means = [m for _, _, m in runs]
        hits = sum(abs(m - 4.0) <= 0.5 for m in means)
        ok &= hits >= 4
        parts.append(f"{variant} {hits}/5 (means {', '.join(f'{m:.2f}' for m in means)})")
    criterion(4, ok and total < 600, f"{'; '.join(parts)}; {total:.0f}s")


def test_c05_fid_oracles(criterion):
    t0 = time.perf_counter()
    s = lambda mu, sig: GaussianStats(np.atleast_1d(np.asarray(mu, float)), np.atleast_2d(sig), 10)  # noqa: E731
    closed = [frechet_distance(s([1, 2], np.eye(2) * 3), s([1, 2], np.eye(2) * 3)).value,
              frechet_distance(s(0, 1.0), s(1, 1.0)).value,
              frechet_distance(s([0, 0], np.eye(2)), s([3, 4], np.eye(2))).value]
    closed_err = max(abs(a - b) for a, b in zip(closed, (0, 1, 25)))
    rng = np.random.default_rng(11)
    recon = 0.0
    for _ in range(50):
        b = rng.normal(size=(5, 5))
        a = b.T @ b
        r = matrix_sqrt_psd(a)
        recon = max(recon, np.linalg.norm(r @ r - a) / max(1.0, np.linalg.norm(a)))
    ns = [100, 200, 400]
    intercept_err = abs(extrapolate(ns, [10 + 100 / n for n in ns])[0] - 10)
    g = np.random.default_rng(2000)
    real = EmbeddingSet(g.normal(size=(2000, 8)))
    fake = EmbeddingSet(1.0 + np.sqrt(2.0) * g.normal(size=(2000, 8)))
    target = 8 * 1.0 + 8 * (1 + 2 - 2 * math.sqrt(2))
    rel = abs(fid_infinity(real, fake).value - target) / target
    dt = time.perf_counter() - t0
    ok = closed_err <= 1e-6 and recon <= 1e-8 and intercept_err <= 1e-9 and rel <= 0.05 and dt < 120
    criterion(5, ok, f"closed forms err {closed_err:.1e}; sqrt recon {recon:.1e}; intercept err "
                     f"{intercept_err:.1e}; FID_inf vs closed form {100 * rel:.2f}% (n=2000, d=8); {dt:.1f}s")


def test_c06_fid_gate(criterion, synth32):
    reals = [synth32.load_image(r) for r in synth32.select(label=Label.MALWARE) if r.split is not Split.TEST]
    ext = make_extractor("random", seed=0, dim=8)
    ref = embed(reals, ext)
    self_fid = fid_infinity(ref, ref).value
    untrained = fid_gated_generate(GanModel.init(GanConfig(image_size=32, seed=0)), ref, ext, threshold=90,
                                   max_rounds=1, n=200)
    ok = self_fid <= 90 and self_fid < 1e-9 and not untrained.accepted and 100 <= untrained.fid_inf < 1000
    criterion(6, ok, f"self-comparison FID_inf {self_fid:.1e} (accepted); untrained generator FID_inf "
                     f"{untrained.fid_inf:.1f} ({'rejected' if not untrained.accepted else 'ACCEPTED'}), "
                     f"pinned range [100, 1000)")


def test_c07_metrics(criterion):
    table = round(f1_score(0.970, 0.952), 3)
    rng = np.random.default_rng(7)
    worst = 0.0
    for tp, fp, fn, tn in rng.integers(0, 500, size=(1000, 4)):
        tp += 1
        r = metrics(ConfusionMatrix(int(tp), int(fp), int(fn), int(tn)))
        worst = max(worst, abs(2 * r.precision * r.recall / (r.precision + r.recall) - 2 * tp / (2 * tp + fp + fn)))
    degenerate = metrics(ConfusionMatrix(0, 0, 0, 9))
    empty = metrics(ConfusionMatrix(0, 0, 0, 0))
    undefined = (degenerate.precision is None and degenerate.recall is None and degenerate.f1 is None
                 and all(v is None for v in vars(empty).values()))
    criterion(7, table == 0.961 and worst <= 1e-12 and undefined,
              f"f1(0.970, 0.952) = {table}; F1 identity worst {worst:.1e} over 1000 matrices; "
              f"zero denominators undefined: {undefined}")


@pytest.fixture(scope="module")
def augmentation_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("augmentation")
    cfg = ExperimentConfig(out_dir=str(out), **AUGMENTATION_PRESET)
    t0 = time.perf_counter()
    summary = run_experiment(cfg)
    return summary, time.perf_counter() - t0


@pytest.mark.slow
def test_c08_augmentation_ordering(criterion, augmentation_run):
    summary, secs = augmentation_run
    m1, m2, m3 = (median_f1(summary.rows, r) for r in ("model1", "model2", "model3"))
    complete = not summary.failures and len(summary.rows) == 15
    ok = complete and m1 is not None and m3 >= m1 - 0.02 and m3 > m2 and secs < 1800
    criterion(8, ok, f"median F1 over 5 seeds: Model1 {m1:.3f}, Model2 {m2:.3f}, Model3 {m3:.3f} "
                     f"(need M3 >= M1-0.02 and M3 > M2); {len(summary.rows)} cells, "
                     f"{len(summary.failures)} failed; {secs / 60:.1f} min")


def test_c09_variant_comparison(criterion):
    wgan, dcgan = (0.88, 0.83, 0.76, 0.80), (0.84, 0.73, 0.70, 0.77)
    rows = [ResultRow(32, "model2", v, i, f, f, f, f, f)
            for v, vals in (("wgan-gp", wgan), ("dcgan", dcgan)) for i, f in enumerate(vals)]
    cmp_ = compare_variants(rows)
    diffs = [round(d.diff, 2) for d in cmp_.diffs]
    criterion(9, cmp_.n_positive == 4, f"WGAN-DCGAN differences {diffs}: {cmp_.n_positive}/4 positive")


def test_c10_determinism(criterion, tmp_path):
    settings = dict(synth_n=20, sizes=(32,), test_fraction=0.5, regimes=("model3",), variants=("wgan-gp",),
                    gan_epochs=2, gan_batch_size=2, fid_dim=2, n_generate=40, gate_rounds=1, gate_epochs=0,
                    fid_every=1, clf_epochs=2)
    results, hashes = [], []
    for name in ("a", "b"):
        cfg = ExperimentConfig(out_dir=str(tmp_path / name), **settings)
        s = run_experiment(cfg)
        assert not s.failures, s.failures
        results.append((tmp_path / name / "results.csv").read_bytes())
        [cell] = (tmp_path / name / "cells").glob("*.json")
        c = json.loads(cell.read_text())
        hashes.append((c["classifier_sha256"], json.dumps(c["gan_checkpoints"], sort_keys=True)))
    n_ckpt = sum(len(v) for v in json.loads(hashes[0][1]).values())
    ok = results[0] == results[1] and hashes[0] == hashes[1]
    criterion(10, ok, f"results.csv identical: {results[0] == results[1]}; classifier + {n_ckpt} GAN "
                      f"checkpoint hashes identical: {hashes[0] == hashes[1]}")


def test_augmentation_preset_matches_criterion():
    # the preset must stay the small-pool 32x32 five-seed setting
    assert AUGMENTATION_PRESET["synth_n"] * (1 - AUGMENTATION_PRESET["test_fraction"]) == 50
    assert AUGMENTATION_PRESET["sizes"] == (32,) and len(AUGMENTATION_PRESET["seeds"]) == 5
