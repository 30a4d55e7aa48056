import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apkgan.corpus import GrayImage, Label
from apkgan.errors import (DimensionMismatch, IndefiniteMatrix, NotSymmetric, ScheduleTooSmall, SizeMismatch,
                           TooFewSamples)
from apkgan.fid import (EmbeddingSet, FidKind, GaussianStats, RandomConvFeatures, anomaly_mask, embed,
                        extrapolate, fid, fid_infinity, fid_series, fit_gaussian, frechet_distance,
                        matrix_sqrt_psd, series_from_values, write_fid_csv)
from apkgan.gan import GanConfig, GanModel


def stats(mu, sigma, n=100):
    return GaussianStats(np.atleast_1d(np.asarray(mu, float)), np.atleast_2d(np.asarray(sigma, float)), n)


def closed_form(mu_a, cov_a, mu_b, cov_b):
    """Frechet distance for diagonal covariances."""
    return float(np.sum((mu_a - mu_b) ** 2) + np.sum(cov_a + cov_b - 2 * np.sqrt(cov_a * cov_b)))


# -- closed forms -----------------------------------------------------------------

def test_identical_stats_zero():
    s = stats([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    assert frechet_distance(s, s).value == pytest.approx(0.0, abs=1e-6)


def test_unit_shift_one_dim():
    assert frechet_distance(stats(0, 1), stats(1, 1)).value == pytest.approx(1.0, abs=1e-6)


def test_shift_three_four():
    assert frechet_distance(stats([0, 0], np.eye(2)), stats([3, 4], np.eye(2))).value == pytest.approx(25, abs=1e-6)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        frechet_distance(stats([0, 0], np.eye(2)), stats([0], [[1]]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_symmetry_and_nonnegativity(seed, d):
    rng = np.random.default_rng(seed)
    mk = lambda: stats(rng.normal(size=d), (b := rng.normal(size=(d, d))) @ b.T)  # noqa: E731
    a, b = mk(), mk()
    ab, ba = frechet_distance(a, b).value, frechet_distance(b, a).value
    assert ab >= 0 and abs(ab - ba) <= 1e-8 * max(1.0, ab)


def test_symmetry_thousand_pairs():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        d = int(rng.integers(1, 6))
        b1, b2 = rng.normal(size=(d, d)), rng.normal(size=(d, d))
        a, b = stats(rng.normal(size=d), b1 @ b1.T), stats(rng.normal(size=d), b2 @ b2.T)
        ab, ba = frechet_distance(a, b).value, frechet_distance(b, a).value
        assert ab >= 0 and abs(ab - ba) <= 1e-8 * max(1.0, ab)


def test_translation_adds_squared_norm(rng):
    v = rng.normal(size=(50, 3))
    t = np.array([0.5, -1.0, 2.0])
    base = fid(EmbeddingSet(v), EmbeddingSet(v)).value
    shifted = fid(EmbeddingSet(v), EmbeddingSet(v + t)).value
    assert shifted - base == pytest.approx(t @ t, abs=1e-9)


def test_self_fid_is_zero(rng):
    e = EmbeddingSet(rng.normal(size=(40, 5)))
    assert fid(e, e).value <= 1e-10


# -- Gaussian fits ------------------------------------------------------------------

def test_fit_gaussian_two_points():
    s = fit_gaussian(np.array([[0.0], [2.0]]))
    assert s.mu[0] == 1.0 and s.sigma[0, 0] == 2.0 and s.n == 2


def test_fit_gaussian_identical_rows():
    assert np.all(fit_gaussian(np.ones((5, 3))).sigma == 0)


def test_fit_gaussian_permutation_invariant(rng):
    v = rng.normal(size=(20, 4))
    a, b = fit_gaussian(v), fit_gaussian(v[rng.permutation(20)])
    assert np.allclose(a.mu, b.mu, atol=1e-15) and np.allclose(a.sigma, b.sigma, atol=1e-14)
    assert np.array_equal(a.sigma, a.sigma.T)


def test_fit_gaussian_too_few():
    with pytest.raises(TooFewSamples):
        fit_gaussian(np.zeros((3, 3)))


def test_embedding_set_validation():
    with pytest.raises(DimensionMismatch):
        EmbeddingSet(np.zeros(4))
    with pytest.raises(ValueError):
        EmbeddingSet(np.array([[np.inf]]))


# -- matrix square root -----------------------------------------------------------

def test_sqrt_identity_and_diagonal():
    assert np.allclose(matrix_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-15)
    assert np.allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_sqrt_reconstruction(seed):
    b = np.random.default_rng(seed).normal(size=(5, 5))
    a = b.T @ b
    s = matrix_sqrt_psd(a)
    assert np.linalg.norm(s @ s - a) <= 1e-8 * max(1.0, np.linalg.norm(a))


def test_sqrt_errors():
    with pytest.raises(NotSymmetric):
        matrix_sqrt_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(IndefiniteMatrix):
        matrix_sqrt_psd(np.diag([1.0, -1.0]))
    # tiny negative eigenvalues are clamped rather than rejected
    assert np.allclose(matrix_sqrt_psd(np.diag([1.0, -1e-12])), np.diag([1.0, 0.0]))


# -- extrapolation ------------------------------------------------------------------

def test_extrapolate_intercept_ten():
    ns = [100, 200, 400]
    c0, c1 = extrapolate(ns, [10 + 100 / n for n in ns])
    assert abs(c0 - 10) <= 1e-9 and c1 == pytest.approx(100)


def test_extrapolate_constant():
    assert extrapolate([5, 10, 20], [7.5, 7.5, 7.5])[0] == pytest.approx(7.5, abs=1e-12)


def test_schedule_errors(rng):
    e = EmbeddingSet(rng.normal(size=(40, 2)))
    with pytest.raises(ScheduleTooSmall):
        fid_infinity(e, e, schedule=[10, 20])
    with pytest.raises(ScheduleTooSmall):
        fid_infinity(e, e, schedule=[10, 20, 41])
    with pytest.raises(ScheduleTooSmall):
        extrapolate([10], [1.0])


@pytest.fixture(scope="module")
def gaussian_fixture():
    rng = np.random.default_rng(2000)
    d, n = 8, 2000
    mu_b, var_b = np.full(d, 1.0), np.full(d, 2.0)
    real = EmbeddingSet(rng.normal(size=(n, d)))
    fake = EmbeddingSet(mu_b + np.sqrt(var_b) * rng.normal(size=(n, d)))
    return real, fake, closed_form(np.zeros(d), np.ones(d), mu_b, var_b)


def test_fid_infinity_recovers_closed_form(gaussian_fixture):
    real, fake, target = gaussian_fixture
    est = fid_infinity(real, fake)
    assert est.kind is FidKind.INFINITY and est.n_used == 2000
    assert abs(est.value - target) <= 0.05 * target


def test_bias_is_removed_on_gaussian_fixture(gaussian_fixture):
    real, fake, _ = gaussian_fixture
    # with matched distributions the bias is the whole signal: holds per seed
    same = EmbeddingSet(np.random.default_rng(2001).normal(size=real.vectors.shape))
    for s in range(5):
        est = fid_infinity(real, same, seed=s)
        assert est.value <= est.points[0][1]
    # with a mean shift, resampling noise at N1 exceeds the bias, so compare medians
    ests = [fid_infinity(real, fake, seed=s) for s in range(20)]
    assert np.median([e.value for e in ests]) <= np.median([e.points[0][1] for e in ests])


def test_monotone_bias_median_over_seeds(gaussian_fixture):
    # fresh fake draws of each size from the fixture's fake distribution; a rise
    # between sizes is tolerated up to two standard errors of the larger size
    real, _, _ = gaussian_fixture
    ref = fit_gaussian(real)
    sizes = (20, 80, 320, 1280)
    curves = np.array([[frechet_distance(ref, fit_gaussian(1.0 + np.sqrt(2.0) * np.random.default_rng(seed)
                                                               .normal(size=(n, 8)))).value for n in sizes]
                       for seed in range(5)])
    med = np.median(curves, axis=0)
    se = curves.std(axis=0, ddof=1) / np.sqrt(len(curves))
    assert np.all(np.diff(med) <= 2 * se[1:]), (med, se)
    assert med[0] > med[-1]


def test_fid_infinity_self_is_zero(rng):
    e = EmbeddingSet(rng.normal(size=(60, 3)))
    assert fid_infinity(e, e).value == pytest.approx(0.0, abs=1e-9)


def test_fid_csv(tmp_path, gaussian_fixture):
    real, fake, _ = gaussian_fixture
    est = fid_infinity(real, fake, schedule=[500, 1000, 2000])
    write_fid_csv(est, tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "N,resample_mean_fid,resample_std,kind"
    assert [r.split(",")[0] for r in rows[1:]] == ["500", "1000", "2000", "inf"]
    assert rows[-1].endswith(",infinity")


# -- anomalies and series -----------------------------------------------------------

def test_anomaly_flags_outlier():
    assert anomaly_mask([90, 85, 80, 79, 500]).tolist() == [False, False, False, False, True]


def test_anomaly_short_and_constant_series():
    assert not anomaly_mask([1.0, 1000.0]).any()
    assert not anomaly_mask([3.0] * 8).any()


def test_series_csv(tmp_path):
    s = series_from_values([10, 20, 30, 40, 50], [90, 85, 80, 79, 500])
    assert s.anomalies == [(50, 500.0)] and len(s.clean) == 4
    s.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[-1] == "50,500.0,1"


def test_fid_series_single_checkpoint(tmp_path, synth32):
    reals = [synth32.load_image(r) for r in synth32.select(label=Label.BENIGN)]
    ext = RandomConvFeatures(dim=8)
    model = GanModel.init(GanConfig(image_size=32))
    path = tmp_path / "g.bin"
    model.save(path)
    s = fid_series([(0, path)], embed(reals, ext), ext, n=100)
    assert s.epochs == [0] and len(s.values) == 1 and s.anomalies == []


# -- extractor --------------------------------------------------------------------

def test_extractor_deterministic_and_width():
    img = GrayImage(np.arange(1024, dtype=np.uint8).reshape(32, 32) % 251)
    ext = RandomConvFeatures(seed=4)
    v = ext([img, img])
    assert v.shape == (2, 64) and np.array_equal(v[0], v[1])
    assert np.array_equal(RandomConvFeatures(seed=4)([img]), v[:1])
    assert RandomConvFeatures(seed=4).extractor_id == ext.extractor_id != RandomConvFeatures(seed=5).extractor_id


def test_extractor_size_mismatch():
    with pytest.raises(SizeMismatch):
        RandomConvFeatures()([GrayImage(np.zeros((32, 32), np.uint8)), GrayImage(np.zeros((64, 64), np.uint8))])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_classes_separate_in_feature_space(synth32, seed):
    # centroid distance between the classes vs between two halves of one class
    ext = RandomConvFeatures(seed=seed)
    emb = {lab: ext([synth32.load_image(r) for r in synth32.select(label=lab)]) for lab in Label}
    between = np.linalg.norm(emb[Label.MALWARE].mean(axis=0) - emb[Label.BENIGN].mean(axis=0))
    within = np.mean([np.linalg.norm(v[::2].mean(axis=0) - v[1::2].mean(axis=0)) for v in emb.values()])
    assert between > within


def test_between_class_fid_exceeds_within_class(synth32):
    ext = RandomConvFeatures(dim=8)
    emb = {lab: embed([synth32.load_image(r) for r in synth32.select(label=lab)], ext) for lab in Label}
    mal = emb[Label.MALWARE].vectors
    halves = EmbeddingSet(mal[::2]), EmbeddingSet(mal[1::2])
    within = fid_infinity(*halves).value
    between = fid_infinity(halves[0], EmbeddingSet(emb[Label.BENIGN].vectors[::2])).value
    assert between > within
    assert math.isfinite(within)
