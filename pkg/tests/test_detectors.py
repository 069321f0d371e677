import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ihfood.detectors import (
    IhfDetector,
    ScoreTable,
    entropy_score,
    fit_ihf,
    fit_ihf_embeddings,
    fit_volume_predictor,
    load_detector,
    predicted_volume,
    save_detector,
    score_mahalanobis,
    score_nn,
    uncertainty_score,
    volume_outlier,
    volume_score,
)
from ihfood.errors import DataError, DimensionError, FitError
from ihfood.phantoms import make_phantoms
from ihfood.volgrid import PreprocessConfig, Volume

CFG = PreprocessConfig.mri()


def rank_oracle(train, vol):
    less = sum(1 for t in train if t < vol)
    leq = sum(1 for t in train if t <= vol)
    return (less + leq) / 2 * 100 / len(train)


def hand_detector(mu, sigma_inv, train):
    return IhfDetector(CFG, 2, None, np.asarray(train, float), np.asarray(mu, float),
                       np.asarray(sigma_inv, float), 0.0)


# ------------------------------------------------------------------------ IHF

def test_hand_covariance_with_population_normalization():
    E = np.array([[0, 0], [2, 0], [0, 2], [2, 2]], dtype=float)
    d = fit_ihf_embeddings(E, CFG, v=None, ridge=0.0)
    np.testing.assert_allclose(d.mu_hat, [1, 1])
    np.testing.assert_allclose(np.linalg.inv(d.sigma_inv), np.eye(2), atol=1e-12)
    # direct quadratic form at (3, 1): diff (2, 0) against identity covariance
    assert d.mahalanobis(np.array([3.0, 1.0])) == pytest.approx(2.0, abs=1e-12)
    assert d.mahalanobis(d.mu_hat) == 0.0


def test_mahalanobis_euclidean_reduction():
    d = hand_detector([0, 0], np.eye(2), [[0, 0], [1, 1]])
    assert d.mahalanobis(np.array([3.0, 4.0])) == pytest.approx(5.0, abs=1e-9)


def test_nn_nearer_of_two_points():
    d = hand_detector([0.5, 0], np.eye(2), [[0, 0], [1, 0]])
    assert d.nearest_neighbor(np.array([0.4, 0.0])) == pytest.approx(0.4, abs=1e-15)


def test_nn_matches_exhaustive_scan():
    r = np.random.default_rng(50)
    train = r.normal(size=(50, 6))
    d = IhfDetector(CFG, 6, None, train, train.mean(0), np.eye(6), 0.0)
    q = r.normal(size=6)
    best = min(math.sqrt(sum((a - b) ** 2 for a, b in zip(row, q))) for row in train.tolist())
    assert d.nearest_neighbor(q) == pytest.approx(best, rel=1e-15, abs=0)
    assert d.nearest_neighbor(train[17]) == 0.0


def test_identical_training_volumes_fail_with_pca():
    vol = Volume(np.random.default_rng(0).uniform(size=(6, 6, 4)), (1, 1, 1.5))
    with pytest.raises(FitError, match="zero variance"):
        fit_ihf([vol, vol, vol], CFG, m=20, v=0.9999)


def test_singular_without_ridge_fails():
    E = np.random.default_rng(1).dirichlet(np.ones(10), size=5)
    with pytest.raises(FitError, match="singular"):
        fit_ihf_embeddings(E, CFG, v=None, ridge=0.0)
    d = fit_ihf_embeddings(E, CFG, v=None, ridge=1e-3)
    assert np.all(np.linalg.eigvalsh(d.sigma_inv) > 0)


def test_too_few_training_volumes():
    with pytest.raises(FitError):
        fit_ihf([Volume(np.zeros((2, 2, 2)))], CFG)


@pytest.fixture(scope="module")
def phantom_detector():
    phantoms = make_phantoms(20, seed=3, prefix="tr", shape=(16, 16, 16), n_maps=0)
    vols = [p.image for p in phantoms]
    return fit_ihf(vols, CFG, m=150, v=0.9999), vols


def test_default_preset_rank_bound(phantom_detector):
    d, vols = phantom_detector
    assert 1 <= d.k <= 19
    assert d.pca is not None and d.pca.m == 150
    np.testing.assert_allclose(d.mu_hat, d.train_vectors.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(d.sigma_inv, d.sigma_inv.T, atol=1e-8)
    assert np.all(np.linalg.eigvalsh(d.sigma_inv) > 0)


def test_training_members_score_zero_nn(phantom_detector):
    d, vols = phantom_detector
    for v in vols[:5]:
        assert score_nn(d, v) == 0.0


def test_scores_are_permutation_invariant(phantom_detector):
    d, vols = phantom_detector
    r = np.random.default_rng(2)
    x = make_phantoms(1, seed=99, shape=(16, 16, 16), n_maps=0)[0].image
    shuffled = Volume(r.permutation(x.data.ravel()).reshape(x.shape), x.spacing)
    assert score_mahalanobis(d, shuffled) == score_mahalanobis(d, x)
    assert score_nn(d, shuffled) == score_nn(d, x)
    assert score_nn(d, x) > 0


def test_detector_json_roundtrip(tmp_path, phantom_detector):
    d, vols = phantom_detector
    save_detector(d, tmp_path / "det.json")
    back = load_detector(tmp_path / "det.json")
    assert isinstance(back, IhfDetector) and back.k == d.k and back.m == d.m
    assert back.preprocess_cfg == d.preprocess_cfg
    for name in ("train_vectors", "mu_hat", "sigma_inv"):
        assert getattr(back, name).tobytes() == getattr(d, name).tobytes()
    assert score_mahalanobis(back, vols[0]) == score_mahalanobis(d, vols[0])


def test_detector_json_dimension_mismatch(tmp_path, phantom_detector):
    d, _ = phantom_detector
    payload = d.to_dict()
    payload["m"] = 50
    with pytest.raises(DimensionError):
        IhfDetector.from_dict(payload)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mahalanobis_zero_only_at_mean(seed):
    r = np.random.default_rng(seed)
    k = int(r.integers(1, 5))
    E = r.normal(size=(k + 5, k))
    d = fit_ihf_embeddings(E, CFG, v=None, ridge=0.0)
    assert d.mahalanobis(d.mu_hat) <= 1e-9
    assert d.mahalanobis(d.mu_hat + r.normal(size=k)) > 1e-9


# ----------------------------------------------------------- volume predictor

def test_volume_score_examples():
    p = fit_volume_predictor([10, 20, 30, 40, 50, 60, 70, 80, 90, 100])
    assert volume_score(p, 105) == 50.0
    assert rank_oracle(p.train_volumes, 35) == 30.0
    assert volume_score(p, 35) == pytest.approx(20.0)
    odd = fit_volume_predictor([3, 1, 2, 5, 4])
    assert volume_score(odd, 3) == 0.0
    assert volume_score(odd, -1) == 50.0


def test_volume_predictor_needs_two():
    with pytest.raises(FitError):
        fit_volume_predictor([1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=2, max_size=30), st.integers(-5, 55), st.integers(0, 10))
def test_volume_score_monotone_away_from_median(train, a, step):
    p = fit_volume_predictor(train)
    med = float(np.median(train))
    for vol in (a, a + step):
        assert volume_score(p, vol) == pytest.approx(abs(rank_oracle(train, vol) - 50))
    if a >= med:
        assert volume_score(p, a + step) >= volume_score(p, a)
    if a + step <= med:
        assert volume_score(p, a) >= volume_score(p, a + step)


def test_volume_outlier_band():
    p = fit_volume_predictor(np.arange(1, 21))
    # q = 10: outside the [5, 95] percentile-rank band
    assert volume_outlier(p, 0.5, 10) and volume_outlier(p, 25, 10)
    assert not volume_outlier(p, 10, 10)


def test_predicted_volume_units():
    data = np.zeros((4, 4, 4))
    data[:2] = 0.9
    data[2, 0, 0] = 0.5  # threshold is strict
    pm = Volume(data, (1.0, 1.0, 1.5))
    assert predicted_volume(pm, "voxels") == 32
    assert predicted_volume(pm, "mm3") == 48.0


# ---------------------------------------------------------- prediction maps

def test_entropy_examples():
    assert entropy_score(Volume(np.full((3, 3, 3), 0.3))) == 0.0
    assert entropy_score(Volume(np.full((3, 3, 3), 1.0))) == 0.0
    assert entropy_score(Volume(np.full((3, 3, 3), 0.9))) == pytest.approx(0.32508297, abs=1e-6)


def test_entropy_averages_predicted_area_only():
    data = np.zeros((2, 2, 2))
    data[0] = 0.9
    data[1] = 0.1
    assert entropy_score(Volume(data)) == pytest.approx(-0.9 * np.log(0.9) - 0.1 * np.log(0.1), rel=1e-6)


def test_entropy_approaches_ln2():
    vals = [entropy_score(Volume(np.full((2, 2, 2), p))) for p in (0.99, 0.9, 0.7, 0.51, 0.5001)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(np.log(2), abs=1e-6)


def test_entropy_rejects_out_of_range():
    with pytest.raises(DataError):
        entropy_score(Volume(np.full((2, 2, 2), 1.2)))


def test_uncertainty_examples():
    a = Volume(np.zeros((3, 3, 3)))
    b = Volume(np.ones((3, 3, 3)))
    assert uncertainty_score([a, a, a]) == 0.0
    assert uncertainty_score([a, b]) == 0.5
    with pytest.raises(ValueError):
        uncertainty_score([a])
    with pytest.raises(DimensionError):
        uncertainty_score([a, Volume(np.zeros((2, 3, 3)))])


def test_uncertainty_matches_direct_std():
    r = np.random.default_rng(21)
    maps = [r.uniform(size=(4, 4, 4)).astype(np.float32) for _ in range(5)]
    total = 0.0
    for idx in np.ndindex(4, 4, 4):
        vals = [float(m[idx]) for m in maps]
        mu = sum(vals) / 5
        total += math.sqrt(sum((x - mu) ** 2 for x in vals) / 5)
    assert uncertainty_score([Volume(m) for m in maps]) == pytest.approx(total / 64, abs=1e-7)


# ----------------------------------------------------------------- ScoreTable

def test_score_table_csv_roundtrip(tmp_path):
    t = ScoreTable(["a", "b,c", "d"], [0.1, -2.5, 1e-300])
    t.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "case_id,score"
    back = ScoreTable.read_csv(tmp_path / "s.csv")
    assert back.case_ids == t.case_ids and back.scores.tobytes() == t.scores.tobytes()


def test_score_table_validation():
    with pytest.raises(DataError, match="duplicate"):
        ScoreTable(["a", "a"], [1, 2])
    with pytest.raises(DataError, match="non-finite"):
        ScoreTable(["a"], [np.inf])
    with pytest.raises(KeyError, match="x, y"):
        ScoreTable(["a"], [1]).select(["x", "a", "y"])
