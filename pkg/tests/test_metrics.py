import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ihfood.metrics import auroc, evaluate, fechner_correlation, fpr_at_tpr


def fpr_scan_oracle(ids, ood, target=0.95):
    best = None
    for t in sorted(set(ood)):
        if sum(s >= t for s in ood) / len(ood) >= target:
            best = t
    t = -np.inf if best is None else best
    return sum(s >= t for s in ids) / len(ids), t


def auroc_pair_oracle(ids, ood):
    wins = 0.0
    for o in ood:
        for i in ids:
            wins += 1.0 if o > i else 0.5 if o == i else 0.0
    return wins / (len(ids) * len(ood))


def fechner_oracle(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    score = 0
    for x, y in zip(a, b):
        score += -1 if (x - ma) * (y - mb) < 0 else 1
    return score / len(a)


scores = st.lists(st.integers(-6, 6).map(lambda x: x / 2), min_size=1, max_size=30)


def test_perfect_separation():
    fpr, t = fpr_at_tpr([1, 2, 3], [10, 11, 12])
    assert (fpr, t) == (0.0, 10.0)
    assert auroc([1, 2, 3], [10, 11, 12]) == 1.0


def test_indistinguishable():
    assert fpr_at_tpr([5, 5, 5], [5, 5, 5])[0] == 1.0
    assert auroc([5, 5, 5], [5, 5, 5]) == 0.5


def test_fpr_worked_example():
    ids, ood = [0.1, 0.2, 0.3, 0.4, 0.5], [0.35, 0.45, 0.55, 0.65]
    assert fpr_scan_oracle(ids, ood) == (0.4, 0.35)
    assert fpr_at_tpr(ids, ood) == (0.4, 0.35)


def test_auroc_random_matches_pair_count():
    r = np.random.default_rng(3)
    ids, ood = r.normal(size=30).round(1), (r.normal(size=20) + 0.5).round(1)
    assert auroc(ids, ood) == auroc_pair_oracle(ids.tolist(), ood.tolist())


def test_errors():
    for fn in (fpr_at_tpr, auroc):
        with pytest.raises(ValueError):
            fn([], [1])
        with pytest.raises(ValueError):
            fn([1], [float("nan")])
    with pytest.raises(ValueError):
        fechner_correlation([1, 2], [1])
    with pytest.raises(ValueError):
        fechner_correlation([1], [1])


@settings(max_examples=200, deadline=None)
@given(scores, scores, st.sampled_from([0.5, 0.8, 0.9, 0.95, 1.0]))
def test_fpr_matches_scan(ids, ood, target):
    assert fpr_at_tpr(ids, ood, target) == fpr_scan_oracle(ids, ood, target)


@settings(max_examples=200, deadline=None)
@given(scores, scores)
def test_auroc_matches_pairs_and_complements(ids, ood):
    a = auroc(ids, ood)
    assert a == auroc_pair_oracle(ids, ood)
    assert a + auroc(ood, ids) == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= a <= 1.0


@settings(max_examples=100, deadline=None)
@given(scores, scores)
def test_invariance_under_increasing_transform(ids, ood):
    f = lambda x: np.exp(np.asarray(x)) * 3 + 1  # noqa: E731
    assert auroc(ids, ood) == auroc(f(ids), f(ood))
    assert fpr_at_tpr(ids, ood)[0] == fpr_at_tpr(f(ids), f(ood))[0]


@settings(max_examples=100, deadline=None)
@given(scores, scores)
def test_lower_target_never_raises_fpr(ids, ood):
    fprs = [fpr_at_tpr(ids, ood, t)[0] for t in (1.0, 0.95, 0.9, 0.7, 0.5, 0.1)]
    assert all(b <= a for a, b in zip(fprs, fprs[1:]))


def test_fechner_examples():
    assert fechner_correlation([1, 2, 3], [4, 5, 6]) == 1.0
    assert fechner_correlation([1, 2, 4, 5], [5, 4, 2, 1]) == -1.0


def test_fechner_random_matches_sign_count():
    r = np.random.default_rng(13)
    a, b = r.normal(size=13), r.normal(size=13)
    assert fechner_correlation(a, b) == fechner_oracle(a.tolist(), b.tolist())


def test_fechner_reproduces_reference_coefficients():
    # per-setup FPR columns and their reported pairwise coefficients
    ihf_nn = [.00, .51, .54, .88, .15, .49, .00, .00, .00, .00, .09, .00, .47]
    ihf_mah = [.00, .64, .72, .85, .67, .62, .00, .00, .00, .00, .05, .00, .47]
    svd = [.00, .13, .75, .89, .37, .37, .00, .00, .00, .36, .20, .58, .33]
    volume = [.53, .84, .82, .86, .81, .85, .01, .00, .74, .90, .93, .94, .71]
    entropy = [.56, .78, .87, .83, .84, .81, .86, .85, .89, .73, .81, .91, .75]
    assert round(fechner_correlation(ihf_nn, ihf_mah), 2) == 0.85
    assert round(fechner_correlation(ihf_nn, svd), 2) == 0.38
    assert round(fechner_correlation(ihf_nn, volume), 2) == 0.23
    assert round(fechner_correlation(ihf_nn, entropy), 2) == -0.23
    assert round(fechner_correlation(volume, svd), 2) == 0.54


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40))
def test_fechner_self_and_negation(a):
    a = np.asarray(a)
    if np.ptp(a) > 0:
        assert fechner_correlation(a, a) == 1.0
    if np.all(a - a.mean() != 0):
        assert fechner_correlation(a, -a) == -1.0
    assert -1.0 <= fechner_correlation(a, a[::-1]) <= 1.0


def test_evaluate_bundle():
    res = evaluate([0.1, 0.2], [0.3, 0.4, 0.5])
    assert res.n_id == 2 and res.n_ood == 3 and res.auroc == 1.0 and res.fpr_at_tpr95 == 0.0
    assert res.threshold == 0.3
