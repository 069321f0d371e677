import numpy as np
import pytest

from ihfood.phantoms import make_phantom
from ihfood.synth import (
    KINDS,
    CorruptionSpec,
    SynthConfig,
    case_seed,
    corrupt,
    fnv1a64,
    kspace_imaginary_residue,
    mix64,
)
from ihfood.volgrid import PreprocessConfig, Volume, preprocess


@pytest.fixture(scope="module")
def phantom():
    return preprocess(make_phantom("p0", seed=1, shape=(24, 24, 24), n_maps=0).image,
                      PreprocessConfig.mri())


def blob(shape=(24, 24, 24)):
    grid = np.indices(shape, dtype=np.float64)
    c = [(n - 1) / 2 for n in shape]
    r2 = sum((grid[a] - c[a]) ** 2 for a in range(3))
    return Volume(0.8 * np.exp(-r2 / (2 * 4.0**2)) + 0.1, (1, 1, 1.5))


def test_hash_reference_values():
    # FNV-1a 64 and SplitMix64 published test vectors
    assert fnv1a64("") == 0xCBF29CE484222325
    assert fnv1a64("a") == 0xAF63DC4C8601EC8C
    assert fnv1a64("foobar") == 0x85944171F73967E8
    assert mix64(0) == 0xE220A8397B1DCDAF
    assert case_seed(0, "") == mix64(0xCBF29CE484222325)


def test_spec_validation_and_parse():
    with pytest.raises(ValueError):
        CorruptionSpec("blur", 1)
    with pytest.raises(ValueError):
        CorruptionSpec("ghosting", 0)
    with pytest.raises(ValueError):
        CorruptionSpec("ghosting", 6)
    with pytest.raises(ValueError):
        CorruptionSpec("ghosting", 1, seed=-1)
    spec = CorruptionSpec.parse("kind=kspace_spikes,severity=3,seed=42")
    assert spec == CorruptionSpec("kspace_spikes", 3, 42)
    assert CorruptionSpec.parse(str(spec)) == spec
    with pytest.raises(ValueError):
        CorruptionSpec.parse("kind=ghosting,severity=2,colour=red")


@pytest.mark.parametrize("kind", KINDS)
def test_determinism_shape_and_range(phantom, kind):
    spec = CorruptionSpec(kind, 3, 1234)
    a = corrupt(phantom, spec, "case-7")
    b = corrupt(phantom, spec, "case-7")
    assert a.data.tobytes() == b.data.tobytes()
    assert a.shape == phantom.shape and a.spacing == phantom.spacing
    assert a.data.min() >= 0 and a.data.max() <= 1
    assert not np.array_equal(a.data, phantom.data)
    other = corrupt(phantom, spec, "case-8")
    assert other.data.tobytes() != a.data.tobytes()


def test_anisotropy_preserves_axis_constant_volume():
    # constant along every axis, so whichever axis is drawn is constant
    base = Volume(np.full((10, 9, 7), 0.37), (1, 1, 1.5))
    out = corrupt(base, CorruptionSpec("anisotropy", 1, 5))
    np.testing.assert_allclose(out.data, base.data, atol=1e-6)


def test_anisotropy_constant_along_chosen_axis():
    r = np.random.default_rng(0)
    plane = r.uniform(0, 1, (10, 9))
    for seed in range(6):
        for axis in range(3):
            shape = [10, 9, 8]
            data = np.moveaxis(np.broadcast_to(plane[..., None], (10, 9, shape[axis])), 2, axis)
            vol = Volume(np.ascontiguousarray(data), (1, 1, 1))
            out = corrupt(vol, CorruptionSpec("anisotropy", 1, seed))
            chosen = np.random.Generator(np.random.PCG64(case_seed(seed, ""))).integers(3)
            if chosen == axis:
                np.testing.assert_allclose(out.data, vol.data, atol=1e-6)


def test_kspace_severity_increases_deviation():
    v = blob()
    d1 = np.abs(corrupt(v, CorruptionSpec("kspace_spikes", 1, 9)).data - v.data).mean()
    d5 = np.abs(corrupt(v, CorruptionSpec("kspace_spikes", 5, 9)).data - v.data).mean()
    assert d5 > d1 > 0


def test_kspace_output_is_real(phantom):
    for sev in (1, 5):
        assert kspace_imaginary_residue(phantom, CorruptionSpec("kspace_spikes", sev, 3)) < 1e-5
    odd = Volume(np.random.default_rng(0).uniform(size=(7, 8, 5)))
    assert kspace_imaginary_residue(odd, CorruptionSpec("kspace_spikes", 5, 1)) < 1e-5


def test_ghosting_severity_one_bounded(phantom):
    cfg = SynthConfig()
    alpha = cfg.ghost_alpha
    out = corrupt(phantom, CorruptionSpec("ghosting", 1, 77))
    diff = np.abs(out.data.astype(np.float64) - phantom.data)
    assert diff.max() <= alpha * phantom.data.max() + 1e-6
    assert diff.max() > 0


def test_ghosting_matches_formula():
    r = np.random.default_rng(4)
    data = r.uniform(0, 1, (8, 12, 6))
    v = Volume(data, (1, 1, 1))
    spec = CorruptionSpec("ghosting", 4, 21)
    axis = int(np.random.Generator(np.random.PCG64(case_seed(21, "c"))).integers(3))
    n = data.shape[axis]
    delta = int(round(n / 4))
    x = v.data.astype(np.float64)
    plus = np.zeros_like(x)
    minus = np.zeros_like(x)
    for i in range(n):
        if i - delta >= 0:
            idx = [slice(None)] * 3
            src = [slice(None)] * 3
            idx[axis], src[axis] = i, i - delta
            plus[tuple(idx)] = x[tuple(src)]
        if i + delta < n:
            idx = [slice(None)] * 3
            src = [slice(None)] * 3
            idx[axis], src[axis] = i, i + delta
            minus[tuple(idx)] = x[tuple(src)]
    alpha = 0.06 * 4
    expected = np.clip((1 - alpha) * x + alpha / 2 * (plus + minus), 0, 1)
    np.testing.assert_allclose(corrupt(v, spec, "c").data, expected, atol=1e-6)


@pytest.mark.parametrize("kind", KINDS)
def test_severity_monotone_mean_l2(phantom, kind):
    dists = []
    for sev in range(1, 6):
        d = [np.linalg.norm(corrupt(phantom, CorruptionSpec(kind, sev, s), "x").data - phantom.data)
             for s in range(8)]
        dists.append(np.mean(d))
    assert all(b >= a for a, b in zip(dists, dists[1:])), dists


def test_config_is_respected(phantom):
    spec = CorruptionSpec("ghosting", 2, 3)
    weak = corrupt(phantom, spec, config=SynthConfig(ghost_alpha=0.01))
    strong = corrupt(phantom, spec, config=SynthConfig(ghost_alpha=0.1))
    assert np.abs(weak.data - phantom.data).sum() < np.abs(strong.data - phantom.data).sum()
