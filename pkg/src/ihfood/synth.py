"""Seeded synthetic corruptions at severities 1..5.

Every generator draws its random quantities in the same order and amount
regardless of severity, so for a fixed seed higher severities rescale the
same perturbation rather than drawing a new one.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict

import numpy as np
from scipy import ndimage

from .volgrid import Volume, interp_axis

__all__ = [
    "KINDS",
    "CorruptionSpec",
    "SynthConfig",
    "corrupt",
    "fnv1a64",
    "mix64",
    "case_seed",
    "rng_for",
]

KINDS = ("local_noise", "elastic", "kspace_spikes", "anisotropy", "ghosting", "random_motion")
MAX_SEVERITY = 5
_MASK64 = (1 << 64) - 1


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def mix64(x: int) -> int:
    """SplitMix64 finalizer."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def case_seed(seed: int, case_id: str = "") -> int:
    return mix64((int(seed) & _MASK64) ^ fnv1a64(case_id))


def rng_for(seed: int, case_id: str = "") -> np.random.Generator:
    """PCG64 stream keyed by (seed, case_id); independent of execution order."""
    return np.random.Generator(np.random.PCG64(case_seed(seed, case_id)))


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}; expected one of {KINDS}")
        if isinstance(self.severity, bool) or int(self.severity) != self.severity \
                or not 1 <= self.severity <= MAX_SEVERITY:
            raise ValueError(f"severity must be an integer in 1..{MAX_SEVERITY}, got {self.severity}")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "severity", int(self.severity))
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def parse(cls, text: str) -> "CorruptionSpec":
        """Parse ``kind=ghosting,severity=3,seed=42``."""
        fields = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, sep, value = part.partition("=")
            if not sep:
                raise ValueError(f"expected key=value, got {part!r}")
            fields[key.strip()] = value.strip()
        unknown = set(fields) - {"kind", "severity", "seed"}
        if unknown:
            raise ValueError(f"unknown corruption field(s): {', '.join(sorted(unknown))}")
        if "kind" not in fields or "severity" not in fields:
            raise ValueError("corruption spec needs at least kind= and severity=")
        return cls(fields["kind"], int(fields["severity"]), int(fields.get("seed", 0)))

    def __str__(self) -> str:
        return f"kind={self.kind},severity={self.severity},seed={self.seed}"


@dataclass(frozen=True)
class SynthConfig:
    """Magnitude constants per severity unit."""

    patch_fraction: tuple = (0.10, 0.40)
    noise_sigma: float = 0.04
    blur_sigma: float = 0.5
    contrast_step: float = 0.15
    elastic_grid: int = 8
    elastic_sigma: float = 1.5
    spike_count: int = 2
    spike_magnitude: float = 0.04
    ghost_alpha: float = 0.06
    ghost_shift_fraction: float = 0.25
    motion_degrees: float = 2.0
    motion_voxels: float = 0.5


DEFAULT_CONFIG = SynthConfig()


# ----------------------------------------------------------------- generators

def _local_noise(x, s, rng, cfg):
    lo_frac, hi_frac = cfg.patch_fraction
    fracs = rng.uniform(lo_frac, hi_frac, size=3)
    sizes = [max(1, int(round(f * n))) for f, n in zip(fracs, x.shape)]
    starts = [int(rng.integers(0, n - size + 1)) for n, size in zip(x.shape, sizes)]
    choice = int(rng.integers(3))
    z = rng.standard_normal(sizes)
    sign = 1.0 if rng.random() < 0.5 else -1.0

    region = tuple(slice(a, a + size) for a, size in zip(starts, sizes))
    patch = x[region]
    if choice == 0:
        patch = patch + cfg.noise_sigma * s * z
    elif choice == 1:
        patch = ndimage.gaussian_filter(patch, sigma=cfg.blur_sigma * s, mode="nearest")
    else:
        factor = 1.0 + sign * cfg.contrast_step * s
        mean = patch.mean()
        patch = mean + factor * (patch - mean)
    out = x.copy()
    out[region] = patch
    return out


def _control_to_grid(control: np.ndarray, shape) -> np.ndarray:
    out = control
    for axis, n in enumerate(shape):
        g = control.shape[axis]
        pos = np.zeros(n) if n == 1 else np.arange(n) * (g - 1) / (n - 1)
        out = interp_axis(out, pos, axis)
    return out


def _elastic(x, s, rng, cfg):
    g = cfg.elastic_grid
    control = rng.standard_normal((3, g, g, g)) * (cfg.elastic_sigma * s)
    grid = np.indices(x.shape, dtype=np.float64)
    coords = np.stack([grid[a] + _control_to_grid(control[a], x.shape) for a in range(3)])
    return ndimage.map_coordinates(x, coords, order=1, mode="nearest")


def _kspace_spikes(x, s, rng, cfg, return_residue=False):
    shape = x.shape
    n_max = cfg.spike_count * MAX_SEVERITY
    positions, phases = [], []
    while len(positions) < n_max:
        idx = tuple(int(rng.integers(0, n)) for n in shape)
        mirror = tuple((-i) % n for i, n in zip(idx, shape))
        if idx == mirror:
            # DC and Nyquist-only frequencies are self-conjugate
            continue
        positions.append((idx, mirror))
        phases.append(rng.uniform(0.0, 2.0 * np.pi))
    k = np.fft.fftn(x)
    magnitude = cfg.spike_magnitude * s * abs(k[(0,) * len(shape)])
    for (idx, mirror), phi in zip(positions[: cfg.spike_count * s], phases):
        spike = magnitude * np.exp(1j * phi)
        k[idx] += spike
        k[mirror] += np.conj(spike)
    img = np.fft.ifftn(k)
    if return_residue:
        return img.real, float(np.abs(img.imag).max())
    return img.real


def _block_average(x, f, axis):
    n = x.shape[axis]
    starts = np.arange(0, n, f)
    sums = np.add.reduceat(x, starts, axis=axis)
    sizes = np.diff(np.append(starts, n)).astype(np.float64)
    shape = [1] * x.ndim
    shape[axis] = -1
    return sums / sizes.reshape(shape)


def _anisotropy(x, s, rng, cfg):
    axis = int(rng.integers(3))
    f = s + 1
    low = _block_average(x, f, axis)
    # original voxel i sits at (i - (f-1)/2) / f in low-resolution index units
    pos = (np.arange(x.shape[axis]) - (f - 1) / 2.0) / f
    return interp_axis(low, pos, axis)


def _shift(x, delta, axis):
    out = np.zeros_like(x)
    n = x.shape[axis]
    if abs(delta) >= n:
        return out
    src = [slice(None)] * x.ndim
    dst = [slice(None)] * x.ndim
    if delta >= 0:
        src[axis], dst[axis] = slice(0, n - delta), slice(delta, n)
    else:
        src[axis], dst[axis] = slice(-delta, n), slice(0, n + delta)
    out[tuple(dst)] = x[tuple(src)]
    return out


def _ghosting(x, s, rng, cfg):
    axis = int(rng.integers(3))
    alpha = cfg.ghost_alpha * s
    delta = int(round(x.shape[axis] * cfg.ghost_shift_fraction))
    ghosts = _shift(x, delta, axis) + _shift(x, -delta, axis)
    return (1.0 - alpha) * x + (alpha / 2.0) * ghosts


def _rotation(axis_vec, angle):
    k = axis_vec / np.linalg.norm(axis_vec)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def _random_motion(x, s, rng, cfg):
    n_max = 1 + MAX_SEVERITY
    axes = rng.standard_normal((n_max, 3))
    angles = rng.uniform(-1.0, 1.0, n_max)
    shifts = rng.uniform(-1.0, 1.0, (n_max, 3))
    center = (np.asarray(x.shape, dtype=np.float64) - 1) / 2.0
    acc = np.zeros_like(x)
    for j in range(1 + s):
        rot = _rotation(axes[j], np.deg2rad(angles[j] * cfg.motion_degrees * s))
        offset = center - rot @ center + shifts[j] * cfg.motion_voxels * s
        acc += ndimage.affine_transform(x, rot, offset=offset, order=1, mode="nearest")
    return acc / (1 + s)


_GENERATORS: Dict[str, Callable] = {
    "local_noise": _local_noise,
    "elastic": _elastic,
    "kspace_spikes": _kspace_spikes,
    "anisotropy": _anisotropy,
    "ghosting": _ghosting,
    "random_motion": _random_motion,
}


def corrupt(v: Volume, spec: CorruptionSpec, case_id: str = "",
            config: SynthConfig = DEFAULT_CONFIG) -> Volume:
    """Apply one corruption to a preprocessed volume and re-clip to [0, 1].

    The random stream is keyed by ``(spec.seed, case_id)``.
    """
    rng = rng_for(spec.seed, case_id)
    x = v.data.astype(np.float64)
    out = _GENERATORS[spec.kind](x, spec.severity, rng, config)
    return Volume(np.clip(out, 0.0, 1.0).astype(np.float32), v.spacing)


def kspace_imaginary_residue(v: Volume, spec: CorruptionSpec, case_id: str = "",
                             config: SynthConfig = DEFAULT_CONFIG) -> float:
    """Largest imaginary magnitude left after the inverse FFT of a spiked spectrum."""
    rng = rng_for(spec.seed, case_id)
    _, residue = _kspace_spikes(v.data.astype(np.float64), spec.severity, rng, config,
                                return_residue=True)
    return residue


def with_severity(spec: CorruptionSpec, severity: int) -> CorruptionSpec:
    return replace(spec, severity=severity)
