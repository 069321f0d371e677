"""Volume container, file I/O, resampling and intensity standardization.

Axes are ordered (sagittal, coronal, axial) and ``spacing`` holds the
physical voxel size in millimeters along each of them.
"""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import DataError, FormatError

__all__ = [
    "Volume",
    "FixedWindow",
    "PercentileWindow",
    "PreprocessConfig",
    "load_volume",
    "save_volume",
    "resample",
    "preprocess",
    "percentile",
    "interp_axis",
]

PathLike = Union[str, Path]

CANONICAL_SPACING = (1.0, 1.0, 1.5)
CT_WINDOW_HU = (-1350.0, 300.0)
MRI_PERCENTILES = (1.0, 99.0)


@dataclass(frozen=True, eq=False)
class Volume:
    """Dense 3D float32 grid with per-axis spacing in mm."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise FormatError(f"volume data must be 3D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise FormatError(f"volume shape must be positive, got {data.shape}")
        if data.dtype != np.float32 or not data.flags.c_contiguous:
            data = np.ascontiguousarray(data, dtype=np.float32)
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise ValueError(f"spacing must be 3 positive finite reals, got {self.spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(data, self.spacing)


@dataclass(frozen=True)
class FixedWindow:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"fixed window needs lo < hi, got ({self.lo}, {self.hi})")

    def bounds(self, data: np.ndarray) -> tuple:
        return float(self.lo), float(self.hi)


@dataclass(frozen=True)
class PercentileWindow:
    p_lo: float
    p_hi: float

    def __post_init__(self):
        if not 0 <= self.p_lo < self.p_hi <= 100:
            raise ValueError(
                f"percentile window needs 0 <= p_lo < p_hi <= 100, got ({self.p_lo}, {self.p_hi})"
            )

    def bounds(self, data: np.ndarray) -> tuple:
        lo, hi = percentile(data, [self.p_lo, self.p_hi])
        return float(lo), float(hi)


@dataclass(frozen=True)
class PreprocessConfig:
    """Target grid and intensity window applied before histogramming."""

    target_spacing: tuple = CANONICAL_SPACING
    clip: Union[FixedWindow, PercentileWindow] = field(
        default_factory=lambda: PercentileWindow(*MRI_PERCENTILES)
    )

    def __post_init__(self):
        ts = tuple(float(s) for s in self.target_spacing)
        if len(ts) != 3 or not all(np.isfinite(s) and s > 0 for s in ts):
            raise ValueError(f"target_spacing must be 3 positive reals, got {self.target_spacing}")
        object.__setattr__(self, "target_spacing", ts)

    @classmethod
    def ct(cls, target_spacing=CANONICAL_SPACING) -> "PreprocessConfig":
        return cls(target_spacing, FixedWindow(*CT_WINDOW_HU))

    @classmethod
    def mri(cls, target_spacing=CANONICAL_SPACING) -> "PreprocessConfig":
        return cls(target_spacing, PercentileWindow(*MRI_PERCENTILES))

    def to_dict(self) -> dict:
        if isinstance(self.clip, FixedWindow):
            clip = {"mode": "fixed", "lo": self.clip.lo, "hi": self.clip.hi}
        else:
            clip = {"mode": "percentile", "lo": self.clip.p_lo, "hi": self.clip.p_hi}
        return {"target_spacing": list(self.target_spacing), "clip": clip}

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        clip = d.get("clip", {"mode": "percentile", "lo": 1.0, "hi": 99.0})
        mode = clip.get("mode")
        if mode == "fixed":
            window = FixedWindow(float(clip["lo"]), float(clip["hi"]))
        elif mode == "percentile":
            window = PercentileWindow(float(clip["lo"]), float(clip["hi"]))
        else:
            raise ValueError(f"clip.mode must be 'fixed' or 'percentile', got {mode!r}")
        return cls(tuple(d.get("target_spacing", CANONICAL_SPACING)), window)


def percentile(values: np.ndarray, q) -> np.ndarray:
    """Linear-interpolation percentile over sorted values, inclusive endpoints."""
    return np.percentile(np.asarray(values, dtype=np.float64).ravel(), q, method="linear")


# --------------------------------------------------------------------------- I/O

_NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 16: np.float32, 64: np.float64}


def _infer_format(path: Path) -> str:
    name = path.name.lower()
    if name.endswith((".nii", ".nii.gz")):
        return "nifti1"
    if name.endswith((".json", ".raw")):
        return "rvol"
    raise FormatError(f"cannot infer volume format from {path.name!r}")


def _rvol_paths(path: Path) -> tuple:
    if path.suffix.lower() == ".raw":
        path = path.with_suffix(".json")
    elif path.suffix.lower() != ".json":
        path = path.with_name(path.name + ".json")
    return path, path.with_suffix(".raw")


def _read_rvol(path: Path):
    header_path, _ = _rvol_paths(path)
    with open(header_path, "r", encoding="utf-8") as fh:
        header = json.load(fh)
    try:
        shape = tuple(int(s) for s in header["shape"])
        spacing = tuple(float(s) for s in header["spacing"])
        raw_name = header["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{header_path}: malformed rvol header ({exc})") from exc
    if header.get("dtype", "float32") != "float32":
        raise FormatError(f"{header_path}: rvol dtype must be float32")
    if header.get("order", "row-major") != "row-major":
        raise FormatError(f"{header_path}: rvol order must be row-major")
    if len(shape) != 3:
        raise FormatError(f"{header_path}: rvol shape must have 3 entries, got {shape}")
    payload = np.fromfile(header_path.parent / raw_name, dtype="<f4")
    expected = int(np.prod(shape))
    if payload.size != expected:
        raise FormatError(
            f"{header_path}: payload holds {payload.size} values, header shape needs {expected}"
        )
    return payload.reshape(shape), spacing


def _read_nifti1(path: Path):
    opener = gzip.open if path.name.lower().endswith(".gz") else open
    with opener(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 348:
        raise FormatError(f"{path}: file shorter than a NIfTI-1 header")
    for endian in "<>":
        if struct.unpack(endian + "i", blob[:4])[0] == 348:
            break
    else:
        raise FormatError(f"{path}: sizeof_hdr is not 348")
    if blob[344:347] != b"n+1":
        raise FormatError(f"{path}: magic is {blob[344:348]!r}, expected single-file 'n+1'")
    dim = struct.unpack(endian + "8h", blob[40:56])
    datatype = struct.unpack(endian + "h", blob[70:72])[0]
    pixdim = struct.unpack(endian + "8f", blob[76:108])
    vox_offset = int(struct.unpack(endian + "f", blob[108:112])[0])
    slope, inter = struct.unpack(endian + "2f", blob[112:120])
    if dim[0] != 3:
        raise FormatError(f"{path}: expected 3 spatial dimensions, header declares {dim[0]}")
    if datatype not in _NIFTI_DTYPES:
        raise FormatError(f"{path}: unsupported NIfTI datatype code {datatype}")
    shape = tuple(int(d) for d in dim[1:4])
    if min(shape) < 1:
        raise FormatError(f"{path}: non-positive dimension in {shape}")
    dtype = np.dtype(_NIFTI_DTYPES[datatype]).newbyteorder(endian)
    count = int(np.prod(shape))
    offset = max(vox_offset, 352)
    if len(blob) < offset + count * dtype.itemsize:
        raise FormatError(f"{path}: truncated voxel payload")
    flat = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    data = flat.reshape(shape, order="F").astype(np.float64)
    if slope not in (0.0, 1.0) or inter != 0.0:
        data = data * (slope if slope != 0.0 else 1.0) + inter
    spacing = tuple(abs(float(p)) for p in pixdim[1:4])
    return np.ascontiguousarray(data), spacing


def load_volume(path: PathLike, format: str | None = None, nonfinite: str = "raise") -> Volume:
    """Read a volume from an rvol pair or an uncompressed/gzipped NIfTI-1 file.

    ``nonfinite`` selects the policy for NaN/Inf voxels: ``"raise"`` or ``"zero"``.
    """
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt == "rvol":
        data, spacing = _read_rvol(path)
    elif fmt == "nifti1":
        data, spacing = _read_nifti1(path)
    else:
        raise FormatError(f"unknown volume format {fmt!r}")
    data = np.asarray(data, dtype=np.float32)
    bad = ~np.isfinite(data)
    n_bad = int(bad.sum())
    if n_bad:
        if nonfinite == "zero":
            data = np.where(bad, np.float32(0), data)
        else:
            raise DataError(f"{path}: {n_bad} non-finite voxel(s) (NaN/Inf)")
    return Volume(data, spacing)


def save_volume(v: Volume, path: PathLike, format: str = "rvol") -> Path:
    """Write ``v`` as ``<name>.json`` + ``<name>.raw``; returns the header path."""
    if format != "rvol":
        raise FormatError(f"only rvol output is supported, got {format!r}")
    header_path, raw_path = _rvol_paths(Path(path))
    header = {
        "shape": list(v.shape),
        "spacing": list(v.spacing),
        "dtype": "float32",
        "order": "row-major",
        "data": raw_path.name,
    }
    v.data.astype("<f4", copy=False).tofile(raw_path)
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh)
    return header_path


# --------------------------------------------------------------------- resampling

def interp_axis(data: np.ndarray, positions: np.ndarray, axis: int) -> np.ndarray:
    """Linearly interpolate ``data`` along ``axis`` at fractional index ``positions``.

    Positions outside ``[0, n-1]`` clamp to the edge voxel. Applying this on
    each axis in turn is exactly trilinear interpolation.
    """
    n = data.shape[axis]
    pos = np.clip(np.asarray(positions, dtype=np.float64), 0.0, n - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    w = pos - lo
    shape = [1] * data.ndim
    shape[axis] = -1
    w = w.reshape(shape)
    a = np.take(data, lo, axis=axis)
    b = np.take(data, hi, axis=axis)
    return a * (1.0 - w) + b * w


def _center_positions(n_out: int, scale: float) -> np.ndarray:
    # output voxel j's center, expressed in input index coordinates (shared grid corner)
    return (np.arange(n_out) + 0.5) * scale - 0.5


def resample(v: Volume, target_spacing: Sequence[float]) -> Volume:
    """Trilinear resampling onto a grid with ``target_spacing`` (mm)."""
    target = tuple(float(t) for t in target_spacing)
    if len(target) != 3 or not all(np.isfinite(t) and t > 0 for t in target):
        raise ValueError(f"target spacing must be 3 positive reals, got {target_spacing}")
    out = v.data.astype(np.float64)
    for axis, (n, s, t) in enumerate(zip(v.shape, v.spacing, target)):
        n_out = max(1, int(round(n * s / t)))
        if n_out == n and s == t:
            continue
        out = interp_axis(out, _center_positions(n_out, t / s), axis)
    return Volume(out.astype(np.float32), target)


def preprocess(v: Volume, cfg: PreprocessConfig) -> Volume:
    """Resample, clip to the configured window, then min-max scale to [0, 1]."""
    if v.spacing != cfg.target_spacing:
        v = resample(v, cfg.target_spacing)
    data = v.data.astype(np.float64)
    lo, hi = cfg.clip.bounds(data)
    data = np.clip(data, lo, hi)
    dmin, dmax = data.min(), data.max()
    if dmax > dmin:
        data = (data - dmin) / (dmax - dmin)
    else:
        data = np.zeros_like(data)
    return Volume(data.astype(np.float32), v.spacing)
