"""Intensity-histogram embeddings and the PCA used to compress them."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, DimensionError, FitError
from .volgrid import Volume

__all__ = [
    "Embedding",
    "PcaModel",
    "histogram",
    "histogram_values",
    "fit_pca",
    "pca_transform",
]


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    bin_edges: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[0]


def histogram_values(data: np.ndarray, m: int) -> np.ndarray:
    """Probability mass in ``m`` uniform bins over [0, 1]; the last bin is closed."""
    if int(m) != m or m < 1:
        raise ValueError(f"bin count must be a positive integer, got {m}")
    m = int(m)
    flat = np.asarray(data).ravel()
    if flat.size == 0:
        raise DataError("cannot histogram an empty array")
    lo, hi = flat.min(), flat.max()
    if not (lo >= 0.0 and hi <= 1.0):
        raise DataError(
            f"histogram expects preprocessed intensities in [0, 1], got range [{lo}, {hi}]"
        )
    idx = np.minimum((flat.astype(np.float64) * m).astype(np.intp), m - 1)
    counts = np.bincount(idx, minlength=m)
    return counts / flat.size


def histogram(v: Volume, m: int) -> Embedding:
    values = histogram_values(v.data, m)
    return Embedding(values, np.linspace(0.0, 1.0, int(m) + 1))


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Frozen PCA projection: ``components @ (e - mean)``.

    Attributes
    ----------
    mean : (m,) ndarray
        Column mean of the training embeddings.
    components : (k, m) ndarray
        Orthonormal principal directions, largest variance first.
    explained_variance_ratio : (k,) ndarray
        Share of total variance carried by each retained component.
    v_target : float
        Requested cumulative explained variance.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    v_target: float

    @property
    def m(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def transform(self, e: np.ndarray) -> np.ndarray:
        return pca_transform(self, e)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "k": self.k,
            "v_target": float(self.v_target),
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        m, k = int(d["m"]), int(d["k"])
        mean = np.asarray(d["mean"], dtype=np.float64)
        components = np.asarray(d["components"], dtype=np.float64).reshape(k, m)
        ratio = np.asarray(d["explained_variance_ratio"], dtype=np.float64)
        if mean.shape != (m,) or ratio.shape != (k,):
            raise DimensionError(
                f"PCA arrays disagree with declared m={m}, k={k}: "
                f"mean {mean.shape}, ratios {ratio.shape}"
            )
        return cls(mean, components, ratio, float(d["v_target"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        return cls.from_dict(json.loads(text))


def fit_pca(train_embeddings: np.ndarray, v: float) -> PcaModel:
    """Fit PCA on an ``n x m`` matrix, keeping the fewest components reaching ``v``.

    Components come from the SVD of the centered matrix. Each component is
    sign-flipped so that its largest-magnitude entry is positive. If the
    target cannot be reached the model keeps every non-degenerate direction.
    Zero-variance input yields a model with ``k == 0``.
    """
    X = np.asarray(train_embeddings, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected an n x m matrix, got shape {X.shape}")
    n, m = X.shape
    if n < 2:
        raise FitError(f"PCA needs at least 2 samples, got {n}")
    if not 0 < v <= 1:
        raise ValueError(f"explained-variance target must lie in (0, 1], got {v}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    tol = s[0] * max(n, m) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if rank == 0:
        return PcaModel(mean, np.zeros((0, m)), np.zeros(0), float(v))
    var = s[:rank] ** 2
    ratio = var / np.sum(s**2)
    cumulative = np.cumsum(ratio)
    reached = np.nonzero(cumulative >= v)[0]
    k = int(reached[0]) + 1 if reached.size else rank
    components = vt[:k].copy()
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), pivots])
    components *= signs[:, None]
    return PcaModel(mean, components, ratio[:k].copy(), float(v))


def pca_transform(model: PcaModel, e: np.ndarray) -> np.ndarray:
    """Project one m-vector (or an ``n x m`` batch) onto the retained components."""
    e = np.asarray(e, dtype=np.float64)
    if e.shape[-1] != model.m:
        raise DimensionError(f"embedding has dimension {e.shape[-1]}, PCA model expects {model.m}")
    return (e - model.mean) @ model.components.T


def maybe_transform(model: Optional[PcaModel], e: np.ndarray) -> np.ndarray:
    return np.asarray(e, dtype=np.float64) if model is None else pca_transform(model, e)
