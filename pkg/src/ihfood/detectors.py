"""OOD scorers: IHF (Mahalanobis / nearest neighbor) and the non-DL baselines.

Every score follows the same orientation: larger means more out-of-distribution.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .embedding import PcaModel, fit_pca, histogram_values, maybe_transform
from .errors import DataError, DimensionError, FitError
from .volgrid import PreprocessConfig, Volume, preprocess

__all__ = [
    "IhfDetector",
    "fit_ihf",
    "fit_ihf_embeddings",
    "score_mahalanobis",
    "score_nn",
    "VolumePredictor",
    "fit_volume_predictor",
    "volume_score",
    "volume_outlier",
    "predicted_volume",
    "entropy_score",
    "uncertainty_score",
    "ScoreTable",
    "save_detector",
    "load_detector",
]

DEFAULT_M = 150
DEFAULT_V = 0.9999
DEFAULT_RIDGE = 1e-9
PREDICTED_AREA_THRESHOLD = 0.5


# ------------------------------------------------------------------------- IHF

@dataclass(frozen=True, eq=False)
class IhfDetector:
    preprocess_cfg: PreprocessConfig
    m: int
    pca: Optional[PcaModel]
    train_vectors: np.ndarray
    mu_hat: np.ndarray
    sigma_inv: np.ndarray
    ridge: float = DEFAULT_RIDGE

    @property
    def k(self) -> int:
        return self.train_vectors.shape[1]

    def embed(self, x: Volume, preprocessed: bool = False) -> np.ndarray:
        """Map a volume to its (optionally PCA-reduced) histogram vector."""
        if not preprocessed:
            x = preprocess(x, self.preprocess_cfg)
        return maybe_transform(self.pca, histogram_values(x.data, self.m))

    def mahalanobis(self, vec: np.ndarray) -> float:
        vec = self._check(vec)
        diff = vec - self.mu_hat
        quad = float(diff @ self.sigma_inv @ diff)
        return math.sqrt(max(quad, 0.0))

    def nearest_neighbor(self, vec: np.ndarray) -> float:
        vec = self._check(vec)
        return float(np.sqrt(np.min(np.sum((self.train_vectors - vec) ** 2, axis=1))))

    def _check(self, vec) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.k,):
            raise DimensionError(f"vector has shape {vec.shape}, detector works in {self.k} dims")
        return vec

    def to_dict(self) -> dict:
        return {
            "kind": "ihf",
            "preprocess": self.preprocess_cfg.to_dict(),
            "m": self.m,
            "pca": None if self.pca is None else self.pca.to_dict(),
            "train_vectors": self.train_vectors.tolist(),
            "mu_hat": self.mu_hat.tolist(),
            "sigma_inv": self.sigma_inv.tolist(),
            "ridge": self.ridge,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IhfDetector":
        m = int(d["m"])
        pca = None if d.get("pca") is None else PcaModel.from_dict(d["pca"])
        k = pca.k if pca is not None else m
        if pca is not None and pca.m != m:
            raise DimensionError(f"detector declares m={m} but its PCA model expects m={pca.m}")
        train = np.asarray(d["train_vectors"], dtype=np.float64)
        mu = np.asarray(d["mu_hat"], dtype=np.float64)
        sigma_inv = np.asarray(d["sigma_inv"], dtype=np.float64)
        if train.ndim != 2 or train.shape[1] != k or mu.shape != (k,) or sigma_inv.shape != (k, k):
            raise DimensionError(
                f"detector arrays do not match m={m}, k={k}: train_vectors {train.shape}, "
                f"mu_hat {mu.shape}, sigma_inv {sigma_inv.shape}"
            )
        return cls(
            PreprocessConfig.from_dict(d["preprocess"]), m, pca, train, mu, sigma_inv,
            float(d.get("ridge", DEFAULT_RIDGE)),
        )


def _inverse_covariance(vectors: np.ndarray, ridge: float) -> tuple:
    n, k = vectors.shape
    mu = vectors.mean(axis=0)
    centered = vectors - mu
    sigma = centered.T @ centered / n
    trace = float(np.trace(sigma))
    if trace <= 0.0:
        raise FitError(
            "training vectors have zero variance; the covariance cannot be inverted"
        )
    reg = sigma + ridge * (trace / k) * np.eye(k)
    w, q = np.linalg.eigh(reg)
    if w[0] <= w[-1] * k * np.finfo(np.float64).eps:
        raise FitError(
            f"covariance is singular (n={n} samples in {k} dims, ridge={ridge}); "
            "enable PCA or raise the ridge"
        )
    inv = (q / w) @ q.T
    return mu, 0.5 * (inv + inv.T)


def fit_ihf_embeddings(
    embeddings: np.ndarray,
    cfg: PreprocessConfig | None = None,
    v: Optional[float] = DEFAULT_V,
    ridge: float = DEFAULT_RIDGE,
) -> IhfDetector:
    """Fit the IHF statistics from an ``n x m`` matrix of histogram vectors.

    With ``v=None`` no PCA is fitted and vectors are used as they are.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    if E.ndim != 2:
        raise DimensionError(f"expected an n x m embedding matrix, got shape {E.shape}")
    n, m = E.shape
    if n < 2:
        raise FitError(f"IHF needs at least 2 training volumes, got {n}")
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge}")
    pca = None
    if v is not None:
        pca = fit_pca(E, v)
        if pca.k == 0:
            raise FitError("training histograms have zero variance (PCA kept 0 components)")
    # row by row, exactly as queries are embedded, so members score NN distance 0
    vectors = np.stack([maybe_transform(pca, e) for e in E])
    mu, sigma_inv = _inverse_covariance(vectors, ridge)
    return IhfDetector(cfg or PreprocessConfig(), m, pca, vectors, mu, sigma_inv, float(ridge))


def fit_ihf(
    train_volumes: Sequence[Volume],
    cfg: PreprocessConfig,
    m: int = DEFAULT_M,
    v: Optional[float] = DEFAULT_V,
    ridge: float = DEFAULT_RIDGE,
    preprocessed: bool = False,
) -> IhfDetector:
    """Preprocess, histogram and (optionally) PCA-reduce training volumes, then
    estimate the mean and inverse covariance used by the Mahalanobis score."""
    if len(train_volumes) < 2:
        raise FitError(f"IHF needs at least 2 training volumes, got {len(train_volumes)}")
    rows = []
    for vol in train_volumes:
        if not preprocessed:
            vol = preprocess(vol, cfg)
        rows.append(histogram_values(vol.data, m))
    return fit_ihf_embeddings(np.vstack(rows), cfg, v, ridge)


def score_mahalanobis(d: IhfDetector, x: Volume, preprocessed: bool = False) -> float:
    return d.mahalanobis(d.embed(x, preprocessed))


def score_nn(d: IhfDetector, x: Volume, preprocessed: bool = False) -> float:
    return d.nearest_neighbor(d.embed(x, preprocessed))


# ---------------------------------------------------------- volume predictor

@dataclass(frozen=True, eq=False)
class VolumePredictor:
    train_volumes: np.ndarray

    def percentile_rank(self, vol: float) -> float:
        """Mid-rank empirical percentile of ``vol`` within the training volumes."""
        t = self.train_volumes
        below = np.searchsorted(t, vol, side="left")
        at_or_below = np.searchsorted(t, vol, side="right")
        return (below + at_or_below) / 2 * 100.0 / t.size

    def to_dict(self) -> dict:
        return {"kind": "volume", "train_volumes": self.train_volumes.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "VolumePredictor":
        return fit_volume_predictor(d["train_volumes"])


def fit_volume_predictor(volumes: Iterable[float]) -> VolumePredictor:
    t = np.sort(np.asarray(list(volumes), dtype=np.float64))
    if t.size < 2:
        raise FitError(f"volume predictor needs at least 2 training volumes, got {t.size}")
    if not np.all(np.isfinite(t)):
        raise DataError("training volumes must be finite")
    return VolumePredictor(t)


def volume_score(p: VolumePredictor, vol: float) -> float:
    """Distance of ``vol``'s percentile rank from the training median, in [0, 50]."""
    return abs(p.percentile_rank(float(vol)) - 50.0)


def volume_outlier(p: VolumePredictor, vol: float, q: float) -> bool:
    # outside the [q/2, 100 - q/2] percentile band, i.e. retaining 100 - q TPR on ID
    return volume_score(p, vol) > 50.0 - q / 2.0


def predicted_volume(prob_map: Volume, unit: str = "mm3") -> float:
    """Size of the predicted area (p > 0.5) in voxels or cubic millimeters."""
    n = float(np.count_nonzero(prob_map.data > PREDICTED_AREA_THRESHOLD))
    if unit == "voxels":
        return n
    if unit == "mm3":
        return n * float(np.prod(prob_map.spacing))
    raise ValueError(f"unit must be 'voxels' or 'mm3', got {unit!r}")


# ------------------------------------------------------- prediction-map scores

def _probabilities(data: np.ndarray) -> np.ndarray:
    p = np.asarray(data, dtype=np.float64)
    if p.size and not (p.min() >= 0.0 and p.max() <= 1.0):
        raise DataError(f"probabilities must lie in [0, 1], got range [{p.min()}, {p.max()}]")
    return p


def entropy_score(prob_map: Volume) -> float:
    """Mean binary entropy (nats) over the predicted area; 0 for an empty mask."""
    p = _probabilities(prob_map.data)
    area = p[p > PREDICTED_AREA_THRESHOLD]
    if area.size == 0:
        return 0.0
    q = 1.0 - area
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(area > 0, area * np.log(area), 0.0) - np.where(q > 0, q * np.log(q), 0.0)
    return float(h.mean())


def uncertainty_score(prob_maps: Sequence[Volume]) -> float:
    """Whole-image mean of the voxel-wise (population) standard deviation across maps."""
    if len(prob_maps) < 2:
        raise ValueError(f"need at least 2 prediction maps, got {len(prob_maps)}")
    shapes = {pm.shape for pm in prob_maps}
    if len(shapes) != 1:
        raise DimensionError(f"prediction maps differ in shape: {sorted(shapes)}")
    stack = np.stack([_probabilities(pm.data) for pm in prob_maps])
    return float(stack.std(axis=0).mean())


# ------------------------------------------------------------------ ScoreTable

@dataclass(eq=False)
class ScoreTable:
    case_ids: list = field(default_factory=list)
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.case_ids = [str(c) for c in self.case_ids]
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(self.case_ids) != self.scores.size:
            raise DimensionError(
                f"{len(self.case_ids)} case ids but {self.scores.size} scores"
            )
        seen = set()
        for cid in self.case_ids:
            if cid in seen:
                raise DataError(f"duplicate case_id {cid!r} in score table")
            seen.add(cid)
        if not np.all(np.isfinite(self.scores)):
            bad = [c for c, s in zip(self.case_ids, self.scores) if not np.isfinite(s)]
            raise DataError(f"non-finite scores for case(s): {', '.join(bad)}")

    def __len__(self) -> int:
        return len(self.case_ids)

    def as_dict(self) -> dict:
        return dict(zip(self.case_ids, self.scores.tolist()))

    def select(self, case_ids: Sequence[str]) -> "ScoreTable":
        """Sub-table in the given order; raises ``KeyError`` listing every absent id."""
        lookup = self.as_dict()
        missing = [c for c in case_ids if c not in lookup]
        if missing:
            raise KeyError(f"score table lacks {len(missing)} case id(s): {', '.join(missing)}")
        return ScoreTable(list(case_ids), [lookup[c] for c in case_ids])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case_id", "score"])
            for cid, s in zip(self.case_ids, self.scores):
                writer.writerow([cid, repr(float(s))])

    @classmethod
    def read_csv(cls, path) -> "ScoreTable":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"case_id", "score"} <= set(reader.fieldnames):
                raise DataError(f"{path}: score CSV needs a 'case_id,score' header")
            ids, scores = [], []
            for row in reader:
                ids.append(row["case_id"])
                try:
                    scores.append(float(row["score"]))
                except ValueError as exc:
                    raise DataError(f"{path}: bad score for {row['case_id']!r}") from exc
        return cls(ids, scores)


# ------------------------------------------------------------- serialization

def save_detector(det, path) -> None:
    Path(path).write_text(json.dumps(det.to_dict()), encoding="utf-8")


def load_detector(path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = d.get("kind")
    if kind == "ihf":
        return IhfDetector.from_dict(d)
    if kind == "volume":
        return VolumePredictor.from_dict(d)
    raise DataError(f"{path}: unknown detector kind {kind!r}")
