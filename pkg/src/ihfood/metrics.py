"""Detection metrics. OOD is the positive class; higher scores mean more OOD."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["MetricResult", "fpr_at_tpr", "auroc", "fechner_correlation", "evaluate"]


@dataclass(frozen=True)
class MetricResult:
    fpr_at_tpr95: float
    auroc: float
    n_id: int
    n_ood: int
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricResult":
        return cls(float(d["fpr_at_tpr95"]), float(d["auroc"]), int(d["n_id"]),
                   int(d["n_ood"]), float(d["threshold"]))


def _scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} scores are empty")
    if np.isnan(arr).any():
        raise ValueError(f"{name} scores contain NaN")
    return arr


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.95) -> tuple:
    """False-positive rate at the largest threshold detecting ``tpr_target`` of OOD.

    A case is flagged when ``score >= threshold``. The threshold is picked
    among the observed OOD scores; returns ``(fpr, threshold)``.
    """
    ids = _scores(id_scores, "ID")
    ood = np.sort(_scores(ood_scores, "OOD"))
    if not 0 < tpr_target <= 1:
        raise ValueError(f"tpr_target must lie in (0, 1], got {tpr_target}")
    candidates = np.unique(ood)
    tpr = (ood.size - np.searchsorted(ood, candidates, side="left")) / ood.size
    feasible = candidates[tpr >= tpr_target]
    threshold = float(feasible.max()) if feasible.size else -np.inf
    fpr = np.count_nonzero(ids >= threshold) / ids.size
    return float(fpr), threshold


def auroc(id_scores, ood_scores) -> float:
    """P(OOD score > ID score) with ties counted one half."""
    ids = np.sort(_scores(id_scores, "ID"))
    ood = _scores(ood_scores, "OOD")
    below = np.searchsorted(ids, ood, side="left")
    at_or_below = np.searchsorted(ids, ood, side="right")
    # doubled counts stay integral, so the sum is exact
    wins2 = int(np.sum(below + at_or_below))
    return wins2 / (2.0 * ids.size * ood.size)


def fechner_correlation(a, b) -> float:
    """(concordant - discordant) / n over signs of deviations from the mean.

    A zero product of deviations counts as concordant.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("Fechner correlation needs at least 2 observations")
    # signs, not the product itself: tiny deviations would underflow to zero
    prod = np.sign(a - a.mean()) * np.sign(b - b.mean())
    discordant = int(np.count_nonzero(prod < 0))
    concordant = a.size - discordant
    return (concordant - discordant) / a.size


def evaluate(id_scores, ood_scores, tpr_target: float = 0.95) -> MetricResult:
    fpr, threshold = fpr_at_tpr(id_scores, ood_scores, tpr_target)
    return MetricResult(fpr, auroc(id_scores, ood_scores), len(id_scores), len(ood_scores), threshold)
