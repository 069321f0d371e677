"""Manifest-driven OOD challenges: fit on ID train, score ID test and OOD sets,
sweep IHF hyperparameters, and tabulate results.

A manifest is JSON::

    {"name": "...",
     "modality": {"target_spacing": [1, 1, 1.5], "clip": {"mode": "percentile", "lo": 1, "hi": 99}},
     "groups": {"MRI": ["ghosting", "scanner"]},
     "volume_unit": "mm3",
     "id_train": [{"case_id": "a", "path": "a.json", "prob_maps": ["a_p0.json"]}],
     "id_test": [...],
     "ood_sets": [{"name": "scanner", "entries": [...]},
                  {"name": "ghosting", "synthetic": {"kind": "ghosting", "severities": [1, 2], "seed": 7}}]}

Relative paths resolve against the manifest's directory. ``prob_maps`` and
``predicted_volume`` are only needed by the prediction-map scorers.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .detectors import (
    DEFAULT_M,
    DEFAULT_RIDGE,
    DEFAULT_V,
    ScoreTable,
    entropy_score,
    fit_ihf,
    fit_volume_predictor,
    predicted_volume,
    uncertainty_score,
    volume_score,
)
from .errors import FitError, ManifestError
from .metrics import MetricResult, evaluate, fechner_correlation
from .synth import KINDS, CorruptionSpec, corrupt
from .volgrid import PreprocessConfig, load_volume, preprocess

__all__ = [
    "CaseEntry",
    "SyntheticSpec",
    "OodSet",
    "ChallengeManifest",
    "DetectorSpec",
    "ChallengeResult",
    "load_manifest",
    "manifest_from_dict",
    "run_challenge",
    "sweep_hyperparameters",
    "report",
    "correlate_methods",
    "synthetic_case_id",
    "save_results",
    "load_results",
]

log = logging.getLogger(__name__)

DETECTOR_KINDS = ("ihf_mah", "ihf_nn", "volume_predictor", "entropy", "uncertainty", "external")
_ALIASES = {"ihf-mah": "ihf_mah", "ihf-nn": "ihf_nn", "volume": "volume_predictor",
            "volume-predictor": "volume_predictor"}


def normalize_detector(name: str) -> str:
    return _ALIASES.get(name, name)


# ------------------------------------------------------------------- manifest

@dataclass(frozen=True)
class CaseEntry:
    case_id: str
    path: Optional[Path] = None
    prob_maps: tuple = ()
    predicted_volume: Optional[float] = None


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    severities: tuple
    seed: int = 0


@dataclass(frozen=True)
class OodSet:
    name: str
    entries: tuple = ()
    synthetic: Optional[SyntheticSpec] = None

    def variants(self) -> list:
        """``(severity, CorruptionSpec)`` pairs; a single ``(None, None)`` for real sets."""
        if self.synthetic is None:
            return [(None, None)]
        s = self.synthetic
        return [(sev, CorruptionSpec(s.kind, sev, s.seed)) for sev in s.severities]


@dataclass(frozen=True)
class ChallengeManifest:
    name: str
    modality: PreprocessConfig
    id_train: tuple
    id_test: tuple
    ood_sets: tuple
    groups: dict = field(default_factory=dict)
    volume_unit: str = "mm3"

    def with_seed(self, seed: int) -> "ChallengeManifest":
        """Copy with every synthetic set's base seed replaced."""
        sets = tuple(
            OodSet(o.name, o.entries,
                   None if o.synthetic is None else SyntheticSpec(o.synthetic.kind, o.synthetic.severities, seed))
            for o in self.ood_sets
        )
        return ChallengeManifest(self.name, self.modality, self.id_train, self.id_test, sets,
                                 self.groups, self.volume_unit)


def synthetic_case_id(case_id: str, kind: str, severity: int) -> str:
    return f"{case_id}@{kind}-s{severity}"


def _parse_entries(raw, where: str, base: Path, errors: list) -> tuple:
    if not isinstance(raw, list):
        errors.append(f"{where}: expected a list of case entries")
        return ()
    out, seen = [], set()
    for i, item in enumerate(raw):
        loc = f"{where}[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{loc}: expected an object")
            continue
        cid = item.get("case_id")
        if not isinstance(cid, str) or not cid:
            errors.append(f"{loc}.case_id: required non-empty string")
            continue
        if cid in seen:
            errors.append(f"{where}: duplicate case_id {cid!r}")
            continue
        seen.add(cid)
        path = item.get("path")
        if path is not None and not isinstance(path, str):
            errors.append(f"{loc}.path: expected a string")
            path = None
        maps = item.get("prob_maps", [])
        if not isinstance(maps, list) or not all(isinstance(p, str) for p in maps):
            errors.append(f"{loc}.prob_maps: expected a list of paths")
            maps = []
        pv = item.get("predicted_volume")
        if pv is not None and not isinstance(pv, (int, float)):
            errors.append(f"{loc}.predicted_volume: expected a number")
            pv = None
        if path is None and not maps and pv is None:
            errors.append(f"{loc}: needs 'path', 'prob_maps' or 'predicted_volume'")
        out.append(CaseEntry(
            cid,
            None if path is None else base / path,
            tuple(base / p for p in maps),
            None if pv is None else float(pv),
        ))
    return tuple(out)


def _parse_synthetic(raw, where: str, errors: list) -> Optional[SyntheticSpec]:
    if not isinstance(raw, dict):
        errors.append(f"{where}: expected an object")
        return None
    kind = raw.get("kind")
    if kind not in KINDS:
        errors.append(f"{where}.kind: expected one of {list(KINDS)}, got {kind!r}")
    sev = raw.get("severities", [1, 2, 3, 4, 5])
    if isinstance(sev, int) and not isinstance(sev, bool):
        sev = [sev]
    if not isinstance(sev, list) or not sev or not all(
            isinstance(s, int) and not isinstance(s, bool) and 1 <= s <= 5 for s in sev):
        errors.append(f"{where}.severities: expected integers in 1..5, got {sev!r}")
        sev = []
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        errors.append(f"{where}.seed: expected a 64-bit unsigned integer, got {seed!r}")
        seed = 0
    if kind not in KINDS:
        return None
    return SyntheticSpec(kind, tuple(sev), seed)


def manifest_from_dict(d: dict, base_dir=".", check_files: bool = True) -> ChallengeManifest:
    """Validate a manifest dictionary; all problems are reported together."""
    base = Path(base_dir)
    errors: List[str] = []
    if not isinstance(d, dict):
        raise ManifestError("manifest: top level must be a JSON object")
    name = d.get("name")
    if not isinstance(name, str) or not name:
        errors.append("name: required non-empty string")
    try:
        modality = PreprocessConfig.from_dict(d.get("modality", {}))
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"modality: {exc}")
        modality = PreprocessConfig()
    unit = d.get("volume_unit", "mm3")
    if unit not in ("mm3", "voxels"):
        errors.append(f"volume_unit: expected 'mm3' or 'voxels', got {unit!r}")
    id_train = _parse_entries(d.get("id_train"), "id_train", base, errors)
    id_test = _parse_entries(d.get("id_test"), "id_test", base, errors)
    if "id_train" in d and not id_train and not errors:
        errors.append("id_train: must not be empty")
    if "id_test" in d and not id_test and not errors:
        errors.append("id_test: must not be empty")

    raw_sets = d.get("ood_sets")
    ood_sets = []
    if not isinstance(raw_sets, list) or not raw_sets:
        errors.append("ood_sets: expected a non-empty list")
        raw_sets = []
    names = set()
    for i, raw in enumerate(raw_sets):
        loc = f"ood_sets[{i}]"
        if not isinstance(raw, dict):
            errors.append(f"{loc}: expected an object")
            continue
        sname = raw.get("name")
        if not isinstance(sname, str) or not sname:
            errors.append(f"{loc}.name: required non-empty string")
            continue
        if sname in names:
            errors.append(f"ood_sets: duplicate name {sname!r}")
        names.add(sname)
        has_entries, has_synth = "entries" in raw, "synthetic" in raw
        if has_entries == has_synth:
            errors.append(f"{loc}: exactly one of 'entries' or 'synthetic' is required")
            continue
        if has_entries:
            ood_sets.append(OodSet(sname, _parse_entries(raw["entries"], f"{loc}.entries", base, errors)))
        else:
            spec = _parse_synthetic(raw["synthetic"], f"{loc}.synthetic", errors)
            if spec is not None:
                ood_sets.append(OodSet(sname, synthetic=spec))

    groups = d.get("groups", {})
    if not isinstance(groups, dict) or not all(
            isinstance(v, list) and all(isinstance(x, str) for x in v) for v in groups.values()):
        errors.append("groups: expected an object mapping group names to lists of OOD set names")
        groups = {}
    for g, members in groups.items():
        unknown = [m for m in members if m not in names]
        if unknown:
            errors.append(f"groups.{g}: unknown OOD set(s) {unknown}")

    if errors:
        raise ManifestError("invalid manifest:\n  " + "\n  ".join(errors))

    manifest = ChallengeManifest(name, modality, id_train, id_test, tuple(ood_sets),
                                 {g: list(v) for g, v in groups.items()}, unit)
    if check_files:
        missing = [str(p) for p in _referenced_paths(manifest) if not p.exists()]
        if missing:
            raise ManifestError(
                f"{len(missing)} referenced file(s) missing:\n  " + "\n  ".join(missing), missing)
    return manifest


def _referenced_paths(manifest: ChallengeManifest):
    entries = list(manifest.id_train) + list(manifest.id_test)
    for o in manifest.ood_sets:
        entries.extend(o.entries)
    for e in entries:
        if e.path is not None:
            yield e.path
        yield from e.prob_maps


def load_manifest(path, check_files: bool = True) -> ChallengeManifest:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from exc
    return manifest_from_dict(d, path.parent, check_files)


# ------------------------------------------------------------------ detectors

@dataclass(frozen=True)
class DetectorSpec:
    kind: str
    m: int = DEFAULT_M
    v: Optional[float] = DEFAULT_V
    ridge: float = DEFAULT_RIDGE
    scores: Optional[ScoreTable] = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in DETECTOR_KINDS:
            raise ValueError(f"unknown detector {self.kind!r}; expected one of {DETECTOR_KINDS}")
        if kind == "external" and self.scores is None:
            raise ValueError("external detector needs a score table")
        object.__setattr__(self, "kind", kind)

    @property
    def label(self) -> str:
        return {"ihf_mah": "IHF-Mah", "ihf_nn": "IHF-NN", "volume_predictor": "Volume",
                "entropy": "Entropy", "uncertainty": "Uncertainty", "external": "External"}[self.kind]


@dataclass(eq=False)
class ChallengeResult:
    challenge: str
    ood_set: str
    severity: Optional[int]
    method: str
    metric: MetricResult
    id_scores: ScoreTable
    ood_scores: ScoreTable

    @property
    def row(self) -> str:
        return self.ood_set if self.severity is None else f"{self.ood_set} (s{self.severity})"

    def to_dict(self) -> dict:
        return {
            "challenge": self.challenge,
            "ood_set": self.ood_set,
            "severity": self.severity,
            "method": self.method,
            "metric": self.metric.to_dict(),
            "id_scores": self.id_scores.as_dict(),
            "ood_scores": self.ood_scores.as_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChallengeResult":
        def table(x):
            return ScoreTable(list(x.keys()), list(x.values()))
        return cls(d["challenge"], d["ood_set"], d.get("severity"), d["method"],
                   MetricResult.from_dict(d["metric"]), table(d["id_scores"]), table(d["ood_scores"]))


def save_results(results: Sequence[ChallengeResult], path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in results], indent=1), encoding="utf-8")


def load_results(path) -> list:
    return [ChallengeResult.from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs is None or jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# A prepared case set: (ood_set name or None for ID test, severity, [(case_id, payload)])
@dataclass
class _Prepared:
    train: list
    test: list
    ood: list


def _prepare_images(manifest: ChallengeManifest, jobs: int) -> _Prepared:
    """Load and preprocess every image once; synthesize corrupted OOD volumes."""
    cfg = manifest.modality

    def load_pre(entry: CaseEntry):
        if entry.path is None:
            raise ManifestError(f"case {entry.case_id!r} has no image path")
        return entry.case_id, preprocess(load_volume(entry.path), cfg)

    train = _pmap(load_pre, manifest.id_train, jobs)
    test = _pmap(load_pre, manifest.id_test, jobs)
    ood = []
    for o in manifest.ood_sets:
        if o.synthetic is None:
            ood.append((o.name, None, _pmap(load_pre, o.entries, jobs)))
            continue
        for sev, spec in o.variants():
            def make(item, spec=spec):
                cid, vol = item
                return synthetic_case_id(cid, spec.kind, spec.severity), corrupt(vol, spec, cid)
            ood.append((o.name, sev, _pmap(make, test, jobs)))
    return _Prepared(train, test, ood)


def _collect(manifest, method, score_sets, tpr_target) -> list:
    test_ids, test_scores = score_sets[0]
    id_table = ScoreTable(test_ids, test_scores)
    results = []
    for (name, sev), (ids, scores) in zip(score_sets[1], score_sets[2]):
        ood_table = ScoreTable(ids, scores)
        metric = evaluate(id_table.scores, ood_table.scores, tpr_target)
        results.append(ChallengeResult(manifest.name, name, sev, method, metric, id_table, ood_table))
    return results


def _run_ihf(manifest, prepared: _Prepared, det: DetectorSpec, jobs: int, tpr_target: float):
    try:
        model = fit_ihf([v for _, v in prepared.train], manifest.modality, det.m, det.v,
                        det.ridge, preprocessed=True)
    except FitError as exc:
        raise FitError(f"challenge {manifest.name!r}: {exc}") from exc
    distance = model.mahalanobis if det.kind == "ihf_mah" else model.nearest_neighbor

    def score(items):
        return [c for c, _ in items], _pmap(lambda it: distance(model.embed(it[1], True)), items, jobs)

    keys = [(name, sev) for name, sev, _ in prepared.ood]
    return _collect(manifest, det.label, (score(prepared.test), keys,
                                          [score(items) for _, _, items in prepared.ood]), tpr_target)


def _run_maps(manifest, det: DetectorSpec, jobs: int, tpr_target: float):
    for o in manifest.ood_sets:
        if o.synthetic is not None:
            raise ValueError(
                f"{det.label} needs prediction maps and cannot score synthetic set {o.name!r}; "
                "supply its scores through the external detector")
    unit = manifest.volume_unit

    def case_volume(e: CaseEntry) -> float:
        if e.predicted_volume is not None:
            return e.predicted_volume
        if not e.prob_maps:
            raise ManifestError(f"case {e.case_id!r} has neither predicted_volume nor prob_maps")
        return predicted_volume(load_volume(e.prob_maps[0]), unit)

    if det.kind == "volume_predictor":
        predictor = fit_volume_predictor(_pmap(case_volume, manifest.id_train, jobs))
        fn = lambda e: volume_score(predictor, case_volume(e))  # noqa: E731
    elif det.kind == "entropy":
        def fn(e):
            if not e.prob_maps:
                raise ManifestError(f"case {e.case_id!r} has no prob_maps")
            return entropy_score(load_volume(e.prob_maps[0]))
    else:
        def fn(e):
            if len(e.prob_maps) < 2:
                raise ManifestError(f"case {e.case_id!r} needs at least 2 prob_maps")
            return uncertainty_score([load_volume(p) for p in e.prob_maps])

    def score(entries):
        return [e.case_id for e in entries], _pmap(fn, entries, jobs)

    keys = [(o.name, None) for o in manifest.ood_sets]
    return _collect(manifest, det.label, (score(manifest.id_test), keys,
                                          [score(o.entries) for o in manifest.ood_sets]), tpr_target)


def _external_ids(manifest: ChallengeManifest) -> tuple:
    test = [e.case_id for e in manifest.id_test]
    keys, sets = [], []
    for o in manifest.ood_sets:
        for sev, spec in o.variants():
            keys.append((o.name, sev))
            if spec is None:
                sets.append([e.case_id for e in o.entries])
            else:
                sets.append([synthetic_case_id(c, spec.kind, spec.severity) for c in test])
    return test, keys, sets


def _run_external(manifest, det: DetectorSpec, tpr_target: float):
    test, keys, sets = _external_ids(manifest)
    available = set(det.scores.case_ids)
    needed = test + [c for s in sets for c in s]
    missing = [c for c in dict.fromkeys(needed) if c not in available]
    if missing:
        raise KeyError(f"external scores missing {len(missing)} case id(s): {', '.join(missing)}")
    lookup = det.scores.as_dict()

    def score(ids):
        return ids, [lookup[c] for c in ids]

    return _collect(manifest, det.label, (score(test), keys, [score(s) for s in sets]), tpr_target)


def run_challenge(manifest: ChallengeManifest, detector: DetectorSpec, jobs: int = 1,
                  tpr_target: float = 0.95) -> list:
    """Score ID test and every OOD set (one result per severity for synthetic sets)."""
    if detector.kind in ("ihf_mah", "ihf_nn"):
        prepared = _prepare_images(manifest, jobs)
        return _run_ihf(manifest, prepared, detector, jobs, tpr_target)
    if detector.kind == "external":
        return _run_external(manifest, detector, tpr_target)
    return _run_maps(manifest, detector, jobs, tpr_target)


# ---------------------------------------------------------------------- sweep

def sweep_hyperparameters(manifest: ChallengeManifest, m_list: Sequence[int],
                          v_list: Sequence[Optional[float]], method: str = "ihf_nn",
                          ridge: float = DEFAULT_RIDGE, jobs: int = 1,
                          tpr_target: float = 0.95) -> list:
    """One fit+evaluation per (m, v) cell, as long-format rows.

    Each row is a dict with keys ``m, v, ood_set, severity, fpr, auroc, error``.
    A failing cell contributes a single row with ``error`` set and NaN metrics.
    """
    prepared = _prepare_images(manifest, jobs)
    rows = []
    for m in m_list:
        for v in v_list:
            det = DetectorSpec(method, m=m, v=v, ridge=ridge)
            try:
                results = _run_ihf(manifest, prepared, det, jobs, tpr_target)
            except (FitError, ValueError, np.linalg.LinAlgError) as exc:
                log.warning("sweep cell m=%s v=%s failed: %s", m, v, exc)
                rows.append({"m": m, "v": v, "ood_set": None, "severity": None,
                             "fpr": math.nan, "auroc": math.nan, "error": str(exc)})
                continue
            for r in results:
                rows.append({"m": m, "v": v, "ood_set": r.ood_set, "severity": r.severity,
                             "fpr": r.metric.fpr_at_tpr95, "auroc": r.metric.auroc, "error": None})
    return rows


def sweep_means(rows: Sequence[dict]) -> list:
    """Mean FPR/AUROC per (m, v) cell over its OOD sets; failed cells get NaN."""
    cells: Dict[tuple, list] = {}
    for r in rows:
        cells.setdefault((r["m"], r["v"]), []).append(r)
    out = []
    for (m, v), rs in cells.items():
        ok = [r for r in rs if r["error"] is None]
        out.append({
            "m": m, "v": v,
            "fpr": float(np.mean([r["fpr"] for r in ok])) if ok else math.nan,
            "auroc": float(np.mean([r["auroc"] for r in ok])) if ok else math.nan,
            "error": None if ok else rs[0]["error"],
        })
    return out


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["m", "v", "ood_set", "severity", "fpr", "auroc", "error"],
                            lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r[k] is None else r[k]) for k in writer.fieldnames})
    return buf.getvalue()


# --------------------------------------------------------------------- report

def _matrix(results: Sequence[ChallengeResult], attr: str):
    rows: Dict[str, Dict[str, float]] = {}
    methods: List[str] = []
    set_of_row: Dict[str, str] = {}
    for r in results:
        if r.method not in methods:
            methods.append(r.method)
        label = r.row if len({x.challenge for x in results}) == 1 else f"{r.challenge}: {r.row}"
        rows.setdefault(label, {})[r.method] = getattr(r.metric, attr)
        set_of_row[label] = r.ood_set
    return rows, methods, set_of_row


def _means(rows, methods, set_of_row, groups) -> Dict[str, Dict[str, float]]:
    def mean_over(labels):
        out = {}
        for m in methods:
            vals = [rows[lab][m] for lab in labels if m in rows[lab]]
            if vals:
                out[m] = float(np.mean(vals))
        return out

    means = {}
    for g, members in (groups or {}).items():
        labels = [lab for lab in rows if set_of_row[lab] in members]
        if labels:
            means[f"{g} average"] = mean_over(labels)
    means["average"] = mean_over(list(rows))
    return means


def _markdown_table(title, rows, methods, lower_is_better):
    pick = min if lower_is_better else max
    lines = [f"**{title}**", "", "| OOD setup | " + " | ".join(methods) + " |",
             "|---" * (len(methods) + 1) + "|"]
    for label, vals in rows.items():
        shown = {m: round(vals[m], 3) for m in methods if m in vals}
        best = pick(shown.values()) if shown else None
        cells = []
        for m in methods:
            if m not in shown:
                cells.append("")
            elif shown[m] == best:
                cells.append(f"**{shown[m]:.3f}**")
            else:
                cells.append(f"{shown[m]:.3f}")
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    return lines


def report(results: Sequence[ChallengeResult], format: str = "markdown",
           groups: Optional[dict] = None) -> str:
    """Challenge x method tables of FPR@TPR95 and AUROC, with column means.

    ``groups`` maps a group name to OOD set names; each group adds a
    ``"<group> average"`` row. Markdown output bolds the best value per row
    (ties are all bolded).
    """
    if not results:
        raise ValueError("report needs at least one result")
    fpr_rows, methods, set_of_row = _matrix(results, "fpr_at_tpr95")
    auc_rows, _, _ = _matrix(results, "auroc")
    fpr_means = _means(fpr_rows, methods, set_of_row, groups)
    auc_means = _means(auc_rows, methods, set_of_row, groups)

    if format == "json":
        return json.dumps({
            "methods": methods,
            "fpr": fpr_rows,
            "auroc": auc_rows,
            "means": {"fpr": fpr_means, "auroc": auc_means},
            "results": [r.to_dict() for r in results],
        }, indent=1)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["challenge", "ood_set", "severity", "method", "fpr", "auroc", "threshold",
                    "n_id", "n_ood"])
        for r in results:
            w.writerow([r.challenge, r.ood_set, "" if r.severity is None else r.severity, r.method,
                        repr(r.metric.fpr_at_tpr95), repr(r.metric.auroc), repr(r.metric.threshold),
                        r.metric.n_id, r.metric.n_ood])
        for label in fpr_means:
            for m in methods:
                if m in fpr_means[label]:
                    w.writerow(["", label, "", m, repr(fpr_means[label][m]),
                                repr(auc_means[label].get(m, math.nan)), "", "", ""])
        return buf.getvalue()
    if format == "markdown":
        lines = _markdown_table("FPR@TPR95 (lower is better)", {**fpr_rows, **fpr_means}, methods, True)
        lines += [""]
        lines += _markdown_table("AUROC (higher is better)", {**auc_rows, **auc_means}, methods, False)
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}; expected csv, json or markdown")


def correlate_methods(results: Sequence[ChallengeResult], reference_method: str,
                      quantity: str = "fpr") -> dict:
    """Fechner correlation of each method's per-setup vector with the reference method's."""
    attr = {"fpr": "fpr_at_tpr95", "auroc": "auroc"}[quantity]
    vectors: Dict[str, Dict[tuple, float]] = {}
    for r in results:
        vectors.setdefault(r.method, {})[(r.challenge, r.ood_set, r.severity)] = getattr(r.metric, attr)
    if reference_method not in vectors:
        raise ValueError(f"no results for reference method {reference_method!r}")
    keys = sorted(vectors[reference_method], key=str)
    ref = [vectors[reference_method][k] for k in keys]
    out = {}
    for method, vec in vectors.items():
        if set(vec) != set(keys):
            raise ValueError(
                f"method {method!r} covers {len(vec)} setups, {reference_method!r} covers "
                f"{len(keys)}; coverage must match")
        out[method] = fechner_correlation(ref, [vec[k] for k in keys])
    return out
