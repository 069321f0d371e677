"""Command-line front end: ``ihfood <subcommand> ...``.

Exit codes: 0 success, 1 usage, 2 I/O or input data, 3 numerical/fit failure.
Each successful command prints one JSON summary line that echoes every
parameter and seed it used.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .detectors import (
    DEFAULT_M,
    DEFAULT_RIDGE,
    DEFAULT_V,
    IhfDetector,
    ScoreTable,
    VolumePredictor,
    entropy_score,
    fit_ihf,
    fit_volume_predictor,
    load_detector,
    predicted_volume,
    save_detector,
    uncertainty_score,
    volume_score,
)
from .errors import DataError, DimensionError, FitError, FormatError, ManifestError
from .phantoms import write_phantom_dataset
from .synth import CorruptionSpec, corrupt
from .volgrid import PreprocessConfig, load_volume, preprocess, save_volume

log = logging.getLogger("ihfood")

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _v_value(text: str):
    if text.lower() in ("none", "off", "no"):
        return None
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"--v must lie in (0, 1] or be 'none', got {text}")
    return v


def _list_of(conv):
    def parse(text):
        return [conv(x) for x in text.split(",") if x.strip()]
    return parse


def _spacing(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--spacing needs three comma-separated values")
    return tuple(parts)


def _modality(args) -> PreprocessConfig:
    if args.modality == "ct":
        return PreprocessConfig.ct(args.spacing)
    return PreprocessConfig.mri(args.spacing)


def _summary(command: str, **fields) -> None:
    clean = {k: (str(v) if isinstance(v, Path) else v) for k, v in fields.items()}
    print(json.dumps({"command": command, "status": "ok", **clean}, default=str))


def _stem(path: Path) -> str:
    name = path.name
    for suffix in (".nii.gz", ".nii", ".json", ".raw"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


# ------------------------------------------------------------------ commands

def cmd_preprocess(args) -> int:
    cfg = _modality(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written, skipped = [], []
    for p in map(Path, args.inputs):
        try:
            vol = preprocess(load_volume(p), cfg)
        except (OSError, FormatError, DataError) as exc:
            if args.strict:
                raise
            log.warning("skipping %s: %s", p, exc)
            skipped.append(str(p))
            continue
        written.append(str(save_volume(vol, out / f"{_stem(p)}.json")))
    _summary("preprocess", config=cfg.to_dict(), written=len(written), skipped=skipped, out=out)
    return 0


def cmd_fit(args) -> int:
    manifest = harness.load_manifest(args.manifest)
    kind = harness.normalize_detector(args.detector)
    if kind in ("ihf_mah", "ihf_nn"):
        vols = [load_volume(e.path) for e in manifest.id_train]
        det = fit_ihf(vols, manifest.modality, args.m, args.v, args.ridge)
        extra = {"m": args.m, "v": args.v, "ridge": args.ridge, "k": det.k}
    elif kind == "volume_predictor":
        vols = []
        for e in manifest.id_train:
            if e.predicted_volume is not None:
                vols.append(e.predicted_volume)
            elif e.prob_maps:
                vols.append(predicted_volume(load_volume(e.prob_maps[0]), manifest.volume_unit))
            else:
                raise ManifestError(f"case {e.case_id!r} has neither predicted_volume nor prob_maps")
        det = fit_volume_predictor(vols)
        extra = {"volume_unit": manifest.volume_unit}
    else:
        raise UsageError(f"detector {args.detector!r} has nothing to fit")
    save_detector(det, args.out)
    _summary("fit", manifest=args.manifest, detector=args.detector, n_train=len(manifest.id_train),
             out=args.out, **extra)
    return 0


def cmd_score(args) -> int:
    inputs = [Path(p) for p in args.inputs]
    if args.detector in ("entropy", "uncertainty"):
        if args.detector == "entropy":
            scores = [entropy_score(load_volume(p)) for p in inputs]
        else:
            scores = [uncertainty_score([load_volume(p) for p in inputs])]
            inputs = inputs[:1]
        ids = [_stem(p) for p in inputs]
        model_desc = args.detector
    else:
        if not args.model:
            raise UsageError(f"--model is required for detector {args.detector!r}")
        det = load_detector(args.model)
        ids = [_stem(p) for p in inputs]
        if isinstance(det, IhfDetector):
            if args.m is not None and args.m != det.m:
                raise DimensionError(f"--m {args.m} does not match the detector's m={det.m}")
            if args.detector not in ("ihf-mah", "ihf-nn"):
                raise UsageError("an IHF model file needs --detector ihf-mah or ihf-nn")
            fn = det.mahalanobis if args.detector == "ihf-mah" else det.nearest_neighbor
            scores = [fn(det.embed(load_volume(p))) for p in inputs]
        elif isinstance(det, VolumePredictor):
            scores = [volume_score(det, predicted_volume(load_volume(p), args.volume_unit))
                      for p in inputs]
        else:  # pragma: no cover - load_detector only yields the two kinds
            raise DataError(f"unsupported model in {args.model}")
        model_desc = str(args.model)
    table = ScoreTable(ids, scores)
    table.write_csv(args.out)
    _summary("score", detector=args.detector, model=model_desc, n=len(table), out=args.out)
    return 0


def cmd_corrupt(args) -> int:
    spec = CorruptionSpec.parse(args.corrupt)
    if args.seed is not None:
        spec = CorruptionSpec(spec.kind, spec.severity, args.seed)
    cfg = _modality(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in map(Path, args.inputs):
        vol = load_volume(p)
        if not args.preprocessed:
            vol = preprocess(vol, cfg)
        cid = _stem(p)
        save_volume(corrupt(vol, spec, cid), out / f"{harness.synthetic_case_id(cid, spec.kind, spec.severity)}.json")
    _summary("corrupt", corrupt=str(spec), preprocessed=args.preprocessed,
             config=None if args.preprocessed else cfg.to_dict(), n=len(args.inputs), out=out)
    return 0


def _detector_spec(args) -> harness.DetectorSpec:
    scores = None
    if args.detector == "external":
        if not args.scores:
            raise UsageError("--detector external needs --scores")
        tables = [ScoreTable.read_csv(p) for p in args.scores]
        ids = [c for t in tables for c in t.case_ids]
        vals = np.concatenate([t.scores for t in tables])
        scores = ScoreTable(ids, vals)
    return harness.DetectorSpec(args.detector, m=args.m or DEFAULT_M, v=args.v, ridge=args.ridge,
                                scores=scores)


def cmd_eval(args) -> int:
    manifest = harness.load_manifest(args.manifest)
    if args.seed is not None:
        manifest = manifest.with_seed(args.seed)
    det = _detector_spec(args)
    results = harness.run_challenge(manifest, det, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    harness.save_results(results, out / "results.json")
    results[0].id_scores.write_csv(out / "scores_id_test.csv")
    for r in results:
        tag = r.ood_set if r.severity is None else f"{r.ood_set}_s{r.severity}"
        r.ood_scores.write_csv(out / f"scores_{tag}.csv")
    _summary("eval", manifest=args.manifest, detector=det.kind, m=det.m, v=det.v, ridge=det.ridge,
             seed=args.seed, jobs=args.jobs, out=out,
             results=[{"ood_set": r.ood_set, "severity": r.severity,
                       "fpr": r.metric.fpr_at_tpr95, "auroc": r.metric.auroc} for r in results])
    return 0


def cmd_sweep(args) -> int:
    manifest = harness.load_manifest(args.manifest)
    if args.seed is not None:
        manifest = manifest.with_seed(args.seed)
    if args.detector not in ("ihf-mah", "ihf-nn", "ihf_mah", "ihf_nn"):
        raise UsageError("sweep supports only --detector ihf-mah or ihf-nn")
    rows = harness.sweep_hyperparameters(manifest, args.m, args.v, method=args.detector,
                                         ridge=args.ridge, jobs=args.jobs)
    Path(args.out).write_text(harness.sweep_csv(rows), encoding="utf-8")
    failed = sorted({(r["m"], r["v"]) for r in rows if r["error"]})
    _summary("sweep", manifest=args.manifest, detector=args.detector, m=args.m, v=args.v,
             ridge=args.ridge, seed=args.seed, rows=len(rows), failed_cells=failed, out=args.out)
    return 0


def cmd_report(args) -> int:
    results = [r for p in args.results for r in harness.load_results(p)]
    groups = harness.load_manifest(args.manifest, check_files=False).groups if args.manifest else None
    text = harness.report(results, args.format, groups)
    Path(args.out).write_text(text, encoding="utf-8")
    _summary("report", results=args.results, format=args.format, n=len(results), out=args.out)
    return 0


def cmd_phantoms(args) -> int:
    path = write_phantom_dataset(args.out, args.n_train, args.n_test, args.seed or 0,
                                 shape=(args.size,) * 3)
    _summary("phantoms", n_train=args.n_train, n_test=args.n_test, size=args.size,
             seed=args.seed or 0, manifest=path)
    return 0


# -------------------------------------------------------------------- parser

DETECTORS = ["ihf-mah", "ihf-nn", "volume", "entropy", "uncertainty", "external"]
FORMATS = ["csv", "json", "markdown"]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ihfood", description="Intensity-histogram OOD detection toolkit")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, modality=False):
        p.add_argument("--out", required=True)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--strict", action="store_true")
        p.add_argument("--seed", type=int)
        if modality:
            p.add_argument("--modality", choices=["ct", "mri"], default="mri")
            p.add_argument("--spacing", type=_spacing, default=(1.0, 1.0, 1.5))

    p = sub.add_parser("preprocess", help="resample, clip and min-max scale volumes")
    p.add_argument("inputs", nargs="+")
    common(p, modality=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit", help="fit a detector on a manifest's id_train cases")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detector", choices=DETECTORS, required=True)
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--v", type=_v_value, default=DEFAULT_V)
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score volumes (or prediction maps) into a CSV")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--model")
    p.add_argument("--detector", choices=DETECTORS, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--volume-unit", choices=["mm3", "voxels"], default="mm3")
    common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("corrupt", help="write synthetically corrupted volumes")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--corrupt", required=True, metavar="kind=..,severity=..,seed=..")
    p.add_argument("--preprocessed", action="store_true", help="inputs are already in [0, 1]")
    common(p, modality=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("eval", help="run a challenge manifest end to end")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detector", choices=DETECTORS, required=True)
    p.add_argument("--scores", nargs="+", help="score CSV(s) for --detector external")
    p.add_argument("--m", type=int, default=DEFAULT_M)
    p.add_argument("--v", type=_v_value, default=DEFAULT_V)
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over histogram bins and PCA variance")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detector", choices=["ihf-mah", "ihf-nn"], default="ihf-nn")
    p.add_argument("--m", type=_list_of(int), default=[DEFAULT_M])
    p.add_argument("--v", type=_list_of(_v_value), default=[DEFAULT_V])
    p.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="tabulate results.json files")
    p.add_argument("results", nargs="+")
    p.add_argument("--format", choices=FORMATS, default="markdown")
    p.add_argument("--manifest", help="manifest whose groups add group-mean rows")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("phantoms", help="write a seeded phantom dataset and manifest")
    p.add_argument("--n-train", type=int, default=40)
    p.add_argument("--n-test", type=int, default=20)
    p.add_argument("--size", type=int, default=32)
    common(p)
    p.set_defaults(func=cmd_phantoms)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitError, DimensionError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError, DataError, ManifestError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
