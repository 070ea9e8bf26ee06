"""Command-line front end: one subcommand per pipeline stage.

Exit codes: 0 on success, 1 on invalid input or usage, 2 on runtime failure.
Diagnostics go to standard error; results go to files.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cvharness import (
    AblationPlan,
    GbmSpec,
    NnSpec,
    OofBundle,
    read_oof_csv,
    run_ablation,
    run_cv,
    run_ensemble,
    stratified_kfold,
    write_oof_csv,
)
from .dataio import (
    INDEX_NAMES,
    MODALITY_GROUPS,
    LabelTable,
    SyntheticSpec,
    generate_synthetic_dataset,
    load_labels,
    load_patch_stack,
    save_labels,
    save_predictions,
    write_patch_stack,
)
from .errors import LandslideError, ValidationError
from .evalcal import calibrate_threshold, confusion_counts, overall_score, roc_auc
from .features import (
    ScalerParams,
    apply_scaler,
    compute_indices,
    compute_patch_statistics,
    fit_scaler,
    load_feature_table,
    save_feature_table,
)
from .fusionnet import ARCHITECTURES, TrainConfig, fusion_config, load_weights, predict_net, save_weights
from .gbm import PRESETS, GbmModel, predict_gbm

log = logging.getLogger("landslide_fusion")

DEFAULT_THRESHOLD = 0.49
DEFAULT_TOP_K = 30


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _csv_list(value: str) -> tuple:
    return tuple(v.strip() for v in value.split(",") if v.strip())


# ---------------------------------------------------------------------------
# stage helpers
# ---------------------------------------------------------------------------

def _prepare_stack(stack, indices: bool, scaler: str, params: dict = None):
    if indices and stack.channels == 12:
        stack = compute_indices(stack)
    sp = ScalerParams.from_dict(params) if params else fit_scaler(stack, scaler)
    return apply_scaler(stack, sp), sp


def _labels_for(args) -> LabelTable:
    return load_labels(args.labels)


def _gbm_spec(args, name=None) -> GbmSpec:
    cfg = PRESETS[args.preset].with_(seed=args.seed)
    if args.rounds is not None:
        cfg = cfg.with_(n_rounds=args.rounds)
    return GbmSpec(cfg, name or args.preset, n_jobs=args.jobs)


def _nn_spec(args, channels: int) -> NnSpec:
    enc = {"embed_dim": args.embed_dim, "depth": args.depth}
    fusion = fusion_config(args.arch, channels=channels, **enc)
    train = TrainConfig(epochs=args.epochs, lr_max=args.lr, batch_size=args.batch_size,
                        tta=args.tta, seed=args.seed)
    return NnSpec(fusion, train, args.arch)


def _write_run(result, ids, out: Path, seed) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_oof_csv(out / "oof.csv", ids, result.folds, result.oof, result.labels)
    record = result.record(seed)
    # pinned clock for reproducible run records
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        record["timestamps"] = {"started": float(epoch), "finished": float(epoch)}
    _dump_json(record, out / "run.json")


def _print_summary(name, result) -> None:
    print(f"{name}: OOF F1 {result.f1:.4f} at t={result.threshold:.4f}, AUC {result.auc:.4f}",
          file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> None:
    spec = SyntheticSpec(n=args.n, pos_ratio=args.pos_ratio, difficulty=args.difficulty,
                         seed=args.seed)
    stack, labels = generate_synthetic_dataset(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_patch_stack(stack, out / "data.npy")
    save_labels(labels, out / "labels.csv")
    print(f"wrote {stack.n} patches ({labels.positives} positive) to {out}", file=sys.stderr)


def cmd_features(args) -> None:
    stack = load_patch_stack(args.data)
    ids = load_labels(args.labels).ids if args.labels else None
    if ids is not None and len(ids) != stack.n:
        raise ValidationError(f"{len(ids)} labels for {stack.n} patches")
    prepared, sp = _prepare_stack(stack, args.indices, args.scaler)
    table = compute_patch_statistics(prepared, ids)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_feature_table(table, out)
    _dump_json(sp.to_dict(), out.with_suffix(".scaler.json"))
    print(f"wrote {table.shape[0]} x {table.shape[1]} feature table to {out}", file=sys.stderr)


def cmd_train_gbm(args) -> None:
    table = load_feature_table(args.features)
    labels = _labels_for(args)
    if tuple(labels.ids) != tuple(table.ids):
        raise ValidationError("feature-table IDs do not match the label file")
    folds = stratified_kfold(labels.labels, args.folds, args.seed)
    spec = _gbm_spec(args)
    drop_channels = tuple(args.drop_index or ())
    for g in args.drop_modality or ():
        drop_channels += tuple(c for c in MODALITY_GROUPS[g] if f"ch{c}_min" in table.column_names)
    spec = GbmSpec(spec.config, spec.name, tuple(args.drop_stat or ()), drop_channels, spec.n_jobs)
    result = run_cv(spec, table, labels, folds)
    out = Path(args.out)
    _write_run(result, labels.ids, out, args.seed)
    (out / "models").mkdir(exist_ok=True)
    for k, model in enumerate(result.models):
        model.save(out / "models" / f"fold{k}.json")
    imp = result.importance
    _dump_json({"names": list(imp.names), "gain": imp.gain.tolist(), "splits": imp.splits.tolist()},
               out / "importance.json")
    _print_summary(spec.name, result)


def cmd_train_nn(args) -> None:
    stack = load_patch_stack(args.data)
    labels = _labels_for(args)
    if len(labels) != stack.n:
        raise ValidationError(f"{len(labels)} labels for {stack.n} patches")
    prepared, sp = _prepare_stack(stack, args.indices, args.scaler)
    folds = stratified_kfold(labels.labels, args.folds, args.seed)
    spec = _nn_spec(args, prepared.channels)
    result = run_cv(spec, prepared, labels, folds)
    out = Path(args.out)
    _write_run(result, labels.ids, out, args.seed)
    (out / "models").mkdir(exist_ok=True)
    meta = {"scaler": sp.to_dict(), "indices": bool(args.indices), "tta": bool(args.tta)}
    for k, net in enumerate(result.models):
        save_weights(net, out / "models" / f"fold{k}.bin", metadata=meta)
    _print_summary(spec.name, result)


def _model_paths(path: Path):
    if path.is_dir():
        found = sorted(path.glob("*.json"))
        if not found:
            raise FileNotFoundError(f"{path}: no model files")
        return found
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such model")
    return [path]


def cmd_predict(args) -> None:
    paths = _model_paths(Path(args.model))
    first = json.loads(paths[0].read_text(encoding="utf-8"))
    if first.get("format") == "landslide-gbm/1":
        if not args.features:
            raise ValidationError("GBM models need --features")
        table = load_feature_table(args.features)
        probs = np.mean([predict_gbm(GbmModel.load(p), table.matrix) for p in paths], axis=0)
        ids = table.ids
    else:
        if not args.data:
            raise ValidationError("fusion-net models need --data")
        stack = load_patch_stack(args.data)
        ids = load_labels(args.labels).ids if args.labels else tuple(str(i) for i in range(stack.n))
        preds = []
        for p in paths:
            net, meta = load_weights(p)
            x, _ = _prepare_stack(stack, meta.get("indices", True), "none", meta.get("scaler"))
            preds.append(predict_net(net, x.data, args.tta if args.tta is not None else meta.get("tta", True)))
        probs = np.mean(preds, axis=0)
    save_predictions(ids, probs, args.threshold, args.out)
    print(f"wrote {len(ids)} predictions to {args.out}", file=sys.stderr)


def cmd_calibrate(args) -> None:
    _, _, probs, labels = read_oof_csv(args.oof)
    cal = calibrate_threshold(labels, probs)
    doc = {"threshold": cal.threshold, "f1": cal.f1,
           "confusion": confusion_counts(labels, probs, cal.threshold).to_dict()}
    if args.out:
        _dump_json(doc, args.out)
    else:
        print(json.dumps(doc, sort_keys=True))


def _member_name(path: Path, used) -> str:
    run = path.parent / "run.json"
    name = path.parent.name or path.stem
    if run.exists():
        name = json.loads(run.read_text(encoding="utf-8"))["spec"].get("name", name)
    base, k = name, 2
    while name in used:
        name, k = f"{base}-{k}", k + 1
    return name


def cmd_ensemble(args) -> None:
    paths = [Path(p) for p in args.oof]
    names = list(args.names) if args.names else []
    if names and len(names) != len(paths):
        raise ValidationError("--names must list one name per OOF file")
    bundle = None
    for i, path in enumerate(paths):
        ids, folds, probs, labels = read_oof_csv(path)
        if bundle is None:
            bundle = OofBundle(ids, labels, folds)
        elif ids != bundle.ids or not np.array_equal(labels, bundle.labels):
            raise ValidationError(f"{path}: IDs or labels differ from the first OOF file")
        elif not np.array_equal(folds, bundle.folds):
            raise ValidationError(f"{path}: fold assignment differs from the first OOF file")
        name = names[i] if names else _member_name(path, bundle.models)
        imp = None
        imp_path = path.parent / "importance.json"
        if imp_path.exists():
            from .gbm import FeatureImportance
            d = json.loads(imp_path.read_text(encoding="utf-8"))
            imp = FeatureImportance(np.asarray(d["gain"], float), np.asarray(d["splits"], np.int64),
                                    tuple(d["names"]))
        bundle.add(name, probs, imp)
    weights = [float(w) for w in args.weights] if args.weights else None
    result = run_ensemble(bundle, weights=weights)
    threshold = args.threshold if args.threshold is not None else result.calibration.threshold
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle.save(out / "bundle.json")
    report = dict(result.report, applied_threshold=threshold)
    _dump_json(report, out / "ensemble.json")
    save_predictions(bundle.ids, result.probabilities, threshold, out / "predictions.csv")
    print(f"ensemble of {len(result.members)}: F1 {result.report['f1']:.4f} "
          f"at t={result.calibration.threshold:.4f}, AUC {result.report['auc']:.4f}", file=sys.stderr)


def cmd_ablate(args) -> None:
    labels = _labels_for(args)
    folds = stratified_kfold(labels.labels, args.folds, args.seed)
    if args.arch:
        if not args.data:
            raise ValidationError("fusion-net ablation needs --data")
        stack = load_patch_stack(args.data)
        data, _ = _prepare_stack(stack, args.indices, args.scaler)
        base = _nn_spec(args, data.channels)
    else:
        if not args.features:
            raise ValidationError("GBM ablation needs --features")
        data = load_feature_table(args.features)
        base = _gbm_spec(args)
    chosen = [(v, n) for v, n in (("drop-stat", args.drop_stat), ("drop-index", args.drop_index),
                                  ("drop-modality", args.drop_modality)) if n]
    if len(chosen) > 1:
        raise ValidationError("choose one of --drop-stat, --drop-index, --drop-modality")
    variant, names = chosen[0] if chosen else ("none", ())
    plan = AblationPlan(variant, names, base)
    row = run_ablation(plan, data, labels, folds)
    doc = {k: v for k, v in row.items() if k != "result"}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _dump_json(doc, out)
    print(f"{doc['variant']}: OOF F1 {doc['oof_f1']:.4f} (baseline {doc['baseline_f1']:.4f}, "
          f"delta {doc['delta_f1']:+.4f})", file=sys.stderr)


def cmd_report(args) -> None:
    path = Path(args.bundle)
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such bundle")
    bundle = OofBundle.load(path)
    if bundle.ensemble is None:
        run_ensemble(bundle)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    y = bundle.labels
    curves = dict(bundle.models, ensemble=bundle.ensemble)

    with open(out / "roc.csv", "w", encoding="utf-8") as fh:
        fh.write("model,fpr,tpr,threshold\n")
        for name, probs in curves.items():
            roc = roc_auc(y, probs)
            for f, t, th in zip(roc.fpr, roc.tpr, roc.thresholds):
                fh.write(f"{name},{float(f)!r},{float(t)!r},{float(th)!r}\n")

    cal = bundle.calibration
    with open(out / "sweep.csv", "w", encoding="utf-8") as fh:
        fh.write("threshold,f1\n")
        for t, f in cal.sweep():
            fh.write(f"{t!r},{f!r}\n")

    cm = confusion_counts(y, bundle.ensemble, cal.threshold)
    _dump_json(dict(cm.to_dict(), threshold=cal.threshold), out / "confusion.json")

    with open(out / "importance.csv", "w", encoding="utf-8") as fh:
        fh.write("model,rank,feature,gain,normalized_gain,splits\n")
        for name, imp in bundle.importance.items():
            norm = dict(zip(imp.names, imp.normalized_gain))
            for rank, (feat, gain, splits) in enumerate(imp.ranked(args.top_k), start=1):
                fh.write(f"{name},{rank},{feat},{gain!r},{float(norm[feat])!r},{splits}\n")

    summary = {
        "members": list(bundle.members or bundle.models),
        "threshold": cal.threshold,
        "f1": cal.f1,
        "auc": roc_auc(y, bundle.ensemble).auc,
        "member_auc": {n: roc_auc(y, p).auc for n, p in bundle.models.items()},
    }
    if args.public_lb is not None or args.private_lb is not None:
        if args.public_lb is None or args.private_lb is None:
            raise ValidationError("--public-lb and --private-lb must be given together")
        oof = args.oof_score if args.oof_score is not None else cal.f1
        summary["overall"] = overall_score(oof, args.public_lb, args.private_lb).to_dict()
    _dump_json(summary, out / "summary.json")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common_cv(p, *, gbm=True, nn=False):
    p.add_argument("--labels", required=True, help="label CSV (ID,label)")
    p.add_argument("--folds", type=int, default=5, help="number of CV folds (default 5)")
    p.add_argument("--seed", type=int, default=0, help="seed for folds and models")
    if gbm:
        p.add_argument("--preset", choices=sorted(PRESETS), default="boost-a", help="GBM preset")
        p.add_argument("--rounds", type=int, default=None, help="override the preset's boosting rounds")
        p.add_argument("--jobs", type=int, default=1, help="threads for histogram building")
    if nn:
        p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="combinedV2",
                       help="fusion-net modality assignment")
        p.add_argument("--epochs", type=int, default=10, help="training epochs per fold")
        p.add_argument("--lr", type=float, default=1e-3, help="peak learning rate")
        p.add_argument("--batch-size", type=int, default=32, help="mini-batch size")
        p.add_argument("--embed-dim", type=int, default=64, help="encoder token width")
        p.add_argument("--depth", type=int, default=2, help="transformer blocks per encoder")
        p.add_argument("--tta", action=argparse.BooleanOptionalAction, default=True,
                       help="average predictions over the flip group")


def _add_prep(p):
    p.add_argument("--indices", action=argparse.BooleanOptionalAction, default=True,
                   help="append the six spectral-index channels")
    p.add_argument("--scaler", choices=("standard", "robust", "none"), default="standard",
                   help="per-channel scaling")


def _add_drops(p):
    p.add_argument("--drop-stat", action="append", help="statistic to drop (repeatable)")
    p.add_argument("--drop-index", action="append", choices=INDEX_NAMES,
                   help="index channel to drop (repeatable)")
    p.add_argument("--drop-modality", type=_csv_list, default=None,
                   help="comma-separated modality groups to drop: " + ",".join(MODALITY_GROUPS))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="landslide-fusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic patch stack and labels")
    p.add_argument("--n", type=int, default=400, help="number of patches")
    p.add_argument("--pos-ratio", type=float, default=0.175, help="fraction of positives")
    p.add_argument("--difficulty", type=float, default=0.3, help="0 (easy) to 1 (hard)")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="compute the per-channel statistics table")
    p.add_argument("--data", required=True, help="patch stack (.npy)")
    p.add_argument("--labels", default=None, help="label CSV supplying row IDs")
    _add_prep(p)
    p.add_argument("--out", required=True, help="output feature CSV")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train-gbm", help="cross-validate a GBM preset on a feature table")
    p.add_argument("--features", required=True, help="feature CSV")
    _add_common_cv(p)
    _add_drops(p)
    p.add_argument("--out", required=True, help="output run directory")
    p.set_defaults(func=cmd_train_gbm)

    p = sub.add_parser("train-nn", help="cross-validate a fusion net on a patch stack")
    p.add_argument("--data", required=True, help="patch stack (.npy)")
    _add_common_cv(p, gbm=False, nn=True)
    _add_prep(p)
    p.add_argument("--out", required=True, help="output run directory")
    p.set_defaults(func=cmd_train_nn)

    p = sub.add_parser("predict", help="apply saved fold models and write predictions")
    p.add_argument("--model", required=True, help="model file or directory of fold models")
    p.add_argument("--features", default=None, help="feature CSV (GBM models)")
    p.add_argument("--data", default=None, help="patch stack (fusion-net models)")
    p.add_argument("--labels", default=None, help="label CSV supplying row IDs for --data")
    p.add_argument("--tta", action=argparse.BooleanOptionalAction, default=None,
                   help="override the saved TTA setting")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help=f"decision threshold (default {DEFAULT_THRESHOLD})")
    p.add_argument("--out", required=True, help="output prediction CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", help="find the F1-optimal threshold for an OOF file")
    p.add_argument("--oof", required=True, help="OOF CSV (ID,fold,probability,label)")
    p.add_argument("--out", default=None, help="output JSON (default: standard output)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("ensemble", help="average OOF vectors and calibrate the ensemble")
    p.add_argument("--oof", required=True, nargs="+", help="member OOF CSV files")
    p.add_argument("--names", nargs="+", default=None, help="member names, one per OOF file")
    p.add_argument("--weights", nargs="+", default=None, help="member weights")
    p.add_argument("--threshold", type=float, default=None,
                   help="override the calibrated threshold for the binary predictions")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("ablate", help="cross-validate one ablation against its baseline")
    p.add_argument("--features", default=None, help="feature CSV (GBM ablations)")
    p.add_argument("--data", default=None, help="patch stack (fusion-net ablations)")
    _add_common_cv(p, nn=True)
    p.set_defaults(arch=None)
    _add_prep(p)
    _add_drops(p)
    p.add_argument("--out", required=True, help="output JSON report row")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="write plot-ready CSV/JSON files for a bundle")
    p.add_argument("--bundle", required=True, help="bundle.json written by 'ensemble'")
    p.add_argument("--top-k", type=int, default=DEFAULT_TOP_K, help="features in importance.csv")
    p.add_argument("--oof-score", type=float, default=None,
                   help="OOF score for the overall metric (default: ensemble F1)")
    p.add_argument("--public-lb", type=float, default=None, help="public leaderboard score")
    p.add_argument("--private-lb", type=float, default=None, help="private leaderboard score")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    for sp in sub.choices.values():
        sp.add_argument("--config", default=None, help="JSON file of flag defaults; flags win")
    return parser


def _subcommands(parser) -> dict:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _coerce(action, value):
    if value is None:
        return None
    if action.type is _csv_list:
        return _csv_list(value) if isinstance(value, str) else tuple(str(v) for v in value)
    if isinstance(action, (argparse._StoreTrueAction, argparse.BooleanOptionalAction)):
        if not isinstance(value, bool):
            raise TypeError("expected true or false")
        return value
    if isinstance(value, list):
        return [_coerce_scalar(action.type, v) for v in value]
    return _coerce_scalar(action.type, value)


def _coerce_scalar(kind, v):
    if kind in (int, float):
        if isinstance(v, bool) or not isinstance(v, (int, float, str)):
            raise TypeError(f"expected a number, got {v!r}")
        if kind is int and isinstance(v, float) and not v.is_integer():
            raise TypeError(f"expected an integer, got {v!r}")
        return kind(v)
    return v if kind is None or isinstance(v, str) and kind is str else (kind(v) if kind else v)


def _config_request(argv):
    """``(command, config path)`` found by scanning ``argv`` ahead of parsing."""
    command = next((a for a in argv if not a.startswith("-")), None)
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    return command, path


def _install_config(parser, command, path):
    """Install the JSON config as subcommand defaults, so explicit flags still win.

    Keys may satisfy required flags; unknown keys are rejected.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    sp = _subcommands(parser)[command]
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config", "func")}
    defaults = {}
    for key, value in doc.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in actions:
            raise ValidationError(f"{path}: unknown key {key!r} for '{command}'")
        action = actions[dest]
        try:
            value = _coerce(action, value)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: bad value for {key!r}: {exc}") from exc
        if action.choices is not None and value is not None:
            for v in value if isinstance(value, list) else [value]:
                if v not in action.choices:
                    raise ValidationError(f"{path}: {key!r} must be one of {sorted(action.choices)}")
        defaults[dest] = value
        action.required = False
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        command, config = _config_request(argv)
        if config and command in _subcommands(parser):
            _install_config(parser, command, config)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValidationError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    except (LandslideError, RuntimeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
