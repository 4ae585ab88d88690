"""Command-line interface: generate, train, sweep, gridsearch, eval, report.

Exit status: 0 success, 1 usage or input error, 2 data validation error,
3 training divergence. Every command writes ``summary.json`` (or prints it
when no output directory applies) embedding the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data import DataValidationError, SyntheticConfig, generate_synthetic, load_dataset, make_folds, read_parcel_map, save_dataset, write_fold
from .evaluation import emit_heatmap, network_report, occlusion_sweep, support_recovery, write_confusion_csv, write_network_csv, write_sweep_csv
from .mask import read_mask_csv, write_mask_csv
from .training import (
    HISTORY_FIELDS, LAMBDA_GRID, TERMS, VARIANTS, TrainConfig, TrainingDivergence,
    allowed_ratios, binarize_and_evaluate, cross_validate, grid_search, masked_model, select_ratio,
    train, weight_grid,
)

SUMMARY_SCHEMA = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("sparg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ helpers


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(obj))


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _write_history(path: Path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for row in history:
            w.writerow([row["epoch"]] + [repr(float(row[f])) for f in HISTORY_FIELDS[1:]])


def _fold(dataset, split_seed: int, index: int):
    folds = make_folds(dataset, seed=split_seed)
    if not 0 <= index < len(folds):
        raise UsageError(f"--fold must lie in 0..{len(folds) - 1}, got {index}")
    return folds[index]


def _add_train_flags(p: argparse.ArgumentParser, variant_required: bool = True) -> None:
    p.add_argument("--variant", choices=sorted(VARIANTS), required=variant_required, default="sparg")
    p.add_argument("--data", required=True, help="dataset directory or manifest.json")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--seed", type=int, default=0, help="training seed")
    p.add_argument("--split-seed", type=int, default=0, help="seed of the fold assignment")
    p.add_argument("--config", help="JSON file with TrainConfig fields; flags override it")
    for name in TERMS + ("lambda_mix",):
        p.add_argument(f"--{name.replace('_', '-')}", type=float, dest=name)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--ratios", type=_floats, help="occlusion grid, e.g. 0,0.7,0.9")
    p.add_argument("--fine-tune", action="store_true", default=None,
                   help="fine-tune autoencoder and classifier after binarizing")
    p.add_argument("--fine-tune-epochs", type=int)
    p.add_argument("--masked-residual-mse", action="store_true", default=None)


def _resolve_config(args) -> TrainConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read --config: {err}") from None
    try:
        cfg = TrainConfig.from_dict(base)
        w = {t: getattr(args, t) for t in TERMS + ("lambda_mix",) if getattr(args, t) is not None}
        overrides = {
            "variant": args.variant, "seed": args.seed,
            "lr": args.lr, "batch_size": args.batch_size, "max_epochs": args.max_epochs,
            "patience": args.patience, "latent_dim": args.latent_dim, "occlusion_grid": args.ratios,
            "fine_tune_after_binarize": args.fine_tune, "fine_tune_epochs": args.fine_tune_epochs,
            "masked_residual_mse": args.masked_residual_mse,
        }
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(cfg, weights=replace(cfg.weights, **w), **overrides)
    except (TypeError, ValueError) as err:
        raise UsageError(str(err)) from None


def _summary(command: str, **fields) -> dict:
    return {"schema": SUMMARY_SCHEMA, "version": __version__, "command": command, **fields}


# ----------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    cfg_dict = {}
    if args.config:
        try:
            cfg_dict = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read --config: {err}") from None
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    try:
        cfg = SyntheticConfig.from_dict(cfg_dict)
        cfg.validate()
    except (TypeError, ValueError) as err:
        raise UsageError(f"invalid synthetic config: {err}") from None
    dataset = generate_synthetic(cfg)
    out = save_dataset(dataset, args.out)
    _write_json(out / "summary.json", _summary(
        "generate", config=cfg.to_dict(), k=dataset.k, n_subjects=len(dataset),
        n_ood=int(dataset.ood.sum()), planted=dataset.planted,
    ))
    return EXIT_OK


def _train_one(cfg: TrainConfig, dataset, fold, out: Path) -> dict:
    tm = train(cfg, fold, dataset)
    ratio, rows = select_ratio(tm, fold, dataset)
    chosen = next(r for r in rows if r["ratio"] == ratio)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_dict())
    write_fold(out / "fold.json", fold)
    save_checkpoint(tm, out / "best")
    _write_history(out / "history.csv", tm.history)
    write_sweep_csv(out / "sweep.csv", rows)
    model = tm.model
    if model.mask is not None and model.spec.mask == "trainable":
        write_mask_csv(out / "mask.csv", model.mask)
    binary = masked_model(tm, ratio).mask
    if binary is not None:
        write_mask_csv(out / "mask_binary.csv", binary)
    write_confusion_csv(out / "confusion.csv", {s: chosen[f"{s}_confusion"] for s in ("val", "id", "ood")
                                                 if f"{s}_confusion" in chosen})
    result = {
        "fold": fold.fold, "best_epoch": tm.best_epoch, "epochs_run": len(tm.history),
        "selected_ratio": ratio, "n_kept": chosen["n_kept"],
        "val_balacc": chosen["val_balacc"], "id_balacc": chosen["id_balacc"],
        "ood_balacc": chosen["ood_balacc"],
        "sweep": [{k: r[k] for k in ("ratio", "val_balacc", "id_balacc", "ood_balacc", "n_kept")} for r in rows],
    }
    if dataset.planted and binary is not None:
        precision, recall, empty = support_recovery(binary, dataset.planted["informative"])
        result["support"] = {"precision": precision, "recall": recall, "empty": empty}
    return result


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    out = Path(args.out)
    if not args.cv:
        fold = _fold(dataset, args.split_seed, args.fold)
        result = _train_one(cfg, dataset, fold, out)
        _write_json(out / "summary.json", _summary(
            "train", config=cfg.to_dict(), data=str(args.data), split_seed=args.split_seed, result=result))
        return EXIT_OK
    folds = make_folds(dataset, seed=args.split_seed)
    cv = cross_validate(cfg, dataset, folds, jobs=args.jobs)
    fold_results = []
    for fold, tm, entry in zip(folds, cv.models, cv.folds):
        sub = out / f"fold{fold.fold}"
        sub.mkdir(parents=True, exist_ok=True)
        save_checkpoint(tm, sub / "best")
        _write_history(sub / "history.csv", tm.history)
        write_fold(sub / "fold.json", fold)
        binary = masked_model(tm, entry["ratio"]).mask
        if tm.model.mask is not None and tm.model.spec.mask == "trainable":
            write_mask_csv(sub / "mask.csv", tm.model.mask)
        if binary is not None:
            write_mask_csv(sub / "mask_binary.csv", binary)
        fold_results.append(entry)
    _write_json(out / "config.json", cfg.to_dict())
    _write_json(out / "summary.json", _summary(
        "train", config=cfg.to_dict(), data=str(args.data), split_seed=args.split_seed, cv=cv.summary()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    tm = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    fold = _fold(dataset, args.split_seed, args.fold)
    ratios = args.ratios if args.ratios is not None else allowed_ratios(tm.model.variant, tm.config.occlusion_grid)
    try:
        rows = occlusion_sweep(tm, ratios, fold, dataset)
    except ValueError as err:
        raise UsageError(str(err)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out / "sweep.csv", rows)
    _write_json(out / "summary.json", _summary(
        "sweep", config=tm.config.to_dict(), checkpoint=str(args.checkpoint), data=str(args.data),
        fold=args.fold, split_seed=args.split_seed, rows=rows))
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    fold = _fold(dataset, args.split_seed, args.fold)
    values = {t: getattr(args, f"{t}_values") or args.values for t in TERMS}
    try:
        candidates = weight_grid(cfg.variant, values, tie=args.tie, base=cfg.weights)
    except ValueError as err:
        raise UsageError(str(err)) from None
    result = grid_search(cfg, fold, dataset, weights=candidates, tie=args.tie, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = list(TERMS) + ["ratio", "val_balacc", "id_balacc", "ood_balacc", "best_epoch"]
    with open(out / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in result.scores:
            w.writerow([row[f] if f == "best_epoch" else repr(float(row[f])) for f in fields])
    best = result.best_config.to_dict()
    _write_json(out / "best_config.json", best)
    _write_json(out / "summary.json", _summary(
        "gridsearch", config=cfg.to_dict(), data=str(args.data), fold=args.fold, split_seed=args.split_seed,
        n_evaluations=len(result.scores), best_config=best, best_ratio=result.best_ratio))
    return EXIT_OK


def cmd_eval(args) -> int:
    tm = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    fold = _fold(dataset, args.split_seed, args.fold)
    if args.ratio is None:
        ratio, _ = select_ratio(tm, fold, dataset)
    else:
        ratio = args.ratio
    try:
        entry = binarize_and_evaluate(tm, ratio, fold, dataset)
    except ValueError as err:
        raise UsageError(str(err)) from None
    report = _summary("eval", config=tm.config.to_dict(), checkpoint=str(args.checkpoint), data=str(args.data),
                      fold=args.fold, split_seed=args.split_seed, report=entry)
    binary = masked_model(tm, ratio).mask
    if dataset.planted and binary is not None:
        precision, recall, empty = support_recovery(binary, dataset.planted["informative"])
        report["support"] = {"precision": precision, "recall": recall, "empty": empty}
    if args.out:
        _write_json(Path(args.out), report)
    else:
        sys.stdout.write(_dump(report))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        mask = read_mask_csv(args.mask)
    except (OSError, ValueError) as err:
        raise UsageError(f"cannot read mask: {err}") from None
    if mask.mode != "binary":
        raise UsageError("report needs a binary mask CSV (header i,j,kept)")
    networks = read_parcel_map(args.parcels, mask.k)
    names, counts = network_report(mask, networks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_network_csv(out / "network_counts.csv", names, counts)
    emit_heatmap(counts, out / "network_heatmap.svg", names, names, title="kept edges per network pair")
    _write_json(out / "summary.json", _summary(
        "report", config={"mask": str(args.mask), "parcels": str(args.parcels)},
        n_kept=int(mask.kept.sum()), networks=names, counts=counts.tolist()))
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparg", description="Sparse masks, VAE and GCN for connectivity matrices.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--config", help="JSON file with SyntheticConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one variant on one fold, or all folds with --cv")
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--cv", action="store_true", help="train all five folds and aggregate")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="occlusion sweep from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--ratios", type=_floats)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gridsearch", help="grid over loss weights and occlusion ratios")
    _add_train_flags(p)
    p.add_argument("--values", type=_floats, default=LAMBDA_GRID, help="grid shared by all weights")
    for t in TERMS:
        p.add_argument(f"--{t}-values", type=_floats, dest=f"{t}_values", help=f"grid for {t} only")
    p.add_argument("--tie", action="store_true", help="tie all weights to one value")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("eval", help="evaluation report from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--ratio", type=float, help="occlusion ratio; default: best on validation")
    p.add_argument("--out", help="report JSON path; default: stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="network counts and heatmap from a binary mask")
    p.add_argument("--mask", required=True, help="binary mask CSV")
    p.add_argument("--parcels", required=True, help="parcel map CSV (parcel,network)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergence as err:
        print(f"training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())
