"""Command-line interface: ``xaitune <subcommand> ...``.

Exit status is 0 on success, 2 for configuration and input errors and 3 for
runtime or numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import consistency, nn, xai
from .config import RunConfig
from .data import StandardScaler, load_table, resolve_data_path, scaler_apply, split, standardize
from .doe import design_table, latin_hypercube
from .errors import ConfigurationError, IngestionError, XaiTuneError
from .tuner import (EvaluationRecord, best_record, evaluate_sample, final_metrics, pareto_front,
                    tune, _jsonable)

logger = logging.getLogger("xaitune")

TABLE3_ROWS = [("l1", "l1"), ("epochs", "epochs"), ("batch_size", "batch size"),
               ("dropout_p", "dropout"), ("lr_multiplier", "lr multiplier"),
               ("activation", "activation"), ("optimizer", "optimizer")]


# ---------------------------------------------------------------- helpers

def _open_out(path, mode="w"):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, mode, newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc}") from None


def _write_csv(path, header, rows):
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj):
    with _open_out(path) as fh:
        fh.write(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _fmt(v, digits=4):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.{digits}g}" if abs(v) >= 1e4 or (v != 0 and abs(v) < 1e-3) else f"{v:.{digits}f}"
    return str(v)


def _print_table(header, rows, out=None):
    out = out or sys.stdout
    cells = [list(map(str, header))] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for k, r in enumerate(cells):
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip(), file=out)
        if k == 0:
            print("  ".join("-" * w for w in widths), file=out)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig.from_dict({})
    cfg = cfg.override("data", path=getattr(args, "data", None),
                       split_seed=getattr(args, "split_seed", None))
    cfg = cfg.override("objective", mode=getattr(args, "mode", None))
    cfg = cfg.override("smbo", init=getattr(args, "init", None), budget=getattr(args, "budget", None),
                       repeats=getattr(args, "repeats", None), seed=getattr(args, "seed", None),
                       infill=getattr(args, "infill", None),
                       budget_includes_init=getattr(args, "budget_includes_init", None))
    if getattr(args, "methods", None):
        cfg = cfg.override("attribution", methods=list(args.methods))
    return cfg


def _prepare_data(cfg: RunConfig):
    d = cfg.data
    path = resolve_data_path(d["path"])
    ds = load_table(path, d["target"])
    splits, scaler = standardize(split(ds, tuple(d["fractions"]), d["split_seed"]))
    return ds, path, splits, scaler


def read_run_log(path) -> list[EvaluationRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / "run_log.jsonl"
    if not path.is_file():
        raise IngestionError(f"{path}: no such run log")
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(EvaluationRecord.from_dict(json.loads(line)))
            except (ValueError, TypeError, KeyError) as exc:
                raise IngestionError(f"{path}:{lineno}: malformed record ({exc})") from None
    if not records:
        raise IngestionError(f"{path}: run log is empty")
    return records


# ---------------------------------------------------------------- subcommands

def cmd_doe(args) -> int:
    cfg = _load_config(args)
    space = cfg.space
    if args.n < 1:
        raise ConfigurationError("--n must be >= 1")
    points = latin_hypercube(args.n, space, cfg.smbo["seed"])
    header, rows = design_table(points, space)
    _write_csv(args.out, header, rows)
    print(f"wrote {len(rows)} designs to {args.out}")
    if args.evaluate:
        _, _, splits, _ = _prepare_data(cfg)
        log = Path(args.log or Path(args.out).with_suffix(".jsonl"))
        with _open_out(log) as fh:
            def write(rec):
                fh.write(rec.to_json() + "\n")
                fh.flush()
            evaluate_sample(points, splits, cfg.objective, cfg.smbo["repeats"], cfg.smbo["seed"],
                            cfg.attribution, on_record=write)
        print(f"wrote evaluations to {log}")
    return 0


def cmd_tune(args) -> int:
    cfg = _load_config(args)
    spec, space, attributions, de = cfg.objective, cfg.space, cfg.attribution, cfg.de_settings
    s = cfg.smbo
    ds, data_path, splits, scaler = _prepare_data(cfg)
    out = Path(args.out)
    with _open_out(out / "config.yaml") as fh:
        fh.write(cfg.dump())
    _write_json(out / "split_indices.json", {k: list(map(int, v)) for k, v in splits.indices.items()})

    with _open_out(out / "run_log.jsonl") as log:
        def write(rec):
            log.write(rec.to_json(timing=args.timing) + "\n")
            log.flush()
            if args.verbose:
                print(f"[{rec.index:3d}] {rec.phase:6s} obj={_fmt(rec.objective)} "
                      f"best={_fmt(rec.best_so_far)}", file=sys.stderr)
        run = tune(splits, spec, space, s["init"], s["budget"], s["repeats"], s["seed"],
                   attributions, de, s["infill"], s["budget_includes_init"], on_record=write)
    _write_csv(out / "trace.csv", ["index", "phase", "mse", "cons", "objective", "best_so_far"],
               [[r.index, r.phase, r.mse, r.cons, r.objective, r.best_so_far] for r in run.records])

    best = run.best
    if best.degenerate:
        raise XaiTuneError("every evaluated configuration diverged")
    keep = {}
    final = final_metrics(best, splits, spec, attributions, keep)
    model = keep["models"][0]
    nn.save_model(model, out / "best_model.bin", metadata=dict(
        hyperparameters=best.hyperparameters, seed=best.repeats[0].seed,
        feature_names=ds.feature_names, target_name=ds.target_name,
        scaler_mean=scaler.mean.tolist(), scaler_std=scaler.std.tolist(),
        data_path=str(cfg.data["path"]), split_seed=cfg.data["split_seed"],
        fractions=cfg.data["fractions"]))
    summary = dict(mode=spec.mode, metric=spec.metric, seed=s["seed"], evaluations=len(run.records),
                   surrogate_failures=run.surrogate_failures, penalty=run.penalty,
                   best=json.loads(best.to_json()), final=final,
                   methods=[xai.METHOD_LABELS[m] for m in attributions.methods],
                   features=ds.feature_names, skipped_rows=ds.skipped)
    _write_json(out / "summary.json", summary)
    print_summary(summary)
    return 0


def print_summary(summary: dict, out=None):
    out = out or sys.stdout
    label = summary["mode"]
    print(f"\nBest hyperparameters ({label})", file=out)
    hp = summary["best"]["hyperparameters"]
    _print_table(["hyperparameter", label], [[name, hp[k]] for k, name in TABLE3_ROWS], out)
    print(f"\nMetrics of the best configuration ({label})", file=out)
    f = summary["final"]
    v, t = f["validation"], f["test"]
    _print_table(["objective", "MSE (val)", "MSE (test)", "XAI consistency (val)",
                  "XAI consistency (test)"],
                 [[label, v.get("mse"), t.get("mse"), v.get("cons"), t.get("cons")]], out)
    if "desirability" in f:
        d = f["desirability"]
        print(f"\nD = {_fmt(d['D'])}   1 - D = {_fmt(d['one_minus_D'])}   "
              f"(d_loss = {_fmt(d['d_loss'])}, d_consistency = {_fmt(d['d_consistency'])})", file=out)


def cmd_explain(args) -> int:
    methods = list(args.methods or xai.METHODS)
    for m in methods:
        if m not in xai.METHODS:
            raise ConfigurationError(f"unknown attribution method {m!r}; choose from {xai.METHODS}")
    model_path = Path(args.model)
    if not model_path.is_file():
        raise IngestionError(f"{model_path}: no such model file")
    model, meta = nn.load_model(model_path)
    data_arg = args.data or meta.get("data_path", "fixture")
    ds = load_table(resolve_data_path(data_arg), meta.get("target_name"))
    names = meta.get("feature_names", ds.feature_names)
    if list(ds.feature_names) != list(names):
        raise IngestionError(f"data columns {ds.feature_names} do not match the model's {names}")
    if args.split == "all":
        X = ds.features
    else:
        parts = split(ds, tuple(meta.get("fractions", (0.6, 0.2, 0.2))), meta.get("split_seed", 0))
        X = getattr(parts, "_test" if args.split == "test" else args.split).features
    if "scaler_mean" in meta:
        X = scaler_apply(StandardScaler(np.array(meta["scaler_mean"]), np.array(meta["scaler_std"])), X)
    baseline = None
    if args.baseline is not None:
        baseline = [float(v) for v in args.baseline.split(",")]
    E = xai.attribution_matrix(model, X, names, methods, baseline, args.seed,
                               args.ig_steps, args.shap_samples)
    E.to_csv(args.out)
    print(f"wrote {len(E.methods)}x{len(E.features)} attribution matrix to {args.out}")
    return 0


def cmd_consistency(args) -> int:
    E = xai.AttributionMatrix.from_csv(args.table)
    res = consistency.all_metrics(E, args.absolute)
    for k in consistency.METRICS:
        print(f"{k},{res[k]!r}")
    return 0


def cmd_pareto(args) -> int:
    records = [r for r in read_run_log(args.log) if not r.degenerate]
    if any(r.cons is None for r in records):
        raise IngestionError("run log lacks consistency values (loss-only runs cannot form a front)")
    if args.max_mse is not None:
        records = [r for r in records if r.mse <= args.max_mse]
    if not records:
        raise IngestionError("no records left after filtering")
    front = pareto_front(records)
    on = {r.index for r in front}
    rows = sorted(front, key=lambda r: (r.mse, -r.cons)) if args.front_only else records
    table = [[r.index, repr(r.mse), repr(r.cons), int(r.index in on)] for r in rows]
    if args.out:
        _write_csv(args.out, ["index", "mse", "cons", "on_front"], table)
        print(f"{len(front)} of {len(records)} records on the front; wrote {args.out}")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["index", "mse", "cons", "on_front"])
        w.writerows(table)
    return 0


def cmd_report(args) -> int:
    summaries = []
    for p in args.runs:
        p = Path(p)
        run_dir = p if p.is_dir() else p.parent
        records = read_run_log(p)
        summary_path = run_dir / "summary.json"
        if summary_path.is_file():
            summaries.append(json.loads(summary_path.read_text()))
        else:
            best = best_record(records)
            summaries.append(dict(mode=run_dir.name, best=json.loads(best.to_json()),
                                  final=dict(validation=dict(mse=best.mse, cons=best.cons), test={})))
    labels = [s["mode"] for s in summaries]
    print("Best hyperparameters")
    _print_table(["hyperparameter", *labels],
                 [[name, *(s["best"]["hyperparameters"][k] for s in summaries)]
                  for k, name in TABLE3_ROWS])
    print("\nMetrics of the best configurations")
    rows = []
    for s in summaries:
        v, t = s["final"]["validation"], s["final"].get("test", {})
        rows.append([s["mode"], v.get("mse"), t.get("mse"), v.get("cons"), t.get("cons")])
    _print_table(["objective", "MSE (val)", "MSE (test)", "XAI consistency (val)",
                  "XAI consistency (test)"], rows)
    for s in summaries:
        d = s["final"].get("desirability")
        if d:
            print(f"\n{s['mode']}: D = {_fmt(d['D'])}, 1 - D = {_fmt(d['one_minus_D'])}")
    return 0


# ---------------------------------------------------------------- parser

def _add_run_flags(p, tuning=True):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--data", help="data table path or 'fixture' (overrides data.path)")
    p.add_argument("--split-seed", type=int)
    p.add_argument("--seed", type=int, help="master seed (overrides smbo.seed)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--mode", choices=("loss", "weighted", "desirability"))
    p.add_argument("--methods", nargs="+", choices=xai.METHODS)
    if tuning:
        p.add_argument("--init", type=int)
        p.add_argument("--budget", type=int)
        p.add_argument("--infill", choices=("mean", "ei"))
        p.add_argument("--budget-includes-init", action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xaitune",
                                     description="Tune an MLP for loss and XAI consistency.")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("doe", help="emit a Latin hypercube design table")
    _add_run_flags(p, tuning=False)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--evaluate", action="store_true",
                   help="also train and explain every design, writing a run log")
    p.add_argument("--log", help="run log path for --evaluate (default: <out>.jsonl)")
    p.set_defaults(func=cmd_doe)

    p = sub.add_parser("tune", help="run surrogate-based tuning")
    _add_run_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--timing", action="store_true", help="record wall times in the run log")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("explain", help="global attributions of a saved model")
    p.add_argument("model")
    p.add_argument("--data", help="data table (default: the one recorded with the model)")
    p.add_argument("--split", choices=("train", "validation", "test", "all"), default="validation")
    p.add_argument("--methods", nargs="+")
    p.add_argument("--baseline", help="comma-separated baseline in standardized units (default zero)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ig-steps", type=int, default=xai.IG_STEPS)
    p.add_argument("--shap-samples", type=int, default=xai.SHAP_SAMPLES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("consistency", help="consistency metrics of an attribution table")
    p.add_argument("table")
    p.add_argument("--absolute", action="store_true", help="rank attribution magnitudes")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("pareto", help="Pareto front of a run log over (MSE, -consistency)")
    p.add_argument("log")
    p.add_argument("--max-mse", type=float, help="drop records with MSE above this value")
    p.add_argument("--front-only", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("report", help="summary tables for one or more runs")
    p.add_argument("runs", nargs="+", help="run directories or run logs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except XaiTuneError as exc:
        print(f"xaitune {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"xaitune {args.command}: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 3


if __name__ == "__main__":
    sys.exit(main())
