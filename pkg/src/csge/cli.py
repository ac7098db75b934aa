"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import synthetic
from .config import RunConfig, load_config
from .core import CsgeError
from .ensemble import cross_validate, fit, make_fold_plan, make_holdout_plan
from .io import import_external_predictions, load_csv, load_features_csv, load_model, save_model
from .optim import ObjectiveConfig

log = logging.getLogger("csge")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_run_config(path) -> RunConfig:
    if path is None:
        raise UsageError("--config is required")
    if not Path(path).is_file():
        raise UsageError(f"config file {path} not found")
    return load_config(path)


def _dataset(cfg: RunConfig, override):
    d = dict(cfg.data)
    path = override or d.get("path")
    if path is None:
        raise UsageError("no data file: pass --data or set data.path in the config")
    if "target" not in d:
        raise UsageError("config data.target is required")
    return load_csv(
        path,
        target=d["target"],
        lead_time=d.get("lead_time"),
        sample_id=d.get("sample_id", "sample_id"),
        n_classes=d.get("n_classes"),
        classification=cfg.classification,
    )


def _fit_kwargs(cfg: RunConfig) -> dict:
    return {
        "n_dim": cfg.n_dim,
        "n_neighbors": cfg.n_neighbors,
        "scorer": cfg.scorer,
    }


def cmd_fit(args) -> int:
    cfg = _load_run_config(args.config)
    data = _dataset(cfg, args.data)
    folds = cfg.folds
    fold_seed = folds.get("seed", cfg.seed)
    if folds.get("protocol", "kfold") == "holdout":
        plan = make_holdout_plan(data.n_samples, folds.get("holdout_fraction", 0.5), fold_seed)
    else:
        labels = data.targets if data.is_classification else None
        plan = make_fold_plan(data.n_samples, folds.get("k", 5), fold_seed, labels)
    log.info("fitting %d members on %d rows (%s, K=%d)", len(cfg.members), data.n_samples,
             plan.protocol, plan.K)
    model = fit(
        cfg.members, data, plan, cfg.objective,
        search=cfg.search or None, seed=cfg.seed, **_fit_kwargs(cfg),
    )
    model.config.update(
        {
            "feature_names": list(data.feature_names),
            "target": cfg.data.get("target"),
            "sample_id": cfg.data.get("sample_id", "sample_id"),
            "task": cfg.task,
        }
    )
    out = Path(args.out or Path(cfg.output_dir) / "model.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    if args.trace and model.optimization is not None:
        model.optimization.write_trace(args.trace)
    e = model.eta
    print(f"eta_global={e.eta_global:.6g} eta_local={e.eta_local:.6g} eta_time={e.eta_time:.6g}")
    print(f"model written to {out}")
    return EXIT_OK


def _require_file(path, what):
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} {path} does not exist")


def _member_predictions_for(path, model, n_rows):
    cube = import_external_predictions(path)
    if cube.n_samples != n_rows:
        raise CsgeError(f"member predictions cover {cube.n_samples} rows, data has {n_rows}")
    return cube.values


def cmd_predict(args) -> int:
    _require_file(args.model, "model file")
    _require_file(args.data, "data file")
    model = load_model(args.model)
    names = model.config.get("feature_names") or [f"x{i}" for i in range(model.n_features)]
    X, ids = load_features_csv(args.data, names, model.config.get("sample_id"))
    external = None
    if args.member_predictions:
        external = _member_predictions_for(args.member_predictions, model, len(ids))
    elif model.members is None:
        raise CsgeError("model has external members; pass --member-predictions")
    pred_rows, weight_rows = [], []
    for t in range(model.n_lead_times):
        mp = None if external is None else external[:, :, t]
        batch = model.predict_batch(X, t, mp)
        for i, sid in enumerate(ids):
            if model.is_classification:
                fused = int(batch.labels[i])
                members = [int(np.argmax(p)) for p in batch.members[i]]
            else:
                fused = repr(float(batch.fused[i]))
                members = [repr(float(p)) for p in batch.members[i]]
            pred_rows.append([sid, t, fused])
            for j, mid in enumerate(model.member_ids):
                weight_rows.append([
                    sid, t, mid,
                    repr(float(batch.w_global[j])), repr(float(batch.w_local[i, j])),
                    repr(float(batch.w_time[j])), repr(float(batch.w_final[i, j])),
                    members[j], fused,
                ])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "lead_time", "prediction"])
        w.writerows(pred_rows)
    weights = Path(args.weights) if args.weights else out.with_name(out.stem + "_weights.csv")
    with open(weights, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([
            "sample_id", "lead_time", "member_id", "w_global", "w_local", "w_time",
            "w_final", "member_prediction", "fused_prediction",
        ])
        w.writerows(weight_rows)
    print(f"predictions written to {out}, weights to {weights}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_run_config(args.config)
    data = _dataset(cfg, args.data)
    n_folds = args.folds or cfg.eval.get("n_folds", 10)
    n_seeds = args.seeds or cfg.eval.get("n_seeds", 10)
    seeds = [cfg.seed + s for s in range(n_seeds)]
    report = cross_validate(
        cfg.members, data, n_folds=n_folds, seeds=seeds,
        inner_folds=cfg.eval.get("inner_folds", cfg.folds.get("k", 5)),
        obj_cfg=cfg.objective, search=cfg.search or None, **_fit_kwargs(cfg),
    )
    out = Path(args.out or Path(cfg.output_dir) / "report")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".csv").write_text(report.to_csv())
    out.with_suffix(".md").write_text(report.to_markdown())
    print(report.to_markdown(), end="")
    return EXIT_OK


def _write_xy(path, x, y):
    np.savetxt(path, np.column_stack([x, y]), fmt="%.17g")


def cmd_synthetic(args) -> int:
    cfg = ObjectiveConfig(c_reg=args.c_reg, use_penalty_heuristic=not args.no_heuristic)
    run = synthetic.run_experiment(args.which, n_samples=args.n_samples, obj_cfg=cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = run.summary()
    (out / "report.json").write_text(json.dumps(summary, indent=1))
    lines = [
        f"# synthetic experiment: {args.which}",
        "",
        f"- eta (global, local, time): {', '.join(f'{v:.4f}' for v in summary['eta'])}",
        f"- global weights: {', '.join(f'{v:.4f}' for v in summary['w_global'])}",
        f"- mean final weights: {', '.join(f'{v:.4f}' for v in summary['w_final_mean'])}",
        f"- test RMSE: {summary['rmse']:.6g}",
        f"- max abs error: {summary['max_abs_error']:.6g}",
        "",
    ]
    (out / "report.md").write_text("\n".join(lines))
    order = np.argsort(run.x_test)
    x = run.x_test[order]
    for t in range(run.truth.shape[1]):
        suffix = f"_t{t}" if run.truth.shape[1] > 1 else ""
        _write_xy(out / f"target{suffix}.xy", x, run.truth[order, t])
        _write_xy(out / f"csge{suffix}.xy", x, run.fused[order, t])
    for j, mid in enumerate(run.model.member_ids):
        _write_xy(out / f"member_{j + 1}.xy", x, run.model.members[j].predict(x[:, None]))
    print("\n".join(lines))
    return EXIT_OK


def cmd_explain(args) -> int:
    _require_file(args.model, "model file")
    _require_file(args.data, "data file")
    model = load_model(args.model)
    if model.members is None:
        raise CsgeError("explain needs a model with built-in members")
    names = model.config.get("feature_names") or [f"x{i}" for i in range(model.n_features)]
    X, _ = load_features_csv(args.data, names, model.config.get("sample_id"))
    stats = {}
    for t in range(model.n_lead_times):
        batch = model.predict_batch(X, t)
        for aspect, w in (
            ("global", np.broadcast_to(batch.w_global, batch.w_final.shape)),
            ("local", batch.w_local),
            ("time", np.broadcast_to(batch.w_time, batch.w_final.shape)),
            ("final", batch.w_final),
        ):
            stats.setdefault(aspect, []).append(w)
    rows = [["member_id", "aspect", "mean", "std", "min", "max"]]
    for aspect, ws in stats.items():
        w = np.concatenate(ws, axis=0)
        for j, mid in enumerate(model.member_ids):
            col = w[:, j]
            rows.append([mid, aspect, *(f"{v:.6g}" for v in (col.mean(), col.std(), col.min(), col.max()))])
    e = model.eta
    text = (
        f"eta_global={e.eta_global:.6g} eta_local={e.eta_local:.6g} eta_time={e.eta_time:.6g}\n"
        + "\n".join(",".join(map(str, r)) for r in rows)
        + "\n"
    )
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="csge", description="Soft gating ensemble: fit, predict, evaluate, explain.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    f = sub.add_parser("fit", help="fit an ensemble from a config and write a model file")
    f.add_argument("--config", help="JSON run config")
    f.add_argument("--data", help="training CSV (overrides data.path)")
    f.add_argument("--out", help="model file (default: <output_dir>/model.json)")
    f.add_argument("--trace", help="also write the exponent search trace as CSV")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict a CSV and write per-row weight breakdowns")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True, help="CSV with the model's feature columns")
    pr.add_argument("--out", required=True, help="predictions CSV")
    pr.add_argument("--weights", help="weight breakdown CSV (default: <out>_weights.csv)")
    pr.add_argument("--member-predictions", help="external member predictions for the rows")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="repeated k-fold comparison of members, averaging and ensemble")
    e.add_argument("--config")
    e.add_argument("--data")
    e.add_argument("--folds", type=int)
    e.add_argument("--seeds", type=int, help="number of repetitions")
    e.add_argument("--out", help="report path stem; writes .csv and .md")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synthetic", help="run a toy experiment end to end")
    s.add_argument("--which", required=True, choices=synthetic.WHICH)
    s.add_argument("--out", default="synthetic_out")
    s.add_argument("--n-samples", type=int, default=500)
    s.add_argument("--c-reg", type=float, default=0.1)
    s.add_argument("--no-heuristic", action="store_true", help="plain sum-of-eta regulariser")
    s.set_defaults(func=cmd_synthetic)

    x = sub.add_parser("explain", help="weight statistics per member and aspect")
    x.add_argument("--model", required=True)
    x.add_argument("--data", required=True)
    x.add_argument("--out")
    x.set_defaults(func=cmd_explain)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"csge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CsgeError, OSError, ValueError) as exc:
        print(f"csge: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
