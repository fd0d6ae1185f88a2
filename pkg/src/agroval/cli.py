"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 run error.  On failure
stderr starts with the error category (``UsageError``, ``DataError`` or
``RunError``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import AgrovalError, DataError, RunError
from .evaluate import BASELINES
from .experiment import load_config, load_records, report, run_matrix
from .explain import summary_from_matrix, tree_shap_rows, write_shap_csv, write_summary_csv
from .indicators.features import build_feature_table, load_feature_spec
from .ingest import load_weather_csv, load_yield_csv, validate_panels, write_weather_csv, write_yield_csv
from .models.ensemble import MODEL_KINDS, fit_model, load_model, save_model
from .models.search import HyperGrid, grid_search
from .splits import DEFAULT_POOL_YEARS, SplitPlan, expanding_window_folds, make_split_plan, select_validation_years
from .synth import Driver, SynthConfig, synth_generate
from .targets import TARGET_KINDS, TargetConfig, build_target_table

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUN = 0, 1, 2, 3

# used by `synth` when no config supplies drivers
DEFAULT_DRIVERS = (
    Driver("tmean", 6, -0.8),
    Driver("precip", 5, 0.4, "sum"),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _year_range(text: str) -> tuple:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FIRST:LAST, got {text!r}") from None


def _out_dir(args, default: str = ".") -> Path:
    out = Path(args.out or os.environ.get("AGROVAL_OUT") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args):
    return load_config(args.config) if args.config else None


def _panels(args):
    if args.weather and args.yields:
        return load_weather_csv(args.weather), load_yield_csv(args.yields)
    if args.weather or args.yields:
        raise UsageError("--weather and --yields go together")
    cfg = _config(args)
    if cfg is not None:
        return cfg.load_data()
    raise UsageError("give --weather and --yields, or a --config with data")


def _yields(args):
    if args.yields:
        return load_yield_csv(args.yields)
    return _panels(args)[1]


def _plan(args, yields) -> SplitPlan:
    if getattr(args, "plan", None):
        return SplitPlan.load(args.plan)
    cfg = _config(args)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    val = cfg.validation_years if cfg else (2004, 2018)
    pool = cfg.pool_years if cfg else DEFAULT_POOL_YEARS
    frac = cfg.test_frac if cfg else 0.10
    return make_split_plan(yields.keys, select_validation_years(yields, val, pool), pool, frac, seed)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(args) -> int:
    if args.config:
        from .experiment import resolve_config_path, tomllib

        p = resolve_config_path(args.config)
        text = p.read_text(encoding="utf-8")
        raw = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
        base = dict(raw.get("synth", raw))
    else:
        base = {"drivers": [d.__dict__ for d in DEFAULT_DRIVERS]}
    if args.regions is not None:
        base["n_regions"] = args.regions
    if args.years is not None:
        base["year_range"] = args.years
    if args.seed is not None:
        base["seed"] = args.seed
    cfg = SynthConfig.from_dict(base)
    weather, yields, truth = synth_generate(cfg)
    out = _out_dir(args)
    write_weather_csv(weather, out / "weather.csv")
    write_yield_csv(yields, out / "yield.csv")
    truth.to_json(out / "truth.json")
    print(f"wrote {out / 'weather.csv'}, {out / 'yield.csv'}, {out / 'truth.json'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    weather, yields = _panels(args)
    rep = validate_panels(weather, yields)
    text = json.dumps(rep.to_dict(), indent=2, sort_keys=True)
    if args.out:
        _write_json(_out_dir(args) / "validation.json", rep.to_dict())
    print(text)
    if not rep.ok:
        print(f"DataError: {len(rep.errors)} panel mismatches: {'; '.join(rep.errors[:5])}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_features(args) -> int:
    spec = load_feature_spec(args.spec)
    weather, yields = _panels(args)
    train = SplitPlan.load(args.plan).train_cells if args.plan else None
    table = build_feature_table(weather, yields, spec, train_cells=train)
    path = _out_dir(args) / f"features_{spec.name}.csv"
    table.to_csv(path)
    print(f"{path}: {len(table)} rows, {len(table.columns)} columns, {table.dropped} dropped")
    return EXIT_OK


def _target_config(args) -> TargetConfig:
    cfg = _config(args)
    return cfg.targets if cfg else TargetConfig()


def cmd_targets(args) -> int:
    yields = _yields(args)
    table = build_target_table(yields, args.kind, _target_config(args))
    out = _out_dir(args)
    table.to_csv(out / f"targets_{args.kind}.csv")
    table.write_trend_json(out / "trend.json")
    print(f"{out / f'targets_{args.kind}.csv'}: {len(table)} rows, {table.dropped} dropped")
    return EXIT_OK


def cmd_split(args) -> int:
    yields = _yields(args)
    if args.validation_years:
        val = "auto" if args.validation_years == "auto" else [int(v) for v in args.validation_years.split(",")]
        cfg = _config(args)
        seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
        pool = args.pool or (cfg.pool_years if cfg else DEFAULT_POOL_YEARS)
        plan = make_split_plan(yields.keys, select_validation_years(yields, val, pool), pool, args.test_frac, seed)
    else:
        plan = _plan(args, yields)
    path = _out_dir(args) / "split_plan.json"
    plan.save(path)
    print(f"{path}: validation years {list(plan.validation_years)}, {len(plan.train_cells)} train, "
          f"{len(plan.test_cells)} test cells")
    return EXIT_OK


def _xy(args, plan=None):
    spec = load_feature_spec(args.spec)
    weather, yields = _panels(args)
    plan = plan or _plan(args, yields)
    features = build_feature_table(weather, yields, spec, train_cells=plan.train_cells)
    targets = build_target_table(yields, args.target, _target_config(args))
    return spec, features, targets, plan


def cmd_train(args) -> int:
    spec, features, targets, plan = _xy(args)
    cfg = _config(args)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    f_index, t_lookup = features.row_index(), targets.lookup()
    train = sorted(c for c in plan.train_cells if c in f_index and c in t_lookup)
    X = features.values[[f_index[c] for c in train]]
    y = [t_lookup[c] for c in train]
    if args.params:
        params = json.loads(args.params)
    else:
        grid = cfg.grid if cfg else HyperGrid()
        years = [c[1] for c in train]
        folds = expanding_window_folds(sorted(set(years)), cfg.n_folds if cfg else 3)
        params, _ = grid_search(X, y, years, grid, folds, args.model, seed, features.columns)
    model = fit_model(args.model, X, y, params, seed, features.columns)
    path = _out_dir(args) / "models" / f"{args.model}__{spec.name}__{args.target}.json"
    save_model(model, path)
    print(f"{path}: {len(model.trees)} trees on {len(train)} cells, params {json.dumps(params, sort_keys=True)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluate import classify_model, evaluate_experiment

    model = load_model(args.model_path)
    _, features, targets, plan = _xy(args)
    res = evaluate_experiment(model, features, targets, plan, baseline=args.baseline)
    out = {**res.to_dict(), "label": classify_model(res.r2_test, res.r2_validation, args.gap_threshold),
           "gap_threshold": args.gap_threshold}
    if args.out:
        _write_json(_out_dir(args) / "evaluation.json", out)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_explain(args) -> int:
    model = load_model(args.model_path)
    spec = load_feature_spec(args.spec)
    weather, yields = _panels(args)
    plan = _plan(args, yields)
    features = build_feature_table(weather, yields, spec, train_cells=plan.train_cells)
    if args.split == "test":
        cells = [c for c in sorted(plan.test_cells) if c in features.row_index()]
    elif args.split == "validation":
        cells = [c for c in features.keys if c[1] in set(plan.validation_years)]
    else:
        cells = list(features.keys)
    m = tree_shap_rows(model, features.select(cells))
    model_id = Path(args.model_path).stem
    out = _out_dir(args)
    write_shap_csv(out / "shap" / f"{model_id}.csv", model_id, cells, m)
    write_summary_csv(out / "shap" / f"{model_id}_summary.csv", summary_from_matrix(m, model_id))
    print(f"{out / 'shap' / f'{model_id}.csv'}: {len(cells)} rows, local accuracy error "
          f"{m.local_accuracy_error():.2e}")
    return EXIT_OK


def cmd_run(args) -> int:
    if not args.config:
        raise UsageError("run needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        synth = replace(cfg.synth, seed=args.seed) if cfg.synth else None
        cfg = replace(cfg, seed=args.seed, synth=synth)
    out = args.out or os.environ.get("AGROVAL_OUT") or cfg.output_dir
    log = None if args.quiet else (lambda line: print(line, flush=True))
    res = run_matrix(cfg, out_dir=out, jobs=args.jobs, resume=args.resume, log=log)
    print(f"{res.new_points} new points ({res.skipped} already complete, {len(res.failed)} failed); "
          f"report in {Path(out) / 'report'}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out or os.environ.get("AGROVAL_OUT") or ".")
    records = load_records(out)
    report(records, out / "report")
    print((out / "report" / "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random draw")
    common.add_argument("--config", help="experiment config (TOML or JSON)")
    common.add_argument("--out", help="output directory (default: $AGROVAL_OUT)")
    data = _Parser(add_help=False)
    data.add_argument("--weather", help="daily weather CSV")
    data.add_argument("--yields", help="annual yield CSV")

    p = _Parser(prog="agroval", description="Crop-yield ML reliability experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write synthetic weather and yield panels")
    s.add_argument("--regions", type=int)
    s.add_argument("--years", type=_year_range, metavar="FIRST:LAST")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("validate", parents=[common, data], help="cross-check weather and yield panels")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("features", parents=[common, data], help="build and export a feature table")
    s.add_argument("--spec", required=True, help="feature spec JSON or builtin name")
    s.add_argument("--plan", help="split plan; restricts region-mean-yield to training cells")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("targets", parents=[common, data], help="build and export a target table")
    s.add_argument("--kind", choices=TARGET_KINDS, default="yield")
    s.set_defaults(func=cmd_targets)

    s = sub.add_parser("split", parents=[common, data], help="write a split plan")
    s.add_argument("--validation-years", help="comma-separated years or 'auto'")
    s.add_argument("--pool", type=_year_range, metavar="FIRST:LAST")
    s.add_argument("--test-frac", type=float, default=0.10)
    s.set_defaults(func=cmd_split)

    model_args = _Parser(add_help=False)
    model_args.add_argument("--spec", required=True)
    model_args.add_argument("--target", choices=TARGET_KINDS, default="yield")
    model_args.add_argument("--plan", help="split plan JSON (default: derived from config/seed)")

    s = sub.add_parser("train", parents=[common, data, model_args], help="grid-search and fit one model")
    s.add_argument("--model", choices=MODEL_KINDS + ("rf", "xgb"), default="random_forest")
    s.add_argument("--params", help="JSON hyperparameters; skips the grid search")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common, data, model_args], help="score a saved model")
    s.add_argument("model_path")
    s.add_argument("--baseline", choices=BASELINES, default="eval_mean")
    s.add_argument("--gap-threshold", type=float, default=0.2)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("explain", parents=[common, data], help="SHAP values for a saved model")
    s.add_argument("model_path")
    s.add_argument("--spec", required=True)
    s.add_argument("--plan")
    s.add_argument("--split", choices=("test", "validation", "all"), default="test")
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("run", parents=[common], help="run the full experiment matrix")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--resume", action="store_true", help="skip matrix points that already have records")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", parents=[common], help="rebuild the report from saved records")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"DataError: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RunError, AgrovalError) as exc:
        print(f"RunError: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
