"""The experiment matrix: model kind x feature spec x target kind, plus the
region-mean-yield reference runs, with persisted records and a report."""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
from filelock import FileLock

from .errors import AgrovalError, AllZeroImportance, ConfigInvalid, MissingCells, NoRecords, RunError
from .evaluate import BASELINES, DEFAULT_GAP_THRESHOLD, LABELS, classify_model, evaluate_experiment, pearson
from .explain import shap_concentration, summary_from_matrix, tree_shap_rows, write_shap_csv
from .indicators.features import build_feature_table, load_feature_spec
from .ingest import YieldPanel, load_weather_csv, load_yield_csv
from .models.ensemble import fit_model, normalize_kind, save_model
from .models.search import HyperGrid, grid_search
from .splits import (
    DEFAULT_POOL_YEARS,
    DEFAULT_VALIDATION_YEARS,
    SplitPlan,
    expanding_window_folds,
    make_split_plan,
    select_validation_years,
)
from .synth import SynthConfig, synth_generate
from .targets import TARGET_KINDS, TargetConfig, build_target_table

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

SHAP_SPLITS = ("test", "validation", "all")
RESULT_COLUMNS = ("experiment_id", "model_kind", "feature_spec", "target_kind", "r2_test", "r2_validation",
                  "rmse_test", "rmse_validation", "label", "hhi", "top1_share", "params_json")
# fields that legitimately differ between otherwise identical runs
VOLATILE_FIELDS = ("wall_time_s",)


@dataclass(frozen=True)
class ExperimentConfig:
    feature_specs: tuple = ("spi9",)
    target_kinds: tuple = ("yield",)
    model_kinds: tuple = ("random_forest", "gbt")
    grid: HyperGrid = field(default_factory=HyperGrid)
    validation_years: object = DEFAULT_VALIDATION_YEARS  # or "auto"
    pool_years: tuple = DEFAULT_POOL_YEARS
    test_frac: float = 0.10
    n_folds: int = 3
    fold_step: int = 1
    seed: int = 0
    gap_threshold: float = DEFAULT_GAP_THRESHOLD
    baseline: str = "eval_mean"
    reference_target: str = "yield"
    shap_split: str = "test"
    targets: TargetConfig = field(default_factory=TargetConfig)
    output_dir: str = "agroval_out"
    weather: str | None = None
    yields: str | None = None
    synth: SynthConfig | None = None
    base_dir: str = "."

    def __post_init__(self):
        for name in ("feature_specs", "target_kinds", "model_kinds"):
            v = getattr(self, name)
            v = (v,) if isinstance(v, str) else tuple(v)
            if not v:
                raise ConfigInvalid(f"{name} must not be empty")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "model_kinds", tuple(normalize_kind(k) for k in self.model_kinds))
        for t in self.target_kinds + (self.reference_target,):
            if t not in TARGET_KINDS:
                raise ConfigInvalid(f"unknown target kind {t!r}; expected one of {TARGET_KINDS}")
        if self.baseline not in BASELINES:
            raise ConfigInvalid(f"baseline must be one of {BASELINES}")
        if self.shap_split not in SHAP_SPLITS:
            raise ConfigInvalid(f"shap_split must be one of {SHAP_SPLITS}")
        if self.validation_years != "auto":
            object.__setattr__(self, "validation_years", tuple(int(y) for y in self.validation_years))
        object.__setattr__(self, "pool_years", tuple(int(y) for y in self.pool_years))
        if (self.weather is None) != (self.yields is None):
            raise ConfigInvalid("give both weather and yields paths, or neither")
        if self.weather is None and self.synth is None:
            raise ConfigInvalid("config needs data paths or a [synth] section")

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def load_specs(self) -> dict:
        specs = {}
        for s in self.feature_specs:
            src = self.resolve(s) if s.endswith(".json") and self.resolve(s).is_file() else s
            spec = load_feature_spec(src)
            if spec.name in specs:
                raise ConfigInvalid(f"duplicate feature spec name {spec.name!r}")
            specs[spec.name] = spec
        return specs

    def load_data(self):
        if self.weather is not None:
            return load_weather_csv(self.resolve(self.weather)), load_yield_csv(self.resolve(self.yields))
        weather, yields, _ = synth_generate(self.synth)
        return weather, yields

    def to_dict(self) -> dict:
        return {
            "feature_specs": list(self.feature_specs),
            "target_kinds": list(self.target_kinds),
            "model_kinds": list(self.model_kinds),
            "grid": {f.name: list(getattr(self.grid, f.name)) for f in fields(self.grid)},
            "validation_years": self.validation_years if self.validation_years == "auto"
            else list(self.validation_years),
            "pool_years": list(self.pool_years),
            "test_frac": self.test_frac,
            "n_folds": self.n_folds,
            "fold_step": self.fold_step,
            "seed": self.seed,
            "gap_threshold": self.gap_threshold,
            "baseline": self.baseline,
            "reference_target": self.reference_target,
            "shap_split": self.shap_split,
        }


def config_from_dict(d: dict, base_dir=".") -> ExperimentConfig:
    d = dict(d)
    split = d.pop("split", {})
    grid = d.pop("grid", None)
    synth = d.pop("synth", None)
    targets = d.pop("targets", None)
    kwargs = {}
    for key in ("validation_years", "pool_years", "test_frac", "n_folds", "fold_step"):
        if key in split:
            kwargs[key] = split.pop(key)
    if split:
        raise ConfigInvalid(f"unknown [split] keys: {sorted(split)}")
    if grid is not None:
        kwargs["grid"] = HyperGrid.from_dict(grid)
    if synth is not None:
        kwargs["synth"] = SynthConfig.from_dict(synth)
    if targets is not None:
        try:
            kwargs["targets"] = TargetConfig(**targets)
        except TypeError as exc:
            raise ConfigInvalid(f"bad [targets] section: {exc}") from None
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    kwargs.update(d)
    kwargs.setdefault("base_dir", str(base_dir))
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None


def resolve_config_path(path) -> Path:
    """A path on disk, else a file of the same name among the shipped fixtures."""
    p = Path(path)
    if p.is_file():
        return p
    candidate = resources.files("agroval.fixtures").joinpath(p.name)
    if p.name and candidate.is_file():
        return Path(str(candidate))
    raise FileNotFoundError(f"config not found: {path}")


def load_config(path) -> ExperimentConfig:
    p = resolve_config_path(path)
    text = p.read_text(encoding="utf-8")
    try:
        d = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigInvalid(f"cannot parse {p}: {exc}") from None
    return config_from_dict(d, base_dir=p.parent)


@dataclass(frozen=True)
class MatrixPoint:
    experiment_id: str
    model_kind: str
    feature_spec: str
    target_kind: str
    is_reference: bool = False


def matrix_points(cfg: ExperimentConfig, spec_names) -> list[MatrixPoint]:
    points = [MatrixPoint(f"{m}__{s}__{t}", m, s, t) for m in cfg.model_kinds for s in spec_names
              for t in cfg.target_kinds]
    for m in ("random_forest", "gbt"):
        points.append(MatrixPoint(f"ref__{m}__{cfg.reference_target}", m, "reference", cfg.reference_target, True))
    return points


@dataclass
class _Context:
    cfg: ExperimentConfig
    plan: SplitPlan
    features: dict  # spec name -> FeatureTable or the exception that stopped it
    targets: dict  # target kind -> TargetTable or exception
    out: Path


def build_plan(cfg: ExperimentConfig, yields: YieldPanel) -> SplitPlan:
    val = select_validation_years(yields, cfg.validation_years, cfg.pool_years)
    return make_split_plan(yields.keys, val, cfg.pool_years, cfg.test_frac, cfg.seed)


def _shap_cells(split: str, plan: SplitPlan, evaluable) -> list:
    if split == "test":
        return [c for c in sorted(plan.test_cells) if c in evaluable]
    val = set(plan.validation_years)
    if split == "validation":
        return sorted(c for c in evaluable if c[1] in val)
    return sorted(evaluable)


def _evaluate_point(ctx: _Context, p: MatrixPoint) -> dict:
    cfg, plan = ctx.cfg, ctx.plan
    feats, targets = ctx.features[p.feature_spec], ctx.targets[p.target_kind]
    for obj in (feats, targets):
        if isinstance(obj, Exception):
            raise obj
    f_index = feats.row_index()
    t_lookup = targets.lookup()
    evaluable = {c for c in feats.keys if c in t_lookup}
    train = sorted(c for c in plan.train_cells if c in evaluable)
    if len(train) < 2:
        raise MissingCells(f"only {len(train)} training cells have both features and targets")
    X = feats.values[[f_index[c] for c in train]]
    y = np.array([t_lookup[c] for c in train])
    years = np.array([c[1] for c in train])
    folds = expanding_window_folds(sorted(set(years.tolist())), cfg.n_folds, cfg.fold_step)
    best, table = grid_search(X, y, years, cfg.grid, folds, p.model_kind, cfg.seed, feats.columns)
    model = fit_model(p.model_kind, X, y, best, cfg.seed, feats.columns)
    result = evaluate_experiment(model, feats, targets, plan, trained_cells=train, baseline=cfg.baseline)

    cells = _shap_cells(cfg.shap_split, plan, evaluable)
    shap = tree_shap_rows(model, feats.values[[f_index[c] for c in cells]])
    summary = summary_from_matrix(shap, p.experiment_id)
    try:
        conc = shap_concentration(summary)
        hhi, top1 = conc.hhi, conc.top1_share
    except AllZeroImportance:
        hhi = top1 = None

    save_model(model, ctx.out / "models" / f"{p.experiment_id}.json")
    write_shap_csv(ctx.out / "shap" / f"{p.experiment_id}.csv", p.experiment_id, cells, shap)
    return {
        "status": "ok",
        "reason": None,
        **result.to_dict(),
        "n_train": len(train),
        "label": classify_model(result.r2_test, result.r2_validation, cfg.gap_threshold),
        "gap_threshold": cfg.gap_threshold,
        "best_params": best,
        "cv_table": table,
        "n_features": len(feats.columns),
        "shap_split": cfg.shap_split,
        "shap_rows": len(cells),
        "shap_base_value": shap.base_value,
        "mean_abs_phi": summary.as_dict(),
        "hhi": hhi,
        "top1_share": top1,
        "local_accuracy_max_err": shap.local_accuracy_error(),
    }


def _write_json_atomic(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _run_point(ctx: _Context, p: MatrixPoint) -> dict:
    t0 = time.perf_counter()
    record = {
        "experiment_id": p.experiment_id,
        "model_kind": p.model_kind,
        "feature_spec": p.feature_spec,
        "target_kind": p.target_kind,
        "is_reference": p.is_reference,
        "seed": ctx.cfg.seed,
        "validation_years": list(ctx.plan.validation_years),
    }
    try:
        record.update(_evaluate_point(ctx, p))
    except (AgrovalError, ValueError, ArithmeticError) as exc:
        record.update({"status": "failed", "reason": f"{type(exc).__name__}: {exc}"})
    record["wall_time_s"] = time.perf_counter() - t0
    _write_json_atomic(ctx.out / "records" / f"{p.experiment_id}.json", record)
    index = ctx.out / "records" / "index.jsonl"
    with FileLock(str(index) + ".lock"):
        with index.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({"experiment_id": p.experiment_id, "status": record["status"],
                                 "label": record.get("label")}, sort_keys=True) + "\n")
    return record


_WORKER_CTX: _Context | None = None


def _init_worker(ctx: _Context) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker(p: MatrixPoint) -> dict:
    return _run_point(_WORKER_CTX, p)


@dataclass
class RunResult:
    records: list
    new_points: int
    skipped: int
    plan: SplitPlan
    out_dir: Path

    @property
    def failed(self) -> list:
        return [r for r in self.records if r["status"] != "ok"]


def _prepare_tables(cfg, weather, yields, plan, specs, points):
    features, targets = {}, {}
    for name in {p.feature_spec for p in points}:
        spec = specs[name] if name in specs else load_feature_spec(name)
        try:
            features[name] = build_feature_table(weather, yields, spec, train_cells=plan.train_cells)
        except (AgrovalError, ValueError, ArithmeticError) as exc:
            features[name] = exc
    for kind in {p.target_kind for p in points}:
        try:
            targets[kind] = build_target_table(yields, kind, cfg.targets)
        except (AgrovalError, ValueError, ArithmeticError) as exc:
            targets[kind] = exc
    return features, targets


def run_matrix(cfg: ExperimentConfig, weather=None, yields=None, out_dir=None, jobs: int = 1,
               resume: bool = False, log=None) -> RunResult:
    """Run every matrix point and the two reference runs; persist and report.

    A point whose ``records/<id>.json`` exists is complete.  With ``resume``
    such points are skipped; without it, an output directory that already
    holds records is refused so records are never overwritten.
    """
    if weather is None or yields is None:
        weather, yields = cfg.load_data()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    specs = cfg.load_specs()
    points = matrix_points(cfg, list(specs))
    done = {p.experiment_id for p in points if (out / "records" / f"{p.experiment_id}.json").is_file()}
    if done and not resume:
        raise RunError(f"{out} already holds {len(done)} records; pass --resume or use a fresh output directory")
    todo = [p for p in points if p.experiment_id not in done]

    plan = build_plan(cfg, yields)
    out.mkdir(parents=True, exist_ok=True)
    plan.save(out / "split_plan.json")
    _write_json_atomic(out / "config.json", cfg.to_dict())
    if todo:
        features, targets = _prepare_tables(cfg, weather, yields, plan, specs, todo)
        ctx = _Context(cfg, plan, features, targets, out)
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ctx,)) as pool:
                for rec in pool.map(_worker, todo):
                    if log:
                        log(_progress_line(rec))
        else:
            for p in todo:
                rec = _run_point(ctx, p)
                if log:
                    log(_progress_line(rec))
    records = [load_record(out / "records" / f"{p.experiment_id}.json") for p in points]
    report(records, out / "report", cfg.gap_threshold)
    return RunResult(records, len(todo), len(done), plan, out)


def _progress_line(rec: dict) -> str:
    if rec["status"] != "ok":
        return f"{rec['experiment_id']}: failed ({rec['reason']})"
    return (f"{rec['experiment_id']}: r2_test={rec['r2_test']:.3f} r2_validation={rec['r2_validation']:.3f} "
            f"{rec['label']}")


def load_record(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_records(out_dir) -> list:
    """All records under ``out_dir/records``, sorted by id."""
    paths = sorted((Path(out_dir) / "records").glob("*.json"))
    return [load_record(p) for p in paths]


def comparable(record: dict) -> dict:
    return {k: v for k, v in record.items() if k not in VOLATILE_FIELDS}


@dataclass(frozen=True)
class ReportBundle:
    class_counts: dict
    correlations: dict  # model kind -> r(r2_test, r2_validation) or None
    mean_hhi: dict  # label -> mean HHI over multi-feature models, or None
    n_failed: int
    paths: dict


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def report(records, out_dir=None, gap_threshold: float | None = None) -> ReportBundle:
    """Class counts, per-kind test/validation correlation and mean HHI per class.

    Mean HHI is taken over models with at least two features; a one-feature
    model has HHI 1 by construction and says nothing about concentration.
    """
    records = list(records)
    if not records:
        raise NoRecords("no experiment records to report")
    ok = [r for r in records if r.get("status") == "ok"]
    counts = {label: sum(r["label"] == label for r in ok) for label in LABELS}
    kinds = sorted({r["model_kind"] for r in ok})
    corr = {k: pearson([r["r2_test"] for r in ok if r["model_kind"] == k],
                       [r["r2_validation"] for r in ok if r["model_kind"] == k]) for k in kinds}
    mean_hhi = {}
    for label in LABELS:
        vals = [r["hhi"] for r in ok if r["label"] == label and r["hhi"] is not None and r["n_features"] >= 2]
        mean_hhi[label] = float(np.mean(vals)) if vals else None
    bundle = ReportBundle(counts, corr, mean_hhi, len(records) - len(ok), {})
    if out_dir is None:
        return bundle

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("scatter.csv", "shap_by_class.csv", "results.csv", "summary.txt")}
    with paths["scatter.csv"].open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment_id", "model_kind", "feature_spec", "target_kind", "is_reference", "r2_test",
                    "r2_validation", "label"])
        for r in ok:
            w.writerow([r["experiment_id"], r["model_kind"], r["feature_spec"], r["target_kind"],
                        int(r["is_reference"]), repr(r["r2_test"]), repr(r["r2_validation"]), r["label"]])
    with paths["shap_by_class.csv"].open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment_id", "label", "model_kind", "feature_spec", "target_kind", "feature",
                    "mean_abs_phi", "share", "hhi", "top1_share"])
        for r in ok:
            total = sum(r["mean_abs_phi"].values())
            for f, v in r["mean_abs_phi"].items():
                share = v / total if total > 0 else None
                w.writerow([r["experiment_id"], r["label"], r["model_kind"], r["feature_spec"], r["target_kind"],
                            f, repr(v), "" if share is None else repr(share),
                            "" if r["hhi"] is None else repr(r["hhi"]),
                            "" if r["top1_share"] is None else repr(r["top1_share"])])
    write_results_csv(paths["results.csv"], records)

    lines = [f"records: {len(records)} ({len(ok)} ok, {len(records) - len(ok)} failed)"]
    if gap_threshold is not None:
        lines.append(f"gap_threshold: {gap_threshold}")
    shap_splits = sorted({r["shap_split"] for r in ok})
    if shap_splits:
        lines.append(f"shap_split: {','.join(shap_splits)}")
    baselines = sorted({r["baseline"] for r in ok})
    if baselines:
        lines.append(f"r2_baseline: {','.join(baselines)}")
    lines.append("class counts:")
    lines += [f"  {label}: {counts[label]}" for label in LABELS]
    lines.append("correlation r2_test vs r2_validation:")
    lines += [f"  {k}: {_fmt(corr[k])}" for k in kinds]
    lines.append("mean HHI per class (models with >= 2 features):")
    lines += [f"  {label}: {_fmt(mean_hhi[label])}" for label in LABELS]
    failed = [r for r in records if r.get("status") != "ok"]
    if failed:
        lines.append("quarantined points:")
        lines += [f"  {r['experiment_id']}: {r['reason']}" for r in failed]
    paths["summary.txt"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    return ReportBundle(counts, corr, mean_hhi, len(failed), {k: str(v) for k, v in paths.items()})


def results_row(r: dict) -> list:
    ok = r.get("status") == "ok"

    def num(key):
        v = r.get(key) if ok else None
        return "" if v is None else repr(v)

    return [r["experiment_id"], r["model_kind"], r["feature_spec"], r["target_kind"], num("r2_test"),
            num("r2_validation"), num("rmse_test"), num("rmse_validation"), r.get("label") or "", num("hhi"),
            num("top1_share"), json.dumps(r.get("best_params"), sort_keys=True) if ok else ""]


def write_results_csv(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow(results_row(r))
