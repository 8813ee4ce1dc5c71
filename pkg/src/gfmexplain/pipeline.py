"""End-to-end orchestration: train the GFM, explain forecasts, evaluate explainers."""

from __future__ import annotations

import datetime as dt
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from gfmexplain.config import RunConfig
from gfmexplain.data import SeriesPanel, load_panel, months as month_of_days, write_rejections
from gfmexplain.errors import InputError
from gfmexplain.evaluation import (
    EvalRecord,
    ResultRow,
    result_rows,
    write_importance_csv,
    write_results_csv,
)
from gfmexplain.explainers import (
    ImportanceAccumulator,
    feature_importance,
    fit_linear_explainer,
    fit_tree_explainer,
    rule_predict,
)
from gfmexplain.gfm import (
    LONG,
    SHORT,
    ForecastResult,
    GfmModel,
    forecast_batch,
    model_for,
    read_model,
    train_gfm,
    write_model,
)
from gfmexplain.guidance import (
    GuidanceReport,
    RuleClassification,
    classify_rules,
    render_text_block,
    select_guidance,
)
from gfmexplain.neighborhood import Member, Neighborhood, bootstrap_series, derive_seed, select_nearest
from gfmexplain.rules import ImpactRule, mine_k_optimal, rules_union
from gfmexplain.surrogate import CutPoints, SurrogateInstance, SurrogateTable, derive_cutpoints, featurize

logger = logging.getLogger(__name__)

ALL_MONTHS = tuple(range(1, 13))


@contextmanager
def timed(stage: str, **ctx):
    t0 = time.perf_counter()
    yield
    extra = " ".join(f"{k}={v}" for k, v in ctx.items())
    logger.info("%s took %.3fs %s", stage, time.perf_counter() - t0, extra)


@dataclass(frozen=True)
class Explanation:
    meter_id: str
    month: int
    p: float
    origin: SurrogateInstance
    table: SurrogateTable
    cuts: CutPoints
    positive: list[ImpactRule]
    negative: list[ImpactRule]
    classified: list[RuleClassification]
    report: GuidanceReport


class Explainer:
    """Explains per-meter monthly forecasts against a fixed panel and model set.

    Bootstrap replicates and their forecasts are cached per parent meter, so
    explaining many meters reuses shared neighbours.
    """

    def __init__(self, panel: SeriesPanel, models: dict[str, GfmModel], cfg: RunConfig):
        self.panel = panel
        self.models = models
        self.cfg = cfg
        self.gfm_cfg = cfg.gfm()
        self._forecasts: dict[str, ForecastResult] = {}
        self._replicates: dict[str, tuple[list, list[ForecastResult]]] = {}

    def _forecast(self, series: Sequence, temps: Sequence) -> list[ForecastResult]:
        out: list[ForecastResult | None] = [None] * len(series)
        groups: dict[int, list[int]] = {}
        for i, s in enumerate(series):
            groups.setdefault(id(model_for(self.models, s, self.gfm_cfg)), []).append(i)
        for idx in groups.values():
            model = model_for(self.models, series[idx[0]], self.gfm_cfg)
            res = forecast_batch(model, [series[i] for i in idx], [temps[i] for i in idx])
            for i, r in zip(idx, res):
                out[i] = r
        return out  # type: ignore[return-value]

    def forecast(self, meter_id: str) -> ForecastResult:
        if meter_id not in self._forecasts:
            self._forecasts[meter_id] = self._forecast(
                [self.panel.series[meter_id]], [self.panel.temps[meter_id]]
            )[0]
        return self._forecasts[meter_id]

    def replicates(self, parent_id: str):
        if parent_id not in self._replicates:
            reps = bootstrap_series(self.panel.series[parent_id], self.cfg.n_synthetic,
                                    derive_seed(self.cfg.seed, parent_id))
            fc = self._forecast(reps, [self.panel.temps[parent_id]] * len(reps))
            self._replicates[parent_id] = (reps, fc)
        return self._replicates[parent_id]

    def neighborhood(self, origin: str) -> tuple[Neighborhood, list[ForecastResult]]:
        with timed("neighbour selection", meter=origin):
            nearest = select_nearest(self.panel, origin, self.cfg.n_filt, self.cfg.dtw())
        members, forecasts = [], []
        with timed("bootstrap and forecast", meter=origin):
            for parent_id, dist in nearest:
                members.append(Member(self.panel.series[parent_id], parent_id, None, dist))
                forecasts.append(self.forecast(parent_id))
                reps, fc = self.replicates(parent_id)
                members.extend(Member(s, parent_id, r, dist) for r, s in enumerate(reps))
                forecasts.extend(fc)
        return Neighborhood(origin, tuple(members)), forecasts

    def surrogate_table(self, origin: str, month: int, hood: Neighborhood,
                        forecasts: Sequence[ForecastResult]) -> SurrogateTable:
        rows = []
        for m, fc in zip(hood.members, forecasts):
            tag = m.parent_id if m.is_original else f"{m.parent_id}#b{m.replicate}"
            rows.append(featurize(m.series, self.panel.temps[m.parent_id], fc, month, tag))
        origin_inst = featurize(self.panel.series[origin], self.panel.temps[origin],
                                self.forecast(origin), month, "origin")
        return SurrogateTable(tuple(rows), origin_inst)

    def explain(self, origin: str, months: Iterable[int] = ALL_MONTHS) -> list[Explanation]:
        if origin not in self.panel:
            raise InputError(f"unknown meter {origin!r}; valid ids: {', '.join(self.panel.meter_ids)}")
        hood, forecasts = self.neighborhood(origin)
        out = []
        for month in months:
            with timed("surrogate, mining and guidance", meter=origin, month=month):
                table = self.surrogate_table(origin, month, hood, forecasts)
                p = self.forecast(origin).month_kwh(month)
                cuts = derive_cutpoints(table, self.cfg.bins)
                pos, neg = mine_k_optimal(table, cuts, self.cfg.miner())
                classified = classify_rules(rules_union(pos, neg), table.origin_instance, table, p)
                report = select_guidance(classified, origin, month, p)
            out.append(Explanation(origin, month, p, table.origin_instance, table, cuts,
                                   pos, neg, classified, report))
        return out


# -- worker plumbing -------------------------------------------------------

_WORKER: Explainer | None = None


def _init_worker(panel: SeriesPanel, models: dict[str, GfmModel], cfg: RunConfig) -> None:
    global _WORKER
    _WORKER = Explainer(panel, models, cfg)


def _parallel_map(fn: Callable, items: Sequence, panel, models, cfg: RunConfig) -> list:
    """Order-preserving map over tasks; results do not depend on ``cfg.jobs``."""
    if cfg.jobs == 1 or len(items) <= 1:
        _init_worker(panel, models, cfg)
        return [fn(x) for x in items]
    with ProcessPoolExecutor(cfg.jobs, initializer=_init_worker, initargs=(panel, models, cfg)) as ex:
        return list(ex.map(fn, items))


# -- train -----------------------------------------------------------------


def _require_inputs(cfg: RunConfig) -> None:
    if cfg.consumption is None or cfg.temperature is None:
        raise InputError("consumption and temperature CSV paths are required")


def load_inputs(cfg: RunConfig) -> SeriesPanel:
    _require_inputs(cfg)
    with timed("load panel"):
        panel, rejected = load_panel(cfg.consumption, cfg.temperature)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_rejections(cfg.out_dir / "rejections.tsv", rejected)
    if len(panel) == 0:
        raise InputError("no usable meters in the input panel")
    return panel


def model_path(cfg: RunConfig, group: str) -> Path:
    return cfg.models_dir / f"gfm_{group}.tsv"


def save_models(models: dict[str, GfmModel], directory: Path) -> dict[str, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for group in (LONG, SHORT):
        path = directory / f"gfm_{group}.tsv"
        if group in models:
            write_model(path, models[group], group)
            paths[group] = path
        elif path.exists():
            path.unlink()
    return paths


def run_train(cfg: RunConfig) -> dict[str, Path]:
    panel = load_inputs(cfg)
    with timed("train gfm", meters=len(panel)):
        models = train_gfm(panel, cfg.gfm())
    if not models:
        raise InputError(f"no series longer than the {cfg.window}-day window")
    return save_models(models, cfg.models_dir)


def load_models(cfg: RunConfig, directory: Path | None = None) -> dict[str, GfmModel]:
    directory = directory or cfg.models_dir
    models = {g: read_model(directory / f"gfm_{g}.tsv")
              for g in (LONG, SHORT) if (directory / f"gfm_{g}.tsv").exists()}
    if not models:
        raise InputError(f"no trained model in {directory}; run 'train' first")
    return models


# -- explain ---------------------------------------------------------------


def report_paths(cfg: RunConfig, meter_id: str, month: int) -> tuple[Path, Path]:
    stem = cfg.reports_dir / f"{meter_id}_m{month:02d}"
    return stem.with_suffix(".json"), stem.with_suffix(".txt")


def write_report(cfg: RunConfig, report: GuidanceReport) -> tuple[Path, Path]:
    js, txt = report_paths(cfg, report.meter_id, report.target_month)
    js.parent.mkdir(parents=True, exist_ok=True)
    js.write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    txt.write_text(render_text_block(report), encoding="utf-8")
    return js, txt


def _validate_months(months: Iterable[int]) -> tuple[int, ...]:
    months = tuple(sorted(set(int(m) for m in months)))
    bad = [m for m in months if not 1 <= m <= 12]
    if bad or not months:
        raise InputError(f"months must lie in 1-12, got {bad or 'none'}")
    return months


def run_explain(cfg: RunConfig, meter_id: str, month: int) -> tuple[Path, Path]:
    (month,) = _validate_months([month])
    panel = load_inputs(cfg)
    models = load_models(cfg)
    if meter_id not in panel:
        raise InputError(f"unknown meter {meter_id!r}; valid ids: {', '.join(panel.meter_ids)}")
    ex = Explainer(panel, models, cfg)
    (exp,) = ex.explain(meter_id, [month])
    return write_report(cfg, exp.report)


def _explain_task(args: tuple[str, tuple[int, ...]]) -> list[GuidanceReport]:
    meter_id, months = args
    return [e.report for e in _WORKER.explain(meter_id, months)]


def run_explain_all(cfg: RunConfig, months: Iterable[int] = ALL_MONTHS) -> list[Path]:
    months = _validate_months(months)
    panel = load_inputs(cfg)
    models = load_models(cfg)
    tasks = [(mid, months) for mid in panel.meter_ids]
    with timed("explain all", meters=len(tasks), jobs=cfg.jobs):
        results = _parallel_map(_explain_task, tasks, panel, models, cfg)
    paths = []
    for reports in results:
        for r in reports:
            paths.extend(write_report(cfg, r))
    return paths


# -- eval ------------------------------------------------------------------


def holdout_actuals(full: SeriesPanel, hist: SeriesPanel, meter_id: str, horizon: int = 365) -> dict[int, float]:
    """Observed monthly kWh for months wholly inside the held-out period."""
    s_full, s_hist = full.series[meter_id], hist.series[meter_id]
    kwh = s_full.denormalized()[len(s_hist):][:horizon]
    start = s_hist.end_date + dt.timedelta(days=1)
    mo_horizon = month_of_days(start, horizon)
    mo_obs = mo_horizon[: kwh.size]
    out = {}
    for m in ALL_MONTHS:
        if (mo_horizon == m).sum() and (mo_obs == m).sum() == (mo_horizon == m).sum():
            out[m] = float(kwh[mo_obs == m].sum())
    return out


def _local_eval_task(args: tuple[str, dict[int, float]]):
    meter_id, actuals = args
    ex = _WORKER
    cfg = ex.cfg
    records = {"LR": [], "DT": [], "RULES": []}
    importance = []
    for exp in ex.explain(meter_id, sorted(actuals)):
        lr = fit_linear_explainer(exp.table)
        dt_ = fit_tree_explainer(exp.table, cfg.tree_max_depth, cfg.tree_min_leaf)
        preds = {
            "LR": float(lr.predict(exp.origin)[0]),
            "DT": float(dt_.predict(exp.origin)[0]),
            "RULES": rule_predict(exp.classified, exp.origin, exp.table),
        }
        for name, v in preds.items():
            records[name].append(EvalRecord(meter_id, exp.month, v, exp.p, actuals[exp.month]))
        importance.append(("LR", feature_importance(lr, "linear")))
        importance.append(("DT", feature_importance(dt_, "tree")))
        for rtype, scores in feature_importance(exp.classified, "rules").items():
            importance.append((rtype, scores))
    return records, importance


def global_explainers(
    table: SurrogateTable, actuals: Sequence[float], meter_ids: Sequence[str], cfg: RunConfig
) -> dict[str, list[EvalRecord]]:
    """Fit each explainer once on a whole-panel table and score it in-sample."""
    lr = fit_linear_explainer(table)
    tree = fit_tree_explainer(table, cfg.tree_max_depth, cfg.tree_min_leaf)
    cuts = derive_cutpoints(table, cfg.bins)
    pos, neg = mine_k_optimal(table, cuts, cfg.miner())
    rules = rules_union(pos, neg)
    preds = {
        "LR": lr.predict(table),
        "DT": tree.predict(table),
        "RULES": np.array([rule_predict(rules, inst, table) for inst in table.instances]),
    }
    out = {}
    for name, pred in preds.items():
        out[name] = [
            EvalRecord(mid, inst.month, float(v), inst.target, float(a))
            for mid, inst, v, a in zip(meter_ids, table.instances, pred, actuals)
        ]
    return out


@dataclass(frozen=True)
class EvalOutput:
    local: list[ResultRow]
    global_: list[ResultRow]
    importance: dict[tuple[str, str], float]
    local_records: dict[str, list[EvalRecord]]
    global_records: dict[str, list[EvalRecord]]
    paths: dict[str, Path]


def evaluate(full: SeriesPanel, cfg: RunConfig) -> EvalOutput:
    """Hold out the last ``holdout_days`` of every series, retrain the GFM on the
    rest, and score local and whole-panel explainers for fidelity and accuracy."""
    hist = full.truncated(cfg.holdout_days)
    short = sorted(set(full.meter_ids) - set(hist.meter_ids))
    for mid in short:
        logger.info("meter %s skipped in eval: not longer than the holdout", mid)
    with timed("train gfm on history", meters=len(hist)):
        models = train_gfm(hist, cfg.gfm())
    if not models:
        raise InputError("no series long enough to train after the holdout")
    save_models(models, cfg.eval_dir / "models")
    tasks = []
    for mid in hist.meter_ids:
        actuals = holdout_actuals(full, hist, mid)
        if actuals:
            tasks.append((mid, actuals))
    if not tasks:
        raise InputError("holdout covers no complete calendar month")

    with timed("local explainers", meters=len(tasks), jobs=cfg.jobs):
        results = _parallel_map(_local_eval_task, tasks, hist, models, cfg)
    local_records: dict[str, list[EvalRecord]] = {"LR": [], "DT": [], "RULES": []}
    acc = ImportanceAccumulator()
    for records, importance in results:
        for name, recs in records.items():
            local_records[name].extend(recs)
        for group, scores in importance:
            acc.add(group, scores)

    with timed("global explainers"):
        ex = Explainer(hist, models, cfg)
        rows, actual, ids = [], [], []
        for mid, actuals in tasks:
            fc = ex.forecast(mid)
            for m in sorted(actuals):
                rows.append(featurize(hist.series[mid], hist.temps[mid], fc, m, mid))
                actual.append(actuals[m])
                ids.append(mid)
        global_records = global_explainers(SurrogateTable(tuple(rows)), actual, ids, cfg)

    local_rows = result_rows(local_records, "local")
    global_rows = result_rows(global_records, "global")
    cfg.eval_dir.mkdir(parents=True, exist_ok=True)
    paths = {"results": cfg.eval_dir / "results.csv",
             "importance": cfg.eval_dir / "feature_importance.csv"}
    write_results_csv(paths["results"], local_rows + global_rows)
    importance = acc.mean()
    write_importance_csv(paths["importance"], importance)
    return EvalOutput(local_rows, global_rows, importance, local_records, global_records, paths)


def run_eval(cfg: RunConfig) -> EvalOutput:
    return evaluate(load_inputs(cfg), cfg)
