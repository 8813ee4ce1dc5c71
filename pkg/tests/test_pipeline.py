import json

import numpy as np
import pytest

from gfmexplain import pipeline
from gfmexplain.config import RunConfig
from gfmexplain.data import build_panel
from gfmexplain.errors import InputError
from gfmexplain.evaluation import FIDELITY, error_metrics, metrics
from gfmexplain.explainers import fit_linear_explainer, fit_tree_explainer, rule_predict
from gfmexplain.gfm import train_gfm
from gfmexplain.guidance import GUIDANCE_KEYS
from gfmexplain.rules import mine_k_optimal, rules_union
from gfmexplain.surrogate import SurrogateTable, derive_cutpoints
from gfmexplain.synthetic import SyntheticSpec, generate, generate_synthetic_panel, to_raw


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    generate_synthetic_panel(SyntheticSpec(n_meters=8, days=500, short_fraction=0.25, seed=1), d)
    return d


def _cfg(data_dir, out, **kw):
    base = dict(consumption=data_dir / "consumption.csv", temperature=data_dir / "temperature.csv",
                out_dir=out, n_filt=3, n_synthetic=2, jobs=1, seed=4)
    base.update(kw)
    return RunConfig(**base)


def test_train_writes_both_groups_deterministically(data_dir, tmp_path):
    a = pipeline.run_train(_cfg(data_dir, tmp_path / "a"))
    b = pipeline.run_train(_cfg(data_dir, tmp_path / "b"))
    assert set(a) == {"long", "short"}
    for g in a:
        assert a[g].read_bytes() == b[g].read_bytes()


def test_all_short_panel_trains_one_model(tmp_path):
    d = tmp_path / "short"
    generate_synthetic_panel(SyntheticSpec(n_meters=3, days=120, seed=2), d)
    paths = pipeline.run_train(_cfg(d, tmp_path / "out"))
    assert list(paths) == ["short"]
    assert pipeline.load_models(_cfg(d, tmp_path / "out"))["short"].tau_used == 0.39


def test_missing_inputs_and_models(data_dir, tmp_path):
    with pytest.raises(InputError, match="required"):
        pipeline.run_train(RunConfig(out_dir=tmp_path))
    with pytest.raises(InputError, match="run 'train' first"):
        pipeline.run_explain(_cfg(data_dir, tmp_path / "none"), "M000", 1)


def test_explain_report_schema_and_determinism(data_dir, tmp_path):
    cfg = _cfg(data_dir, tmp_path / "run")
    pipeline.run_train(cfg)
    js, txt = pipeline.run_explain(cfg, "M001", 2)
    first = (js.read_bytes(), txt.read_bytes())
    pipeline.run_explain(cfg, "M001", 2)
    assert (js.read_bytes(), txt.read_bytes()) == first
    report = json.loads(js.read_text())
    assert set(report) == {"meter_id", "month", "p_kwh", "guidance"}
    assert list(report["guidance"]) == list(GUIDANCE_KEYS)
    assert report["p_kwh"] > 0
    lines = txt.read_text().splitlines()
    assert sum(line.startswith("G") for line in lines) == 6
    with pytest.raises(InputError, match="valid ids: M000"):
        pipeline.run_explain(cfg, "X9", 2)
    with pytest.raises(InputError, match="months"):
        pipeline.run_explain(cfg, "M001", 13)


@pytest.fixture(scope="module")
def explainer():
    syn = generate(SyntheticSpec(n_meters=10, days=365, seed=6))
    panel, _ = build_panel(to_raw(syn), syn.temps)
    models = train_gfm(panel)
    cfg = RunConfig(n_filt=4, n_synthetic=3, jobs=1, seed=2)
    return panel, models, cfg


def test_explain_does_not_mutate_inputs(explainer):
    panel, models, cfg = explainer
    before_models = {g: m.coefficients.copy() for g, m in models.items()}
    before_series = {m: s.values.copy() for m, s in panel.series.items()}
    pipeline.Explainer(panel, models, cfg).explain("M003", [1, 7])
    assert all(np.array_equal(models[g].coefficients, c) for g, c in before_models.items())
    assert all(np.array_equal(panel.series[m].values, v) for m, v in before_series.items())


def test_table_size_and_zero_bootstraps(explainer):
    panel, models, cfg = explainer
    (exp,) = pipeline.Explainer(panel, models, cfg).explain("M000", [3])
    assert len(exp.table) == cfg.n_filt * (1 + cfg.n_synthetic)
    assert exp.p == pytest.approx(exp.origin.target)
    (bare,) = pipeline.Explainer(panel, models, cfg.with_overrides(n_synthetic=0)).explain("M000", [3])
    assert len(bare.table) == cfg.n_filt
    assert all("#" not in inst.provenance for inst in bare.table.instances)


def test_global_equals_local_on_same_table(explainer):
    panel, models, cfg = explainer
    (exp,) = pipeline.Explainer(panel, models, cfg).explain("M005", [6])
    table = exp.table
    recs = pipeline.global_explainers(table, list(table.y), ["x"] * len(table), cfg)
    lr = fit_linear_explainer(table)
    tree = fit_tree_explainer(table, cfg.tree_max_depth, cfg.tree_min_leaf)
    pos, neg = mine_k_optimal(table, derive_cutpoints(table, cfg.bins), cfg.miner())
    rules = rules_union(pos, neg)
    assert [r.explainer_prediction for r in recs["LR"]] == pytest.approx(list(lr.predict(table)), rel=1e-12)
    assert [r.explainer_prediction for r in recs["DT"]] == list(tree.predict(table))
    assert [r.explainer_prediction for r in recs["RULES"]] == [
        rule_predict(rules, inst, table) for inst in table.instances]


def test_constant_target_global_explainers_predict_the_constant():
    rng = np.random.default_rng(0)
    mean = rng.uniform(5, 30, 60)
    X = np.column_stack([mean, mean + 1, mean - 1, rng.normal(size=60), rng.integers(1, 4, 60)])
    table = SurrogateTable.from_arrays(X, np.full(60, 250.0))
    recs = pipeline.global_explainers(table, [250.0] * 60, ["m"] * 60, RunConfig(jobs=1))
    for name, rs in recs.items():
        pred = np.array([r.explainer_prediction for r in rs])
        assert np.all(pred == 250.0), name
        err = error_metrics(pred, pred + np.arange(60))  # any non-constant reference
        assert err["mae"] > 0
        with pytest.raises(InputError, match="undefined RAE"):
            metrics(rs, FIDELITY)


@pytest.fixture(scope="module")
def eval_run(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval")
    return pipeline.run_eval(_cfg(data_dir, out, holdout_days=120, n_synthetic=4))


def test_eval_tables(eval_run):
    rows = eval_run.local + eval_run.global_
    assert len(rows) == 12
    assert {(r.explainer, r.scope, r.metric_mode) for r in rows} == {
        (e, s, m) for e in ("LR", "DT", "RULES") for s in ("local", "global") for m in ("fidelity", "accuracy")}
    text = eval_run.paths["results"].read_text().splitlines()
    assert text[0] == "explainer,scope,metric_mode,rae,rmse,mae" and len(text) == 13
    imp = eval_run.paths["importance"].read_text().splitlines()
    assert imp[0] == "explainer_or_ruletype,feature,score"
    assert any(line.startswith("LR,") for line in imp) and any(line.startswith("DT,") for line in imp)


def test_eval_rows_match_recomputed_metrics(eval_run):
    for scope_rows, records in ((eval_run.local, eval_run.local_records),
                                (eval_run.global_, eval_run.global_records)):
        for row in scope_rows:
            m = metrics(records[row.explainer], row.metric_mode)
            assert (row.rae, row.rmse, row.mae) == (m["rae"], m["rmse"], m["mae"])


def test_eval_is_reproducible(data_dir, tmp_path, eval_run):
    again = pipeline.run_eval(_cfg(data_dir, tmp_path, holdout_days=120, n_synthetic=4))
    assert again.paths["results"].read_bytes() == eval_run.paths["results"].read_bytes()
    assert again.paths["importance"].read_bytes() == eval_run.paths["importance"].read_bytes()
