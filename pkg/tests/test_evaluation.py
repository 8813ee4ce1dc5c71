import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gfmexplain.errors import InputError
from gfmexplain.evaluation import (
    ACCURACY,
    FIDELITY,
    EvalRecord,
    ResultRow,
    error_metrics,
    metrics,
    read_results_csv,
    result_rows,
    write_importance_csv,
    write_results_csv,
)


def _records(pred, gfm, actual):
    return [EvalRecord("M", i + 1, p, g, a) for i, (p, g, a) in enumerate(zip(pred, gfm, actual))]


def test_five_hand_records():
    recs = _records([10, 12, 9, 15, 11], [11, 12, 8, 13, 16], [10, 10, 10, 10, 15])
    # fidelity errors -1, 0, 1, 2, -5; reference mean 12, deviations 1, 0, 4, 1, 4
    m = metrics(recs, FIDELITY)
    assert m["mae"] == pytest.approx(9 / 5)
    assert m["rmse"] == pytest.approx(np.sqrt(31 / 5))
    assert m["rae"] == pytest.approx(9 / 10)
    # accuracy errors 0, 2, -1, 5, -4; reference mean 11, deviations 1, 1, 1, 1, 4
    a = metrics(recs, ACCURACY)
    assert a["mae"] == pytest.approx(12 / 5)
    assert a["rmse"] == pytest.approx(np.sqrt(46 / 5))
    assert a["rae"] == pytest.approx(12 / 8)


def test_perfect_and_mean_predictor():
    ref = np.array([3.0, 7.0, 1.0, 9.0])
    assert error_metrics(ref, ref) == {"rae": 0.0, "rmse": 0.0, "mae": 0.0}
    assert error_metrics(np.full(4, ref.mean()), ref)["rae"] == 1.0


@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=40).filter(lambda v: np.ptp(v) > 1e-3))
@settings(max_examples=100, deadline=None)
def test_mean_predictor_rae_is_one(xs):
    ref = np.array(xs)
    assert abs(error_metrics(np.full(ref.size, ref.mean()), ref)["rae"] - 1.0) < 1e-12


def test_constant_reference_rejected():
    with pytest.raises(InputError, match="undefined RAE"):
        metrics(_records([1, 2], [5, 5], [1, 2]), FIDELITY)
    assert metrics(_records([1, 2], [5, 5], [1, 2]), ACCURACY)["rae"] == 0.0


def test_record_validation():
    with pytest.raises(InputError):
        EvalRecord("M", 1, float("nan"), 1.0, 1.0)
    with pytest.raises(InputError, match="two records"):
        metrics(_records([1], [1], [1]), FIDELITY)
    with pytest.raises(InputError):
        metrics(_records([1, 2], [1, 3], [1, 2]), "precision")


def test_gfm_against_itself_is_zero():
    gfm = [5.0, 8.0, 2.0]
    m = metrics(_records(gfm, gfm, [1.0, 2.0, 3.0]), FIDELITY)
    assert m == {"rae": 0.0, "rmse": 0.0, "mae": 0.0}


def test_result_rows_and_csv_round_trip(tmp_path):
    recs = _records([10, 12, 9, 15, 11], [11, 12, 8, 13, 16], [10, 10, 10, 10, 15])
    rows = result_rows({"LR": recs, "RULES": recs}, "local")
    assert [(r.explainer, r.metric_mode) for r in rows] == [
        ("LR", FIDELITY), ("LR", ACCURACY), ("RULES", FIDELITY), ("RULES", ACCURACY)]
    path = tmp_path / "results.csv"
    write_results_csv(path, rows)
    assert path.read_text().splitlines()[0] == "explainer,scope,metric_mode,rae,rmse,mae"
    back = read_results_csv(path)
    for a, b in zip(rows, back):
        assert (a.explainer, a.scope, a.metric_mode) == (b.explainer, b.scope, b.metric_mode)
        assert b.rae == pytest.approx(a.rae, abs=1e-6)
    assert isinstance(back[0], ResultRow)


def test_importance_csv(tmp_path):
    path = tmp_path / "imp.csv"
    write_importance_csv(path, {("LR", "temp"): 0.5, ("current_supporting", "month"): 0.75})
    assert path.read_text().splitlines() == [
        "explainer_or_ruletype,feature,score", "LR,temp,0.500000", "current_supporting,month,0.750000"]
