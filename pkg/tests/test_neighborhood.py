import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gfmexplain.data import DailySeries, SeriesPanel, mean_scale
from gfmexplain.errors import InputError
from gfmexplain.neighborhood import (
    DtwConfig,
    boxcox,
    boxcox_lambda,
    bootstrap_series,
    build_neighborhood,
    decompose_additive,
    derive_seed,
    dtw_distance,
    inv_boxcox,
    moving_block_bootstrap,
    select_nearest,
    write_neighborhood_csv,
)

from conftest import make_panel
from oracles import centered_ma_by_hand, dtw_dp

RAW = DtwConfig(normalize_before=False)
positive_lists = st.lists(st.floats(0.1, 50, allow_nan=False), min_size=1, max_size=30)


def test_dtw_identity_and_small_example():
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([1.0, 2.0, 2.0, 3.0])
    assert dtw_distance(a, a) == 0.0
    assert dtw_distance(a, b, RAW) == dtw_dp(a, b) == 0.0
    c = np.array([1.0, 3.0, 2.0, 5.0])
    assert dtw_distance(a, c, RAW) == dtw_dp(a, c)


def test_dtw_constant_alignment_after_normalization():
    assert dtw_distance(np.array([4.0]), np.array([4.0, 4.0, 4.0])) == 0.0
    # different levels collapse to the same shape once divided by the mean
    assert dtw_distance(np.array([2.0, 4.0]), np.array([10.0, 20.0])) == 0.0


@given(positive_lists, positive_lists)
@settings(max_examples=80, deadline=None)
def test_dtw_properties(xs, ys):
    a, b = np.array(xs), np.array(ys)
    d = dtw_distance(a, b, RAW)
    assert d == dtw_dp(a, b)
    assert d == dtw_distance(b, a, RAW)
    assert d >= 0
    assert dtw_distance(a, a, RAW) == 0.0


def test_dtw_band_matches_full_when_wide():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(1, 2, 30), rng.uniform(1, 2, 25)
    assert dtw_distance(a, b, DtwConfig(band_radius=100)) == dtw_distance(a, b)
    assert dtw_distance(a, b, DtwConfig(band_radius=1)) >= dtw_distance(a, b)


def test_dtw_rejects_non_positive_mean():
    with pytest.raises(InputError):
        dtw_distance(np.zeros(3), np.ones(3))


def _three_panel():
    base = np.tile([1.0, 2.0, 3.0, 2.0, 1.0, 1.0, 1.0], 4)
    return make_panel({
        "A": base,
        "B": base + np.linspace(0, 0.5, base.size),
        "C": base[::-1].copy(),
    })


def test_select_nearest_tiny_exhaustive():
    panel = _three_panel()
    got = select_nearest(panel, "A", 2)
    dB = dtw_distance(panel.series["A"], panel.series["B"])
    dC = dtw_distance(panel.series["A"], panel.series["C"])
    expected = sorted([(dB, "B"), (dC, "C")])
    assert [m for m, _ in got] == [m for _, m in expected]
    assert [d for _, d in got] == [d for d, _ in expected]


def test_duplicate_of_origin_ranks_first():
    base = np.tile([1.0, 2.0, 3.0, 2.0, 1.0, 1.0, 1.0], 4)
    panel = make_panel({"A": base, "Z": base.copy(), "B": base * np.linspace(1, 2, base.size)})
    assert select_nearest(panel, "A", 2)[0] == ("Z", 0.0)


def test_select_nearest_errors():
    panel = _three_panel()
    with pytest.raises(InputError, match="n_filt"):
        select_nearest(panel, "A", 3)
    with pytest.raises(InputError, match="unknown meter"):
        select_nearest(panel, "Q", 1)


def test_select_nearest_matches_sort_oracle(small_synth):
    _, panel = small_synth
    got = select_nearest(panel, "M004", 5)
    allpairs = sorted(
        (dtw_dp(panel.series["M004"].values / panel.series["M004"].values.mean(),
                panel.series[m].values / panel.series[m].values.mean()), m)
        for m in panel.meter_ids if m != "M004"
    )[:5]
    assert [m for m, _ in got] == [m for _, m in allpairs]
    assert np.allclose([d for _, d in got], [d for d, _ in allpairs], rtol=1e-12)


def test_select_nearest_permutation_invariant(small_synth):
    _, panel = small_synth
    ids = panel.meter_ids[::-1]
    shuffled = SeriesPanel({m: panel.series[m] for m in ids}, {m: panel.temps[m] for m in ids})
    assert select_nearest(shuffled, "M002", 6) == select_nearest(panel, "M002", 6)


def test_boxcox_round_trip_and_lambda_grid():
    x = np.array([0.5, 1.0, 2.0, 7.5])
    for lam in (0.0, 0.3, 1.0):
        assert np.allclose(inv_boxcox(boxcox(x, lam), lam), x, rtol=1e-12)
    lam = boxcox_lambda(np.random.default_rng(0).lognormal(0, 1, 300))
    assert lam in np.round(np.linspace(0, 1, 11), 1)
    # log-normal data is best stabilised by the log
    assert lam == 0.0


def test_decomposition_trend_oracle():
    s = np.array([0.5, -0.2, 0.1, 0.3, -0.4, -0.1, -0.2])
    d = np.arange(28)
    y = d / 10 + s[d % 7]
    trend, seasonal, remainder = decompose_additive(y)
    oracle = centered_ma_by_hand(y.tolist())
    assert np.allclose(trend, oracle, atol=1e-12)
    # interior trend is the planted line and the planted seasonal comes back
    assert np.allclose(trend[3:25], d[3:25] / 10, atol=1e-12)
    assert np.allclose(trend + seasonal + remainder, y, atol=1e-12)


def test_decomposition_too_short():
    with pytest.raises(InputError, match="too short"):
        decompose_additive(np.ones(13))


@given(st.lists(st.floats(-100, 100), min_size=14, max_size=60))
@settings(max_examples=50, deadline=None)
def test_decomposition_is_exact(xs):
    y = np.array(xs)
    t, s, r = decompose_additive(y)
    assert np.allclose(t + s + r, y, atol=1e-9)
    assert abs(s[:7].sum()) < 1e-9


def test_moving_block_bootstrap_blocks_are_contiguous():
    x = np.arange(100, dtype=float)
    out = moving_block_bootstrap(x, 14, np.random.default_rng(0))
    assert out.size == 100
    steps = np.diff(out)
    # inside a block consecutive values differ by exactly one
    assert (steps == 1).sum() >= 100 - 100 // 14 - 2


def _parent(values):
    return mean_scale(DailySeries("P", dt.date(2018, 1, 1), np.asarray(values, float)))


def test_zero_remainder_fixed_point():
    week = np.array([10.0, 12.0, 9.0, 11.0, 14.0, 20.0, 18.0])
    parent = _parent(np.tile(week, 8))
    reps = bootstrap_series(parent, 5, 42)
    for r in reps:
        assert np.allclose(r.values, parent.values, rtol=0, atol=1e-9)


@given(st.lists(st.floats(0.0, 50.0), min_size=14, max_size=50).filter(lambda v: sum(v) > 0),
       st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_bootstrap_length_positivity_determinism(xs, seed):
    parent = _parent(xs)
    a = bootstrap_series(parent, 3, seed)
    b = bootstrap_series(parent, 3, seed)
    for r, s in zip(a, b):
        assert len(r) == len(parent)
        assert (r.values > 0).all()
        assert np.array_equal(r.values, s.values)
        assert abs(r.values.mean() - 1.0) < 1e-9


def test_bootstrap_ids_and_zero_count():
    parent = _parent(np.arange(1, 30))
    reps = bootstrap_series(parent, 2, 0)
    assert [r.meter_id for r in reps] == ["P#b0", "P#b1"]
    assert bootstrap_series(parent, 0, 0) == []


def test_derive_seed_stable():
    a = np.random.default_rng(derive_seed(7, "M001")).random(3)
    b = np.random.default_rng(derive_seed(7, "M001")).random(3)
    c = np.random.default_rng(derive_seed(7, "M002")).random(3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_neighborhood_shape(small_synth, tmp_path):
    _, panel = small_synth
    hood = build_neighborhood(panel, "M000", 3, 4, global_seed=1)
    assert len(hood.originals) == 3
    assert len(hood.bootstraps) == 12
    parents = {m.parent_id for m in hood.originals}
    assert all(m.parent_id in parents for m in hood.bootstraps)
    assert all(not np.isnan(m.series.values).any() for m in hood.members)
    path = tmp_path / "hood.csv"
    write_neighborhood_csv(path, hood)
    lines = path.read_text().splitlines()
    assert lines[0] == "meter_id,provenance,replicate,day_index,value"
    assert len(lines) == 1 + 15 * 365
