import datetime as dt

import numpy as np
import pytest

from gfmexplain.data import DailySeries, SeriesPanel, TemperatureSeries, build_panel
from gfmexplain.surrogate import SurrogateTable
from gfmexplain.synthetic import SyntheticSpec, generate, to_raw

CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by a test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    n, title = crit
    outcome = "PASS" if report.passed else "FAIL"
    prev = CRITERIA.get(n)
    if prev is None or prev[1] == "PASS":
        CRITERIA[n] = (title, outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, outcome = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {outcome}: {title}")


def random_table(rng: np.random.Generator, n_rows: int, integer: bool = False, n_months: int = 3):
    """Surrogate-shaped table with min <= mean <= max enforced per row."""
    mean = rng.uniform(5, 40, n_rows)
    if integer:
        mean = np.round(mean)
    lo = mean - rng.uniform(0, 5, n_rows)
    hi = mean + rng.uniform(0, 5, n_rows)
    temp = rng.normal(8, 4, n_rows)
    month = rng.integers(1, n_months + 1, n_rows)
    X = np.column_stack([mean, hi, lo, temp, month])
    if integer:
        y = rng.integers(0, 20, n_rows).astype(float)
    else:
        y = 20 * mean + rng.normal(0, 30, n_rows)
    return SurrogateTable.from_arrays(X, y)


def make_panel(values: dict[str, np.ndarray], start=dt.date(2017, 1, 1), temp_fn=None, normalize=True):
    """Panel of fully observed series with a smooth seasonal temperature."""
    series, temps = {}, {}
    for mid, v in values.items():
        v = np.asarray(v, float)
        n = v.size + 400
        doy = np.arange(n)
        t = temp_fn(doy) if temp_fn else 10 - 6 * np.cos(2 * np.pi * doy / 365.0)
        s = DailySeries(mid, start, v)
        if normalize:
            from gfmexplain.data import mean_scale

            s = mean_scale(s)
        series[mid] = s
        temps[mid] = TemperatureSeries(mid, start, t, t - 3, t + 3)
    return SeriesPanel(series, temps)


@pytest.fixture(scope="session")
def small_synth():
    """Twelve one-year meters in two clusters."""
    spec = SyntheticSpec(n_meters=12, days=365, seed=3)
    syn = generate(spec)
    panel, rejected = build_panel(to_raw(syn), syn.temps)
    assert not rejected
    return syn, panel
