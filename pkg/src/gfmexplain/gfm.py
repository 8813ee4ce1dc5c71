"""Global forecasting model: pooled expectile regression on lagged daily demand.

One linear model is fitted across all meters on sliding windows of normalized
consumption, daily mean temperature and day-of-week indicators. Forecasts are
produced recursively for a year ahead and summed to calendar months.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gfmexplain.data import DailySeries, SeriesPanel, TemperatureSeries, months, weekdays
from gfmexplain.errors import InputError, NumericalError

logger = logging.getLogger(__name__)

HORIZON = 365
LONG, SHORT = "long", "short"


@dataclass(frozen=True)
class GfmConfig:
    window: int = 20
    tau_long: float = 0.57
    tau_short: float = 0.39
    long_series_threshold: int = 180
    ridge_penalty: float = 1e-6
    max_iter: int = 100
    tol: float = 1e-8

    def __post_init__(self):
        if self.window < 1:
            raise InputError("window must be >= 1")
        for tau in (self.tau_long, self.tau_short):
            if not 0 < tau < 1:
                raise InputError("expectile level must lie in (0, 1)")
        if self.ridge_penalty < 0:
            raise InputError("ridge_penalty must be non-negative")


def feature_names(window: int) -> tuple[str, ...]:
    return (
        *(f"lag_{i}" for i in range(1, window + 1)),
        "mean_temp",
        *(f"dow_{d}" for d in range(7)),
        "intercept",
    )


@dataclass(frozen=True)
class GfmModel:
    coefficients: np.ndarray
    feature_layout: tuple[str, ...]
    tau_used: float
    window: int
    iterations: int = 0

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        if coef.shape != (len(self.feature_layout),):
            raise InputError("coefficient count does not match feature layout")
        if not np.all(np.isfinite(coef)):
            raise NumericalError("non-finite model coefficients")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coefficients


@dataclass(frozen=True)
class ForecastResult:
    meter_id: str
    start_date: dt.date
    daily: np.ndarray
    daily_kwh: np.ndarray
    monthly_kwh: np.ndarray  # index 0 is January
    yearly_kwh: float

    def month_kwh(self, month: int) -> float:
        return float(self.monthly_kwh[month - 1])


def select_tau(series: DailySeries | int, cfg: GfmConfig = GfmConfig()) -> float:
    n = series if isinstance(series, int) else len(series)
    return cfg.tau_long if n >= cfg.long_series_threshold else cfg.tau_short


def tau_group(series: DailySeries | int, cfg: GfmConfig = GfmConfig()) -> str:
    n = series if isinstance(series, int) else len(series)
    return LONG if n >= cfg.long_series_threshold else SHORT


def _design_rows(lags: np.ndarray, temp: np.ndarray, dow: np.ndarray) -> np.ndarray:
    """Rows of [lag_1..lag_w, mean_temp, dow one-hot, 1]; ``lags`` is most-recent-first."""
    k = lags.shape[0]
    onehot = np.zeros((k, 7))
    onehot[np.arange(k), dow] = 1.0
    return np.column_stack([lags, temp, onehot, np.ones(k)])


def series_instances(
    series: DailySeries, temps: TemperatureSeries, window: int
) -> tuple[np.ndarray, np.ndarray]:
    values = series.values
    n = values.size
    if n <= window:
        return np.empty((0, window + 9)), np.empty(0)
    # windows[j] = values[j : j + window]; target index t = j + window
    lags = sliding_window_view(values, window)[: n - window, ::-1]
    temp = temps.mean_on(series.start_date, n)[window:]
    dow = weekdays(series.start_date, n)[window:]
    return _design_rows(lags, temp, dow), values[window:].copy()


def build_training_matrix(
    panel: SeriesPanel, cfg: GfmConfig = GfmConfig(), meter_ids: Iterable[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Pool one instance per (meter, day) that has a full lag window behind it."""
    blocks, targets = [], []
    for mid in panel.meter_ids if meter_ids is None else meter_ids:
        s = panel.series[mid]
        if len(s) <= cfg.window:
            logger.info("meter %s skipped: %d days is not longer than window %d", mid, len(s), cfg.window)
            continue
        X, y = series_instances(s, panel.temps[mid], cfg.window)
        blocks.append(X)
        targets.append(y)
    if not blocks:
        return np.empty((0, cfg.window + 9)), np.empty(0)
    return np.vstack(blocks), np.concatenate(targets)


def expectile_weights(residuals: np.ndarray, tau: float) -> np.ndarray:
    return np.where(residuals >= 0, tau, 1.0 - tau)


def expectile_loss(beta, X, y, tau, ridge_penalty=0.0) -> float:
    r = y - X @ beta
    return float(np.sum(expectile_weights(r, tau) * r * r) + ridge_penalty * beta @ beta)


def expectile_gradient(beta, X, y, tau, ridge_penalty=0.0) -> np.ndarray:
    r = y - X @ beta
    return -2.0 * X.T @ (expectile_weights(r, tau) * r) + 2.0 * ridge_penalty * beta


def _weighted_solve(X, y, w, ridge_penalty):
    Xw = X * w[:, None]
    A = X.T @ Xw + ridge_penalty * np.eye(X.shape[1])
    b = Xw.T @ y
    try:
        beta = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("rank-deficient design") from exc
    if not np.all(np.isfinite(beta)):
        raise NumericalError("rank-deficient design")
    return beta


def fit_expectile(
    X: np.ndarray,
    y: np.ndarray,
    tau: float,
    ridge_penalty: float = 1e-6,
    names: Sequence[str] | None = None,
    window: int = 0,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> GfmModel:
    """Asymmetric least squares by iteratively reweighted least squares.

    Stops when no coefficient moves by ``tol`` or more, or after ``max_iter``
    reweightings.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 0 < tau < 1:
        raise InputError("expectile level must lie in (0, 1)")
    if X.ndim != 2 or X.shape[0] != y.size:
        raise InputError("design and targets disagree in length")
    if X.shape[0] < X.shape[1]:
        raise InputError(f"need at least {X.shape[1]} instances, got {X.shape[0]}")
    beta = _weighted_solve(X, y, np.full(y.size, 0.5), ridge_penalty)
    it = 0
    for it in range(1, max_iter + 1):
        w = expectile_weights(y - X @ beta, tau)
        new = _weighted_solve(X, y, w, ridge_penalty)
        step = np.max(np.abs(new - beta))
        beta = new
        if step < tol:
            break
    else:
        logger.warning("expectile IRLS stopped after %d iterations", max_iter)
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    return GfmModel(beta, names, float(tau), window, it)


def train_gfm(panel: SeriesPanel, cfg: GfmConfig = GfmConfig()) -> dict[str, GfmModel]:
    """Fit one pooled model per series-length group.

    Groups with fewer instances than features are skipped; their series
    borrow the other group's model at forecast time.
    """
    groups: dict[str, list[str]] = {LONG: [], SHORT: []}
    for mid, s in panel.series.items():
        groups[tau_group(s, cfg)].append(mid)
    names = feature_names(cfg.window)
    models = {}
    for group, ids in groups.items():
        X, y = build_training_matrix(panel, cfg, ids)
        if y.size == 0:
            continue
        if y.size < X.shape[1]:
            logger.warning("skipping %s model: %d instances for %d features", group, y.size, X.shape[1])
            continue
        tau = cfg.tau_long if group == LONG else cfg.tau_short
        models[group] = fit_expectile(
            X, y, tau, cfg.ridge_penalty, names, cfg.window, cfg.max_iter, cfg.tol
        )
        logger.info("trained %s model: tau=%.2f, %d instances, %d meters", group, tau, y.size, len(ids))
    return models


def model_for(models: Mapping[str, GfmModel], series: DailySeries, cfg: GfmConfig = GfmConfig()) -> GfmModel:
    group = tau_group(series, cfg)
    if group in models:
        return models[group]
    if not models:
        raise InputError("no trained model available")
    # a length group with no training series borrows the other group's model
    return next(iter(models.values()))


def forecast_batch(
    model: GfmModel,
    series: Sequence[DailySeries],
    temps: Sequence[TemperatureSeries],
    horizon: int = HORIZON,
) -> list[ForecastResult]:
    """Recursive forecasts for several series at once.

    Each step feeds the previous predictions back as lags. Series may differ
    in length and end date.
    """
    if len(series) != len(temps):
        raise InputError("one temperature series per consumption series is required")
    if not series:
        return []
    w = model.window
    k = len(series)
    for s in series:
        if len(s) < w:
            raise InputError(f"{s.meter_id}: {len(s)} days is shorter than window {w}")
    starts = [s.end_date + dt.timedelta(days=1) for s in series]
    lags = np.array([s.values[::-1][:w] for s in series])  # most recent first
    temp = np.array([t.mean_on(st, horizon) for t, st in zip(temps, starts)])
    dow = np.array([weekdays(st, horizon) for st in starts])
    out = np.empty((k, horizon))
    for h in range(horizon):
        pred = _design_rows(lags, temp[:, h], dow[:, h]) @ model.coefficients
        out[:, h] = pred
        lags = np.column_stack([pred, lags[:, :-1]])
    results = []
    for i, (s, st) in enumerate(zip(series, starts)):
        scale = s.scale if s.normalized else 1.0
        daily_kwh = out[i] * scale
        monthly = np.bincount(months(st, horizon) - 1, weights=daily_kwh, minlength=12)
        results.append(
            ForecastResult(s.meter_id, st, out[i], daily_kwh, monthly, float(monthly.sum()))
        )
    return results


def forecast_recursive(
    model: GfmModel, series: DailySeries, temps: TemperatureSeries, horizon: int = HORIZON
) -> ForecastResult:
    return forecast_batch(model, [series], [temps], horizon)[0]


def write_model(path: str | Path, model: GfmModel, group: str = "") -> None:
    lines = [f"# tau={model.tau_used!r}\twindow={model.window}\tgroup={group}"]
    lines += [f"{name}\t{float(c)!r}" for name, c in zip(model.feature_layout, model.coefficients)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model(path: str | Path) -> GfmModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not text or not text[0].startswith("#"):
        raise InputError(f"{path}: missing model header")
    header = dict(kv.split("=", 1) for kv in text[0][1:].strip().split("\t"))
    names, coefs = [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        try:
            name, value = line.split("\t")
            coefs.append(float(value))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: malformed coefficient line") from exc
        names.append(name)
    return GfmModel(np.array(coefs), tuple(names), float(header["tau"]), int(header["window"]))
