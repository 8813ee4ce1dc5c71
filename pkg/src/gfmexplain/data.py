"""Ingestion and preprocessing of smart-meter consumption and temperature data.

Half-hourly readings are summed to daily totals, gaps are filled with the
per-weekday median, and each series is mean-scaled so one global model can
be trained across households of very different size.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from gfmexplain.errors import InputError

logger = logging.getLogger(__name__)

YEAR_DAYS = 365

CONSUMPTION_COLUMNS = ["meter_id", "timestamp", "kwh"]
TEMPERATURE_COLUMNS = ["meter_id", "date", "mean_temp", "min_temp", "max_temp"]


def day_offsets(start: dt.date, dates: Iterable[dt.date]) -> np.ndarray:
    return np.array([(d - start).days for d in dates], dtype=np.int64)


def date_range(start: dt.date, n: int) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range(n)]


def weekdays(start: dt.date, n: int) -> np.ndarray:
    """Monday=0 weekday index for ``n`` consecutive days from ``start``."""
    return (start.weekday() + np.arange(n)) % 7


def months(start: dt.date, n: int) -> np.ndarray:
    return np.array([d.month for d in date_range(start, n)], dtype=np.int64)


@dataclass(frozen=True)
class RawReadings:
    meter_id: str
    timestamps: np.ndarray  # datetime64[m]
    values: np.ndarray  # kWh, NaN where missing

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[m]")
        vals = np.asarray(self.values, dtype=float)
        if ts.shape != vals.shape:
            raise InputError(f"{self.meter_id}: timestamps and values differ in length")
        if ts.size > 1 and not np.all(ts[1:] > ts[:-1]):
            raise InputError(f"{self.meter_id}: timestamps not strictly increasing")
        if np.any(vals[~np.isnan(vals)] < 0):
            raise InputError(f"{self.meter_id}: negative reading")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class DailySeries:
    """Daily consumption for one meter.

    ``values`` may hold NaN only before imputation. When ``normalized`` is set
    the values are divided by ``scale`` and ``denormalized()`` recovers kWh.
    """

    meter_id: str
    start_date: dt.date
    values: np.ndarray
    scale: float = 1.0
    normalized: bool = False
    partial: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise InputError(f"{self.meter_id}: empty series")
        if not self.scale > 0:
            raise InputError(f"{self.meter_id}: scale must be positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self) - 1)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def dates(self) -> list[dt.date]:
        return date_range(self.start_date, len(self))

    def denormalized(self) -> np.ndarray:
        return self.values * self.scale if self.normalized else self.values.copy()


@dataclass(frozen=True)
class TemperatureSeries:
    meter_id: str
    start_date: dt.date
    mean_temp: np.ndarray
    min_temp: np.ndarray
    max_temp: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (self.mean_temp, self.min_temp, self.max_temp)]
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape) or arrays[0].size == 0:
            raise InputError(f"{self.meter_id}: temperature columns misaligned or empty")
        if not np.all(np.isfinite(np.concatenate(arrays))):
            raise InputError(f"{self.meter_id}: non-finite temperature")
        mean, lo, hi = arrays
        if np.any(lo > mean) or np.any(mean > hi):
            raise InputError(f"{self.meter_id}: min_temp <= mean_temp <= max_temp violated")
        for name, arr in zip(("mean_temp", "min_temp", "max_temp"), arrays):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.mean_temp.size

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self) - 1)

    def covers(self, start: dt.date, end: dt.date) -> bool:
        return self.start_date <= start and end <= self.end_date

    def mean_on(self, start: dt.date, n: int) -> np.ndarray:
        """Daily mean temperature for ``n`` days from ``start``.

        Days past the end of the record are filled by :func:`extend_temperature`.
        """
        first = (start - self.start_date).days
        if first < 0:
            raise InputError(f"{self.meter_id}: no temperature before {self.start_date}")
        stop = first + n
        if stop <= len(self):
            return self.mean_temp[first:stop].copy()
        extra = extend_temperature(self, stop - len(self))
        full = np.concatenate([self.mean_temp, extra.mean_temp])
        return full[first:stop]


@dataclass(frozen=True)
class SeriesPanel:
    """Immutable collection of normalized daily series with paired temperatures."""

    series: Mapping[str, DailySeries]
    temps: Mapping[str, TemperatureSeries]

    def __post_init__(self):
        missing = sorted(set(self.series) - set(self.temps))
        if missing:
            raise InputError(f"no temperature series for meters: {', '.join(missing)}")
        object.__setattr__(self, "series", dict(sorted(self.series.items())))
        object.__setattr__(self, "temps", {k: self.temps[k] for k in self.series})

    @property
    def meter_ids(self) -> list[str]:
        return list(self.series)

    def __len__(self) -> int:
        return len(self.series)

    def __contains__(self, meter_id: object) -> bool:
        return meter_id in self.series

    def truncated(self, days: int) -> SeriesPanel:
        """Drop the last ``days`` days from every series, rescaling each."""
        out = {}
        for mid, s in self.series.items():
            if len(s) <= days:
                continue
            kwh = s.denormalized()[: len(s) - days]
            out[mid] = mean_scale(DailySeries(mid, s.start_date, kwh))
        return SeriesPanel(out, {k: self.temps[k] for k in out})


def aggregate_to_daily(raw: RawReadings) -> DailySeries:
    """Sum half-hourly readings per calendar day.

    Days with no present reading come out as NaN; days with some slots missing
    are summed over the present slots and flagged in ``partial``.
    """
    present = ~np.isnan(raw.values)
    if raw.values.size == 0 or not present.any():
        raise InputError(f"{raw.meter_id}: empty series")
    days = raw.timestamps.astype("datetime64[D]")
    first, last = days[0], days[-1]
    idx = (days - first).astype(np.int64)
    n = int((last - first).astype(np.int64)) + 1
    sums = np.zeros(n)
    np.add.at(sums, idx[present], raw.values[present])
    n_present = np.bincount(idx[present], minlength=n)
    n_slots = np.bincount(idx, minlength=n)
    values = np.where(n_present > 0, sums, np.nan)
    partial = (n_present > 0) & ((n_present < n_slots) | (n_slots < 48))
    start = first.astype(dt.date)
    return DailySeries(raw.meter_id, start, values, partial=partial)


def impute_seasonal(series: DailySeries) -> DailySeries:
    """Fill missing days with the median of observed days on the same weekday.

    A weekday with no observations falls back to the median of everything
    observed.
    """
    values = np.array(series.values)
    missing = np.isnan(values)
    if missing.all():
        raise InputError(f"{series.meter_id}: no observed values to impute from")
    if not missing.any():
        return series
    wd = weekdays(series.start_date, values.size)
    overall = float(np.median(values[~missing]))
    for day in np.unique(wd[missing]):
        observed = values[(wd == day) & ~missing]
        fill = float(np.median(observed)) if observed.size else overall
        values[(wd == day) & missing] = fill
    return replace(series, values=values)


def mean_scale(series: DailySeries) -> DailySeries:
    if series.normalized:
        return series
    values = series.values
    if np.isnan(values).any():
        raise InputError(f"{series.meter_id}: cannot scale a series with missing values")
    mean = float(values.mean())
    if not mean > 0:
        raise InputError(f"{series.meter_id}: non-positive mean")
    return replace(series, values=values / mean, scale=mean, normalized=True)


def extend_temperature(temps: TemperatureSeries, horizon_days: int) -> TemperatureSeries:
    """Temperatures for the ``horizon_days`` days after the record ends.

    Each future day repeats the value one year earlier, cycling the most recent
    year of history (or the whole record when it is shorter than a year).
    """
    n = len(temps)
    if horizon_days < 1:
        raise InputError("horizon must be at least one day")
    if horizon_days > n:
        raise InputError(
            f"{temps.meter_id}: horizon {horizon_days} exceeds {n} days of temperature history"
        )
    period = min(YEAR_DAYS, n)
    idx = n - period + np.arange(horizon_days) % period
    return TemperatureSeries(
        temps.meter_id,
        temps.end_date + dt.timedelta(days=1),
        temps.mean_temp[idx],
        temps.min_temp[idx],
        temps.max_temp[idx],
    )


def preprocess(raw: RawReadings) -> DailySeries:
    return mean_scale(impute_seasonal(aggregate_to_daily(raw)))


def build_panel(
    raw: Mapping[str, RawReadings],
    temps: Mapping[str, TemperatureSeries],
) -> tuple[SeriesPanel, list[tuple[str, str]]]:
    """Preprocess every meter; unusable meters are dropped with a reason."""
    series: dict[str, DailySeries] = {}
    rejected: list[tuple[str, str]] = []
    for mid in sorted(raw):
        if mid not in temps:
            rejected.append((mid, "no temperature series"))
            continue
        try:
            s = preprocess(raw[mid])
        except InputError as exc:
            rejected.append((mid, str(exc).removeprefix(f"{mid}: ")))
            continue
        if not temps[mid].covers(s.start_date, s.end_date):
            rejected.append((mid, "temperature record does not cover consumption span"))
            continue
        series[mid] = s
    for mid, reason in rejected:
        logger.info("rejected meter %s: %s", mid, reason)
    return SeriesPanel(series, {k: temps[k] for k in series}), rejected


def read_consumption_csv(path: str | Path) -> dict[str, RawReadings]:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype={"meter_id": str, "timestamp": str}, keep_default_na=False,
                         na_values={"kwh": [""]})
    except (OSError, pd.errors.ParserError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if list(df.columns) != CONSUMPTION_COLUMNS:
        raise InputError(f"{path}: expected header {','.join(CONSUMPTION_COLUMNS)}")
    try:
        ts = pd.to_datetime(df["timestamp"], format="ISO8601")
        kwh = pd.to_numeric(df["kwh"], errors="raise").astype(float)
    except (ValueError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    df = df.assign(timestamp=ts, kwh=kwh)
    out = {}
    for mid, group in df.groupby("meter_id", sort=True):
        group = group.sort_values("timestamp", kind="stable")
        try:
            out[str(mid)] = RawReadings(
                str(mid), group["timestamp"].to_numpy("datetime64[m]"), group["kwh"].to_numpy()
            )
        except InputError as exc:
            raise InputError(f"{path}: {exc}") from exc
    return out


def read_temperature_csv(path: str | Path) -> dict[str, TemperatureSeries]:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype={"meter_id": str, "date": str})
    except (OSError, pd.errors.ParserError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if list(df.columns) != TEMPERATURE_COLUMNS:
        raise InputError(f"{path}: expected header {','.join(TEMPERATURE_COLUMNS)}")
    out = {}
    for mid, group in df.groupby("meter_id", sort=True):
        dates = pd.to_datetime(group["date"], format="ISO8601").dt.date.to_numpy()
        order = np.argsort(dates, kind="stable")
        dates = dates[order]
        span = (dates[-1] - dates[0]).days + 1
        if span != len(dates) or len(set(dates)) != len(dates):
            raise InputError(f"{path}: meter {mid} temperature dates are not contiguous daily")
        cols = [group[c].to_numpy(float)[order] for c in ("mean_temp", "min_temp", "max_temp")]
        try:
            out[str(mid)] = TemperatureSeries(str(mid), dates[0], *cols)
        except InputError as exc:
            raise InputError(f"{path}: {exc}") from exc
    return out


def load_panel(
    consumption: str | Path, temperature: str | Path
) -> tuple[SeriesPanel, list[tuple[str, str]]]:
    return build_panel(read_consumption_csv(consumption), read_temperature_csv(temperature))


def write_rejections(path: str | Path, rejected: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for mid, reason in rejected:
            fh.write(f"{mid}\t{reason}\n")
