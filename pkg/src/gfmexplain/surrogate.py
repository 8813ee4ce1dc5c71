"""Aggregate surrogate features for explaining monthly totals.

Daily inputs and daily forecasts are not meaningful explanation units for a
monthly bill, so each series becomes one row of recent-consumption summaries,
target-month temperature and month, with the monthly forecast as target.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from gfmexplain.data import DailySeries, TemperatureSeries, months
from gfmexplain.errors import InputError
from gfmexplain.gfm import ForecastResult

logger = logging.getLogger(__name__)

FEATURES = ("mean_cons", "max_cons", "min_cons", "temp", "month")
NUMERIC_FEATURES = FEATURES[:4]
INPUT_WINDOW = 20


@dataclass(frozen=True)
class SurrogateInstance:
    mean_cons: float
    max_cons: float
    min_cons: float
    temp: float
    month: int
    target: float
    provenance: str = ""

    def __post_init__(self):
        if not self.min_cons <= self.mean_cons <= self.max_cons:
            raise InputError("surrogate instance violates min <= mean <= max")
        if not 1 <= self.month <= 12:
            raise InputError(f"month {self.month} outside 1-12")
        if not np.isfinite(self.target):
            raise InputError("surrogate target must be finite")

    def vector(self) -> np.ndarray:
        return np.array([self.mean_cons, self.max_cons, self.min_cons, self.temp, float(self.month)])

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in FEATURES}


@dataclass(frozen=True)
class SurrogateTable:
    """Mining data (``instances``) plus the held-aside instance being explained."""

    instances: tuple[SurrogateInstance, ...]
    origin_instance: SurrogateInstance | None = None
    X: np.ndarray = field(init=False, repr=False, compare=False)
    y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inst = tuple(self.instances)
        object.__setattr__(self, "instances", inst)
        X = np.array([i.vector() for i in inst]).reshape(len(inst), len(FEATURES))
        y = np.array([i.target for i in inst], dtype=float)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.instances)

    def column(self, feature: str) -> np.ndarray:
        return self.X[:, FEATURES.index(feature)]

    @classmethod
    def from_arrays(cls, X: np.ndarray, y: np.ndarray, origin: SurrogateInstance | None = None):
        """Build a table from raw columns; intended for tests and global tables."""
        rows = [
            SurrogateInstance(*map(float, r[:4]), int(r[4]), float(t), "")
            for r, t in zip(np.asarray(X, float), np.asarray(y, float))
        ]
        return cls(tuple(rows), origin)


@dataclass(frozen=True)
class CutPoints:
    boundaries: dict[str, tuple[float, ...]]
    month_values: tuple[int, ...] = ()

    def __post_init__(self):
        for name, b in self.boundaries.items():
            if any(x >= y for x, y in zip(b, b[1:])):
                raise InputError(f"cut points for {name} are not strictly increasing")

    @property
    def features(self) -> list[str]:
        names = [f for f in NUMERIC_FEATURES if f in self.boundaries]
        if self.month_values:
            names.append("month")
        return names


def featurize(
    series: DailySeries,
    temps: TemperatureSeries,
    forecast: ForecastResult,
    target_month: int,
    provenance: str = "",
    window: int = INPUT_WINDOW,
) -> SurrogateInstance:
    if len(series) < window:
        raise InputError(f"{series.meter_id}: needs at least {window} days for surrogate features")
    if not 1 <= target_month <= 12:
        raise InputError(f"month {target_month} outside 1-12")
    recent = series.denormalized()[-window:]
    horizon = forecast.daily_kwh.size
    in_month = months(forecast.start_date, horizon) == target_month
    if not in_month.any():
        raise InputError(f"{series.meter_id}: month {target_month} not inside the forecast horizon")
    temp = float(temps.mean_on(forecast.start_date, horizon)[in_month].mean())
    return SurrogateInstance(
        mean_cons=float(recent.mean()),
        max_cons=float(recent.max()),
        min_cons=float(recent.min()),
        temp=temp,
        month=int(target_month),
        target=forecast.month_kwh(target_month),
        provenance=provenance,
    )


def quantile_boundaries(values: np.ndarray, bins: int) -> np.ndarray:
    return np.quantile(np.asarray(values, float), np.arange(1, bins) / bins)


def derive_cutpoints(table: SurrogateTable, bins_per_feature: int = 3) -> CutPoints:
    """Empirical-quantile boundaries per numeric feature.

    Boundaries at or above the column maximum would leave an empty bin and are
    discarded; a feature left with no boundary is dropped. Month is kept as
    a categorical when at least two months occur.
    """
    if bins_per_feature < 2:
        raise InputError("bins_per_feature must be >= 2")
    out: dict[str, tuple[float, ...]] = {}
    for name in NUMERIC_FEATURES:
        col = table.column(name)
        if col.size == 0:
            continue
        b = np.unique(quantile_boundaries(col, bins_per_feature))
        b = b[b < col.max()]
        if b.size == 0:
            logger.info("feature %s dropped from rule conditions: no spread", name)
            continue
        out[name] = tuple(float(x) for x in b)
    month_vals = tuple(int(m) for m in np.unique(table.column("month")))
    if len(month_vals) < 2:
        logger.debug("feature month dropped from rule conditions: single month")
        month_vals = ()
    return CutPoints(out, month_vals)


def write_table_csv(path: str | Path, table: SurrogateTable) -> None:
    rows: Sequence[SurrogateInstance] = table.instances
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["provenance", *FEATURES[:4], "month", "target"])
        if table.origin_instance is not None:
            rows = [table.origin_instance, *rows]
        for i in rows:
            w.writerow([i.provenance, *(repr(float(getattr(i, f))) for f in NUMERIC_FEATURES),
                        i.month, repr(float(i.target))])
