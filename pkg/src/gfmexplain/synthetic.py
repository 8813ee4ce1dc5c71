"""Synthetic smart-meter panels with known generative structure.

Daily consumption of meter i in cluster c is

    base_c * weekly_c(weekday) * (1 + gamma * max(T_ref - temp_i(d), 0) / T_ref) * noise

where ``noise`` is a mean-one lognormal factor (exactly 1 when ``noise`` is
0). Daily totals are spread over 48 half-hour slots with a fixed intraday
profile, so aggregating the written CSV recovers them.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from gfmexplain.config import parse_flat_config
from gfmexplain.data import RawReadings, TemperatureSeries, date_range, weekdays
from gfmexplain.errors import InputError

SLOTS_PER_DAY = 48


@dataclass(frozen=True)
class SyntheticSpec:
    n_meters: int = 30
    days: int = 730
    start_date: dt.date = dt.date(2017, 1, 1)
    n_clusters: int = 2
    bases: tuple[float, ...] = (10.0, 30.0)
    cluster_weights: tuple[float, ...] = ()
    weekly_amplitude: float = 0.2
    shared_weekly: bool = True
    gamma: float = 0.6
    ref_temp: float = 14.0
    temp_amplitude: float = 8.0
    noise: float = 0.1
    missing_rate: float = 0.0
    short_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_meters < 1 or self.days < 1 or self.n_clusters < 1:
            raise InputError("n_meters, days and n_clusters must be positive")
        if self.cluster_weights and (len(self.cluster_weights) != self.n_clusters
                                     or min(self.cluster_weights) <= 0):
            raise InputError("cluster_weights needs one positive weight per cluster")
        if len(self.bases) < 1 or min(self.bases) <= 0:
            raise InputError("bases must be positive")
        if self.noise < 0 or self.gamma < 0 or self.ref_temp <= 0:
            raise InputError("noise and gamma must be non-negative, ref_temp positive")
        if not 0 <= self.missing_rate < 1 or not 0 <= self.short_fraction <= 1:
            raise InputError("missing_rate and short_fraction must lie in [0, 1)")

    def base_of(self, cluster: int) -> float:
        return self.bases[cluster % len(self.bases)]

    def cluster_of(self, i: int) -> int:
        """Meters are assigned to clusters in contiguous blocks sized by weight."""
        w = np.asarray(self.cluster_weights or (1.0,) * self.n_clusters, dtype=float)
        edges = np.cumsum(w) / w.sum()
        return int(np.searchsorted(edges, (i + 0.5) / self.n_meters, side="right"))

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> SyntheticSpec:
        values = parse_flat_config(Path(path).read_text(encoding="utf-8"), source=str(path))
        values.update(overrides)
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> SyntheticSpec:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InputError(f"unknown synthetic spec keys: {', '.join(unknown)}")
        values = dict(values)
        if "start_date" in values and isinstance(values["start_date"], str):
            values["start_date"] = dt.date.fromisoformat(values["start_date"])
        for key in ("bases", "cluster_weights"):
            if key in values:
                b = values[key]
                values[key] = tuple(float(x) for x in (b if isinstance(b, (list, tuple)) else [b]))
        return cls(**values)


@dataclass(frozen=True)
class SyntheticPanel:
    spec: SyntheticSpec
    daily_kwh: dict[str, np.ndarray]
    start_dates: dict[str, dt.date]
    temps: dict[str, TemperatureSeries]
    clusters: dict[str, int]


def intraday_profile() -> np.ndarray:
    slot = np.arange(SLOTS_PER_DAY)
    w = 1.0 + 0.6 * np.exp(-((slot - 38) / 5.0) ** 2) + 0.3 * np.exp(-((slot - 16) / 3.0) ** 2)
    return w / w.sum()


def weekly_profiles(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    shape = rng.uniform(-1.0, 1.0, size=(spec.n_clusters, 7))
    if spec.shared_weekly:
        shape[:] = shape[0]
    shape -= shape.mean(axis=1, keepdims=True)
    shape /= np.maximum(np.abs(shape).max(axis=1, keepdims=True), 1e-12)
    return 1.0 + spec.weekly_amplitude * shape


def generate(spec: SyntheticSpec) -> SyntheticPanel:
    rng = np.random.default_rng(spec.seed)
    weekly = weekly_profiles(spec, rng)
    n = spec.days
    doy = np.array([d.timetuple().tm_yday for d in date_range(spec.start_date, n)])
    season = -spec.temp_amplitude * np.cos(2 * np.pi * (doy - 15) / 365.0)
    wd = weekdays(spec.start_date, n)
    daily, starts, temps, clusters = {}, {}, {}, {}
    n_short = int(round(spec.short_fraction * spec.n_meters))
    for i in range(spec.n_meters):
        mid = f"M{i:03d}"
        c = spec.cluster_of(i)
        mean_t = spec.ref_temp + season + rng.normal(0.0, 1.0) + rng.normal(0.0, 1.5, size=n)
        spread_lo = rng.uniform(2.0, 5.0, size=n)
        spread_hi = rng.uniform(2.0, 5.0, size=n)
        temps[mid] = TemperatureSeries(mid, spec.start_date, mean_t, mean_t - spread_lo, mean_t + spread_hi)
        heating = 1.0 + spec.gamma * np.maximum(spec.ref_temp - mean_t, 0.0) / spec.ref_temp
        eps = rng.normal(size=n)
        noise = np.exp(spec.noise * eps - 0.5 * spec.noise**2) if spec.noise > 0 else np.ones(n)
        values = spec.base_of(c) * weekly[c, wd] * heating * noise
        offset = 0
        if i >= spec.n_meters - n_short and n > 60:
            offset = n - int(rng.integers(60, min(170, n - 1) + 1))
        daily[mid] = values[offset:]
        starts[mid] = spec.start_date + dt.timedelta(days=offset)
        clusters[mid] = c
    return SyntheticPanel(spec, daily, starts, temps, clusters)


def to_raw(panel: SyntheticPanel) -> dict[str, RawReadings]:
    """Half-hourly readings with optional random gaps."""
    rng = np.random.default_rng([panel.spec.seed, 1])
    profile = intraday_profile()
    out = {}
    for mid, values in panel.daily_kwh.items():
        start = np.datetime64(panel.start_dates[mid], "m")
        ts = start + np.arange(values.size * SLOTS_PER_DAY) * np.timedelta64(30, "m")
        slots = (values[:, None] * profile[None, :]).ravel()
        if panel.spec.missing_rate > 0:
            slots = np.where(rng.random(slots.size) < panel.spec.missing_rate, np.nan, slots)
        out[mid] = RawReadings(mid, ts, slots)
    return out


def write_panel(panel: SyntheticPanel, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "consumption": out_dir / "consumption.csv",
        "temperature": out_dir / "temperature.csv",
        "clusters": out_dir / "clusters.csv",
    }
    frames = []
    for mid, raw in to_raw(panel).items():
        stamps = np.datetime_as_string(raw.timestamps, unit="s")
        frames.append(pd.DataFrame({"meter_id": mid, "timestamp": stamps, "kwh": raw.values}))
    pd.concat(frames).to_csv(paths["consumption"], index=False, lineterminator="\n")
    frames = []
    for mid, t in panel.temps.items():
        frames.append(pd.DataFrame({
            "meter_id": mid,
            "date": [d.isoformat() for d in date_range(t.start_date, len(t))],
            "mean_temp": t.mean_temp,
            "min_temp": t.min_temp,
            "max_temp": t.max_temp,
        }))
    pd.concat(frames).to_csv(paths["temperature"], index=False, lineterminator="\n")
    pd.DataFrame({
        "meter_id": list(panel.clusters),
        "cluster": list(panel.clusters.values()),
        "base": [panel.spec.base_of(c) for c in panel.clusters.values()],
    }).to_csv(paths["clusters"], index=False, lineterminator="\n")
    return paths


def generate_synthetic_panel(spec: SyntheticSpec, out_dir: str | Path) -> dict[str, Path]:
    return write_panel(generate(spec), out_dir)
