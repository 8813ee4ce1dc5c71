"""Neighbourhood construction: DTW nearest neighbours plus bootstrapped variants.

The bootstrap follows the Box-Cox / decomposition / moving-block recipe: the
series is variance-stabilised, split into trend + weekly seasonal + remainder,
the remainder is resampled in contiguous blocks, and the pieces are put back.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from gfmexplain.data import DailySeries, SeriesPanel, mean_scale
from gfmexplain.errors import InputError

logger = logging.getLogger(__name__)

PERIOD = 7
BLOCK_LENGTH = 2 * PERIOD
LAMBDA_GRID = np.round(np.linspace(0.0, 1.0, 11), 1)


@dataclass(frozen=True)
class DtwConfig:
    band_radius: int | None = None
    normalize_before: bool = True

    def __post_init__(self):
        if self.band_radius is not None and self.band_radius < 1:
            raise InputError("band_radius must be >= 1")


@numba.njit(cache=True)
def _dtw_kernel(a, b, band):
    n = a.shape[0]
    m = b.shape[0]
    inf = np.inf
    prev = np.full(m + 1, inf)
    cur = np.full(m + 1, inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[:] = inf
        lo = 1
        hi = m
        if band >= 0:
            lo = max(1, i - band)
            hi = min(m, i + band)
        ai = a[i - 1]
        for j in range(lo, hi + 1):
            diff = ai - b[j - 1]
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = diff * diff + best
        prev, cur = cur, prev
    return prev[m]


def _as_values(series) -> np.ndarray:
    values = series.values if isinstance(series, DailySeries) else series
    return np.ascontiguousarray(values, dtype=np.float64)


def _mean_normalize(x: np.ndarray) -> np.ndarray:
    mean = x.mean()
    if not mean > 0:
        raise InputError("mean normalization needs a positive mean")
    return x / mean


def dtw_distance(a, b, cfg: DtwConfig = DtwConfig()) -> float:
    """DTW cost with squared pointwise difference and symmetric unit steps.

    Accepts :class:`DailySeries` or plain arrays. With ``normalize_before``
    each series is divided by its own mean first.
    """
    x, y = _as_values(a), _as_values(b)
    if x.size == 0 or y.size == 0:
        raise InputError("dtw_distance of an empty series")
    if cfg.normalize_before:
        x, y = _mean_normalize(x), _mean_normalize(y)
    band = -1
    if cfg.band_radius is not None:
        # the end cell must stay reachable
        band = max(cfg.band_radius, abs(x.size - y.size))
    return float(_dtw_kernel(x, y, band))


def select_nearest(
    panel: SeriesPanel, origin: str, n_filt: int, cfg: DtwConfig = DtwConfig()
) -> list[tuple[str, float]]:
    """The ``n_filt`` meters closest to ``origin`` by DTW, closest first.

    Ties are broken by ascending meter id.
    """
    if origin not in panel:
        raise InputError(f"unknown meter {origin!r}")
    candidates = [m for m in panel.meter_ids if m != origin]
    if n_filt < 1 or n_filt > len(candidates):
        raise InputError(f"n_filt={n_filt} but only {len(candidates)} other meters in the panel")
    target = panel.series[origin]
    dists = [(dtw_distance(target, panel.series[m], cfg), m) for m in candidates]
    dists.sort()
    return [(m, d) for d, m in dists[:n_filt]]


def boxcox(x: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0:
        return np.log(x)
    return (np.power(x, lam) - 1.0) / lam


def inv_boxcox(y: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0:
        return np.exp(y)
    base = np.maximum(lam * y + 1.0, np.finfo(float).tiny)
    return np.power(base, 1.0 / lam)


def boxcox_lambda(x: np.ndarray) -> float:
    """Profile-likelihood maximiser of the Box-Cox lambda over {0, 0.1, ..., 1}."""
    x = np.asarray(x, dtype=float)
    if np.ptp(x) == 0:
        return 1.0
    n = x.size
    logsum = np.log(x).sum()
    best, best_llf = 1.0, -np.inf
    for lam in LAMBDA_GRID:
        var = boxcox(x, lam).var()
        if var <= 0:
            continue
        llf = -0.5 * n * np.log(var) + (lam - 1.0) * logsum
        if llf > best_llf:
            best, best_llf = float(lam), llf
    return best


def decompose_additive(y: np.ndarray, period: int = PERIOD) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classical additive decomposition into (trend, seasonal, remainder).

    Trend is the centred moving average over ``period`` (odd) days; the
    ``period // 2`` values at either end copy the nearest defined trend value.
    Seasonal is the per-phase mean of the detrended series, centred to sum
    to zero over one period.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if period % 2 != 1:
        raise InputError("period must be odd")
    if n < 2 * period:
        raise InputError("too short to decompose")
    half = period // 2
    kernel = np.full(period, 1.0 / period)
    inner = np.convolve(y, kernel, mode="valid")
    trend = np.empty(n)
    trend[half : n - half] = inner
    trend[:half] = inner[0]
    trend[n - half :] = inner[-1]
    detrended = y - trend
    phase = np.arange(n) % period
    means = np.array([detrended[phase == k].mean() for k in range(period)])
    means -= means.mean()
    seasonal = means[phase]
    return trend, seasonal, y - trend - seasonal


def moving_block_bootstrap(x: np.ndarray, block: int, rng: np.random.Generator) -> np.ndarray:
    n = x.size
    block = min(block, n)
    n_blocks = n // block + 2
    starts = rng.integers(0, n - block + 1, size=n_blocks)
    stitched = np.concatenate([x[s : s + block] for s in starts])
    offset = int(rng.integers(0, block))
    return stitched[offset : offset + n]


def derive_seed(global_seed: int, key: str) -> np.random.SeedSequence:
    """Stable per-task seed, independent of process and scheduling order."""
    digest = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    return np.random.SeedSequence([int(global_seed) & 0xFFFFFFFF, digest])


def bootstrap_series(parent: DailySeries, n_synthetic: int, seed) -> list[DailySeries]:
    """``n_synthetic`` bootstrap replicates of ``parent``, each mean-scaled.

    Replicates are built in kWh space from the parent's denormalized values.
    ``seed`` may be an int or a SeedSequence.
    """
    x = parent.denormalized()
    if np.isnan(x).any():
        raise InputError(f"{parent.meter_id}: bootstrap needs a fully observed series")
    if x.size < 2 * PERIOD:
        raise InputError(f"{parent.meter_id}: too short to decompose")
    if n_synthetic <= 0:
        return []
    shift = 1.0 - x.min() if x.min() <= 0 else 0.0
    floor = 1e-6 * max(x.mean(), np.finfo(float).tiny)
    lam = boxcox_lambda(x + shift)
    transformed = boxcox(x + shift, lam)
    trend, seasonal, remainder = decompose_additive(transformed)
    base = trend + seasonal
    rng = np.random.default_rng(seed)
    out = []
    for r in range(n_synthetic):
        y = base + moving_block_bootstrap(remainder, BLOCK_LENGTH, rng)
        values = np.maximum(inv_boxcox(y, lam) - shift, floor)
        out.append(mean_scale(DailySeries(f"{parent.meter_id}#b{r}", parent.start_date, values)))
    return out


@dataclass(frozen=True)
class Member:
    series: DailySeries
    parent_id: str
    replicate: int | None  # None for an original series
    distance: float

    @property
    def is_original(self) -> bool:
        return self.replicate is None

    @property
    def provenance(self) -> str:
        return "original" if self.replicate is None else "bootstrap"


@dataclass(frozen=True)
class Neighborhood:
    origin_meter_id: str
    members: tuple[Member, ...]

    @property
    def originals(self) -> list[Member]:
        return [m for m in self.members if m.is_original]

    @property
    def bootstraps(self) -> list[Member]:
        return [m for m in self.members if not m.is_original]


def build_neighborhood(
    panel: SeriesPanel,
    origin: str,
    n_filt: int,
    n_synthetic: int,
    global_seed: int,
    cfg: DtwConfig = DtwConfig(),
) -> Neighborhood:
    members = []
    for parent_id, dist in select_nearest(panel, origin, n_filt, cfg):
        parent = panel.series[parent_id]
        members.append(Member(parent, parent_id, None, dist))
        reps = bootstrap_series(parent, n_synthetic, derive_seed(global_seed, parent_id))
        members.extend(Member(s, parent_id, r, dist) for r, s in enumerate(reps))
    return Neighborhood(origin, tuple(members))


def write_neighborhood_csv(path: str | Path, hood: Neighborhood) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["meter_id", "provenance", "replicate", "day_index", "value"])
        for m in hood.members:
            rep = "" if m.replicate is None else m.replicate
            for i, v in enumerate(m.series.denormalized()):
                w.writerow([m.parent_id, m.provenance, rep, i, repr(float(v))])
