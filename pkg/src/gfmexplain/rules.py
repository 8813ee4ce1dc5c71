"""k-optimal impact rule discovery over a surrogate table.

Impact measures how much more (or less) target mass a rule's cover carries
than the same number of rows would carry on average:
``impact = sum - dataset_mean * absolute_coverage``. The search is a
depth-first branch and bound over conjunctions with an admissible bound, so
its output matches exhaustive enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from gfmexplain.errors import InputError
from gfmexplain.surrogate import FEATURES, NUMERIC_FEATURES, CutPoints, SurrogateTable

FORMS = ("le", "between", "gt", "eq")


@dataclass(frozen=True, order=False)
class Condition:
    feature: str
    form: str
    low: float | None = None
    high: float | None = None

    def __post_init__(self):
        if self.feature not in FEATURES:
            raise InputError(f"unknown feature {self.feature!r}")
        if self.form not in FORMS:
            raise InputError(f"unknown condition form {self.form!r}")
        if self.form == "le" and (self.high is None or self.low is not None):
            raise InputError("'le' condition takes only an upper bound")
        if self.form == "gt" and (self.low is None or self.high is not None):
            raise InputError("'gt' condition takes only a lower bound")
        if self.form == "between" and not (
            self.low is not None and self.high is not None and self.low < self.high
        ):
            raise InputError("'between' condition needs low < high")
        if self.form == "eq" and (self.feature != "month" or self.low is None):
            raise InputError("'eq' conditions are month equality tests")

    @property
    def key(self) -> tuple:
        low = -math.inf if self.low is None else self.low
        high = math.inf if self.high is None else self.high
        return (FEATURES.index(self.feature), FORMS.index(self.form), low, high)

    def holds(self, value: float) -> bool:
        if self.form == "eq":
            return value == self.low
        if self.low is not None and not value > self.low:
            return False
        if self.high is not None and not value <= self.high:
            return False
        return True

    def mask(self, column: np.ndarray) -> np.ndarray:
        if self.form == "eq":
            return column == self.low
        m = np.ones(column.shape, dtype=bool)
        if self.low is not None:
            m &= column > self.low
        if self.high is not None:
            m &= column <= self.high
        return m

    def to_dict(self) -> dict:
        return {"feature": self.feature, "form": self.form, "low": self.low, "high": self.high}

    @classmethod
    def from_dict(cls, d: dict) -> Condition:
        return cls(d["feature"], d["form"], d.get("low"), d.get("high"))

    def __str__(self) -> str:
        if self.form == "eq":
            return f"{self.feature} = {int(self.low)}"
        if self.form == "le":
            return f"{self.feature} <= {self.high:g}"
        if self.form == "gt":
            return f"{self.feature} > {self.low:g}"
        return f"{self.low:g} < {self.feature} <= {self.high:g}"


def lhs_key(lhs: Sequence[Condition]) -> tuple:
    return tuple(c.key for c in lhs)


def canonical_lhs(lhs: Iterable[Condition]) -> tuple[Condition, ...]:
    lhs = tuple(sorted(lhs, key=lambda c: c.key))
    feats = [c.feature for c in lhs]
    if len(set(feats)) != len(feats):
        raise InputError("at most one condition per feature")
    return lhs


@dataclass(frozen=True)
class ImpactRule:
    lhs: tuple[Condition, ...]
    coverage: float
    absolute_coverage: int
    mean: float
    sum: float
    impact: float
    dataset_mean: float

    def holds(self, instance) -> bool:
        return all(c.holds(float(getattr(instance, c.feature))) for c in self.lhs)

    def covered(self, table: SurrogateTable) -> np.ndarray:
        m = np.ones(len(table), dtype=bool)
        for c in self.lhs:
            m &= c.mask(table.column(c.feature))
        return m

    @property
    def features(self) -> set[str]:
        return {c.feature for c in self.lhs}

    def sort_key_positive(self) -> tuple:
        return (-self.impact, len(self.lhs), lhs_key(self.lhs))

    def sort_key_negative(self) -> tuple:
        return (self.impact, len(self.lhs), lhs_key(self.lhs))

    def to_dict(self) -> dict:
        return {
            "lhs": [c.to_dict() for c in self.lhs],
            "coverage": self.coverage,
            "absolute_coverage": self.absolute_coverage,
            "mean": self.mean,
            "sum": self.sum,
            "impact": self.impact,
        }

    def __str__(self) -> str:
        return " & ".join(str(c) for c in self.lhs)


@dataclass(frozen=True)
class MinerConfig:
    k: int = 5
    max_len: int = 3
    min_coverage: float = 0.05

    def __post_init__(self):
        if self.k < 1:
            raise InputError("k must be >= 1")
        if self.max_len < 1:
            raise InputError("max_len must be >= 1")
        if not 0 < self.min_coverage <= 1:
            raise InputError("min_coverage must lie in (0, 1]")


def _impact(cover_sum: float, n_cov: int, total: float, n: int) -> float:
    """``cover_sum - (total / n) * n_cov`` written over a common denominator.

    Exact for integer-valued targets, so rules tied in exact arithmetic stay
    tied and adding a constant to every target cannot reorder them.
    """
    return (n * cover_sum - total * n_cov) / n


def _stats(lhs: tuple[Condition, ...], covered: np.ndarray, y: np.ndarray, total: float) -> ImpactRule:
    n = y.size
    mu = total / n
    n_cov = int(covered.sum())
    if n_cov == 0:
        return ImpactRule(lhs, 0.0, 0, 0.0, 0.0, 0.0, mu)
    s = float(y[covered].sum())
    return ImpactRule(lhs, n_cov / n, n_cov, s / n_cov, s, _impact(s, n_cov, total, n), mu)


def evaluate_rule(lhs: Iterable[Condition], table: SurrogateTable) -> ImpactRule:
    lhs = canonical_lhs(lhs)
    if not lhs:
        raise InputError("rule needs at least one condition")
    if len(table) == 0:
        raise InputError("cannot evaluate a rule on an empty table")
    covered = np.ones(len(table), dtype=bool)
    for c in lhs:
        covered &= c.mask(table.column(c.feature))
    return _stats(lhs, covered, table.y, float(table.y.sum()))


def condition_universe(cuts: CutPoints) -> list[Condition]:
    """Every contiguous run of bins per numeric feature (except the full range),
    plus month equality tests; sorted by condition key."""
    conds = []
    for name in NUMERIC_FEATURES:
        b = cuts.boundaries.get(name)
        if not b:
            continue
        k = len(b)
        for i in range(k + 1):
            for j in range(i, k + 1):
                if i == 0 and j == k:
                    continue
                low = b[i - 1] if i > 0 else None
                high = b[j] if j < k else None
                form = "le" if low is None else "gt" if high is None else "between"
                conds.append(Condition(name, form, low, high))
    conds.extend(Condition("month", "eq", float(m)) for m in cuts.month_values)
    return sorted(conds, key=lambda c: c.key)


def optimistic_bound(covered: np.ndarray, y: np.ndarray, positive: bool = True) -> float:
    """Best impact any refinement of a cover could reach.

    Positive search: keep only the above-mean rows of the cover. Negative
    search: keep only the below-mean rows (the bound is then <= 0).
    """
    y = np.asarray(y, dtype=float)
    return _bound(y[covered], float(y.sum()), y.size, positive)


def _bound(yc: np.ndarray, total: float, n: int, positive: bool) -> float:
    scaled = n * yc
    keep = scaled > total if positive else scaled < total
    return _impact(float(yc[keep].sum()), int(keep.sum()), total, n)


class _TopK:
    def __init__(self, k: int, key):
        self.k = k
        self.key = key
        self.items: list[ImpactRule] = []

    @property
    def full(self) -> bool:
        return len(self.items) >= self.k

    def offer(self, rule: ImpactRule) -> None:
        self.items.append(rule)
        self.items.sort(key=self.key)
        del self.items[self.k :]

    def worst_impact(self) -> float:
        return self.items[-1].impact


def _slack(top: _TopK) -> float:
    return 1e-9 * max(1.0, abs(top.worst_impact()))


def mine_k_optimal(
    table: SurrogateTable, cuts: CutPoints, cfg: MinerConfig = MinerConfig()
) -> tuple[list[ImpactRule], list[ImpactRule]]:
    """Top-``k`` rules by impact (descending) and bottom-``k`` (ascending).

    Only conjunctions of at most ``max_len`` conditions, one per feature, with
    coverage >= ``min_coverage`` qualify. Ties go to the shorter rule, then
    the lexicographically smaller condition list.
    """
    if len(table) == 0:
        return [], []
    conds = condition_universe(cuts)
    y = np.asarray(table.y, dtype=float)
    n = y.size
    total = float(y.sum())
    masks = [c.mask(table.column(c.feature)) for c in conds]
    feat_idx = [FEATURES.index(c.feature) for c in conds]
    pos = _TopK(cfg.k, ImpactRule.sort_key_positive)
    neg = _TopK(cfg.k, ImpactRule.sort_key_negative)

    def expand(start: int, cover: np.ndarray, lhs: tuple[Condition, ...], last_feat: int) -> None:
        for ci in range(start, len(conds)):
            if feat_idx[ci] <= last_feat:
                continue
            new_cover = cover & masks[ci]
            cnt = int(new_cover.sum())
            # coverage is anti-monotone: no refinement can recover
            if cnt == 0 or cnt / n < cfg.min_coverage:
                continue
            new_lhs = lhs + (conds[ci],)
            rule = _stats(new_lhs, new_cover, y, total)
            pos.offer(rule)
            neg.offer(rule)
            if len(new_lhs) >= cfg.max_len:
                continue
            # a refinement tying the k-th best could still win on the tie-break, so
            # prune only when the bound is strictly worse, with slack for rounding
            yc = y[new_cover]
            need_pos = not pos.full or _bound(yc, total, n, True) >= pos.worst_impact() - _slack(pos)
            need_neg = not neg.full or _bound(yc, total, n, False) <= neg.worst_impact() + _slack(neg)
            if need_pos or need_neg:
                expand(ci + 1, new_cover, new_lhs, feat_idx[ci])

    expand(0, np.ones(n, dtype=bool), (), -1)
    return pos.items, neg.items


def rules_union(*lists: Sequence[ImpactRule]) -> list[ImpactRule]:
    seen, out = set(), []
    for lst in lists:
        for r in lst:
            if r.lhs not in seen:
                seen.add(r.lhs)
                out.append(r)
    return out
