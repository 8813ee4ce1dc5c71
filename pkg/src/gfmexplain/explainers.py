"""Baseline local explainers (ridge regression, regression tree) and the
point prediction implied by a mined rule set."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from gfmexplain.errors import InputError, NumericalError
from gfmexplain.guidance import RULE_TYPES, RuleClassification
from gfmexplain.rules import ImpactRule, lhs_key
from gfmexplain.surrogate import FEATURES, SurrogateInstance, SurrogateTable

PENALTY_GRID = tuple(float(a) for a in np.logspace(-6, 3, 10))
CV_FOLDS = 5


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, SurrogateInstance):
        return x.vector()[None, :]
    if isinstance(x, SurrogateTable):
        return np.asarray(x.X)
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def ridge_standardized(X: np.ndarray, y: np.ndarray, penalty: float):
    """Ridge fit on standardized columns with an unpenalized intercept.

    Returns (intercept, coefficients on the original scale, coefficients on
    the standardized scale). Constant columns get a zero coefficient.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    live = std > 0
    coef_std = np.zeros(X.shape[1])
    if live.any():
        Z = (X[:, live] - mean[live]) / std[live]
        A = Z.T @ Z + penalty * np.eye(Z.shape[1])
        try:
            coef_std[live] = np.linalg.solve(A, Z.T @ (y - y.mean()))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("ridge system is singular") from exc
    coef = np.where(live, coef_std / np.where(live, std, 1.0), 0.0)
    intercept = float(y.mean() - coef @ mean)
    return intercept, coef, coef_std


@dataclass(frozen=True)
class LinearExplainer:
    intercept: float
    coefficients: np.ndarray
    standardized_coefficients: np.ndarray
    penalty: float
    feature_names: tuple[str, ...] = FEATURES

    def predict(self, x) -> np.ndarray:
        return _as_matrix(x) @ self.coefficients + self.intercept


def _cv_error(X, y, penalty, folds) -> float:
    sse = 0.0
    for test in folds:
        train = np.ones(y.size, dtype=bool)
        train[test] = False
        b0, b, _ = ridge_standardized(X[train], y[train], penalty)
        sse += float(np.sum((X[test] @ b + b0 - y[test]) ** 2))
    return sse / y.size


def fit_linear_explainer(
    table: SurrogateTable | tuple[np.ndarray, np.ndarray],
    penalty: float | None = None,
    grid: Sequence[float] = PENALTY_GRID,
    n_folds: int = CV_FOLDS,
    seed: int = 0,
) -> LinearExplainer:
    """Ridge regression with the penalty picked by k-fold cross-validation.

    Pass ``penalty`` to skip the search.
    """
    X, y = (table.X, table.y) if isinstance(table, SurrogateTable) else table
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size < 2 * X.shape[1]:
        raise InputError(f"linear explainer needs at least {2 * X.shape[1]} rows, got {y.size}")
    if np.ptp(y) == 0:
        return LinearExplainer(float(y[0]), np.zeros(X.shape[1]), np.zeros(X.shape[1]), 0.0)
    if penalty is None:
        perm = np.random.default_rng(seed).permutation(y.size)
        folds = np.array_split(perm, n_folds)
        errors = [_cv_error(X, y, a, folds) for a in grid]
        penalty = float(grid[int(np.argmin(errors))])
    b0, b, bz = ridge_standardized(X, y, penalty)
    return LinearExplainer(b0, b, bz, penalty)


@dataclass
class TreeNode:
    value: float
    n: int
    sse: float
    depth: int
    feature: int | None = None
    threshold: float | None = None
    gain: float = 0.0
    left: TreeNode | None = None
    right: TreeNode | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> tuple[int, float, float] | None:
    """Exact (feature, midpoint threshold, SSE reduction) maximiser, or None."""
    n = y.size
    parent_sse = float(np.sum((y - y.mean()) ** 2))
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total, total_sq = csum[-1], csq[-1]
        # candidate i: left = sorted rows[0..i], right = rows[i+1..]
        i = np.arange(min_leaf - 1, n - min_leaf)
        i = i[xs[i] != xs[i + 1]]
        if i.size == 0:
            continue
        nl, nr = i + 1, n - i - 1
        sl, sr = csum[i], total - csum[i]
        sse_l = csq[i] - sl * sl / nl
        sse_r = (total_sq - csq[i]) - sr * sr / nr
        gains = parent_sse - (sse_l + sse_r)
        j = int(np.argmax(gains))
        if best is None or gains[j] > best[2]:
            best = (f, float((xs[i[j]] + xs[i[j] + 1]) / 2.0), float(gains[j]))
    return best


@dataclass(frozen=True)
class TreeExplainer:
    root: TreeNode
    max_depth: int
    min_leaf: int
    feature_names: tuple[str, ...] = FEATURES

    def _leaf(self, row: np.ndarray) -> TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node

    def predict(self, x) -> np.ndarray:
        return np.array([self._leaf(row).value for row in _as_matrix(x)])

    def leaves(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend([node.right, node.left])
        return out

    def internal_nodes(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                out.append(node)
                stack.extend([node.right, node.left])
        return out


def fit_tree_explainer(
    table: SurrogateTable | tuple[np.ndarray, np.ndarray], max_depth: int = 4, min_leaf: int = 20
) -> TreeExplainer:
    """Greedy variance-reduction regression tree (x <= threshold goes left)."""
    X, y = (table.X, table.y) if isinstance(table, SurrogateTable) else table
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise InputError("cannot fit a tree on an empty table")

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        ys = y[idx]
        node = TreeNode(float(ys.mean()), idx.size, float(np.sum((ys - ys.mean()) ** 2)), depth)
        if depth >= max_depth or idx.size < 2 * min_leaf or node.sse <= 0:
            return node
        split = best_split(X[idx], ys, min_leaf)
        if split is None or split[2] <= 1e-12 * node.sse:
            return node
        f, thr, gain = split
        go_left = X[idx, f] <= thr
        node.feature, node.threshold, node.gain = f, thr, gain
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    return TreeExplainer(grow(np.arange(y.size), 0), max_depth, min_leaf)


def _covering_key(r: ImpactRule) -> tuple:
    return (-abs(r.impact), -r.absolute_coverage, len(r.lhs), lhs_key(r.lhs))


def rule_predict(
    rules: Sequence[ImpactRule | RuleClassification],
    instance: SurrogateInstance,
    table: SurrogateTable,
) -> float:
    """Covered-mean forecast of the largest-|impact| rule holding on ``instance``.

    Falls back to the table-wide mean target when no rule applies.
    """
    best = None
    for item in rules:
        rule = item.rule if isinstance(item, RuleClassification) else item
        if rule.holds(instance) and (best is None or _covering_key(rule) < _covering_key(best)):
            best = rule
    if best is None:
        return float(np.mean(table.y))
    covered = best.covered(table)
    if not covered.any():
        return float(np.mean(table.y))
    return float(table.y[covered].mean())


@dataclass
class ImportanceAccumulator:
    """Running average of per-task importance scores keyed by (group, feature)."""

    sums: dict[tuple[str, str], float] = field(default_factory=dict)
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def add(self, group: str, scores: Mapping[str, float]) -> None:
        for feat, v in scores.items():
            key = (group, feat)
            self.sums[key] = self.sums.get(key, 0.0) + float(v)
            self.counts[key] = self.counts.get(key, 0) + 1

    def mean(self) -> dict[tuple[str, str], float]:
        return {k: self.sums[k] / self.counts[k] for k in sorted(self.sums)}


def feature_importance(explainer, kind: str | None = None) -> dict:
    """Per-feature importance.

    Linear: |coefficient| on the standardized scale. Tree: total SSE reduction
    of each feature's splits. Rules (a list of classified rules): for each
    rule type, the fraction of its rules mentioning each feature, returned as
    ``{rule_type: {feature: fraction}}`` for the types that occur.
    """
    if kind is None:
        kind = ("linear" if isinstance(explainer, LinearExplainer)
                else "tree" if isinstance(explainer, TreeExplainer) else "rules")
    if kind == "linear":
        return {f: float(abs(c)) for f, c in zip(explainer.feature_names, explainer.standardized_coefficients)}
    if kind == "tree":
        scores = {f: 0.0 for f in explainer.feature_names}
        for node in explainer.internal_nodes():
            scores[explainer.feature_names[node.feature]] += node.gain
        return scores
    if kind == "rules":
        out: dict[str, dict[str, float]] = {}
        for rtype in RULE_TYPES:
            group = [c for c in explainer if c.quadrant.rule_type == rtype]
            if group:
                out[rtype] = {f: sum(f in c.rule.features for c in group) / len(group) for f in FEATURES}
        return out
    raise InputError(f"unknown explainer kind {kind!r}")
