"""Fidelity / accuracy metrics and result tables for the explainers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from gfmexplain.errors import InputError

FIDELITY, ACCURACY = "fidelity", "accuracy"
EXPLAINERS = ("LR", "DT", "RULES")


@dataclass(frozen=True)
class EvalRecord:
    meter_id: str
    month: int
    explainer_prediction: float
    gfm_forecast: float
    actual: float

    def __post_init__(self):
        vals = (self.explainer_prediction, self.gfm_forecast, self.actual)
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"non-finite evaluation record for {self.meter_id}/{self.month}")


def metrics(records: Sequence[EvalRecord], mode: str) -> dict[str, float]:
    """RAE, RMSE and MAE of explainer predictions against the GFM forecast
    (fidelity) or the observed value (accuracy)."""
    if mode not in (FIDELITY, ACCURACY):
        raise InputError(f"unknown metric mode {mode!r}")
    if len(records) < 2:
        raise InputError("metrics need at least two records")
    pred = np.array([r.explainer_prediction for r in records])
    ref = np.array([r.gfm_forecast if mode == FIDELITY else r.actual for r in records])
    return error_metrics(pred, ref)


def error_metrics(pred: np.ndarray, ref: np.ndarray) -> dict[str, float]:
    err = np.asarray(pred, float) - np.asarray(ref, float)
    denom = float(np.sum(np.abs(ref - ref.mean())))
    if denom == 0:
        raise InputError("undefined RAE: reference values are constant")
    return {
        "rae": float(np.sum(np.abs(err)) / denom),
        "rmse": float(np.sqrt(np.mean(err * err))),
        "mae": float(np.mean(np.abs(err))),
    }


@dataclass(frozen=True)
class ResultRow:
    explainer: str
    scope: str
    metric_mode: str
    rae: float
    rmse: float
    mae: float


def result_rows(
    records: Mapping[str, Sequence[EvalRecord]], scope: str
) -> list[ResultRow]:
    rows = []
    for name, recs in records.items():
        for mode in (FIDELITY, ACCURACY):
            m = metrics(recs, mode)
            rows.append(ResultRow(name, scope, mode, m["rae"], m["rmse"], m["mae"]))
    return rows


def write_results_csv(path: str | Path, rows: Iterable[ResultRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["explainer", "scope", "metric_mode", "rae", "rmse", "mae"])
        for r in rows:
            w.writerow([r.explainer, r.scope, r.metric_mode, f"{r.rae:.6f}", f"{r.rmse:.6f}", f"{r.mae:.6f}"])


def write_importance_csv(path: str | Path, scores: Mapping[tuple[str, str], float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["explainer_or_ruletype", "feature", "score"])
        for (group, feat), v in scores.items():
            w.writerow([group, feat, f"{v:.6f}"])


def read_results_csv(path: str | Path) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            ResultRow(r["explainer"], r["scope"], r["metric_mode"],
                      float(r["rae"]), float(r["rmse"]), float(r["mae"]))
            for r in csv.DictReader(fh)
        ]
