"""Turn mined impact rules into the six guidance messages for one forecast.

A rule is placed by two facts: whether its conditions hold for the customer
(current vs hypothetical) and where the covered neighbours' mean forecast
sits relative to a one-standard-deviation band around the customer's own
forecast (supporting, or contradicting upward / downward).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from gfmexplain.rules import Condition, ImpactRule, lhs_key
from gfmexplain.surrogate import SurrogateInstance, SurrogateTable

logger = logging.getLogger(__name__)


class Quadrant(enum.Enum):
    CURRENT_SUPPORTING = "G1"
    CURRENT_CONTRADICTING_1 = "G2"
    CURRENT_CONTRADICTING_2 = "G3"
    HYPOTHETICALLY_SUPPORTING = "G4"
    HYPOTHETICALLY_CONTRADICTING_1 = "G5"
    HYPOTHETICALLY_CONTRADICTING_2 = "G6"

    @property
    def guidance(self) -> str:
        return self.value

    @property
    def rule_type(self) -> str:
        """The four-way rule type, merging contradicting types 1 and 2."""
        return {
            "G1": "current_supporting",
            "G2": "current_contradicting",
            "G3": "current_contradicting",
            "G4": "hypothetically_supporting",
            "G5": "hypothetically_contradicting",
            "G6": "hypothetically_contradicting",
        }[self.value]


RULE_TYPES = (
    "current_supporting",
    "current_contradicting",
    "hypothetically_supporting",
    "hypothetically_contradicting",
)
GUIDANCE_KEYS = tuple(q.value for q in Quadrant)


def quadrant_of(lhs_true: bool, x_tilde: float, p: float, delta: float) -> Quadrant:
    if x_tilde > p + delta:
        branch = 1
    elif x_tilde < p - delta:
        branch = 2
    else:
        branch = 0
    if lhs_true:
        return (Quadrant.CURRENT_SUPPORTING, Quadrant.CURRENT_CONTRADICTING_1,
                Quadrant.CURRENT_CONTRADICTING_2)[branch]
    return (Quadrant.HYPOTHETICALLY_SUPPORTING, Quadrant.HYPOTHETICALLY_CONTRADICTING_1,
            Quadrant.HYPOTHETICALLY_CONTRADICTING_2)[branch]


@dataclass(frozen=True)
class RuleClassification:
    rule: ImpactRule
    lhs_true: bool
    covered_forecast_mean: float
    delta: float
    rhs_true: bool
    quadrant: Quadrant

    @property
    def x_tilde(self) -> float:
        return self.covered_forecast_mean


def classify_rule(
    rule: ImpactRule, origin: SurrogateInstance, table: SurrogateTable, p: float
) -> RuleClassification | None:
    """Classify one rule for the instance being explained.

    Returns None (and logs) for rules covering fewer than two rows, where the
    spread of the covered forecasts is undefined.
    """
    covered = table.y[rule.covered(table)]
    if covered.size < 2:
        logger.info("rule %s dropped from guidance: covers %d rows", rule, covered.size)
        return None
    x_tilde = float(covered.mean())
    delta = float(covered.std())
    lhs_true = rule.holds(origin)
    rhs_true = p - delta <= x_tilde <= p + delta
    return RuleClassification(rule, lhs_true, x_tilde, delta, rhs_true,
                              quadrant_of(lhs_true, x_tilde, p, delta))


def classify_rules(
    rules: Iterable[ImpactRule], origin: SurrogateInstance, table: SurrogateTable, p: float
) -> list[RuleClassification]:
    out = []
    for r in rules:
        c = classify_rule(r, origin, table, p)
        if c is not None:
            out.append(c)
    return out


@dataclass(frozen=True)
class GuidanceReport:
    meter_id: str
    target_month: int
    p: float
    entries: dict[str, RuleClassification | None] = field(default_factory=dict)
    rendered_text: tuple[str, ...] = ()

    def entry(self, quadrant: Quadrant) -> RuleClassification | None:
        return self.entries.get(quadrant.value)

    def to_dict(self) -> dict:
        guidance = {}
        for key, text in zip(GUIDANCE_KEYS, self.rendered_text or render(self)):
            c = self.entries.get(key)
            guidance[key] = None if c is None else {
                "rule": c.rule.to_dict(),
                "x_tilde": c.x_tilde,
                "delta": c.delta,
                "text": text,
            }
        return {"meter_id": self.meter_id, "month": self.target_month, "p_kwh": self.p,
                "guidance": guidance}


def _selection_key(c: RuleClassification) -> tuple:
    return (-abs(c.rule.impact), -c.rule.absolute_coverage, len(c.rule.lhs), lhs_key(c.rule.lhs))


def select_guidance(
    classified: Sequence[RuleClassification], meter_id: str = "", target_month: int = 0, p: float = 0.0
) -> GuidanceReport:
    """Keep the largest-|impact| rule of each quadrant (ties: coverage, then length)."""
    entries: dict[str, RuleClassification | None] = {k: None for k in GUIDANCE_KEYS}
    for c in sorted(classified, key=_selection_key):
        if entries[c.quadrant.value] is None:
            entries[c.quadrant.value] = c
    report = GuidanceReport(meter_id, target_month, p, entries)
    return GuidanceReport(meter_id, target_month, p, entries, tuple(render(report)))


_FEATURE_TEXT = {
    "mean_cons": ("mean consumption", "kWh"),
    "max_cons": ("max consumption", "kWh"),
    "min_cons": ("min consumption", "kWh"),
    "temp": ("average temperature", "°C"),
    "month": ("month", ""),
}


def describe_condition(c: Condition) -> str:
    name, unit = _FEATURE_TEXT[c.feature]
    if c.form == "eq":
        return f"{name} = {int(c.low)}"
    if c.form == "le":
        return f"{name} <= {c.high:.2f}{unit}"
    if c.form == "gt":
        return f"{name} > {c.low:.2f}{unit}"
    return f"{c.low:.2f}{unit} < {name} <= {c.high:.2f}{unit}"


def describe_lhs(rule: ImpactRule) -> str:
    return " & ".join(describe_condition(c) for c in rule.lhs)


def render(report: GuidanceReport) -> list[str]:
    """One sentence per guidance type, G1 to G6."""
    p = report.p
    lines = []
    for key in GUIDANCE_KEYS:
        c = report.entries.get(key)
        if c is None:
            lines.append(f"No rule found for {key}.")
            continue
        lhs = describe_lhs(c.rule)
        gap = abs(c.x_tilde - p)
        if key == "G1":
            text = f"Your predicted consumption is {p:.2f}kWh. Because you have {lhs}."
        elif key == "G2":
            text = f"Your current {lhs} points to {gap:.2f}kWh more than predicted."
        elif key == "G3":
            text = f"Your current {lhs} points to {gap:.2f}kWh less than predicted."
        elif key == "G4":
            text = f"Keeping to {lhs} would hold your consumption at {p:.2f}kWh."
        elif key == "G5":
            text = f"Having {lhs} would increase your consumption by {gap:.2f}kWh."
        else:
            text = f"Having {lhs} would reduce your consumption by {gap:.2f}kWh."
        lines.append(text)
    return lines


def render_text_block(report: GuidanceReport) -> str:
    head = f"meter {report.meter_id}, month {report.target_month}: predicted {report.p:.2f}kWh"
    body = [f"{k}: {t}" for k, t in zip(GUIDANCE_KEYS, report.rendered_text or render(report))]
    return "\n".join([head, *body]) + "\n"

