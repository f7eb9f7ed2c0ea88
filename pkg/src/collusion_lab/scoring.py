"""Proper scoring rules over the binary outcome space {l, h}.

A scoring rule assigns a real score ``PS(s, q)`` to reporting the
distribution ``q`` when the realized outcome is ``s``.  A rule is proper
when truthfully reporting one's belief maximizes the expected score, and
strictly proper when it does so uniquely.  Built-ins:

    brier   PS(s, q) = 2*q(s) - (q_h^2 + q_l^2)
    log     PS(s, q) = log_b(q(s))          (base b, default e)

Table rules score affinely in q_h per reported outcome, and arbitrary
callables are accepted for experimentation.  ``gap_report`` collects the
four scores at a prior's two posteriors together with their pairwise gaps,
which drive every collusion threshold downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

from .errors import InvalidDist, LogOfZero

if TYPE_CHECKING:
    from .prior import BinaryPrior

LOW = "l"
HIGH = "h"
SIGNALS = (LOW, HIGH)

#: Absolute comparison tolerance. "Strictly greater" everywhere in this
#: package means exceeding by more than this; all scored quantities are O(1).
DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class BinaryDist:
    """Distribution over {l, h}, parameterized by the probability of h."""

    p_h: float

    def __post_init__(self):
        if not (isinstance(self.p_h, (int, float)) and math.isfinite(self.p_h)):
            raise InvalidDist(f"p_h must be a finite number, got {self.p_h!r}")
        if not 0.0 <= self.p_h <= 1.0:
            raise InvalidDist(f"p_h must lie in [0, 1], got {self.p_h!r}")

    @property
    def p_l(self) -> float:
        return 1.0 - self.p_h

    def prob(self, outcome: str) -> float:
        if outcome == HIGH:
            return self.p_h
        if outcome == LOW:
            return self.p_l
        raise InvalidDist(f"unknown outcome {outcome!r}, expected one of {SIGNALS}")


class ScoringRule:
    """Base class: a score function on (outcome, BinaryDist).

    ``strictly_proper`` is the rule's own claim; it must agree with
    ``verify_properness`` on a grid (tested, not assumed).
    """

    strictly_proper: bool = False

    def score(self, outcome: str, dist: BinaryDist) -> float:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class BrierRule(ScoringRule):
    """Quadratic rule: 2*q(s) minus the squared 2-norm of q."""

    strictly_proper: bool = True

    def score(self, outcome: str, dist: BinaryDist) -> float:
        return 2.0 * dist.prob(outcome) - (dist.p_h * dist.p_h + dist.p_l * dist.p_l)

    def to_config(self) -> dict:
        return {"rule": "brier"}


@dataclass(frozen=True)
class LogRule(ScoringRule):
    """Logarithmic rule with configurable base (default natural log)."""

    base: float = math.e
    strictly_proper: bool = True

    def __post_init__(self):
        if not (self.base > 0 and self.base != 1 and math.isfinite(self.base)):
            raise InvalidDist(f"log base must be positive and != 1, got {self.base!r}")

    def score(self, outcome: str, dist: BinaryDist) -> float:
        p = dist.prob(outcome)
        if p == 0.0:
            raise LogOfZero(f"log score undefined: outcome {outcome!r} has probability 0")
        if self.base == math.e:
            return math.log(p)
        return math.log(p) / math.log(self.base)

    def to_config(self) -> dict:
        return {"rule": "log", "base": self.base}


@dataclass(frozen=True)
class TableRule(ScoringRule):
    """Score affine in the believed p_h, one (intercept, slope) pair per report.

    score(h, q) = h_intercept + h_slope * q.p_h
    score(l, q) = l_intercept + l_slope * q.p_h

    Evaluates exactly at arbitrary posteriors, so a rule pinned down by four
    values at two distributions extends to the whole simplex.
    """

    h_intercept: float = 0.0
    h_slope: float = 0.0
    l_intercept: float = 0.0
    l_slope: float = 0.0
    strictly_proper: bool = False

    def score(self, outcome: str, dist: BinaryDist) -> float:
        if outcome == HIGH:
            return self.h_intercept + self.h_slope * dist.p_h
        if outcome == LOW:
            return self.l_intercept + self.l_slope * dist.p_h
        raise InvalidDist(f"unknown outcome {outcome!r}, expected one of {SIGNALS}")

    def to_config(self) -> dict:
        return {
            "rule": "table",
            "h": [self.h_intercept, self.h_slope],
            "l": [self.l_intercept, self.l_slope],
            "strictly_proper": self.strictly_proper,
        }


@dataclass(frozen=True)
class CallableRule(ScoringRule):
    """Wraps an arbitrary ``fn(outcome, dist) -> float`` evaluation contract."""

    fn: Callable[[str, BinaryDist], float]
    strictly_proper: bool = False

    def score(self, outcome: str, dist: BinaryDist) -> float:
        return float(self.fn(outcome, dist))

    def to_config(self) -> dict:
        raise TypeError("callable rules have no config form")


def rule_from_config(config: dict) -> ScoringRule:
    """Build a rule from ``{"rule": "brier"}`` or ``{"rule": "log", "base": b}``."""
    kind = config.get("rule")
    if kind == "brier":
        extra = set(config) - {"rule"}
        if extra:
            raise InvalidDist(f"unknown scoring-rule keys {sorted(extra)}")
        return BrierRule()
    if kind == "log":
        extra = set(config) - {"rule", "base"}
        if extra:
            raise InvalidDist(f"unknown scoring-rule keys {sorted(extra)}")
        return LogRule(base=float(config.get("base", math.e)))
    if kind == "table":
        extra = set(config) - {"rule", "h", "l", "strictly_proper"}
        if extra:
            raise InvalidDist(f"unknown scoring-rule keys {sorted(extra)}")
        h = config.get("h", [0.0, 0.0])
        l = config.get("l", [0.0, 0.0])
        return TableRule(float(h[0]), float(h[1]), float(l[0]), float(l[1]),
                         bool(config.get("strictly_proper", False)))
    raise InvalidDist(f"unknown scoring rule {kind!r}")


def score(rule: ScoringRule, outcome: str, dist: BinaryDist) -> float:
    """Score reporting ``dist`` when the realized outcome is ``outcome``."""
    return rule.score(outcome, dist)


def expected_score(rule: ScoringRule, p: BinaryDist, q: BinaryDist) -> float:
    """E_{s~p}[PS(s, q)], with the 0*log(0) = 0 convention on p's null outcomes."""
    total = 0.0
    for s in SIGNALS:
        w = p.prob(s)
        if w == 0.0:
            continue
        total += w * rule.score(s, q)
    return total


@dataclass(frozen=True)
class PropernessReport:
    proper: bool
    strict: bool
    worst_violation: float
    skipped_pairs: int


def verify_properness(rule: ScoringRule, grid_steps: int, tol: float = DEFAULT_TOL) -> PropernessReport:
    """Check the properness inequality on a uniform (p, q) grid.

    Proper requires E_{s~p}[PS(s,p)] >= E_{s~p}[PS(s,q)] for every grid pair;
    strict requires the inequality to exceed ``tol`` whenever p != q.  Grid
    pairs the rule cannot score (log rule on zero-probability boundary points)
    are skipped and counted.
    """
    if grid_steps < 2:
        raise ValueError(f"grid_steps must be >= 2, got {grid_steps}")
    points = [BinaryDist(i / (grid_steps - 1)) for i in range(grid_steps)]
    proper = True
    strict = True
    worst = -math.inf
    skipped = 0
    for p in points:
        try:
            own = expected_score(rule, p, p)
        except LogOfZero:
            skipped += len(points)
            continue
        for q in points:
            if q.p_h == p.p_h:
                continue
            try:
                other = expected_score(rule, p, q)
            except LogOfZero:
                skipped += 1
                continue
            violation = other - own
            worst = max(worst, violation)
            if violation > tol:
                proper = False
            if violation >= -tol:
                strict = False
    if worst == -math.inf:
        worst = 0.0
    return PropernessReport(proper=proper, strict=proper and strict, worst_violation=worst,
                            skipped_pairs=skipped)


@dataclass(frozen=True)
class GapReport:
    """The four scores at a prior's posteriors and the gaps between them.

    ``score_xy`` is the score of report x against the posterior held after
    reporting y, e.g. ``score_lh`` = PS(l, q_h).  ``gap_h``/``gap_l`` are the
    same-outcome cross-posterior gaps (positive for strictly proper rules and
    valid priors); ``spread`` is the largest spread among the four scores.
    """

    score_hh: float
    score_lh: float
    score_hl: float
    score_ll: float
    gap_h: float
    gap_l: float
    delta_h: float
    delta_l: float
    spread: float


def four_scores(rule: ScoringRule, prior: "BinaryPrior") -> tuple[float, float, float, float]:
    """(PS(h,q_h), PS(l,q_h), PS(h,q_l), PS(l,q_l)) for the prior's posteriors."""
    q_h = prior.posterior(HIGH)
    q_l = prior.posterior(LOW)
    return (
        rule.score(HIGH, q_h),
        rule.score(LOW, q_h),
        rule.score(HIGH, q_l),
        rule.score(LOW, q_l),
    )


def gap_report(rule: ScoringRule, prior: "BinaryPrior") -> GapReport:
    s_hh, s_lh, s_hl, s_ll = four_scores(rule, prior)
    gap_h = s_hh - s_hl
    gap_l = s_ll - s_lh
    scores = (s_hh, s_lh, s_hl, s_ll)
    return GapReport(
        score_hh=s_hh,
        score_lh=s_lh,
        score_hl=s_hl,
        score_ll=s_ll,
        gap_h=gap_h,
        gap_l=gap_l,
        delta_h=gap_h,
        delta_l=gap_l,
        spread=max(scores) - min(scores),
    )
