"""Closed-form collusion thresholds and canonical-deviation dichotomy checks.

For the peer prediction mechanism, truthful reporting survives coalitions up
to an exactly computable size, and fails beyond it:

* ex-ante concept: deviators compare expected utilities before learning
  their signals.  The binding deviations are the corner profiles where the
  whole coalition reports h (or l); the side threshold is

      k_h = floor((n-1) * E_l / d_h) + 1      if d_h > 0 else n,

  with E_l the truthful-vs-corner score loss against outsiders,
  E_l = E_{s~q_l}[PS(s,q_l) - PS(s,q_h)], and d_h = PS(h,q_h) - PS(l,q_h)
  the per-deviator reward surplus inside the coalition; symmetrically for
  k_l; the overall threshold is min(k_h, k_l, n).

* interim (per-type) concept: the same comparison conditioned on each
  signal; the inside surplus is discounted by the chance the signal already
  matches the corner report, giving

      k_h = ceil((n-1) * E_l / (Pr(l|l) * d_h))  if d_h > 0 else n.

``n_zero`` returns the population size beyond which the interim threshold
is exact against arbitrary (asymmetric) coalition strategies, and
``liar_threshold`` the corner threshold of the always-lie profile, which
never undercuts the ex-ante threshold.

``dichotomy_check`` evaluates a canonical deviation against the letter of
the equilibrium definitions via exact mechanism utilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidSetting, NoFiniteN
from .mechanism import (
    CANONICAL_DEVIATIONS,
    DeviationProfile,
    Setting,
    _score_table,
    ex_ante_utility,
    interim_utility,
    truthful_ex_ante,
    truthful_interim,
)
from .prior import BinaryPrior
from .scoring import DEFAULT_TOL, HIGH, LOW, ScoringRule

EX_ANTE = "ex_ante"
BAYESIAN = "bayesian"
CONCEPTS = (EX_ANTE, BAYESIAN)


def _snap(x: float, tol: float) -> float:
    """Pull values within ``tol`` of an integer onto it before floor/ceil."""
    nearest = round(x)
    return float(nearest) if abs(x - nearest) <= tol else x


@dataclass(frozen=True)
class ThresholdReport:
    """One concept's thresholds plus the raw quantities that produced them.

    ``k_h``/``k_l`` are the side thresholds; an infinite side (non-positive
    denominator: that corner deviation never profits) is flagged and carries
    the value n, so it contributes n to the min.  ``ratio_h``/``ratio_l``
    are the n-free numerator/denominator ratios (None on infinite sides).
    """

    concept: str
    n: int
    k_h: int
    k_l: int
    k: int
    k_h_infinite: bool
    k_l_infinite: bool
    numerator_h: float
    denominator_h: float
    numerator_l: float
    denominator_l: float
    ratio_h: float | None
    ratio_l: float | None

    def to_dict(self) -> dict:
        return {
            "concept": self.concept,
            "n": self.n,
            "k_h": self.k_h,
            "k_l": self.k_l,
            "k": self.k,
            "k_h_infinite": self.k_h_infinite,
            "k_l_infinite": self.k_l_infinite,
            "numerator_h": self.numerator_h,
            "denominator_h": self.denominator_h,
            "numerator_l": self.numerator_l,
            "denominator_l": self.denominator_l,
            "ratio_h": self.ratio_h,
            "ratio_l": self.ratio_l,
        }

    @staticmethod
    def from_dict(data: dict) -> "ThresholdReport":
        return ThresholdReport(**data)


def _gaps(setting: Setting) -> tuple[float, float, float, float]:
    """(E_l, E_h, d_h, d_l): outsider losses and corner reward surpluses."""
    t = _score_table(setting)
    prior = setting.prior
    e_l = prior.p_hl * (t.s_hl - t.s_hh) + prior.p_ll * (t.s_ll - t.s_lh)
    e_h = prior.p_hh * (t.s_hh - t.s_hl) + prior.p_lh * (t.s_lh - t.s_ll)
    d_h = t.s_hh - t.s_lh
    d_l = t.s_ll - t.s_hl
    return e_l, e_h, d_h, d_l


def k_ex_ante(setting: Setting, tol: float = DEFAULT_TOL) -> ThresholdReport:
    """Largest coalition size for which truthful reporting survives ex ante."""
    e_l, e_h, d_h, d_l = _gaps(setting)
    n = setting.n

    def side(num: float, den: float) -> tuple[int, bool, float | None]:
        if den <= tol:
            return n, True, None
        ratio = num / den
        k = int(math.floor(_snap((n - 1) * ratio, tol))) + 1
        return max(1, k), False, ratio

    k_h, inf_h, ratio_h = side(e_l, d_h)
    k_l, inf_l, ratio_l = side(e_h, d_l)
    return ThresholdReport(
        concept=EX_ANTE, n=n,
        k_h=k_h, k_l=k_l, k=min(k_h, k_l, n),
        k_h_infinite=inf_h, k_l_infinite=inf_l,
        numerator_h=e_l, denominator_h=d_h,
        numerator_l=e_h, denominator_l=d_l,
        ratio_h=ratio_h, ratio_l=ratio_l,
    )


def k_bayesian(setting: Setting, tol: float = DEFAULT_TOL) -> ThresholdReport:
    """Largest coalition size for which truthful reporting survives per type."""
    e_l, e_h, d_h, d_l = _gaps(setting)
    prior = setting.prior
    n = setting.n

    def side(num: float, den: float) -> tuple[int, bool, float | None]:
        if den <= tol:
            return n, True, None
        ratio = num / den
        k = int(math.ceil(_snap((n - 1) * ratio, tol)))
        return max(1, k), False, ratio

    k_h, inf_h, ratio_h = side(e_l, prior.p_ll * d_h)
    k_l, inf_l, ratio_l = side(e_h, prior.p_hh * d_l)
    return ThresholdReport(
        concept=BAYESIAN, n=n,
        k_h=k_h, k_l=k_l, k=min(k_h, k_l, n),
        k_h_infinite=inf_h, k_l_infinite=inf_l,
        numerator_h=e_l, denominator_h=prior.p_ll * d_h,
        numerator_l=e_h, denominator_l=prior.p_hh * d_l,
        ratio_h=ratio_h, ratio_l=ratio_l,
    )


def n_zero(prior: BinaryPrior, rule: ScoringRule, tol: float = DEFAULT_TOL) -> int:
    """Smallest n >= 2 at which the interim threshold covers asymmetric play.

    Six conditions must hold, all monotone in n because the driving
    quantities b_h and b_l scale as 1/(n-1):

        b_h = 4*spread*(D + PS(l,q_l) - PS(h,q_l)) / ((n-1) * D * E_h)
        b_l = 4*spread*(D + PS(h,q_h) - PS(l,q_h)) / ((n-1) * D * E_l)

    with D the sum of the two cross-posterior gaps and spread the largest
    difference among the four scores.  Conditions: each b below 1/4, below
    its side's corner surplus over D when that surplus is positive, and
    below its side's outsider loss over (posterior * D).
    """
    from .mechanism import make_setting  # local import to keep module load light

    setting = make_setting(2, rule, prior=prior)
    t = _score_table(setting)
    e_l, e_h, d_h, d_l = _gaps(setting)
    big_d = (t.s_hh - t.s_hl) + (t.s_ll - t.s_lh)
    spread = max(t.s_hh, t.s_lh, t.s_hl, t.s_ll) - min(t.s_hh, t.s_lh, t.s_hl, t.s_ll)
    if big_d <= tol or e_h <= tol or e_l <= tol:
        raise NoFiniteN(
            "a required positive quantity is non-positive; the rule is not "
            "strictly proper on this prior")

    c_h = 4.0 * spread * (big_d + t.s_ll - t.s_hl) / (big_d * e_h)
    c_l = 4.0 * spread * (big_d + t.s_hh - t.s_lh) / (big_d * e_l)

    def conditions(n: int) -> bool:
        b_h = c_h / (n - 1)
        b_l = c_l / (n - 1)
        if not (b_h < 0.25 - tol and b_l < 0.25 - tol):
            return False
        if d_h > tol and not b_h <= d_h / big_d + tol:
            return False
        if not b_h <= e_h / (prior.p_hh * big_d) + tol:
            return False
        if d_l > tol and not b_l <= d_l / big_d + tol:
            return False
        if not b_l <= e_l / (prior.p_ll * big_d) + tol:
            return False
        return True

    lo, hi = 2, 2
    while not conditions(hi):
        hi *= 2
        if hi > 2 ** 62:
            raise NoFiniteN("no finite n satisfies the interim conditions")
    while lo < hi:
        mid = (lo + hi) // 2
        if conditions(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def liar_threshold(setting: Setting, tol: float = DEFAULT_TOL):
    """Corner threshold of the always-lie profile; ``math.inf`` when it never profits.

    The outsider loss of a lying coalition mixes both sides' losses by the
    marginal; its inside surplus mixes the two corner surpluses weighted by
    how informative each signal is.  Deviating profits only beyond

        k' = floor((n-1) * num / den) + 1,

    which never undercuts the ex-ante threshold.
    """
    e_l, e_h, d_h, d_l = _gaps(setting)
    prior = setting.prior
    num = prior.p_h * e_h + prior.p_l * e_l
    den = (prior.p_h * (prior.p_hh - prior.p_lh) * d_l
           + prior.p_l * (prior.p_ll - prior.p_hl) * d_h)
    if den <= tol:
        return math.inf
    k = int(math.floor(_snap((setting.n - 1) * num / den, tol))) + 1
    return max(1, k)


@dataclass(frozen=True)
class DichotomyVerdict:
    """Outcome of testing one canonical deviation against one concept.

    ``deltas`` holds per-member utility changes: floats for the ex-ante
    concept, (low, high) per-type pairs for the interim concept.  Success
    means every delta is at least -tol and at least one exceeds +tol.
    """

    concept: str
    k: int
    deviation_tested: str
    succeeded: bool
    deltas: tuple

    def to_dict(self) -> dict:
        return {
            "concept": self.concept,
            "k": self.k,
            "deviation_tested": self.deviation_tested,
            "succeeded": self.succeeded,
            "deltas": [list(d) if isinstance(d, tuple) else d for d in self.deltas],
        }

    @staticmethod
    def from_dict(data: dict) -> "DichotomyVerdict":
        deltas = tuple(tuple(d) if isinstance(d, list) else d for d in data["deltas"])
        return DichotomyVerdict(
            concept=data["concept"], k=data["k"],
            deviation_tested=data["deviation_tested"],
            succeeded=data["succeeded"], deltas=deltas)


def deltas_succeed(deltas: tuple, tol: float) -> bool:
    """The definitions' success test: no member loses, someone strictly gains."""
    flat: list[float] = []
    for d in deltas:
        if isinstance(d, tuple):
            flat.extend(d)
        else:
            flat.append(d)
    return all(d >= -tol for d in flat) and any(d > tol for d in flat)


def dichotomy_check(setting: Setting, k: int, deviation: str, concept: str,
                    tol: float = DEFAULT_TOL) -> DichotomyVerdict:
    """Test whether k coalition members playing a named corner profile succeed."""
    if deviation not in CANONICAL_DEVIATIONS:
        raise InvalidSetting(
            f"unknown deviation {deviation!r}, expected one of {sorted(CANONICAL_DEVIATIONS)}")
    if concept not in CONCEPTS:
        raise InvalidSetting(f"unknown concept {concept!r}, expected one of {CONCEPTS}")
    if not 1 <= k <= setting.n:
        raise InvalidSetting(f"k must lie in [1, n], got {k}")
    strategy = CANONICAL_DEVIATIONS[deviation]
    profile = DeviationProfile((strategy,) * k)
    if concept == EX_ANTE:
        base = truthful_ex_ante(setting)
        delta = ex_ante_utility(setting, profile, 0) - base
        deltas: tuple = (delta,) * k
    else:
        base_l = truthful_interim(setting, LOW)
        base_h = truthful_interim(setting, HIGH)
        delta_l = interim_utility(setting, profile, 0, LOW) - base_l
        delta_h = interim_utility(setting, profile, 0, HIGH) - base_h
        deltas = ((delta_l, delta_h),) * k
    return DichotomyVerdict(
        concept=concept, k=k, deviation_tested=deviation,
        succeeded=deltas_succeed(deltas, tol), deltas=deltas)
