"""Peer prediction payoffs under coalition deviations.

Each of n agents holds a private binary signal drawn from a symmetric common
prior and reports one.  Agent i's reward against peer j is the proper score
of j's report evaluated under the posterior that i's *report* induces,

    reward_i(r_j) = PS(r_j, q_{r_i}),

and i's utility is the average reward over all n-1 peers (the derandomized
mechanism; expected utilities match the randomized-peer original).

A reporting strategy is a pair (beta_l, beta_h): the probability of
reporting h on a low / high signal.  Truthful reporting is (0, 1).
A deviation profile fixes strategies for a coalition; everyone else reports
truthfully.  Expected utilities are exact closed-form sums over the
(signal, report) lattice of each (i, peer) pair, grouped by peer role, so
cost scales with the number of distinct strategies rather than n.

The module also exposes the one-sided expected-reward forms f/g used in the
interim analysis, the constant Hessian of the self-play pair reward (whose
positive semidefiniteness drives the ex-ante threshold), and a seeded Monte
Carlo simulator for cross-checking the closed forms.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (
    IndexOutOfRange,
    InvalidSetting,
    InvalidStrategy,
    MissingWorldModel,
)
from .prior import BinaryPrior, WorldModel, induce_prior
from .scoring import HIGH, LOW, SIGNALS, ScoringRule, four_scores

#: Role marker for evaluating a non-deviator's utility.
TRUTHFUL = "truthful"


@dataclass(frozen=True)
class Strategy:
    """Probability of reporting h conditioned on a low / high signal."""

    beta_l: float
    beta_h: float

    def __post_init__(self):
        for name, value in (("beta_l", self.beta_l), ("beta_h", self.beta_h)):
            if not (isinstance(value, (int, float)) and math.isfinite(value)
                    and 0.0 <= value <= 1.0):
                raise InvalidStrategy(f"{name} must lie in [0, 1], got {value!r}")

    def report_prob(self, signal: str) -> float:
        """Probability of reporting h given the signal."""
        return self.beta_h if signal == HIGH else self.beta_l


TRUTHFUL_STRATEGY = Strategy(0.0, 1.0)
ALL_H = Strategy(1.0, 1.0)
ALL_L = Strategy(0.0, 0.0)
ALL_LIE = Strategy(1.0, 0.0)

#: The corner profiles that bind in the threshold analysis.
CANONICAL_DEVIATIONS = {"all_h": ALL_H, "all_l": ALL_L, "all_lie": ALL_LIE}


@dataclass(frozen=True)
class Setting:
    """Mechanism parameters: population size, prior, scoring rule.

    ``world_model`` is optional and only needed for simulation and for
    conditioning on more than one signal; when present it must induce the
    pairwise prior.
    """

    n: int
    prior: BinaryPrior
    rule: ScoringRule
    world_model: WorldModel | None = None

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 2):
            raise InvalidSetting(f"n must be an integer >= 2, got {self.n!r}")
        if self.world_model is not None:
            induced = induce_prior(self.world_model)
            if (abs(induced.p_h - self.prior.p_h) > 1e-9
                    or abs(induced.p_hh - self.prior.p_hh) > 1e-9):
                raise InvalidSetting("world model does not induce the given pairwise prior")


def make_setting(n: int, rule: ScoringRule, prior: BinaryPrior | None = None,
                 world_model: WorldModel | None = None) -> Setting:
    if prior is None:
        if world_model is None:
            raise InvalidSetting("need a prior or a world model")
        prior = induce_prior(world_model)
    return Setting(n=n, prior=prior, rule=rule, world_model=world_model)


@dataclass(frozen=True)
class DeviationProfile:
    """Strategies of the deviating coalition; all other agents are truthful."""

    deviators: tuple[Strategy, ...]

    def __post_init__(self):
        if len(self.deviators) < 1:
            raise InvalidSetting("a deviation profile needs at least one deviator")

    @property
    def k(self) -> int:
        return len(self.deviators)


def average_strategy(profile: DeviationProfile) -> Strategy:
    """Component-wise mean of the coalition's strategies."""
    k = profile.k
    return Strategy(
        beta_l=sum(s.beta_l for s in profile.deviators) / k,
        beta_h=sum(s.beta_h for s in profile.deviators) / k,
    )


def profile_to_dict(profile: DeviationProfile, n: int) -> dict:
    return {"n": n, "deviators": [{"bl": s.beta_l, "bh": s.beta_h} for s in profile.deviators]}


def profile_from_dict(data: dict) -> tuple[int, DeviationProfile]:
    extra = set(data) - {"n", "deviators"}
    if extra:
        raise InvalidSetting(f"unknown profile keys {sorted(extra)}")
    deviators = tuple(Strategy(float(d["bl"]), float(d["bh"])) for d in data["deviators"])
    return int(data["n"]), DeviationProfile(deviators)


@dataclass(frozen=True)
class _ScoreTable:
    """The four mechanism scores: s_<peer report><own report>."""

    s_hh: float
    s_lh: float
    s_hl: float
    s_ll: float

    def of(self, report_j: str, report_i: str) -> float:
        if report_i == HIGH:
            return self.s_hh if report_j == HIGH else self.s_lh
        return self.s_hl if report_j == HIGH else self.s_ll


def _score_table(setting: Setting) -> _ScoreTable:
    s_hh, s_lh, s_hl, s_ll = four_scores(setting.rule, setting.prior)
    return _ScoreTable(s_hh=s_hh, s_lh=s_lh, s_hl=s_hl, s_ll=s_ll)


def reward(setting: Setting, report_i: str, report_j: str) -> float:
    """Agent i's reward from comparison with peer j, given both reports."""
    return setting.rule.score(report_j, setting.prior.posterior(report_i))


def _pair_term_interim(prior: BinaryPrior, table: _ScoreTable,
                       own: Strategy, peer: Strategy, s_own: str) -> float:
    """E[reward] against one peer, conditioned on own signal."""
    p_own_h = own.report_prob(s_own)
    total = 0.0
    for s_j in SIGNALS:
        w_j = prior.cond(s_own, s_j)
        p_peer_h = peer.report_prob(s_j)
        high_part = p_peer_h * table.s_hh + (1.0 - p_peer_h) * table.s_lh
        low_part = p_peer_h * table.s_hl + (1.0 - p_peer_h) * table.s_ll
        total += w_j * (p_own_h * high_part + (1.0 - p_own_h) * low_part)
    return total


def _pair_term_ex_ante(prior: BinaryPrior, table: _ScoreTable,
                       own: Strategy, peer: Strategy) -> float:
    """E[reward] against one peer over the full 2x2x2x2 outcome lattice."""
    total = 0.0
    for s_i in SIGNALS:
        w_i = prior.marginal(s_i)
        p_own_h = own.report_prob(s_i)
        for r_i, p_ri in ((HIGH, p_own_h), (LOW, 1.0 - p_own_h)):
            if p_ri == 0.0:
                continue
            for s_j in SIGNALS:
                w_j = prior.cond(s_i, s_j)
                p_peer_h = peer.report_prob(s_j)
                for r_j, p_rj in ((HIGH, p_peer_h), (LOW, 1.0 - p_peer_h)):
                    total += w_i * p_ri * w_j * p_rj * table.of(r_j, r_i)
    return total


def _peer_roles(setting: Setting, profile: DeviationProfile,
                i: Union[int, str]) -> tuple[Strategy, list[tuple[int, Strategy]]]:
    """Own strategy and the (count, strategy) groups among the n-1 peers."""
    k = profile.k
    if k > setting.n:
        raise InvalidSetting(f"profile has {k} deviators but the setting has n={setting.n}")
    if i == TRUTHFUL:
        if k >= setting.n:
            raise IndexOutOfRange("no truthful agents exist when every agent deviates")
        own = TRUTHFUL_STRATEGY
        peer_counts = Counter(profile.deviators)
        truthful_peers = setting.n - k - 1
    elif isinstance(i, int) and 0 <= i < k:
        own = profile.deviators[i]
        peer_counts = Counter(profile.deviators)
        peer_counts[own] -= 1
        truthful_peers = setting.n - k
    else:
        raise IndexOutOfRange(f"agent index {i!r} not in profile of {k} deviators")
    roles = [(count, strat) for strat, count in peer_counts.items() if count > 0]
    if truthful_peers > 0:
        roles.append((truthful_peers, TRUTHFUL_STRATEGY))
    return own, roles


def ex_ante_utility(setting: Setting, profile: DeviationProfile, i: Union[int, str]) -> float:
    """Expected utility before the agent learns their signal.

    ``i`` is a deviator index, or ``TRUTHFUL`` for a non-deviator.
    """
    own, roles = _peer_roles(setting, profile, i)
    table = _score_table(setting)
    total = 0.0
    for count, strat in roles:
        total += count * _pair_term_ex_ante(setting.prior, table, own, strat)
    return total / (setting.n - 1)


def interim_utility(setting: Setting, profile: DeviationProfile, i: Union[int, str],
                    s: str) -> float:
    """Expected utility conditioned on the agent's signal being ``s``."""
    own, roles = _peer_roles(setting, profile, i)
    table = _score_table(setting)
    total = 0.0
    for count, strat in roles:
        total += count * _pair_term_interim(setting.prior, table, own, strat, s)
    return total / (setting.n - 1)


def truthful_ex_ante(setting: Setting) -> float:
    """Everyone truthful: the common ex-ante expected utility."""
    table = _score_table(setting)
    return _pair_term_ex_ante(setting.prior, table, TRUTHFUL_STRATEGY, TRUTHFUL_STRATEGY)


def truthful_interim(setting: Setting, s: str) -> float:
    """Everyone truthful: expected utility conditioned on own signal ``s``."""
    table = _score_table(setting)
    return _pair_term_interim(setting.prior, table, TRUTHFUL_STRATEGY, TRUTHFUL_STRATEGY, s)


def f_side(side: str, beta_own: float, peer: Strategy, setting: Setting) -> float:
    """Expected reward of an agent with signal ``side`` reporting h w.p. ``beta_own``.

    The peer plays ``peer``; the form is affine in ``beta_own`` and in each
    peer coordinate.
    """
    if not 0.0 <= beta_own <= 1.0:
        raise InvalidStrategy(f"beta_own must lie in [0, 1], got {beta_own!r}")
    table = _score_table(setting)
    prior = setting.prior
    p_peer_h = prior.cond(side, HIGH) * peer.beta_h + prior.cond(side, LOW) * peer.beta_l
    high_part = p_peer_h * table.s_hh + (1.0 - p_peer_h) * table.s_lh
    low_part = p_peer_h * table.s_hl + (1.0 - p_peer_h) * table.s_ll
    return beta_own * high_part + (1.0 - beta_own) * low_part


def g_side(side: str, sigma: Strategy, setting: Setting) -> float:
    """Diagonal of f: both agents play ``sigma`` and share the signal side."""
    return f_side(side, sigma.report_prob(side), sigma, setting)


def pair_self_reward(setting: Setting, sigma: Strategy) -> float:
    """Expected reward between two agents both playing ``sigma`` (ex ante).

    This is the quadratic form whose convexity bounds coalition averages;
    evaluated directly over the outcome lattice.
    """
    table = _score_table(setting)
    return _pair_term_ex_ante(setting.prior, table, sigma, sigma)


@dataclass(frozen=True)
class PairRewardHessian:
    """Constant Hessian of the self-play pair reward in (beta_l, beta_h)."""

    matrix: np.ndarray
    psd: bool

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "psd": self.psd}


def pair_reward_hessian(setting: Setting, tol: float = 1e-9) -> PairRewardHessian:
    """Closed-form Hessian of ``pair_self_reward`` and its PSD verdict.

    The Hessian factors as c * H0 with c the cross-posterior score surplus
    PS(h,q_h)+PS(l,q_l)-PS(h,q_l)-PS(l,q_h) and H0 built from the prior alone.
    PSD is decided by checking every principal minor (both diagonal entries
    and the determinant) against ``-tol``.
    """
    table = _score_table(setting)
    prior = setting.prior
    c = table.s_hh + table.s_ll - table.s_hl - table.s_lh
    off = prior.p_l * prior.p_hl + prior.p_h * prior.p_lh
    base = np.array([
        [2.0 * prior.p_l * prior.p_ll, off],
        [off, 2.0 * prior.p_h * prior.p_hh],
    ])
    matrix = c * base
    minors = (matrix[0, 0], matrix[1, 1], float(np.linalg.det(matrix)))
    psd = all(m >= -tol for m in minors)
    return PairRewardHessian(matrix=matrix, psd=psd)


_SIM_BLOCK = 4096


def simulate(setting: Setting, profile: DeviationProfile, trials: int, seed: int) -> dict:
    """Monte Carlo cross-check of the closed-form utilities.

    Samples signal vectors from the setting's world model, draws reports
    from the strategies, and pays every agent the average score against all
    n-1 peers.  Returns ``{role: {"mean", "stderr", "trials", "seed"}}`` with
    one role per deviator index plus ``"truthful"`` (when any non-deviator
    exists).  Deterministic for a fixed seed: trials are split into fixed
    blocks with one spawned random stream each, so results do not depend on
    execution order or parallelism.
    """
    if setting.world_model is None:
        raise MissingWorldModel(
            "simulation needs a world model; a pairwise prior does not determine "
            "an n-agent sampler")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    k = profile.k
    n = setting.n
    if k > n:
        raise InvalidSetting(f"profile has {k} deviators but the setting has n={n}")
    table = _score_table(setting)
    wm = setting.world_model

    beta_l = np.array([s.beta_l for s in profile.deviators] + [0.0] * (n - k))
    beta_h = np.array([s.beta_h for s in profile.deviators] + [1.0] * (n - k))

    n_blocks = (trials + _SIM_BLOCK - 1) // _SIM_BLOCK
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    per_trial: list[np.ndarray] = []
    done = 0
    for block, stream in enumerate(streams):
        size = min(_SIM_BLOCK, trials - done)
        done += size
        rng = np.random.default_rng(stream)
        state_one = rng.random(size) >= wm.p_state[0]
        p_h_sig = np.where(state_one, wm.p_h_given_state[1], wm.p_h_given_state[0])
        signals_h = rng.random((size, n)) < p_h_sig[:, None]
        prob_report_h = np.where(signals_h, beta_h[None, :], beta_l[None, :])
        reports_h = rng.random((size, n)) < prob_report_h
        high_reports = reports_h.sum(axis=1)

        own_high = reports_h
        s_for_high_peer = np.where(own_high, table.s_hh, table.s_hl)
        s_for_low_peer = np.where(own_high, table.s_lh, table.s_ll)
        peers_high = high_reports[:, None] - own_high
        peers_low = (n - high_reports[:, None]) - (~own_high)
        payoffs = (peers_high * s_for_high_peer + peers_low * s_for_low_peer) / (n - 1)
        per_trial.append(payoffs)

    payoffs = np.concatenate(per_trial, axis=0)
    out: dict[str, dict] = {}

    def _stats(values: np.ndarray) -> dict:
        if len(values) == 1 or np.ptp(values) == 0.0:
            return {"mean": float(values[0]), "stderr": 0.0, "trials": trials, "seed": seed}
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(len(values)))
        return {"mean": mean, "stderr": stderr, "trials": trials, "seed": seed}

    for idx in range(k):
        out[f"deviator_{idx}"] = _stats(payoffs[:, idx])
    if n - k > 0:
        out["truthful"] = _stats(payoffs[:, k:].mean(axis=1))
    return out
