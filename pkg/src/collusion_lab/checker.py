"""Finite Bayesian games and coalition-deviation falsifiers.

A ``FiniteBayesianGame`` stores the full joint prior over type vectors and
one utility table per agent, so ex-ante, per-type (interim), and
coalition-conditioned expected utilities are exact finite sums.  On top of
that sit:

* ``find_deviation``: searches coalitions of bounded size and replacement
  strategies drawn from a per-type probability grid (plus all pure
  strategies) for a profile that makes every member weakly better off and
  someone strictly better off, either ex ante or type by type.  A ``None``
  result is a falsification failure at the stated resolution, NOT a proof
  of equilibrium.
* ``verify_certificate``: recomputes every delta of a certificate from
  scratch and re-checks the concept's conditions, independent of how the
  certificate was found.
* ``bne_check``: single-agent best-response check; interim utility is
  affine in the agent's own per-type mixture, so comparing against pure
  action replacements is sufficient.
* ``interim_D_deviation``: the known-types coalition deviation against
  truthful peer prediction, where members pool their signals, condition on
  the full coalition type vector, and coordinate on a single report.

Peer prediction settings bridge into this module two ways: small instances
encode exactly as ``FiniteBayesianGame`` (``peer_prediction_game``), and
``find_setting_deviation`` runs the same falsifier semantics at any n using
the mechanism's closed forms, searching symmetric coalition strategies
(the corner profiles that drive the thresholds are symmetric).
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from functools import reduce
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    InvalidGame,
    InvalidSetting,
    ZeroLikelihood,
)
from .mechanism import (
    DeviationProfile,
    Setting,
    Strategy,
    _score_table,
    ex_ante_utility,
    interim_utility,
    truthful_ex_ante,
    truthful_interim,
)
from .prior import WorldModel, coalition_posterior, world_model_for_prior
from .scoring import DEFAULT_TOL, HIGH, LOW, ScoringRule

EX_ANTE = "ex_ante"
BAYESIAN = "bayesian"
INTERIM_D = "interim_D"

_PROB_TOL = 1e-12
DEFAULT_BUDGET = 10_000_000


@dataclass(frozen=True)
class FiniteBayesianGame:
    """n agents, enumerated type/action sets, joint prior, utility tables.

    ``prior`` has one axis per agent (types); ``utilities[i]`` has shape
    (|S_i|, |A_1|, ..., |A_n|): agent i's payoff given own type and the
    full action vector.
    """

    n: int
    type_sets: tuple[tuple[str, ...], ...]
    action_sets: tuple[tuple[str, ...], ...]
    prior: np.ndarray
    utilities: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.n < 1 or len(self.type_sets) != self.n or len(self.action_sets) != self.n:
            raise InvalidGame("type/action sets must list one set per agent")
        t_shape = tuple(len(ts) for ts in self.type_sets)
        a_shape = tuple(len(a) for a in self.action_sets)
        if any(s == 0 for s in t_shape) or any(s == 0 for s in a_shape):
            raise InvalidGame("empty type or action set")
        if self.prior.shape != t_shape:
            raise InvalidGame(f"prior shape {self.prior.shape} != type shape {t_shape}")
        if np.any(self.prior < -_PROB_TOL) or abs(float(self.prior.sum()) - 1.0) > _PROB_TOL:
            raise InvalidGame("prior must be a probability table summing to 1")
        if len(self.utilities) != self.n:
            raise InvalidGame("need one utility table per agent")
        for i, v in enumerate(self.utilities):
            if v.shape != (t_shape[i],) + a_shape:
                raise InvalidGame(
                    f"utility table {i} has shape {v.shape}, expected {(t_shape[i],) + a_shape}")
        for i in range(self.n):
            if np.any(self.type_marginal(i) <= 0.0):
                raise InvalidGame(f"every type of agent {i} must have positive prior probability")

    def type_marginal(self, i: int) -> np.ndarray:
        axes = tuple(j for j in range(self.n) if j != i)
        return self.prior.sum(axis=axes)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "types": [list(ts) for ts in self.type_sets],
            "actions": [list(a) for a in self.action_sets],
            "prior": self.prior.tolist(),
            "utilities": [v.tolist() for v in self.utilities],
        }

    @staticmethod
    def from_dict(data: dict) -> "FiniteBayesianGame":
        extra = set(data) - {"n", "types", "actions", "prior", "utilities"}
        if extra:
            raise InvalidGame(f"unknown game keys {sorted(extra)}")
        return FiniteBayesianGame(
            n=int(data["n"]),
            type_sets=tuple(tuple(ts) for ts in data["types"]),
            action_sets=tuple(tuple(a) for a in data["actions"]),
            prior=np.asarray(data["prior"], dtype=float),
            utilities=tuple(np.asarray(v, dtype=float) for v in data["utilities"]),
        )


@dataclass(frozen=True)
class MixedProfile:
    """Per agent, per type: a distribution over that agent's actions."""

    strategies: tuple[np.ndarray, ...]

    def __post_init__(self):
        for i, m in enumerate(self.strategies):
            if m.ndim != 2:
                raise DimensionMismatch(f"strategy {i} must be a (types x actions) matrix")
            if np.any(m < -_PROB_TOL) or np.any(np.abs(m.sum(axis=1) - 1.0) > _PROB_TOL):
                raise DimensionMismatch(f"strategy rows of agent {i} must sum to 1")

    def replace(self, assignments: dict[int, np.ndarray]) -> "MixedProfile":
        new = list(self.strategies)
        for j, m in assignments.items():
            new[j] = m
        return MixedProfile(tuple(new))

    def to_dict(self) -> dict:
        return {"strategies": [m.tolist() for m in self.strategies]}

    @staticmethod
    def from_dict(data: dict) -> "MixedProfile":
        return MixedProfile(tuple(np.asarray(m, dtype=float) for m in data["strategies"]))


def _check_profile(game: FiniteBayesianGame, profile: MixedProfile) -> None:
    if len(profile.strategies) != game.n:
        raise DimensionMismatch(
            f"profile has {len(profile.strategies)} strategies for an {game.n}-agent game")
    for i, m in enumerate(profile.strategies):
        expected = (len(game.type_sets[i]), len(game.action_sets[i]))
        if m.shape != expected:
            raise DimensionMismatch(f"strategy {i} has shape {m.shape}, expected {expected}")


def truthful_profile(game: FiniteBayesianGame) -> MixedProfile:
    """Identity reporting; requires each agent's action set to mirror its type set."""
    mats = []
    for i in range(game.n):
        if game.type_sets[i] != game.action_sets[i]:
            raise InvalidGame(f"agent {i} cannot report types: action set differs from type set")
        mats.append(np.eye(len(game.type_sets[i])))
    return MixedProfile(tuple(mats))


def _utility(game: FiniteBayesianGame, profile: MixedProfile, i: int,
             condition: dict[int, int] | None = None) -> float:
    """Exact expected utility of agent i, optionally conditioned on some types.

    ``condition`` maps agent index to a fixed type index; ex-ante when empty.
    When conditioning, agent i must be among the conditioned agents or not;
    both are supported (i's own expectation integrates its type if free).
    """
    _check_profile(game, profile)
    if not 0 <= i < game.n:
        raise DimensionMismatch(f"agent index {i} out of range for n={game.n}")
    condition = condition or {}
    n = game.n
    letters = string.ascii_letters
    t = letters[:n]
    a = letters[n:2 * n]

    idx = tuple(condition.get(j, slice(None)) for j in range(n))
    prior_c = game.prior[idx]
    denom = float(prior_c.sum())
    if denom <= 0.0:
        raise ZeroLikelihood("conditioning event has probability 0")

    operands: list[np.ndarray] = [prior_c]
    subs: list[str] = ["".join(t[j] for j in range(n) if j not in condition)]
    for j in range(n):
        m = profile.strategies[j]
        if j in condition:
            operands.append(m[condition[j]])
            subs.append(a[j])
        else:
            operands.append(m)
            subs.append(t[j] + a[j])
    v = game.utilities[i]
    if i in condition:
        operands.append(v[condition[i]])
        subs.append("".join(a))
    else:
        operands.append(v)
        subs.append(t[i] + "".join(a))
    expr = ",".join(subs) + "->"
    return float(np.einsum(expr, *operands, optimize=True)) / denom


def game_ex_ante_utility(game: FiniteBayesianGame, profile: MixedProfile, i: int) -> float:
    """E over types and actions of agent i's utility."""
    return _utility(game, profile, i)


def game_interim_utility(game: FiniteBayesianGame, profile: MixedProfile, i: int,
                         s_i: int) -> float:
    """Expected utility of agent i conditioned on own type index ``s_i``."""
    if not 0 <= s_i < len(game.type_sets[i]):
        raise DimensionMismatch(f"type index {s_i} out of range for agent {i}")
    return _utility(game, profile, i, {i: s_i})


def game_interim_D_utility(game: FiniteBayesianGame, profile: MixedProfile, i: int,
                           s_D: dict[int, int]) -> float:
    """Expected utility of member i conditioned on the whole coalition's types."""
    if i not in s_D:
        raise DimensionMismatch("member must be part of the conditioned coalition")
    return _utility(game, profile, i, dict(s_D))


def is_symmetric_game(game: FiniteBayesianGame, atol: float = 1e-12) -> bool:
    """Exchangeability under adjacent agent transpositions (hence all of S_n)."""
    if game.n == 1:
        return True
    if len(set(game.type_sets)) != 1 or len(set(game.action_sets)) != 1:
        return False
    for j in range(game.n - 1):
        if not np.allclose(game.prior, np.swapaxes(game.prior, j, j + 1), atol=atol):
            return False
        for i in range(game.n):
            v = game.utilities[i]
            if i == j:
                if not np.allclose(v, np.swapaxes(game.utilities[j + 1], 1 + j, 2 + j), atol=atol):
                    return False
            elif i != j + 1:
                if not np.allclose(v, np.swapaxes(v, 1 + j, 2 + j), atol=atol):
                    return False
    return True


def _profile_symmetric(profile: MixedProfile, atol: float = 1e-12) -> bool:
    first = profile.strategies[0]
    return all(m.shape == first.shape and np.allclose(m, first, atol=atol)
               for m in profile.strategies[1:])


def _dist_grid(n_actions: int, grid_steps: int) -> list[tuple[float, ...]]:
    """Pure action distributions first, then the uniform simplex grid."""
    pures = []
    for j in range(n_actions):
        v = [0.0] * n_actions
        v[j] = 1.0
        pures.append(tuple(v))
    denom = grid_steps - 1
    grid = []
    for combo in itertools.combinations_with_replacement(range(n_actions), denom):
        counts = [0] * n_actions
        for c in combo:
            counts[c] += 1
        point = tuple(c / denom for c in counts)
        if point not in pures and point not in grid:
            grid.append(point)
    return pures + sorted(grid)


def _member_strategies(game: FiniteBayesianGame, j: int, grid_steps: int) -> list[np.ndarray]:
    """All per-type grid strategies for agent j, pure combinations first."""
    per_type = _dist_grid(len(game.action_sets[j]), grid_steps)
    n_types = len(game.type_sets[j])
    out = []
    for rows in itertools.product(per_type, repeat=n_types):
        out.append(np.array(rows))
    return out


@dataclass(frozen=True)
class DeviationCertificate:
    """A coalition, replacement strategies, and verified utility deltas.

    ``strategies`` holds one (per-type action distribution) tuple per member.
    ``deltas``: floats per member (ex_ante, interim_D) or per-type tuples per
    member (bayesian).  ``conditioning_types`` is the type vector the
    interim_D concept conditions on, None otherwise.
    """

    concept: str
    coalition: tuple[int, ...]
    strategies: tuple[tuple[tuple[float, ...], ...], ...]
    deltas: tuple
    tolerance: float
    conditioning_types: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "concept": self.concept,
            "coalition": list(self.coalition),
            "strategies": [[list(row) for row in member] for member in self.strategies],
            "deltas": [list(d) if isinstance(d, tuple) else d for d in self.deltas],
            "tolerance": self.tolerance,
            "conditioning_types": (None if self.conditioning_types is None
                                   else list(self.conditioning_types)),
        }

    @staticmethod
    def from_dict(data: dict) -> "DeviationCertificate":
        extra = set(data) - {"concept", "coalition", "strategies", "deltas",
                             "tolerance", "conditioning_types"}
        if extra:
            raise DimensionMismatch(f"unknown certificate keys {sorted(extra)}")
        deltas = tuple(tuple(float(x) for x in d) if isinstance(d, list) else float(d)
                       for d in data["deltas"])
        cond = data.get("conditioning_types")
        return DeviationCertificate(
            concept=data["concept"],
            coalition=tuple(int(x) for x in data["coalition"]),
            strategies=tuple(tuple(tuple(float(x) for x in row) for row in member)
                             for member in data["strategies"]),
            deltas=deltas,
            tolerance=float(data["tolerance"]),
            conditioning_types=None if cond is None else tuple(int(x) for x in cond),
        )


def _conditions_hold(concept: str, deltas: Sequence, tol: float) -> bool:
    if concept == INTERIM_D:
        return all(d > tol for d in deltas)
    flat: list[float] = []
    for d in deltas:
        if isinstance(d, tuple):
            flat.extend(d)
        else:
            flat.append(d)
    return all(d >= -tol for d in flat) and any(d > tol for d in flat)


class _CoalitionEvaluator:
    """Per-coalition reduced tensors: one full-lattice pass, cheap per candidate.

    For member i, T_i[t_D..., a_D...] (axes interleaved per member in
    coalition order) sums the prior times non-member play times utility over
    everything outside the coalition.  Each candidate assignment then only
    contracts T_i with the members' strategy matrices.
    """

    def __init__(self, game: FiniteBayesianGame, profile: MixedProfile,
                 coalition: tuple[int, ...]):
        self.game = game
        self.coalition = coalition
        n = game.n
        letters = string.ascii_letters
        t = letters[:n]
        a = letters[n:2 * n]
        out = "".join(t[c] + a[c] for c in coalition)
        self.tensors = []
        for i in coalition:
            operands = [game.prior]
            subs = [t[:n]]
            for j in range(n):
                if j in coalition:
                    continue
                operands.append(profile.strategies[j])
                subs.append(t[j] + a[j])
            operands.append(game.utilities[i])
            subs.append(t[i] + a)
            expr = ",".join(subs) + "->" + out
            self.tensors.append(np.einsum(expr, *operands, optimize=True))
        self.marginals = [game.type_marginal(i) for i in coalition]

    def _weight(self, assignment: Sequence[np.ndarray]) -> np.ndarray:
        return reduce(np.multiply.outer, assignment)

    def ex_ante(self, assignment: Sequence[np.ndarray]) -> list[float]:
        w = self._weight(assignment)
        return [float((tensor * w).sum()) for tensor in self.tensors]

    def interim(self, assignment: Sequence[np.ndarray]) -> list[tuple[float, ...]]:
        w = self._weight(assignment)
        out = []
        for pos, tensor in enumerate(self.tensors):
            axis = 2 * pos
            per_type = []
            for v in range(tensor.shape[axis]):
                sliced = (np.take(tensor, v, axis=axis) * np.take(w, v, axis=axis)).sum()
                per_type.append(float(sliced) / float(self.marginals[pos][v]))
            out.append(tuple(per_type))
        return out


def find_deviation(game: FiniteBayesianGame, profile: MixedProfile, k: int, concept: str,
                   grid_steps: int = 11, budget: int = DEFAULT_BUDGET,
                   tol: float = DEFAULT_TOL,
                   symmetric: bool | None = None) -> Optional[DeviationCertificate]:
    """Search coalitions of size <= k for a successful deviation from ``profile``.

    Enumerates coalition sizes in ascending order.  For exchangeable games
    with a symmetric base profile, coalitions collapse to sizes and member
    assignments to strategy multisets; symmetric assignments (everyone plays
    the same grid strategy) are tried before asymmetric ones.  Raises
    BudgetExceeded once the number of utility evaluations passes ``budget``.
    """
    _check_profile(game, profile)
    if not 1 <= k <= game.n:
        raise DimensionMismatch(f"k must lie in [1, n], got {k}")
    if grid_steps < 2:
        raise ValueError(f"grid_steps must be >= 2, got {grid_steps}")
    if concept not in (EX_ANTE, BAYESIAN):
        raise ValueError(f"unknown concept {concept!r}")
    if symmetric is None:
        symmetric = is_symmetric_game(game) and _profile_symmetric(profile)

    strategy_lists = [_member_strategies(game, j, grid_steps) for j in range(game.n)]
    nodes = 0

    base_ex: dict[int, float] = {}
    base_in: dict[int, tuple[float, ...]] = {}
    for i in range(game.n):
        if concept == EX_ANTE:
            base_ex[i] = _utility(game, profile, i)
        else:
            base_in[i] = tuple(
                _utility(game, profile, i, {i: v}) for v in range(len(game.type_sets[i])))

    def evaluate(ev: _CoalitionEvaluator, coalition: tuple[int, ...],
                 assignment: tuple[np.ndarray, ...]) -> Optional[DeviationCertificate]:
        nonlocal nodes
        if all(np.allclose(assignment[p], profile.strategies[c], atol=1e-12)
               for p, c in enumerate(coalition)):
            return None
        if concept == EX_ANTE:
            nodes += len(coalition)
            if nodes > budget:
                raise BudgetExceeded(nodes)
            new = ev.ex_ante(assignment)
            deltas: tuple = tuple(new[p] - base_ex[coalition[p]] for p in range(len(coalition)))
        else:
            nodes += sum(len(game.type_sets[c]) for c in coalition)
            if nodes > budget:
                raise BudgetExceeded(nodes)
            new_t = ev.interim(assignment)
            deltas = tuple(
                tuple(new_t[p][v] - base_in[coalition[p]][v] for v in range(len(new_t[p])))
                for p in range(len(coalition)))
        if _conditions_hold(concept, deltas, tol):
            return DeviationCertificate(
                concept=concept, coalition=coalition,
                strategies=tuple(tuple(tuple(float(x) for x in row) for row in m)
                                 for m in assignment),
                deltas=deltas, tolerance=tol)
        return None

    for size in range(1, k + 1):
        if symmetric:
            coalitions = [tuple(range(size))]
        else:
            coalitions = list(itertools.combinations(range(game.n), size))
        for coalition in coalitions:
            ev = _CoalitionEvaluator(game, profile, coalition)
            nodes += len(coalition)  # tensor-build pass, roughly one eval per member
            first = coalition[0]
            same_space = all(
                game.type_sets[c] == game.type_sets[first]
                and game.action_sets[c] == game.action_sets[first]
                for c in coalition)
            if same_space:
                # symmetric assignments first: members share one grid strategy
                shared = strategy_lists[first]
                for strat in shared:
                    cert = evaluate(ev, coalition, (strat,) * size)
                    if cert is not None:
                        return cert
            if size == 1:
                continue
            if symmetric:
                shared = strategy_lists[first]
                combos = itertools.combinations_with_replacement(range(len(shared)), size)
                for combo in combos:
                    if len(set(combo)) == 1:
                        continue  # symmetric, already tried
                    assignment = tuple(shared[ix] for ix in combo)
                    cert = evaluate(ev, coalition, assignment)
                    if cert is not None:
                        return cert
            else:
                pools = [range(len(strategy_lists[c])) for c in coalition]
                for combo in itertools.product(*pools):
                    if same_space and len(set(combo)) == 1:
                        continue  # symmetric assignment, already tried above
                    assignment = tuple(strategy_lists[c][ix] for c, ix in zip(coalition, combo))
                    cert = evaluate(ev, coalition, assignment)
                    if cert is not None:
                        return cert
    return None


def verify_certificate(game: FiniteBayesianGame, profile: MixedProfile,
                       cert: DeviationCertificate, tol: float | None = None) -> bool:
    """Recompute every delta from scratch and re-check the concept's conditions.

    Also requires the recomputed deltas to match the certificate's stored
    deltas within 1e-9, so a tampered certificate fails.
    """
    _check_profile(game, profile)
    tol = cert.tolerance if tol is None else tol
    k = len(cert.coalition)
    if k == 0 or len(cert.strategies) != k:
        raise DimensionMismatch("certificate coalition and strategies must align")
    assignments = {}
    for pos, agent in enumerate(cert.coalition):
        m = np.array(cert.strategies[pos], dtype=float)
        expected = (len(game.type_sets[agent]), len(game.action_sets[agent]))
        if m.shape != expected:
            raise DimensionMismatch(
                f"certificate strategy for agent {agent} has shape {m.shape}, expected {expected}")
        assignments[agent] = m
    deviated = profile.replace(assignments)

    recomputed: list = []
    if cert.concept == EX_ANTE:
        for agent in cert.coalition:
            recomputed.append(_utility(game, deviated, agent) - _utility(game, profile, agent))
    elif cert.concept == BAYESIAN:
        for agent in cert.coalition:
            per_type = tuple(
                _utility(game, deviated, agent, {agent: v})
                - _utility(game, profile, agent, {agent: v})
                for v in range(len(game.type_sets[agent])))
            recomputed.append(per_type)
    elif cert.concept == INTERIM_D:
        if cert.conditioning_types is None or len(cert.conditioning_types) != k:
            raise DimensionMismatch("interim_D certificate needs one conditioning type per member")
        s_d = dict(zip(cert.coalition, cert.conditioning_types))
        for agent in cert.coalition:
            recomputed.append(_utility(game, deviated, agent, s_d)
                              - _utility(game, profile, agent, s_d))
    else:
        raise DimensionMismatch(f"unknown certificate concept {cert.concept!r}")

    for stored, fresh in zip(cert.deltas, recomputed):
        if isinstance(stored, tuple) != isinstance(fresh, tuple):
            return False
        if isinstance(stored, tuple):
            if len(stored) != len(fresh):
                return False
            if any(abs(s - f) > 1e-9 for s, f in zip(stored, fresh)):
                return False
        elif abs(stored - fresh) > 1e-9:
            return False
    return _conditions_hold(cert.concept, recomputed, tol)


def bne_check(game: FiniteBayesianGame, profile: MixedProfile,
              tol: float = DEFAULT_TOL) -> tuple[bool, float]:
    """No agent improves any type's interim utility by any pure action switch.

    Returns (holds, worst_violation): the largest interim gain available to
    any (agent, type) through a pure replacement at that type.
    """
    _check_profile(game, profile)
    worst = -np.inf
    for i in range(game.n):
        n_types = len(game.type_sets[i])
        n_actions = len(game.action_sets[i])
        for v in range(n_types):
            current = _utility(game, profile, i, {i: v})
            for action in range(n_actions):
                m = profile.strategies[i].copy()
                m[v] = 0.0
                m[v, action] = 1.0
                gain = _utility(game, profile.replace({i: m}), i, {i: v}) - current
                worst = max(worst, gain)
    return worst <= tol, float(worst)


# ---------------------------------------------------------------------------
# Peer prediction bridges
# ---------------------------------------------------------------------------

_SIGNAL_INDEX = {LOW: 0, HIGH: 1}


def peer_prediction_game(setting: Setting) -> FiniteBayesianGame:
    """Encode a peer prediction setting as an explicit finite Bayesian game.

    Uses the setting's world model for the joint prior (the canonical
    realization of the pairwise prior when absent; utilities depend only on
    pairwise marginals, so the choice is immaterial).  Exponential in n:
    intended for small instances.
    """
    n = setting.n
    if n > 12:
        raise InvalidSetting("explicit game encoding is exponential in n; use n <= 12")
    wm = setting.world_model or world_model_for_prior(setting.prior)
    vecs = [np.array([1.0 - p, p]) for p in wm.p_h_given_state]
    prior = np.zeros((2,) * n)
    for w, vec in zip(wm.p_state, vecs):
        prior = prior + w * reduce(np.multiply.outer, [vec] * n)

    table = _score_table(setting)
    grids = np.indices((2,) * n)
    high_count = grids.sum(axis=0)
    utilities = []
    for i in range(n):
        own_h = grids[i].astype(bool)
        s_high_peer = np.where(own_h, table.s_hh, table.s_hl)
        s_low_peer = np.where(own_h, table.s_lh, table.s_ll)
        peers_high = high_count - grids[i]
        peers_low = (n - high_count) - (1 - grids[i])
        lattice = (peers_high * s_high_peer + peers_low * s_low_peer) / (n - 1)
        utilities.append(np.broadcast_to(lattice, (2,) + (2,) * n).copy())
    return FiniteBayesianGame(
        n=n,
        type_sets=((LOW, HIGH),) * n,
        action_sets=((LOW, HIGH),) * n,
        prior=prior,
        utilities=tuple(utilities),
    )


def mixed_profile_for(setting: Setting, profile: DeviationProfile) -> MixedProfile:
    """The n-agent mixed profile of a deviation profile (rest truthful)."""
    mats = []
    for s in profile.deviators:
        mats.append(np.array([[1.0 - s.beta_l, s.beta_l], [1.0 - s.beta_h, s.beta_h]]))
    for _ in range(setting.n - profile.k):
        mats.append(np.eye(2))
    return MixedProfile(tuple(mats))


def _strategy_dists(strategy: Strategy) -> tuple[tuple[float, ...], ...]:
    return ((1.0 - strategy.beta_l, strategy.beta_l),
            (1.0 - strategy.beta_h, strategy.beta_h))


def _strategy_from_dists(dists: Sequence[Sequence[float]]) -> Strategy:
    return Strategy(beta_l=float(dists[0][1]), beta_h=float(dists[1][1]))


def _setting_strategy_grid(grid_steps: int) -> list[Strategy]:
    """Corner profiles first, then the rest of the grid."""
    corners = [Strategy(1.0, 1.0), Strategy(0.0, 0.0), Strategy(1.0, 0.0)]
    points = [i / (grid_steps - 1) for i in range(grid_steps)]
    rest = []
    for bl in points:
        for bh in points:
            s = Strategy(bl, bh)
            if s not in corners and s != Strategy(0.0, 1.0):
                rest.append(s)
    return corners + rest


def find_setting_deviation(setting: Setting, k: int, concept: str, grid_steps: int = 11,
                           budget: int = DEFAULT_BUDGET,
                           tol: float = DEFAULT_TOL) -> Optional[DeviationCertificate]:
    """Falsifier against truthful reporting at mechanism scale.

    Searches coalition sizes 1..k with all members sharing one grid strategy
    (agents are exchangeable and the binding deviations are symmetric corner
    profiles); utilities come from the exact closed forms, so any n is fine.
    Same certificate/verdict semantics as ``find_deviation``.
    """
    if not 1 <= k <= setting.n:
        raise InvalidSetting(f"k must lie in [1, n], got {k}")
    if grid_steps < 2:
        raise ValueError(f"grid_steps must be >= 2, got {grid_steps}")
    if concept not in (EX_ANTE, BAYESIAN):
        raise ValueError(f"unknown concept {concept!r}")
    strategies = _setting_strategy_grid(grid_steps)
    base_ex = truthful_ex_ante(setting)
    base_l = truthful_interim(setting, LOW)
    base_h = truthful_interim(setting, HIGH)
    nodes = 0
    for size in range(1, k + 1):
        for strat in strategies:
            profile = DeviationProfile((strat,) * size)
            if concept == EX_ANTE:
                nodes += 1
                if nodes > budget:
                    raise BudgetExceeded(nodes)
                delta = ex_ante_utility(setting, profile, 0) - base_ex
                deltas: tuple = (delta,) * size
            else:
                nodes += 2
                if nodes > budget:
                    raise BudgetExceeded(nodes)
                d_l = interim_utility(setting, profile, 0, LOW) - base_l
                d_h = interim_utility(setting, profile, 0, HIGH) - base_h
                deltas = ((d_l, d_h),) * size
            if _conditions_hold(concept, deltas, tol):
                return DeviationCertificate(
                    concept=concept, coalition=tuple(range(size)),
                    strategies=(_strategy_dists(strat),) * size,
                    deltas=deltas, tolerance=tol)
    return None


def verify_setting_certificate(setting: Setting, cert: DeviationCertificate,
                               tol: float | None = None) -> bool:
    """Re-verify a mechanism-scale certificate from the closed forms."""
    tol = cert.tolerance if tol is None else tol
    k = len(cert.coalition)
    strategies = tuple(_strategy_from_dists(d) for d in cert.strategies)
    profile = DeviationProfile(strategies)
    if profile.k != k:
        raise DimensionMismatch("certificate coalition and strategies must align")

    recomputed: list = []
    if cert.concept == EX_ANTE:
        base = truthful_ex_ante(setting)
        for pos in range(k):
            recomputed.append(ex_ante_utility(setting, profile, pos) - base)
    elif cert.concept == BAYESIAN:
        base_l = truthful_interim(setting, LOW)
        base_h = truthful_interim(setting, HIGH)
        for pos in range(k):
            recomputed.append((interim_utility(setting, profile, pos, LOW) - base_l,
                               interim_utility(setting, profile, pos, HIGH) - base_h))
    elif cert.concept == INTERIM_D:
        if setting.world_model is None or cert.conditioning_types is None:
            raise DimensionMismatch("interim_D verification needs a world model and types")
        s_d = tuple(LOW if ix == 0 else HIGH for ix in cert.conditioning_types)
        base = _interim_d_utilities(setting.world_model, setting.rule, setting.n, s_d,
                                    [TRUTHFUL_REPORTS[s] for s in s_d])
        reports = [strategies[pos] for pos in range(k)]
        dev = _interim_d_utilities(setting.world_model, setting.rule, setting.n, s_d,
                                   [r.report_prob(s) for r, s in zip(reports, s_d)])
        recomputed = [d - b for d, b in zip(dev, base)]
    else:
        raise DimensionMismatch(f"unknown certificate concept {cert.concept!r}")

    for stored, fresh in zip(cert.deltas, recomputed):
        if isinstance(stored, tuple) != isinstance(fresh, tuple):
            return False
        if isinstance(stored, tuple):
            if any(abs(s - f) > 1e-9 for s, f in zip(stored, fresh)):
                return False
        elif abs(stored - fresh) > 1e-9:
            return False
    return _conditions_hold(cert.concept, recomputed, tol)


TRUTHFUL_REPORTS = {LOW: 0.0, HIGH: 1.0}


def _interim_d_utilities(wm: WorldModel, rule: ScoringRule, n: int,
                         s_d: tuple[str, ...], report_h_probs: Sequence[float]) -> list[float]:
    """Each member's expected utility given the full coalition type vector.

    Members report h with the given probabilities (independently); outsiders
    report truthfully.  Outsider signals enter only through the predictive
    Pr(h | s_D), because the utility is linear in each peer's report.
    """
    from .mechanism import make_setting

    d = len(s_d)
    if not 1 <= d < n:
        raise InvalidSetting("coalition must leave at least one outsider")
    setting = make_setting(n, rule, world_model=wm)
    table = _score_table(setting)
    d1 = sum(1 for s in s_d if s == HIGH)
    p_star = coalition_posterior(wm, d1, d - d1).p_h
    outsider_high = p_star * table.s_hh + (1.0 - p_star) * table.s_lh
    outsider_low = p_star * table.s_hl + (1.0 - p_star) * table.s_ll

    out = []
    for i in range(d):
        pi_i = report_h_probs[i]
        inner_high = 0.0
        inner_low = 0.0
        for j in range(d):
            if j == i:
                continue
            pj = report_h_probs[j]
            inner_high += pj * table.s_hh + (1.0 - pj) * table.s_lh
            inner_low += pj * table.s_hl + (1.0 - pj) * table.s_ll
        u_high = (inner_high + (n - d) * outsider_high) / (n - 1)
        u_low = (inner_low + (n - d) * outsider_low) / (n - 1)
        out.append(pi_i * u_high + (1.0 - pi_i) * u_low)
    return out


def interim_D_deviation(wm: WorldModel, rule: ScoringRule, n: int,
                        s_d: tuple[str, ...],
                        tol: float = DEFAULT_TOL) -> Optional[DeviationCertificate]:
    """Known-types coalition deviation against truthful peer prediction.

    The coalition pools its signals, conditions on the full type vector, and
    coordinates on the single report with the larger expected outsider
    reward (ties broken toward h when PS(h, q_h) >= PS(l, q_l)).  Returns a
    certificate only when every member's conditional utility strictly rises;
    singleton coalitions reduce to the Bayesian Nash property and yield None.
    """
    d = len(s_d)
    if not 1 <= d < n:
        raise InvalidSetting("need 1 <= |s_D| < n")
    for s in s_d:
        if s not in (LOW, HIGH):
            raise InvalidSetting(f"unknown signal {s!r}")
    from .mechanism import make_setting

    setting = make_setting(n, rule, world_model=wm)
    table = _score_table(setting)
    d1 = sum(1 for s in s_d if s == HIGH)
    p_star = coalition_posterior(wm, d1, d - d1).p_h
    u_report_h = p_star * table.s_hh + (1.0 - p_star) * table.s_lh
    u_report_l = p_star * table.s_hl + (1.0 - p_star) * table.s_ll
    if u_report_h > u_report_l + tol:
        target = HIGH
    elif u_report_l > u_report_h + tol:
        target = LOW
    else:
        target = HIGH if table.s_hh >= table.s_ll else LOW

    truthful = [TRUTHFUL_REPORTS[s] for s in s_d]
    coordinated = [TRUTHFUL_REPORTS[target]] * d
    base = _interim_d_utilities(wm, rule, n, s_d, truthful)
    dev = _interim_d_utilities(wm, rule, n, s_d, coordinated)
    deltas = tuple(x - b for x, b in zip(dev, base))
    if not all(delta > tol for delta in deltas):
        return None
    strategy = Strategy(1.0, 1.0) if target == HIGH else Strategy(0.0, 0.0)
    return DeviationCertificate(
        concept=INTERIM_D,
        coalition=tuple(range(d)),
        strategies=(_strategy_dists(strategy),) * d,
        deltas=deltas,
        tolerance=tol,
        conditioning_types=tuple(_SIGNAL_INDEX[s] for s in s_d),
    )
