"""Collusion robustness of the binary peer prediction mechanism.

Exact coalition-size thresholds under ex-ante and per-type (interim)
strong-equilibrium concepts, exact expected utilities for arbitrary
deviation profiles, generic finite-Bayesian-game deviation falsifiers,
and a seeded Monte Carlo cross-check simulator.
"""

from .errors import (
    BudgetExceeded,
    CollusionLabError,
    ConfigError,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidDist,
    InvalidGame,
    InvalidPrior,
    InvalidSetting,
    InvalidStrategy,
    LogOfZero,
    MissingWorldModel,
    NoFiniteN,
    ZeroLikelihood,
)
from .scoring import (
    DEFAULT_TOL,
    HIGH,
    LOW,
    SIGNALS,
    BinaryDist,
    BrierRule,
    CallableRule,
    GapReport,
    LogRule,
    PropernessReport,
    ScoringRule,
    TableRule,
    expected_score,
    four_scores,
    gap_report,
    rule_from_config,
    score,
    verify_properness,
)
from .prior import (
    BinaryPrior,
    WorldModel,
    coalition_posterior,
    induce_prior,
    make_prior,
    world_model_for_prior,
)
from .mechanism import (
    ALL_H,
    ALL_L,
    ALL_LIE,
    CANONICAL_DEVIATIONS,
    TRUTHFUL,
    TRUTHFUL_STRATEGY,
    DeviationProfile,
    PairRewardHessian,
    Setting,
    Strategy,
    average_strategy,
    ex_ante_utility,
    f_side,
    g_side,
    interim_utility,
    make_setting,
    pair_reward_hessian,
    pair_self_reward,
    profile_from_dict,
    profile_to_dict,
    reward,
    simulate,
    truthful_ex_ante,
    truthful_interim,
)
from .thresholds import (
    BAYESIAN,
    CONCEPTS,
    EX_ANTE,
    DichotomyVerdict,
    ThresholdReport,
    dichotomy_check,
    k_bayesian,
    k_ex_ante,
    liar_threshold,
    n_zero,
)
from .checker import (
    DEFAULT_BUDGET,
    INTERIM_D,
    DeviationCertificate,
    FiniteBayesianGame,
    MixedProfile,
    bne_check,
    find_deviation,
    find_setting_deviation,
    game_ex_ante_utility,
    game_interim_D_utility,
    game_interim_utility,
    interim_D_deviation,
    is_symmetric_game,
    mixed_profile_for,
    peer_prediction_game,
    truthful_profile,
    verify_certificate,
    verify_setting_certificate,
)

__version__ = "0.1.0"
