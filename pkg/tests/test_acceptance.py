"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines inline; without ``-s`` they appear in pytest's captured output.
"""

import contextlib
import json
import math
import time

import numpy as np
import pytest

import collusion_lab as cl
from collusion_lab import cli
import props


@contextlib.contextmanager
def criterion(num: int, description: str):
    try:
        yield
    except BaseException:
        print(f"[criterion {num}] FAIL  {description}")
        raise
    print(f"[criterion {num}] PASS  {description}")


SETTING = props.reference_setting()
LOG_SETTING = props.reference_setting(cl.LogRule())


def test_criterion_1_scores():
    with criterion(1, "reference scores exact to 1e-12 in under 1 ms"):
        rule = cl.BrierRule()
        q_h = SETTING.prior.posterior(cl.HIGH)
        rule.score(cl.HIGH, q_h)  # warm-up
        start = time.perf_counter()
        s_h = rule.score(cl.HIGH, q_h)
        s_l = rule.score(cl.LOW, q_h)
        elapsed = time.perf_counter() - start
        assert abs(s_h - 0.92) <= 1e-12
        assert abs(s_l - (-0.28)) <= 1e-12
        assert elapsed < 1e-3, f"took {elapsed * 1e3:.3f} ms"


def test_criterion_2_utilities():
    with criterion(2, "reference utilities, including the flagged erratum"):
        u_star = cl.truthful_ex_ante(SETTING)
        assert abs(u_star - 1.88 / 3.0) <= 1e-12       # closed form
        assert abs(u_star - 0.627) <= 5e-4             # printed value
        assert abs(cl.truthful_interim(SETTING, cl.LOW) - 0.52) <= 1e-12

        profile40 = cl.DeviationProfile((cl.ALL_H,) * 40)
        u_low = cl.interim_utility(SETTING, profile40, 0, cl.LOW)
        assert abs(u_low - 47.88 / 99.0) <= 1e-12
        assert abs(u_low - 0.484) <= 5e-4

        # the printed 0.682 needs a 40/59 peer split; the stated 39/60 split
        # gives 0.67757, reported as WARN (not FAIL) with both values shown
        u_dev = cl.ex_ante_utility(SETTING, profile40, 0)
        assert abs(u_dev - 201.24 / 297.0) <= 1e-12
        assert abs(u_dev - 0.67757) <= 1e-5   # five-decimal rounding of the closed form
        records = {r["name"]: r for r in cli.reference_example_report()}
        erratum = records["deviator40_ex_ante_vs_print"]
        assert erratum["status"] == "WARN"
        assert "0.68162" in erratum["note"] and "0.67758" in erratum["note"]
        assert all(r["status"] in ("OK", "WARN") for r in records.values())


def test_criterion_3_thresholds():
    with criterion(3, "closed-form thresholds exact in under 10 ms"):
        cl.k_ex_ante(SETTING)  # warm-up
        start = time.perf_counter()
        ex = cl.k_ex_ante(SETTING)
        ba = cl.k_bayesian(SETTING)
        log_ex = cl.k_ex_ante(LOG_SETTING)
        elapsed = time.perf_counter() - start
        assert (ex.k_h, ex.k_l, ex.k) == (27, 80, 27)
        assert (ba.k_h, ba.k_l, ba.k) == (44, 99, 44)
        assert cl.dichotomy_check(SETTING, 45, "all_h", "bayesian").succeeded
        assert not cl.dichotomy_check(SETTING, 44, "all_h", "bayesian").succeeded
        assert log_ex.k == 28
        assert elapsed < 1e-2, f"took {elapsed * 1e3:.3f} ms"


def test_criterion_4_boundary_certificate():
    with criterion(4, "k=45 certificate: low-type equality, strict high-type gain"):
        profile45 = cl.DeviationProfile((cl.ALL_H,) * 45)
        u_low = cl.interim_utility(SETTING, profile45, 0, cl.LOW)
        u_high = cl.interim_utility(SETTING, profile45, 0, cl.HIGH)
        assert abs(u_low - 0.52) <= 1e-12              # exactly the truthful value
        assert abs(u_high - 77.88 / 99.0) <= 1e-12
        assert u_high > 0.68 + 1e-9
        verdict = cl.dichotomy_check(SETTING, 45, "all_h", "bayesian")
        assert verdict.succeeded
        delta_l, delta_h = verdict.deltas[0]
        assert abs(delta_l) <= 1e-12
        assert delta_h > 1e-9


def test_criterion_5_dichotomy_sweep():
    with criterion(5, "canonical-deviation dichotomy on 50 random settings"):
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        deviations = ("all_h", "all_l", "all_lie")
        interim_covered = 0
        for trial in range(50):
            prior = (props.informative_prior(rng) if trial % 3 == 0
                     else props.random_prior(rng))
            rule = props.random_rule(rng)
            n = int(rng.integers(5, 61))
            setting = cl.make_setting(n, rule, prior=prior)

            k_e = cl.k_ex_ante(setting).k
            for k in range(1, k_e + 1):
                for dev in deviations:
                    assert not cl.dichotomy_check(setting, k, dev, "ex_ante").succeeded
            if k_e < n:
                assert (cl.dichotomy_check(setting, k_e + 1, "all_h", "ex_ante").succeeded
                        or cl.dichotomy_check(setting, k_e + 1, "all_l", "ex_ante").succeeded)

            if n >= cl.n_zero(prior, rule):
                interim_covered += 1
                k_b = cl.k_bayesian(setting).k
                for k in range(1, k_b + 1):
                    for dev in deviations:
                        assert not cl.dichotomy_check(setting, k, dev, "bayesian").succeeded
                if k_b < n:
                    assert (cl.dichotomy_check(setting, k_b + 1, "all_h", "bayesian").succeeded
                            or cl.dichotomy_check(setting, k_b + 1, "all_l", "bayesian").succeeded)
        elapsed = time.perf_counter() - start
        assert interim_covered >= 5, "too few settings reached the interim regime"
        assert elapsed < 30.0, f"took {elapsed:.1f} s"


def test_criterion_6_property_suites():
    with criterion(6, "property suites (properness, convexity, dominance, equivalences)"):
        start = time.perf_counter()
        props.check_properness_grids()
        props.check_score_gap_positivity()
        props.check_pair_reward_convexity()
        props.check_g_side_identities()
        k_b = cl.k_bayesian(SETTING).k
        props.check_subspace_dominance(SETTING, (2, k_b // 2, k_b))
        props.check_truthfulness_grid(SETTING)
        props.check_average_utility_bound()
        props.check_liar_threshold_bound()
        props.check_threshold_ordering()
        props.check_bne_equivalence()
        props.check_bayesian_implies_ex_ante_certificate()
        props.check_checker_mechanism_exactness()
        elapsed = time.perf_counter() - start
        assert elapsed < 120.0, f"took {elapsed:.1f} s"


def test_criterion_7_monte_carlo():
    with criterion(7, "seeded Monte Carlo matches the closed form, byte-identically"):
        wm = cl.world_model_for_prior(SETTING.prior)
        setting = cl.make_setting(100, cl.BrierRule(), prior=SETTING.prior, world_model=wm)
        profile = cl.DeviationProfile((cl.TRUTHFUL_STRATEGY,))
        result = cl.simulate(setting, profile, trials=100_000, seed=20240901)
        want = cl.truthful_ex_ante(setting)
        assert abs(want - 1.88 / 3.0) <= 1e-12
        for role in ("deviator_0", "truthful"):
            stats = result[role]
            assert stats["stderr"] > 0.0
            assert abs(stats["mean"] - want) <= 4.0 * stats["stderr"]
        again = cl.simulate(setting, profile, trials=100_000, seed=20240901)
        assert (json.dumps(result, sort_keys=True).encode()
                == json.dumps(again, sort_keys=True).encode())


def test_criterion_8_known_type_coalitions():
    with criterion(8, "known-type coalition deviates at size 2, not at size 1"):
        prior = SETTING.prior
        rep = cl.gap_report(cl.BrierRule(), prior)
        assert rep.score_hh > rep.score_lh and rep.score_ll > rep.score_hl
        wm = cl.world_model_for_prior(prior)
        rule = cl.BrierRule()
        n = 100

        s_d = (cl.HIGH, cl.LOW)
        cert = cl.interim_D_deviation(wm, rule, n, s_d)
        assert cert is not None
        assert all(d > 1e-9 for d in cert.deltas)

        # enumeration oracle over the latent state
        target = cl.HIGH if cert.strategies[0][0][1] == 1.0 else cl.LOW
        base = props.interim_d_oracle(wm, rule, n, s_d, list(s_d))
        dev = props.interim_d_oracle(wm, rule, n, s_d, [target] * len(s_d))
        for i, delta in enumerate(cert.deltas):
            assert abs(delta - (dev[i] - base[i])) <= 1e-12

        setting = cl.make_setting(n, rule, prior=prior, world_model=wm)
        assert cl.verify_setting_certificate(setting, cert)

        for s in (cl.LOW, cl.HIGH):
            assert cl.interim_D_deviation(wm, rule, n, (s,)) is None
