import json

import numpy as np
import pytest

import collusion_lab as cl
import props


def constant_game(n=2, c=3.5):
    return cl.FiniteBayesianGame(
        n=n,
        type_sets=(("t",),) * n,
        action_sets=(("a", "b"),) * n,
        prior=np.ones((1,) * n),
        utilities=tuple(np.full((1,) + (2,) * n, c) for _ in range(n)),
    )


def matching_pennies():
    """Known types: payoff +1 to the matcher, -1 otherwise."""
    v0 = np.zeros((1, 2, 2))
    for a in range(2):
        for b in range(2):
            v0[0, a, b] = 1.0 if a == b else -1.0
    return cl.FiniteBayesianGame(
        n=2,
        type_sets=(("t",), ("t",)),
        action_sets=(("x", "y"), ("x", "y")),
        prior=np.ones((1, 1)),
        utilities=(v0, -v0),
    )


def joint_switch_game():
    """Both agents strictly gain by jointly moving from action 0 to action 1."""
    v = np.zeros((1, 2, 2))
    v[0, 0, 0] = 1.0
    v[0, 1, 1] = 2.0
    return cl.FiniteBayesianGame(
        n=2,
        type_sets=(("t",), ("t",)),
        action_sets=(("a", "b"), ("a", "b")),
        prior=np.ones((1, 1)),
        utilities=(v, v.copy()),
    )


def planted_mixed_game():
    """Improving deviations exist only at mixtures off the coarse grid.

    Expected payoff for agent 0 is -0.1*p + q - 2*p*q (p, q = own/peer
    probability of action b), symmetrically for agent 1.  At the base
    profile (both on action a) no lone deviation helps, every pure or
    half-step joint change strictly hurts someone, and the quarter-step
    mixture (0.25, 0.25) strictly helps both.
    """
    v0 = np.zeros((1, 2, 2))
    v0[0, 0, 0] = 0.0
    v0[0, 1, 0] = -0.1
    v0[0, 0, 1] = 1.0
    v0[0, 1, 1] = -1.1
    v1 = np.transpose(v0, (0, 2, 1)).copy()
    return cl.FiniteBayesianGame(
        n=2,
        type_sets=(("t",), ("t",)),
        action_sets=(("a", "b"), ("a", "b")),
        prior=np.ones((1, 1)),
        utilities=(v0, v1),
    )


def pure_profile(game, actions):
    mats = []
    for i in range(game.n):
        m = np.zeros((len(game.type_sets[i]), len(game.action_sets[i])))
        for v, a in enumerate(actions[i]):
            m[v, a] = 1.0
        mats.append(m)
    return cl.MixedProfile(tuple(mats))


class TestGameUtilities:
    def test_constant_game(self):
        game = constant_game(c=3.5)
        profile = pure_profile(game, [(0,), (1,)])
        for i in range(2):
            assert cl.game_ex_ante_utility(game, profile, i) == pytest.approx(3.5, abs=1e-12)
            assert cl.game_interim_utility(game, profile, i, 0) == pytest.approx(3.5, abs=1e-12)

    def test_matching_pennies_uniform(self):
        game = matching_pennies()
        uniform = cl.MixedProfile((np.full((1, 2), 0.5), np.full((1, 2), 0.5)))
        assert cl.game_ex_ante_utility(game, uniform, 0) == pytest.approx(0.0, abs=1e-12)
        assert cl.game_ex_ante_utility(game, uniform, 1) == pytest.approx(0.0, abs=1e-12)

    def test_matches_mechanism_closed_forms(self):
        props.check_checker_mechanism_exactness()

    def test_interim_totality(self):
        rng = np.random.default_rng(41)
        game = props.random_game(rng, n=3)
        profile = props.random_pure_profile(rng, game)
        for i in range(3):
            marginal = game.type_marginal(i)
            total = sum(marginal[v] * cl.game_interim_utility(game, profile, i, v)
                        for v in range(len(game.type_sets[i])))
            assert total == pytest.approx(cl.game_ex_ante_utility(game, profile, i), abs=1e-12)

    def test_interim_coalition_totality(self):
        # averaging the coalition-conditioned utility over the coalition's
        # type vector recovers the ex-ante utility
        setting = cl.make_setting(4, cl.BrierRule(), prior=cl.make_prior(0.5, 0.8))
        game = cl.peer_prediction_game(setting)
        profile = cl.truthful_profile(game)
        total = 0.0
        for s0 in range(2):
            for s1 in range(2):
                weight = float(game.prior[s0, s1].sum())
                total += weight * cl.game_interim_D_utility(game, profile, 0, {0: s0, 1: s1})
        assert total == pytest.approx(cl.game_ex_ante_utility(game, profile, 0), abs=1e-12)

    def test_dimension_mismatch(self):
        game = matching_pennies()
        bad = cl.MixedProfile((np.full((1, 2), 0.5),))
        with pytest.raises(cl.DimensionMismatch):
            cl.game_ex_ante_utility(game, bad, 0)
        uniform = cl.MixedProfile((np.full((1, 2), 0.5), np.full((1, 2), 0.5)))
        with pytest.raises(cl.DimensionMismatch):
            cl.game_interim_utility(game, uniform, 0, 5)

    def test_game_validation(self):
        with pytest.raises(cl.InvalidGame):
            cl.FiniteBayesianGame(
                n=2, type_sets=(("t",), ("t",)), action_sets=(("a", "b"), ("a", "b")),
                prior=np.array([[0.5, 0.5]]),  # wrong shape
                utilities=(np.zeros((1, 2, 2)), np.zeros((1, 2, 2))))
        with pytest.raises(cl.InvalidGame):
            cl.FiniteBayesianGame(
                n=2, type_sets=(("t", "u"), ("t",)), action_sets=(("a", "b"), ("a", "b")),
                prior=np.array([[1.0], [0.0]]),  # type u has zero marginal
                utilities=(np.zeros((2, 2, 2)), np.zeros((1, 2, 2))))


class TestFindDeviation:
    def test_truthful_peer_prediction_k1(self):
        setting = cl.make_setting(5, cl.BrierRule(), prior=cl.make_prior(2 / 3, 0.8))
        game = cl.peer_prediction_game(setting)
        profile = cl.truthful_profile(game)
        for concept in ("ex_ante", "bayesian"):
            assert cl.find_deviation(game, profile, 1, concept, grid_steps=11) is None

    def test_joint_switch_found(self):
        game = joint_switch_game()
        profile = pure_profile(game, [(0,), (0,)])
        cert = cl.find_deviation(game, profile, 2, "ex_ante", grid_steps=3)
        assert cert is not None
        assert cert.coalition == (0, 1)
        assert all(d > 0 for d in cert.deltas)
        assert cl.verify_certificate(game, profile, cert)

    def test_canonical_deviation_small_population(self):
        setting = cl.make_setting(8, cl.BrierRule(), prior=cl.make_prior(2 / 3, 0.8))
        k_e = cl.k_ex_ante(setting).k
        assert k_e == 2
        game = cl.peer_prediction_game(setting)
        profile = cl.truthful_profile(game)
        cert = cl.find_deviation(game, profile, k_e + 1, "ex_ante", grid_steps=11)
        assert cert is not None
        assert len(cert.coalition) == k_e + 1
        # the certificate is one of the canonical corner deviations
        all_h = ((0.0, 1.0), (0.0, 1.0))
        all_l = ((1.0, 0.0), (1.0, 0.0))
        assert all(m in (all_h, all_l) for m in cert.strategies)
        assert cl.verify_certificate(game, profile, cert)
        # cross-check against the dichotomy oracle
        assert cl.dichotomy_check(setting, k_e + 1, "all_h", "ex_ante").succeeded

    def test_k_monotonicity(self):
        game = joint_switch_game()
        profile = pure_profile(game, [(0,), (0,)])
        assert cl.find_deviation(game, profile, 1, "ex_ante", grid_steps=3) is None
        for k in (2,):
            assert cl.find_deviation(game, profile, k, "ex_ante", grid_steps=3) is not None

    def test_grid_refinement(self):
        game = planted_mixed_game()
        profile = pure_profile(game, [(0,), (0,)])
        assert cl.find_deviation(game, profile, 2, "ex_ante", grid_steps=3) is None
        cert = cl.find_deviation(game, profile, 2, "ex_ante", grid_steps=5)
        assert cert is not None
        assert cert.strategies[0][0] == pytest.approx((0.75, 0.25))
        # a certificate found at one grid stays valid at any other
        assert cl.verify_certificate(game, profile, cert)

    def test_budget_exceeded(self):
        setting = cl.make_setting(5, cl.BrierRule(), prior=cl.make_prior(2 / 3, 0.8))
        game = cl.peer_prediction_game(setting)
        profile = cl.truthful_profile(game)
        with pytest.raises(cl.BudgetExceeded) as err:
            cl.find_deviation(game, profile, 2, "ex_ante", grid_steps=11, budget=10)
        assert err.value.nodes_searched > 10

    def test_soundness_fuzz(self):
        rng = np.random.default_rng(42)
        found = 0
        for _ in range(1000):
            game = props.random_game(rng, n=2)
            profile = props.random_pure_profile(rng, game)
            concept = "ex_ante" if rng.random() < 0.5 else "bayesian"
            cert = cl.find_deviation(game, profile, 2, concept, grid_steps=3)
            if cert is not None:
                found += 1
                assert cl.verify_certificate(game, profile, cert)
        assert found >= 200, f"fuzz produced too few certificates ({found})"


class TestVerifyCertificate:
    def _found(self):
        game = joint_switch_game()
        profile = pure_profile(game, [(0,), (0,)])
        cert = cl.find_deviation(game, profile, 2, "ex_ante", grid_steps=3)
        return game, profile, cert

    def test_negated_delta_fails(self):
        game, profile, cert = self._found()
        tampered = cl.DeviationCertificate(
            concept=cert.concept, coalition=cert.coalition, strategies=cert.strategies,
            deltas=tuple(-d for d in cert.deltas), tolerance=cert.tolerance)
        assert not cl.verify_certificate(game, profile, tampered)

    def test_bayesian_reinterprets_as_ex_ante(self):
        props.check_bayesian_implies_ex_ante_certificate()

    def test_round_trip(self):
        game, profile, cert = self._found()
        again = cl.DeviationCertificate.from_dict(json.loads(json.dumps(cert.to_dict())))
        assert again == cert
        assert cl.verify_certificate(game, profile, again)


class TestBneCheck:
    def test_truthful_peer_prediction(self):
        setting = cl.make_setting(4, cl.BrierRule(), prior=cl.make_prior(2 / 3, 0.8))
        game = cl.peer_prediction_game(setting)
        holds, worst = cl.bne_check(game, cl.truthful_profile(game))
        assert holds
        assert worst <= 0.0

    def test_dominated_action(self):
        v = np.zeros((1, 2, 2))
        v[0, 1, :] = 1.0  # action b strictly dominates for agent 0
        game = cl.FiniteBayesianGame(
            n=2, type_sets=(("t",), ("t",)), action_sets=(("a", "b"), ("a", "b")),
            prior=np.ones((1, 1)), utilities=(v, np.zeros((1, 2, 2))))
        profile = pure_profile(game, [(0,), (0,)])
        holds, worst = cl.bne_check(game, profile)
        assert not holds
        assert worst == pytest.approx(1.0, abs=1e-12)

    def test_equivalence_with_size_one_falsifier(self):
        props.check_bne_equivalence()


class TestSymmetryDetection:
    def test_peer_prediction_symmetric(self):
        setting = cl.make_setting(4, cl.BrierRule(), prior=cl.make_prior(2 / 3, 0.8))
        assert cl.is_symmetric_game(cl.peer_prediction_game(setting))

    def test_planted_game_symmetric(self):
        assert cl.is_symmetric_game(planted_mixed_game())

    def test_random_game_not_symmetric(self):
        rng = np.random.default_rng(43)
        game = props.random_game(rng, n=2)
        assert not cl.is_symmetric_game(game)


class TestInterimD:
    def _reference_wm(self):
        return cl.world_model_for_prior(cl.make_prior(2 / 3, 0.8))

    def test_mixed_coalition_certificate_exists(self):
        wm = self._reference_wm()
        cert = cl.interim_D_deviation(wm, cl.BrierRule(), 100, (cl.HIGH, cl.LOW))
        assert cert is not None
        assert cert.concept == "interim_D"
        assert all(d > 0 for d in cert.deltas)

    def test_singleton_reduces_to_bne(self):
        wm = self._reference_wm()
        for s in (cl.LOW, cl.HIGH):
            assert cl.interim_D_deviation(wm, cl.BrierRule(), 100, (s,)) is None

    def test_deltas_match_enumeration_oracle(self):
        wm = self._reference_wm()
        rule = cl.BrierRule()
        n = 50
        s_d = (cl.HIGH, cl.LOW, cl.LOW)
        cert = cl.interim_D_deviation(wm, rule, n, s_d)
        assert cert is not None
        target_h = cert.strategies[0][0][1] == 1.0  # coordinated report
        prior = cl.induce_prior(wm)
        q = {cl.LOW: prior.posterior(cl.LOW), cl.HIGH: prior.posterior(cl.HIGH)}

        def oracle_member(i, reports):
            # enumerate the two states; outsiders are iid given the state
            like = []
            for w, p in zip(wm.p_state, wm.p_h_given_state):
                l = w
                for s in s_d:
                    l *= p if s == cl.HIGH else (1.0 - p)
                like.append((l, p))
            z = sum(l for l, _ in like)
            total = 0.0
            own = reports[i]
            for l, p in like:
                inner = 0.0
                for j, r in enumerate(reports):
                    if j == i:
                        continue
                    inner += cl.score(rule, r, q[own])
                outsider = (p * cl.score(rule, cl.HIGH, q[own])
                            + (1 - p) * cl.score(rule, cl.LOW, q[own]))
                total += (l / z) * (inner + (n - len(s_d)) * outsider)
            return total / (n - 1)

        coordinated = [cl.HIGH if target_h else cl.LOW] * len(s_d)
        for i in range(len(s_d)):
            want = oracle_member(i, coordinated) - oracle_member(i, list(s_d))
            assert cert.deltas[i] == pytest.approx(want, abs=1e-12)

    def test_certificate_verifies_in_explicit_game(self):
        wm = self._reference_wm()
        n = 8
        s_d = (cl.HIGH, cl.LOW)
        cert = cl.interim_D_deviation(wm, cl.BrierRule(), n, s_d)
        assert cert is not None
        setting = cl.make_setting(n, cl.BrierRule(), world_model=wm)
        game = cl.peer_prediction_game(setting)
        profile = cl.truthful_profile(game)
        assert cl.verify_certificate(game, profile, cert)
        assert cl.verify_setting_certificate(setting, cert)


class TestSettingFalsifier:
    SETTING = props.reference_setting()

    def test_finds_canonical_at_scale(self):
        cert = cl.find_setting_deviation(self.SETTING, 40, "ex_ante")
        assert cert is not None
        assert len(cert.coalition) == cl.k_ex_ante(self.SETTING).k + 1
        assert cert.strategies[0] == ((0.0, 1.0), (0.0, 1.0))  # all-h
        assert cl.verify_setting_certificate(self.SETTING, cert)

    def test_none_within_threshold(self):
        assert cl.find_setting_deviation(self.SETTING, 26, "ex_ante") is None
        assert cl.find_setting_deviation(self.SETTING, 27, "ex_ante") is None

    def test_bayesian_threshold(self):
        assert cl.find_setting_deviation(self.SETTING, 44, "bayesian") is None
        cert = cl.find_setting_deviation(self.SETTING, 45, "bayesian")
        assert cert is not None
        assert len(cert.coalition) == 45

    def test_budget(self):
        with pytest.raises(cl.BudgetExceeded):
            cl.find_setting_deviation(self.SETTING, 40, "ex_ante", budget=3)


class TestGameSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(44)
        game = props.random_game(rng, n=3)
        again = cl.FiniteBayesianGame.from_dict(json.loads(json.dumps(game.to_dict())))
        assert again.n == game.n
        assert again.type_sets == game.type_sets
        assert np.allclose(again.prior, game.prior, atol=0)
        for a, b in zip(again.utilities, game.utilities):
            assert np.allclose(a, b, atol=0)
