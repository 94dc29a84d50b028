import numpy as np
import pytest

from expertmix.aggregating import aa_propose, aa_start, aa_step
from expertmix.defensive import (
    binary_admissible_interval,
    default_proper_loss,
    dfa_bound_margins,
    dfa_solve_binary,
    dfa_solve_simplex,
    dfa_start,
    dfa_step,
    interior_delta,
    pair_exponent,
    q_term,
    standard_qfun,
    supermartingale_property_check,
)
from expertmix.errors import ContractViolation, SlackExceeded, SubstitutionFailure
from expertmix.harness.oracle import oracle_dfa_solve
from expertmix.losses import builtin_game, realizability_constant

INF = np.inf
LN2 = np.log(2.0)


def advice_rows(game, decisions):
    return np.stack([game.loss_vector(np.atleast_1d(d)) for d in decisions])


class TestQTerm:
    def test_identical_losses_cancel(self):
        g = builtin_game("square", 2)
        lam = default_proper_loss(g, 1.0, 2.0)
        assert q_term(lam, 1.0, 2.0, g.loss_vector([0.4]), [0.6, 0.4], 1) == 1.0

    def test_log_expert_certain(self):
        g = builtin_game("log", 2)
        lam = default_proper_loss(g, 1.0, 1.0)
        adv = g.loss_vector([1.0])  # (inf, 0)
        assert q_term(lam, 1.0, 1.0, adv, [0.5, 0.5], 1) == pytest.approx(2.0)
        assert q_term(lam, 1.0, 1.0, adv, [0.5, 0.5], 0) == 0.0

    def test_product_of_terms_is_the_exponential_regret(self):
        # along a trajectory, prod q equals exp(eta (L/c - L^theta))
        g = builtin_game("log", 2)
        lam = default_proper_loss(g, 1.0, 1.0)
        rng = np.random.default_rng(2)
        c, eta = 1.0, 1.0
        log_prod = 0.0
        L, Lth = 0.0, 0.0
        for _ in range(200):
            p = rng.uniform(0.1, 0.9)
            ptheta = rng.uniform(0.1, 0.9)
            w = int(rng.integers(0, 2))
            pi = np.array([1 - p, p])
            gv = g.loss_vector([ptheta])
            log_prod += np.log(q_term(lam, c, eta, gv, pi, w))
            L += lam(pi)[w]
            Lth += gv[w]
        assert log_prod == pytest.approx(eta * (L / c - Lth), rel=1e-9)


class TestPropertyCheck:
    @pytest.mark.parametrize("eta", [0.25, 0.5, 1.0])
    def test_log_supermartingale(self, eta):
        g = builtin_game("log", 2)
        lam = default_proper_loss(g, 1.0, eta)
        rep = supermartingale_property_check(lam, 1.0, eta, g, samples=2000, seed=0)
        assert rep.max_excess <= 1e-9

    @pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
    def test_square_supermartingale(self, eta):
        g = builtin_game("square", 2)
        lam = default_proper_loss(g, 1.0, eta)
        rep = supermartingale_property_check(lam, 1.0, eta, g, samples=2000, seed=0)
        assert rep.max_excess <= 1e-9

    def test_negative_controls(self):
        g = builtin_game("log", 2)
        lam = default_proper_loss(g, 1.0, 1.0)
        assert supermartingale_property_check(lam, 1.0, 1.3, g, samples=2000,
                                              seed=0).max_excess > 1e-4
        gs = builtin_game("square", 2)
        lams = default_proper_loss(gs, 1.0, 2.0)
        assert supermartingale_property_check(lams, 1.0, 2.5, gs, samples=2000,
                                              seed=0).max_excess > 1e-4

    def test_absolute_with_scaling_constant(self):
        g = builtin_game("absolute", 2)
        c = realizability_constant("absolute", 1.0)
        lam = default_proper_loss(g, c, 1.0)
        rep = supermartingale_property_check(lam, c, 1.0, g, samples=2000, seed=0)
        assert rep.max_excess <= 1e-9


class TestBinarySolver:
    def test_single_certain_expert(self):
        g = builtin_game("log", 2)
        state = dfa_start(g, eta=1.0, n_experts=1)
        qrow, _ = standard_qfun(state, advice_rows(g, [1.0]))
        p = dfa_solve_binary(lambda p: qrow(np.array([1 - p, p])), 1.0)
        assert p == 1.0

    def test_two_point_experts_meet_at_half(self):
        g = builtin_game("log", 2)
        state = dfa_start(g, eta=1.0, n_experts=2)
        qrow, _ = standard_qfun(state, advice_rows(g, [0.0, 1.0]))
        p = dfa_solve_binary(lambda p: qrow(np.array([1 - p, p])), 1.0, tol=1e-12)
        assert p == pytest.approx(0.5, abs=1e-9)

    def test_constant_q_early_exit(self):
        assert dfa_solve_binary(lambda p: np.array([1.0, 1.0]), 1.0) == 0.0

    def test_deterministic(self):
        g = builtin_game("square", 2)
        state = dfa_start(g, eta=2.0, n_experts=2)
        qrow, _ = standard_qfun(state, advice_rows(g, [0.3, 0.9]))
        qp = lambda p: qrow(np.array([1 - p, p]))
        assert dfa_solve_binary(qp, 1.0) == dfa_solve_binary(qp, 1.0)

    def test_contract_violation_detected(self):
        # q(0,1) > C but q(0,0) even larger: not a supermartingale term
        def bad(p):
            return np.array([3.0 - p, 2.0 + p])

        with pytest.raises(ContractViolation):
            dfa_solve_binary(bad, 1.0)

    def test_interval_contains_root_and_midpoint(self):
        g = builtin_game("square", 2)
        state = dfa_start(g, eta=2.0, n_experts=2)
        qrow, _ = standard_qfun(state, advice_rows(g, [0.3, 0.9]))
        qp = lambda p: qrow(np.array([1 - p, p]))
        lo, hi = binary_admissible_interval(qp, 1.0, tol=1e-10)
        root = dfa_solve_binary(qp, 1.0, tol=1e-12)
        assert lo - 1e-9 <= root <= hi + 1e-9
        mid = 0.5 * (lo + hi)
        assert np.max(qp(mid)) <= 1.0 + 1e-9


class TestSimplexSolver:
    def test_delta_from_epsilon(self):
        eps = 1e-6
        d = interior_delta(eps, 3)
        assert 1.0 / (1.0 - d * 2) <= 1.0 + eps + 1e-15

    def test_constant_q_accepts_barycenter(self):
        out = dfa_solve_simplex(lambda P: np.full((len(P), 3), 0.9), 1.0, 3)
        assert np.allclose(out, 1.0 / 3.0)

    def test_single_barycenter_expert(self):
        g = builtin_game("brier", 3)
        state = dfa_start(g, eta=1.0, n_experts=1)
        adv = np.stack([g.loss_vector(np.full(3, 1 / 3))])
        _, qbatch = standard_qfun(state, adv)
        out = dfa_solve_simplex(qbatch, 1.0, 3)
        assert np.allclose(out, 1.0 / 3.0)

    def test_binary_reduction_matches_binary_solver(self):
        g = builtin_game("kl", 2)  # simplex-kind binary game
        state = dfa_start(g, eta=1.0, n_experts=2)
        adv = np.stack([g.loss_vector([1.0, 0.0]), g.loss_vector([0.0, 1.0])])
        qrow, qbatch = standard_qfun(state, adv)
        eps = 1e-6
        out = dfa_solve_simplex(qbatch, 1.0, 2, epsilon=eps)
        delta = interior_delta(eps, 2)
        assert abs(out[1] - 0.5) <= delta + 1e-6

    def test_stall_raises_slack_exceeded(self):
        with pytest.raises(SlackExceeded) as err:
            dfa_solve_simplex(lambda P: np.full((len(P), 3), 2.0), 1.0, 3)
        assert err.value.best_value == pytest.approx(2.0)


class TestOracleAgreement:
    def test_binary_log_two_experts(self):
        g = builtin_game("log", 2)
        state = dfa_start(g, eta=1.0, n_experts=2)
        qrow, _ = standard_qfun(state, advice_rows(g, [0.0, 1.0]))
        grid = 10_000
        pi_star = oracle_dfa_solve(lambda pi: qrow(pi), 1.0, 2, grid)
        assert abs(pi_star[1] - 0.5) <= 2.0 / grid
        p = dfa_solve_binary(lambda p: qrow(np.array([1 - p, p])), 1.0, tol=1e-12)
        assert abs(p - pi_star[1]) <= 2.0 / grid

    def test_binary_square_asymmetric(self):
        g = builtin_game("square", 2)
        state = dfa_start(g, eta=2.0, n_experts=2)
        qrow, _ = standard_qfun(state, advice_rows(g, [0.3, 0.9]))
        grid = 4000
        pi_star = oracle_dfa_solve(lambda pi: qrow(pi), 1.0, 2, grid)
        p = dfa_solve_binary(lambda p: qrow(np.array([1 - p, p])), 1.0, tol=1e-12)
        v_solver = float(np.max(qrow(np.array([1 - p, p]))))
        v_oracle = float(np.max(qrow(pi_star)))
        assert v_solver <= v_oracle + 1e-9

    def test_simplex_brier_barycenter(self):
        g = builtin_game("brier", 3)
        state = dfa_start(g, eta=1.0, n_experts=1)
        adv = np.stack([g.loss_vector(np.full(3, 1 / 3))])
        qrow, qbatch = standard_qfun(state, adv)
        pi = dfa_solve_simplex(qbatch, 1.0, 3, epsilon=1e-6, tol=1e-9)
        pi_star = oracle_dfa_solve(lambda x: qrow(x), 1.0, 3, grid=60)
        v_solver = float(np.max(qrow(pi)))
        v_oracle = float(np.max(qrow(pi_star)))
        assert v_solver <= v_oracle + (1 + 1e-6) * 1e-9 + 0.05 / 60

    def test_oracle_tie_break_documented_order(self):
        pi = oracle_dfa_solve(lambda x: np.zeros(3), 1.0, 3, grid=10)
        assert np.allclose(pi, [0.0, 0.0, 1.0])  # first point of the grid

    def test_oracle_grid_validation(self):
        with pytest.raises(ValueError):
            oracle_dfa_solve(lambda x: np.zeros(2), 1.0, 2, grid=5)


class TestDFAStep:
    def test_two_point_experts_predict_half(self):
        g = builtin_game("log", 2)
        state = dfa_start(g, eta=1.0, n_experts=2)
        dec, state, slack = dfa_step(state, advice_rows(g, [0.0, 1.0]), 1)
        assert dec[0] == pytest.approx(0.5, abs=1e-9)
        assert slack <= 1e-9

    def test_single_expert_tracked_exactly(self):
        g = builtin_game("log", 2)
        state = dfa_start(g, eta=1.0, n_experts=1)
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = rng.uniform(0.05, 0.95)
            dec, state, _ = dfa_step(state, advice_rows(g, [p]), int(rng.integers(0, 2)))
            assert dec[0] == pytest.approx(p, abs=1e-7)
        assert dfa_bound_margins(state)[0] <= 1e-7

    def test_square_adversarial_three_experts(self):
        g = builtin_game("square", 2)
        state = dfa_start(g, eta=2.0, n_experts=3)
        adv = advice_rows(g, [0.1, 0.5, 0.9])
        for n in range(500):
            from expertmix.defensive import dfa_propose

            dec, _, _, _ = dfa_propose(state, adv)
            w = 1 if dec[0] < 0.5 else 0
            _, state, _ = dfa_step(state, adv, w)
        best = float(np.min(state.per_expert_loss))
        bound = 0.5 * np.log(3.0) + (1.0 / 2.0) * state.slack_log_total
        assert state.cumulative_loss - best <= bound + 1e-7
        assert np.all(dfa_bound_margins(state) <= 1e-7)

    def test_supermartingale_never_increases(self):
        g = builtin_game("log", 2)
        state = dfa_start(g, eta=1.0, n_experts=4)
        rng = np.random.default_rng(3)
        prev = state.log_value
        for _ in range(200):
            adv = advice_rows(g, rng.random(4))
            _, state, slack = dfa_step(state, adv, int(rng.integers(0, 2)))
            assert state.log_value <= prev + np.log1p(slack) + 1e-9
            prev = state.log_value
        assert state.log_value <= state.slack_log_total + 1e-9

    def test_unrealizable_absolute_raises(self):
        g = builtin_game("absolute", 2)
        state = dfa_start(g, eta=1.0, c=1.0, n_experts=2)
        with pytest.raises(SubstitutionFailure):
            dfa_step(state, advice_rows(g, [0.0, 1.0]), 0)

    def test_infinite_advice_coordinate(self):
        # all experts certain of outcome 1, which then happens: weights survive
        g = builtin_game("log", 2)
        state = dfa_start(g, eta=1.0, n_experts=2)
        adv = advice_rows(g, [1.0, 1.0])
        dec, state, _ = dfa_step(state, adv, 1)
        assert dec[0] == pytest.approx(1.0)
        assert np.all(np.isfinite(state.log_weights))


class TestEquivalenceWithMixing:
    @pytest.mark.parametrize("name,eta", [("log", 1.0), ("square", 2.0)])
    def test_predictions_coincide_on_random_trajectories(self, name, eta):
        game = builtin_game(name, 2)
        rng = np.random.default_rng(42)
        K = 4
        sa = aa_start(game, eta=eta, n_experts=K)
        sd = dfa_start(game, eta=eta, n_experts=K)
        worst = 0.0
        for _ in range(200):
            adv = advice_rows(game, rng.random(K))
            da, _ = aa_propose(sa, adv)
            w = int(rng.integers(0, 2))
            dd, sd, _ = dfa_step(sd, adv, w)
            _, sa = aa_step(sa, adv, w)
            worst = max(worst, abs(float(da[0]) - float(dd[0])))
        assert worst <= 1e-6
