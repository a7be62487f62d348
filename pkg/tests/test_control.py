import numpy as np
import pytest
from hypothesis import given, strategies as st

import flexa
from flexa.control import (
    EpsSchedule,
    SelectionRule,
    StepSchedule,
    TauPolicy,
    TauState,
    error_bound,
    merit_value,
    relative_error,
    select,
    step_update,
    tau_update,
)
from flexa.errors import StructuralError, UnsupportedConfigError

from conftest import random_group_lasso, random_lasso


class TestSelect:
    def test_threshold_example(self):
        E = np.array([3.0, 1.0, 2.0])
        assert list(select(SelectionRule.threshold(0.5), E)) == [0, 2]

    def test_sigma_zero_selects_all(self):
        E = np.array([3.0, 1.0, 2.0])
        assert list(select(SelectionRule.threshold(0.0), E)) == [0, 1, 2]

    def test_top_rho_single_max(self):
        E = np.array([3.0, 1.0, 2.0])
        assert list(select(SelectionRule.top_rho(1.0), E)) == [0]

    def test_all_zero_returns_full_set(self):
        E = np.zeros(4)
        assert list(select(SelectionRule.threshold(0.7), E)) == [0, 1, 2, 3]

    def test_negative_error_bound_rejected(self):
        with pytest.raises(StructuralError):
            select(SelectionRule.threshold(0.5), np.array([-1.0, 2.0]))

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30),
           st.floats(0, 1))
    def test_threshold_superset_of_top_rho(self, E, sigma):
        E = np.asarray(E)
        thr = set(select(SelectionRule.threshold(sigma), E).tolist())
        top = set(select(SelectionRule.top_rho(1.0), E).tolist())
        assert top <= thr
        assert int(np.argmax(E)) in thr

    def test_invalid_params(self):
        with pytest.raises(StructuralError):
            SelectionRule.threshold(1.5)
        with pytest.raises(StructuralError):
            SelectionRule.top_rho(0.0)


class TestStepSchedule:
    def test_plain_recursion(self):
        s = StepSchedule.plain(0.9, 1e-7)
        g1 = step_update(s)
        assert g1 == pytest.approx(0.9 * (1 - 1e-7 * 0.9), rel=0, abs=0)

    def test_merit_scaled_at_floor_matches_plain(self):
        s1 = StepSchedule(mode="merit_scaled", gamma0=0.9, theta=1e-7)
        s2 = StepSchedule.plain(0.9, 1e-7)
        assert step_update(s1, merit=1e-4) == step_update(s2)

    def test_merit_scaled_damping(self):
        s = StepSchedule(mode="merit_scaled", gamma0=0.9, theta=1e-7)
        got = step_update(s, merit=1.0)
        assert got == pytest.approx(0.9 * (1 - 1e-4 * 1e-7 * 0.9), rel=1e-15)

    def test_square_sum_telescopes(self):
        # gamma_k - gamma_{k+1} = theta gamma_k^2 means the square sum is
        # exactly (gamma0 - lim gamma)/theta; check over 1e6 steps
        theta = 0.5
        s = StepSchedule.plain(0.9, theta)
        gam = np.empty(10**6)
        gam[0] = s.gamma
        for i in range(1, 10**6):
            gam[i] = step_update(s)
        assert np.all(gam > 0) and np.all(np.diff(gam) < 0) and np.all(gam <= 1)
        sq = float(np.sum(gam * gam))
        tail = gam[-1] / theta
        assert abs(sq + tail - 0.9 / theta) <= 1e-6
        # gamma ~ 1/(theta k): every late decade window adds about
        # ln(10)/theta to the plain sum, so it grows without bound
        decade = np.log(10.0) / theta
        assert float(np.sum(gam[10**4:10**5])) > 0.9 * decade
        assert float(np.sum(gam[10**5:])) > 0.9 * decade

    def test_bounds_validated(self):
        with pytest.raises(StructuralError):
            StepSchedule.plain(1.5, 1e-7)
        with pytest.raises(StructuralError):
            StepSchedule.plain(0.9, 1.0)


class TestEpsSchedule:
    def test_cap_and_formula(self, rng):
        e = EpsSchedule(alpha1=1.0, alpha2=10.0)
        norms = rng.uniform(0, 5, size=20)
        gamma = 0.7
        eps = e.targets(gamma, norms)
        assert np.all(eps <= e.cap(gamma) + 1e-15)
        for eps_i, nm in zip(eps, norms):
            want = gamma * min(10.0, 1.0 / nm) if nm > 0 else gamma * 10.0
            assert eps_i == pytest.approx(want, rel=1e-12)

    def test_positive_params_required(self):
        with pytest.raises(StructuralError):
            EpsSchedule(alpha1=0.0)


class TestTauUpdate:
    def test_double_on_equal_objective(self):
        state = TauState()
        action, discard = tau_update(TauPolicy(), state, 5.0, 5.0, merit=1.0)
        assert action == "double" and discard
        assert state.scale == 2.0 and state.updates_used == 1

    def test_halve_after_ten_decreases(self):
        pol, state = TauPolicy(), TauState()
        for i in range(9):
            action, _ = tau_update(pol, state, 5.0 - i, 6.0 - i, merit=1.0)
            assert action == "keep"
        action, _ = tau_update(pol, state, -5.0, -4.0, merit=1.0)
        assert action == "halve" and state.scale == 0.5
        assert state.decrease_streak == 0

    def test_halve_on_small_merit(self):
        pol, state = TauPolicy(), TauState()
        state.decrease_streak = 3
        action, discard = tau_update(pol, state, 4.0, 5.0, merit=5e-3)
        assert action == "halve" and not discard

    def test_streak_resets_on_non_decrease(self):
        pol, state = TauPolicy(double_on_increase=False), TauState()
        state.decrease_streak = 7
        tau_update(pol, state, 5.0, 5.0, merit=1.0)
        assert state.decrease_streak == 0

    def test_budget_enforced(self):
        pol, state = TauPolicy(max_updates=100), TauState()
        for _ in range(150):
            tau_update(pol, state, 5.0, 4.0, merit=1e-9)
        assert state.updates_used == 100
        action, _ = tau_update(pol, state, 10.0, 4.0, merit=1e-9)
        assert action == "keep" and state.updates_used == 100

    def test_initial_tau_trace(self):
        p = random_lasso(10, 8, seed=0)
        t0 = TauPolicy(init="trace").initial_tau(p)
        colsq = np.einsum("ij,ij->j", np.asarray(p.oracle.A), np.asarray(p.oracle.A))
        assert t0[0] == pytest.approx(colsq.sum() / (2 * 8), rel=1e-12)
        assert t0.shape == (8,)

    def test_initial_tau_explicit(self):
        p = random_lasso(10, 8, seed=0)
        t0 = TauPolicy(init=np.full(8, 2.5)).initial_tau(p)
        assert np.all(t0 == 2.5)
        with pytest.raises(StructuralError):
            TauPolicy(init=np.ones(3)).initial_tau(p)


class TestRelativeError:
    def test_examples(self):
        assert relative_error(2.0, 1.0) == pytest.approx(1.0)
        assert relative_error(1.0, 1.0) == 0.0
        assert relative_error(1.01, 1.0) == pytest.approx(0.01)

    def test_nonpositive_optimum_unsupported(self):
        with pytest.raises(UnsupportedConfigError):
            relative_error(1.0, 0.0)
        with pytest.raises(UnsupportedConfigError):
            relative_error(1.0, -2.0)


class TestMeritValue:
    def test_re_requires_value(self):
        p = flexa.nesterov_generate(20, 25, 0.1, c=1.0, seed=0)
        x = np.zeros(p.n)
        V = flexa.eval_V(p, x)
        assert merit_value(p, "re", x, V=V) == pytest.approx(
            (V - p.v_star) / p.v_star
        )

    def test_z_variants_on_box(self):
        p = flexa.ncvxqp_instance([[2.0]], [1.0], c=0.1, cbar=1.0, b_box=1.0)
        x = np.array([1.0])  # at the upper bound
        g = p.oracle.full_grad(x)
        z = g - np.clip(g - x, -0.1, 0.1)
        z_inf = merit_value(p, "z_inf", x)
        z_bar = merit_value(p, "z_bar", x)
        assert z_inf == pytest.approx(abs(float(z[0])))
        if z[0] <= 0:
            assert z_bar == 0.0

    def test_unknown_merit(self):
        p = random_lasso(5, 4, seed=1)
        with pytest.raises(StructuralError):
            merit_value(p, "bogus", np.zeros(4))


class TestErrorBound:
    def test_zero_at_fixed_point(self):
        p = flexa.nesterov_generate(20, 30, 0.1, c=1.0, seed=1)
        x_star = p.known_optimum[0]
        for i in range(0, p.blocks.N, 7):
            assert error_bound(p, "exact_block", i, x_star, 1.0) <= 1e-8

    def test_dead_zone_block(self):
        p = flexa.lasso_instance([[1.0]], [1.0], c=3.0)
        assert error_bound(p, "exact_block", 0, np.zeros(1), 1.0) == 0.0

    def test_near_unregularized_solution(self):
        reg = flexa.SeparableRegularizer("zero")
        p = flexa.ProblemInstance(
            oracle=flexa.QuadraticOracle([[1.0]], [1.0]),
            reg=reg,
            blocks=flexa.BlockStructure.scalar(1),
            feasible=flexa.FeasibleSet.unbounded(1),
        )
        e = error_bound(p, "exact_block", 0, np.zeros(1), 1e-8)
        assert e == pytest.approx(1.0, abs=1e-7)

    def test_iterative_block_needs_supplied_response(self, rng):
        p = random_group_lasso(10, [4, 4], c=0.5, seed=2)
        x = rng.normal(size=8)
        with pytest.raises(UnsupportedConfigError):
            error_bound(p, "exact_block", 0, x, 1.0)
        z, _ = flexa.best_response_block(p, "exact_block", 0, x, 1.0, 1e-10)
        got = error_bound(p, "exact_block", 0, x, 1.0, z_i=z)
        assert got == pytest.approx(float(np.linalg.norm(z - x[:4])))
