import numpy as np
import pytest

import flexa
from flexa.baselines import SparsaState, _next_momentum, fista_solve, sparsa_solve
from flexa.errors import StructuralError
from flexa.solvers import TRACE_HEADER

from conftest import power_iteration, random_lasso


def quadratic_scalar_instance():
    # F = (x - 1)^2, no regularizer, unbounded
    return flexa.ProblemInstance(
        oracle=flexa.QuadraticOracle([[1.0]], [1.0]),
        reg=flexa.SeparableRegularizer("zero"),
        blocks=flexa.BlockStructure.scalar(1),
        feasible=flexa.FeasibleSet.unbounded(1),
    )


class TestFista:
    def test_momentum_recursion(self):
        assert _next_momentum(1.0) == pytest.approx((1 + np.sqrt(5)) / 2, rel=1e-15)
        t = 1.0
        for _ in range(20):
            t_next = _next_momentum(t)
            assert t_next >= t >= 1.0
            t = t_next

    def test_scalar_quadratic(self):
        p = quadratic_scalar_instance()
        x, trace, status = fista_solve(p, tol=1e-10, max_iters=200)
        assert status.converged and status.iterations <= 200
        assert abs(x[0] - 1.0) <= 1e-10

    def test_matches_naive_momentum_reference(self):
        # G = 0 and L fixed at the true constant: the naive accelerated
        # gradient recursion must reproduce our iterates exactly
        rng = np.random.default_rng(0)
        A = rng.normal(size=(15, 10))
        b = rng.normal(size=15)
        p = flexa.ProblemInstance(
            oracle=flexa.QuadraticOracle(A, b),
            reg=flexa.SeparableRegularizer("zero"),
            blocks=flexa.BlockStructure.scalar(10),
            feasible=flexa.FeasibleSet.unbounded(10),
        )
        L = 2.0 * power_iteration(lambda v: A.T @ (A @ v), 10, iters=5000) * 1.0001
        x_ours, trace, status = fista_solve(p, tol=0.0, max_iters=50, L0=L)

        x = np.zeros(10)
        y = x.copy()
        t = 1.0
        for _ in range(50):
            g = 2 * A.T @ (A @ y - b)
            x_new = y - g / L
            t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
            y = x_new + ((t - 1) / t_new) * (x_new - x)
            x, t = x_new, t_new
        assert np.max(np.abs(x_ours - x)) <= 1e-12 * max(1.0, np.abs(x).max())

    def test_rejects_nonconvex_smooth_part(self):
        p = flexa.ncvxqp_instance([[1.0]], [1.0], c=0.5, cbar=0.2, b_box=1.0)
        with pytest.raises(StructuralError):
            fista_solve(p, tol=1e-4, max_iters=10)
        with pytest.warns(RuntimeWarning):
            fista_solve(p, tol=1e-4, max_iters=10, merit="z_bar",
                        force_nonconvex=True)

    def test_desk_lasso_convergence(self):
        p = flexa.nesterov_generate(300, 400, 0.05, c=1.0, seed=1)
        x, trace, status = fista_solve(p, tol=1e-6, max_iters=5000, merit="re")
        assert status.converged

    def test_trace_schema(self, tmp_path):
        p = quadratic_scalar_instance()
        _, trace, _ = fista_solve(p, tol=1e-8, max_iters=50)
        f = tmp_path / "t.csv"
        trace.write_csv(f)
        assert f.read_text().splitlines()[0] == TRACE_HEADER


class TestSparsa:
    def test_parameter_defaults(self):
        s = SparsaState(x=np.zeros(1))
        assert s.M == 5 and s.sigma == 0.01
        assert s.alpha_min == 1e-30 and s.alpha_max == 1e30
        assert s.alpha == 1.0

    def test_first_step_uses_unit_alpha(self):
        # well-conditioned scalar problem accepts the very first
        # candidate, which is prox(x0 - 1 * grad)
        p = flexa.ProblemInstance(
            oracle=flexa.QuadraticOracle([[0.5]], [0.5]),
            reg=flexa.SeparableRegularizer("zero"),
            blocks=flexa.BlockStructure.scalar(1),
            feasible=flexa.FeasibleSet.unbounded(1),
        )
        x, trace, status = sparsa_solve(p, tol=0.0, max_iters=1)
        g0 = p.oracle.full_grad(np.zeros(1))
        assert x[0] == pytest.approx(-g0[0], rel=1e-15)

    def test_desk_lasso_reaches_1e4(self):
        p = flexa.nesterov_generate(300, 400, 0.05, c=1.0, seed=2)
        x, trace, status = sparsa_solve(p, tol=1e-4, max_iters=5000, merit="re")
        assert status.converged
        assert (flexa.eval_V(p, x) - p.v_star) / p.v_star <= 1e-4

    def test_nonmonotone_acceptance_never_violated(self):
        # replay the accepted objective path against the recorded history
        p = random_lasso(40, 50, c=0.7, seed=3)
        x, trace, status = sparsa_solve(p, tol=1e-6, max_iters=400, merit="z_inf")
        V = trace.V
        for k in range(1, len(V)):
            window = V[max(0, k - 5):k]
            assert V[k] <= max(window) + 1e-9 * (1 + abs(V[k]))

    def test_handles_nonconvex(self):
        p = flexa.ncvxqp_instance([[2.0], [1.0]], [1.0, 0.5], c=0.1, cbar=0.5,
                                  b_box=2.0)
        x, trace, status = sparsa_solve(p, tol=1e-6, max_iters=500, merit="z_bar")
        assert status.converged

    def test_trace_schema(self, tmp_path):
        p = quadratic_scalar_instance()
        _, trace, _ = sparsa_solve(p, tol=1e-8, max_iters=50)
        f = tmp_path / "t.csv"
        trace.write_csv(f)
        assert f.read_text().splitlines()[0] == TRACE_HEADER


class TestFistaRateBound:
    def test_classical_rate_on_desk_lasso(self):
        p = flexa.nesterov_generate(150, 200, 0.05, c=1.0, seed=4)
        x_star, v_star = p.known_optimum
        A = np.asarray(p.oracle.A)
        L_true = 2.0 * power_iteration(lambda v: A.T @ (A @ v), 200, iters=3000)
        x, trace, status = fista_solve(p, tol=0.0, max_iters=500, merit="re")
        d0 = float(np.sum(x_star**2))
        V = np.asarray(trace.V)
        for k in range(len(V)):
            bound = 2.0 * L_true * d0 / (k + 1) ** 2
            assert V[k] - v_star <= bound * 1.01 + 1e-12
