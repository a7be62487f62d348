"""Block subproblems and their (in)exact best responses.

For block ``i`` at the point ``x`` the solvers minimize a regularized
convex model of the objective,

    htilde_i(z; x) = P_i(z; x) + (tau_i / 2) ||z - x_i||^2 + g_i(z)

over the block's box, where ``P_i`` is one of three approximations of the
smooth part:

* ``LINEARIZED``        first-order model at ``x``
* ``EXACT_BLOCK``       the smooth part itself as a function of block i
* ``SECOND_ORDER_DIAG`` quadratic model with the diagonal of the block
  Hessian

All three match the gradient of the smooth part at ``x_i`` (inside their
block), and with ``tau_i`` large enough the model is strongly convex, so
the minimizer ``xhat_i(x, tau_i)`` is unique.  Whenever the model is a
diagonal quadratic and ``g_i`` is separable (or a group norm with uniform
weights) the minimizer has a soft-thresholding closed form; otherwise an
accelerated proximal-gradient inner loop produces a point with a
certified distance bound ``||z - xhat_i|| <= achieved_eps`` derived from
strong convexity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import CurvatureError, UnsupportedConfigError
from .model import (
    ProblemInstance,
    SmoothCache,
    block_soft_threshold,
    soft_threshold,
)
from .problems import LogisticOracle, QuadraticOracle

Q_MIN_DEFAULT = 1e-12
INNER_BUDGET_DEFAULT = 2000


class ApproximationKind(enum.Enum):
    LINEARIZED = "linearized"
    EXACT_BLOCK = "exact_block"
    SECOND_ORDER_DIAG = "second_order_diag"

    @classmethod
    def parse(cls, name) -> "ApproximationKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise UnsupportedConfigError(f"unknown approximation kind {name!r}")


@dataclass
class ProxWeights:
    """Per-block proximal coefficients; the quadratic weight matrix is
    fixed to the identity, so ``tau[i]`` alone sets each block's term."""

    tau: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        if np.any(self.tau < 0):
            raise CurvatureError("tau must be nonnegative")


# ---------------------------------------------------------------------------
# model curvature


def _is_quadratic(p: ProblemInstance) -> bool:
    return isinstance(p.oracle, QuadraticOracle)


def model_diag(p: ProblemInstance, kind: ApproximationKind, x=None, cache=None):
    """Per-coordinate curvature of the smooth model (without ``tau``).

    Returns None when the model is not a diagonal quadratic (the
    exact-block model of a non-quadratic smooth part).
    """
    kind = ApproximationKind.parse(kind)
    n = p.n
    if kind is ApproximationKind.LINEARIZED:
        return np.zeros(n)
    if kind is ApproximationKind.EXACT_BLOCK:
        if _is_quadratic(p):
            return p.oracle.diag_curvature()
        return None
    # second-order diagonal model
    if cache is not None:
        return cache.diag_curvature()
    return p.oracle.diag_curvature(x)


def subproblem_curvature(
    p: ProblemInstance,
    kind: ApproximationKind,
    i: int,
    x: np.ndarray,
    tau_i: float,
    q_min: float = Q_MIN_DEFAULT,
) -> np.ndarray:
    """Diagonal curvature of block ``i``'s model including the proximal
    term; raises :class:`CurvatureError` when it is not safely positive
    (the signal that ``tau`` must be raised)."""
    kind = ApproximationKind.parse(kind)
    if tau_i < 0:
        raise CurvatureError("tau must be nonnegative")
    sl = p.blocks.block_slice(i)
    diag = model_diag(p, kind, x=x)
    if diag is None:
        # exact block of a non-quadratic convex smooth part: the model
        # curvature is at least the proximal term everywhere
        d = np.full(sl.stop - sl.start, tau_i)
    else:
        d = diag[sl] + tau_i
    if np.any(d <= q_min):
        raise CurvatureError(
            f"block {i} subproblem not strongly convex "
            f"(min curvature {float(np.min(d)):.3e} <= {q_min:.1e}); raise tau"
        )
    return d


def tau_floors(
    p: ProblemInstance, kind: ApproximationKind, q_min: float = Q_MIN_DEFAULT
) -> np.ndarray:
    """Smallest per-block ``tau`` keeping every subproblem strongly convex.

    Zero for blocks whose model already has positive curvature; for the
    nonconvex QP under the exact-block or second-order model this is
    ``q_min + 2 cbar - 2 ||a_j||^2`` on the offending blocks.
    """
    kind = ApproximationKind.parse(kind)
    diag = model_diag(p, kind, x=np.zeros(p.n))
    floors = np.empty(p.blocks.N)
    if diag is None:
        floors.fill(q_min)
        return floors
    for i in range(p.blocks.N):
        sl = p.blocks.block_slice(i)
        floors[i] = max(0.0, q_min - float(np.min(diag[sl])))
    return floors


# ---------------------------------------------------------------------------
# closed-form responses


def scalar_closed_form(p, x, grad, d):
    """Vectorized best responses when every block is scalar and the model
    is a diagonal quadratic with curvatures ``d``.

    The model minimizer is ``u = x - grad / d``; for the l1 penalty the
    block solution is ``soft_threshold(u, c/d)`` clipped to the box (in
    one dimension the constrained minimizer of a strongly convex function
    is the clipped unconstrained one).
    """
    u = x - grad / d
    if p.reg.kind == "l1":
        z = soft_threshold(u, p.reg.c / d)
    elif p.reg.kind == "zero":
        z = u
    else:
        raise UnsupportedConfigError("scalar closed form needs l1 or zero penalty")
    return np.clip(z, p.feasible.lo, p.feasible.hi)


def _block_closed_form(p, sl, x_i, g_i, d):
    """Closed-form block response for diagonal models, or None."""
    lo, hi = p.feasible.lo[sl], p.feasible.hi[sl]
    u = x_i - g_i / d
    if p.reg.kind == "l1":
        return np.clip(soft_threshold(u, p.reg.c / d), lo, hi)
    if p.reg.kind == "zero":
        return np.clip(u, lo, hi)
    # group_l2: closed form only for uniform curvature and no box
    if np.all(d == d.flat[0]) and np.all(np.isneginf(lo)) and np.all(np.isposinf(hi)):
        dd = float(d.flat[0])
        return block_soft_threshold(u, p.reg.c / dd)
    return None


# ---------------------------------------------------------------------------
# iterative inner solver with certified accuracy


class _BlockModel:
    """Smooth part of one block subproblem: value/gradient of
    ``P_i(z; x) + (tau/2)||z - x_i||^2`` and a strong convexity bound."""

    def __init__(self, p, kind, i, x, tau_i, cache=None):
        self.sl = p.blocks.block_slice(i)
        self.x_i = x[self.sl].copy()
        self.tau = float(tau_i)
        self.kind = kind
        oracle = p.oracle
        if kind is ApproximationKind.SECOND_ORDER_DIAG:
            diag = (cache.diag_curvature() if cache is not None
                    else oracle.diag_curvature(x))
            self.D = diag[self.sl]
            self.g0 = (cache.full_grad()[self.sl] if cache is not None
                       else oracle.grad_block(x, p.blocks, i))
            self.q = float(np.min(self.D)) + self.tau
            self.L0 = float(np.max(self.D)) + self.tau
        elif kind is ApproximationKind.EXACT_BLOCK:
            if isinstance(oracle, QuadraticOracle):
                self.A_i = oracle.A[:, self.sl]
                if cache is not None:
                    r = cache.r
                else:
                    r = np.asarray(oracle.A @ x).ravel() - oracle.b
                self.r0 = r - np.asarray(self.A_i @ self.x_i).ravel()
                self.cbar = oracle.cbar
                colsq = oracle.column_sq_norms[self.sl]
                # lambda_min(2 A_i^T A_i) >= 0 is the only safe bound, so
                # the certified convexity constant is tau - 2 cbar
                self.q = self.tau - 2.0 * self.cbar
                self.L0 = 2.0 * float(np.sum(colsq)) + self.tau
            elif isinstance(oracle, LogisticOracle):
                self.Y_i = oracle.Y[:, self.sl]
                self.labels = oracle.labels
                if cache is not None:
                    w = cache.w
                else:
                    w = oracle.labels * (np.asarray(oracle.Y @ x).ravel())
                self.w0 = w - oracle.labels * np.asarray(self.Y_i @ self.x_i).ravel()
                self.q = self.tau
                if hasattr(self.Y_i, "multiply"):
                    colsq = np.asarray(self.Y_i.multiply(self.Y_i).sum(axis=0)).ravel()
                else:
                    colsq = np.einsum("ji,ji->i", self.Y_i, self.Y_i)
                self.L0 = 0.25 * float(np.sum(colsq)) + self.tau
            else:
                raise UnsupportedConfigError(
                    "exact-block model needs a quadratic or logistic smooth part"
                )
        else:
            raise UnsupportedConfigError("linearized model always has a closed form")
        if self.q <= 0:
            raise CurvatureError("inner subproblem has no positive convexity bound")

    def value(self, z):
        prox = 0.5 * self.tau * float(np.sum((z - self.x_i) ** 2))
        if self.kind is ApproximationKind.SECOND_ORDER_DIAG:
            dz = z - self.x_i
            return float(self.g0 @ dz + 0.5 * dz @ (self.D * dz)) + prox
        if hasattr(self, "A_i"):
            res = self.r0 + np.asarray(self.A_i @ z).ravel()
            val = float(res @ res) - self.cbar * float(z @ z)
            return val + prox
        w = self.w0 + self.labels * np.asarray(self.Y_i @ z).ravel()
        return float(np.sum(np.logaddexp(0.0, -w))) + prox

    def grad(self, z):
        prox = self.tau * (z - self.x_i)
        if self.kind is ApproximationKind.SECOND_ORDER_DIAG:
            return self.g0 + self.D * (z - self.x_i) + prox
        if hasattr(self, "A_i"):
            res = self.r0 + np.asarray(self.A_i @ z).ravel()
            return 2.0 * np.asarray(self.A_i.T @ res).ravel() - 2.0 * self.cbar * z + prox
        from scipy.special import expit

        w = self.w0 + self.labels * np.asarray(self.Y_i @ z).ravel()
        p_ = expit(-w)
        return -np.asarray(self.Y_i.T @ (self.labels * p_)).ravel() + prox


def _prox_grad_inner(model, reg, lo, hi, z0, eps_target, budget):
    """Accelerated proximal gradient on one block subproblem.

    Stops when the certified distance ``||subgradient|| / q`` drops to
    ``eps_target``; returns ``(z, certified_bound, converged)``.
    """
    L = max(model.q, model.L0 / 64.0, 1e-12)
    z = z0.copy()
    y = z0.copy()
    t = 1.0
    best = (math.inf, z0)
    for _ in range(budget):
        gy = model.grad(y)
        vy = model.value(y)
        for _bt in range(80):
            cand = reg.weighted_prox(y - gy / L, np.full(y.size, L), lo, hi)
            diff = cand - y
            quad = vy + float(gy @ diff) + 0.5 * L * float(diff @ diff)
            if model.value(cand) <= quad + 1e-12 * (1.0 + abs(vy)):
                break
            L *= 2.0
        xi = model.grad(cand) - gy - L * diff
        cert = float(np.linalg.norm(xi)) / model.q
        if cert < best[0]:
            best = (cert, cand)
        if cert <= eps_target:
            return cand, cert, True
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = cand + ((t - 1.0) / t_next) * (cand - z)
        z = cand
        t = t_next
    return best[1], best[0], False


# ---------------------------------------------------------------------------
# public best-response entry points


def best_response_block(
    p: ProblemInstance,
    kind,
    i: int,
    x: np.ndarray,
    tau_i: float,
    eps_i: float = 0.0,
    q_min: float = Q_MIN_DEFAULT,
    inner_budget: int = INNER_BUDGET_DEFAULT,
    cache: SmoothCache = None,
):
    """Compute ``z_i`` with ``||z_i - xhat_i(x, tau_i)|| <= eps_i``.

    Returns ``(z_i, achieved_eps)`` where ``achieved_eps`` is a valid
    upper bound on the distance to the exact block minimizer (0 on
    closed-form paths).  When the inner solver exhausts its budget the
    best iterate is returned with its certified ``achieved_eps > eps_i``.
    """
    kind = ApproximationKind.parse(kind)
    if eps_i < 0:
        raise UnsupportedConfigError("eps must be nonnegative")
    sl = p.blocks.block_slice(i)
    x_i = x[sl]
    diag = model_diag(p, kind, x=x, cache=cache)
    if diag is not None:
        d = diag[sl] + tau_i
        if np.any(d <= q_min):
            raise CurvatureError(
                f"block {i} subproblem not strongly convex; raise tau"
            )
        g_i = (cache.block_grad(p.blocks, i) if cache is not None
               else p.oracle.grad_block(x, p.blocks, i))
        z = _block_closed_form(p, sl, x_i, g_i, d)
        if z is not None:
            return z, 0.0
    model = _BlockModel(p, kind, i, x, tau_i, cache=cache)
    floor = 1e-12 * (1.0 + float(np.linalg.norm(x_i)))
    z, cert, _ = _prox_grad_inner(
        model, p.reg, p.feasible.lo[sl], p.feasible.hi[sl],
        x_i, max(eps_i, floor), inner_budget,
    )
    return z, cert


def best_response_full(
    p: ProblemInstance,
    kind,
    x: np.ndarray,
    tau,
    eps=0.0,
    pool=None,
    q_min: float = Q_MIN_DEFAULT,
    inner_budget: int = INNER_BUDGET_DEFAULT,
):
    """Best responses for every block; blocks are independent, so they can
    be evaluated concurrently without changing the result.

    Returns ``(z, achieved)`` with ``z`` the concatenated responses and
    ``achieved`` the per-block certified bounds.
    """
    kind = ApproximationKind.parse(kind)
    N = p.blocks.N
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (N,))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (N,))
    z = np.array(x, dtype=float)
    achieved = np.zeros(N)

    def solve_range(rng):
        for i in range(rng[0], rng[1]):
            z_i, a_i = best_response_block(
                p, kind, i, x, tau[i], eps[i], q_min=q_min, inner_budget=inner_budget
            )
            z[p.blocks.block_slice(i)] = z_i
            achieved[i] = a_i

    from .engine import chunk_ranges

    ranges = chunk_ranges(N)
    if pool is not None:
        pool.map(solve_range, ranges)
    else:
        for rng in ranges:
            solve_range(rng)
    return z, achieved
