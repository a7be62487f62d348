"""Outer-iteration steering: greedy block selection, step-size and
inexactness schedules, proximal-weight adaptation, and merit functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import StructuralError, UnsupportedConfigError
from .model import ProblemInstance, stationarity_residual
from .subprob import ApproximationKind, best_response_block, model_diag


# ---------------------------------------------------------------------------
# selection


@dataclass
class SelectionRule:
    """Which blocks to update, ranked by the error bounds ``E_i``.

    ``threshold(sigma)`` keeps every block with ``E_i >= sigma * max_j E_j``
    (``sigma = 0`` updates everything, the fully parallel scheme);
    ``top_rho(rho)`` keeps a single maximizer, the greedy Gauss-Southwell
    choice.  Both always contain an argmax of ``E``, which is what the
    convergence theory asks of the selected set.
    """

    mode: str = "threshold"
    sigma: float = 0.5
    rho: float = 1.0

    def __post_init__(self):
        if self.mode not in ("threshold", "top_rho"):
            raise StructuralError(f"unknown selection mode {self.mode!r}")
        if self.mode == "threshold" and not 0.0 <= self.sigma <= 1.0:
            raise StructuralError("sigma must lie in [0, 1]")
        if self.mode == "top_rho" and not 0.0 < self.rho <= 1.0:
            raise StructuralError("rho must lie in (0, 1]")

    @classmethod
    def threshold(cls, sigma: float) -> "SelectionRule":
        return cls(mode="threshold", sigma=sigma)

    @classmethod
    def top_rho(cls, rho: float = 1.0) -> "SelectionRule":
        return cls(mode="top_rho", rho=rho)


def select(rule: SelectionRule, E: np.ndarray) -> np.ndarray:
    """Indices of the blocks to update this iteration.

    With an all-zero ``E`` the full set comes back; the caller detects
    convergence from the merit, not from here.
    """
    E = np.asarray(E, dtype=float)
    if np.any(E < 0):
        raise StructuralError("error bounds must be nonnegative")
    M = float(np.max(E)) if E.size else 0.0
    if M == 0.0:
        return np.arange(E.size)
    if rule.mode == "top_rho":
        return np.array([int(np.argmax(E))])
    return np.flatnonzero(E >= rule.sigma * M)


# ---------------------------------------------------------------------------
# step-size schedule


@dataclass
class StepSchedule:
    """Diminishing step size ``gamma``.

    ``plain`` follows ``gamma <- gamma * (1 - theta * gamma)``, which for
    ``theta in (0, 1)`` keeps ``gamma in (0, 1]``, decreases strictly, and
    satisfies ``sum gamma = inf`` with ``sum gamma^2 = gamma0 / theta <
    inf`` (the recursion telescopes: ``gamma_k - gamma_{k+1} =
    theta * gamma_k^2``).  ``merit_scaled`` damps the decay by
    ``min(1, merit_floor / merit)`` so the step does not shrink before the
    merit is small.
    """

    mode: str = "merit_scaled"
    gamma0: float = 0.9
    theta: float = 1e-7
    merit_floor: float = 1e-4
    gamma: float = field(init=False)

    def __post_init__(self):
        if self.mode not in ("plain", "merit_scaled"):
            raise StructuralError(f"unknown step mode {self.mode!r}")
        if not 0.0 < self.gamma0 <= 1.0:
            raise StructuralError("gamma0 must lie in (0, 1]")
        if not 0.0 < self.theta < 1.0:
            raise StructuralError("theta must lie in (0, 1)")
        self.gamma = self.gamma0

    @classmethod
    def plain(cls, gamma0=0.9, theta=1e-7) -> "StepSchedule":
        return cls(mode="plain", gamma0=gamma0, theta=theta)


def step_update(s: StepSchedule, merit: Optional[float] = None) -> float:
    """Advance the schedule one iteration and return the new ``gamma``."""
    g = s.gamma
    if s.mode == "plain":
        g = g * (1.0 - s.theta * g)
    else:
        if merit is None or not np.isfinite(merit):
            damp = 1.0
        elif merit <= s.merit_floor:
            damp = 1.0
        else:
            damp = s.merit_floor / merit
        g = g * (1.0 - damp * s.theta * g)
    if not 0.0 < g <= 1.0:
        raise StructuralError(f"step size left (0, 1]: {g}")
    s.gamma = g
    return g


# ---------------------------------------------------------------------------
# inexactness schedule


@dataclass
class EpsSchedule:
    """Per-block accuracy targets ``eps_i = gamma * a1 * min(a2, 1/||g_i||)``.

    Satisfies the summability requirement of the convergence theory by
    construction; blocks solved in closed form simply get ``eps_i = 0``.
    """

    alpha1: float = 1.0
    alpha2: float = 10.0

    def __post_init__(self):
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise StructuralError("alpha1 and alpha2 must be positive")

    def targets(self, gamma: float, grad_block_norms: np.ndarray) -> np.ndarray:
        norms = np.asarray(grad_block_norms, dtype=float)
        with np.errstate(divide="ignore"):
            inv = np.where(norms > 0, 1.0 / np.maximum(norms, 1e-300), np.inf)
        eps = gamma * self.alpha1 * np.minimum(self.alpha2, inv)
        return eps

    def cap(self, gamma: float) -> float:
        return gamma * self.alpha1 * self.alpha2


# ---------------------------------------------------------------------------
# proximal-weight adaptation


@dataclass
class TauPolicy:
    """Initialization and doubling/halving heuristic for the proximal
    weights.

    ``init='trace'`` starts every ``tau_i`` at ``tr(M^T M) / 2n`` for the
    backend's data matrix (half the mean eigenvalue of its Gram matrix);
    an explicit vector is also accepted.  While the budget lasts: all
    weights double when the objective fails to decrease (discarding the
    iteration), and halve after ten consecutive decreases or once the
    merit is small.
    """

    init: Union[str, np.ndarray] = "trace"
    double_on_increase: bool = True
    halve_after_decreases: int = 10
    halve_when_merit_below: float = 1e-2
    max_updates: int = 100
    discard_on_double: bool = True

    def initial_tau(self, p: ProblemInstance) -> np.ndarray:
        if isinstance(self.init, str):
            if self.init in ("trace", "lasso_trace", "logistic_trace"):
                col_sq = p.oracle.column_sq_norms if hasattr(
                    p.oracle, "column_sq_norms"
                ) else None
                if col_sq is None:
                    from .problems import _column_sq_norms

                    col_sq = _column_sq_norms(p.oracle.Y)
                t0 = float(np.sum(col_sq)) / (2.0 * p.n)
                return np.full(p.blocks.N, t0)
            raise StructuralError(f"unknown tau init {self.init!r}")
        tau = np.asarray(self.init, dtype=float)
        if tau.size == 1:
            tau = np.full(p.blocks.N, tau.item())
        if tau.shape != (p.blocks.N,):
            raise StructuralError("explicit tau must have one entry per block")
        if np.any(tau < 0):
            raise StructuralError("tau must be nonnegative")
        return tau.copy()

    @classmethod
    def fixed(cls, tau) -> "TauPolicy":
        """No adaptation; tau stays at the given value(s)."""
        return cls(init=np.asarray(tau, dtype=float) if not np.isscalar(tau) else tau,
                   double_on_increase=False, max_updates=0)

    def __post_init__(self):
        if np.isscalar(self.init) and not isinstance(self.init, str):
            self.init = np.asarray([float(self.init)])  # promoted per-block later


@dataclass
class TauState:
    """Adaptation counters carried across iterations."""

    scale: float = 1.0
    decrease_streak: int = 0
    updates_used: int = 0


def tau_update(
    policy: TauPolicy, state: TauState, V_new: float, V_old: float, merit: float
) -> tuple:
    """One adaptation decision; returns ``(action, discard)`` with action
    in {'double', 'halve', 'keep'} and mutates the counters.

    'Does not decrease' is non-strict (``V_new >= V_old``), matching the
    roll-back semantics; a discarded iteration must leave the iterate
    untouched.  The total number of scale actions is capped.
    """
    budget_left = state.updates_used < policy.max_updates
    if V_new >= V_old:
        state.decrease_streak = 0
        if policy.double_on_increase and budget_left:
            state.scale *= 2.0
            state.updates_used += 1
            return "double", policy.discard_on_double
        return "keep", False
    state.decrease_streak += 1
    if budget_left and (
        state.decrease_streak >= policy.halve_after_decreases
        or merit <= policy.halve_when_merit_below
    ):
        state.scale *= 0.5
        state.updates_used += 1
        state.decrease_streak = 0
        return "halve", False
    return "keep", False


# ---------------------------------------------------------------------------
# merits and error bounds


def relative_error(V: float, V_star: float) -> float:
    """Relative objective gap ``(V - V*) / V*``; needs ``V* > 0`` (every
    generated benchmark instance has a positive optimal value)."""
    if V_star is None or V_star <= 0:
        raise UnsupportedConfigError(
            "relative objective error needs a known positive optimal value"
        )
    return (V - V_star) / V_star


MERITS = ("re", "z_inf", "z_bar")


def merit_value(
    p: ProblemInstance,
    mode: str,
    x: np.ndarray,
    V: Optional[float] = None,
    grad: Optional[np.ndarray] = None,
) -> float:
    """Convergence measure at ``x``.

    ``re``     relative objective error (needs a known optimum);
    ``z_inf``  infinity norm of the prox-gradient residual;
    ``z_bar``  the same residual with components pushing against an
               active bound zeroed out.
    """
    if mode == "re":
        if V is None:
            raise StructuralError("re merit needs the objective value")
        return relative_error(V, p.v_star)
    if mode == "z_bar":
        return stationarity_residual(p, x, grad=grad)
    if mode == "z_inf":
        g = p.oracle.full_grad(x) if grad is None else grad
        if p.reg.kind == "l1":
            c = p.reg.c
            return float(np.max(np.abs(g - np.clip(g - x, -c, c))))
        return stationarity_residual(p, x, grad=g)
    raise StructuralError(f"unknown merit {mode!r}")


def error_bound(
    p: ProblemInstance,
    kind,
    i: int,
    x: np.ndarray,
    tau_i: float,
    z_i: Optional[np.ndarray] = None,
) -> float:
    """Distance proxy ``E_i = ||xhat_i(x, tau_i) - x_i||``.

    Uses the supplied response when given (treating it as exact);
    otherwise the block must admit a closed form.
    """
    sl = p.blocks.block_slice(i)
    if z_i is None:
        kind = ApproximationKind.parse(kind)
        if model_diag(p, kind, x=x) is None:
            raise UnsupportedConfigError(
                "no closed-form response for this block; pass the computed z_i"
            )
        z_i, achieved = best_response_block(p, kind, i, x, tau_i, 0.0)
        if achieved > 0.0:
            raise UnsupportedConfigError(
                "no closed-form response for this block; pass the computed z_i"
            )
    return float(np.linalg.norm(np.asarray(z_i) - x[sl]))
