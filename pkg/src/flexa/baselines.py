"""Reference first-order competitors: accelerated proximal gradient with
backtracking (FISTA) and the spectral nonmonotone scheme (SpaRSA).

Both emit the same trace CSV schema as the main solvers (the ``gamma``
and ``tau_scale`` columns are constant 1 here).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .control import merit_value
from .errors import NumericError, StructuralError
from .model import ProblemInstance, block_soft_threshold, soft_threshold
from .problems import QuadraticOracle
from .solvers import RunTrace, SolveStatus, _Clock, resolve_merit


@dataclass
class FistaState:
    """Accelerated proximal gradient state: iterate, extrapolation point,
    momentum scalar (t >= 1), and the backtracked Lipschitz estimate."""

    x: np.ndarray
    y: np.ndarray
    t: float = 1.0
    L: float = 1.0
    eta: float = 2.0


@dataclass
class SparsaState:
    """Spectral state: iterate, step length alpha (clamped to
    [alpha_min, alpha_max]) and the last M accepted objective values."""

    x: np.ndarray
    alpha: float = 1.0
    M: int = 5
    sigma: float = 0.01
    alpha_min: float = 1e-30
    alpha_max: float = 1e30


def _prox_full(p: ProblemInstance, v: np.ndarray, weight: float) -> np.ndarray:
    """``argmin_z (weight/2)||z - v||^2 + G(z)`` over the feasible box."""
    if p.reg.kind == "l1":
        z = soft_threshold(v, p.reg.c / weight)
        return np.clip(z, p.feasible.lo, p.feasible.hi)
    if p.reg.kind == "zero":
        return p.feasible.project(v)
    out = np.empty_like(v)
    for i in range(p.blocks.N):
        sl = p.blocks.block_slice(i)
        out[sl] = block_soft_threshold(v[sl], p.reg.c / weight)
    return out


def _next_momentum(t: float) -> float:
    return 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))


def fista_solve(
    p: ProblemInstance,
    tol: float = 1e-6,
    max_iters: int = 10000,
    merit: Optional[str] = None,
    L0: float = 1.0,
    eta: float = 2.0,
    force_nonconvex: bool = False,
    deterministic_clock: bool = False,
    max_seconds: Optional[float] = None,
):
    """Accelerated proximal gradient with backtracking on the Lipschitz
    estimate.

    ``x_{k+1} = prox_{G/L}(y_k - grad F(y_k) / L)`` where ``L`` doubles
    until the quadratic model dominates at the candidate; the usual
    momentum recursion drives ``y``.  Nonconvex smooth parts are rejected
    unless ``force_nonconvex`` is set (then a warning is emitted and the
    scheme runs as a heuristic).
    """
    if isinstance(p.oracle, QuadraticOracle) and p.oracle.cbar > 0 and not force_nonconvex:
        raise StructuralError(
            "the smooth part is nonconvex; pass force_nonconvex=True to run anyway"
        )
    if force_nonconvex and isinstance(p.oracle, QuadraticOracle) and p.oracle.cbar > 0:
        warnings.warn("running FISTA on a nonconvex smooth part", RuntimeWarning)
    merit_mode = _baseline_merit(p, merit)
    x = p.feasible.project(np.zeros(p.n))
    state = FistaState(x=x, y=x.copy(), L=float(L0), eta=float(eta))
    cache = p.oracle.make_cache(x)
    clock = _Clock(deterministic_clock, lambda: cache.flops)
    trace = RunTrace()
    V = cache.value() + p.reg.eval_total(x, p.blocks)
    status, message = "max_iters", ""
    k = 0
    mval = np.inf
    try:
        while True:
            grad_at_x = cache.full_grad() if merit_mode != "re" else None
            mval = merit_value(p, merit_mode, state.x, V=V, grad=grad_at_x)
            if mval <= tol:
                trace.append(k, clock.now(), V, mval, 0, 1.0, 1.0, cache.flops, 0)
                status = "converged"
                break
            if k >= max_iters:
                break
            if max_seconds is not None and clock.now() >= max_seconds:
                status = "timeout"
                break
            cache.refresh(state.y)
            F_y = cache.value()
            g_y = cache.full_grad()
            for doubles in range(61):
                cand = _prox_full(p, state.y - g_y / state.L, state.L)
                diff = cand - state.y
                cache.refresh(cand)
                F_cand = cache.value()
                model = F_y + float(g_y @ diff) + 0.5 * state.L * float(diff @ diff)
                if F_cand <= model + 1e-12 * (1.0 + abs(F_y)):
                    break
                if doubles == 60:
                    raise NumericError("backtracking failed after 60 doublings")
                state.L *= state.eta
            x_prev = state.x
            state.x = cand
            t_next = _next_momentum(state.t)
            state.y = cand + ((state.t - 1.0) / t_next) * (cand - x_prev)
            state.t = t_next
            V_start = V
            V = F_cand + p.reg.eval_total(cand, p.blocks)
            if not np.isfinite(V):
                raise NumericError(f"objective became non-finite ({V})")
            trace.append(k, clock.now(), V_start, mval, p.blocks.N, 1.0, 1.0,
                         cache.flops, 0)
            k += 1
            # cache sits at cand == state.x, where the next merit is taken
    except NumericError as exc:
        status, message = "numeric_error", str(exc)
    return state.x.copy(), trace, SolveStatus(
        status=status, iterations=k, accepted=k, V=V, merit=float(mval),
        wall_seconds=clock.now(), message=message,
        notes={"algorithm": "fista", "merit_mode": merit_mode, "L": state.L},
    )


def sparsa_solve(
    p: ProblemInstance,
    tol: float = 1e-6,
    max_iters: int = 10000,
    merit: Optional[str] = None,
    M: int = 5,
    sigma: float = 0.01,
    alpha_min: float = 1e-30,
    alpha_max: float = 1e30,
    deterministic_clock: bool = False,
    max_seconds: Optional[float] = None,
):
    """Spectral proximal gradient with a nonmonotone acceptance test.

    The step ``alpha`` comes from the Barzilai-Borwein quotient
    ``(s^T s) / (s^T dg)`` of the latest iterate/gradient differences
    (falling back to 1 when the quotient is not positive, which happens on
    nonconvex problems), clamped to ``[alpha_min, alpha_max]``.  A
    candidate ``prox(x - alpha g)`` is accepted when its objective is
    below the max of the last ``M`` accepted values minus
    ``sigma/(2 alpha) ||x+ - x||^2``; otherwise ``alpha`` halves.
    """
    merit_mode = _baseline_merit(p, merit)
    x = p.feasible.project(np.zeros(p.n))
    state = SparsaState(
        x=x, M=int(M), sigma=float(sigma),
        alpha_min=float(alpha_min), alpha_max=float(alpha_max),
    )
    cache = p.oracle.make_cache(x)
    clock = _Clock(deterministic_clock, lambda: cache.flops)
    trace = RunTrace()
    V = cache.value() + p.reg.eval_total(x, p.blocks)
    history = [V]
    g_prev = None
    x_prev = None
    status, message = "max_iters", ""
    k = 0
    mval = np.inf
    try:
        while True:
            g = cache.full_grad()
            mval = merit_value(p, merit_mode, state.x, V=V, grad=g)
            if mval <= tol:
                trace.append(k, clock.now(), V, mval, 0, 1.0, 1.0, cache.flops, 0)
                status = "converged"
                break
            if k >= max_iters:
                break
            if max_seconds is not None and clock.now() >= max_seconds:
                status = "timeout"
                break
            if x_prev is not None:
                s = state.x - x_prev
                dg = g - g_prev
                sdg = float(s @ dg)
                state.alpha = float(s @ s) / sdg if sdg > 0 else 1.0
            state.alpha = min(state.alpha_max, max(state.alpha_min, state.alpha))
            ref = max(history)
            accepted = None
            for halvings in range(101):
                cand = _prox_full(p, state.x - state.alpha * g, 1.0 / state.alpha)
                cache.refresh(cand)
                V_cand = cache.value() + p.reg.eval_total(cand, p.blocks)
                decrease = (state.sigma / (2.0 * state.alpha)) * float(
                    np.sum((cand - state.x) ** 2)
                )
                if V_cand <= ref - decrease:
                    accepted = (cand, V_cand)
                    break
                if halvings == 100:
                    raise NumericError("nonmonotone line search stalled after 100 halvings")
                state.alpha *= 0.5
            cand, V_cand = accepted
            assert V_cand <= ref - (state.sigma / (2.0 * state.alpha)) * float(
                np.sum((cand - state.x) ** 2)
            ) + 1e-12 * (1 + abs(ref)), "nonmonotone acceptance violated"
            x_prev, g_prev = state.x, g
            state.x = cand
            V_start = V
            V = V_cand
            history.append(V)
            if len(history) > state.M:
                history.pop(0)
            trace.append(k, clock.now(), V_start, mval, p.blocks.N, 1.0, 1.0,
                         cache.flops, 0)
            k += 1
    except NumericError as exc:
        status, message = "numeric_error", str(exc)
    return state.x.copy(), trace, SolveStatus(
        status=status, iterations=k, accepted=k, V=V, merit=float(mval),
        wall_seconds=clock.now(), message=message,
        notes={"algorithm": "sparsa", "merit_mode": merit_mode, "alpha": state.alpha},
    )


def _baseline_merit(p: ProblemInstance, merit: Optional[str]) -> str:
    from .solvers import SolverConfig

    cfg = SolverConfig(merit=merit)
    return resolve_merit(p, cfg)
