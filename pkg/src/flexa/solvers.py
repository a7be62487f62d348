"""Outer solvers.

Three schemes share one iteration skeleton (merit check, step-size and
proximal-weight bookkeeping, trace recording) and differ in how they turn
the current point into block updates:

* ``flexa_solve``         simultaneous (Jacobi) updates of a greedily
                          selected block set
* ``gauss_jacobi_solve``  workers sweep their assigned blocks
                          sequentially, in parallel across workers,
                          reading each other's values frozen at the
                          iteration start
* ``gj_selection_solve``  the same sweep restricted to a selected subset
                          per worker

Every solver records a :class:`RunTrace` row per outer iteration and
returns ``(x, trace, status)``.  Results are independent of worker
scheduling: workers hold exclusive write leases on disjoint blocks, and
reductions run in fixed order (see :mod:`flexa.engine`).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .control import (
    EpsSchedule,
    SelectionRule,
    StepSchedule,
    TauPolicy,
    TauState,
    merit_value,
    select,
    step_update,
    tau_update,
)
from .engine import WorkerPool, partition_blocks
from .errors import CurvatureError, NumericError, StructuralError, UnsupportedConfigError
from .model import ProblemInstance
from .problems import LogisticOracle, QuadraticOracle
from .subprob import (
    ApproximationKind,
    Q_MIN_DEFAULT,
    best_response_block,
    scalar_closed_form,
    tau_floors,
)

ALGORITHMS = ("flexa", "gauss_jacobi", "gj_selection")
_ALGO_ALIASES = {"gj": "gauss_jacobi", "gjs": "gj_selection"}


# ---------------------------------------------------------------------------
# configuration, trace, status


@dataclass
class SolverConfig:
    """Everything tunable about a solve.

    ``kind`` and ``merit`` default per backend: quadratic smooth parts use
    the exact block model, logistic uses the diagonal second-order model;
    the merit is the relative objective error when the optimum is known,
    else the (box-masked) prox-gradient residual.
    """

    algorithm: str = "flexa"
    kind: Optional[str] = None
    selection: SelectionRule = field(default_factory=SelectionRule)
    step: StepSchedule = field(default_factory=StepSchedule)
    eps: EpsSchedule = field(default_factory=EpsSchedule)
    tau: TauPolicy = field(default_factory=TauPolicy)
    workers: int = 1
    partition: Optional[List[List[int]]] = None
    max_iters: int = 10000
    merit: Optional[str] = None
    tol: float = 1e-6
    seed: int = 0
    q_min: float = Q_MIN_DEFAULT
    refresh_every: int = 500
    inner_budget: int = 2000
    deterministic_clock: bool = False
    max_seconds: Optional[float] = None  # wall-clock budget per solve
    x0: Optional[np.ndarray] = None
    callback: Optional[Callable] = None  # called as callback(k, x, V, accepted)

    def __post_init__(self):
        self.algorithm = _ALGO_ALIASES.get(self.algorithm, self.algorithm)
        if self.algorithm not in ALGORITHMS:
            raise StructuralError(f"unknown algorithm {self.algorithm!r}")
        if self.workers < 1:
            raise StructuralError("workers must be >= 1")
        if self.max_iters < 0:
            raise StructuralError("max_iters must be nonnegative")


TRACE_HEADER = "k,wall_seconds,V,merit,selected,gamma,tau_scale,flops,discarded"


class RunTrace:
    """Per-iteration records; row ``k`` describes the state at the start
    of iteration ``k`` plus what that iteration then did."""

    def __init__(self):
        self.k: List[int] = []
        self.wall_seconds: List[float] = []
        self.V: List[float] = []
        self.merit: List[float] = []
        self.selected: List[int] = []
        self.gamma: List[float] = []
        self.tau_scale: List[float] = []
        self.flops: List[int] = []
        self.discarded: List[int] = []

    def append(self, k, wall, V, merit, selected, gamma, tau_scale, flops, discarded):
        self.k.append(int(k))
        self.wall_seconds.append(float(wall))
        self.V.append(float(V))
        self.merit.append(float(merit))
        self.selected.append(int(selected))
        self.gamma.append(float(gamma))
        self.tau_scale.append(float(tau_scale))
        self.flops.append(int(flops))
        self.discarded.append(int(bool(discarded)))

    def __len__(self):
        return len(self.k)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(TRACE_HEADER + "\n")
            for i in range(len(self.k)):
                fh.write(
                    "%d,%.17g,%.17g,%.17g,%d,%.17g,%.17g,%d,%d\n"
                    % (
                        self.k[i],
                        self.wall_seconds[i],
                        self.V[i],
                        self.merit[i],
                        self.selected[i],
                        self.gamma[i],
                        self.tau_scale[i],
                        self.flops[i],
                        self.discarded[i],
                    )
                )

    @classmethod
    def read_csv(cls, path) -> "RunTrace":
        tr = cls()
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().strip()
            if header != TRACE_HEADER:
                raise StructuralError(f"unexpected trace header {header!r}")
            for line in fh:
                f = line.strip().split(",")
                tr.append(int(f[0]), float(f[1]), float(f[2]), float(f[3]),
                          int(f[4]), float(f[5]), float(f[6]), int(f[7]), int(f[8]))
        return tr


@dataclass
class SolveStatus:
    status: str  # converged | max_iters | numeric_error
    iterations: int
    accepted: int
    V: float
    merit: float
    wall_seconds: float
    message: str = ""
    notes: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def summary_line(self) -> str:
        return "%s %d %.6g %.12g %.6g" % (
            self.status, self.iterations, self.wall_seconds, self.V, self.merit,
        )


# ---------------------------------------------------------------------------
# shared plumbing


def resolve_kind(p: ProblemInstance, cfg: SolverConfig) -> ApproximationKind:
    if cfg.kind is not None:
        return ApproximationKind.parse(cfg.kind)
    if isinstance(p.oracle, LogisticOracle):
        return ApproximationKind.SECOND_ORDER_DIAG
    return ApproximationKind.EXACT_BLOCK


def resolve_merit(p: ProblemInstance, cfg: SolverConfig) -> str:
    if cfg.merit is not None:
        if cfg.merit == "re" and p.v_star is None:
            raise UnsupportedConfigError("merit 're' needs an instance with a known optimum")
        return cfg.merit
    if p.v_star is not None:
        return "re"
    return "z_bar" if not p.feasible.is_unbounded else "z_inf"


def gradient_bound_certificate(p: ProblemInstance) -> str:
    """Why the gradient stays bounded where the iterates live (the extra
    hypothesis of the Gauss-Jacobi convergence theory); recorded in the
    status, never enforced numerically."""
    if not p.feasible.is_unbounded:
        return "feasible box is bounded"
    if isinstance(p.oracle, LogisticOracle):
        return "logistic gradient is globally bounded"
    return "coercive objective bounds the initial sublevel set"


class _Clock:
    def __init__(self, deterministic: bool, flops_fn: Callable[[], int]):
        self.deterministic = deterministic
        self._flops = flops_fn
        self._t0 = time.perf_counter()

    def now(self) -> float:
        if self.deterministic:
            return self._flops() * 1e-9
        return time.perf_counter() - self._t0


class SolverState:
    """Iterate state plus bookkeeping for one solve.

    Owns the point (inside the backend cache), the objective value, the
    step/tau schedules and their counters, and the trace.  The outer loop
    in :func:`_run` drives it; algorithms only provide a ``step_fn`` that
    turns ``(gamma, tau_eff, grad)`` into applied block updates.
    """

    def __init__(self, p: ProblemInstance, cfg: SolverConfig, kind, merit_mode):
        self.p = p
        self.cfg = cfg
        self.kind = kind
        self.merit_mode = merit_mode
        self.pool = WorkerPool(cfg.workers)
        x0 = np.zeros(p.n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
        x0 = p.feasible.project(x0)
        self.cache = p.oracle.make_cache(x0, pool=self.pool)
        self.extra_flops = 0
        self.step = replace(cfg.step)  # fresh gamma
        self.tau_base = cfg.tau.initial_tau(p)
        self.floors = tau_floors(p, kind, cfg.q_min)
        self.floor_raises = int(np.sum(self.floors > self.tau_base))
        self.tau_state = TauState()
        self.trace = RunTrace()
        self.clock = _Clock(cfg.deterministic_clock, lambda: self.total_flops())
        self.V = self.cache.value() + p.reg.eval_total(self.cache.x, p.blocks)
        self.k = 0
        self.accepted = 0
        self.needs_grad_for_merit = merit_mode in ("z_inf", "z_bar")

    def total_flops(self) -> int:
        return self.cache.flops + self.extra_flops

    def tau_eff(self) -> np.ndarray:
        return np.maximum(self.tau_base * self.tau_state.scale, self.floors)

    def tau_per_coord(self, tau_eff) -> np.ndarray:
        if self.p.blocks.all_scalar:
            return tau_eff
        out = np.empty(self.p.n)
        for i in range(self.p.blocks.N):
            out[self.p.blocks.block_slice(i)] = tau_eff[i]
        return out


def _run(p: ProblemInstance, cfg: SolverConfig, kind, step_fn, needs_grad: bool):
    """Common outer loop; ``step_fn(state, gamma, tau_eff, grad)`` applies
    one iteration's updates and returns ``(V_new, n_selected)``."""
    merit_mode = resolve_merit(p, cfg)
    st = SolverState(p, cfg, kind, merit_mode)
    status = "max_iters"
    message = ""
    merit = np.inf
    try:
        while True:
            grad = (
                st.cache.full_grad()
                if (needs_grad or st.needs_grad_for_merit)
                else None
            )
            merit = merit_value(p, merit_mode, st.cache.x, V=st.V, grad=grad)
            if not np.isfinite(merit) or not np.isfinite(st.V):
                raise NumericError(f"non-finite state: V={st.V}, merit={merit}")
            if merit <= cfg.tol:
                st.trace.append(st.k, st.clock.now(), st.V, merit, 0,
                                st.step.gamma, st.tau_state.scale,
                                st.total_flops(), 0)
                status = "converged"
                break
            if st.k >= cfg.max_iters:
                break
            if cfg.max_seconds is not None and st.clock.now() >= cfg.max_seconds:
                status = "timeout"
                break
            gamma = st.step.gamma if st.k == 0 else step_update(st.step, merit)
            if not 0.0 < gamma <= 1.0:
                raise NumericError(f"step size left (0, 1]: {gamma}")

            snap = st.cache.snapshot()
            V_old = st.V
            V_new, n_sel = step_fn(st, gamma, st.tau_eff(), grad)
            if not np.isfinite(V_new):
                raise NumericError(f"objective became non-finite ({V_new})")

            action, discard = tau_update(cfg.tau, st.tau_state, V_new, V_old, merit)
            if discard:
                st.cache.restore(snap)
            else:
                st.V = V_new
                st.accepted += 1
                if cfg.refresh_every and st.accepted % cfg.refresh_every == 0:
                    st.cache.refresh()
            # the row describes the state the iteration started from plus
            # what it did; a final row is appended on convergence
            st.trace.append(st.k, st.clock.now(), V_old, merit, n_sel, gamma,
                            st.tau_state.scale, st.total_flops(), discard)
            st.k += 1
            if cfg.callback is not None:
                cfg.callback(st.k, st.cache.x, st.V, not discard)
    except (NumericError, CurvatureError) as exc:
        status = "numeric_error"
        message = str(exc)
    st.pool.close()
    result = SolveStatus(
        status=status,
        iterations=st.k,
        accepted=st.accepted,
        V=st.V,
        merit=float(merit),
        wall_seconds=st.clock.now(),
        message=message,
        notes={
            "tau_updates": st.tau_state.updates_used,
            "tau_floor_raises": st.floor_raises,
            "algorithm": cfg.algorithm,
            "merit_mode": merit_mode,
            "kind": kind.value,
        },
    )
    return st.cache.x.copy(), st.trace, result


# ---------------------------------------------------------------------------
# block responses shared by the algorithms


def _scalar_model_diag(st: SolverState):
    """Model curvature for the all-scalar fast path, or None."""
    p, kind = st.p, st.kind
    if not p.blocks.all_scalar or p.reg.kind not in ("l1", "zero"):
        return None
    if kind is ApproximationKind.LINEARIZED:
        return np.zeros(p.n)
    if kind is ApproximationKind.EXACT_BLOCK:
        if isinstance(p.oracle, QuadraticOracle):
            return p.oracle.diag_curvature()
        return None  # logistic exact block has no closed form
    return st.cache.diag_curvature()


def _all_responses(st: SolverState, tau_eff, grad, gamma):
    """Responses and error bounds for every block at the cached point.

    Returns ``(z, E)``; closed-form blocks are exact, the rest are solved
    to the accuracy schedule's target for this gamma.
    """
    p = st.p
    d_model = _scalar_model_diag(st)
    if d_model is not None:
        d = d_model + st.tau_per_coord(tau_eff)
        if np.any(d <= st.cfg.q_min):
            raise CurvatureError(
                "scalar subproblem curvature not positive; tau too small"
            )
        z = scalar_closed_form(p, st.cache.x, grad, d)
        return z, np.abs(z - st.cache.x)

    from .subprob import _block_closed_form

    N = p.blocks.N
    x = st.cache.x
    z = x.copy()
    E = np.zeros(N)
    cap = st.cfg.eps.cap(gamma)
    kind = st.kind
    if kind is ApproximationKind.SECOND_ORDER_DIAG:
        diag = st.cache.diag_curvature()
    elif kind is ApproximationKind.EXACT_BLOCK and isinstance(p.oracle, QuadraticOracle):
        diag = p.oracle.diag_curvature()
    else:
        diag = None
    for i in range(N):
        sl = p.blocks.block_slice(i)
        z_i = None
        if kind is ApproximationKind.LINEARIZED:
            d = np.full(sl.stop - sl.start, tau_eff[i])
        elif diag is not None and (
            kind is ApproximationKind.SECOND_ORDER_DIAG or sl.stop - sl.start == 1
        ):
            # the exact block model is a diagonal quadratic only in 1-D
            d = diag[sl] + tau_eff[i]
        else:
            d = None
        if d is not None:
            if np.any(d <= st.cfg.q_min):
                raise CurvatureError("subproblem curvature not positive; tau too small")
            z_i = _block_closed_form(p, sl, x[sl], grad[sl], d)
        if z_i is None:
            g_norm = float(np.linalg.norm(grad[sl]))
            eps_i = float(st.cfg.eps.targets(gamma, np.array([g_norm]))[0])
            if eps_i > cap + 1e-15:
                raise NumericError("inexactness target exceeded its cap")
            z_i, achieved = best_response_block(
                p, kind, i, x, tau_eff[i], eps_i,
                q_min=st.cfg.q_min, inner_budget=st.cfg.inner_budget,
                cache=st.cache,
            )
        z[sl] = z_i
        E[i] = float(np.linalg.norm(z_i - x[sl]))
    return z, E


def _coords_of_blocks(blocks, idx):
    if blocks.all_scalar:
        return np.asarray(idx, dtype=int)
    parts = [np.arange(blocks.offsets[i], blocks.offsets[i] + blocks.sizes[i])
             for i in idx]
    return np.concatenate(parts) if parts else np.empty(0, dtype=int)


# ---------------------------------------------------------------------------
# FLEXA


def flexa_solve(p: ProblemInstance, cfg: SolverConfig):
    """Flexible parallel scheme: every iteration computes (in)exact best
    responses, keeps the blocks whose error bound is within the selection
    rule's cut, and moves ``x += gamma * (z - x)`` on them.  The proximal
    weights adapt by doubling on objective increase (discarding the
    iteration) and halving on sustained decrease."""
    kind = resolve_kind(p, cfg)

    def step_fn(st: SolverState, gamma, tau_eff, grad):
        z, E = _all_responses(st, tau_eff, grad, gamma)
        S = select(cfg.selection, E)
        coords = _coords_of_blocks(p.blocks, S)
        delta = np.zeros(p.n)
        delta[coords] = gamma * (z[coords] - st.cache.x[coords])
        st.cache.apply_delta(delta)
        V_new = st.cache.value() + p.reg.eval_total(st.cache.x, p.blocks)
        return V_new, len(S)

    return _run(p, cfg, kind, step_fn, needs_grad=True)


# ---------------------------------------------------------------------------
# Gauss-Jacobi sweeps


def _sweep_worker(p, kind, cfg, clone, block_ids, gamma, tau_eff, eps_sched):
    """Sequential pass over one worker's blocks using its private cache;
    cross-worker values stay frozen at the iteration-start state."""
    from .subprob import _block_closed_form

    blocks = p.blocks
    quad_diag = (
        p.oracle.diag_curvature()
        if (kind is not ApproximationKind.LINEARIZED
            and isinstance(p.oracle, QuadraticOracle))
        else None
    )
    for i in block_ids:
        sl = blocks.block_slice(i)
        x_i = clone.x[sl].copy()
        g_i = clone.block_grad(blocks, i)
        if kind is ApproximationKind.LINEARIZED:
            d = np.full(x_i.size, tau_eff[i])
        elif quad_diag is not None and (
            kind is ApproximationKind.SECOND_ORDER_DIAG or sl.stop - sl.start == 1
        ):
            d = quad_diag[sl] + tau_eff[i]
        elif kind is ApproximationKind.SECOND_ORDER_DIAG:
            d = clone.block_diag_curvature(blocks, i) + tau_eff[i]
        else:
            d = None  # exact block beyond 1-D quadratic: iterative
        z_i = None
        if d is not None:
            if np.any(d <= cfg.q_min):
                raise CurvatureError("sweep subproblem curvature not positive")
            z_i = _block_closed_form(p, sl, x_i, g_i, d)
        if z_i is None:
            eps_i = float(eps_sched.targets(gamma, np.array([np.linalg.norm(g_i)]))[0])
            if eps_i > eps_sched.cap(gamma) + 1e-15:
                raise NumericError("inexactness target exceeded its cap")
            z_i, _ = best_response_block(
                p, kind, i, clone.x, tau_eff[i], eps_i,
                q_min=cfg.q_min, inner_budget=cfg.inner_budget, cache=clone,
            )
        clone.apply_block_delta(blocks, i, gamma * (z_i - x_i))


def _gauss_jacobi_core(p, cfg, selection_rule):
    kind = resolve_kind(p, cfg)
    N = p.blocks.N
    partition = cfg.partition or partition_blocks(N, cfg.workers)
    flat = sorted(i for part in partition for i in part)
    if flat != list(range(N)):
        raise StructuralError("partition must cover every block exactly once")
    use_selection = selection_rule is not None and not (
        selection_rule.mode == "threshold" and selection_rule.sigma == 0.0
    )

    def step_fn(st: SolverState, gamma, tau_eff, grad):
        if use_selection:
            if grad is None:
                grad = st.cache.full_grad()
            z0, E = _all_responses(st, tau_eff, grad, gamma)
            S = set(select(selection_rule, E).tolist())
            chosen = [[i for i in part if i in S] for part in partition]
            n_sel = sum(len(cp) for cp in chosen)
        else:
            chosen = partition
            n_sel = N
        snap = st.cache.snapshot()
        clones = st.pool.map(
            lambda part: _sweep_one(st, part, gamma, tau_eff),
            [cp for cp in chosen],
        )
        for clone, part in zip(clones, chosen):
            st.extra_flops += clone.flops
        st.cache.combine_clones(
            snap, clones, [_coords_of_blocks(p.blocks, cp) for cp in chosen]
        )
        V_new = st.cache.value() + p.reg.eval_total(st.cache.x, p.blocks)
        return V_new, n_sel

    def _sweep_one(st, block_ids, gamma, tau_eff):
        clone = st.cache.clone()
        _sweep_worker(p, kind, cfg, clone, block_ids, gamma, tau_eff, cfg.eps)
        return clone

    status_note = gradient_bound_certificate(p)
    x, trace, status = _run(p, cfg, kind, step_fn,
                            needs_grad=use_selection)
    status.notes["gradient_bound"] = status_note
    return x, trace, status


def gauss_jacobi_solve(p: ProblemInstance, cfg: SolverConfig):
    """Hybrid scheme: workers update their own block lists sequentially
    (Gauss-Seidel freshness inside a worker) while running in parallel,
    with cross-worker values frozen at the iteration start.  One worker
    gives the classical cyclic Gauss-Seidel method."""
    return _gauss_jacobi_core(p, cfg, None)


def gj_selection_solve(p: ProblemInstance, cfg: SolverConfig):
    """Gauss-Jacobi sweep restricted per worker to the selected subset of
    its blocks; untouched blocks carry over unchanged.  With a selection
    that keeps everything this reduces to ``gauss_jacobi_solve`` exactly
    (and the error-bound pass is skipped, so the traces match)."""
    return _gauss_jacobi_core(p, cfg, cfg.selection)


def solve(p: ProblemInstance, cfg: SolverConfig):
    """Dispatch on ``cfg.algorithm``."""
    fn = {
        "flexa": flexa_solve,
        "gauss_jacobi": gauss_jacobi_solve,
        "gj_selection": gj_selection_solve,
    }[cfg.algorithm]
    return fn(p, cfg)
