"""Composite problem abstraction.

A problem is ``V(x) = F(x) + G(x)`` minimized over a coordinate box,
where ``F`` is smooth (possibly nonconvex) and ``G = sum_i g_i(x_i)`` is
block-separable and convex.  Everything a solver needs is bundled in a
:class:`ProblemInstance`: a smooth-part oracle, a separable regularizer,
a block partition, and the feasible box.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NumericError, StructuralError, UnsupportedConfigError

FEASIBILITY_TOL = 1e-12
BOUND_ATOL = 1e-12


# ---------------------------------------------------------------------------
# block structure and feasible set


class BlockStructure:
    """Partition of the ``n`` coordinates into ``N`` contiguous blocks."""

    __slots__ = ("sizes", "offsets", "N", "n")

    def __init__(self, sizes: Sequence[int]):
        sizes = [int(s) for s in sizes]
        if not sizes:
            raise StructuralError("need at least one block")
        if any(s < 1 for s in sizes):
            raise StructuralError(f"block sizes must be >= 1, got {sizes}")
        self.sizes = sizes
        self.offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(int)
        self.N = len(sizes)
        self.n = int(sum(sizes))

    @classmethod
    def scalar(cls, n: int) -> "BlockStructure":
        """One block per coordinate."""
        return cls([1] * int(n))

    @property
    def all_scalar(self) -> bool:
        return self.n == self.N

    def block_slice(self, i: int) -> slice:
        off = self.offsets[i]
        return slice(off, off + self.sizes[i])

    def __eq__(self, other):
        return isinstance(other, BlockStructure) and self.sizes == other.sizes

    def __repr__(self):
        return f"BlockStructure(N={self.N}, n={self.n})"


class FeasibleSet:
    """Per-coordinate interval constraints ``lo_j <= x_j <= hi_j``.

    Unconstrained coordinates use ``-inf``/``+inf``.
    """

    __slots__ = ("lo", "hi", "n")

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise StructuralError("lo/hi must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise StructuralError("need lo <= hi componentwise")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise StructuralError("bounds must not be NaN")
        self.lo = lo
        self.hi = hi
        self.n = lo.size

    @classmethod
    def unbounded(cls, n: int) -> "FeasibleSet":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def box(cls, n: int, bound: float) -> "FeasibleSet":
        """Symmetric box ``[-bound, bound]^n``."""
        if bound <= 0:
            raise StructuralError("box bound must be positive")
        return cls(np.full(n, -bound), np.full(n, bound))

    @property
    def is_unbounded(self) -> bool:
        return bool(np.all(np.isneginf(self.lo)) and np.all(np.isposinf(self.hi)))

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lo, self.hi)

    def contains(self, x: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        scale = 1.0 + np.abs(x)
        return bool(
            np.all(x >= self.lo - tol * scale) and np.all(x <= self.hi + tol * scale)
        )

    def __repr__(self):
        return f"FeasibleSet(n={self.n}, unbounded={self.is_unbounded})"


# ---------------------------------------------------------------------------
# separable regularizer


class SeparableRegularizer:
    """Block-separable convex term ``G(x) = sum_i g_i(x_i)``.

    Supported kinds:

    * ``l1``       -- ``g_i(x_i) = c * ||x_i||_1``
    * ``group_l2`` -- ``g_i(x_i) = c * ||x_i||_2``
    * ``zero``     -- no regularization
    """

    KINDS = ("l1", "group_l2", "zero")

    def __init__(self, kind: str, c: float = 0.0):
        if kind not in self.KINDS:
            raise StructuralError(f"unknown regularizer kind {kind!r}")
        if kind != "zero" and c <= 0:
            raise StructuralError("regularization weight c must be positive")
        self.kind = kind
        self.c = float(c) if kind != "zero" else 0.0

    # -- evaluation

    def eval_block(self, x_i: np.ndarray) -> float:
        if self.kind == "l1":
            return self.c * float(np.sum(np.abs(x_i)))
        if self.kind == "group_l2":
            return self.c * float(np.linalg.norm(x_i))
        return 0.0

    def eval_total(self, x: np.ndarray, blocks: BlockStructure) -> float:
        if self.kind == "l1":
            return self.c * float(np.sum(np.abs(x)))
        if self.kind == "zero":
            return 0.0
        return float(
            sum(self.eval_block(x[blocks.block_slice(i)]) for i in range(blocks.N))
        )

    # -- weighted proximal map

    def weighted_prox(self, v: np.ndarray, w: np.ndarray, lo, hi) -> np.ndarray:
        """``argmin_t (1/2) sum_j w_j (t_j - v_j)^2 + g(t)`` over ``[lo, hi]``.

        Weights must be positive.  For ``group_l2`` only uniform weights
        and an unbounded box admit a closed form; anything else raises
        :class:`UnsupportedConfigError`.
        """
        v = np.asarray(v, dtype=float)
        w = np.broadcast_to(np.asarray(w, dtype=float), v.shape)
        if np.any(w <= 0):
            raise StructuralError("prox weights must be positive")
        if self.kind == "l1":
            t = soft_threshold(v, self.c / w)
            return np.clip(t, lo, hi)
        if self.kind == "zero":
            return np.clip(v, lo, hi)
        # group_l2
        if not (np.all(np.isneginf(lo)) and np.all(np.isposinf(hi))):
            raise UnsupportedConfigError("group_l2 prox with box constraints")
        if not np.all(w == w.flat[0]):
            raise UnsupportedConfigError("group_l2 prox needs uniform weights")
        return block_soft_threshold(v, self.c / float(w.flat[0]))

    def __repr__(self):
        return f"SeparableRegularizer({self.kind!r}, c={self.c})"


def soft_threshold(v, lam):
    """Shrinkage ``sign(v) * max(|v| - lam, 0)``; ties |v|=lam map to 0."""
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def block_soft_threshold(v: np.ndarray, lam: float) -> np.ndarray:
    """Scale ``v`` toward 0 by ``max(0, 1 - lam/||v||)``."""
    nrm = float(np.linalg.norm(v))
    if nrm <= lam:
        return np.zeros_like(v)
    return v * (1.0 - lam / nrm)


def prox_optimality_residual(reg, t, v, w, lo, hi) -> float:
    """Distance of 0 to the subdifferential of the weighted prox objective
    at ``t``; a diagnostic for prox correctness."""
    t = np.asarray(t, dtype=float)
    grad = np.broadcast_to(w, t.shape) * (t - v)
    if reg.kind == "group_l2":
        nrm = np.linalg.norm(t)
        if nrm > 0:
            return float(np.linalg.norm(grad + reg.c * t / nrm))
        return float(max(0.0, np.linalg.norm(grad) - reg.c))
    res = np.empty_like(t)
    for j in range(t.size):
        g = grad[j]
        if reg.kind == "l1":
            if t[j] > 0:
                g += reg.c
            elif t[j] < 0:
                g -= reg.c
            else:
                g = max(0.0, abs(g) - reg.c) * np.sign(g)
        # normal cone of the interval
        at_lo = np.isfinite(lo[j]) and t[j] <= lo[j] + BOUND_ATOL * (1 + abs(lo[j]))
        at_hi = np.isfinite(hi[j]) and t[j] >= hi[j] - BOUND_ATOL * (1 + abs(hi[j]))
        if at_lo and g > 0:
            g = 0.0
        if at_hi and g < 0:
            g = 0.0
        res[j] = g
    return float(np.linalg.norm(res))


# ---------------------------------------------------------------------------
# smooth oracle


class SmoothCache(abc.ABC):
    """Mutable evaluation state for one solver run.

    Holds the current point plus whatever backend-specific residuals make
    repeated evaluation cheap (e.g. ``r = Ax - b``).  All mutation goes
    through :meth:`apply_delta` / :meth:`apply_block_delta`, so the cache
    can be kept consistent incrementally; :meth:`refresh` recomputes it
    from scratch to bound floating-point drift.  ``flops`` accumulates the
    documented cost model of every call.
    """

    def __init__(self, x: np.ndarray):
        self.x = np.array(x, dtype=float)
        self.flops = 0

    @abc.abstractmethod
    def refresh(self, x: Optional[np.ndarray] = None) -> None:
        """Recompute all cached state from scratch (optionally at a new x)."""

    @abc.abstractmethod
    def value(self) -> float:
        """F at the cached point."""

    @abc.abstractmethod
    def full_grad(self) -> np.ndarray:
        """Gradient of F at the cached point."""

    @abc.abstractmethod
    def diag_curvature(self) -> Optional[np.ndarray]:
        """Per-coordinate second derivatives at the cached point, or None."""

    @abc.abstractmethod
    def apply_delta(self, delta: np.ndarray) -> None:
        """Move the cached point by ``delta`` (full-length vector)."""

    @abc.abstractmethod
    def block_grad(self, blocks: BlockStructure, i: int) -> np.ndarray:
        """Gradient slice for block ``i`` at the cached point."""

    def apply_block_delta(self, blocks: BlockStructure, i: int, delta_i) -> None:
        delta = np.zeros_like(self.x)
        delta[blocks.block_slice(i)] = delta_i
        self.apply_delta(delta)

    @abc.abstractmethod
    def snapshot(self):
        ...

    @abc.abstractmethod
    def restore(self, snap) -> None:
        ...

    def clone(self):
        """Independent copy for a sweep worker (no thread pool, zeroed
        flop counter)."""
        raise NotImplementedError

    def combine_clones(self, snap, clones, coords_lists) -> None:
        """Absorb the block updates workers made from the state ``snap``;
        each worker has exclusive ownership of its coordinate list."""
        raise NotImplementedError


class SmoothOracle(abc.ABC):
    """Capability record for the smooth part ``F``.

    Oracles are immutable and re-entrant: concurrent ``grad_block`` calls
    must not interfere.  All mutable evaluation state lives in the
    :class:`SmoothCache` returned by :meth:`make_cache`.
    """

    n: int

    @abc.abstractmethod
    def eval_F(self, x: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def full_grad(self, x: np.ndarray) -> np.ndarray:
        ...

    def grad_block(self, x: np.ndarray, blocks: BlockStructure, i: int) -> np.ndarray:
        return self.full_grad(x)[blocks.block_slice(i)]

    def diag_curvature(self, x: np.ndarray) -> Optional[np.ndarray]:
        """Per-coordinate second derivatives, or None when unavailable."""
        return None

    def curvature_block(
        self, x: np.ndarray, blocks: BlockStructure, i: int
    ) -> Optional[np.ndarray]:
        d = self.diag_curvature(x)
        return None if d is None else d[blocks.block_slice(i)]

    def lipschitz_estimate(self) -> float:
        """Crude upper estimate of the gradient Lipschitz constant; only
        used to initialize backtracking in the FISTA baseline."""
        return 1.0

    @abc.abstractmethod
    def make_cache(self, x: np.ndarray, pool=None) -> SmoothCache:
        ...


# ---------------------------------------------------------------------------
# problem instance


@dataclass
class ProblemInstance:
    """A composite objective plus its block structure and feasible box."""

    oracle: SmoothOracle
    reg: SeparableRegularizer
    blocks: BlockStructure
    feasible: FeasibleSet
    known_optimum: Optional[tuple] = None  # (x_star, V_star)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.blocks.n
        if self.oracle.n != n or self.feasible.n != n:
            raise StructuralError(
                f"dimension mismatch: oracle n={self.oracle.n}, "
                f"blocks n={n}, feasible n={self.feasible.n}"
            )
        if self.known_optimum is not None:
            x_star, v_star = self.known_optimum
            x_star = np.asarray(x_star, dtype=float)
            if x_star.size != n:
                raise StructuralError("known optimum has wrong dimension")
            self.known_optimum = (x_star, float(v_star))
            res = stationarity_residual(self, x_star)
            if res > 1e-8:
                raise StructuralError(
                    f"claimed optimum fails stationarity check: residual {res:.3e}"
                )

    @property
    def n(self) -> int:
        return self.blocks.n

    @property
    def v_star(self) -> Optional[float]:
        return None if self.known_optimum is None else self.known_optimum[1]


def eval_V(p: ProblemInstance, x: np.ndarray) -> float:
    """Objective ``F(x) + G(x)``; raises on shape/feasibility/NaN trouble."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise StructuralError(f"point has shape {x.shape}, expected ({p.n},)")
    if not p.feasible.contains(x):
        raise StructuralError("point violates the feasible box")
    f = p.oracle.eval_F(x)
    if not np.isfinite(f):
        raise NumericError(f"smooth term F is non-finite ({f})")
    g = p.reg.eval_total(x, p.blocks)
    if not np.isfinite(g):
        raise NumericError(f"regularizer G is non-finite ({g})")
    return f + g


def stationarity_residual(p: ProblemInstance, x: np.ndarray, grad=None) -> float:
    """Infinity norm of the box-masked prox-gradient residual.

    For the ``l1`` kind this is ``||Zbar(x)||_inf`` where
    ``Z(x) = grad F(x) - proj_{[-c,c]^n}(grad F(x) - x)`` and a component
    of ``Z`` is zeroed when it pushes against an active bound.  For
    ``group_l2`` and ``zero`` the generic fixed-point residual
    ``||x - prox_G(x - grad F(x))||_inf`` is used.  Zero exactly at the
    stationary points of the problem.
    """
    x = np.asarray(x, dtype=float)
    g = p.oracle.full_grad(x) if grad is None else grad
    if p.reg.kind == "l1":
        c = p.reg.c
        z = g - np.clip(g - x, -c, c)
        return float(np.max(np.abs(_mask_active_bounds(z, x, p.feasible))))
    if p.reg.kind == "zero":
        step = p.feasible.project(x - g)
        return float(np.max(np.abs(x - step)))
    # group_l2 (closed form only without a box)
    if not p.feasible.is_unbounded:
        raise UnsupportedConfigError("group_l2 residual with box constraints")
    v = x - g
    out = np.empty_like(x)
    for i in range(p.blocks.N):
        sl = p.blocks.block_slice(i)
        out[sl] = x[sl] - block_soft_threshold(v[sl], p.reg.c)
    return float(np.max(np.abs(out)))


def _mask_active_bounds(z: np.ndarray, x: np.ndarray, feas: FeasibleSet) -> np.ndarray:
    atol = BOUND_ATOL
    out = z.copy()
    at_hi = np.zeros(x.shape, dtype=bool)
    at_lo = np.zeros(x.shape, dtype=bool)
    fin = np.isfinite(feas.hi)
    at_hi[fin] = x[fin] >= feas.hi[fin] - atol * (1 + np.abs(feas.hi[fin]))
    fin = np.isfinite(feas.lo)
    at_lo[fin] = x[fin] <= feas.lo[fin] + atol * (1 + np.abs(feas.lo[fin]))
    out[at_hi & (z <= 0)] = 0.0
    out[at_lo & (z >= 0)] = 0.0
    return out
