"""Concrete problem backends and instance generators.

Backends
--------
* least squares  ``F(x) = ||Ax - b||^2``  with ``G = c ||x||_1``  (lasso)
  or ``G = c sum_i ||x_i||_2``  (group lasso)
* sparse logistic regression
  ``F(x) = sum_j log(1 + exp(-a_j y_j^T x))``, ``G = c ||x||_1``
* nonconvex box-constrained QP
  ``F(x) = ||Ax - b||^2 - cbar ||x||^2``, ``G = c ||x||_1``, ``|x_i| <= b_box``

Each backend supplies a :class:`~flexa.model.SmoothCache` that keeps the
evaluation state (residual ``r = Ax - b`` or the logistic margins)
consistent under incremental updates.  Heavy products run over the fixed
chunk grid from :mod:`flexa.engine`, so results do not depend on the
worker count.

Estimated-flops model: residual/margin refresh 2mn, full gradient 2mn
(2nnz when the data matrix is sparse), objective from cached state 2m,
per-block gradient 2m per column, per-block cache update 2m per column.
The counts describe the mathematical operations, not BLAS-level details.
"""

from __future__ import annotations

import re
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import instance_io
from .engine import WorkerPool, chunk_ranges, pairwise_sum
from .errors import NumericError, ParseError, StructuralError
from .model import (
    BlockStructure,
    FeasibleSet,
    ProblemInstance,
    SeparableRegularizer,
    SmoothCache,
    SmoothOracle,
    stationarity_residual,
)

DENSITY_THRESHOLD = 0.05  # below this fraction of nonzeros, store sparse

# Regularization weights from the standard logistic benchmark datasets,
# applied when a libsvm file name matches and no weight is given.
DATASET_C = {"gisette": 0.25, "real-sim": 4.0, "rcv1": 4.0}


def _as_matrix(A):
    """Normalize to fortran-ordered dense or CSC sparse for column access."""
    if sp.issparse(A):
        return sp.csc_matrix(A)
    return np.asfortranarray(np.asarray(A, dtype=float))


def _column_sq_norms(A) -> np.ndarray:
    if sp.issparse(A):
        return np.asarray(A.multiply(A).sum(axis=0)).ravel()
    return np.einsum("ij,ij->j", A, A)


def _matvec_chunked(A, delta, pool: Optional[WorkerPool], moved=None):
    """``A @ delta`` accumulated over the fixed column-chunk grid.

    ``moved`` optionally marks coordinates with nonzero delta; chunks that
    move nothing are skipped (their exact contribution is zero).
    """
    n = delta.size
    chunks = chunk_ranges(n)
    if moved is not None:
        chunks = [(s, e) for (s, e) in chunks if moved[s:e].any()]
        if not chunks:
            return None
    def part(rng):
        s, e = rng
        return A[:, s:e] @ delta[s:e]
    parts = pool.map(part, chunks) if pool else [part(c) for c in chunks]
    parts = [np.asarray(q).ravel() for q in parts]
    return pairwise_sum(parts)


def _rmatvec_chunked(A, r, out, pool: Optional[WorkerPool], scale=1.0):
    """``out[s:e] = scale * A[:, s:e].T @ r`` over the fixed chunk grid."""
    chunks = chunk_ranges(out.size)
    def part(rng):
        s, e = rng
        out[s:e] = scale * np.asarray(A[:, s:e].T @ r).ravel()
    if pool:
        pool.map(part, chunks)
    else:
        for c in chunks:
            part(c)
    return out


# ---------------------------------------------------------------------------
# quadratic backend: F(x) = ||Ax - b||^2 - cbar ||x||^2


class QuadraticOracle(SmoothOracle):
    """Smooth part of LASSO / group LASSO (``cbar = 0``) and of the
    nonconvex QP (``cbar > 0``)."""

    def __init__(self, A, b, cbar: float = 0.0):
        self.A = _as_matrix(A)
        self.b = np.asarray(b, dtype=float).ravel()
        self.m, self.n = self.A.shape
        if self.b.size != self.m:
            raise StructuralError("A and b row counts differ")
        self.cbar = float(cbar)
        self.column_sq_norms = _column_sq_norms(self.A)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A)

    def eval_F(self, x):
        r = np.asarray(self.A @ x).ravel() - self.b
        f = float(r @ r)
        if self.cbar:
            f -= self.cbar * float(x @ x)
        return f

    def full_grad(self, x):
        r = np.asarray(self.A @ x).ravel() - self.b
        g = 2.0 * np.asarray(self.A.T @ r).ravel()
        if self.cbar:
            g -= 2.0 * self.cbar * x
        return g

    def diag_curvature(self, x=None):
        return 2.0 * self.column_sq_norms - 2.0 * self.cbar

    def lipschitz_estimate(self):
        # ||2 A^T A|| <= 2 ||A||_F^2; loose but safe
        return 2.0 * float(np.sum(self.column_sq_norms)) + 2.0 * self.cbar

    def make_cache(self, x, pool=None):
        return QuadraticCache(self, x, pool)


class QuadraticCache(SmoothCache):
    """Keeps ``r = Ax - b`` consistent under block updates."""

    def __init__(self, oracle: QuadraticOracle, x, pool=None, _state=None):
        super().__init__(x)
        self.oracle = oracle
        self.pool = pool
        if _state is not None:
            self.r = _state.copy()
        else:
            self.r = None
            self.refresh()

    def refresh(self, x=None):
        if x is not None:
            self.x = np.array(x, dtype=float)
        o = self.oracle
        ax = _matvec_chunked(o.A, self.x, self.pool)
        self.r = ax - o.b
        self.flops += 2 * o.m * o.n

    def value(self):
        o = self.oracle
        f = float(self.r @ self.r)
        self.flops += 2 * o.m
        if o.cbar:
            f -= o.cbar * float(self.x @ self.x)
            self.flops += 2 * o.n
        return f

    def full_grad(self):
        o = self.oracle
        g = np.empty(o.n)
        _rmatvec_chunked(o.A, self.r, g, self.pool, scale=2.0)
        self.flops += 2 * o.m * o.n
        if o.cbar:
            g -= 2.0 * o.cbar * self.x
            self.flops += 2 * o.n
        return g

    def diag_curvature(self):
        return self.oracle.diag_curvature()

    def apply_delta(self, delta):
        o = self.oracle
        moved = delta != 0.0
        dr = _matvec_chunked(o.A, delta, self.pool, moved=moved)
        if dr is not None:
            self.r += dr
        self.x = self.x + delta
        self.flops += 2 * o.m * int(moved.sum())

    def block_grad(self, blocks, i):
        o = self.oracle
        sl = blocks.block_slice(i)
        g = 2.0 * np.asarray(o.A[:, sl].T @ self.r).ravel()
        if o.cbar:
            g -= 2.0 * o.cbar * self.x[sl]
        self.flops += 2 * o.m * (sl.stop - sl.start)
        return g

    def apply_block_delta(self, blocks, i, delta_i):
        o = self.oracle
        sl = blocks.block_slice(i)
        self.r += np.asarray(o.A[:, sl] @ np.atleast_1d(delta_i)).ravel()
        self.x[sl] += delta_i
        self.flops += 2 * o.m * (sl.stop - sl.start)

    def snapshot(self):
        return (self.x.copy(), self.r.copy())

    def restore(self, snap):
        self.x, self.r = snap[0].copy(), snap[1].copy()

    def clone(self):
        """Private copy for one sweep worker; flops start at zero so the
        coordinator can absorb exactly the work the worker did."""
        return QuadraticCache(self.oracle, self.x, pool=None, _state=self.r)

    def combine_clones(self, snap, clones, coords_lists):
        """Absorb worker updates made from ``snap``: each worker owns the
        coordinates in its list, residual deltas add in fixed order."""
        from .engine import pairwise_sum

        x0, r0 = snap
        if len(clones) == 1:
            self.x = clones[0].x.copy()
            self.r = clones[0].r.copy()
            return
        x = x0.copy()
        deltas = []
        for clone, coords in zip(clones, coords_lists):
            if len(coords):
                x[coords] = clone.x[coords]
            deltas.append(clone.r - r0)
        self.x = x
        self.r = r0 + pairwise_sum(deltas) if deltas else r0.copy()


# ---------------------------------------------------------------------------
# logistic backend


class LogisticOracle(SmoothOracle):
    """``F(x) = sum_j log(1 + exp(-a_j y_j^T x))`` with labels in {-1, +1}.

    Evaluation goes through the margins ``w_j = a_j y_j^T x`` and the
    probabilities ``p_j = 1 / (1 + exp(w_j))``; the log-sum-exp form keeps
    everything finite for margins of any magnitude.
    """

    def __init__(self, Y, labels):
        self.Y = _as_matrix(Y)
        self.m, self.n = self.Y.shape
        labels = np.asarray(labels, dtype=float).ravel()
        if labels.size != self.m:
            raise StructuralError("labels and Y row counts differ")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise StructuralError("labels must be -1 or +1")
        self.labels = labels

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.Y)

    def _margins(self, x):
        return self.labels * (np.asarray(self.Y @ x).ravel())

    def eval_F(self, x):
        w = self._margins(x)
        return float(np.sum(np.logaddexp(0.0, -w)))

    def full_grad(self, x):
        w = self._margins(x)
        p = expit(-w)
        return -np.asarray(self.Y.T @ (self.labels * p)).ravel()

    def diag_curvature(self, x):
        w = self._margins(x)
        s = expit(-w) * expit(w)
        if self.is_sparse:
            return np.asarray(self.Y.multiply(self.Y).T @ s).ravel()
        return np.einsum("ji,ji,j->i", self.Y, self.Y, s)

    def lipschitz_estimate(self):
        return 0.25 * float(np.sum(_column_sq_norms(self.Y)))

    def make_cache(self, x, pool=None):
        return LogisticCache(self, x, pool)


class LogisticCache(SmoothCache):
    """Keeps the margins ``w = a * (Yx)`` and ``p = expit(-w)`` consistent."""

    def __init__(self, oracle: LogisticOracle, x, pool=None, _state=None):
        super().__init__(x)
        self.oracle = oracle
        self.pool = pool
        self._p = None
        if _state is not None:
            self.w = _state.copy()
        else:
            self.w = None
            self.refresh()

    def _nnz(self):
        o = self.oracle
        return o.Y.nnz if o.is_sparse else o.m * o.n

    def refresh(self, x=None):
        if x is not None:
            self.x = np.array(x, dtype=float)
        o = self.oracle
        yx = _matvec_chunked(o.Y, self.x, self.pool)
        self.w = o.labels * yx
        self._p = None
        self.flops += 2 * self._nnz()

    def _probs(self):
        if self._p is None:
            self._p = expit(-self.w)
            self.flops += 5 * self.oracle.m
        return self._p

    def value(self):
        self.flops += 5 * self.oracle.m
        return float(np.sum(np.logaddexp(0.0, -self.w)))

    def full_grad(self):
        o = self.oracle
        p = self._probs()
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise NumericError("logistic probabilities left [0, 1]")
        ap = o.labels * p
        g = np.empty(o.n)
        _rmatvec_chunked(o.Y, ap, g, self.pool, scale=-1.0)
        self.flops += 2 * self._nnz()
        return g

    def diag_curvature(self):
        o = self.oracle
        p = self._probs()
        s = p * (1.0 - p)
        if o.is_sparse:
            d = np.asarray(o.Y.multiply(o.Y).T @ s).ravel()
        else:
            d = np.einsum("ji,ji,j->i", o.Y, o.Y, s)
        self.flops += 3 * self._nnz()
        return d

    def apply_delta(self, delta):
        o = self.oracle
        moved = delta != 0.0
        dyx = _matvec_chunked(o.Y, delta, self.pool, moved=moved)
        if dyx is not None:
            self.w += o.labels * dyx
            self._p = None
        self.x = self.x + delta
        self.flops += 2 * o.m * int(moved.sum())

    def block_grad(self, blocks, i):
        o = self.oracle
        sl = blocks.block_slice(i)
        p = self._probs()
        g = -np.asarray(o.Y[:, sl].T @ (o.labels * p)).ravel()
        self.flops += 2 * o.m * (sl.stop - sl.start)
        return g

    def block_diag_curvature(self, blocks, i):
        o = self.oracle
        sl = blocks.block_slice(i)
        p = self._probs()
        s = p * (1.0 - p)
        col = o.Y[:, sl]
        if o.is_sparse:
            d = np.asarray(col.multiply(col).T @ s).ravel()
        else:
            d = np.einsum("ji,ji,j->i", col, col, s)
        self.flops += 3 * o.m * (sl.stop - sl.start)
        return d

    def apply_block_delta(self, blocks, i, delta_i):
        o = self.oracle
        sl = blocks.block_slice(i)
        dyx = np.asarray(o.Y[:, sl] @ np.atleast_1d(delta_i)).ravel()
        self.w += o.labels * dyx
        self._p = None
        self.x[sl] += delta_i
        self.flops += 2 * o.m * (sl.stop - sl.start)

    def snapshot(self):
        return (self.x.copy(), self.w.copy())

    def restore(self, snap):
        self.x, self.w = snap[0].copy(), snap[1].copy()
        self._p = None

    def clone(self):
        return LogisticCache(self.oracle, self.x, pool=None, _state=self.w)

    def combine_clones(self, snap, clones, coords_lists):
        from .engine import pairwise_sum

        x0, w0 = snap
        self._p = None
        if len(clones) == 1:
            self.x = clones[0].x.copy()
            self.w = clones[0].w.copy()
            return
        x = x0.copy()
        deltas = []
        for clone, coords in zip(clones, coords_lists):
            if len(coords):
                x[coords] = clone.x[coords]
            deltas.append(clone.w - w0)
        self.x = x
        self.w = w0 + pairwise_sum(deltas) if deltas else w0.copy()


# ---------------------------------------------------------------------------
# instance builders


def lasso_instance(A, b, c, known_optimum=None, meta=None) -> ProblemInstance:
    """LASSO with scalar blocks: ``min ||Ax - b||^2 + c ||x||_1``."""
    oracle = QuadraticOracle(A, b)
    return ProblemInstance(
        oracle=oracle,
        reg=SeparableRegularizer("l1", c),
        blocks=BlockStructure.scalar(oracle.n),
        feasible=FeasibleSet.unbounded(oracle.n),
        known_optimum=known_optimum,
        meta=dict(meta or {}, kind="lasso"),
    )


def group_lasso_instance(A, b, c, sizes, meta=None) -> ProblemInstance:
    """Group LASSO: ``min ||Ax - b||^2 + c sum_i ||x_i||_2``."""
    oracle = QuadraticOracle(A, b)
    blocks = BlockStructure(sizes)
    if blocks.n != oracle.n:
        raise StructuralError("block sizes do not cover the columns of A")
    return ProblemInstance(
        oracle=oracle,
        reg=SeparableRegularizer("group_l2", c),
        blocks=blocks,
        feasible=FeasibleSet.unbounded(oracle.n),
        meta=dict(meta or {}, kind="group_lasso"),
    )


def logistic_instance(Y, labels, c, meta=None) -> ProblemInstance:
    """Sparse logistic regression with scalar blocks and l1 penalty."""
    oracle = LogisticOracle(Y, labels)
    return ProblemInstance(
        oracle=oracle,
        reg=SeparableRegularizer("l1", c),
        blocks=BlockStructure.scalar(oracle.n),
        feasible=FeasibleSet.unbounded(oracle.n),
        meta=dict(meta or {}, kind="logistic"),
    )


def ncvxqp_instance(A, b, c, cbar, b_box, meta=None) -> ProblemInstance:
    """Nonconvex QP: ``min ||Ax-b||^2 - cbar ||x||^2 + c ||x||_1`` over
    the box ``[-b_box, b_box]^n``."""
    if cbar <= 0:
        raise StructuralError("cbar must be positive (use lasso_instance otherwise)")
    oracle = QuadraticOracle(A, b, cbar=cbar)
    return ProblemInstance(
        oracle=oracle,
        reg=SeparableRegularizer("l1", c),
        blocks=BlockStructure.scalar(oracle.n),
        feasible=FeasibleSet.box(oracle.n, b_box),
        meta=dict(meta or {}, kind="ncvxqp", cbar=float(cbar), b_box=float(b_box)),
    )


# ---------------------------------------------------------------------------
# random instance generation with a planted optimum


class GenerationError(RuntimeError):
    """The generated instance failed its optimality verification."""


def nesterov_generate(m, n, sparsity, c=1.0, seed=0) -> ProblemInstance:
    """Random LASSO instance with a planted, verified optimal solution.

    The solution ``x*`` has exactly ``round(sparsity * n)`` nonzeros.  The
    construction picks a unit residual vector ``y``, rank-1-corrects the
    columns of a Gaussian matrix so that ``2 a_j^T y = c * sign(x*_j)`` on
    the support and ``|2 a_j^T y| <= 0.9 c`` elsewhere, then sets
    ``b = A x* + y``; that makes ``0`` a subgradient of the objective at
    ``x*``.  The subgradient condition is re-verified numerically to 1e-8
    and :class:`GenerationError` is raised if it fails (retry with a new
    seed).  Identical arguments give bit-identical instances.
    """
    m, n = int(m), int(n)
    if m < 1 or n < 1:
        raise StructuralError("need m, n >= 1")
    if not 0.0 < sparsity <= 1.0:
        raise StructuralError("sparsity must lie in (0, 1]")
    if c <= 0:
        raise StructuralError("c must be positive")
    s = max(1, int(round(sparsity * n)))

    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    y_dir = rng.standard_normal(m)
    y_dir /= np.linalg.norm(y_dir)

    support = np.sort(rng.permutation(n)[:s])
    signs = rng.choice((-1.0, 1.0), size=s)
    # targets for a_j^T y_dir: +-1 on the support (so |2 a_j^T y| = c there
    # once y = (c/2) y_dir), strictly inside off it; O(1) regardless of c,
    # which keeps the rank-1 correction from distorting the spectrum
    targets = 0.9 * rng.uniform(-1.0, 1.0, size=n)
    targets[support] = signs

    A += np.outer(y_dir, targets - A.T @ y_dir)

    x_star = np.zeros(n)
    x_star[support] = signs * rng.uniform(0.1, 1.0, size=s)
    y = (0.5 * c) * y_dir
    b = A @ x_star + y

    meta = {
        "m": m,
        "n": n,
        "sparsity": float(sparsity),
        "c": float(c),
        "seed": int(seed),
        "generator": "planted-subgradient",
    }
    oracle = QuadraticOracle(A, b)
    v_star = float(oracle.eval_F(x_star)) + c * float(np.sum(np.abs(x_star)))
    try:
        inst = lasso_instance(A, b, c, known_optimum=(x_star, v_star), meta=meta)
    except StructuralError as exc:
        raise GenerationError(str(exc)) from exc
    res = stationarity_residual(inst, x_star)
    if res > 1e-8:
        raise GenerationError(f"planted optimum residual {res:.3e} > 1e-8")
    return inst


def ncvxqp_generate(m, n, sparsity, c, cbar, b_box, seed=0) -> ProblemInstance:
    """Nonconvex QP built on the same random model as the LASSO generator.

    The planted point is not an optimum of the nonconvex problem, so no
    optimum is carried; the Hessian of ``F`` equals the LASSO Hessian
    shifted left by ``2 cbar``.
    """
    base = nesterov_generate(m, n, sparsity, c=c, seed=seed)
    oracle = base.oracle
    meta = dict(base.meta)
    meta.pop("kind", None)
    return ncvxqp_instance(oracle.A, oracle.b, c, cbar, b_box, meta=meta)


# ---------------------------------------------------------------------------
# libsvm ingestion


def read_libsvm(path, c: Optional[float] = None) -> ProblemInstance:
    """Load a LIBSVM-format text file as a logistic regression instance.

    Lines look like ``label idx:val idx:val ...`` with 1-based indices.
    Labels in {-1, +1} are kept; {0, 1} are mapped to {-1, +1}.  The
    feature count is the largest index seen.  When ``c`` is not given it
    is looked up from the file name against the standard benchmark values
    (gisette 0.25, real-sim 4, rcv1 4) and defaults to 1.0 otherwise.
    """
    labels, data, indices, indptr, n = instance_io.parse_libsvm_text(path)
    m = len(labels)
    mat = sp.csr_matrix((data, indices, indptr), shape=(m, n))
    density = mat.nnz / max(1, m * n)
    Y = mat if density < DENSITY_THRESHOLD else mat.toarray()
    if c is None:
        c = _default_dataset_c(path)
    return logistic_instance(
        Y, labels, c, meta={"source": str(path), "m": m, "n": n, "c": float(c)}
    )


def write_libsvm(path, instance_or_Y, labels=None) -> None:
    """Write a logistic instance (or a raw ``(Y, labels)`` pair) in
    LIBSVM text format with full float precision."""
    if labels is None:
        oracle = instance_or_Y.oracle
        Y, labels = oracle.Y, oracle.labels
    else:
        Y = instance_or_Y
    instance_io.dump_libsvm_text(path, Y, labels)


def _default_dataset_c(path) -> float:
    name = str(path).rsplit("/", 1)[-1].lower()
    for key, val in DATASET_C.items():
        if re.search(re.escape(key), name):
            return val
    return 1.0


# ---------------------------------------------------------------------------
# instance directory serialization


def save_instance_dir(path, p: ProblemInstance) -> None:
    """Serialize an instance into a directory of binary matrix files plus
    a key-value metadata file (see :mod:`flexa.instance_io`)."""
    kind = p.meta.get("kind")
    if kind not in ("lasso", "group_lasso", "ncvxqp", "logistic"):
        raise StructuralError(f"cannot serialize instance of kind {kind!r}")
    oracle = p.oracle
    meta = {"kind": kind, "reg": p.reg.kind, "c": repr(p.reg.c)}
    for key in ("m", "n", "sparsity", "seed", "generator", "source"):
        if key in p.meta:
            meta[key] = str(p.meta[key])
    if kind == "logistic":
        mats = {"Y": oracle.Y, "labels": oracle.labels}
    else:
        mats = {"A": oracle.A, "b": oracle.b}
    if kind == "ncvxqp":
        meta["cbar"] = repr(oracle.cbar)
        meta["b_box"] = repr(float(p.feasible.hi[0]))
    if kind == "group_lasso":
        meta["block_sizes"] = ",".join(str(s) for s in p.blocks.sizes)
    if p.known_optimum is not None:
        x_star, v_star = p.known_optimum
        mats["x_star"] = x_star
        meta["x_star"] = "x_star"
        meta["v_star"] = repr(v_star)
    instance_io.write_instance_dir(path, meta, mats)


def load_instance_dir(path) -> ProblemInstance:
    """Inverse of :func:`save_instance_dir`."""
    meta, mats = instance_io.read_instance_dir(path)
    kind = meta["kind"]
    c = float(meta["c"])
    known = None
    if "x_star" in meta:
        known = (np.asarray(mats[meta["x_star"]]).ravel(), float(meta["v_star"]))
    extra = {
        k: meta[k]
        for k in ("m", "n", "sparsity", "seed", "generator", "source")
        if k in meta
    }
    if kind == "logistic":
        return logistic_instance(mats["Y"], np.asarray(mats["labels"]).ravel(), c,
                                 meta=extra)
    A = mats["A"]
    b = np.asarray(mats["b"]).ravel()
    if kind == "lasso":
        return lasso_instance(A, b, c, known_optimum=known, meta=extra)
    if kind == "group_lasso":
        sizes = [int(s) for s in meta["block_sizes"].split(",")]
        return group_lasso_instance(A, b, c, sizes, meta=extra)
    if kind == "ncvxqp":
        return ncvxqp_instance(A, b, c, float(meta["cbar"]), float(meta["b_box"]),
                               meta=extra)
    raise ParseError(f"unknown instance kind {kind!r} in {path}")
