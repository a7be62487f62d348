"""Shared helpers: independent oracles and small instance factories."""

import numpy as np
import pytest

import flexa


GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, a, b, tol=1e-12, iters=200, kinks=(0.0,)):
    """Minimize a unimodal scalar function on [a, b]; independent of any
    solver code under test.

    Pure golden-section search, plus a derivative-free parabolic polish
    when the minimizer sits on a smooth piece (golden section alone
    cannot certify better than ~sqrt(eps) there because nearby values
    become indistinguishable).  Near a kink (the l1 corner at 0, or the
    interval ends) values separate linearly, so plain golden section is
    already sharp and the polish is skipped.
    """
    lo0, hi0 = a, b
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if b - a < tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    v = 0.5 * (a + b)
    dist = min(
        [abs(v - kk) for kk in kinks] + [v - lo0, hi0 - v]
    )
    if dist < 1e-4:  # smooth-piece fit would straddle the kink
        return v
    for h_cap in (1e-3, 1e-5, 1e-5):
        h = min(h_cap, dist / 5.0)
        fl, fm, fr = f(v - h), f(v), f(v + h)
        denom = fl - 2.0 * fm + fr
        if denom <= 0:
            break
        step = 0.5 * h * (fl - fr) / denom
        if abs(step) > h:  # parabola untrustworthy, keep golden answer
            break
        v = v + step
    return v


def central_diff_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h * (1.0 + abs(x[j]))
        g[j] = (f(x + e) - f(x - e)) / (2.0 * e[j])
    return g


def power_iteration(mat_vec, n, iters=500, seed=0):
    """Largest eigenvalue (in magnitude) of a symmetric operator."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = mat_vec(v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return lam


def random_lasso(m, n, c=1.0, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    return flexa.lasso_instance(A, b, c)


def random_group_lasso(m, sizes, c=1.0, seed=0):
    rng = np.random.default_rng(seed)
    n = sum(sizes)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    return flexa.group_lasso_instance(A, b, c, sizes)


def random_logistic(m, n, c=0.5, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    Y = scale * rng.normal(size=(m, n))
    planted = np.zeros(n)
    k = max(1, n // 10)
    planted[rng.permutation(n)[:k]] = rng.normal(size=k)
    labels = np.sign(Y @ planted + 0.2 * rng.normal(size=m))
    labels[labels == 0] = 1.0
    return flexa.logistic_instance(Y, labels, c)


def random_ncvxqp(m, n, c=1.0, cbar=None, b_box=1.0, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    if cbar is None:
        colsq = np.einsum("ij,ij->j", A, A)
        cbar = 0.5 * float(np.min(colsq))  # keeps 2||a||^2 - 2cbar > 0
    return flexa.ncvxqp_instance(A, b, c, cbar, b_box)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
