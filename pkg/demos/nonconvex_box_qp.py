"""Nonconvex box-constrained quadratic: three solvers, one stationary
point.

The smooth part ||Ax - b||^2 - cbar ||x||^2 is indefinite, so the box
keeps the problem bounded and the proximal weights are raised
automatically wherever a scalar subproblem would lose convexity.  The
flexible scheme, accelerated proximal gradient (forced), and the
spectral nonmonotone method all terminate at the box-masked residual
threshold, and, on these instances, at the same point.

Run:  python3 demos/nonconvex_box_qp.py
"""

import warnings

import numpy as np

import flexa

inst = flexa.ncvxqp_generate(m=900, n=1000, sparsity=0.01, c=100.0,
                             cbar=100.0, b_box=1.0, seed=0)
print("nonconvex QP: n=1000, box [-1, 1], curvature shift 2*100")

results = {}
x, trace, status = flexa.solve(inst, flexa.SolverConfig(
    algorithm="flexa", merit="z_bar", tol=1e-3, max_iters=20000))
results["flexa"] = (x, status)

with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    x, trace, status = flexa.fista_solve(inst, tol=1e-3, max_iters=20000,
                                         merit="z_bar", force_nonconvex=True)
results["fista"] = (x, status)

x, trace, status = flexa.sparsa_solve(inst, tol=1e-3, max_iters=20000,
                                      merit="z_bar")
results["sparsa"] = (x, status)

x_ref = results["flexa"][0]
for name, (x, status) in results.items():
    nz = np.count_nonzero(np.abs(x) > 1e-8)
    on_bound = np.count_nonzero(np.isclose(np.abs(x), 1.0))
    print(f"\n{name}: {status.status} in {status.iterations} iterations, "
          f"residual {status.merit:.2e}")
    print(f"  nonzeros {nz}, coordinates on the bound {on_bound}, "
          f"distance to the flexa point {np.max(np.abs(x - x_ref)):.2e}")
