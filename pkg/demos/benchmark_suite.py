"""Seeded head-to-head comparison through the benchmark harness.

Writes a spec file, runs the cross product of (algorithms x repetition
seeds), and leaves one trace CSV per run plus aggregate.csv with the
interpolated cost of reaching each merit threshold.  Equivalent to:

    flexa compare suite.ini

Run:  python3 demos/benchmark_suite.py
"""

import os
import tempfile

from flexa.bench import main

SPEC = """
[suite]
out_dir = {out}
repetitions = 3
thresholds = 1e-2,1e-4,1e-6

[control]
sigma = 0.5
gamma0 = 0.9
theta = 1e-7

[instance]
kind = lasso
m = 300
n = 400
sparsity = 0.1
c = 1.0
seed = 100

[run.flexa05]
algo = flexa
merit = re
tol = 1e-6
max_iters = 10000

[run.flexa_full]
algo = flexa
sigma = 0.0
merit = re
tol = 1e-6
max_iters = 10000

[run.fista]
algo = fista
merit = re
tol = 1e-6
max_iters = 20000

[run.sparsa]
algo = sparsa
merit = re
tol = 1e-6
max_iters = 20000
"""

work = tempfile.mkdtemp(prefix="flexa-suite-")
spec_path = os.path.join(work, "suite.ini")
with open(spec_path, "w") as fh:
    fh.write(SPEC.format(out=os.path.join(work, "runs")))

print(f"spec: {spec_path}")
main(["compare", spec_path])
print(f"\nper-run traces and aggregate.csv are under {work}/runs")
