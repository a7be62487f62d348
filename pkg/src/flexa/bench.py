"""Benchmark harness and command-line interface.

Subcommands::

    flexa generate --kind lasso|ncvxqp --m M --n N --sparsity S --c C
                   [--cbar CB --box B] --seed K --out DIR
    flexa solve    --instance DIR | --libsvm FILE
                   --algo flexa|gj|gjs|fista|sparsa [--sigma --rho
                   --workers --tol --merit re|zinf|zbar --max-iters
                   --seed --trace FILE ...]
    flexa compare  SPECFILE

``compare`` reads a flat key-value spec file (INI sections) describing an
instance source, solver runs, and repetition seeds, writes one trace CSV
per run, and aggregates flops/wall time to reach the merit thresholds
into ``aggregate.csv``.  Thresholds are detected by first crossing of the
running minimum of the merit, interpolating linearly between trace rows.
"""

from __future__ import annotations

import argparse
import configparser
import os
import statistics
import sys

import numpy as np

from .baselines import fista_solve, sparsa_solve
from .control import EpsSchedule, SelectionRule, StepSchedule, TauPolicy
from .errors import NumericError, StructuralError, UnsupportedConfigError
from .problems import (
    load_instance_dir,
    ncvxqp_generate,
    nesterov_generate,
    read_libsvm,
    save_instance_dir,
)
from .solvers import SolverConfig, solve

MERIT_CLI = {"re": "re", "zinf": "z_inf", "zbar": "z_bar"}
DEFAULT_THRESHOLDS = (1e-2, 1e-4, 1e-6)
AGGREGATE_HEADER = "algo,sigma,workers,seed,thresh,iters,wall_s,flops"

# keys accepted in a spec file's [control] section and per-run overrides
CONTROL_KEYS = (
    "sigma", "rho", "gamma0", "theta", "step_mode",
    "alpha1", "alpha2", "tau_init", "tau_max_updates",
)


# ---------------------------------------------------------------------------
# generate


def cli_generate(args) -> int:
    if args.kind == "lasso":
        if args.cbar is not None or args.box is not None:
            raise UsageError("--cbar/--box only apply to --kind ncvxqp")
        inst = nesterov_generate(args.m, args.n, args.sparsity, c=args.c,
                                 seed=args.seed)
    else:
        if args.cbar is None or args.box is None:
            raise UsageError("--kind ncvxqp needs --cbar and --box")
        inst = ncvxqp_generate(args.m, args.n, args.sparsity, c=args.c,
                               cbar=args.cbar, b_box=args.box, seed=args.seed)
    save_instance_dir(args.out, inst)
    print(f"wrote {inst.meta['kind']} instance (m={args.m}, n={args.n}) to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# solve


def _load_instance(args):
    if getattr(args, "instance", None):
        return load_instance_dir(args.instance)
    if getattr(args, "libsvm", None):
        return read_libsvm(args.libsvm, c=getattr(args, "c", None))
    raise UsageError("need --instance DIR or --libsvm FILE")


def _solver_config(args, overrides=None) -> SolverConfig:
    ov = dict(overrides or {})
    sigma = float(ov.get("sigma", args.sigma))
    rho = float(ov.get("rho", args.rho))
    selection = (
        SelectionRule.top_rho(rho) if getattr(args, "rule", "threshold") == "top_rho"
        else SelectionRule.threshold(sigma)
    )
    step = StepSchedule(
        mode=str(ov.get("step_mode", args.step_mode)),
        gamma0=float(ov.get("gamma0", args.gamma0)),
        theta=float(ov.get("theta", args.theta)),
    )
    eps = EpsSchedule(alpha1=float(ov.get("alpha1", args.alpha1)),
                      alpha2=float(ov.get("alpha2", args.alpha2)))
    tau_init = ov.get("tau_init", args.tau_init)
    try:
        tau_init = float(tau_init)
    except (TypeError, ValueError):
        pass
    tau = TauPolicy(init=tau_init,
                    max_updates=int(ov.get("tau_max_updates", args.tau_max_updates)))
    merit = MERIT_CLI[args.merit] if args.merit else None
    return SolverConfig(
        algorithm=args.algo,
        kind=args.kind,
        selection=selection,
        step=step,
        eps=eps,
        tau=tau,
        workers=args.workers,
        max_iters=args.max_iters,
        merit=merit,
        tol=args.tol,
        seed=args.seed,
        deterministic_clock=args.deterministic_clock,
        max_seconds=getattr(args, "max_seconds", None),
    )


def _run_one(inst, args, overrides=None):
    if args.algo in ("fista", "sparsa"):
        fn = fista_solve if args.algo == "fista" else sparsa_solve
        merit = MERIT_CLI[args.merit] if args.merit else None
        return fn(inst, tol=args.tol, max_iters=args.max_iters, merit=merit,
                  deterministic_clock=args.deterministic_clock,
                  max_seconds=getattr(args, "max_seconds", None))
    cfg = _solver_config(args, overrides)
    return solve(inst, cfg)


def cli_solve(args) -> int:
    inst = _load_instance(args)
    if args.merit == "re" and inst.v_star is None:
        raise UsageError("merit 're' needs an instance with a stored optimum")
    try:
        x, trace, status = _run_one(inst, args)
    except (NumericError, StructuralError, UnsupportedConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.trace:
        trace.write_csv(args.trace)
    print(status.summary_line())
    if status.status == "numeric_error":
        print(f"error: {status.message}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# compare suites


class UsageError(Exception):
    """Bad flags or spec file contents; exits with code 2."""


def first_crossing(trace, thresh):
    """(iters, wall_s, flops) at the first running-minimum merit crossing,
    linearly interpolated between the bracketing rows; None if never."""
    best = np.minimum.accumulate(np.asarray(trace.merit))
    idx = np.flatnonzero(best <= thresh)
    if idx.size == 0:
        return None
    j = int(idx[0])
    if j == 0:
        return trace.k[0], trace.wall_seconds[0], float(trace.flops[0])
    m_hi, m_lo = best[j - 1], best[j]
    frac = 0.0 if m_hi <= m_lo else float((m_hi - thresh) / (m_hi - m_lo))
    wall = trace.wall_seconds[j - 1] + frac * (trace.wall_seconds[j] - trace.wall_seconds[j - 1])
    flops = trace.flops[j - 1] + frac * (trace.flops[j] - trace.flops[j - 1])
    return trace.k[j], wall, flops


def _spec_get(parser_obj, section, key, fallback=None):
    if parser_obj.has_option(section, key):
        return parser_obj.get(section, key)
    return fallback


def cli_compare(args) -> int:
    spec = configparser.ConfigParser()
    read = spec.read(args.specfile)
    if not read:
        raise UsageError(f"cannot read spec file {args.specfile}")
    run_sections = [s for s in spec.sections() if s.startswith("run.") or s == "run"]
    if not spec.has_section("instance") or not run_sections:
        raise UsageError("spec needs an [instance] section and at least one [run.*]")

    out_dir = _spec_get(spec, "suite", "out_dir", "runs") if spec.has_section("suite") else "runs"
    reps = int(_spec_get(spec, "suite", "repetitions", "1")) if spec.has_section("suite") else 1
    if reps < 1:
        raise UsageError("repetitions must be >= 1")
    thresholds = DEFAULT_THRESHOLDS
    if spec.has_section("suite") and spec.has_option("suite", "thresholds"):
        thresholds = tuple(float(t) for t in spec.get("suite", "thresholds").split(","))
    time_budget = None
    if spec.has_section("suite") and spec.has_option("suite", "time_budget"):
        time_budget = float(spec.get("suite", "time_budget"))
    control = dict(spec.items("control")) if spec.has_section("control") else {}
    for key in control:
        if key not in CONTROL_KEYS:
            raise UsageError(f"unknown control key {key!r}")

    os.makedirs(out_dir, exist_ok=True)
    rows = []
    failures = []
    summaries = {}
    for rs in run_sections:
        run_name = rs.split(".", 1)[1] if "." in rs else "run"
        run_opts = dict(spec.items(rs))
        for rep in range(reps):
            seed = int(run_opts.get("seed", "0")) + rep
            workers = int(run_opts.get("workers", 1))
            try:
                inst = _instance_from_spec(spec, seed)
                ns = _args_from_run(run_opts, control, seed)
                ns.max_seconds = time_budget
                x, trace, status = _run_one(inst, ns, overrides={**control, **run_opts})
                if status.status == "numeric_error":
                    raise NumericError(status.message)
            except (NumericError, StructuralError, UnsupportedConfigError) as exc:
                failures.append((run_name, seed, str(exc)))
                for thresh in thresholds:
                    rows.append((run_name, _sigma_of(run_opts, control), workers,
                                 seed, thresh, -1, float("nan"), float("nan")))
                continue
            trace.write_csv(os.path.join(out_dir, f"{run_name}_{seed}.csv"))
            for thresh in thresholds:
                hit = first_crossing(trace, thresh)
                sigma = _sigma_of(run_opts, control)
                if hit is None:
                    rows.append((run_name, sigma, ns.workers, seed, thresh,
                                 -1, float("nan"), float("nan")))
                else:
                    rows.append((run_name, sigma, ns.workers, seed, thresh) + hit)
                    summaries.setdefault((run_name, thresh), []).append(hit)

    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w", encoding="ascii") as fh:
        fh.write(AGGREGATE_HEADER + "\n")
        for row in rows:
            fh.write("%s,%.17g,%d,%d,%.17g,%d,%.17g,%.17g\n" % row)
    for (run_name, thresh), hits in sorted(summaries.items()):
        walls = [h[1] for h in hits]
        fl = [h[2] for h in hits]
        print(
            "%s thresh=%g n=%d wall_s median=%.4g mean=%.4g "
            "flops median=%.4g mean=%.4g"
            % (run_name, thresh, len(hits), statistics.median(walls),
               statistics.fmean(walls), statistics.median(fl), statistics.fmean(fl))
        )
    for run_name, seed, msg in failures:
        print(f"failed: {run_name} seed={seed}: {msg}", file=sys.stderr)
    print(f"wrote {agg_path} ({len(rows)} rows)")
    return 0


def _sigma_of(run_opts, control) -> float:
    return float(run_opts.get("sigma", control.get("sigma", 0.5)))


def _instance_from_spec(spec, seed):
    sec = dict(spec.items("instance"))
    if "path" in sec:
        return load_instance_dir(sec["path"])
    if "libsvm" in sec:
        c = float(sec["c"]) if "c" in sec else None
        return read_libsvm(sec["libsvm"], c=c)
    kind = sec.get("kind", "lasso")
    m, n = int(sec["m"]), int(sec["n"])
    sparsity = float(sec.get("sparsity", "0.01"))
    c = float(sec.get("c", "1.0"))
    base_seed = int(sec.get("seed", "0"))
    if kind == "lasso":
        return nesterov_generate(m, n, sparsity, c=c, seed=base_seed + seed)
    if kind == "ncvxqp":
        return ncvxqp_generate(m, n, sparsity, c=c, cbar=float(sec["cbar"]),
                               b_box=float(sec["box"]), seed=base_seed + seed)
    raise UsageError(f"unknown instance kind {kind!r}")


def _args_from_run(run_opts, control, seed) -> argparse.Namespace:
    def pick(key, default):
        return run_opts.get(key, control.get(key, default))

    return argparse.Namespace(
        algo=run_opts.get("algo", "flexa"),
        kind=run_opts.get("approx") or None,
        rule=run_opts.get("rule", "threshold"),
        sigma=float(pick("sigma", 0.5)),
        rho=float(pick("rho", 1.0)),
        gamma0=float(pick("gamma0", 0.9)),
        theta=float(pick("theta", 1e-7)),
        step_mode=pick("step_mode", "merit_scaled"),
        alpha1=float(pick("alpha1", 1.0)),
        alpha2=float(pick("alpha2", 10.0)),
        tau_init=pick("tau_init", "trace"),
        tau_max_updates=int(pick("tau_max_updates", 100)),
        workers=int(run_opts.get("workers", 1)),
        merit=run_opts.get("merit"),
        tol=float(run_opts.get("tol", 1e-6)),
        max_iters=int(run_opts.get("max_iters", 10000)),
        seed=seed,
        deterministic_clock=run_opts.get("deterministic_clock", "0") in ("1", "true"),
        trace=None,
    )


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="flexa",
                                  description="parallel composite-minimization toolkit")
    sub = top.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a random instance directory")
    g.add_argument("--kind", choices=("lasso", "ncvxqp"), required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--sparsity", type=float, required=True)
    g.add_argument("--c", type=float, default=1.0)
    g.add_argument("--cbar", type=float, default=None)
    g.add_argument("--box", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cli_generate)

    s = sub.add_parser("solve", help="run one solver on one instance")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="instance directory")
    src.add_argument("--libsvm", help="LIBSVM text file (logistic regression)")
    s.add_argument("--algo", choices=("flexa", "gj", "gjs", "fista", "sparsa"),
                   default="flexa")
    s.add_argument("--kind", choices=("linearized", "exact_block", "second_order_diag"),
                   default=None, help="approximation of the smooth part")
    s.add_argument("--rule", choices=("threshold", "top_rho"), default="threshold")
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--rho", type=float, default=1.0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--merit", choices=tuple(MERIT_CLI), default=None)
    s.add_argument("--max-iters", dest="max_iters", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", default=None, help="trace CSV output path")
    s.add_argument("--c", type=float, default=None, help="regularization weight for --libsvm")
    s.add_argument("--gamma0", type=float, default=0.9)
    s.add_argument("--theta", type=float, default=1e-7)
    s.add_argument("--step-mode", dest="step_mode",
                   choices=("plain", "merit_scaled"), default="merit_scaled")
    s.add_argument("--alpha1", type=float, default=1.0)
    s.add_argument("--alpha2", type=float, default=10.0)
    s.add_argument("--tau-init", dest="tau_init", default="trace")
    s.add_argument("--tau-max-updates", dest="tau_max_updates", type=int, default=100)
    s.add_argument("--deterministic-clock", dest="deterministic_clock",
                   action="store_true",
                   help="record pseudo-time derived from the flop counter so "
                        "reruns produce byte-identical traces")
    s.set_defaults(func=cli_solve)

    c = sub.add_parser("compare", help="run an experiment suite from a spec file")
    c.add_argument("specfile")
    c.set_defaults(func=cli_compare)
    return top


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.exit(2, f"{parser.prog}: error: {exc}\n")
    except (StructuralError, UnsupportedConfigError) as exc:
        parser.exit(2, f"{parser.prog}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
