import os

import numpy as np
import pytest

import flexa
from flexa.bench import AGGREGATE_HEADER, first_crossing, main
from flexa.solvers import RunTrace, TRACE_HEADER


def run_cli(argv):
    """Invoke the CLI in-process; returns (exit_code)."""
    try:
        return main(argv)
    except SystemExit as exc:  # argparse and usage errors
        return exc.code


class TestGenerate:
    def test_lasso_instance_dir(self, tmp_path):
        out = tmp_path / "i1"
        code = run_cli([
            "generate", "--kind", "lasso", "--m", "60", "--n", "80",
            "--sparsity", "0.05", "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        p = flexa.load_instance_dir(out)
        assert flexa.stationarity_residual(p, p.known_optimum[0]) <= 1e-8

    def test_ncvxqp_flags(self, tmp_path):
        out = tmp_path / "i2"
        code = run_cli([
            "generate", "--kind", "ncvxqp", "--m", "40", "--n", "50",
            "--sparsity", "0.1", "--c", "100", "--cbar", "280", "--box", "0.1",
            "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        p = flexa.load_instance_dir(out)
        assert p.oracle.cbar == 280.0 and float(p.feasible.hi[0]) == 0.1

    def test_ncvxqp_missing_flags_usage_error(self, tmp_path):
        code = run_cli([
            "generate", "--kind", "ncvxqp", "--m", "10", "--n", "10",
            "--sparsity", "0.1", "--out", str(tmp_path / "x"),
        ])
        assert code == 2

    def test_lasso_rejects_ncvx_flags(self, tmp_path):
        code = run_cli([
            "generate", "--kind", "lasso", "--m", "10", "--n", "10",
            "--sparsity", "0.1", "--cbar", "5", "--out", str(tmp_path / "x"),
        ])
        assert code == 2


class TestSolve:
    @pytest.fixture
    def instance_dir(self, tmp_path):
        out = tmp_path / "inst"
        run_cli(["generate", "--kind", "lasso", "--m", "60", "--n", "80",
                 "--sparsity", "0.05", "--seed", "1", "--out", str(out)])
        return out

    def test_flexa_solve_writes_trace(self, instance_dir, tmp_path, capsys):
        trace = tmp_path / "t.csv"
        code = run_cli([
            "solve", "--instance", str(instance_dir), "--algo", "flexa",
            "--sigma", "0.5", "--workers", "2", "--merit", "re",
            "--tol", "1e-6", "--trace", str(trace),
        ])
        assert code == 0
        out = capsys.readouterr().out.strip().splitlines()[-1]
        fields = out.split()
        assert fields[0] == "converged" and len(fields) == 5
        assert trace.read_text().splitlines()[0] == TRACE_HEADER

    @pytest.mark.parametrize("algo", ["gj", "gjs", "fista", "sparsa"])
    def test_other_algorithms_run(self, instance_dir, algo, capsys):
        code = run_cli([
            "solve", "--instance", str(instance_dir), "--algo", algo,
            "--merit", "re", "--tol", "1e-4", "--max-iters", "3000",
        ])
        assert code == 0
        assert capsys.readouterr().out.startswith("converged")

    def test_re_without_optimum_is_usage_error(self, tmp_path):
        out = tmp_path / "nc"
        run_cli(["generate", "--kind", "ncvxqp", "--m", "20", "--n", "25",
                 "--sparsity", "0.1", "--c", "10", "--cbar", "5",
                 "--box", "1.0", "--seed", "0", "--out", str(out)])
        code = run_cli(["solve", "--instance", str(out), "--algo", "flexa",
                        "--merit", "re"])
        assert code == 2

    def test_libsvm_source(self, tmp_path, capsys):
        f = tmp_path / "data.txt"
        rng = np.random.default_rng(5)
        lines = []
        for _ in range(40):
            label = rng.choice(["+1", "-1"])
            feats = " ".join(f"{j + 1}:{rng.normal():.6f}" for j in range(10))
            lines.append(f"{label} {feats}")
        f.write_text("\n".join(lines) + "\n")
        code = run_cli(["solve", "--libsvm", str(f), "--algo", "gj",
                        "--c", "0.5", "--merit", "zinf", "--tol", "1e-4",
                        "--max-iters", "2000"])
        assert code == 0

    def test_reproducible_traces_bytewise(self, instance_dir, tmp_path):
        argv = lambda path: [
            "solve", "--instance", str(instance_dir), "--algo", "flexa",
            "--workers", "2", "--merit", "re", "--tol", "1e-8",
            "--seed", "11", "--deterministic-clock", "--trace", path,
        ]
        t1, t2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli(argv(str(t1))) == 0
        assert run_cli(argv(str(t2))) == 0
        assert t1.read_bytes() == t2.read_bytes()


class TestFirstCrossing:
    def test_interpolation_on_running_minimum(self):
        tr = RunTrace()
        #               k  wall  V    merit  sel g  tau  flops d
        tr.append(0, 0.0, 10.0, 1.0, 1, 0.9, 1.0, 0, 0)
        tr.append(1, 1.0, 9.0, 0.3, 1, 0.9, 1.0, 100, 0)
        tr.append(2, 2.0, 8.0, 0.6, 1, 0.9, 1.0, 200, 0)  # merit bounces
        tr.append(3, 3.0, 7.0, 0.1, 1, 0.9, 1.0, 300, 0)
        hit = first_crossing(tr, 0.2)
        assert hit is not None
        iters, wall, flops = hit
        assert iters == 3
        assert 2.0 < wall <= 3.0 and 200 < flops <= 300
        assert first_crossing(tr, 1e-9) is None

    def test_crossing_at_first_row(self):
        tr = RunTrace()
        tr.append(0, 0.5, 1.0, 1e-9, 0, 0.9, 1.0, 42, 0)
        assert first_crossing(tr, 1e-3) == (0, 0.5, 42.0)


class TestCompare:
    def test_suite_runs_and_aggregates(self, tmp_path, capsys):
        spec = tmp_path / "suite.ini"
        out_dir = tmp_path / "runs"
        spec.write_text(
            "[suite]\n"
            f"out_dir = {out_dir}\n"
            "repetitions = 2\n"
            "thresholds = 1e-2,1e-4\n"
            "[control]\n"
            "sigma = 0.5\n"
            "gamma0 = 0.9\n"
            "theta = 1e-7\n"
            "[instance]\n"
            "kind = lasso\n"
            "m = 50\n"
            "n = 60\n"
            "sparsity = 0.05\n"
            "c = 1.0\n"
            "seed = 100\n"
            "[run.flexa05]\n"
            "algo = flexa\n"
            "merit = re\n"
            "tol = 1e-5\n"
            "max_iters = 2000\n"
            "[run.fista]\n"
            "algo = fista\n"
            "merit = re\n"
            "tol = 1e-5\n"
            "max_iters = 4000\n"
        )
        assert run_cli(["compare", str(spec)]) == 0
        agg = out_dir / "aggregate.csv"
        lines = agg.read_text().splitlines()
        assert lines[0] == AGGREGATE_HEADER
        # 2 runs x 2 repetitions x 2 thresholds
        assert len(lines) == 1 + 8
        assert (out_dir / "flexa05_0.csv").exists()
        assert (out_dir / "flexa05_1.csv").exists()
        assert (out_dir / "fista_0.csv").exists()
        out = capsys.readouterr().out
        assert "flexa05" in out and "median" in out

    def test_time_budget_caps_runs(self, tmp_path):
        spec = tmp_path / "suite.ini"
        out_dir = tmp_path / "runs"
        spec.write_text(
            "[suite]\n"
            f"out_dir = {out_dir}\n"
            "repetitions = 1\n"
            "time_budget = 0.0\n"     # every run times out immediately
            "[instance]\n"
            "kind = lasso\nm = 40\nn = 50\nsparsity = 0.1\nseed = 3\n"
            "[run.slow]\n"
            "algo = flexa\nmerit = re\ntol = 1e-12\nmax_iters = 100000\n"
        )
        assert run_cli(["compare", str(spec)]) == 0
        trace = (out_dir / "slow_0.csv").read_text().splitlines()
        assert len(trace) <= 3  # header plus at most a row or two

    def test_empty_spec_usage_error(self, tmp_path):
        spec = tmp_path / "empty.ini"
        spec.write_text("[suite]\nout_dir = x\n")
        assert run_cli(["compare", str(spec)]) == 2

    def test_missing_file_usage_error(self, tmp_path):
        assert run_cli(["compare", str(tmp_path / "nope.ini")]) == 2

    def test_selective_scheme_fastest_by_flops(self, tmp_path):
        # head-to-head at desk scale: the selective scheme should rank
        # first on flops-to-1e-6 among the implemented methods
        spec = tmp_path / "suite.ini"
        out_dir = tmp_path / "runs"
        common = "merit = re\ntol = 1e-6\nmax_iters = 20000\n"
        spec.write_text(
            "[suite]\n"
            f"out_dir = {out_dir}\n"
            "repetitions = 2\n"
            "thresholds = 1e-6\n"
            "[instance]\n"
            "kind = lasso\nm = 300\nn = 400\nsparsity = 0.1\nc = 1.0\nseed = 500\n"
            "[run.flexa05]\nalgo = flexa\nsigma = 0.5\n" + common +
            "[run.flexa0]\nalgo = flexa\nsigma = 0.0\n" + common +
            "[run.fista]\nalgo = fista\n" + common +
            "[run.sparsa]\nalgo = sparsa\n" + common
        )
        assert run_cli(["compare", str(spec)]) == 0
        rows = (out_dir / "aggregate.csv").read_text().splitlines()[1:]
        flops = {}
        for row in rows:
            f = row.split(",")
            flops.setdefault(f[0], []).append(float(f[7]))
        medians = {name: float(np.median(v)) for name, v in flops.items()}
        assert min(medians, key=medians.get) == "flexa05", medians

    def test_partial_failure_recorded_and_suite_continues(self, tmp_path, capsys):
        spec = tmp_path / "suite.ini"
        out_dir = tmp_path / "runs"
        spec.write_text(
            "[suite]\n"
            f"out_dir = {out_dir}\n"
            "repetitions = 1\n"
            "[instance]\n"
            "kind = ncvxqp\n"
            "m = 30\n"
            "n = 40\n"
            "sparsity = 0.1\n"
            "c = 10\n"
            "cbar = 20\n"
            "box = 1.0\n"
            "seed = 5\n"
            "[run.bad]\n"
            "algo = flexa\n"
            "merit = re\n"          # no stored optimum: this run fails
            "max_iters = 50\n"
            "[run.good]\n"
            "algo = flexa\n"
            "merit = zbar\n"
            "tol = 1e-3\n"
            "max_iters = 4000\n"
        )
        assert run_cli(["compare", str(spec)]) == 0
        err = capsys.readouterr().err
        assert "failed: bad" in err
        assert (out_dir / "good_0.csv").exists()
        assert not (out_dir / "bad_0.csv").exists()
