import io

import numpy as np
import pytest

from blockcode.cli import main
from blockcode.experiment import (
    CSV_HEADER,
    ConfigError,
    config_from_mapping,
    format_allocation,
    load_plan,
    parse_key_values,
    read_allocation,
    resolve_seed,
    run_plan,
    write_allocation,
)
from blockcode.straggler import Bernoulli, Empirical, ShiftedExponential
from blockcode.validation import InfeasibleAllocationError

SMALL = "N=3\nL=12\nM=3\nb=1\ndist.kind=shifted-exponential\ndist.mu=1.0\ndist.t0=0.1\n"


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text("# three workers\n" + SMALL)
    return p


@pytest.fixture
def alloc_file(tmp_path):
    p = tmp_path / "x.txt"
    write_allocation(p, [6, 4, 2])
    return p


def test_parse_key_values_and_config():
    d = parse_key_values("a = 1  # note\n\n b=2\n")
    assert d == {"a": "1", "b": "2"}
    with pytest.raises(ConfigError):
        parse_key_values("novalue\n")
    cfg = config_from_mapping(parse_key_values(SMALL))
    assert (cfg.N, cfg.L, cfg.M) == (3, 12, 3.0)
    assert cfg.dist == ShiftedExponential(1.0, 0.1)
    b = config_from_mapping({"N": "2", "L": "4", "dist.kind": "bernoulli", "dist.p_straggle": "0.2",
                             "dist.t_fast": "1", "dist.t_slow": "5"})
    assert isinstance(b.dist, Bernoulli)
    e = config_from_mapping({"N": "2", "L": "4", "dist.kind": "empirical", "dist.samples": "1,2,3"})
    assert isinstance(e.dist, Empirical)


@pytest.mark.parametrize("d", [{"N": "3", "L": "6", "dist.mu": "1", "color": "red"},
                               {"L": "6", "dist.mu": "1"},
                               {"N": "3", "L": "6", "dist.kind": "weibull"},
                               {"N": "x", "L": "6", "dist.mu": "1"}])
def test_config_errors(d):
    with pytest.raises(ConfigError):
        config_from_mapping(d)


def test_allocation_roundtrip(tmp_path):
    p = tmp_path / "a.txt"
    write_allocation(p, [3, 0, 2])
    assert format_allocation([3, 0, 2]) == "3\n0\n2\nsum=5\n"
    assert read_allocation(p, 5).tolist() == [3, 0, 2]
    with pytest.raises(InfeasibleAllocationError):
        read_allocation(p, 6)
    p.write_text("3\n2\nsum=4\n")
    with pytest.raises(InfeasibleAllocationError):
        read_allocation(p)
    p.write_text("3\n2\n")
    with pytest.raises(InfeasibleAllocationError):
        read_allocation(p)


def test_resolve_seed(monkeypatch):
    monkeypatch.delenv("BLOCKCODE_SEED", raising=False)
    assert resolve_seed(None) == 0
    monkeypatch.setenv("BLOCKCODE_SEED", "17")
    assert resolve_seed(None) == 17
    assert resolve_seed(3) == 3


def test_optimize_runtime_closed_form(cfg_file):
    code, out, err = run(["optimize-runtime", "--config", str(cfg_file), "--method", "closed-t",
                          "--set", "N=2", "--set", "L=4", "--set", "dist.t0=1", "--trials", "500"])
    assert code == 0, err
    lines = out.splitlines()
    assert lines[0] == "x=3,1"
    assert lines[1] == "x_rounded=3,1"
    assert lines[2].startswith("expected_runtime=")


def test_optimize_cdf(cfg_file):
    code, out, err = run(["optimize-cdf", "--config", str(cfg_file), "--threshold", "10",
                          "--iterations", "200"])
    assert code == 0, err
    x = np.array([float(v) for v in out.splitlines()[0][2:].split(",")])
    assert x.sum() == pytest.approx(12)
    code, out, _ = run(["optimize-cdf", "--config", str(cfg_file), "--threshold", "10", "--method",
                        "closed-lgt"])
    assert out.splitlines()[0] == "x=6.54545454545,3.27272727273,2.18181818182"


def test_simulate_is_byte_stable(cfg_file, alloc_file):
    argv = ["simulate", "--config", str(cfg_file), "--alloc", str(alloc_file), "--trials", "2000",
            "--seed", "5"]
    first = run(argv)
    assert first[0] == 0
    assert first == run(argv)
    header, row = first[1].splitlines()
    assert header == "metric,estimate,stderr,trials,seed"
    assert row.startswith("expected-runtime,") and row.endswith(",2000,5")


def test_simulate_probability(cfg_file, alloc_file):
    code, out, _ = run(["simulate", "--config", str(cfg_file), "--alloc", str(alloc_file),
                        "--metric", "completion-probability", "--threshold", "10", "--trials", "1000"])
    assert code == 0
    assert 0.0 <= float(out.splitlines()[1].split(",")[1]) <= 1.0


def test_sweep_csv_is_deterministic(tmp_path):
    plan = tmp_path / "plan.txt"
    plan.write_text("preset=runtime-vs-n\nsweep.values=2,3\nL=60\nschemes=closed-t,single-bcgc\ntrials=500\n")
    a = run(["sweep", "--plan", str(plan)])
    b = run(["sweep", "--plan", str(plan)])
    assert a[0] == 0 and a == b
    lines = a[1].splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 5
    assert lines[1].startswith("N,2,closed-t,expected-runtime,")
    assert lines[1].endswith(",500,0,,ok")


def test_sweep_records_failing_cell(tmp_path):
    # ssca needs a threshold, which an expected-runtime plan does not carry
    plan = load_plan(_write(tmp_path, "N=2\nL=8\ndist.mu=1\nsweep.param=N\nsweep.values=2\n"
                                      "schemes=single-bcgc,ssca\ntrials=200\n"))
    rows = run_plan(plan)
    assert rows[0][-1] == "ok"
    assert rows[1][2] == "ssca" and rows[1][4] == ""
    assert rows[1][-1] == "error: ConfigError: ssca needs a threshold"


def _write(tmp_path, text):
    p = tmp_path / "p.txt"
    p.write_text(text)
    return p


def test_sweep_timing_fills_wall_ms(tmp_path):
    plan = _write(tmp_path, "N=2\nL=8\ndist.mu=1\nsweep.param=mu\nsweep.values=0.5,1\nschemes=closed-t\n"
                            "trials=100\n")
    out = tmp_path / "out.csv"
    code, _, _ = run(["sweep", "--plan", str(plan), "--timing", "--output", str(out)])
    assert code == 0
    rows = out.read_text().splitlines()[1:]
    assert all(r.split(",")[8] for r in rows)


def test_demo_gd(tmp_path):
    cfg = _write(tmp_path, "N=4\nL=4\nM=40\ndist.mu=1\ndist.t0=0.1\n")
    alloc = tmp_path / "x.txt"
    write_allocation(alloc, [0, 2, 2, 0])
    code, out, err = run(["demo-gd", "--config", str(cfg), "--alloc", str(alloc), "--iters", "5"])
    assert code == 0, err
    lines = out.splitlines()
    assert lines[0] == "iteration,loss,runtime,cumulative_runtime"
    assert len(lines) == 6


def test_verify_quick():
    code, out, _ = run(["verify"])
    assert code == 0
    assert out.splitlines()[-1] == "passed=11 failed=0"


@pytest.mark.parametrize("argv,code,kind", [
    (["frobnicate"], 2, "usage"),
    (["simulate", "--config", "missing.cfg", "--alloc", "x"], 1, "missing-file"),
])
def test_error_paths(argv, code, kind):
    got, out, err = run(argv)
    assert got == code
    assert err.startswith(f"error: {kind}:")
    assert err.count("\n") == 1


def test_bad_config_and_allocation(tmp_path, cfg_file, alloc_file):
    bad = _write(tmp_path, SMALL + "colour=blue\n")
    code, _, err = run(["simulate", "--config", str(bad), "--alloc", str(alloc_file)])
    assert code == 1 and err.startswith("error: config: unknown config keys: colour")
    code, _, err = run(["simulate", "--config", str(cfg_file), "--alloc", str(alloc_file), "--set", "L=13"])
    assert code == 1 and err.startswith("error: infeasible-allocation:")
    code, _, err = run(["simulate", "--config", str(cfg_file), "--alloc", str(alloc_file),
                        "--metric", "completion-probability"])
    assert code == 1 and "threshold" in err
