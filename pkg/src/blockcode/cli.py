"""Command-line entry point: ``blockcode <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .experiment import (
    ConfigError,
    load_config,
    load_plan,
    read_allocation,
    resolve_seed,
    rows_to_csv,
    run_plan,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _fmt_vec(x) -> str:
    return ",".join(f"{float(v):.12g}" for v in x)


def _overrides(args) -> dict:
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _cmd_optimize_runtime(args, out):
    from .opt_runtime import ExpectedRuntimeOptimizer

    cfg = load_config(args.config, _overrides(args))
    est = ExpectedRuntimeOptimizer(method=args.method, random_state=resolve_seed(args.seed),
                                   eval_trials=args.trials).fit(cfg)
    out.write(f"x={_fmt_vec(est.allocation_)}\n")
    out.write(f"x_rounded={','.join(str(int(v)) for v in est.allocation_int_)}\n")
    out.write(f"expected_runtime={est.objective_.estimate!r} stderr={est.objective_.stderr!r}\n")


def _cmd_optimize_cdf(args, out):
    from .opt_cdf import CompletionProbabilityOptimizer

    cfg = load_config(args.config, _overrides(args))
    est = CompletionProbabilityOptimizer(threshold=args.threshold, method=args.method,
                                         iterations=args.iterations,
                                         random_state=resolve_seed(args.seed)).fit(cfg)
    out.write(f"x={_fmt_vec(est.allocation_)}\n")
    out.write(f"x_rounded={','.join(str(int(v)) for v in est.allocation_int_)}\n")
    out.write(f"completion_probability={est.probability_!r} rounded={est.probability_int_!r}\n")


def _cmd_simulate(args, out):
    from .runtime import evaluate_many

    cfg = load_config(args.config, _overrides(args))
    x = read_allocation(args.alloc, cfg.L)
    if len(x) != cfg.N:
        raise ConfigError(f"allocation has {len(x)} entries, config has N={cfg.N}")
    if args.metric == "completion-probability" and args.threshold is None:
        raise ConfigError("completion-probability needs --threshold")
    seed = resolve_seed(args.seed)
    e = evaluate_many([x], cfg, metric=args.metric, t=args.threshold, trials=args.trials, seed=seed)[0]
    out.write("metric,estimate,stderr,trials,seed\n")
    out.write(f"{e.metric},{e.estimate!r},{e.stderr!r},{e.trials},{seed}\n")


def _cmd_sweep(args, out):
    plan = load_plan(args.plan)
    if args.seed is not None:
        plan.seed = int(args.seed)
    text = rows_to_csv(run_plan(plan, record_timing=args.timing))
    target = args.output or plan.output
    if target:
        Path(target).write_text(text)
    else:
        out.write(text)


def _cmd_demo_gd(args, out):
    from .codec import make_least_squares, run_coded_gd

    cfg = load_config(args.config, _overrides(args))
    x = read_allocation(args.alloc, cfg.L)
    m = int(round(cfg.M))
    if m != cfg.M:
        raise ConfigError("demo-gd needs an integer sample count M")
    seed = resolve_seed(args.seed)
    rng = np.random.default_rng(seed)
    problem = make_least_squares(cfg.N, m, cfg.L, rng)
    trace = run_coded_gd(problem, x, cfg, rng, args.iters)
    text = trace.to_csv()
    if args.output:
        Path(args.output).write_text(text)
    else:
        out.write(text)


def _cmd_verify(args, out):
    from .verify import run_checks

    results = run_checks(args.level, resolve_seed(args.seed))
    for r in results:
        out.write(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}\n")
    passed = sum(r.passed for r in results)
    out.write(f"passed={passed} failed={len(results) - passed}\n")
    return 0 if passed == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blockcode", description="Block coordinate gradient coding toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="key=value configuration file")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--seed", type=int, default=None, help="random seed (default: $BLOCKCODE_SEED or 0)")

    sp = sub.add_parser("optimize-runtime", help="minimize the expected runtime")
    common(sp)
    sp.add_argument("--method", choices=["alg1", "closed-t", "closed-f"], default="alg1")
    sp.add_argument("--trials", type=int, default=10_000)
    sp.set_defaults(func=_cmd_optimize_runtime)

    sp = sub.add_parser("optimize-cdf", help="maximize the completion probability")
    common(sp)
    sp.add_argument("--threshold", type=float, required=True)
    sp.add_argument("--method", choices=["ssca", "closed-lgt"], default="ssca")
    sp.add_argument("--iterations", type=int, default=3000)
    sp.set_defaults(func=_cmd_optimize_cdf)

    sp = sub.add_parser("simulate", help="Monte Carlo evaluation of an allocation file")
    common(sp)
    sp.add_argument("--alloc", required=True)
    sp.add_argument("--metric", choices=["expected-runtime", "completion-probability"],
                    default="expected-runtime")
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("sweep", help="run an experiment plan and write CSV")
    common(sp, config=False)
    sp.add_argument("--plan", required=True)
    sp.add_argument("--output", default=None)
    sp.add_argument("--timing", action="store_true", help="fill wall_ms (output is then not byte-stable)")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("demo-gd", help="coded gradient descent on synthetic least squares")
    common(sp)
    sp.add_argument("--alloc", required=True)
    sp.add_argument("--iters", type=int, default=50)
    sp.add_argument("--output", default=None)
    sp.set_defaults(func=_cmd_demo_gd)

    sp = sub.add_parser("verify", help="run the built-in oracle checks")
    common(sp, config=False)
    sp.add_argument("--level", choices=["quick", "full"], default="quick")
    sp.set_defaults(func=_cmd_verify)
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return int(args.func(args, out) or 0)
    except _UsageError as exc:
        err.write(f"error: usage: {exc}\n")
        return 2
    except FileNotFoundError as exc:
        err.write(f"error: missing-file: {exc.filename}\n")
        return 1
    except Exception as exc:
        kind = {"InfeasibleAllocationError": "infeasible-allocation", "ConfigError": "config"}.get(
            type(exc).__name__, type(exc).__name__)
        msg = str(exc).replace("\n", " ")
        err.write(f"error: {kind}: {msg}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
