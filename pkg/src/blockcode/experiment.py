"""Plain-text configs, allocation files and the sweep runner behind the CLI."""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .runtime import SystemConfig, evaluate_many
from .straggler import Bernoulli, Empirical, ShiftedExponential
from .validation import InfeasibleAllocationError, check_allocation

__all__ = [
    "ConfigError",
    "parse_key_values",
    "config_from_mapping",
    "load_config",
    "read_allocation",
    "write_allocation",
    "format_allocation",
    "ExperimentPlan",
    "PRESETS",
    "plan_from_mapping",
    "load_plan",
    "scheme_allocation",
    "run_plan",
    "rows_to_csv",
    "resolve_seed",
    "CSV_HEADER",
]

CSV_HEADER = ["sweep_param", "sweep_value", "scheme", "metric", "estimate", "stderr", "trials", "seed",
              "wall_ms", "status"]
SCHEMES = ("alg1", "closed-t", "closed-f", "ssca", "closed-lgt", "single-bcgc")
METRICS = ("expected-runtime", "completion-probability")
SWEEP_AXES = ("N", "mu", "L", "t")
SEED_ENV = "BLOCKCODE_SEED"

CONFIG_KEYS = {"N", "L", "M", "b", "dist.kind", "dist.mu", "dist.t0", "dist.p_straggle", "dist.t_fast",
               "dist.t_slow", "dist.samples"}
PLAN_KEYS = {"preset", "sweep.param", "sweep.values", "metric", "schemes", "trials", "seed", "threshold",
             "output"}


class ConfigError(ValueError):
    pass


def parse_key_values(text: str) -> dict:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _num(d, key, cast=float, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"missing key {key}")
        return default
    try:
        return cast(float(d[key])) if cast is int else cast(d[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {d[key]!r}") from exc


def config_from_mapping(d: dict, *, allow_extra=()) -> SystemConfig:
    unknown = sorted(set(d) - CONFIG_KEYS - set(allow_extra))
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    kind = d.get("dist.kind", "shifted-exponential")
    if kind == "shifted-exponential":
        dist = ShiftedExponential(_num(d, "dist.mu"), _num(d, "dist.t0", default=0.0))
    elif kind == "bernoulli":
        dist = Bernoulli(_num(d, "dist.p_straggle"), _num(d, "dist.t_fast"), _num(d, "dist.t_slow"))
    elif kind == "empirical":
        if "dist.samples" not in d:
            raise ConfigError("missing key dist.samples")
        dist = Empirical(tuple(float(v) for v in d["dist.samples"].split(",") if v.strip()))
    else:
        raise ConfigError(f"unknown dist.kind {kind!r}")
    return SystemConfig(_num(d, "N", int), _num(d, "L", int), _num(d, "M", default=50.0),
                        _num(d, "b", default=1.0), dist)


def load_config(path, overrides: dict | None = None) -> SystemConfig:
    d = parse_key_values(Path(path).read_text())
    d.update(overrides or {})
    return config_from_mapping(d)


def format_allocation(x) -> str:
    x = [int(v) for v in x]
    return "".join(f"{v}\n" for v in x) + f"sum={sum(x)}\n"


def write_allocation(path, x) -> None:
    Path(path).write_text(format_allocation(x))


def read_allocation(path, L: int | None = None) -> np.ndarray:
    """Read one integer per line followed by ``sum=L``; the checksum must match."""
    values, total = [], None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("sum="):
            total = int(line[4:])
            continue
        try:
            values.append(int(line))
        except ValueError as exc:
            raise InfeasibleAllocationError(f"line {lineno}: not an integer: {line!r}") from exc
    if total is None:
        raise InfeasibleAllocationError("allocation file lacks the sum=L line")
    if sum(values) != total:
        raise InfeasibleAllocationError(f"entries sum to {sum(values)} but checksum says {total}")
    if L is not None and total != L:
        raise InfeasibleAllocationError(f"allocation sums to {total}, config has L={L}")
    return check_allocation(np.array(values), total, integer=True)


def resolve_seed(seed):
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


@dataclass
class ExperimentPlan:
    base: SystemConfig
    sweep_param: str
    sweep_values: list
    metric: str = "expected-runtime"
    schemes: list = field(default_factory=lambda: ["closed-t", "single-bcgc"])
    trials: int = 10_000
    seed: int = 0
    threshold: float | None = None
    output: str | None = None

    def __post_init__(self):
        if self.sweep_param not in SWEEP_AXES:
            raise ConfigError(f"sweep.param must be one of {', '.join(SWEEP_AXES)}")
        if not self.sweep_values:
            raise ConfigError("sweep.values is empty")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError("unknown schemes: " + ", ".join(bad) if bad else "no schemes given")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.metric == "completion-probability" and self.threshold is None and self.sweep_param != "t":
            raise ConfigError("completion-probability plans need a threshold")


PRESETS = {
    "runtime-vs-n": {"N": "20", "L": "20000", "M": "50", "b": "1", "dist.kind": "shifted-exponential",
             "dist.mu": "1e-3", "dist.t0": "100", "sweep.param": "N", "sweep.values": "5,10,20",
             "metric": "expected-runtime", "schemes": "alg1,closed-t,closed-f,single-bcgc"},
    "probability-vs-n": {"N": "20", "L": "40000", "M": "50", "b": "1", "dist.kind": "shifted-exponential",
             "dist.mu": "0.1", "dist.t0": "1", "threshold": str(10**6.5), "sweep.param": "N",
             "sweep.values": "5,10,20", "metric": "completion-probability",
             "schemes": "ssca,closed-lgt,single-bcgc"},
    "probability-vs-t": {"N": "20", "L": "40000", "M": "50", "b": "1", "dist.kind": "shifted-exponential",
             "dist.mu": "0.1", "dist.t0": "1", "sweep.param": "t",
             "sweep.values": ",".join(str(10**e) for e in (6.3, 6.4, 6.5, 6.6, 6.7)),
             "metric": "completion-probability", "schemes": "ssca,closed-lgt,single-bcgc"},
}


def plan_from_mapping(d: dict) -> ExperimentPlan:
    d = dict(d)
    preset = d.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        d = {**PRESETS[preset], **d}
    unknown = sorted(set(d) - CONFIG_KEYS - PLAN_KEYS)
    if unknown:
        raise ConfigError("unknown plan keys: " + ", ".join(unknown))
    base = config_from_mapping({k: v for k, v in d.items() if k in CONFIG_KEYS})
    if "sweep.param" not in d or "sweep.values" not in d:
        raise ConfigError("plan needs sweep.param and sweep.values")
    values = [float(v) for v in d["sweep.values"].split(",") if v.strip()]
    return ExperimentPlan(
        base=base,
        sweep_param=d["sweep.param"],
        sweep_values=values,
        metric=d.get("metric", "expected-runtime"),
        schemes=[s.strip() for s in d.get("schemes", "closed-t,single-bcgc").split(",") if s.strip()],
        trials=_num(d, "trials", int, 10_000),
        seed=_num(d, "seed", int, 0),
        threshold=_num(d, "threshold", float, None) if "threshold" in d else None,
        output=d.get("output"),
    )


def load_plan(path) -> ExperimentPlan:
    return plan_from_mapping(parse_key_values(Path(path).read_text()))


def scheme_allocation(scheme: str, cfg: SystemConfig, metric: str, t, *, trials: int, seed: int) -> np.ndarray:
    """Integer allocation produced by a named scheme for one configuration."""
    from .opt_cdf import CompletionProbabilityOptimizer, closed_form_large_t
    from .opt_runtime import ExpectedRuntimeOptimizer
    from .schemes import batch_objective, round_allocation, single_bcgc

    def rounded(x):
        return round_allocation(x, batch_objective(cfg, metric, t, trials=min(trials, 2000), seed=seed + 3))

    if scheme in ("alg1", "closed-t", "closed-f"):
        est = ExpectedRuntimeOptimizer(method=scheme, random_state=seed, round_trials=min(trials, 2000))
        est.fit(cfg)
        return est.allocation_int_ if metric == "expected-runtime" else rounded(est.allocation_)
    if scheme == "ssca":
        if t is None:
            raise ConfigError("ssca needs a threshold")
        est = CompletionProbabilityOptimizer(threshold=t, random_state=seed).fit(cfg)
        return est.allocation_int_ if metric == "completion-probability" else rounded(est.allocation_)
    if scheme == "closed-lgt":
        return rounded(closed_form_large_t(cfg))
    if scheme == "single-bcgc":
        return np.asarray(single_bcgc(cfg, metric, t, trials=trials, seed=seed).allocation)
    raise ConfigError(f"unknown scheme {scheme!r}")


def _cell_config(plan: ExperimentPlan, value):
    cfg, t = plan.base, plan.threshold
    if plan.sweep_param == "N":
        cfg = cfg.replace(N=int(value))
    elif plan.sweep_param == "L":
        cfg = cfg.replace(L=int(value))
    elif plan.sweep_param == "mu":
        if not isinstance(cfg.dist, ShiftedExponential):
            raise ConfigError("mu sweeps need a shifted-exponential distribution")
        cfg = cfg.replace(dist=replace(cfg.dist, mu=float(value)))
    else:
        t = float(value)
    return cfg, t


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def run_plan(plan: ExperimentPlan, *, record_timing: bool = False) -> list[list[str]]:
    """Rows in plan order: one per (sweep value, scheme).

    Schemes in one cell are scored on common random numbers.  ``wall_ms``
    is left blank unless ``record_timing`` is set, keeping output
    byte-identical across runs.  A failing scheme yields a row whose
    ``status`` holds the error.
    """
    rows = []
    for value in plan.sweep_values:
        cfg, t = _cell_config(plan, value)
        if plan.sweep_param in ("N", "L"):
            value = int(value)
        allocs, meta = [], []
        for scheme in plan.schemes:
            start = time.perf_counter()
            try:
                x = scheme_allocation(scheme, cfg, plan.metric, t, trials=plan.trials, seed=plan.seed)
                allocs.append(x)
                meta.append((scheme, time.perf_counter() - start, "ok"))
            except Exception as exc:  # recorded per cell, the sweep continues
                meta.append((scheme, time.perf_counter() - start, f"error: {type(exc).__name__}: {exc}"))
        evals = iter(evaluate_many(allocs, cfg, metric=plan.metric, t=t, trials=plan.trials, seed=plan.seed)
                     if allocs else [])
        for scheme, wall, status in meta:
            ms = f"{wall * 1000:.1f}" if record_timing else ""
            if status == "ok":
                e = next(evals)
                rows.append([plan.sweep_param, _fmt(value), scheme, plan.metric, _fmt(e.estimate),
                             _fmt(e.stderr), str(e.trials), str(plan.seed), ms, status])
            else:
                rows.append([plan.sweep_param, _fmt(value), scheme, plan.metric, "", "", str(plan.trials),
                             str(plan.seed), ms, status])
    return rows


def rows_to_csv(rows, header=CSV_HEADER) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
