"""Built-in oracle checks run by ``blockcode verify``."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import ballot
from .codec import EXAMPLE_CODE_S1, EXAMPLE_CODE_S2, build_code, code_from_matrix, decode
from .opt_cdf import closed_form_large_t, g_gradient, g_value, g_value_batch, verify_large_t_reduction
from .opt_runtime import closed_form_from_times
from .projection import project_to_simplex_scaled
from .runtime import (
    SystemConfig,
    completion_prob_exact,
    completion_prob_mc,
    runtime_of_s,
    runtime_of_x,
    s_to_x,
)
from .straggler import ShiftedExponential, expected_inverse_order_statistic

__all__ = ["CheckResult", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _example_runtimes(level, rng):
    cfg = SystemConfig(4, 4, 4, 1, ShiftedExponential(1.0))
    T = [Fraction(1, 10), Fraction(1, 10), Fraction(1, 4), Fraction(1)]
    got = [runtime_of_s(s, T, cfg) for s in ((1, 1, 1, 1), (2, 2, 2, 2), (1, 1, 2, 2))]
    want = [Fraction(2), Fraction(6, 5), Fraction(1)]
    return got == want, f"{[str(g) for g in got]}"


def _equivalence(level, rng):
    n = 10_000 if level == "full" else 1000
    for _ in range(n):
        N = int(rng.integers(1, 17))
        L = int(rng.integers(1, 40))
        cfg = SystemConfig(N, max(L, N), 1 + int(rng.integers(0, 5)), 1, ShiftedExponential(1.0))
        s = np.sort(rng.integers(0, N, size=cfg.L))
        T = [Fraction(int(v), 97) for v in rng.integers(1, 500, size=N)]
        if runtime_of_s(s, T, cfg) != runtime_of_x([int(v) for v in s_to_x(s, N)], T, cfg):
            return False, f"mismatch at N={N}"
    return True, f"{n} random pairs"


def _catalan(level, rng):
    for N in range(1, 9):
        if ballot.count(0, N) != sum(1 for _ in ballot.enumerate_ballots(N)):
            return False, f"N={N}"
    ok = all(ballot.count(0, N) * (N + 1) == 2 * math.comb(2 * N - 1, N - 1) for N in range(1, 101))
    return ok, "enumeration N<=8, formula N<=100"


def _conditionals(level, rng):
    top = 8 if level == "full" else 6
    for N in range(1, top + 1):
        K = list(ballot.enumerate_ballots(N))
        for n in range(N - 1):
            groups = Counter((k[:n], k[n]) for k in K)
            totals = Counter(k[:n] for k in K)
            for prefix, tot in totals.items():
                pmf = ballot.conditional_pmf(prefix, N, exact=True)
                for v, pv in enumerate(pmf):
                    if pv != Fraction(groups.get((prefix, v), 0), tot):
                        return False, f"N={N} prefix={prefix}"
    return True, f"all prefixes N<={top}"


def _closed_forms(level, rng):
    x = closed_form_from_times([1.5, 2.5], 4.0)
    if not np.allclose(x, [3.0, 1.0], rtol=1e-12):
        return False, f"hand case gave {x}"
    for _ in range(50):
        N = int(rng.integers(1, 30))
        t = np.sort(rng.uniform(0.1, 10, size=N))
        x = closed_form_from_times(t, 1000.0)
        terms = t[::-1] * np.cumsum(np.arange(1, N + 1) * x)
        if terms.max() - terms.min() > 1e-9 * terms.max():
            return False, f"not equalized at N={N}"
    if not all(verify_large_t_reduction(SystemConfig(N, 100, 1, 1, ShiftedExponential(1.0))) for N in range(1, 101)):
        return False, "large-threshold reduction"
    lgt = closed_form_large_t(SystemConfig(3, 11, 1, 1, ShiftedExponential(1.0)))
    return bool(np.allclose(lgt, [6, 3, 2], rtol=1e-12)), "equalization, hand case, reduction"


def _inverse_moment(level, rng):
    v = expected_inverse_order_statistic(ShiftedExponential(1.0, 1.0), 1, 1)
    return abs(v - 1 / 0.596347362323194) < 1e-6, f"t'={v:.6f}"


def _gradients(level, rng):
    n = 200 if level == "full" else 40
    worst = 0.0
    for _ in range(n):
        N = int(rng.integers(1, 7))
        cfg = SystemConfig(N, 60, float(rng.uniform(1, 4)), 1, ShiftedExponential(float(rng.uniform(0.5, 2)),
                                                                                   float(rng.uniform(0.05, 0.5))))
        x = rng.dirichlet(np.ones(N)) * 60 + 1e-3
        x *= 60 / x.sum()
        t = float(rng.uniform(1.0, 3.0)) * cfg.scale * 60
        k = ballot.sample(N, rng)
        g = g_gradient(x, t, k, cfg)
        h = 1e-6 * x
        fd = np.array([(g_value(x + h[j] * e, t, k, cfg) - g_value(x - h[j] * e, t, k, cfg)) / (2 * h[j])
                       for j, e in enumerate(np.eye(N))])
        scale = np.abs(g).max()
        if scale > 1e-10:
            worst = max(worst, float(np.abs(fd - g).max() / scale))
    return worst < 1e-5, f"max relative error {worst:.2e}"


def _exact_probability(level, rng):
    for _ in range(20):
        N = int(rng.integers(1, 8))
        cfg = SystemConfig(N, 30, 2.0, 1, ShiftedExponential(1.0, 0.1))
        x = rng.dirichlet(np.ones(N)) * 30
        x *= 30 / x.sum()
        t = float(rng.uniform(0.5, 2.0)) * cfg.scale * 30
        dp = completion_prob_exact(x, t, cfg)
        en = completion_prob_exact(x, t, cfg, method="enumerate")
        gs = float(g_value_batch(x, t, ballot.enumerate_array(N), cfg).sum())
        if abs(dp - en) > 1e-12 or abs(gs - dp) > 1e-12:
            return False, f"N={N}: dp={dp} enum={en} g-sum={gs}"
    detail = "dp = enumeration = sum of g"
    if level == "full":
        cfg = SystemConfig(3, 6, 3, 1, ShiftedExponential(1.0, 0.1))
        ex = completion_prob_exact([3, 2, 1], 5.0, cfg)
        mc = completion_prob_mc([3, 2, 1], 5.0, cfg, trials=10**6, seed=1)
        if abs(ex - mc.estimate) > 3 * mc.stderr:
            return False, f"exact {ex} vs MC {mc.estimate} +- {mc.stderr}"
        detail += ", Monte Carlo within 3 se"
    return True, detail


def _projection(level, rng):
    for _ in range(200):
        N = int(rng.integers(1, 8))
        xhat = rng.normal(0, 3, size=N)
        L = float(rng.uniform(0.5, 10))
        x = project_to_simplex_scaled(xhat, L)
        lam = x - xhat
        act = x > 1e-12
        if abs(x.sum() - L) > 1e-9 * L or np.any(x < 0):
            return False, "infeasible"
        if act.any() and (np.ptp(lam[act]) > 1e-9 or np.any(lam[~act] < lam[act][0] - 1e-9)):
            return False, "KKT violated"
    return True, "KKT on 200 random points"


def _codec(level, rng):
    top = 8 if level == "full" else 6
    worst = 0.0
    for N in range(1, top + 1):
        for s in range(N):
            code = build_code(N, s, rng)
            g = rng.standard_normal((N, 3))
            tot = g.sum(axis=0)
            for W in itertools.combinations(range(N), N - s):
                d = decode(code, {w: code.B[w] @ g for w in W})
                worst = max(worst, float(np.abs(d - tot).max() / np.abs(tot).max()))
    for B, s in ((EXAMPLE_CODE_S1, 1), (EXAMPLE_CODE_S2, 2)):
        code = code_from_matrix(B, s)
        g = rng.standard_normal((4, 3))
        for W in itertools.combinations(range(4), 4 - s):
            d = decode(code, {w: code.B[w] @ g for w in W})
            worst = max(worst, float(np.abs(d - g.sum(axis=0)).max() / np.abs(g.sum(axis=0)).max()))
    return worst < 1e-9, f"max relative error {worst:.2e}"


def _sampler(level, rng):
    draws = 10**6 if level == "full" else 10**5
    worst = 0.0
    for N in range(2, 7):
        K = ballot.sample_many(N, draws, rng)
        _, counts = np.unique(K, axis=0, return_counts=True)
        total = ballot.count(0, N)
        if len(counts) != total:
            return False, f"N={N}: saw {len(counts)} of {total} vectors"
        tv = 0.5 * np.abs(counts / draws - 1.0 / total).sum()
        worst = max(worst, tv)
    limit = 0.01 if level == "full" else 0.03
    return worst < limit, f"max total variation {worst:.4f}"


CHECKS = [
    ("example-runtimes", _example_runtimes),
    ("s-x-equivalence", _equivalence),
    ("catalan-count", _catalan),
    ("conditional-pmf", _conditionals),
    ("closed-forms", _closed_forms),
    ("inverse-moment", _inverse_moment),
    ("g-gradient", _gradients),
    ("exact-probability", _exact_probability),
    ("projection", _projection),
    ("codec-recovery", _codec),
    ("ballot-sampler", _sampler),
]


def run_checks(level: str = "quick", seed: int = 0) -> list[CheckResult]:
    if level not in ("quick", "full"):
        raise ValueError("level must be quick or full")
    out = []
    for i, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, i])
        try:
            ok, detail = fn(level, rng)
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
