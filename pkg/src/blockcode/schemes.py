"""Integer rounding of allocations and the baseline schemes they are compared with."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .runtime import (
    SchemeEvaluation,
    SystemConfig,
    _runtime_from_sorted,
    completion_prob_exact,
    evaluate_many,
    sort_descending,
)
from .validation import check_allocation, check_rng

__all__ = [
    "SchemeSpec",
    "largest_remainder",
    "round_allocation",
    "mc_objective",
    "batch_objective",
    "single_bcgc",
    "compare_schemes",
]

METRICS = ("expected-runtime", "completion-probability")


@dataclass(frozen=True)
class SchemeSpec:
    name: str
    allocation: tuple
    provenance: str = ""

    def __post_init__(self):
        arr = check_allocation(np.asarray(self.allocation), int(np.sum(self.allocation)), integer=True)
        object.__setattr__(self, "allocation", tuple(int(v) for v in arr))

    @property
    def L(self) -> int:
        return sum(self.allocation)


def largest_remainder(x, L: int) -> np.ndarray:
    """Floor every entry, then hand the missing units to the largest remainders (ties: lower index)."""
    x = np.asarray(x, dtype=float)
    base = np.floor(x + 1e-9).astype(np.int64)
    base = np.maximum(base, 0)
    short = int(L) - int(base.sum())
    if short < 0:
        # floors overshoot only through the tolerance above; take units back from the smallest remainders
        order = np.argsort(x - base, kind="stable")
        for j in order[:-short]:
            base[j] -= 1
        return base
    rem = x - base
    order = np.argsort(-rem, kind="stable")
    base[order[:short]] += 1
    return base


def round_allocation(x, objective, *, max_moves: int | None = None) -> np.ndarray:
    """Integer allocation near ``x`` with objective no worse than largest-remainder rounding.

    ``objective`` maps a ``(k, N)`` array of integer allocations to ``k``
    values, lower being better.  Starting from the largest-remainder point,
    the best single-unit move between two blocks is applied while it
    strictly improves the objective, at most ``max_moves`` (default ``10 N``) times.
    """
    x = np.asarray(x, dtype=float)
    N = x.size
    L = int(round(x.sum()))
    check_allocation(x, L, N=N)
    cur = largest_remainder(x, L)
    if max_moves is None:
        max_moves = 10 * N
    if N == 1 or max_moves <= 0:
        return cur
    src, dst = np.nonzero(~np.eye(N, dtype=bool))
    cur_val = float(objective(cur[None, :])[0])
    for _ in range(max_moves):
        ok = cur[src] > 0
        if not ok.any():
            break
        cand = np.repeat(cur[None, :], ok.sum(), axis=0)
        rows = np.arange(cand.shape[0])
        cand[rows, src[ok]] -= 1
        cand[rows, dst[ok]] += 1
        vals = np.asarray(objective(cand), dtype=float)
        j = int(np.argmin(vals))
        if not vals[j] < cur_val:
            break
        cur, cur_val = cand[j], float(vals[j])
    return cur


def batch_objective(cfg: SystemConfig, metric: str, t=None, *, trials: int = 2000, seed=0,
                    exact: bool | None = None):
    """Callable scoring many allocations at once (lower is better).

    Expected runtime is estimated on one fixed batch of cycle times shared
    by every call.  Completion probability is negated and, by default,
    computed exactly.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "completion-probability":
        if t is None:
            raise ValueError("completion probability needs a threshold t")
        if exact is None or exact:
            def f_exact(X):
                X = np.atleast_2d(X)
                return np.array([-completion_prob_exact(xi, t, cfg) for xi in X])
            return f_exact
    Ts = sort_descending(cfg.dist.sample(check_rng(seed), (trials, cfg.N)))

    def f_mc(X):
        X = np.atleast_2d(X)
        out = np.empty(len(X))
        for i, xi in enumerate(X):
            tau = _runtime_from_sorted(xi, Ts, cfg)
            out[i] = tau.mean() if metric == "expected-runtime" else -(tau <= t).mean()
        return out

    return f_mc


def mc_objective(x, cfg: SystemConfig, metric: str, t=None, trials: int = 10_000, seed=0) -> SchemeEvaluation:
    return evaluate_many([x], cfg, metric=metric, t=t, trials=trials, seed=seed)[0]


def single_bcgc(cfg: SystemConfig, metric: str = "expected-runtime", t=None, *,
                trials: int = 10_000, seed=0) -> SchemeSpec:
    """Best allocation putting all ``L`` coordinates in one block (uniform redundancy).

    Candidates share common random numbers; completion probability is exact.
    """
    N, L = cfg.N, cfg.L
    cands = [np.eye(N, dtype=np.int64)[n] * L for n in range(N)]
    if metric == "completion-probability":
        if t is None:
            raise ValueError("completion probability needs a threshold t")
        scores = [-completion_prob_exact(c, t, cfg) for c in cands]
    elif metric == "expected-runtime":
        scores = [e.estimate for e in evaluate_many(cands, cfg, metric=metric, trials=trials, seed=seed)]
    else:
        raise ValueError(f"unknown metric {metric!r}")
    best = int(np.argmin(scores))
    return SchemeSpec("single-bcgc", tuple(cands[best]), f"uniform redundancy s={best}")


def compare_schemes(schemes, cfg: SystemConfig, metrics=("expected-runtime",), t=None, *,
                    trials: int = 10_000, seed=0) -> list[tuple[str, SchemeEvaluation]]:
    """One ``(scheme name, evaluation)`` row per scheme and metric, on common random numbers."""
    schemes = list(schemes)
    rows = []
    for metric in metrics:
        evals = evaluate_many([np.asarray(s.allocation) for s in schemes], cfg, metric=metric, t=t,
                              trials=trials, seed=seed)
        rows.extend((s.name, e) for s, e in zip(schemes, evals))
    return rows
