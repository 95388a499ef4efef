"""Expected-runtime minimization over block allocations.

The relaxed problem ``min E[runtime(x, T)]`` over the scaled simplex is
convex but nonsmooth.  :func:`solve_expected_runtime` runs stochastic
projected subgradient descent on it; the two closed forms solve the same
problem with ``T`` replaced by a deterministic vector (expected order
statistics, or reciprocals of expected inverse order statistics), where the
optimum equalizes every prefix term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .projection import project_to_simplex_scaled
from .runtime import SchemeEvaluation, SystemConfig, prefix_loads, runtime_of_x_batch
from .schemes import batch_objective, mc_objective, round_allocation
from .straggler import (
    ShiftedExponential,
    harmonic,
    inverse_order_statistic_means,
    order_statistic_means,
)
from .validation import check_allocation, check_rng, check_runtime_matrix

__all__ = [
    "SubgradientSolverOptions",
    "RuntimeSolution",
    "noisy_subgradient",
    "solve_expected_runtime",
    "closed_form_from_times",
    "closed_form_deterministic_times",
    "closed_form_deterministic_frequencies",
    "closed_t_gap_bound",
    "closed_f_gap_bound",
    "ExpectedRuntimeOptimizer",
]


@dataclass
class SubgradientSolverOptions:
    iterations: int = 2000
    samples_per_iter: int = 10
    step_scale: float | None = None
    seed: int = 0
    eval_every: int = 50
    eval_trials: int = 1000
    patience: int = 5
    min_rel_improvement: float = 1e-4
    init: str = "closed-t"

    def __post_init__(self):
        if self.iterations < 1 or self.samples_per_iter < 1:
            raise ValueError("iterations and samples_per_iter must be >= 1")
        if self.step_scale is not None and not self.step_scale > 0:
            raise ValueError("step_scale must be positive")
        if self.init not in ("closed-t", "uniform"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class RuntimeSolution:
    x: np.ndarray
    objective: SchemeEvaluation
    n_iter: int = 0
    history: list = field(default_factory=list)


def noisy_subgradient(x, samples, cfg: SystemConfig) -> np.ndarray:
    """Average subgradient of ``runtime(x, t^j)`` over the sampled cycle-time vectors.

    For each sample the active prefix ``n*`` is the (smallest) maximizer of
    ``T_(N-n) S_n``; its gradient is ``scale * T_(N-n*) * (1, 2, ..., n*+1, 0, ...)``.
    """
    samples = check_runtime_matrix(samples, cfg.N)
    S = prefix_loads(x)
    Ts = np.sort(samples, axis=1)[:, ::-1]
    prod = np.where(S == 0, 0.0, Ts * S)
    nstar = prod.argmax(axis=1)
    weights = np.arange(1, cfg.N + 1, dtype=float)
    lead = Ts[np.arange(len(Ts)), nstar]
    mask = np.arange(cfg.N)[None, :] <= nstar[:, None]
    g = cfg.scale * lead[:, None] * weights[None, :] * mask
    return g.mean(axis=0)


def closed_form_from_times(t, L: float) -> np.ndarray:
    """Minimizer of ``max_n t_{N-n} S_n`` for ascending deterministic times ``t_1..t_N``.

    Every prefix term equals ``z``, the smallest value compatible with ``sum x = L``.
    """
    t = np.asarray(t, dtype=float)
    N = t.size
    if np.any(t <= 0) or np.any(np.diff(t) < 0):
        raise ValueError("deterministic times must be positive and nondecreasing")
    # t[k-1] holds t_k
    denom = math.fsum(1.0 / (n * (n + 1) * t[N - n]) for n in range(1, N)) + 1.0 / (N * t[0])
    z = L / denom
    x = np.empty(N)
    x[0] = z / t[N - 1]
    for n in range(1, N):
        x[n] = (1.0 / t[N - n - 1] - 1.0 / t[N - n]) * z / (n + 1)
    return x


def closed_form_deterministic_times(cfg: SystemConfig) -> np.ndarray:
    """Closed form with cycle times replaced by ``E[T_(n)]``."""
    return closed_form_from_times(order_statistic_means(cfg.dist, cfg.N), cfg.L)


def closed_form_deterministic_frequencies(cfg: SystemConfig, *, method: str = "auto") -> np.ndarray:
    """Closed form with cycle times replaced by ``1 / E[1/T_(n)]``."""
    inv = inverse_order_statistic_means(cfg.dist, cfg.N, method=method)
    return closed_form_from_times(1.0 / inv, cfg.L)


def closed_t_gap_bound(cfg: SystemConfig) -> float:
    """Upper bound on ``E[runtime(x_closed_t)] / optimum`` for shifted exponentials."""
    d = _shifted_exp(cfg)
    H = harmonic(cfg.N)
    return (1.0 / d.t0 + H / (d.mu * d.t0**2)) * (H / d.mu + d.t0)


def closed_f_gap_bound(cfg: SystemConfig) -> float:
    """Upper bound on ``E[runtime(x_closed_f)] / optimum`` for shifted exponentials."""
    d = _shifted_exp(cfg)
    return (harmonic(cfg.N) / d.mu + d.t0) / d.t0


def _shifted_exp(cfg):
    if not isinstance(cfg.dist, ShiftedExponential) or cfg.dist.t0 <= 0:
        raise TypeError("gap bounds need a shifted exponential with t0 > 0")
    return cfg.dist


def solve_expected_runtime(cfg: SystemConfig, opts: SubgradientSolverOptions | None = None) -> RuntimeSolution:
    """Stochastic projected subgradient descent with step ``step_scale / sqrt(i)``.

    Every ``eval_every`` iterations the current iterate and the average of
    the iterates since the last check are scored on one fixed batch of
    ``eval_trials`` cycle-time vectors; the best scored point is returned.
    Stops early after ``patience`` checks without a relative improvement of
    ``min_rel_improvement``.
    """
    opts = opts or SubgradientSolverOptions()
    N, L = cfg.N, cfg.L
    if N == 1:
        x = np.array([float(L)])
        return RuntimeSolution(x, mc_objective(x, cfg, "expected-runtime", None, opts.eval_trials, opts.seed + 1))

    rng = check_rng(opts.seed)
    eval_T = cfg.dist.sample(check_rng(opts.seed + 1), (opts.eval_trials, N))

    def score(x):
        return float(runtime_of_x_batch(x, eval_T, cfg).mean())

    if opts.init == "closed-t":
        x = closed_form_deterministic_times(cfg)
    else:
        x = np.full(N, L / N)
    x = project_to_simplex_scaled(x, L)

    sigma0 = opts.step_scale
    if sigma0 is None:
        g0 = noisy_subgradient(x, cfg.dist.sample(check_rng(opts.seed + 2), (opts.samples_per_iter, N)), cfg)
        sigma0 = 0.1 * L / max(np.linalg.norm(g0), 1e-300)

    best_x, best = x.copy(), score(x)
    history = [(0, best)]
    last_check = best
    stall = 0
    window = np.zeros(N)
    n_window = 0
    it = 0
    for it in range(1, opts.iterations + 1):
        g = noisy_subgradient(x, cfg.dist.sample(rng, (opts.samples_per_iter, N)), cfg)
        x = project_to_simplex_scaled(x - sigma0 / math.sqrt(it) * g, L)
        check_allocation(x, L, N=N)
        window += x
        n_window += 1
        if it % opts.eval_every == 0 or it == opts.iterations:
            avg = window / n_window
            for cand in (x, project_to_simplex_scaled(avg, L)):
                val = score(cand)
                if val < best:
                    best, best_x = val, cand.copy()
            history.append((it, best))
            window[:] = 0.0
            n_window = 0
            if best < last_check * (1 - opts.min_rel_improvement):
                stall = 0
            else:
                stall += 1
            last_check = min(last_check, best)
            if stall >= opts.patience:
                break
    vals = runtime_of_x_batch(best_x, eval_T, cfg)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    obj = SchemeEvaluation("expected-runtime", float(vals.mean()), se, opts.eval_trials, opts.seed + 1)
    return RuntimeSolution(best_x, obj, it, history)


class ExpectedRuntimeOptimizer(BaseEstimator):
    """Estimator wrapper: ``fit(config)`` finds an allocation, ``predict(T)`` gives runtimes.

    Parameters
    ----------
    method : {"alg1", "closed-t", "closed-f"}
        Stochastic subgradient solver or one of the two closed forms.
    iterations, samples_per_iter, step_scale, eval_every, eval_trials, patience, init
        Forwarded to :class:`SubgradientSolverOptions` (``alg1`` only).
    round_trials : int
        Common-random-number trials used by the rounding local search.
    random_state : int
    """

    def __init__(self, method="alg1", iterations=2000, samples_per_iter=10, step_scale=None,
                 eval_every=50, eval_trials=1000, patience=5, init="closed-t",
                 round_trials=2000, random_state=0):
        self.method = method
        self.iterations = iterations
        self.samples_per_iter = samples_per_iter
        self.step_scale = step_scale
        self.eval_every = eval_every
        self.eval_trials = eval_trials
        self.patience = patience
        self.init = init
        self.round_trials = round_trials
        self.random_state = random_state

    def fit(self, config: SystemConfig, y=None):
        seed = int(self.random_state)
        self.n_iter_ = 0
        self.history_ = []
        if self.method == "alg1":
            opts = SubgradientSolverOptions(
                iterations=self.iterations, samples_per_iter=self.samples_per_iter,
                step_scale=self.step_scale, seed=seed, eval_every=self.eval_every,
                eval_trials=self.eval_trials, patience=self.patience, init=self.init)
            sol = solve_expected_runtime(config, opts)
            self.allocation_ = sol.x
            self.n_iter_ = sol.n_iter
            self.history_ = sol.history
        elif self.method == "closed-t":
            self.allocation_ = closed_form_deterministic_times(config)
        elif self.method == "closed-f":
            self.allocation_ = closed_form_deterministic_frequencies(config)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.objective_ = mc_objective(self.allocation_, config, "expected-runtime", None,
                                       self.eval_trials, seed + 1)
        self.allocation_int_ = round_allocation(
            self.allocation_, batch_objective(config, "expected-runtime",
                                              trials=self.round_trials, seed=seed + 3))
        self.config_ = config
        return self

    def _check_fitted(self):
        if not hasattr(self, "allocation_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("call fit(config) first")

    def predict(self, T, *, integer=False):
        """Overall runtime of the fitted allocation for each row of cycle times ``T``."""
        self._check_fitted()
        T = check_runtime_matrix(T, self.config_.N)
        x = self.allocation_int_ if integer else self.allocation_
        return runtime_of_x_batch(x, T, self.config_)

    def score(self, T, y=None):
        """Negative mean runtime (larger is better)."""
        return -float(np.mean(self.predict(T)))
