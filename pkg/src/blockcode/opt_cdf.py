"""Completion-probability maximization over block allocations.

The exact probability is a sum over ballot vectors ``k`` of
``g(x, t, k) = N!/prod(k_n!) * prod p_n(x)^k_n``.  Sampling ``k`` uniformly
turns it into ``count * E[g(x, t, k)]``, which stochastic successive convex
approximation (:func:`solve_completion_probability`) maximizes.  For very
large thresholds the optimum approaches the harmonic allocation of
:func:`closed_form_large_t`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import ballot
from .opt_runtime import closed_form_from_times
from .projection import ssca_subproblem
from .runtime import (
    SystemConfig,
    asymptotic_failure,
    block_probabilities,
    completion_prob_exact,
    prefix_loads,
    prefix_thresholds,
    runtime_of_x_batch,
)
from .schemes import batch_objective, round_allocation
from .straggler import ShiftedExponential, harmonic
from .validation import check_allocation, check_rng, check_runtime_matrix

__all__ = [
    "SscaSolverOptions",
    "CdfSolution",
    "g_value",
    "g_gradient",
    "g_value_batch",
    "g_gradient_batch",
    "solve_completion_probability",
    "closed_form_large_t",
    "verify_large_t_reduction",
    "CompletionProbabilityOptimizer",
]


@dataclass
class SscaSolverOptions:
    """``sigma_i = i**-a_sigma`` weights new gradients, ``gamma_i = i**-a_gamma`` smooths iterates.

    ``tau_prox=None`` picks the proximal weight so that the first surrogate
    step, taken in the normalized variable ``x / L``, has length
    ``step_radius``; one run is made per listed radius.
    """

    iterations: int = 3000
    tau_prox: float | None = None
    a_sigma: float = 0.55
    a_gamma: float = 0.7
    batch: int = 256
    step_radius: tuple = (0.01, 0.02, 0.05)
    eval_every: int = 100
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        if self.iterations < 1 or self.batch < 1 or self.eval_every < 1:
            raise ValueError("iterations, batch and eval_every must be >= 1")
        if self.tau_prox is not None and not self.tau_prox > 0:
            raise ValueError("tau_prox must be positive")
        radii = np.atleast_1d(np.asarray(self.step_radius, dtype=float))
        if radii.size == 0 or not np.all(radii > 0):
            raise ValueError("step_radius must be positive")
        self.step_radius = tuple(float(r) for r in radii)
        if not 0.5 < self.a_sigma < self.a_gamma <= 1.0:
            raise ValueError("need 0.5 < a_sigma < a_gamma <= 1")


@dataclass
class CdfSolution:
    x: np.ndarray
    probability: float
    n_iter: int = 0
    history: list = field(default_factory=list)
    start: str = "uniform"


def _log_multinomial(K: np.ndarray) -> np.ndarray:
    N = K.shape[1]
    lf = np.array([math.lgamma(v + 1) for v in range(N + 1)])
    return lf[N] - lf[K].sum(axis=1)


def _factors(x, t, K, cfg):
    p = block_probabilities(x, t, cfg)
    K = np.atleast_2d(np.asarray(K, dtype=np.int64))
    if K.shape[1] != cfg.N:
        raise ValueError(f"ballot vectors must have length N={cfg.N}")
    return p, K, np.exp(_log_multinomial(K))


def g_value_batch(x, t, K, cfg: SystemConfig) -> np.ndarray:
    """``g(x, t, k)`` for every row ``k`` of ``K``."""
    p, K, coef = _factors(x, t, K, cfg)
    return coef * np.prod(p[None, :] ** K, axis=1)


def g_value(x, t, k, cfg: SystemConfig) -> float:
    return float(g_value_batch(x, t, [k], cfg)[0])


def g_gradient_batch(x, t, K, cfg: SystemConfig) -> np.ndarray:
    """Gradient of ``g(x, t, k)`` in ``x`` for every row of ``K``, shape ``(len(K), N)``.

    Uses prefix and suffix products of the factors ``p_n^k_n`` so zero
    factors need no special casing.  At the support minimum of the density
    the one-sided derivative from above is used.
    """
    x = np.asarray(x, dtype=float)
    p, K, coef = _factors(x, t, K, cfg)
    N = cfg.N
    fac = p[None, :] ** K
    ones = np.ones((K.shape[0], 1))
    pre = np.cumprod(np.hstack([ones, fac[:, :-1]]), axis=1)
    suf = np.cumprod(np.hstack([ones, fac[:, :0:-1]]), axis=1)[:, ::-1]
    # d fac_n / d p_n = k_n p_n^(k_n - 1), zero when k_n = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        dfac = np.where(K > 0, K * p[None, :] ** np.maximum(K - 1, 0), 0.0)
    G = coef[:, None] * pre * suf * dfac
    # p_n = F_n - F_{n+1}, so d/dF_n collects G_n - G_{n-1}
    D = G.copy()
    D[:, 1:] -= G[:, :-1]
    S = prefix_loads(x)
    a = prefix_thresholds(x, t, cfg)
    q = np.zeros(N)
    fin = np.isfinite(a) & (S > 0)
    q[fin] = np.atleast_1d(cfg.dist.pdf(a[fin])) * a[fin] / S[fin]
    # dF_n/dx_j = -q_n (j+1) for j <= n
    acc = np.cumsum((D * q[None, :])[:, ::-1], axis=1)[:, ::-1]
    return -acc * np.arange(1, N + 1)[None, :]


def g_gradient(x, t, k, cfg: SystemConfig) -> np.ndarray:
    return g_gradient_batch(x, t, [k], cfg)[0]


def closed_form_large_t(cfg: SystemConfig) -> np.ndarray:
    """Harmonic allocation ``x_0 = L / H_N``, ``x_n = x_0 / (n + 1)``."""
    N = cfg.N
    x0 = cfg.L / harmonic(N)
    return x0 / np.arange(1, N + 1)


def verify_large_t_reduction(cfg: SystemConfig, rtol: float = 1e-12) -> bool:
    """The deterministic-time closed form at ``t_n = 1/(N-n+1)`` equals the harmonic allocation."""
    N = cfg.N
    t = 1.0 / (N - np.arange(1, N + 1) + 1.0)
    a = closed_form_from_times(t, cfg.L)
    b = closed_form_large_t(cfg)
    return bool(np.all(np.abs(a - b) <= rtol * np.abs(b)))


def _auto_tau(cfg, t, y, opts, rng, cnt, radius):
    K = ballot.sample_many(cfg.N, max(256, opts.batch), rng)
    g = cnt * cfg.L * g_gradient_batch(y * cfg.L, t, K, cfg).mean(axis=0)
    # only the component tangent to the simplex moves the iterate
    norm = float(np.linalg.norm(g - g.mean()))
    return max(norm, 1e-12) / (2.0 * radius)


def _ssca_run(cfg, t, opts, y0, rng, radius):
    N, L = cfg.N, cfg.L
    cnt = float(ballot.count(0, N))
    y = np.asarray(y0, dtype=float) / L
    h = np.zeros(N)
    tau = opts.tau_prox if opts.tau_prox is not None else _auto_tau(cfg, t, y, opts, rng, cnt, radius)
    best_p = completion_prob_exact(y * L, t, cfg)
    best_y = y.copy()
    history = [(0, best_p)]
    for i in range(1, opts.iterations + 1):
        sigma = i ** -opts.a_sigma
        gamma = i ** -opts.a_gamma
        K = ballot.sample_many(N, opts.batch, rng)
        # unbiased gradient of the probability in the normalized variable y = x / L
        grad = cnt * L * g_gradient_batch(y * L, t, K, cfg).mean(axis=0)
        h = (1.0 - sigma) * h + sigma * grad
        yhat = ssca_subproblem(y, h, tau, 1.0)
        y = gamma * yhat + (1.0 - gamma) * y
        check_allocation(y * L, L, N=N)
        if i % opts.eval_every == 0 or i == opts.iterations:
            val = completion_prob_exact(y * L, t, cfg)
            if val > best_p:
                best_p, best_y = val, y.copy()
            history.append((i, best_p))
    return best_y * L, best_p, history


def _median_uniform_runtime(cfg, seed, trials=1000):
    T = cfg.dist.sample(check_rng(seed), (trials, cfg.N))
    return float(np.median(runtime_of_x_batch(np.full(cfg.N, cfg.L / cfg.N), T, cfg)))


def solve_completion_probability(cfg: SystemConfig, t: float,
                                 opts: SscaSolverOptions | None = None) -> CdfSolution:
    """Stochastic successive convex approximation from the uniform allocation.

    Without an explicit ``tau_prox`` one run is made per step radius.
    When ``t`` exceeds ten times the median runtime of the uniform
    allocation a second run starts from the harmonic allocation.  The exact
    probability is checked every ``eval_every`` iterations and the best
    checked iterate of either run is returned.
    """
    opts = opts or SscaSolverOptions()
    if not t > 0:
        raise ValueError("threshold t must be positive")
    N, L = cfg.N, cfg.L
    if N == 1:
        x = np.array([float(L)])
        return CdfSolution(x, completion_prob_exact(x, t, cfg))
    starts = [("uniform", np.full(N, L / N))]
    if opts.warm_start and t > 10 * _median_uniform_runtime(cfg, opts.seed + 1):
        starts.append(("closed-lgt", closed_form_large_t(cfg)))
    radii = opts.step_radius if opts.tau_prox is None else (None,)
    best = None
    for j, (name, x0) in enumerate(starts):
        for r, radius in enumerate(radii):
            rng = check_rng(np.random.SeedSequence([opts.seed, j, r]))
            x, p, hist = _ssca_run(cfg, t, opts, x0, rng, radius)
            key = _rank_key(x, p, t, cfg)
            if best is None or key > best_key:
                best, best_key = CdfSolution(x, p, opts.iterations, hist, name), key
    return best


def _rank_key(x, p, t, cfg):
    # once the probability rounds to 1 the leading failure term still separates candidates
    if isinstance(cfg.dist, ShiftedExponential) and np.any(x[1:] > 0):
        return (p, -asymptotic_failure(x, t, cfg))
    return (p, 0.0)


class CompletionProbabilityOptimizer(BaseEstimator):
    """Estimator wrapper: ``fit(config)`` maximizes ``Pr[runtime <= threshold]``.

    Parameters
    ----------
    threshold : float
    method : {"ssca", "closed-lgt"}
    iterations, tau_prox, a_sigma, a_gamma, batch, step_radius, eval_every, warm_start
        Forwarded to :class:`SscaSolverOptions`.
    random_state : int
    """

    def __init__(self, threshold=1.0, method="ssca", iterations=3000, tau_prox=None, a_sigma=0.55,
                 a_gamma=0.7, batch=256, step_radius=(0.01, 0.02, 0.05), eval_every=100, warm_start=True,
                 random_state=0):
        self.threshold = threshold
        self.method = method
        self.iterations = iterations
        self.tau_prox = tau_prox
        self.a_sigma = a_sigma
        self.a_gamma = a_gamma
        self.batch = batch
        self.step_radius = step_radius
        self.eval_every = eval_every
        self.warm_start = warm_start
        self.random_state = random_state

    def fit(self, config: SystemConfig, y=None):
        t = float(self.threshold)
        self.n_iter_ = 0
        if self.method == "ssca":
            opts = SscaSolverOptions(iterations=self.iterations, tau_prox=self.tau_prox,
                                     a_sigma=self.a_sigma, a_gamma=self.a_gamma, batch=self.batch,
                                     step_radius=self.step_radius,
                                     eval_every=self.eval_every, seed=int(self.random_state),
                                     warm_start=self.warm_start)
            sol = solve_completion_probability(config, t, opts)
            self.allocation_ = sol.x
            self.n_iter_ = sol.n_iter
        elif self.method == "closed-lgt":
            self.allocation_ = closed_form_large_t(config)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.probability_ = completion_prob_exact(self.allocation_, t, config)
        self.allocation_int_ = round_allocation(
            self.allocation_, batch_objective(config, "completion-probability", t))
        self.probability_int_ = completion_prob_exact(self.allocation_int_, t, config)
        self.config_ = config
        return self

    def predict(self, T, *, integer=False):
        """1 where the fitted allocation finishes by the threshold under cycle times ``T``, else 0."""
        if not hasattr(self, "allocation_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("call fit(config) first")
        T = check_runtime_matrix(T, self.config_.N)
        x = self.allocation_int_ if integer else self.allocation_
        return (runtime_of_x_batch(x, T, self.config_) <= self.threshold).astype(int)

    def score(self, T, y=None):
        """Empirical completion frequency on ``T``."""
        return float(np.mean(self.predict(T)))
