"""Overall runtime, completion probability and their asymptotics.

Two parameterizations of the same scheme are supported: the per-coordinate
coding vector ``s`` (``s_l`` = stragglers tolerated for coordinate ``l``)
and the block allocation ``x`` (``x_n`` = number of coordinates tolerating
``n`` stragglers).  For nondecreasing ``s`` they give identical runtimes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import ballot
from .straggler import ShiftedExponential, StragglerDistribution
from .validation import check_allocation, check_coding_vector, check_rng, check_runtime_matrix

__all__ = [
    "SystemConfig",
    "SchemeEvaluation",
    "s_to_x",
    "x_to_s",
    "runtime_of_s",
    "runtime_of_x",
    "runtime_of_x_batch",
    "sort_descending",
    "prefix_loads",
    "prefix_thresholds",
    "block_probabilities",
    "runtime_sample_chunks",
    "expected_runtime_mc",
    "completion_prob_exact",
    "completion_prob_mc",
    "evaluate_many",
    "asymptotic_failure",
    "failure_upper_bound",
]

MC_CHUNK = 200_000


@dataclass(frozen=True)
class SystemConfig:
    """``N`` workers, ``L`` coordinates, ``M`` samples, ``b`` cycles per partial derivative."""

    N: int
    L: int
    M: float
    b: float
    dist: StragglerDistribution

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L}")
        if not self.M > 0 or not self.b > 0:
            raise ValueError("M and b must be positive")
        if self.N > self.L:
            warnings.warn(f"N={self.N} exceeds L={self.L}; some blocks must stay empty", stacklevel=2)

    @property
    def scale(self) -> float:
        """``(M/N) * b``, the per-unit-load time multiplier."""
        return self.M / self.N * self.b

    def replace(self, **changes) -> "SystemConfig":
        fields = dict(N=self.N, L=self.L, M=self.M, b=self.b, dist=self.dist)
        fields.update(changes)
        return SystemConfig(**fields)


@dataclass(frozen=True)
class SchemeEvaluation:
    metric: str
    estimate: float
    stderr: float
    trials: int
    seed: int | None

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")


def s_to_x(s, N: int) -> np.ndarray:
    """Histogram of the coding vector: ``x_n = #{l : s_l = n}``."""
    s = check_coding_vector(s, N)
    return np.bincount(s, minlength=N).astype(np.int64)


def x_to_s(x) -> np.ndarray:
    """Nondecreasing coding vector with ``x_n`` entries equal to ``n``."""
    x = np.asarray(x)
    if not np.all(np.equal(np.mod(x, 1), 0)) or np.any(x < 0):
        raise ValueError("x_to_s needs a nonnegative integer allocation")
    x = x.astype(np.int64)
    return np.repeat(np.arange(x.size), x)


def runtime_of_s(s, T, cfg: SystemConfig):
    """Time until the master recovers all ``L`` partial derivatives.

    Works on any numeric type (``Fraction`` inputs give exact results).
    """
    N = cfg.N
    if len(T) != N:
        raise ValueError(f"runtime vector has length {len(T)}, expected N={N}")
    Ts = sorted(T)
    best = None
    load = 0
    for sl in s:
        sl = int(sl)
        if not 0 <= sl <= N - 1:
            raise ValueError(f"coding parameter {sl} outside 0..{N - 1}")
        load += sl + 1
        v = Ts[N - sl - 1] * load
        if best is None or v > best:
            best = v
    return _scale_like(cfg, best) * best


def _scale_like(cfg, value):
    if isinstance(value, (Fraction, int)):
        return Fraction(cfg.M) / cfg.N * Fraction(cfg.b)
    return cfg.scale


def prefix_loads(x) -> np.ndarray:
    """``S_n = sum_{i<=n} (i+1) x_i``."""
    x = np.asarray(x, dtype=float)
    return np.cumsum((np.arange(x.size) + 1) * x)


def runtime_of_x(x, T, cfg: SystemConfig):
    """Block form: ``(M/N) b max_n T_(N-n) S_n``; ``x`` may be continuous."""
    N = cfg.N
    if len(x) != N or len(T) != N:
        raise ValueError("x and T must both have length N")
    if any(isinstance(v, Fraction) for v in list(x) + list(T)):
        Ts = sorted(T)
        load, best = 0, None
        for n, xn in enumerate(x):
            load += (n + 1) * xn
            v = Ts[N - n - 1] * load
            best = v if best is None or v > best else best
        return _scale_like(cfg, best) * best
    return float(runtime_of_x_batch(x, np.asarray(T, dtype=float)[None, :], cfg)[0])


def runtime_of_x_batch(x, T, cfg: SystemConfig) -> np.ndarray:
    """Runtimes for every row of a ``(n_samples, N)`` matrix of cycle times."""
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[None, :]
    return _runtime_from_sorted(x, sort_descending(T), cfg)


def sort_descending(T) -> np.ndarray:
    """Rows of ``T`` sorted so column ``n`` holds ``T_(N-n)``."""
    return np.sort(np.asarray(T, dtype=float), axis=1)[:, ::-1]


def _runtime_from_sorted(x, Ts, cfg) -> np.ndarray:
    S = prefix_loads(x)
    with np.errstate(invalid="ignore"):
        prod = Ts * S
    # 0 * inf (empty prefix, infinite straggler) contributes nothing
    prod = np.where(S == 0, 0.0, prod)
    return cfg.scale * prod.max(axis=1)


def runtime_sample_chunks(cfg: SystemConfig, trials: int, seed, chunk: int = MC_CHUNK):
    """Yield ``(m, N)`` blocks of i.i.d. cycle-time vectors, ``trials`` rows in total.

    Identical ``seed`` gives identical rows regardless of consumer, which is
    how schemes share common random numbers.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = check_rng(seed)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        yield cfg.dist.sample(rng, (m, cfg.N))
        done += m


def _mean_stderr(total, total_sq, n):
    mean = total / n
    if not math.isfinite(mean):
        return mean, math.inf if n > 1 else 0.0
    var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, math.sqrt(var / n)


def evaluate_many(xs, cfg: SystemConfig, *, metric: str = "expected-runtime", t=None,
                  trials: int = 10_000, seed=0) -> list[SchemeEvaluation]:
    """Monte Carlo metrics for several allocations on common random numbers."""
    if metric not in ("expected-runtime", "completion-probability"):
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "completion-probability" and t is None:
        raise ValueError("completion probability needs a threshold t")
    xs = [np.asarray(x, dtype=float) for x in xs]
    for x in xs:
        check_allocation(x, cfg.L, N=cfg.N)
    tot = np.zeros(len(xs))
    tot_sq = np.zeros(len(xs))
    for T in runtime_sample_chunks(cfg, trials, seed):
        Ts = sort_descending(T)
        for j, x in enumerate(xs):
            tau = _runtime_from_sorted(x, Ts, cfg)
            vals = tau if metric == "expected-runtime" else (tau <= t).astype(float)
            tot[j] += vals.sum()
            tot_sq[j] += np.square(vals).sum()
    out = []
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    for j in range(len(xs)):
        mean, se = _mean_stderr(tot[j], tot_sq[j], trials)
        if metric == "completion-probability":
            se = math.sqrt(mean * (1 - mean) / trials)
        out.append(SchemeEvaluation(metric, float(mean), float(se), trials, seed_val))
    return out


def expected_runtime_mc(x, cfg: SystemConfig, trials: int = 10_000, seed=0) -> SchemeEvaluation:
    """Sample mean of the runtime with its standard error."""
    return evaluate_many([x], cfg, metric="expected-runtime", trials=trials, seed=seed)[0]


def completion_prob_mc(x, t, cfg: SystemConfig, trials: int = 10_000, seed=0,
                       *, coding_vector: bool = False) -> SchemeEvaluation:
    """Fraction of sampled cycle-time vectors finishing by ``t``.

    Pass ``coding_vector=True`` to give ``s`` instead of ``x``.
    """
    if coding_vector:
        s = check_coding_vector(x, cfg.N)
        if np.any(np.diff(s) < 0):
            return _completion_prob_mc_s(s, t, cfg, trials, seed)
        x = s_to_x(s, cfg.N)
    return evaluate_many([x], cfg, metric="completion-probability", t=t,
                         trials=trials, seed=seed)[0]


def _completion_prob_mc_s(s, t, cfg, trials, seed):
    # unsorted s: evaluate the per-coordinate definition directly
    load = np.cumsum(s + 1)
    hits = 0
    for T in runtime_sample_chunks(cfg, trials, seed):
        Ts = np.sort(T, axis=1)
        tau = cfg.scale * (Ts[:, cfg.N - s - 1] * load).max(axis=1)
        hits += int((tau <= t).sum())
    p = hits / trials
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    return SchemeEvaluation("completion-probability", p, math.sqrt(p * (1 - p) / trials), trials, seed_val)


def prefix_thresholds(x, t, cfg: SystemConfig) -> np.ndarray:
    """``a_n = t / ((M/N) b S_n)``: worker ``n``-th-slowest must beat this cycle time.

    An empty prefix (``S_n = 0``) gives ``+inf``.
    """
    S = prefix_loads(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = t / (cfg.scale * S)
    return np.where(S <= 0, np.inf, a)


def block_probabilities(x, t, cfg: SystemConfig) -> np.ndarray:
    """Cell probabilities ``p_n`` of the multinomial behind the completion probability.

    ``p_n = F(a_n) - F(a_{n+1})`` for ``n < N-1`` and ``p_{N-1} = F(a_{N-1})``.
    """
    a = prefix_thresholds(x, t, cfg)
    F = np.atleast_1d(cfg.dist.cdf(a))
    G = np.atleast_1d(cfg.dist.sf(a))
    p = np.empty_like(F)
    # differencing whichever tail is smaller keeps the digits
    p[:-1] = np.where(F[1:] > 0.5, G[1:] - G[:-1], F[:-1] - F[1:])
    p[-1] = F[-1]
    return np.maximum(p, 0.0)


def _exact_dp(p: np.ndarray, N: int) -> float:
    # sum over K(N) of N! prod p_n^k_n / k_n!, by prefix-count dynamic programming
    k = np.arange(N + 1)
    logfact = np.array([math.lgamma(v + 1) for v in k])
    D = np.array([1.0])
    for n in range(N):
        with np.errstate(divide="ignore"):
            w = np.exp(k * np.log(p[n]) - logfact) if p[n] > 0 else (k == 0).astype(float)
        D = np.convolve(D, w)[: n + 2]
    return float(math.exp(logfact[N]) * D[N]) if D.size > N else 0.0


def _exact_enumerate(p: np.ndarray, N: int) -> tuple[float, int]:
    K = ballot.enumerate_array(N)
    logfact = np.array([math.lgamma(v + 1) for v in range(N + 1)])
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    terms_log = logfact[N] - logfact[K].sum(axis=1)
    zero = (K > 0) & (p[None, :] <= 0)
    with np.errstate(invalid="ignore"):
        contrib = np.where(K > 0, K * logp[None, :], 0.0)
    terms_log = terms_log + contrib.sum(axis=1)
    terms = np.where(zero.any(axis=1), 0.0, np.exp(terms_log))
    return float(math.fsum(terms)), len(K)


def completion_prob_exact(x, t, cfg: SystemConfig, *, method: str = "dp", return_count: bool = False):
    """Exact ``Pr[runtime <= t]`` for allocation ``x``.

    ``method="enumerate"`` sums the closed-form term over every ballot
    vector (limited to ``|K(N)| <= 1e7``); ``method="dp"`` folds the same
    sum into an O(N^3) recursion over prefix counts and works for any ``N``.
    """
    N = cfg.N
    x = check_allocation(x, cfg.L, N=N)
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    p = block_probabilities(x, t, cfg)
    if method == "dp":
        val, n_terms = _exact_dp(p, N), ballot.count(0, N)
    elif method == "enumerate":
        val, n_terms = _exact_enumerate(p, N)
    else:
        raise ValueError(f"unknown method {method!r}")
    val = min(max(val, 0.0), 1.0)
    return (val, n_terms) if return_count else val


def _require_shifted_exp(cfg):
    if not isinstance(cfg.dist, ShiftedExponential):
        raise TypeError("the large-threshold asymptotics assume a shifted-exponential distribution")


def asymptotic_failure(x, t, cfg: SystemConfig) -> float:
    """Leading-order ``1 - P(x, t)`` as ``t -> inf`` for shifted-exponential cycle times.

    The failure event is dominated by the prefix ``n`` (among blocks with
    ``x_n > 0``) minimizing ``(n+1)/S_n``: at least ``n+1`` workers must be
    slower than ``a_n``, which has probability ``~ C(N, n+1) exp(-(n+1) mu (a_n - t0))``.
    """
    _require_shifted_exp(cfg)
    x = check_allocation(x, cfg.L, N=cfg.N)
    mu, t0, N = cfg.dist.mu, cfg.dist.t0, cfg.N
    S = prefix_loads(x)
    active = np.flatnonzero(x > 0)
    if active.size == 0:
        raise ValueError("allocation has no nonzero block")
    ratios = (active + 1) / S[active]
    rmin = ratios.min()
    tied = active[np.isclose(ratios, rmin, rtol=1e-12, atol=0.0)]
    coef = math.fsum(math.comb(N, int(n) + 1) * math.exp(mu * t0 * (n + 1)) for n in tied)
    return coef * math.exp(-mu * N * t / (cfg.M * cfg.b) * rmin)


def failure_upper_bound(x, t, cfg: SystemConfig) -> float:
    """Upper bound on :func:`asymptotic_failure` summing the coefficient over every block."""
    _require_shifted_exp(cfg)
    x = check_allocation(x, cfg.L, N=cfg.N)
    mu, t0, N = cfg.dist.mu, cfg.dist.t0, cfg.N
    S = prefix_loads(x)
    n = np.arange(N)
    pos = S > 0
    rmin = ((n[pos] + 1) / S[pos]).min()
    coef = math.fsum(math.comb(N, k + 1) * math.exp(mu * t0 * (k + 1)) for k in range(N))
    return coef * math.exp(-mu * N * t / (cfg.M * cfg.b) * rmin)
