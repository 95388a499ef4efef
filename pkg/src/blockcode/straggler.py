"""Worker cycle-time distributions and their order statistics.

Each worker's time per CPU cycle is an i.i.d. draw from one of the
distributions below.  The optimizers only ever need three things from a
distribution: its CDF/density (completion probability), a sampler (Monte
Carlo) and the first moments of the order statistics ``T_(n)`` and
``1/T_(n)`` (closed-form approximations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .validation import check_rng

__all__ = [
    "ShiftedExponential",
    "Bernoulli",
    "Empirical",
    "harmonic",
    "scaled_exponential_integral",
    "sample_runtimes",
    "expected_order_statistic",
    "expected_inverse_order_statistic",
    "order_statistic_means",
    "inverse_order_statistic_means",
]

_EULER_GAMMA = 0.57721566490153286061
_MC_TRIALS = 10**6


class StragglerDistribution:
    """Base class; subclasses are frozen dataclasses."""

    kind = "abstract"
    continuous = False

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        """``1 - cdf``; subclasses override it where the tail can be computed without cancellation."""
        out = 1.0 - np.asarray(self.cdf(x), dtype=float)
        return out if out.ndim else float(out)

    def pdf(self, x):
        raise NotImplementedError

    def sample(self, rng, size):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    @property
    def support_min(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ShiftedExponential(StragglerDistribution):
    """``F(t) = 1 - exp(-mu (t - t0))`` for ``t >= t0``."""

    mu: float
    t0: float = 0.0
    kind = "shifted-exponential"
    continuous = True

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be positive and finite, got {self.mu}")
        if not (self.t0 >= 0 and math.isfinite(self.t0)):
            raise ValueError(f"t0 must be finite and >= 0, got {self.t0}")

    @property
    def support_min(self) -> float:
        return self.t0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            out = -np.expm1(-self.mu * (x - self.t0))
        out = np.where(x >= self.t0, out, 0.0)
        out = np.where(np.isposinf(x), 1.0, out)
        return out if out.ndim else float(out)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            out = np.exp(-self.mu * np.maximum(x - self.t0, 0.0))
        return out if out.ndim else float(out)

    def pdf(self, x):
        # one-sided (from above) at the kink x == t0
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            out = self.mu * np.exp(-self.mu * (x - self.t0))
        out = np.where(x >= self.t0, out, 0.0)
        out = np.where(np.isposinf(x), 0.0, out)
        return out if out.ndim else float(out)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        out = self.t0 - np.log1p(-u) / self.mu
        return out if out.ndim else float(out)

    def sample(self, rng, size):
        rng = check_rng(rng)
        return self.ppf(rng.random(size))

    def mean(self) -> float:
        return 1.0 / self.mu + self.t0


@dataclass(frozen=True)
class Bernoulli(StragglerDistribution):
    """Two-point model: ``t_slow`` with probability ``p_straggle``, else ``t_fast``.

    ``t_slow = inf`` models full stragglers.
    """

    p_straggle: float
    t_fast: float
    t_slow: float
    kind = "bernoulli"

    def __post_init__(self):
        if not 0.0 <= self.p_straggle <= 1.0:
            raise ValueError("p_straggle must lie in [0, 1]")
        if not (0 < self.t_fast <= self.t_slow):
            raise ValueError("need 0 < t_fast <= t_slow")

    @property
    def support_min(self) -> float:
        return self.t_fast

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= self.t_fast, 1.0 - self.p_straggle, 0.0)
        out = np.where(x >= self.t_slow, 1.0, out)
        out = np.where(np.isposinf(x), 1.0, out)
        return out if out.ndim else float(out)

    def pdf(self, x):
        # derivative almost everywhere
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        return out if out.ndim else 0.0

    def sample(self, rng, size):
        rng = check_rng(rng)
        slow = rng.random(size) < self.p_straggle
        return np.where(slow, self.t_slow, self.t_fast).astype(float)

    def mean(self) -> float:
        if self.p_straggle == 0:
            return float(self.t_fast)
        return self.p_straggle * self.t_slow + (1 - self.p_straggle) * self.t_fast


@dataclass(frozen=True)
class Empirical(StragglerDistribution):
    """Resamples uniformly from a fixed list of observed cycle times."""

    samples: tuple = field()
    kind = "empirical"

    def __post_init__(self):
        values = tuple(sorted(float(v) for v in self.samples))
        if not values:
            raise ValueError("empirical distribution needs at least one sample")
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise ValueError("empirical samples must be finite and positive")
        object.__setattr__(self, "samples", values)

    @property
    def support_min(self) -> float:
        return self.samples[0]

    def cdf(self, x):
        arr = np.asarray(self.samples)
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(arr, x, side="right") / arr.size
        return out if np.ndim(out) else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        return out if out.ndim else 0.0

    def sample(self, rng, size):
        rng = check_rng(rng)
        arr = np.asarray(self.samples)
        return arr[rng.integers(0, arr.size, size=size)]

    def mean(self) -> float:
        return float(np.mean(self.samples))


def harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


def sample_runtimes(dist: StragglerDistribution, N: int, rng, trials: int | None = None):
    """Draw one runtime vector of length ``N`` (or a ``(trials, N)`` matrix)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    shape = N if trials is None else (trials, N)
    return dist.sample(rng, shape)


def scaled_exponential_integral(y: float) -> float:
    """Return ``exp(y) * E1(y)`` for ``y > 0`` without forming ``exp(y)``.

    Power series below 1, modified Lentz continued fraction above.
    """
    if not y > 0:
        raise ValueError(f"scaled_exponential_integral needs y > 0, got {y}")
    y = float(y)
    if y < 1.0:
        # E1(y) = -gamma - ln y - sum_{k>=1} (-y)^k / (k k!)
        total = 0.0
        term = 1.0
        k = 1
        while True:
            term *= -y / k
            inc = term / k
            total += inc
            if abs(inc) < 1e-17 * max(abs(total), 1e-300):
                break
            k += 1
        return math.exp(y) * (-_EULER_GAMMA - math.log(y) - total)
    # e^y E1(y) = 1/(y+1- 1/(y+3- 4/(y+5- ...)))
    tiny = 1e-300
    b = y + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def _check_rank(n: int, N: int) -> None:
    if N < 1 or not 1 <= n <= N:
        raise ValueError(f"order-statistic rank must satisfy 1 <= n <= N, got n={n}, N={N}")


def _mc_order_moments(dist, N, trials, seed, inverse):
    rng = check_rng(seed)
    chunk = max(1, 2_000_000 // N)
    total = np.zeros(N)
    total_sq = np.zeros(N)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        T = np.sort(dist.sample(rng, (m, N)), axis=1)
        vals = 1.0 / T if inverse else T
        total += vals.sum(axis=0)
        total_sq += np.square(vals).sum(axis=0)
        done += m
    mean = total / trials
    var = np.maximum(total_sq / trials - mean**2, 0.0)
    return mean, np.sqrt(var / trials)


def order_statistic_means(dist, N: int, *, trials: int = _MC_TRIALS, seed=0) -> np.ndarray:
    """Vector ``(E[T_(1)], ..., E[T_(N)])``."""
    if isinstance(dist, ShiftedExponential):
        H = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, N + 1))])
        n = np.arange(1, N + 1)
        return (H[N] - H[N - n]) / dist.mu + dist.t0
    if N == 1:
        return np.array([dist.mean()])
    return _mc_order_moments(dist, N, trials, seed, inverse=False)[0]


def expected_order_statistic(dist, n: int, N: int, *, trials: int = _MC_TRIALS, seed=0) -> float:
    """``E[T_(n)]``: Renyi representation for shifted exponentials, else Monte Carlo."""
    _check_rank(n, N)
    return float(order_statistic_means(dist, N, trials=trials, seed=seed)[n - 1])


@lru_cache(maxsize=4096)
def _inverse_moment_float(mu: float, t0: float, n: int, N: int):
    """Alternating-sum evaluation in double precision.

    Returns ``(E[1/T_(n)], relative error estimate)``.
    """
    coef = mu * (N + 1 - n) * math.comb(N, n - 1)
    terms = []
    for i in range(n):
        y = mu * t0 * (N - n + i + 1)
        terms.append((-1) ** i * math.comb(n - 1, i) * scaled_exponential_integral(y))
    s = math.fsum(terms)
    mag = math.fsum(abs(v) for v in terms)
    # kernel is accurate to a few ulp per term; cancellation amplifies it
    rel_err = 8 * np.finfo(float).eps * mag / abs(s) if s > 0 else math.inf
    return coef * s, rel_err


@lru_cache(maxsize=4096)
def _inverse_moment_mp(mu: float, t0: float, n: int, N: int, digits: int) -> float:
    with mpmath.workdps(digits):
        mu_m, t0_m = mpmath.mpf(mu), mpmath.mpf(t0)
        s = mpmath.mpf(0)
        for i in range(n):
            y = mu_m * t0_m * (N - n + i + 1)
            s += (-1) ** i * math.comb(n - 1, i) * mpmath.exp(y) * mpmath.e1(y)
        return float(mu_m * (N + 1 - n) * math.comb(N, n - 1) * s)


def _inverse_moment_exact(dist: ShiftedExponential, n: int, N: int) -> float:
    if dist.t0 <= 0:
        raise ValueError(
            "E[1/T_(n)] diverges for a shifted exponential with t0 = 0; "
            "use method='mc' for a Monte Carlo estimate"
        )
    value, rel_err = _inverse_moment_float(dist.mu, dist.t0, n, N)
    if rel_err <= 1e-6:
        return value
    if math.isfinite(rel_err):
        lost = math.log10(max(rel_err / np.finfo(float).eps, 1.0))
    else:
        # every digit cancelled; the binomial weights sum to 2^(n-1)
        lost = 16 + (n - 1) * math.log10(2)
    return _inverse_moment_mp(dist.mu, dist.t0, n, N, int(30 + lost))


def inverse_order_statistic_means(
    dist, N: int, *, method: str = "auto", trials: int = _MC_TRIALS, seed=0
) -> np.ndarray:
    """Vector ``(E[1/T_(1)], ..., E[1/T_(N)])``."""
    if method not in ("auto", "formula", "mc"):
        raise ValueError(f"unknown method {method!r}")
    use_formula = isinstance(dist, ShiftedExponential) and method != "mc"
    if method == "formula" and not isinstance(dist, ShiftedExponential):
        raise ValueError("closed form only exists for ShiftedExponential")
    if use_formula:
        return np.array([_inverse_moment_exact(dist, n, N) for n in range(1, N + 1)])
    return _mc_order_moments(dist, N, trials, seed, inverse=True)[0]


def expected_inverse_order_statistic(
    dist, n: int, N: int, *, method: str = "auto", trials: int = _MC_TRIALS, seed=0
) -> float:
    """``t'_n = 1 / E[1/T_(n)]``, the harmonic-mean analogue of ``E[T_(n)]``."""
    _check_rank(n, N)
    if method != "mc" and isinstance(dist, ShiftedExponential):
        return 1.0 / _inverse_moment_exact(dist, n, N)
    inv = inverse_order_statistic_means(dist, N, method=method, trials=trials, seed=seed)
    return float(1.0 / inv[n - 1])
