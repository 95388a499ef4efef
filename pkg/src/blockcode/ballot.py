"""Counting, enumeration and uniform sampling of ballot vectors.

``K(N)`` is the set of length-``N`` nonnegative integer vectors ``k`` with
``k_0 + ... + k_{n-1} <= n`` for ``n = 1..N`` and total ``N``.  The shifted
family ``K_m(N)`` relaxes every prefix bound by ``m`` and raises the total to
``N + m``; fixing a feasible prefix of a vector in ``K(N)`` leaves exactly a
``K_m`` set of completions, which is what makes sequential sampling work.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from .validation import check_rng

__all__ = [
    "ENUMERATION_LIMIT",
    "count",
    "enumerate_ballots",
    "enumerate_array",
    "conditional_pmf",
    "sample",
    "sample_many",
    "is_ballot",
]

ENUMERATION_LIMIT = 10**7


@lru_cache(maxsize=None)
def count(m: int, N: int) -> int:
    """``|K_m(N)| = (m+2)/(N+m+1) * C(2N+m-1, N-1)``, exact.

    ``|K_m(0)|`` is 1 for ``m = 0`` (the empty vector) and 0 otherwise.
    """
    if m < 0 or N < 0:
        return 0
    if N == 0:
        return 1 if m == 0 else 0
    num = (m + 2) * comb(2 * N + m - 1, N - 1)
    q, r = divmod(num, N + m + 1)
    assert r == 0
    return q


def is_ballot(k) -> bool:
    k = [int(v) for v in k]
    N = len(k)
    if N == 0 or any(v < 0 for v in k) or sum(k) != N:
        return False
    run = 0
    for n in range(1, N + 1):
        run += k[n - 1]
        if run > n:
            return False
    return True


def _guard(N: int) -> None:
    if count(0, N) > ENUMERATION_LIMIT:
        raise ValueError(
            f"|K({N})| = {count(0, N)} exceeds the enumeration limit {ENUMERATION_LIMIT}; "
            "use the dynamic-programming or Monte Carlo evaluators instead"
        )


def enumerate_ballots(N: int):
    """Yield every vector of ``K(N)`` once, in lexicographic order."""
    if N < 1:
        raise ValueError("N must be >= 1")
    _guard(N)
    prefix = [0] * N

    def rec(n, used):
        if n == N - 1:
            prefix[n] = N - used
            yield tuple(prefix)
            return
        # position n may take 0..n+1-used
        for v in range(0, n + 2 - used):
            prefix[n] = v
            yield from rec(n + 1, used + v)

    yield from rec(0, 0)


@lru_cache(maxsize=32)
def _enumerate_cached(N: int) -> np.ndarray:
    out = np.array(list(enumerate_ballots(N)), dtype=np.int64)
    out.setflags(write=False)
    return out


def enumerate_array(N: int) -> np.ndarray:
    """All of ``K(N)`` as a read-only ``(|K(N)|, N)`` array (cached)."""
    return _enumerate_cached(N)


def _prefix_state(prefix, N: int) -> int:
    n = len(prefix)
    if n >= N:
        raise ValueError(f"prefix of length {n} leaves nothing to sample for N={N}")
    used = 0
    for j, v in enumerate(prefix, start=1):
        if v < 0:
            raise ValueError("prefix entries must be nonnegative")
        used += int(v)
        if used > j:
            raise ValueError(f"infeasible prefix {tuple(prefix)}: partial sum {used} > {j}")
    return n - used


def conditional_pmf(prefix, N: int, *, exact: bool = False):
    """PMF of the next coordinate given a feasible prefix, under the uniform law.

    Support is ``0..n+1-sum(prefix)`` with ``n = len(prefix)``; the value
    ``v`` has probability ``|K_{m+1-v}(N-n-1)| / |K_m(N-n)|`` where
    ``m = n - sum(prefix)``.  Returns Fractions when ``exact`` is set.
    """
    n = len(prefix)
    m = _prefix_state(prefix, N)
    denom = count(m, N - n)
    nums = [count(m + 1 - v, N - n - 1) for v in range(m + 2)]
    if exact:
        return [Fraction(c, denom) for c in nums]
    return np.array([_ratio(c, denom) for c in nums])


def _ratio(a: int, b: int) -> float:
    # Fraction reduces by the gcd first, so huge counts convert cleanly
    return float(Fraction(a, b))


@lru_cache(maxsize=256)
def _cdf_table(N: int) -> tuple:
    """Per position ``n``: array ``[m, v]`` of cumulative conditional probabilities."""
    tables = []
    for n in range(N):
        rows = np.zeros((n + 1, n + 2))
        for m in range(n + 1):
            denom = count(m, N - n)
            probs = [_ratio(count(m + 1 - v, N - n - 1), denom) for v in range(m + 2)]
            rows[m, : m + 2] = np.cumsum(probs)
            rows[m, m + 1 :] = 1.0
        tables.append(rows)
    return tuple(tables)


def sample_many(N: int, size: int, rng) -> np.ndarray:
    """Draw ``size`` i.i.d. uniform elements of ``K(N)`` as a ``(size, N)`` array.

    Coordinates are drawn one after another from their conditional PMFs
    (one uniform per coordinate); the last one is forced.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = check_rng(rng)
    tables = _cdf_table(N)
    out = np.zeros((size, N), dtype=np.int64)
    used = np.zeros(size, dtype=np.int64)
    for n in range(N - 1):
        m = n - used
        u = rng.random(size)
        cdf = tables[n][m]
        v = (u[:, None] >= cdf).sum(axis=1)
        v = np.minimum(v, m + 1)
        out[:, n] = v
        used += v
    out[:, N - 1] = N - used
    return out


def sample(N: int, rng) -> tuple:
    """One uniform draw from ``K(N)``; O(N^2) time, O(N) space."""
    return tuple(int(v) for v in sample_many(N, 1, rng)[0])
