"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

__all__ = [
    "InfeasibleAllocationError",
    "check_rng",
    "check_allocation",
    "check_coding_vector",
    "check_runtime_matrix",
]


class InfeasibleAllocationError(ValueError):
    """Allocation violates nonnegativity or does not sum to ``L``."""


def check_rng(seed):
    """Turn ``None``, an int or a Generator into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def check_allocation(x, L, *, integer: bool = False, N: int | None = None) -> np.ndarray:
    """Validate a block allocation ``x`` (length ``N``, nonnegative, sums to ``L``).

    Integer allocations must sum to ``L`` exactly; continuous ones to
    within ``1e-9 * L``.
    """
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.size == 0:
        raise InfeasibleAllocationError("allocation must be a nonempty 1-d vector")
    if N is not None and arr.size != N:
        raise InfeasibleAllocationError(f"allocation has length {arr.size}, expected N={N}")
    if integer:
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise InfeasibleAllocationError("integer allocation has fractional entries")
        arr = arr.astype(np.int64)
        if np.any(arr < 0):
            raise InfeasibleAllocationError("allocation has negative entries")
        if int(arr.sum()) != int(L):
            raise InfeasibleAllocationError(f"allocation sums to {int(arr.sum())}, expected L={L}")
        return arr
    arr = arr.astype(float)
    if not np.all(np.isfinite(arr)):
        raise InfeasibleAllocationError("allocation has non-finite entries")
    if np.any(arr < -1e-12 * max(L, 1)):
        raise InfeasibleAllocationError("allocation has negative entries")
    if abs(arr.sum() - L) > 1e-9 * max(L, 1):
        raise InfeasibleAllocationError(f"allocation sums to {arr.sum()}, expected L={L}")
    return np.maximum(arr, 0.0)


def check_coding_vector(s, N: int) -> np.ndarray:
    arr = np.asarray(s)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coding vector must be a nonempty 1-d vector")
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError("coding parameters must be integers")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() > N - 1:
        raise ValueError(f"coding parameters must lie in 0..{N - 1}")
    return arr


def check_runtime_matrix(T, N: int) -> np.ndarray:
    """Return ``T`` as a float ``(n_samples, N)`` array."""
    arr = np.asarray(T, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != N:
        raise ValueError(f"runtime samples must have shape (n_samples, {N}), got {arr.shape}")
    if np.any(np.isnan(arr)) or np.any(arr <= 0):
        raise ValueError("runtime samples must be positive")
    return arr
