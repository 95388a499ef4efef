"""Euclidean projection onto the scaled simplex ``{x >= 0, sum x = L}``."""

from __future__ import annotations

import numpy as np

__all__ = ["project_to_simplex_scaled", "water_level", "ssca_subproblem"]


def water_level(xhat, L: float) -> float:
    """Root ``lam`` of ``sum_n max(xhat_n + lam, 0) = L``.

    The left side is piecewise linear and increasing in ``lam``; the root is
    located exactly on its breakpoints instead of by bisection.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    v = np.sort(np.asarray(xhat, dtype=float))[::-1]
    csum = np.cumsum(v)
    k = np.arange(1, v.size + 1)
    lam = (L - csum) / k
    # largest k whose k-th largest entry stays active
    active = v + lam > 0
    j = np.flatnonzero(active)[-1]
    return float(lam[j])


def project_to_simplex_scaled(xhat, L: float) -> np.ndarray:
    """``argmin ||x - xhat||`` over ``x >= 0, sum x = L``."""
    xhat = np.asarray(xhat, dtype=float)
    lam = water_level(xhat, L)
    x = np.maximum(xhat + lam, 0.0)
    # pin the sum against rounding drift
    x *= L / x.sum()
    return x


def ssca_subproblem(x_prev, h, tau_prox: float, L: float) -> np.ndarray:
    """Maximize ``h.(x - x_prev) - tau_prox ||x - x_prev||^2`` over the scaled simplex.

    Completing the square shows this is the projection of
    ``x_prev + h / (2 tau_prox)``.
    """
    if not tau_prox > 0:
        raise ValueError("tau_prox must be positive")
    x_prev = np.asarray(x_prev, dtype=float)
    return project_to_simplex_scaled(x_prev + np.asarray(h, dtype=float) / (2.0 * tau_prox), L)
