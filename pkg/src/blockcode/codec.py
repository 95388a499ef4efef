"""Executable block gradient coding: data placement, codes, decoding and a coded GD demo.

Worker ``n`` stores the data subsets ``n, n+1, ..., n+s_max`` (mod ``N``).
For redundancy ``s`` every worker sends one linear combination of the
partial gradients of the subsets in its first ``s + 1`` slots; the master
recovers the full sum from any ``N - s`` of them.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .runtime import SystemConfig, prefix_loads, runtime_of_x
from .validation import check_allocation, check_rng

__all__ = [
    "DecodingError",
    "allocate",
    "CodeBlock",
    "build_code",
    "code_from_matrix",
    "decode",
    "EXAMPLE_CODE_S1",
    "EXAMPLE_CODE_S2",
    "LeastSquaresProblem",
    "make_least_squares",
    "CodedGDTrace",
    "run_coded_gd",
]

EXHAUSTIVE_CHECK_MAX_N = 12
_RESID_TOL = 1e-9


class DecodingError(RuntimeError):
    """Raised when the received workers cannot reproduce the gradient sum."""


def allocate(N: int, s_max: int) -> list[tuple[int, ...]]:
    """Subsets held by each worker (0-based): ``I_n = {(n + j) mod N : j = 0..s_max}``."""
    if N < 1 or not 0 <= s_max <= N - 1:
        raise ValueError(f"need N >= 1 and 0 <= s_max <= N-1, got N={N}, s_max={s_max}")
    return [tuple((n + j) % N for j in range(s_max + 1)) for n in range(N)]


@dataclass
class CodeBlock:
    """Encoding matrix ``B`` (``N x N``) for redundancy ``s``; row ``n`` lives on worker ``n``'s window."""

    s: int
    B: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.B.shape[0]

    def coefficients(self, workers) -> np.ndarray:
        """Weights ``a`` with ``a @ B[workers] = 1``, cached per worker subset."""
        key = tuple(sorted(int(w) for w in workers))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        BW = self.B[list(key)]
        a, *_ = np.linalg.lstsq(BW.T, np.ones(self.N), rcond=None)
        resid = np.abs(a @ BW - 1.0).max()
        if not resid <= _RESID_TOL * max(1.0, np.abs(a).max()):
            raise DecodingError(f"workers {key} cannot decode redundancy-{self.s} block (residual {resid:.3g})")
        self._cache[key] = a
        return a


def _window(N, n, s):
    return [(n + j) % N for j in range(s + 1)]


def _check_support(B, s):
    N = B.shape[0]
    for n in range(N):
        outside = np.ones(N, dtype=bool)
        outside[_window(N, n, s)] = False
        if np.any(B[n, outside] != 0):
            raise ValueError(f"row {n} of the encoding matrix leaves its cyclic window")


def code_from_matrix(B, s: int) -> CodeBlock:
    """Wrap a given encoding matrix after checking its support pattern."""
    B = np.array(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("encoding matrix must be square")
    _check_support(B, s)
    return CodeBlock(int(s), B)


def _decodable(block: CodeBlock, rng) -> bool:
    N, s = block.N, block.s
    if N <= EXHAUSTIVE_CHECK_MAX_N:
        subsets = itertools.combinations(range(N), N - s)
    else:
        subsets = (tuple(sorted(rng.choice(N, N - s, replace=False))) for _ in range(200))
    try:
        for W in subsets:
            block.coefficients(W)
    except DecodingError:
        return False
    return True


def build_code(N: int, s: int, rng=None, *, attempts: int = 10) -> CodeBlock:
    """Random code whose rows lie in the null space of a random ``s x N`` matrix ``H`` with ``H 1 = 0``.

    Each row has ``s + 1`` free entries on its window and must satisfy ``s``
    equations, so it is fixed up to scale.  All rows share the
    ``(N - s)``-dimensional null space of ``H``, which contains the all-ones
    vector, and generic ``N - s`` rows span it.
    """
    if N < 1 or not 0 <= s <= N - 1:
        raise ValueError(f"need 0 <= s <= N-1, got N={N}, s={s}")
    rng = check_rng(rng)
    if s == 0:
        return CodeBlock(0, np.eye(N))
    for _ in range(attempts):
        H = rng.uniform(-1.0, 1.0, size=(s, N))
        H[:, -1] = -H[:, :-1].sum(axis=1)
        B = np.zeros((N, N))
        for n in range(N):
            win = _window(N, n, s)
            # the first window entry is 1; solve for the remaining s
            sub = H[:, win]
            rest = np.linalg.solve(sub[:, 1:], -sub[:, 0]) if s > 0 else np.empty(0)
            B[n, win] = np.concatenate([[1.0], rest])
        if not np.all(np.isfinite(B)) or np.abs(B).max() > 1e6:
            continue
        block = CodeBlock(s, B)
        if _decodable(block, rng):
            return block
    raise DecodingError(f"no decodable code found for N={N}, s={s} after {attempts} attempts")


def decode(block: CodeBlock, received: dict) -> np.ndarray:
    """Sum of all per-subset partial gradients from the coded values of at least ``N - s`` workers.

    Uses the ``N - s`` lowest-numbered workers present in ``received``.
    """
    need = block.N - block.s
    if len(received) < need:
        raise DecodingError(f"need {need} workers, got {len(received)}")
    W = sorted(received)[:need]
    a = block.coefficients(W)
    vals = np.stack([np.asarray(received[w], dtype=float) for w in W])
    return a @ vals


# Fixed codes for N = 4; rows are workers, columns are data subsets.
EXAMPLE_CODE_S1 = np.array([
    [1.0, -1.0, 0.0, 0.0],
    [0.0, 1.0, 1.0, 0.0],
    [0.0, 0.0, 1.0, -1.0],
    [1.0, 0.0, 0.0, 1.0],
])
EXAMPLE_CODE_S2 = np.array([
    [1.0, 1 / 3, 2 / 3, 0.0],
    [0.0, 1.0, 1 / 2, 3 / 2],
    [2.0, 0.0, 1.0, -1.0],
    [-1 / 2, 1 / 2, 0.0, 1.0],
])


@dataclass(frozen=True)
class LeastSquaresProblem:
    """``min_w ||A w - y||^2 / (2 m)`` with the ``m`` rows split evenly into ``N`` subsets."""

    A: np.ndarray
    y: np.ndarray
    N: int

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def loss(self, w) -> float:
        r = self.A @ w - self.y
        return float(r @ r / (2 * self.m))

    def gradient(self, w) -> np.ndarray:
        return self.A.T @ (self.A @ w - self.y) / self.m

    def subset_gradients(self, w) -> np.ndarray:
        """``(N, d)`` per-subset gradients; they sum to :meth:`gradient`."""
        r = self.A @ w - self.y
        parts = np.split(np.arange(self.m), self.N)
        return np.stack([self.A[p].T @ r[p] / self.m for p in parts])


def make_least_squares(N: int, m: int, d: int, rng=None, noise: float = 0.1) -> LeastSquaresProblem:
    if m % N:
        raise ValueError(f"sample count {m} is not divisible by N={N}")
    rng = check_rng(rng)
    A = rng.standard_normal((m, d))
    w_true = rng.standard_normal(d)
    y = A @ w_true + noise * rng.standard_normal(m)
    return LeastSquaresProblem(A, y, N)


@dataclass
class CodedGDTrace:
    loss: list = field(default_factory=list)
    runtime: list = field(default_factory=list)
    grad_rel_error: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "loss", "runtime", "cumulative_runtime"])
        cum = 0.0
        for i, (l, r) in enumerate(zip(self.loss, self.runtime), start=1):
            cum += r
            w.writerow([i, repr(l), repr(r), repr(cum)])
        return buf.getvalue()


def run_coded_gd(problem: LeastSquaresProblem, x, cfg: SystemConfig, rng=None, iterations: int = 50, *,
                 step: float | None = None, T=None, codes: dict | None = None) -> CodedGDTrace:
    """Gradient descent where each iteration's gradient is decoded from simulated coded workers.

    ``x`` is an integer block allocation over the ``L = d`` model
    coordinates.  Each iteration draws cycle times (or uses the fixed ``T``),
    lets every worker finish its coded values block by block, and decodes
    each block from its ``N - s`` fastest workers.  The recorded runtime is
    the time the last block becomes decodable.
    """
    N, L = cfg.N, cfg.L
    if problem.N != N or problem.A.shape[1] != L:
        raise ValueError("problem shape does not match the configuration")
    x = check_allocation(x, L, integer=True, N=N)
    rng = check_rng(rng)
    s_levels = [n for n in range(N) if x[n] > 0]
    s_max = max(s_levels)
    holdings = allocate(N, s_max)
    if codes is None:
        codes = {s: build_code(N, s, rng) for s in s_levels}
    bounds = np.concatenate([[0], np.cumsum(x)])
    S = prefix_loads(x)
    if step is None:
        step = 1.0 / np.linalg.eigvalsh(problem.A.T @ problem.A / problem.m).max()
    w = np.zeros(L)
    trace = CodedGDTrace()
    for _ in range(iterations):
        Tv = np.asarray(T, dtype=float) if T is not None else cfg.dist.sample(rng, N)
        parts = problem.subset_gradients(w)
        grad = np.empty(L)
        finish = 0.0
        order = np.argsort(Tv, kind="stable")
        for s in s_levels:
            lo, hi = bounds[s], bounds[s + 1]
            B = codes[s].B
            coded = {}
            for n in range(N):
                held = holdings[n][: s + 1]
                coded[n] = B[n, list(held)] @ parts[list(held), lo:hi]
            # per-worker finishing time of this block's last coordinate
            done = cfg.scale * Tv * S[s]
            fastest = order[: N - s]
            assert np.all(done[fastest] <= done[order[N - s - 1]])
            grad[lo:hi] = decode(codes[s], {int(n): coded[n] for n in fastest})
            # T_(N-s) * S_s is the same product the runtime formula takes
            finish = max(finish, cfg.scale * (Tv[order[N - s - 1]] * S[s]))
        full = problem.gradient(w)
        trace.grad_rel_error.append(float(np.linalg.norm(grad - full) / max(np.linalg.norm(full), 1e-300)))
        tau = runtime_of_x(x, Tv, cfg)
        if not math.isclose(finish, tau, rel_tol=0.0, abs_tol=0.0):
            raise AssertionError(f"simulated finish {finish!r} differs from runtime formula {tau!r}")
        trace.runtime.append(tau)
        w = w - step * grad
        trace.loss.append(problem.loss(w))
        trace.iterates.append(w.copy())
    return trace
