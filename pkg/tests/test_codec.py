import itertools

import numpy as np
import pytest

from blockcode.codec import (
    EXAMPLE_CODE_S1,
    EXAMPLE_CODE_S2,
    CodeBlock,
    DecodingError,
    allocate,
    build_code,
    code_from_matrix,
    decode,
    make_least_squares,
    run_coded_gd,
)
from blockcode.runtime import SystemConfig
from blockcode.straggler import ShiftedExponential


def test_allocate_cyclic():
    assert allocate(4, 1) == [(0, 1), (1, 2), (2, 3), (3, 0)]
    assert allocate(3, 0) == [(0,), (1,), (2,)]
    with pytest.raises(ValueError):
        allocate(3, 3)


@pytest.mark.parametrize("B,s", [(EXAMPLE_CODE_S1, 1), (EXAMPLE_CODE_S2, 2)])
def test_fixed_codes_recover_from_every_subset(B, s, rng):
    code = code_from_matrix(B, s)
    g = rng.standard_normal((4, 5))
    for W in itertools.combinations(range(4), 4 - s):
        got = decode(code, {w: code.B[w] @ g for w in W})
        assert np.allclose(got, g.sum(axis=0), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("N", range(1, 9))
def test_random_codes_recover_from_every_subset(N, rng):
    for s in range(N):
        code = build_code(N, s, rng)
        g = rng.standard_normal((N, 4))
        tot = g.sum(axis=0)
        for W in itertools.combinations(range(N), N - s):
            got = decode(code, {w: code.B[w] @ g for w in W})
            assert np.abs(got - tot).max() <= 1e-9 * np.abs(tot).max()


def test_code_rows_respect_placement(rng):
    N, s = 7, 3
    code = build_code(N, s, rng)
    for n, held in enumerate(allocate(N, s)):
        outside = np.setdiff1d(np.arange(N), held)
        assert np.all(code.B[n, outside] == 0)


def test_decode_uses_lowest_workers_and_caches(rng):
    code = build_code(5, 2, rng)
    g = rng.standard_normal((5, 2))
    decode(code, {w: code.B[w] @ g for w in (4, 0, 3, 2)})
    assert (0, 2, 3) in code._cache


def test_too_few_workers():
    code = code_from_matrix(EXAMPLE_CODE_S1, 1)
    with pytest.raises(DecodingError):
        decode(code, {0: np.zeros(1), 1: np.zeros(1)})


def test_undecodable_subset():
    # every row identical: the span never contains the all-ones vector for N=2
    code = CodeBlock(1, np.array([[1.0, -1.0], [1.0, -1.0]]))
    with pytest.raises(DecodingError):
        code.coefficients([0])


def test_support_violation_is_rejected():
    bad = EXAMPLE_CODE_S1.copy()
    bad[0, 2] = 1.0
    with pytest.raises(ValueError):
        code_from_matrix(bad, 1)


def _centralized(problem, iters):
    step = 1.0 / np.linalg.eigvalsh(problem.A.T @ problem.A / problem.m).max()
    w = np.zeros(problem.A.shape[1])
    out = []
    for _ in range(iters):
        w = w - step * problem.gradient(w)
        out.append(w.copy())
    return out


def test_coded_gd_tracks_centralized_gd(rng):
    N, L = 4, 6
    cfg = SystemConfig(N, L, 40, 1, ShiftedExponential(1.0, 0.2))
    problem = make_least_squares(N, 40, L, rng)
    trace = run_coded_gd(problem, [2, 2, 1, 1], cfg, rng, iterations=50)
    for a, b in zip(trace.iterates, _centralized(problem, 50)):
        assert np.abs(a - b).max() <= 1e-8 * max(1.0, np.abs(b).max())
    # relative error grows only because the true gradient shrinks near the optimum
    assert max(trace.grad_rel_error[:10]) < 1e-10
    assert max(trace.grad_rel_error) < 1e-6
    assert trace.loss[-1] < trace.loss[0]


def test_coded_gd_runtime_matches_formula_on_example():
    cfg = SystemConfig(4, 4, 4, 1, ShiftedExponential(1.0))
    rng = np.random.default_rng(0)
    problem = make_least_squares(4, 4, 4, rng)
    trace = run_coded_gd(problem, [0, 2, 2, 0], cfg, rng, iterations=3, T=[0.1, 0.1, 0.25, 1.0])
    assert trace.runtime == [1.0, 1.0, 1.0]
    lines = trace.to_csv().splitlines()
    assert lines[0] == "iteration,loss,runtime,cumulative_runtime"
    assert lines[-1].split(",")[3] == "3.0"


def test_problem_shape_checks(rng):
    with pytest.raises(ValueError):
        make_least_squares(3, 10, 2, rng)
    cfg = SystemConfig(2, 3, 4, 1, ShiftedExponential(1.0))
    with pytest.raises(ValueError):
        run_coded_gd(make_least_squares(2, 4, 2, rng), [3, 0], cfg, rng)
