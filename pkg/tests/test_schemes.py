import itertools

import numpy as np
import pytest

from blockcode.opt_cdf import solve_completion_probability, SscaSolverOptions
from blockcode.runtime import SystemConfig, completion_prob_exact
from blockcode.schemes import (
    SchemeSpec,
    batch_objective,
    compare_schemes,
    largest_remainder,
    mc_objective,
    round_allocation,
    single_bcgc,
)
from blockcode.straggler import ShiftedExponential
from blockcode.validation import InfeasibleAllocationError


@pytest.fixture
def cfg():
    return SystemConfig(3, 12, 3, 1, ShiftedExponential(1.0, 0.1))


def test_largest_remainder_hand_case():
    assert largest_remainder([4.4, 3.3, 2.3], 10).tolist() == [5, 3, 2]
    assert largest_remainder([2.5, 2.5], 5).tolist() == [3, 2]
    assert largest_remainder([3.0, 0.0, 1.0], 4).tolist() == [3, 0, 1]


def test_largest_remainder_sums(rng):
    for _ in range(200):
        N = int(rng.integers(1, 12))
        L = int(rng.integers(1, 500))
        x = rng.dirichlet(np.ones(N)) * L
        r = largest_remainder(x * (L / x.sum()), L)
        assert r.sum() == L and np.all(r >= 0)
        assert np.all(np.abs(r - x) < 1 + 1e-9)


def test_rounding_never_worse_than_largest_remainder(cfg, rng):
    t = 10.0
    obj = batch_objective(cfg, "completion-probability", t)
    for _ in range(20):
        x = rng.dirichlet(np.ones(3)) * 12
        x *= 12 / x.sum()
        r = round_allocation(x, obj)
        assert r.sum() == 12
        assert obj(r[None])[0] <= obj(largest_remainder(x, 12)[None])[0]


def test_rounding_reaches_brute_force_optimum_after_relaxation(cfg):
    t = 10.0
    brute = max((completion_prob_exact(np.array(x), t, cfg), x)
                for x in itertools.product(range(13), repeat=3) if sum(x) == 12)
    sol = solve_completion_probability(cfg, t, SscaSolverOptions(iterations=600))
    r = round_allocation(sol.x, batch_objective(cfg, "completion-probability", t))
    p_int = completion_prob_exact(r, t, cfg)
    # relaxation upper-bounds the integer optimum, rounding gets within 0.02 of it
    assert sol.probability >= brute[0] - 1e-9
    assert p_int >= brute[0] - 0.02


def test_rounding_trivial_cases():
    obj = lambda X: np.zeros(len(X))  # noqa: E731
    assert round_allocation([5.0], obj).tolist() == [5]
    assert round_allocation([2.5, 2.5], obj, max_moves=0).tolist() == [3, 2]


def test_batch_objective_common_random_numbers(cfg):
    f = batch_objective(cfg, "expected-runtime", trials=500, seed=1)
    X = np.array([[4, 4, 4], [12, 0, 0]])
    assert np.array_equal(f(X), f(X))
    g = batch_objective(cfg, "completion-probability", 10.0, exact=False, trials=500)
    assert np.all((-1 <= g(X)) & (g(X) <= 0))
    with pytest.raises(ValueError):
        batch_objective(cfg, "completion-probability")
    with pytest.raises(ValueError):
        batch_objective(cfg, "latency")


def test_single_bcgc_picks_best_level(cfg):
    spec = single_bcgc(cfg, trials=5000, seed=2)
    assert spec.L == 12 and sum(1 for v in spec.allocation if v) == 1
    cands = [np.eye(3, dtype=int)[n] * 12 for n in range(3)]
    vals = [mc_objective(c, cfg, "expected-runtime", trials=5000, seed=2).estimate for c in cands]
    assert spec.allocation == tuple(cands[int(np.argmin(vals))])
    p = single_bcgc(cfg, "completion-probability", 10.0)
    assert completion_prob_exact(p.allocation, 10.0, cfg) == max(completion_prob_exact(c, 10.0, cfg)
                                                                 for c in cands)


def test_scheme_spec_validation():
    s = SchemeSpec("a", (1, 2, 3))
    assert s.L == 6 and s.allocation == (1, 2, 3)
    with pytest.raises(InfeasibleAllocationError):
        SchemeSpec("b", (1.5, 2.5))
    with pytest.raises(InfeasibleAllocationError):
        SchemeSpec("c", (-1, 3))


def test_compare_schemes_rows(cfg):
    schemes = [SchemeSpec("flat", (4, 4, 4)), SchemeSpec("front", (12, 0, 0))]
    rows = compare_schemes(schemes, cfg, ("expected-runtime", "completion-probability"), 10.0,
                           trials=1000, seed=3)
    assert [r[0] for r in rows] == ["flat", "front", "flat", "front"]
    assert rows[2][1].metric == "completion-probability"
    assert all(e.trials == 1000 and e.seed == 3 for _, e in rows)
