import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from blockcode import CompletionProbabilityOptimizer, ExpectedRuntimeOptimizer
from blockcode.runtime import SystemConfig, completion_prob_exact, runtime_of_x
from blockcode.straggler import ShiftedExponential


@pytest.fixture
def cfg():
    return SystemConfig(3, 12, 3, 1, ShiftedExponential(1.0, 0.1))


def test_params_roundtrip_and_clone():
    est = ExpectedRuntimeOptimizer(method="closed-f", iterations=10)
    p = est.get_params()
    assert p["method"] == "closed-f" and p["iterations"] == 10
    est.set_params(iterations=20)
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    cdf = CompletionProbabilityOptimizer(threshold=5.0, step_radius=(0.02,))
    assert clone(cdf).get_params()["step_radius"] == (0.02,)


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        ExpectedRuntimeOptimizer().predict([[1.0, 2.0, 3.0]])
    with pytest.raises(NotFittedError):
        CompletionProbabilityOptimizer().predict([[1.0, 2.0, 3.0]])


@pytest.mark.parametrize("method", ["alg1", "closed-t", "closed-f"])
def test_runtime_estimator_fit_predict(cfg, method):
    est = ExpectedRuntimeOptimizer(method=method, iterations=200, eval_trials=500).fit(cfg)
    assert est.allocation_.sum() == pytest.approx(12)
    assert est.allocation_int_.sum() == 12
    T = np.array([[0.2, 0.5, 1.0], [1.0, 0.3, 0.1]])
    assert np.allclose(est.predict(T), [runtime_of_x(est.allocation_, t, cfg) for t in T])
    assert est.score(T) == pytest.approx(-est.predict(T).mean())
    assert est.objective_.metric == "expected-runtime"


def test_cdf_estimator_fit_predict(cfg):
    est = CompletionProbabilityOptimizer(threshold=10.0, iterations=200).fit(cfg)
    assert est.probability_ == pytest.approx(completion_prob_exact(est.allocation_, 10.0, cfg))
    assert est.probability_int_ == pytest.approx(completion_prob_exact(est.allocation_int_, 10.0, cfg))
    T = cfg.dist.sample(np.random.default_rng(0), (4000, 3))
    assert est.score(T) == pytest.approx(est.probability_, abs=0.03)
    assert set(np.unique(est.predict(T, integer=True))) <= {0, 1}


def test_unknown_method(cfg):
    with pytest.raises(ValueError):
        ExpectedRuntimeOptimizer(method="magic").fit(cfg)
    with pytest.raises(ValueError):
        CompletionProbabilityOptimizer(method="magic").fit(cfg)


def test_predict_checks_shape(cfg):
    est = ExpectedRuntimeOptimizer(method="closed-t").fit(cfg)
    with pytest.raises(ValueError):
        est.predict([[1.0, 2.0]])
