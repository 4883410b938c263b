import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphnet.errors import NumericError, ParameterError
from graphnet.graph import zero_graph
from graphnet.losses import objective_value
from graphnet.oracle import (
    finite_difference_gradient_check,
    objective_gap,
    oracle_lda_direction,
    oracle_prox_gradient,
    oracle_sign_enumeration,
    random_instance,
)
from graphnet.problem import FitSpec, LossKind

SQ = LossKind.squared()


def test_prox_gradient_ols(rng):
    X, y = rng.standard_normal((30, 4)), rng.standard_normal(30)
    res = oracle_prox_gradient(X, y, FitSpec(SQ), tol=1e-11)
    np.testing.assert_allclose(res.beta, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-8)
    assert res.converged and res.method == "prox-grad"


def test_prox_gradient_scalar_lasso():
    X = np.array([[1.0], [2.0], [-1.0]])
    y = np.array([2.0, 3.0, 0.5])
    lam = 1.5
    res = oracle_prox_gradient(X, y, FitSpec(SQ, lambda1=lam), tol=1e-12)
    xty, xtx = X[:, 0] @ y, X[:, 0] @ X[:, 0]
    assert res.beta[0] == pytest.approx(np.sign(xty) * max(abs(xty) - lam / 2, 0) / xtx, abs=1e-10)


def test_sign_enumeration_scalar():
    X = np.array([[2.0]])
    for y0, lam in ((3.0, 1.0), (0.2, 1.0), (-5.0, 2.0)):
        res = oracle_sign_enumeration(X, np.array([y0]), FitSpec(SQ, lambda1=lam))
        xty = 2 * y0
        assert res.beta[0] == pytest.approx(np.sign(xty) * max(abs(xty) - lam / 2, 0) / 4, abs=1e-14)


def test_sign_enumeration_orthogonal_elastic_net(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((10, 2)))
    y = 3 * rng.standard_normal(10)
    lam1, lam2 = 0.9, 0.6
    res = oracle_sign_enumeration(Q, y, FitSpec(SQ, lambda1=lam1, lambda2=lam2))
    xty = Q.T @ y
    np.testing.assert_allclose(res.beta, np.sign(xty) * np.maximum(np.abs(xty) - lam1 / 2, 0) / (1 + lam2),
                               atol=1e-12)


def test_sign_enumeration_limits(rng):
    with pytest.raises(ParameterError):
        oracle_sign_enumeration(rng.standard_normal((5, 13)), np.zeros(5), FitSpec(SQ))
    with pytest.raises(ParameterError):
        oracle_sign_enumeration(rng.standard_normal((5, 2)), np.zeros(5), FitSpec(LossKind.huber(1.0)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_oracles_agree(seed):
    X, y, spec = random_instance(np.random.default_rng(seed), "squared", p_range=(2, 8))
    a = oracle_sign_enumeration(X, y, spec)
    b = oracle_prox_gradient(X, y, spec)
    assert objective_gap(b.objective, a.objective) < 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["squared", "huber", "hinge"]))
def test_objective_consistency(seed, tag):
    X, y, spec = random_instance(np.random.default_rng(seed), tag, p_range=(2, 10))
    res = oracle_prox_gradient(X, y, spec)
    direct = objective_value(spec, X, y, beta=res.beta, intercept=res.intercept)
    assert res.objective == pytest.approx(direct, abs=1e-10)


def test_prox_gradient_deterministic(rng):
    X, y, spec = random_instance(rng, "huber")
    a, b = oracle_prox_gradient(X, y, spec), oracle_prox_gradient(X, y, spec)
    np.testing.assert_array_equal(a.beta, b.beta)


def test_prox_gradient_iteration_cap(rng):
    X, y = rng.standard_normal((30, 4)), rng.standard_normal(30)
    res = oracle_prox_gradient(X, y, FitSpec(SQ), tol=1e-14, max_iter=3)
    assert not res.converged and res.iterations == 3


def test_lda_axis_direction(rng):
    n = 4000
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.standard_normal((n, 3))
    X[:, 0] += 2 * y
    d = oracle_lda_direction(X, y)
    d /= np.linalg.norm(d)
    assert d[0] > 0.99


def test_lda_identical_means():
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] * 2)
    y = np.array([1, 1, 1, 1, -1, -1, -1, -1], float)
    np.testing.assert_allclose(oracle_lda_direction(X, y), 0.0, atol=1e-14)


def test_lda_singular():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]])
    with pytest.raises(NumericError):
        oracle_lda_direction(X, [1, 1, -1, -1])


def test_finite_difference_checks():
    assert finite_difference_gradient_check(SQ, [-3.0, 0.1, 2.0]) < 1e-9
    hub = LossKind.huber(0.8)
    assert finite_difference_gradient_check(hub, [0.4, -0.4, 1.6, -1.6]) < 1e-5
    # margin 0.5 is the 1 - delta knee when delta = 0.5, so probe beside it
    assert finite_difference_gradient_check(LossKind.hinge(0.4), [0.5]) < 1e-5
    assert finite_difference_gradient_check(LossKind.hinge(0.5), [0.5 + 2e-5, 0.25, 0.75]) < 1e-5
    with pytest.raises(ParameterError):
        finite_difference_gradient_check(LossKind.hinge(0.5), [0.5])
    with pytest.raises(ParameterError):
        finite_difference_gradient_check(hub, [0.8])


def test_objective_gap():
    assert objective_gap(2.0, 1.0) == 1.0
    assert objective_gap(101.0, 100.0) == pytest.approx(0.01)
    assert objective_gap(0.0, 1e-9) == pytest.approx(1e-9)


def test_zero_graph_spec_on_oracle(rng):
    X, y = rng.standard_normal((20, 3)), rng.standard_normal(20)
    a = oracle_prox_gradient(X, y, FitSpec(SQ, lambda1=0.5, graph=zero_graph(3), lambdaG=5.0))
    b = oracle_prox_gradient(X, y, FitSpec(SQ, lambda1=0.5))
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-7)
