from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import ElasticNet

from graphnet.errors import DataError, LabelError, ParameterError
from graphnet.graph import identity_graph, zero_graph
from graphnet.losses import objective_value
from graphnet.oracle import objective_gap, oracle_prox_gradient, random_instance
from graphnet.problem import FitSpec, LossKind
from graphnet.solver import (
    INTEGER_LAMBDA1_GRID,
    adaptive_weights,
    coordinate_update_graphnet,
    default_path,
    fit,
    fit_adaptive,
    fit_graphnet,
    fit_path,
    fit_robust_graphnet,
    fit_svgn,
    kkt_violation,
    lambda_max,
)

SQ = LossKind.squared()


def _data(rng, n=40, p=10, k=3, noise=0.3):
    X = rng.standard_normal((n, p))
    X /= np.linalg.norm(X, axis=0)
    beta = np.zeros(p)
    beta[:k] = (3.0, -2.0, 1.5)[:k]
    return X, X @ beta + noise * rng.standard_normal(n), beta


def test_coordinate_update_orthonormal_elastic_net(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((20, 5)))
    y = rng.standard_normal(20) * 3
    lam1, lam2 = 0.8, 0.4
    beta = rng.standard_normal(5)
    for j in range(5):
        got = coordinate_update_graphnet(j, Q, y, beta, identity_graph(5), lam1, lam2)
        xty = Q[:, j] @ y
        expected = np.sign(xty) * max(abs(xty) - lam1 / 2, 0) / (1 + lam2)
        assert got == pytest.approx(expected, abs=1e-12)


def test_coordinate_update_ols():
    y = np.array([1.5, -2.0, 0.3])
    for j in range(3):
        assert coordinate_update_graphnet(j, np.eye(3), y, np.zeros(3), zero_graph(3), 0.0, 0.0) == y[j]


def test_decoupled_example():
    spec = FitSpec(SQ, lambda1=1.0, lambdaG=1.0, graph=identity_graph(2), tol=1e-12)
    res = fit_graphnet(np.eye(2), np.array([3.0, 0.2]), spec)
    np.testing.assert_allclose(res.beta, [1.25, 0.0], atol=1e-12)
    assert res.converged


def test_zero_target(rng):
    X = rng.standard_normal((15, 4))
    for lam in (0.01, 1.0, 10.0):
        assert not np.any(fit_graphnet(X, np.zeros(15), FitSpec(SQ, lambda1=lam)).beta)


def test_null_model_threshold(rng):
    X, y, _ = _data(rng)
    spec = FitSpec(SQ)
    lmax = lambda_max(X, y, spec)
    assert lmax == pytest.approx(2 * np.max(np.abs(X.T @ y)))
    assert not np.any(fit_graphnet(X, y, spec.at(lmax)).beta)
    assert np.any(fit_graphnet(X, y, spec.at(0.99 * lmax)).beta)


@pytest.mark.parametrize("lam1,lam2", [(0.5, 0.2), (2.0, 1.0), (0.1, 0.0)])
def test_elastic_net_matches_sklearn(rng, lam1, lam2):
    X, y, _ = _data(rng, n=50, p=12)
    spec = FitSpec(SQ, lambda1=lam1, lambda2=lam2, tol=1e-10)
    ours = fit_graphnet(X, y, spec).beta
    n = X.shape[0]
    alpha = (lam1 / 2 + lam2) / n
    rho = (lam1 / 2) / (n * alpha)
    ref = ElasticNet(alpha=alpha, l1_ratio=rho, fit_intercept=False, tol=1e-14, max_iter=100000).fit(X, y).coef_
    np.testing.assert_allclose(ours, ref, atol=1e-6)


def test_identity_graph_equals_diagonal_shift(rng):
    X, y, _ = _data(rng)
    a = fit_graphnet(X, y, FitSpec(SQ, lambda1=0.4, lambdaG=0.7, graph=identity_graph(10), tol=1e-12))
    b = fit_graphnet(X, y, FitSpec(SQ, lambda1=0.4, lambda2=0.7, tol=1e-12))
    assert np.max(np.abs(a.beta - b.beta)) < 1e-8


def test_elastic_net_matches_oracle(rng):
    X, y, _ = _data(rng)
    spec = FitSpec(SQ, lambda1=0.5, lambda2=0.3, graph=zero_graph(10), tol=1e-10)
    res = fit_graphnet(X, y, spec)
    assert objective_gap(res.objective, oracle_prox_gradient(X, y, spec, tol=1e-10).objective) < 1e-6


def test_huber_large_delta_reduces_to_squared(rng):
    X, y, _ = _data(rng)
    G = identity_graph(10)
    sq = fit_graphnet(X, y, FitSpec(SQ, lambda1=0.3, lambdaG=0.5, graph=G, tol=1e-12))
    big = 10 * np.max(np.abs(y)) + 10
    rob = fit_robust_graphnet(X, y, FitSpec(LossKind.huber(big), lambda1=0.3, lambdaG=0.5, graph=G, tol=1e-12))
    assert not np.any(rob.alpha)
    assert np.max(np.abs(sq.beta - rob.beta)) < 1e-8


def test_huber_single_observation():
    res = fit_robust_graphnet(np.ones((1, 1)), np.array([10.0]), FitSpec(LossKind.huber(1.0), tol=1e-12))
    assert res.beta[0] == pytest.approx(10.0)
    assert res.alpha[0] == 0.0


def test_augmented_objective_matches_direct(rng):
    X, y, _ = _data(rng)
    y[:3] += 20
    spec = FitSpec(LossKind.huber(0.5), lambda1=0.3, lambdaG=0.5, graph=identity_graph(10), tol=1e-12)
    res = fit_robust_graphnet(X, y, spec)
    direct = objective_value(spec, X, y, beta=res.beta)
    aug = objective_value(spec, X, y, beta=res.beta, alpha=res.alpha, form="augmented")
    assert aug == pytest.approx(direct, abs=1e-8)


def test_robust_fit_resists_outlier():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X, y, _ = _data(rng, n=60, p=10)
        sigma = 0.3
        y_out = y.copy()
        y_out[int(rng.integers(60))] += 100 * sigma
        sq = FitSpec(SQ, lambda1=0.2, tol=1e-10)
        hu = FitSpec(LossKind.huber(2 * sigma), lambda1=0.2, tol=1e-10)
        plain = np.linalg.norm(fit(X, y_out, sq).beta - fit(X, y, sq).beta)
        robust = np.linalg.norm(fit(X, y_out, hu).beta - fit(X, y, hu).beta)
        wins += robust < plain
    assert wins >= 15


def test_adaptive_weights_formula():
    w = adaptive_weights([2.0, 0.5, 0.0])
    np.testing.assert_array_equal(w, [0.5, 2.0, np.inf])
    with pytest.raises(DataError):
        adaptive_weights([0.0, 0.0])


def test_adaptive_zero_level_is_restricted_fit(rng):
    X, y, _ = _data(rng)
    spec = FitSpec(SQ, lambda1=1.0, lambdaG=0.2, graph=identity_graph(10), tol=1e-12)
    pilot = fit(X, y, spec)
    res = fit_adaptive(X, y, spec, pilot, lambda1_star=0.0)
    A = pilot.active_set
    assert set(res.active_set) <= set(A)
    XA = X[:, A]
    ref = np.linalg.solve(XA.T @ XA + 0.2 * np.eye(A.size), XA.T @ y)
    np.testing.assert_allclose(res.beta[A], ref, atol=1e-8)


def test_adaptive_reduces_bias():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        X, y, truth = _data(rng, n=80, p=20, noise=0.5)
        S = np.flatnonzero(truth)
        spec = FitSpec(SQ, lambda1=2.0, tol=1e-10)
        pilot = fit(X, y, spec)
        adapt = fit_adaptive(X, y, spec, pilot, lambda1_star=0.5)
        wins += np.linalg.norm(adapt.beta[S] - truth[S]) < np.linalg.norm(pilot.beta[S] - truth[S])
    assert wins > 10


def test_svgn_separable():
    X = np.array([[-3.0], [3.0]])
    y = np.array([-1.0, 1.0])
    spec = FitSpec(LossKind.hinge(0.5), lambda1=1e-4, with_intercept=True, tol=1e-12)
    res = fit_svgn(X, y, spec)
    margins = y * (res.intercept + X @ res.beta)
    # the quadratic knee lets a positive lambda1 pull margins just inside 1
    assert np.all(margins >= 1 - spec.lambda1 * spec.loss.delta)
    hinge_only = replace(spec, lambda1=0.0)
    assert objective_value(hinge_only, X, y, beta=res.beta, intercept=res.intercept) < 1e-9


def test_svgn_null_model_majority():
    X = np.arange(10, dtype=float)[:, None]
    y = np.array([1.0] * 7 + [-1.0] * 3)
    res = fit_svgn(X, y, FitSpec(LossKind.hinge(1.0), lambda1=1e6, with_intercept=True))
    assert not np.any(res.beta)
    assert np.sign(res.intercept) == 1.0


def test_svgn_small_matches_oracle(rng):
    X = rng.standard_normal((6, 2))
    y = np.array([1.0, -1.0, 1.0, -1.0, 1.0, 1.0])
    spec = FitSpec(LossKind.hinge(0.5), lambda1=0.3, with_intercept=True, tol=1e-12, max_sweeps=100000)
    res = fit_svgn(X, y, spec)
    ref = oracle_prox_gradient(X, y, spec, tol=1e-10)
    assert objective_gap(res.objective, ref.objective) < 1e-4


def test_svgn_label_errors(rng):
    X = rng.standard_normal((4, 2))
    with pytest.raises(LabelError):
        fit_svgn(X, np.ones(4), FitSpec(LossKind.hinge(1.0)))
    with pytest.raises(LabelError):
        fit_svgn(X, np.array([0.0, 1.0, 2.0, 1.0]), FitSpec(LossKind.hinge(1.0)))


def test_wrong_loss_rejected(rng):
    X = rng.standard_normal((4, 2))
    with pytest.raises(ParameterError):
        fit_graphnet(X, np.zeros(4), FitSpec(LossKind.huber(1.0)))


def test_spec_validation():
    with pytest.raises(ParameterError):
        FitSpec(SQ, lambda1=-1.0)
    with pytest.raises(ParameterError):
        FitSpec(SQ, path=(1.0, 2.0))
    with pytest.raises(ParameterError):
        FitSpec(SQ, adaptive_weights=np.array([1.0, 0.0]))


def test_path_first_result_is_null(rng):
    X, y, _ = _data(rng)
    lmax = lambda_max(X, y, FitSpec(SQ))
    results = fit_path(X, y, FitSpec(SQ), lambdas=[lmax, lmax / 2])
    assert results[0].active_set.size == 0
    assert results[1].active_set.size > 0


def test_path_warm_equals_cold(rng):
    X, y, _ = _data(rng, p=15)
    spec = FitSpec(SQ, lambdaG=0.3, graph=identity_graph(15), tol=1e-10)
    path = default_path(lambda_max(X, y, spec), 20, 0.01)
    warm = fit_path(X, y, spec, lambdas=path)[-1]
    cold = fit(X, y, spec.at(path[-1]))
    assert objective_gap(warm.objective, cold.objective) < 1e-6


def test_density_cap_zero(rng):
    X, y, _ = _data(rng)
    results = fit_path(X, y, FitSpec(SQ, density_cap=0.0), n_lambdas=5)
    assert all(r.active_set.size == 0 for r in results)


def test_default_path_and_grid():
    path = default_path(10.0)
    assert len(path) == 90
    assert path[0] == pytest.approx(10.0) and path[-1] == pytest.approx(0.1)
    assert INTEGER_LAMBDA1_GRID[0] == 99.0 and INTEGER_LAMBDA1_GRID[-1] == 10.0 and len(INTEGER_LAMBDA1_GRID) == 90


def test_path_with_criterion_stops(rng):
    X, y, _ = _data(rng, n=60, p=20)
    results = fit_path(X, y, FitSpec(SQ), criterion="bic")
    assert all(r.bic is not None for r in results)
    assert len(results) <= 90


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["squared", "huber", "hinge"]))
def test_kkt_and_monotone_trace(seed, tag):
    X, y, spec = random_instance(np.random.default_rng(seed), tag)
    res = fit(X, y, spec)
    assert res.converged
    assert kkt_violation(X, y, spec, res) < 1e-6
    trace = res.objective_trace
    assert np.all(np.diff(trace) <= 1e-12 * np.maximum(1.0, np.abs(trace[:-1])))
    np.testing.assert_array_equal(res.active_set, np.flatnonzero(res.beta))
