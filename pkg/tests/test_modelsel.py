import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphnet import classify
from graphnet.errors import GraphNetError, NumericError, ParameterError, PlanError, ShapeError
from graphnet.graph import identity_graph
from graphnet.modelsel import (
    GridPoint,
    effective_df,
    evaluate_oos,
    exact_binomial_pvalue,
    grid_search,
    information_criteria,
    make_cv_plan,
    median_aggregate,
    full_grid,
    rescale,
    write_report,
)
from graphnet.problem import FitSpec
from graphnet.solver import fit, model_criteria


def _direct_pvalue(s, n, alternative):
    """Binomial tail by exact rational summation."""
    pmf = [Fraction(math.comb(n, k), 2**n) for k in range(n + 1)]
    if alternative == "greater":
        return float(sum(pmf[s:]))
    if alternative == "less":
        return float(sum(pmf[:s + 1]))
    return float(min(Fraction(1), sum(q for q in pmf if q <= pmf[s])))


# ------------------------------------------------------------------ df / IC


def test_df_orthonormal_is_active_size(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((30, 4)))
    assert effective_df(Q, np.zeros((4, 4)), 0.0) == pytest.approx(4.0, abs=1e-12)


def test_df_vanishes_for_huge_penalty(rng):
    X = rng.standard_normal((10, 3))
    assert effective_df(X, np.eye(3), 1e12) < 1e-9


def test_df_matches_dense_hat_matrix(rng):
    X = rng.standard_normal((5, 2))
    G = np.array([[1.0, -1.0], [-1.0, 1.0]])
    hat = X @ np.linalg.inv(X.T @ X + 0.7 * G) @ X.T
    assert effective_df(X, G, 0.7) == pytest.approx(np.trace(hat), abs=1e-12)


def test_df_singular_raises():
    X = np.ones((4, 2))
    with pytest.raises(NumericError):
        effective_df(X, np.zeros((2, 2)), 0.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_df_monotone_in_lambdaG(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(5, 30)), int(rng.integers(1, 5))
    X = rng.standard_normal((n, k))
    A = rng.standard_normal((k, k))
    G = A @ A.T
    dfs = [effective_df(X, G, lg) for lg in (0.0, 0.1, 1.0, 10.0, 100.0)]
    assert all(0 <= d <= min(n, k) + 1e-9 for d in dfs)
    assert all(b <= a + 1e-10 for a, b in zip(dfs, dfs[1:]))


def test_information_criteria():
    aic, bic = information_criteria(4.0, 0, 10)
    assert aic == bic == pytest.approx(10 * math.log(0.4))
    a1, b1 = information_criteria(4.0, 3, 10)
    a2, b2 = information_criteria(4.0, 6, 10)
    assert a2 - a1 == pytest.approx(6.0)
    assert b2 - b1 == pytest.approx(3 * math.log(10))
    assert b1 > a1
    with pytest.raises(NumericError):
        information_criteria(0.0, 1, 10)
    with pytest.raises(ParameterError):
        information_criteria(1.0, -1, 10)


def test_model_criteria_lasso_df(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((40, 6)))
    y = Q @ np.array([5.0, -4.0, 3.0, 0, 0, 0]) + 0.1 * rng.standard_normal(40)
    spec = FitSpec(lambda1=1.0, tol=1e-12)
    res = fit(Q, y, spec)
    df, rss, _, _ = model_criteria(Q, y, spec, res)
    assert df == pytest.approx(res.active_set.size, abs=1e-10)
    assert rss == pytest.approx(float(np.sum((y - Q @ res.beta) ** 2)))


def test_rescale():
    y = np.array([1.0, -2.0, 3.0])
    assert rescale(y, 0.5 * y) == pytest.approx(2.0)
    assert rescale(y, y) == pytest.approx(1.0)
    with pytest.raises(NumericError):
        rescale(y, np.zeros(3))


def test_rescale_elastic_net_trend(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((200, 5)))
    y = Q @ np.array([10.0, -8.0, 6.0, 5.0, 7.0])
    kappas = []
    for lam2 in (0.0, 0.5, 1.0):
        b = fit(Q, y, FitSpec(lambda1=0.01, lambda2=lam2, tol=1e-12)).beta
        kappas.append(rescale(y, Q @ b))
    assert kappas[1] == pytest.approx(1.5, rel=1e-2)
    assert kappas[2] == pytest.approx(2.0, rel=1e-2)


# ------------------------------------------------------------------ median


def test_median_examples():
    assert median_aggregate([[0.0], [0.0], [5.0]])[0] == 0.0
    assert median_aggregate([[4.0], [5.0], [6.0]])[0] == 5.0
    b = np.array([1.0, 0.0, -2.0])
    np.testing.assert_array_equal(median_aggregate([b, b, b, b]), b)
    with pytest.raises(ShapeError):
        median_aggregate([[1.0, 2.0], [1.0]])
    with pytest.raises(ShapeError):
        median_aggregate([])


def test_median_even_fold_tie_stays_zero():
    # two of four folds nonzero is not a strict majority
    assert median_aggregate([[0.0], [0.0], [2.0], [4.0]])[0] == 0.0


@settings(max_examples=100)
@given(st.integers(1, 9), st.integers(1, 6), st.integers(0, 2**31))
def test_median_support_property(folds, p, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((folds, p)) * (rng.random((folds, p)) < 0.5)
    out = median_aggregate(list(B))
    support = np.any(B != 0, axis=0)
    assert np.all(support[out != 0])
    assert np.all(2 * (B[:, out != 0] != 0).sum(axis=0) > folds)


# ------------------------------------------------------------------ binomial


def test_binomial_table_values():
    p216 = exact_binomial_pvalue(216, 322)
    assert 8.6e-10 / 3 <= p216 <= 8.6e-10 * 3
    p212 = exact_binomial_pvalue(212, 322)
    assert 2.7e-8 / 3 <= p212 <= 2.7e-8 * 3


def test_binomial_half():
    assert exact_binomial_pvalue(161, 322, alternative="greater") == pytest.approx(
        _direct_pvalue(161, 322, "greater"), rel=1e-12)
    assert 0.5 < exact_binomial_pvalue(161, 322, alternative="greater") < 0.53


def test_binomial_all_successes():
    assert exact_binomial_pvalue(40, 40, alternative="greater") == pytest.approx(0.5**40, rel=1e-12)
    assert exact_binomial_pvalue(40, 40) == pytest.approx(2 * 0.5**40, rel=1e-12)


def test_binomial_errors():
    with pytest.raises(ParameterError):
        exact_binomial_pvalue(5, 4)
    with pytest.raises(ParameterError):
        exact_binomial_pvalue(2, 4, p0=1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 500).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))),
       st.sampled_from(["greater", "less", "two-sided"]))
def test_binomial_matches_direct_sum(sn, alternative):
    s, n = sn
    expected = _direct_pvalue(s, n, alternative)
    assert exact_binomial_pvalue(s, n, alternative=alternative) == pytest.approx(expected, rel=1e-12)


# ------------------------------------------------------------------ plans


def test_loso_plan():
    groups = np.repeat(np.arange(25), 3)
    plan = make_cv_plan(groups, k=1)
    assert len(plan) == 25
    assert sorted(t[0] for _, t in plan.folds) == list(range(25))
    for train, test in plan.folds:
        assert len(train) == 24 and not set(train) & set(test)


def test_l5so_plan():
    plan = make_cv_plan(np.arange(25), k=5, n_folds=25, seed=4)
    assert len(plan) == 25
    assert len({t for _, t in plan.folds}) == 25
    for train, test in plan.folds:
        assert len(test) == 5 and len(train) == 20 and not set(train) & set(test)
    assert plan == make_cv_plan(np.arange(25), k=5, n_folds=25, seed=4)


def test_plan_errors():
    with pytest.raises(PlanError):
        make_cv_plan([0, 1, 2], k=3)
    with pytest.raises(PlanError):
        make_cv_plan([0, 1, 2, 3], k=2, n_folds=7)


# ------------------------------------------------------------------ grid


def test_full_grid():
    grid = full_grid()
    assert len(grid) == 90 * 5 * 6 * 10 * 3
    assert {g.lambda1 for g in grid} == set(float(v) for v in range(10, 100))
    assert {g.lambdaG for g in grid} == {0.0, 1e1, 1e2, 1e3, 1e4, 1e5}
    assert {g.shift for g in grid} == {0.0, 1.0, 1e2, 1e3, 1e4}
    assert {g.delta for g in grid} == {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 1.0, 2.0, 10.0, 100.0}
    assert {g.lambda1_star for g in grid} == {1.0, 0.1, 0.01}


def _grouped(rng, groups=5, per=30, p=6):
    g = np.repeat(np.arange(groups), per)
    y = np.where(rng.random(g.size) < 0.4, 1.0, -1.0)
    for k in range(groups):
        y[k * per:k * per + 2] = (1.0, -1.0)
    X = rng.standard_normal((g.size, p)) + 0.8 * y[:, None] * (np.arange(p) < 2)
    return X, y, g


def test_single_point_grid_is_plain_cv(rng):
    X, y, g = _grouped(rng)
    plan = make_cv_plan(g, k=1)
    point = GridPoint(0.05, lambdaG=1.0, shift=0.1)
    rep = grid_search(X, y, g, plan, [point], "graphnet", graph=identity_graph(6), resample=False)
    accs = []
    for train, test in plan.folds:
        tr, te = np.isin(g, train), np.isin(g, test)
        spec = classify.variant_spec("graphnet", 6, 0.05, lambdaG=1.0, lambda2=0.1, graph=identity_graph(6))
        m = classify.fit_spda(X[tr], y[tr], spec)
        accs.append(classify.accuracy(m, X[te], y[te]))
    assert rep.median_test_acc == pytest.approx(float(np.median(accs)))
    assert [f["test_acc"] for f in rep.folds] == pytest.approx(accs)
    assert len(rep.rate_surface) == 1


@pytest.mark.parametrize("variant", classify.VARIANTS)
def test_grid_search_variants(rng, variant, tmp_path):
    X, y, g = _grouped(rng)
    plan = make_cv_plan(g, k=2, n_folds=4, seed=1)
    grid = [GridPoint(l1, lg, 0.5, 0.5, 0.1) for l1 in (0.3, 0.1) for lg in (0.0, 1.0)]
    rep = grid_search(X, y, g, plan, grid, variant, graph=identity_graph(6), per_class=10,
                      X_oos=X[:40], y_oos=y[:40])
    assert len(rep.rate_surface) == len(grid)
    assert rep.median_beta.shape == (6,)
    assert 0 <= rep.oos["accuracy"] <= 1
    write_report(rep, tmp_path)
    data = json.loads((tmp_path / "cv_report.json").read_text())
    for key in ("fold", "train_acc", "test_acc", "grid", "median_beta_file"):
        assert key in data
    assert len((tmp_path / "cv_rate_surface.csv").read_text().splitlines()) == len(grid) + 1


def test_grid_search_threads_deterministic(rng):
    X, y, g = _grouped(rng)
    plan = make_cv_plan(g, k=1)
    grid = [GridPoint(l1, 1.0) for l1 in (0.2, 0.1, 0.05)]
    a = grid_search(X, y, g, plan, grid, "robust", graph=identity_graph(6), per_class=10, threads=1)
    b = grid_search(X, y, g, plan, grid, "robust", graph=identity_graph(6), per_class=10, threads=4)
    assert a.to_json() == b.to_json()


def test_grid_failure_recorded(rng, monkeypatch):
    X, y, g = _grouped(rng)
    real = classify.fit_classifier_path

    def flaky(X, labels, specs, variant, strict=True):
        out = real(X, labels, specs, variant, strict)
        return [NumericError("boom") if s.lambda1 == 0.3 else m for s, m in zip(specs, out)]

    monkeypatch.setattr(classify, "fit_classifier_path", flaky)
    rep = grid_search(X, y, g, make_cv_plan(g), [GridPoint(0.3), GridPoint(0.1)], "graphnet", resample=False)
    assert "NumericError" in rep.grid[0]["error"] and math.isnan(rep.grid[0]["median_rate"])
    assert "error" not in rep.grid[1]
    assert rep.best == GridPoint(0.1)


def test_all_points_failing_raises(rng):
    X, y, g = _grouped(rng)
    X[:, 3] = 1.0
    with pytest.raises(GraphNetError, match="every grid point failed"):
        grid_search(X, y, g, make_cv_plan(g), [GridPoint(0.1)], "graphnet", resample=False)


def test_empty_grid(rng):
    X, y, g = _grouped(rng)
    with pytest.raises(ParameterError):
        grid_search(X, y, g, make_cv_plan(g), [], "graphnet")


def test_evaluate_oos_counts(rng):
    X = rng.standard_normal((30, 2))
    y = np.where(np.arange(30) < 10, 1.0, -1.0)
    out = evaluate_oos(np.zeros(2), -1.0, X, y)
    assert out["n"] == 20 and out["correct"] == 10
    assert out["p_value"] == pytest.approx(1.0)
