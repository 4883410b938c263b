"""Active-set coordinate descent for the GraphNet family.

Every variant is reduced to the same penalised least-squares kernel
(:mod:`graphnet._kernels`):

* squared loss: plain GraphNet / Elastic Net / Lasso,
* Huber loss: the ``[X I]`` augmented problem in ``(beta, alpha)``,
  with ``alpha`` soft-thresholded at ``delta``,
* huberized hinge: the ``[diag(y) [1 X], I]`` augmented problem with an
  unpenalised intercept and ``alpha`` eliminated in closed form.

Solvers operate on the matrix they are given; column standardization is
the caller's job (see :mod:`graphnet.classify` and the CLI).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import (DataError, DegenerateColumnError, GraphNetError, LabelError, NumericError, ParameterError,
                     ShapeError)
from .graph import PenaltyGraph
from .losses import huber, huber_grad, huberized_hinge, huberized_hinge_grad, soft_threshold
from .modelsel.criteria import effective_df, information_criteria
from .problem import FitResult, FitSpec, LossKind

log = logging.getLogger(__name__)

__all__ = [
    "INTEGER_LAMBDA1_GRID",
    "LossKind",
    "adaptive_weights",
    "model_criteria",
    "select",
    "coordinate_update_graphnet",
    "default_path",
    "fit",
    "fit_adaptive",
    "fit_graphnet",
    "fit_path",
    "fit_robust_graphnet",
    "fit_svgn",
    "fit_variant_path",
    "kkt_violation",
    "lambda_max",
]

INTEGER_LAMBDA1_GRID = tuple(float(v) for v in range(99, 9, -1))

_STATUS = {
    _kernels.STATUS_CONVERGED: "converged",
    _kernels.STATUS_MAX_SWEEPS: "max_sweeps",
    _kernels.STATUS_DENSITY_CAP: "density_cap",
}


def _as_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ShapeError("X must be two-dimensional")
    if y.size != X.shape[0]:
        raise ShapeError(f"y has {y.size} entries but X has {X.shape[0]} rows")
    return X, y


@dataclass
class _Problem:
    D: np.ndarray
    target: np.ndarray
    c: np.ndarray
    use_c: bool
    scale: float
    alpha_mode: int
    delta: float
    colsq: np.ndarray
    qptr: np.ndarray
    qidx: np.ndarray
    qval: np.ndarray
    qdiag: np.ndarray
    pen: np.ndarray

    @property
    def n(self):
        return self.D.shape[0]

    @property
    def p(self):
        return self.D.shape[1]

    def residual(self, beta, alpha, b0):
        return self.target - self.D @ beta - self.c * b0 - alpha


def _quadratic(spec: FitSpec, p: int):
    G = spec.graph_for(p)
    if G.size != p:
        raise ShapeError(f"graph size {G.size} does not match p={p}")
    qptr, qidx, qval = G.offdiagonal_csr()
    qval = spec.lambdaG * qval
    qdiag = spec.lambdaG * G.diagonal() + spec.lambda2
    return qptr, qidx, qval, np.ascontiguousarray(qdiag, dtype=float)


def _build(X, y, spec: FitSpec) -> _Problem:
    X, y = _as_xy(X, y)
    n, p = X.shape
    loss = spec.loss
    if loss.tag == "hinge":
        labels = np.unique(y)
        if not set(labels.tolist()) <= {-1.0, 1.0}:
            raise LabelError("hinge loss needs labels in {-1, +1}")
        if labels.size < 2:
            raise LabelError("hinge loss needs both classes present")
        D = np.asfortranarray(y[:, None] * X)
        target, c = np.ones(n), y.copy()
        use_c, scale, mode = bool(spec.with_intercept), 1.0 / loss.delta, 2
    else:
        D = np.asfortranarray(X)
        target, c = y.copy(), np.zeros(n)
        use_c, scale = False, 1.0
        mode = 1 if loss.tag == "huber" else 0
    qptr, qidx, qval, qdiag = _quadratic(spec, p)
    colsq = np.einsum("ij,ij->j", D, D)
    pen = spec.l1_weights(p)
    bad = np.flatnonzero((scale * colsq + qdiag <= 0) & np.isfinite(pen))
    if bad.size:
        raise DegenerateColumnError(f"coordinate {int(bad[0])} has no curvature (zero column, no quadratic penalty)")
    return _Problem(D, target, c, use_c, scale, mode, float(loss.delta or 0.0), colsq,
                    qptr, qidx, qval, qdiag, pen)


def _solve(prob: _Problem, spec: FitSpec, warm: FitResult | None = None) -> FitResult:
    n, p = prob.n, prob.p
    beta = np.zeros(p)
    alpha = np.zeros(n)
    b0 = np.zeros(1)
    if warm is not None:
        beta[:] = warm.beta
        beta[np.isinf(prob.pen)] = 0.0
        if warm.alpha is not None and prob.alpha_mode:
            alpha[:] = warm.alpha
        if prob.use_c:
            b0[0] = warm.intercept
    e = prob.residual(beta, alpha, b0[0])
    cap_count = int(math.floor(spec.density_cap * p + 1e-12))
    trace = np.empty(2 * spec.max_sweeps + 2)
    status, sweeps, ntrace, kkt = _kernels.solve(
        prob.D, e, beta, alpha, prob.c, b0, prob.use_c, prob.pen,
        prob.qptr, prob.qidx, prob.qval, prob.qdiag, prob.colsq, prob.scale,
        prob.alpha_mode, prob.delta, float(spec.tol), int(spec.max_sweeps), cap_count, trace,
    )
    status = _STATUS[status]
    if status == "max_sweeps":
        log.warning("coordinate descent hit max_sweeps=%d (kkt=%.3g)", spec.max_sweeps, kkt)
    return FitResult(
        beta=beta,
        alpha=alpha if prob.alpha_mode else None,
        intercept=float(b0[0]),
        objective_trace=trace[:ntrace].copy(),
        sweeps=int(sweeps),
        converged=status == "converged",
        status=status,
        lambda1=float(spec.l1_level),
        kkt=float(kkt),
    )


def _require(spec: FitSpec, tag: str, name: str):
    if spec.loss.tag != tag:
        raise ParameterError(f"{name} needs a {tag!r} loss, got {spec.loss.tag!r}")


# ------------------------------------------------------------- public API


def coordinate_update_graphnet(j, X, y, beta, G: PenaltyGraph, lambda1_j, lambdaG, lambda2=0.0):
    """Exact minimiser of the squared-loss objective along coordinate ``j``.

    Returns ``S(X_j'(y - X_{-j} b_{-j}) - lambdaG sum_{k != j} G_jk b_k, lambda1_j / 2)``
    divided by ``X_j'X_j + lambdaG G_jj + lambda2``.
    """
    X, y = _as_xy(X, y)
    beta = np.asarray(beta, dtype=float)
    xj = X[:, j]
    partial = y - X @ beta + xj * beta[j]
    nbr, w = G.neighbors(j)
    coupling = lambdaG * float(w @ beta[nbr])
    denom = float(xj @ xj) + lambdaG * G.entry(j, j) + lambda2
    if denom <= 0:
        raise DegenerateColumnError(f"coordinate {j} has non-positive curvature")
    return soft_threshold(float(xj @ partial) - coupling, lambda1_j / 2.0) / denom


def fit_graphnet(X, y, spec: FitSpec, warm: FitResult | None = None) -> FitResult:
    """Squared-loss GraphNet (Lasso when ``lambdaG = lambda2 = 0``)."""
    _require(spec, "squared", "fit_graphnet")
    return _solve(_build(X, y, spec), spec, warm)


def fit_robust_graphnet(X, y, spec: FitSpec, warm: FitResult | None = None) -> FitResult:
    """Huber-loss GraphNet solved over the augmented ``(beta, alpha)`` problem."""
    _require(spec, "huber", "fit_robust_graphnet")
    return _solve(_build(X, y, spec), spec, warm)


def fit_svgn(X, y, spec: FitSpec, warm: FitResult | None = None) -> FitResult:
    """Support-vector GraphNet with the huberized hinge loss.

    Classification rule is ``sign(intercept + X @ beta)``; the intercept is
    fitted only when ``spec.with_intercept`` is set.
    """
    _require(spec, "hinge", "fit_svgn")
    return _solve(_build(X, y, spec), spec, warm)


def fit(X, y, spec: FitSpec, warm: FitResult | None = None) -> FitResult:
    return _solve(_build(X, y, spec), spec, warm)


def adaptive_weights(pilot_beta) -> np.ndarray:
    """``1 / |b|`` on the pilot support, ``inf`` (excluded) elsewhere."""
    b = np.abs(np.asarray(pilot_beta, dtype=float))
    if not np.any(b > 0):
        raise DataError("pilot fit has no nonzero coefficients to adapt on")
    with np.errstate(divide="ignore"):
        return np.where(b > 0, 1.0 / b, np.inf)


def fit_adaptive(X, y, spec: FitSpec, pilot: FitResult, lambda1_star: float | None = None) -> FitResult:
    """Reweighted refit with per-coordinate l1 level ``lambda1_star / |pilot_j|``."""
    w = adaptive_weights(pilot.beta)
    level = lambda1_star if lambda1_star is not None else (
        spec.lambda1_star if spec.lambda1_star is not None else spec.lambda1)
    aspec = replace(spec, adaptive_weights=w, lambda1_star=float(level), path=None)
    return fit(X, y, aspec, warm=pilot)


def fit_variant_path(X, y, specs, adaptive: bool = False, strict: bool = True) -> list:
    """Warm-started fits over a sequence of specs, optionally with an adaptive refit.

    For ``adaptive=True`` each spec is first fitted as given (the pilot)
    and then refitted with weights ``1 / |pilot|`` at level
    ``lambda1_star``.  With ``strict=False`` a failing spec contributes
    its exception to the output list and the warm start is reset.
    """
    out = []
    warm = None
    for spec in specs:
        try:
            base = replace(spec, adaptive_weights=None, lambda1_star=None, path=None)
            res = fit(X, y, base, warm)
            warm = res
            if adaptive and np.any(res.beta):
                star = spec.lambda1_star if spec.lambda1_star is not None else spec.lambda1
                res = fit_adaptive(X, y, base, res, lambda1_star=star)
            out.append(res)
        except GraphNetError as exc:
            if strict:
                raise
            out.append(exc)
            warm = None
    return out


def lambda_max(X, y, spec: FitSpec) -> float:
    """Smallest l1 level at which the all-zero ``beta`` is optimal."""
    prob = _build(X, y, spec)
    p = prob.p
    null = replace(prob, pen=np.full(p, np.inf))
    res = _solve(null, replace(spec, max_sweeps=max(spec.max_sweeps, 1000)))
    e = prob.residual(res.beta, res.alpha if res.alpha is not None else np.zeros(prob.n), res.intercept)
    grad = np.abs(prob.scale * (prob.D.T @ e))
    w = spec.adaptive_weights if spec.adaptive_weights is not None else np.ones(p)
    ok = np.isfinite(w)
    if not np.any(ok):
        return 0.0
    return float(np.max(2.0 * grad[ok] / w[ok]))


def default_path(lmax: float, n_lambdas: int = 90, ratio: float = 0.01) -> tuple:
    """Log-spaced descending path from ``lmax`` to ``lmax * ratio``."""
    if lmax <= 0:
        return (0.0,)
    return tuple(np.geomspace(lmax, lmax * ratio, n_lambdas))


def model_criteria(X, y, spec: FitSpec, result: FitResult):
    """Effective df, risk, AIC and BIC of a fitted model.

    df is the hat-matrix trace over the active coefficients (plus one for a
    fitted intercept).  The risk is twice the loss value, which is the RSS
    for the squared loss and its Huber / huberized-hinge analogue otherwise.
    """
    prob = _build(X, y, spec)
    beta = np.asarray(result.beta, dtype=float)
    e = prob.target - prob.D @ beta - prob.c * result.intercept
    loss = spec.loss
    if loss.tag == "squared":
        risk = float(e @ e)
    elif loss.tag == "huber":
        risk = 2.0 * float(np.sum(huber(e, loss.delta)))
    else:
        risk = 2.0 * float(np.sum(huberized_hinge(1.0 - e, loss.delta)))
    A = result.active_set
    cols = [prob.D[:, A]]
    if prob.use_c:
        cols.append(prob.c[:, None])
    Z = np.sqrt(prob.scale) * np.hstack(cols)
    k = Z.shape[1]
    Q = np.zeros((k, k))
    if A.size:
        G = spec.graph_for(prob.p).matrix[A][:, A].toarray()
        Q[:A.size, :A.size] = spec.lambdaG * G + spec.lambda2 * np.eye(A.size)
    try:
        df = effective_df(Z, Q, 1.0)
    except NumericError:
        df = float(min(prob.n, k))
    try:
        aic, bic = information_criteria(risk, df, prob.n)
    except (NumericError, ParameterError):
        aic = bic = np.nan
    return df, risk, aic, bic


def fit_path(X, y, spec: FitSpec, lambdas=None, criterion: str | None = None,
             n_lambdas: int = 90, ratio: float = 0.01, patience: int = 1):
    """Warm-started fits along a descending l1 path.

    The path is ``lambdas``, else ``spec.path``, else :func:`default_path`
    from :func:`lambda_max`.  Fitting stops early when the density cap is
    hit or, if ``criterion`` is ``"aic"`` or ``"bic"``, once that criterion
    has increased ``patience`` times in a row.  For adaptive specs the path
    runs over ``lambda1_star``.
    """
    X, y = _as_xy(X, y)
    if criterion not in (None, "aic", "bic"):
        raise ParameterError(f"unknown criterion {criterion!r}")
    if lambdas is None:
        lambdas = spec.path
    if lambdas is None:
        lambdas = default_path(lambda_max(X, y, spec), n_lambdas, ratio)
    lambdas = tuple(float(v) for v in lambdas)
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ParameterError("lambda1 path must be strictly descending")
    results = []
    warm = None
    best = np.inf
    worse = 0
    for lam in lambdas:
        s = spec.at(lam)
        res = fit(X, y, s, warm)
        if criterion is not None:
            res.df, _, res.aic, res.bic = model_criteria(X, y, s, res)
        results.append(res)
        warm = res
        if res.status == "density_cap":
            break
        if criterion is not None:
            value = getattr(res, criterion)
            if np.isfinite(value) and value >= best:
                worse += 1
                if worse >= patience:
                    break
            elif np.isfinite(value):
                best, worse = value, 0
    return results


def select(results, criterion: str = "bic") -> FitResult:
    """Path member with the smallest finite criterion value."""
    values = np.array([getattr(r, criterion) if getattr(r, criterion) is not None else np.nan
                       for r in results], dtype=float)
    if not np.any(np.isfinite(values)):
        return results[0]
    return results[int(np.nanargmin(values))]


# ------------------------------------------------------------ certificates


def kkt_violation(X, y, spec: FitSpec, result: FitResult) -> float:
    """Largest subgradient-optimality residual of ``result`` on the direct objective.

    Computed from scratch with dense numpy (independent of the kernel's
    running residual).  For robust and hinge losses the check is on the
    loss itself, so it does not depend on the auxiliary variables.
    """
    X, y = _as_xy(X, y)
    n, p = X.shape
    beta = np.asarray(result.beta, dtype=float)
    loss = spec.loss
    G = spec.graph_for(p).matrix
    quad = spec.lambdaG * (G @ beta) + spec.lambda2 * beta
    worst = 0.0
    if loss.tag == "squared":
        g = -X.T @ (y - X @ beta)
    elif loss.tag == "huber":
        g = -X.T @ huber_grad(y - X @ beta, loss.delta)
    else:
        margin = y * (result.intercept + X @ beta)
        dl = huberized_hinge_grad(margin, loss.delta) * y
        g = X.T @ dl
        if spec.with_intercept:
            worst = abs(float(dl.sum()))
    g = g + quad
    pen = spec.l1_weights(p)
    finite = np.isfinite(pen)
    nz = (beta != 0) & finite
    zero = (beta == 0) & finite
    if np.any(nz):
        worst = max(worst, float(np.max(np.abs(g[nz] + pen[nz] * np.sign(beta[nz])))))
    if np.any(zero):
        worst = max(worst, float(np.max(np.maximum(np.abs(g[zero]) - pen[zero], 0.0))))
    return worst
