"""Slow reference solvers used to verify the coordinate-descent engine.

Nothing here shares code with :mod:`graphnet.solver` beyond the problem
definition and the loss kernels: the minimisers are proximal gradient,
brute-force sign enumeration and dense linear algebra.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ShapeError
from .graph import lattice_laplacian
from .losses import (
    huber,
    huber_grad,
    huberized_hinge,
    huberized_hinge_grad,
    objective_value,
    soft_threshold,
)
from .problem import FitSpec, LossKind
from .tensor_io import LatticeShape


@dataclass
class OracleResult:
    beta: np.ndarray
    objective: float
    iterations: int
    method: str
    intercept: float = 0.0
    converged: bool = True


def _dense_quadratic(spec: FitSpec, p: int) -> np.ndarray:
    G = spec.graph_for(p).to_dense()
    return spec.lambdaG * G + spec.lambda2 * np.eye(p)


def _smooth(spec: FitSpec, X, y, Q):
    """Value and gradient of loss + 1/2 b'Qb in the stacked variable ``[b0, beta]``."""
    loss = spec.loss

    def f(z):
        b0, beta = z[0], z[1:]
        quad = 0.5 * beta @ Q @ beta
        if loss.tag == "squared":
            r = y - X @ beta
            return 0.5 * r @ r + quad, np.concatenate(([0.0], -X.T @ r + Q @ beta))
        if loss.tag == "huber":
            r = y - X @ beta
            return (float(np.sum(huber(r, loss.delta))) + quad,
                    np.concatenate(([0.0], -X.T @ huber_grad(r, loss.delta) + Q @ beta)))
        m = y * (b0 + X @ beta)
        dl = huberized_hinge_grad(m, loss.delta) * y
        g0 = float(dl.sum()) if spec.with_intercept else 0.0
        return (float(np.sum(huberized_hinge(m, loss.delta))) + quad,
                np.concatenate(([g0], X.T @ dl + Q @ beta)))

    return f


def oracle_prox_gradient(X, y, spec: FitSpec, tol: float = 1e-8, max_iter: int = 500000) -> OracleResult:
    """Accelerated proximal gradient with backtracking and adaptive restart.

    Stops when the gradient-mapping norm falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n * p > 100_000:
        raise ParameterError("oracle is limited to n*p <= 1e5")
    Q = _dense_quadratic(spec, p)
    pen = np.concatenate(([0.0], spec.l1_weights(p)))
    fixed = np.isinf(pen)
    pen = np.where(fixed, 0.0, pen)
    f = _smooth(spec, X, y, Q)

    def prox(v, step):
        out = v.copy()
        out[1:] = soft_threshold(v[1:], step * pen[1:])
        out[fixed] = 0.0
        return out

    def F(z):
        return f(z)[0] + float(np.sum(pen * np.abs(z)))

    z = np.zeros(p + 1)
    w = z.copy()
    t = 1.0
    L = 1.0
    gmap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        fw, gw = f(w)
        while True:
            step = 1.0 / L
            z_new = prox(w - step * gw, step)
            d = z_new - w
            fz = f(z_new)[0]
            if fz <= fw + gw @ d + 0.5 * L * (d @ d) + 1e-14 * max(1.0, abs(fw)):
                break
            L *= 2.0
        gmap = np.linalg.norm(d) * L
        if gmap < tol:
            z = z_new
            break
        if t > 1.0 and F(z_new) > F(z):
            # restart momentum on a non-monotone step
            t = 1.0
            w = z.copy()
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w = z_new + ((t - 1.0) / t_new) * (z_new - z)
        z, t = z_new, t_new
        L = max(L * 0.9, 1e-12)
    beta = z[1:].copy()
    b0 = float(z[0])
    obj = objective_value(spec, X, y, spec.graph_for(p), beta, intercept=b0)
    return OracleResult(beta, obj, it, "prox-grad", b0, bool(gmap < tol))


def oracle_sign_enumeration(X, y, spec: FitSpec) -> OracleResult:
    """Exact squared-loss minimiser by enumerating all ``3^p`` sign patterns."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if p > 12:
        raise ParameterError("sign enumeration is limited to p <= 12")
    if spec.loss.tag != "squared":
        raise ParameterError("sign enumeration handles the squared loss only")
    Q = _dense_quadratic(spec, p)
    pen = spec.l1_weights(p)
    H = X.T @ X + Q
    Xty = X.T @ y
    G = spec.graph_for(p)
    best_obj = objective_value(spec, X, y, G, np.zeros(p))
    best = np.zeros(p)
    count = 0
    for signs in itertools.product((-1.0, 0.0, 1.0), repeat=p):
        s = np.array(signs)
        A = np.flatnonzero(s)
        if A.size == 0 or np.any(np.isinf(pen[A])):
            continue
        count += 1
        rhs = Xty[A] - pen[A] * s[A]
        HA = H[np.ix_(A, A)]
        try:
            bA = np.linalg.solve(HA, rhs)
        except np.linalg.LinAlgError:
            bA = np.linalg.lstsq(HA, rhs, rcond=None)[0]
        if not np.all(np.sign(bA) == s[A]):
            continue
        beta = np.zeros(p)
        beta[A] = bA
        obj = objective_value(spec, X, y, G, beta)
        if obj < best_obj:
            best_obj, best = obj, beta
    return OracleResult(best, float(best_obj), count, "sign-enumeration")


def oracle_lda_direction(X, labels) -> np.ndarray:
    """Binary LDA direction ``S_pooled^-1 (mu_+ - mu_-)``."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels).ravel()
    if X.shape[1] > 50:
        raise ParameterError("LDA oracle is limited to p <= 50")
    pos, neg = X[labels > 0], X[labels <= 0]
    if len(pos) < 2 or len(neg) < 2:
        raise ShapeError("each class needs at least two rows")
    mu_p, mu_n = pos.mean(axis=0), neg.mean(axis=0)
    scatter = (pos - mu_p).T @ (pos - mu_p) + (neg - mu_n).T @ (neg - mu_n)
    S = scatter / (len(X) - 2)
    if np.linalg.matrix_rank(S) < S.shape[0]:
        raise NumericError("pooled covariance is singular")
    return np.linalg.solve(S, mu_p - mu_n)


_FD_LOSSES = {
    "squared": (lambda r, d: 0.5 * r * r, lambda r, d: r),
    "huber": (huber, huber_grad),
    "hinge": (huberized_hinge, huberized_hinge_grad),
}


def finite_difference_gradient_check(loss: LossKind, points, h: float = 1e-6) -> float:
    """Max abs error between central differences and the analytic derivative.

    ``points`` are residuals (squared, Huber) or margins (hinge) and must sit
    more than ``10 h`` away from every branch boundary.
    """
    f, g = _FD_LOSSES[loss.tag]
    x = np.atleast_1d(np.asarray(points, dtype=float))
    d = loss.delta
    if loss.tag == "huber":
        bounds = [d, -d]
    elif loss.tag == "hinge":
        bounds = [1.0, 1.0 - d]
    else:
        bounds = []
    for b in bounds:
        if np.any(np.abs(x - b) <= 10 * h):
            raise ParameterError(f"evaluation point within {10 * h:g} of branch boundary {b:g}")
    fd = (np.asarray(f(x + h, d)) - np.asarray(f(x - h, d))) / (2 * h)
    return float(np.max(np.abs(fd - np.asarray(g(x, d)))))


def objective_gap(main_objective: float, reference_objective: float) -> float:
    """Relative gap ``|a - b| / max(1, |b|)``."""
    return abs(main_objective - reference_objective) / max(1.0, abs(reference_objective))


def random_instance(rng, loss_tag: str = "squared", n_range=(20, 60), p_range=(5, 30)):
    """Small random problem on a random masked lattice graph.

    Columns have unit norm.  ``lambda1`` is drawn as a fraction of the
    level that would zero every coefficient at ``beta = 0``.  Returns
    ``(X, y, spec)``.
    """
    while True:
        dims = (int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 3)))
        if np.prod(dims) >= p_range[0]:
            break
    p = int(rng.integers(p_range[0], min(p_range[1], int(np.prod(dims))) + 1))
    mask = np.zeros(int(np.prod(dims)), dtype=bool)
    mask[rng.choice(mask.size, size=p, replace=False)] = True
    shape = LatticeShape(dims, mask.reshape(dims, order="F"))
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    X = rng.standard_normal((n, p))
    X /= np.linalg.norm(X, axis=0)
    beta = np.zeros(p)
    k = int(rng.integers(1, min(5, p) + 1))
    beta[rng.choice(p, size=k, replace=False)] = rng.normal(0.0, 3.0, size=k)
    y = X @ beta + 0.3 * rng.standard_normal(n)
    if loss_tag == "squared":
        loss = LossKind.squared()
        g0 = y
    elif loss_tag == "huber":
        y[rng.random(n) < 0.1] += rng.normal(0.0, 5.0, size=1)
        loss = LossKind.huber(float(rng.uniform(0.3, 2.0) * np.std(y)))
        g0 = huber_grad(y, loss.delta)
    elif loss_tag == "hinge":
        y = np.where(y >= 0, 1.0, -1.0)
        y[:2] = (1.0, -1.0)
        loss = LossKind.hinge(float(rng.uniform(0.2, 1.0)))
        g0 = y * huberized_hinge_grad(np.zeros(n), loss.delta)
    else:
        raise ParameterError(f"unknown loss {loss_tag!r}")
    top = 2.0 * float(np.max(np.abs(X.T @ g0)))
    lambdaG = 0.0 if rng.random() < 0.25 else float(rng.uniform(0.1, 2.0))
    lambda2 = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.01, 0.5))
    spec = FitSpec(loss=loss, lambda1=float(rng.uniform(0.05, 0.7) * top), lambdaG=lambdaG, lambda2=lambda2,
                   graph=lattice_laplacian(shape), with_intercept=loss_tag == "hinge", tol=1e-9,
                   max_sweeps=200000)
    return X, y, spec
