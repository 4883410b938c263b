"""Loss kernels, thresholding operators and penalised objectives.

All functions broadcast over numpy arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError
from .graph import PenaltyGraph, graph_penalty_value, zero_graph
from .problem import FitSpec, LossKind  # noqa: F401  (re-exported)


def soft_threshold(x, gamma):
    """``sign(x) * max(|x| - gamma, 0)``."""
    if np.any(np.asarray(gamma) < 0):
        raise ParameterError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - gamma, 0.0)
    return float(out) if out.ndim == 0 else out


def _check_delta(delta):
    if not np.all(np.asarray(delta) > 0):
        raise ParameterError("delta must be positive")


def huber(r, delta):
    _check_delta(delta)
    a = np.abs(np.asarray(r, dtype=float))
    out = np.where(a <= delta, 0.5 * a * a, delta * a - 0.5 * delta * delta)
    return float(out) if out.ndim == 0 else out


def huber_grad(r, delta):
    _check_delta(delta)
    out = np.clip(np.asarray(r, dtype=float), -delta, delta)
    return float(out) if out.ndim == 0 else out


def huberized_hinge(margin, delta):
    """Huberized hinge loss of the margin ``y * yhat``."""
    _check_delta(delta)
    m = np.asarray(margin, dtype=float)
    u = 1.0 - m
    out = np.where(m > 1.0, 0.0, np.where(m > 1.0 - delta, u * u / (2.0 * delta), u - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def huberized_hinge_grad(margin, delta):
    """Derivative with respect to the margin."""
    _check_delta(delta)
    m = np.asarray(margin, dtype=float)
    out = np.where(m > 1.0, 0.0, np.where(m > 1.0 - delta, -(1.0 - m) / delta, -1.0))
    return float(out) if out.ndim == 0 else out


def residual_shrink_H(x, delta):
    """``x - delta`` if ``x < 1`` else ``x``."""
    _check_delta(delta)
    x = np.asarray(x, dtype=float)
    out = np.where(x < 1.0, x - delta, x)
    return float(out) if out.ndim == 0 else out


def hinge_alpha_minimizer(u, delta):
    """Minimiser over ``a`` of ``(u - a)^2 / (2 delta) + max(0, a)``.

    Used to eliminate the auxiliary variables of the hinge problem; the
    minimum value equals ``huberized_hinge(1 - u, delta)``.
    """
    u = np.asarray(u, dtype=float)
    out = np.where(u <= 0.0, u, np.where(u <= delta, 0.0, u - delta))
    return float(out) if out.ndim == 0 else out


def penalty_value(spec: FitSpec, beta, G: PenaltyGraph | None = None) -> float:
    beta = np.asarray(beta, dtype=float)
    p = beta.size
    G = G if G is not None else spec.graph_for(p)
    if G.size != p:
        raise ShapeError(f"graph size {G.size} does not match p={p}")
    quad = 0.5 * spec.lambdaG * graph_penalty_value(G, beta) + 0.5 * spec.lambda2 * float(beta @ beta)
    w = spec.l1_weights(p)
    nz = beta != 0
    if np.any(np.isinf(w[nz])):
        return np.inf
    return quad + float(np.sum(w[nz] * np.abs(beta[nz])))


def objective_value(spec: FitSpec, X, y, G=None, beta=None, alpha=None, intercept=0.0, form="direct"):
    """Full penalised objective of ``spec`` at the given point.

    ``form="direct"`` evaluates the loss itself (squared, Huber or
    huberized hinge).  ``form="augmented"`` evaluates the quadratic
    auxiliary-variable objective in ``(beta, alpha)``; for the squared loss
    both forms coincide and ``alpha`` is ignored.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    beta = np.zeros(p) if beta is None else np.asarray(beta, dtype=float).ravel()
    if beta.size != p or y.size != n:
        raise ShapeError(f"dimension mismatch: X is {X.shape}, y has {y.size}, beta has {beta.size}")
    G = G if G is not None else (spec.graph if spec.graph is not None else zero_graph(p))
    pen = penalty_value(spec, beta, G)
    loss = spec.loss
    if loss.tag == "hinge":
        fit = intercept + X @ beta
    else:
        fit = X @ beta
    if form == "direct" or loss.tag == "squared":
        if loss.tag == "squared":
            return 0.5 * float(np.sum((y - fit) ** 2)) + pen
        if loss.tag == "huber":
            return float(np.sum(huber(y - fit, loss.delta))) + pen
        return float(np.sum(huberized_hinge(y * fit, loss.delta))) + pen
    if form != "augmented":
        raise ValueError(f"unknown objective form {form!r}")
    alpha = np.zeros(n) if alpha is None else np.asarray(alpha, dtype=float).ravel()
    if alpha.size != n:
        raise ShapeError("alpha must have length n")
    if loss.tag == "huber":
        r = y - fit - alpha
        return 0.5 * float(r @ r) + loss.delta * float(np.sum(np.abs(alpha))) + pen
    e = 1.0 - y * fit - alpha
    return float(e @ e) / (2.0 * loss.delta) + float(np.sum(np.maximum(alpha, 0.0))) + pen


def optimal_alpha(spec: FitSpec, X, y, beta, intercept=0.0):
    """Auxiliary variables minimising the augmented objective for fixed ``beta``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    loss = spec.loss
    if loss.tag == "huber":
        r = y - X @ beta
        return np.sign(r) * np.maximum(np.abs(r) - loss.delta, 0.0)
    if loss.tag == "hinge":
        return hinge_alpha_minimizer(1.0 - y * (intercept + X @ beta), loss.delta)
    return np.zeros(y.size)
