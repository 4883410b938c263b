"""Degrees of freedom, information criteria, rescaling and significance."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, logsumexp

from ..errors import NumericError, ParameterError, ShapeError


def effective_df(X_active, G_active, lambdaG) -> float:
    """Trace of the hat matrix ``X_A (X_A'X_A + lambdaG G_A)^-1 X_A'``."""
    XA = np.atleast_2d(np.asarray(X_active, dtype=float))
    k = XA.shape[1]
    if k == 0:
        return 0.0
    G = np.asarray(G_active.toarray() if hasattr(G_active, "toarray") else G_active, dtype=float)
    if G.shape != (k, k):
        raise ShapeError(f"G_active must be {k}x{k}, got {G.shape}")
    gram = XA.T @ XA
    M = gram + lambdaG * G
    try:
        c = np.linalg.cond(M)
    except np.linalg.LinAlgError:
        c = np.inf
    if not np.isfinite(c) or c > 1e13:
        raise NumericError("regularised Gram matrix of the active set is singular")
    # tr(X (X'X + Q)^-1 X') = tr((X'X + Q)^-1 X'X)
    return float(np.trace(np.linalg.solve(M, gram)))


def information_criteria(rss, df, n):
    """Gaussian-likelihood ``(AIC, BIC)``: ``n ln(RSS/n) + {2, ln n} * df``."""
    if df < 0 or n <= 0:
        raise ParameterError("need df >= 0 and n > 0")
    if not rss > 0:
        raise NumericError("residual sum of squares must be positive")
    base = n * math.log(rss / n)
    return base + 2.0 * df, base + math.log(n) * df


def rescale(y, yhat) -> float:
    """Least-squares factor ``kappa`` in ``y ~ kappa * yhat`` (no intercept)."""
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    denom = float(yhat @ yhat)
    if denom == 0:
        raise NumericError("cannot rescale: fitted values are all zero")
    return float(yhat @ y) / denom


def median_aggregate(fold_betas) -> np.ndarray:
    """Element-wise median of fold coefficient vectors.

    A coefficient is kept only when it is nonzero in strictly more than half
    of the folds; with an even fold count the plain median could otherwise
    average a zero with a nonzero middle value.
    """
    rows = [np.asarray(b, dtype=float).ravel() for b in fold_betas]
    if not rows:
        raise ShapeError("need at least one fold")
    if len({r.size for r in rows}) != 1:
        raise ShapeError("fold coefficient vectors differ in length")
    B = np.vstack(rows)
    med = np.median(B, axis=0)
    majority = (B != 0).sum(axis=0) * 2 > B.shape[0]
    return np.where(majority, med, 0.0)


def _binom_logpmf(k, n, p0):
    k = np.asarray(k, dtype=float)
    return (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
            + k * math.log(p0) + (n - k) * math.log1p(-p0))


def exact_binomial_pvalue(successes, trials, p0=0.5, alternative="two-sided") -> float:
    """Exact binomial test of ``successes`` out of ``trials`` against ``p0``.

    ``alternative="greater"`` gives ``P(K >= successes)``; ``"two-sided"``
    sums every outcome no more likely than the observed one.  Sums are
    taken in log space.
    """
    if not 0 <= successes <= trials:
        raise ParameterError("need 0 <= successes <= trials")
    if not 0 < p0 < 1:
        raise ParameterError("p0 must lie strictly between 0 and 1")
    n, s = int(trials), int(successes)
    ks = np.arange(n + 1)
    logpmf = _binom_logpmf(ks, n, p0)
    if alternative == "greater":
        logp = logsumexp(logpmf[s:])
    elif alternative == "less":
        logp = logsumexp(logpmf[:s + 1])
    elif alternative == "two-sided":
        # same relative slack as the usual implementations, so ties count
        keep = logpmf <= logpmf[s] + math.log1p(1e-7)
        logp = logsumexp(logpmf[keep])
    else:
        raise ParameterError(f"unknown alternative {alternative!r}")
    return float(min(1.0, math.exp(logp)))
