"""Compiled coordinate-descent kernel shared by every solver variant.

The kernel minimises

    scale/2 ||e||^2 + 1/2 b'Qb + sum_j pen_j |b_j| + h(alpha)
    e = t - D b - c b0 - alpha

where Q is given as a CSR off-diagonal part plus a diagonal, ``alpha_mode``
selects ``h`` (0: no alpha, 1: delta*|alpha|_1, 2: sum max(0, alpha)) and
``use_c`` switches on an unpenalised intercept with column ``c``.  The
residual ``e`` is updated in place.
"""

import numpy as np
from numba import njit

STATUS_CONVERGED = 0
STATUS_MAX_SWEEPS = 1
STATUS_DENSITY_CAP = 2


@njit(cache=True, nogil=True)
def _soft(x, g):
    if x > g:
        return x - g
    if x < -g:
        return x + g
    return 0.0


@njit(cache=True, nogil=True)
def _col_dot(D, j, v):
    acc = 0.0
    for i in range(D.shape[0]):
        acc += D[i, j] * v[i]
    return acc


@njit(cache=True, nogil=True)
def _q_row(j, beta, qptr, qidx, qval):
    acc = 0.0
    for k in range(qptr[j], qptr[j + 1]):
        acc += qval[k] * beta[qidx[k]]
    return acc


@njit(cache=True, nogil=True)
def objective(e, beta, alpha, pen, qptr, qidx, qval, qdiag, scale, alpha_mode, delta):
    val = 0.5 * scale * np.dot(e, e)
    for j in range(beta.shape[0]):
        b = beta[j]
        if b != 0.0:
            val += 0.5 * b * (qdiag[j] * b + _q_row(j, beta, qptr, qidx, qval)) + pen[j] * abs(b)
    if alpha_mode == 1:
        for i in range(alpha.shape[0]):
            val += delta * abs(alpha[i])
    elif alpha_mode == 2:
        for i in range(alpha.shape[0]):
            if alpha[i] > 0.0:
                val += alpha[i]
    return val


@njit(cache=True, nogil=True)
def _update_beta(j, D, e, beta, pen, qptr, qidx, qval, qdiag, colsq, scale):
    old = beta[j]
    if np.isinf(pen[j]):
        new = 0.0
    else:
        rho = scale * (_col_dot(D, j, e) + colsq[j] * old) - _q_row(j, beta, qptr, qidx, qval)
        new = _soft(rho, pen[j]) / (scale * colsq[j] + qdiag[j])
    diff = new - old
    if diff != 0.0:
        for i in range(D.shape[0]):
            e[i] -= D[i, j] * diff
        beta[j] = new
    return abs(diff)


@njit(cache=True, nogil=True)
def _update_aux(e, alpha, c, b0, use_c, cnorm2, alpha_mode, delta):
    maxd = 0.0
    if use_c:
        step = np.dot(c, e) / cnorm2
        if step != 0.0:
            for i in range(e.shape[0]):
                e[i] -= c[i] * step
            b0[0] += step
            maxd = abs(step)
    if alpha_mode == 1:
        for i in range(e.shape[0]):
            u = e[i] + alpha[i]
            a = _soft(u, delta)
            d = abs(a - alpha[i])
            if d > maxd:
                maxd = d
            alpha[i] = a
            e[i] = u - a
    elif alpha_mode == 2:
        for i in range(e.shape[0]):
            u = e[i] + alpha[i]
            if u <= 0.0:
                a = u
            elif u <= delta:
                a = 0.0
            else:
                a = u - delta
            d = abs(a - alpha[i])
            if d > maxd:
                maxd = d
            alpha[i] = a
            e[i] = u - a
    return maxd


@njit(cache=True, nogil=True)
def kkt_violation(D, e, beta, alpha, c, use_c, pen, qptr, qidx, qval, qdiag, scale,
                  alpha_mode, delta, allowed):
    """Largest distance from zero to the subdifferential over all coordinates."""
    worst = 0.0
    if use_c:
        worst = abs(scale * np.dot(c, e))
    for j in range(beta.shape[0]):
        if not allowed[j] or np.isinf(pen[j]):
            continue
        g = -scale * _col_dot(D, j, e) + qdiag[j] * beta[j] + _q_row(j, beta, qptr, qidx, qval)
        if beta[j] > 0.0:
            v = abs(g + pen[j])
        elif beta[j] < 0.0:
            v = abs(g - pen[j])
        else:
            v = max(abs(g) - pen[j], 0.0)
        if v > worst:
            worst = v
    if alpha_mode == 1:
        for i in range(e.shape[0]):
            g = -e[i]
            if alpha[i] > 0.0:
                v = abs(g + delta)
            elif alpha[i] < 0.0:
                v = abs(g - delta)
            else:
                v = max(abs(g) - delta, 0.0)
            if v > worst:
                worst = v
    elif alpha_mode == 2:
        for i in range(e.shape[0]):
            g = -scale * e[i]
            if alpha[i] > 0.0:
                v = abs(g + 1.0)
            elif alpha[i] < 0.0:
                v = abs(g)
            else:
                v = max(g, 0.0) + max(-1.0 - g, 0.0)
            if v > worst:
                worst = v
    return worst


@njit(cache=True, nogil=True)
def solve(D, e, beta, alpha, c, b0, use_c, pen, qptr, qidx, qval, qdiag, colsq, scale,
          alpha_mode, delta, tol, max_sweeps, cap_count, trace):
    """Active-set cyclic coordinate descent.

    Alternates full sweeps over every coordinate (which admit new
    variables) with sweeps restricted to the current nonzero set.  Stops
    once a full sweep moves no coefficient by more than the working
    tolerance *and* the KKT residual is below ``tol``.

    Returns ``(status, sweeps, n_trace, kkt)``.
    """
    p = beta.shape[0]
    cnorm2 = np.dot(c, c) if use_c else 1.0
    allowed = np.ones(p, dtype=np.bool_)
    active = np.empty(p, dtype=np.int64)
    trace[0] = objective(e, beta, alpha, pen, qptr, qidx, qval, qdiag, scale, alpha_mode, delta)
    ntrace = 1
    sweeps = 0
    status = STATUS_MAX_SWEEPS
    work_tol = tol
    kkt = np.inf
    nnz = 0
    for j in range(p):
        if beta[j] != 0.0:
            nnz += 1

    while sweeps < max_sweeps:
        capped = False
        maxd = _update_aux(e, alpha, c, b0, use_c, cnorm2, alpha_mode, delta)
        for j in range(p):
            was_zero = beta[j] == 0.0
            if was_zero and nnz >= cap_count:
                # refuse admission past the density cap, but record whether it wanted in
                if not np.isinf(pen[j]):
                    g = scale * _col_dot(D, j, e) - _q_row(j, beta, qptr, qidx, qval)
                    if abs(g) > pen[j]:
                        capped = True
                        allowed[j] = False
                continue
            d = _update_beta(j, D, e, beta, pen, qptr, qidx, qval, qdiag, colsq, scale)
            if d > maxd:
                maxd = d
            if was_zero and beta[j] != 0.0:
                nnz += 1
            elif not was_zero and beta[j] == 0.0:
                nnz -= 1
        sweeps += 1
        trace[ntrace] = objective(e, beta, alpha, pen, qptr, qidx, qval, qdiag, scale, alpha_mode, delta)
        ntrace += 1

        if maxd < work_tol:
            # refresh the closed-form coordinates so the certificate sees them optimal
            if use_c or alpha_mode != 0:
                _update_aux(e, alpha, c, b0, use_c, cnorm2, alpha_mode, delta)
                trace[ntrace] = objective(e, beta, alpha, pen, qptr, qidx, qval, qdiag, scale,
                                          alpha_mode, delta)
                ntrace += 1
            kkt = kkt_violation(D, e, beta, alpha, c, use_c, pen, qptr, qidx, qval, qdiag,
                                scale, alpha_mode, delta, allowed)
            if kkt <= tol:
                status = STATUS_DENSITY_CAP if capped else STATUS_CONVERGED
                break
            work_tol = max(work_tol * 0.1, 1e-300)
        for j in range(p):
            allowed[j] = True

        na = 0
        for j in range(p):
            if beta[j] != 0.0:
                active[na] = j
                na += 1
        while sweeps < max_sweeps:
            maxd = _update_aux(e, alpha, c, b0, use_c, cnorm2, alpha_mode, delta)
            for k in range(na):
                j = active[k]
                was_zero = beta[j] == 0.0
                d = _update_beta(j, D, e, beta, pen, qptr, qidx, qval, qdiag, colsq, scale)
                if d > maxd:
                    maxd = d
                if was_zero and beta[j] != 0.0:
                    nnz += 1
                elif not was_zero and beta[j] == 0.0:
                    nnz -= 1
            sweeps += 1
            trace[ntrace] = objective(e, beta, alpha, pen, qptr, qidx, qval, qdiag, scale,
                                      alpha_mode, delta)
            ntrace += 1
            if maxd < work_tol:
                break
    return status, sweeps, ntrace, kkt
