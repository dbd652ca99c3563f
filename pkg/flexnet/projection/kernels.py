"""Compiled inner loops of the projections.

Everything here works on plain float arrays so numba can compile it in
nopython mode. ``mask`` is the K x J capability matrix with 1.0 where
server j can work on task k.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _simplex_cap(values, out):
    """Project ``values`` onto {y >= 0, sum(y) <= 1}."""
    n = values.shape[0]
    total = 0.0
    for i in range(n):
        out[i] = values[i] if values[i] > 0.0 else 0.0
        total += out[i]
    if total <= 1.0:
        return
    # Sum constraint is active: threshold against the sorted values.
    ordered = np.sort(values)[::-1]
    running = 0.0
    theta = 0.0
    for i in range(n):
        running += ordered[i]
        candidate = (running - 1.0) / (i + 1)
        if ordered[i] - candidate > 0.0:
            theta = candidate
    for i in range(n):
        shifted = values[i] - theta
        out[i] = shifted if shifted > 0.0 else 0.0


@njit(cache=True)
def project_lifted_columns(x, mask, out):
    """Exact projection of a K x J matrix onto the per-server capped simplices."""
    K, J = x.shape
    column = np.empty(K)
    capped = np.empty(K)
    for j in range(J):
        n = 0
        for k in range(K):
            if mask[k, j] > 0.0:
                column[n] = x[k, j]
                n += 1
        _simplex_cap(column[:n], capped[:n])
        n = 0
        for k in range(K):
            if mask[k, j] > 0.0:
                out[k, j] = capped[n]
                n += 1
            else:
                out[k, j] = 0.0


@njit(cache=True)
def _gradient_step(x, alpha, mask, point, step, out):
    K, J = point.shape
    for k in range(K):
        residual = x[k]
        for j in range(J):
            residual -= alpha[j] * point[k, j]
        for j in range(J):
            out[k, j] = point[k, j] + step * alpha[j] * residual * mask[k, j]


@njit(cache=True)
def fista_factorized(x, alpha, mask, start, tol, max_iter):
    """Accelerated projected gradient for min sum_k (x_k - sum_j alpha_j P_kj)^2.

    P ranges over the per-server capped simplices. Momentum restarts when
    it points against the last step. Stops when no entry of P moves more
    than ``tol``. Returns (P, iterations, converged, residual) where the
    residual is the norm of the gradient mapping at P.
    """
    K, J = mask.shape
    lipschitz = 0.0
    for k in range(K):
        row = 0.0
        for j in range(J):
            row += alpha[j] * alpha[j] * mask[k, j]
        if row > lipschitz:
            lipschitz = row
    step = 1.0 / lipschitz

    current = np.empty((K, J))
    project_lifted_columns(start, mask, current)
    momentum = current.copy()
    trial = np.empty((K, J))
    following = np.empty((K, J))
    t = 1.0
    iterations = 0
    converged = False
    while iterations < max_iter:
        iterations += 1
        _gradient_step(x, alpha, mask, momentum, step, trial)
        project_lifted_columns(trial, mask, following)
        move = 0.0
        restart = 0.0
        for k in range(K):
            for j in range(J):
                delta = following[k, j] - current[k, j]
                if abs(delta) > move:
                    move = abs(delta)
                restart += (momentum[k, j] - following[k, j]) * delta
        if restart > 0.0:
            t_next = 1.0
            momentum[:, :] = following
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            weight = (t - 1.0) / t_next
            for k in range(K):
                for j in range(J):
                    momentum[k, j] = following[k, j] + weight * (following[k, j] - current[k, j])
        t = t_next
        current[:, :] = following
        if move < tol:
            converged = True
            break

    _gradient_step(x, alpha, mask, current, step, trial)
    project_lifted_columns(trial, mask, following)
    residual = 0.0
    for k in range(K):
        for j in range(J):
            gap = lipschitz * (current[k, j] - following[k, j])
            residual += gap * gap
    return current, iterations, converged, np.sqrt(residual)
