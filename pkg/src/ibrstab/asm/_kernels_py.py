"""Reference implementation of the SVM kernels in numpy.

Same contract as the compiled module; used when the extension is not built
or IBRSTAB_PURE_PYTHON is set.
"""
from __future__ import annotations

import numpy as np

TAU = 1e-12


def rbf_matrix(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    # exact differences, summed in coordinate order like the compiled kernel
    d2 = np.zeros((X.shape[0], Y.shape[0]))
    for k in range(X.shape[1]):
        t = X[:, k, None] - Y[None, :, k]
        d2 += t * t
    d2 *= -gamma
    return np.exp(d2, out=d2)


def rbf_decision(Xq: np.ndarray, sv: np.ndarray, coef: np.ndarray, bias: float, gamma: float) -> np.ndarray:
    out = np.empty(Xq.shape[0])
    step = 4096
    for k in range(0, Xq.shape[0], step):
        out[k:k + step] = rbf_matrix(Xq[k:k + step], sv, gamma) @ coef + bias
    return out


def _select(y, G, alpha, C, K, tol):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    score = -y * G
    if not up.any() or not low.any():
        return -1, -1, 0.0
    su = np.where(up, score, -np.inf)
    i = int(np.argmax(su))
    gmax = su[i]
    gmin = np.min(np.where(low, score, np.inf))
    if gmax - gmin < tol:
        return -1, -1, gmax - gmin
    b = gmax - score
    a = K[i, i] + np.diag(K) - 2.0 * K[i]
    a = np.where(a > 0, a, TAU)
    cand = low & (b > 0)
    obj = np.where(cand, -(b * b) / a, np.inf)
    j = int(np.argmin(obj))
    return i, j, gmax - gmin


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int):
    """C-SVC dual by SMO with second-order working-set selection.

    Returns (alpha, bias, iterations, converged); the decision function is
    sum_i alpha_i y_i K(x_i, x) + bias.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    converged = False
    while it < max_iter:
        i, j, _ = _select(y, G, alpha, C, K, tol)
        if i < 0:
            converged = True
            break
        ai, aj = alpha[i], alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        di, dj = ni - ai, nj - aj
        alpha[i], alpha[j] = ni, nj
        G += y * (K[:, i] * (y[i] * di) + K[:, j] * (y[j] * dj))
        it += 1
    return alpha, _bias(y, G, alpha, C), it, converged


def _bias(y, G, alpha, C):
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(np.cumsum(yG[free])[-1]) / int(free.sum())  # sequential sum, as compiled
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        ub = np.min(yG[up]) if up.any() else np.inf
        lb = np.max(yG[low]) if low.any() else -np.inf
        if not np.isfinite(ub):
            ub = lb
        if not np.isfinite(lb):
            lb = ub
        rho = 0.5 * (ub + lb)
    return float(-rho)
