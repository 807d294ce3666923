# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SVM kernels: RBF Gram/decision evaluation and the SMO solver."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()

cdef double TAU = 1e-12


cdef void _sqdist(const double[:, ::1] x, const double[:, ::1] yv, double[:, ::1] o,
                  double scale) noexcept nogil:
    cdef Py_ssize_t i, j, k, n = x.shape[0], m = yv.shape[0], d = x.shape[1]
    cdef double s, t
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = x[i, k] - yv[j, k]
                s += t * t
            o[i, j] = scale * s


def rbf_matrix(X, Y, double gamma):
    # exact differences here, vectorized exp in numpy
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] yv = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty((x.shape[0], yv.shape[0]), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        _sqdist(x, yv, o, -gamma)
    return np.exp(out, out=out)


def rbf_decision(Xq, sv, coef, double bias, double gamma):
    cdef const double[:, ::1] x = np.ascontiguousarray(Xq, dtype=np.float64)
    cdef const double[:, ::1] v = np.ascontiguousarray(sv, dtype=np.float64)
    c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = v.shape[0], step = 4096, k0, k1
    out = np.empty(n, dtype=np.float64)
    buf = np.empty((min(step, n), m), dtype=np.float64)
    cdef double[:, ::1] b
    for k0 in range(0, n, step):
        k1 = min(k0 + step, n)
        b = buf[: k1 - k0]
        with nogil:
            _sqdist(x[k0:k1], v, b, -gamma)
        blk = np.exp(buf[: k1 - k0], out=buf[: k1 - k0])
        out[k0:k1] = blk @ c + bias
    return out


cdef inline bint in_up(double y, double a, double C) nogil:
    return (y > 0 and a < C) or (y < 0 and a > 0)


cdef inline bint in_low(double y, double a, double C) nogil:
    return (y > 0 and a > 0) or (y < 0 and a < C)


def smo_solve(K, y, double C, double tol, long max_iter):
    """C-SVC dual by SMO with second-order working-set selection.

    Returns (alpha, bias, iterations, converged); the decision function is
    sum_i alpha_i y_i K(x_i, x) + bias.
    """
    cdef const double[:, ::1] k = np.ascontiguousarray(K, dtype=np.float64)
    cdef const double[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yy.shape[0]
    alpha_arr = np.zeros(n, dtype=np.float64)
    G_arr = -np.ones(n, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = G_arr
    cdef long it = 0
    cdef bint converged = False
    cdef Py_ssize_t t, i, j
    cdef double gmax, gmin, sc, b, a, obj, best, quad, delta, diff, total
    cdef double ai, aj, ni, nj, di, dj
    with nogil:
        while it < max_iter:
            gmax = -INFINITY
            gmin = INFINITY
            i = -1
            for t in range(n):
                sc = -yy[t] * G[t]
                if in_up(yy[t], alpha[t], C) and sc > gmax:
                    gmax = sc
                    i = t
                if in_low(yy[t], alpha[t], C) and sc < gmin:
                    gmin = sc
            if i < 0 or gmin == INFINITY or gmax - gmin < tol:
                converged = True
                break
            j = -1
            best = INFINITY
            for t in range(n):
                if not in_low(yy[t], alpha[t], C):
                    continue
                b = gmax + yy[t] * G[t]
                if b <= 0:
                    continue
                a = k[i, i] + k[t, t] - 2.0 * k[i, t]
                if a <= 0:
                    a = TAU
                obj = -(b * b) / a
                if obj < best:
                    best = obj
                    j = t
            ai = alpha[i]
            aj = alpha[j]
            quad = k[i, i] + k[j, j] - 2.0 * k[i, j]
            if quad <= 0:
                quad = TAU
            if yy[i] != yy[j]:
                delta = (-G[i] - G[j]) / quad
                diff = ai - aj
                ni = ai + delta
                nj = aj + delta
                if diff > 0:
                    if nj < 0:
                        nj = 0.0
                        ni = diff
                elif ni < 0:
                    ni = 0.0
                    nj = -diff
                if diff > 0:
                    if ni > C:
                        ni = C
                        nj = C - diff
                elif nj > C:
                    nj = C
                    ni = C + diff
            else:
                delta = (G[i] - G[j]) / quad
                total = ai + aj
                ni = ai - delta
                nj = aj + delta
                if total > C:
                    if ni > C:
                        ni = C
                        nj = total - C
                elif nj < 0:
                    nj = 0.0
                    ni = total
                if total > C:
                    if nj > C:
                        nj = C
                        ni = total - C
                elif ni < 0:
                    ni = 0.0
                    nj = total
            di = ni - ai
            dj = nj - aj
            alpha[i] = ni
            alpha[j] = nj
            for t in range(n):
                G[t] += yy[t] * (k[t, i] * (yy[i] * di) + k[t, j] * (yy[j] * dj))
            it += 1
    return alpha_arr, _bias(yy, G, alpha, C), it, bool(converged)


cdef double _bias(const double[::1] y, double[::1] G, double[::1] alpha, double C):
    cdef Py_ssize_t t, n = y.shape[0], nfree = 0
    cdef double yg, s = 0.0, ub = INFINITY, lb = -INFINITY
    for t in range(n):
        yg = y[t] * G[t]
        if 0 < alpha[t] < C:
            nfree += 1
            s += yg
        else:
            if in_up(y[t], alpha[t], C) and yg < ub:
                ub = yg
            if in_low(y[t], alpha[t], C) and yg > lb:
                lb = yg
    if nfree > 0:
        return -s / nfree
    if ub == INFINITY:
        ub = lb
    if lb == -INFINITY:
        lb = ub
    return -0.5 * (ub + lb)
