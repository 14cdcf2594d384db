# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the O(n^2) hot loops and training inner ops.

Semantics must match landau._backend._numpy exactly (up to floating-point
summation order); the test suite checks both backends against naive
reference loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, pow, sqrt

cnp.import_array()

DEF DMAX = 32

ctypedef fused floating:
    float
    double


def velocity_pairwise(const double[:, ::1] pos, const double[:, ::1] sc, double gamma,
                      double bconst):
    """Pairwise collision-kernel velocity sum.

    v_i = -(B/n) sum_j |z|^gamma (|z|^2 I - z z^T)(s_i - s_j),  z = X_i - X_j.

    The j-accumulation is sequential in ascending j for every i, so results
    are bit-reproducible. Returns (velocities, min nonzero pair distance^2).
    """
    cdef Py_ssize_t n = pos.shape[0], d = pos.shape[1]
    cdef cnp.ndarray[double, ndim=2] out_arr = np.zeros((n, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double r2, zw, coef, z, w, scale = -bconst / n
    cdef double a0, a1, a2
    cdef double min_r2 = np.inf
    cdef double xi[DMAX]
    cdef double si[DMAX]
    cdef double dz[DMAX]
    cdef double dw[DMAX]
    cdef double acc[DMAX]
    if d > DMAX:
        raise ValueError("dimension %d exceeds compiled kernel limit %d" % (d, DMAX))
    if d == 3:
        for i in range(n):
            a0 = 0.0; a1 = 0.0; a2 = 0.0
            for j in range(n):
                z = pos[i, 0] - pos[j, 0]; r2 = z * z
                z = pos[i, 1] - pos[j, 1]; r2 += z * z
                z = pos[i, 2] - pos[j, 2]; r2 += z * z
                if r2 == 0.0:
                    continue
                if r2 < min_r2:
                    min_r2 = r2
                zw = ((pos[i, 0] - pos[j, 0]) * (sc[i, 0] - sc[j, 0])
                      + (pos[i, 1] - pos[j, 1]) * (sc[i, 1] - sc[j, 1])
                      + (pos[i, 2] - pos[j, 2]) * (sc[i, 2] - sc[j, 2]))
                if gamma == 0.0:
                    coef = 1.0
                elif gamma == -3.0:
                    coef = 1.0 / (r2 * sqrt(r2))
                else:
                    coef = pow(r2, 0.5 * gamma)
                a0 += coef * (r2 * (sc[i, 0] - sc[j, 0]) - zw * (pos[i, 0] - pos[j, 0]))
                a1 += coef * (r2 * (sc[i, 1] - sc[j, 1]) - zw * (pos[i, 1] - pos[j, 1]))
                a2 += coef * (r2 * (sc[i, 2] - sc[j, 2]) - zw * (pos[i, 2] - pos[j, 2]))
            out[i, 0] = scale * a0
            out[i, 1] = scale * a1
            out[i, 2] = scale * a2
    else:
        for i in range(n):
            for k in range(d):
                xi[k] = pos[i, k]
                si[k] = sc[i, k]
                acc[k] = 0.0
            for j in range(n):
                r2 = 0.0
                zw = 0.0
                for k in range(d):
                    dz[k] = xi[k] - pos[j, k]
                    dw[k] = si[k] - sc[j, k]
                    r2 += dz[k] * dz[k]
                    zw += dz[k] * dw[k]
                if r2 == 0.0:
                    continue
                if r2 < min_r2:
                    min_r2 = r2
                if gamma == 0.0:
                    coef = 1.0
                elif gamma == -3.0:
                    coef = 1.0 / (r2 * sqrt(r2))
                else:
                    coef = pow(r2, 0.5 * gamma)
                for k in range(d):
                    acc[k] += coef * (r2 * dw[k] - zw * dz[k])
            for k in range(d):
                out[i, k] = scale * acc[k]
    return out_arr, min_r2


def blob_scores(const double[:, ::1] pos, double eps, double cache_limit_bytes=4e8):
    """Kernel-regularized entropy score at every particle.

    s_i = -(1/eps) sum_k z_ik E_ik (1/r_i + 1/r_k) with E = exp(-|z|^2/(2 eps))
    and r_i = sum_k E_ik (self term included). Returns (scores, r).

    Pair exponentials are computed once per unordered pair; the E matrix is
    cached when it fits under cache_limit_bytes (results are identical either
    way).
    """
    cdef Py_ssize_t n = pos.shape[0], d = pos.shape[1]
    cdef cnp.ndarray[double, ndim=2] acc_arr = np.zeros((n, d))
    cdef cnp.ndarray[double, ndim=1] r_arr = np.zeros(n)
    cdef double[:, ::1] acc = acc_arr
    cdef double[::1] r = r_arr
    cdef double[:, ::1] E
    cdef cnp.ndarray[double, ndim=1] g_arr
    cdef double[::1] g
    cdef Py_ssize_t i, j, k
    cdef double r2, e, t, z, inv2e = 0.5 / eps, inv_eps = 1.0 / eps
    cdef bint cached = (<double> n) * n * 8.0 <= cache_limit_bytes
    if d > DMAX:
        raise ValueError("dimension %d exceeds compiled kernel limit %d" % (d, DMAX))
    if eps <= 0.0:
        raise ValueError("bandwidth must be positive")
    if cached:
        E = np.empty((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                z = pos[i, k] - pos[j, k]
                r2 += z * z
            e = exp(-r2 * inv2e)
            if cached:
                E[i, j] = e
            r[i] += e
            r[j] += e
    for i in range(n):
        r[i] += 1.0
    g_arr = 1.0 / r_arr
    g = g_arr
    for i in range(n):
        for j in range(i + 1, n):
            if cached:
                e = E[i, j]
            else:
                r2 = 0.0
                for k in range(d):
                    z = pos[i, k] - pos[j, k]
                    r2 += z * z
                e = exp(-r2 * inv2e)
            t = e * (g[i] + g[j])
            for k in range(d):
                z = (pos[i, k] - pos[j, k]) * t
                acc[i, k] += z
                acc[j, k] -= z
    acc_arr *= -inv_eps
    return acc_arr, r_arr


def kde_sum(const double[:, ::1] wq, const double[:, ::1] wx):
    """sum_k exp(-0.5 |wq_i - wx_k|^2) for whitened queries/points."""
    cdef Py_ssize_t m = wq.shape[0], n = wx.shape[0], d = wq.shape[1]
    cdef cnp.ndarray[double, ndim=1] out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double r2, z, s
    cdef double qi[DMAX]
    if d > DMAX:
        raise ValueError("dimension %d exceeds compiled kernel limit %d" % (d, DMAX))
    for i in range(m):
        for k in range(d):
            qi[k] = wq[i, k]
        s = 0.0
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                z = qi[k] - wx[j, k]
                r2 += z * z
            s += exp(-0.5 * r2)
        out[i] = s
    return out_arr


def softsign_forward(floating[:, ::1] Z, floating[:, ::1] A):
    """A = Z / (1 + |Z|), elementwise."""
    cdef Py_ssize_t i, j
    cdef floating z
    for i in range(Z.shape[0]):
        for j in range(Z.shape[1]):
            z = Z[i, j]
            A[i, j] = z / (1.0 + abs(z))


def softsign_backward(floating[:, ::1] A, floating[:, ::1] dA,
                      floating[:, ::1] dZ):
    """dZ = dA * (1 - |A|)^2 (softsign derivative expressed via its output)."""
    cdef Py_ssize_t i, j
    cdef floating t
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            t = 1.0 - abs(A[i, j])
            dZ[i, j] = dA[i, j] * t * t


def adam_update(floating[::1] p, floating[::1] g, floating[::1] m,
                floating[::1] v, double lr, double beta1, double beta2,
                double damp, double bc1, double bc2):
    """One Adam step on a flat parameter block; moments updated in place."""
    cdef Py_ssize_t i
    cdef double mi, vi
    for i in range(p.shape[0]):
        mi = beta1 * m[i] + (1.0 - beta1) * g[i]
        vi = beta2 * v[i] + (1.0 - beta2) * (<double> g[i]) * g[i]
        m[i] = <floating> mi
        v[i] = <floating> vi
        p[i] = <floating> (p[i] - lr * (mi / bc1) / (sqrt(vi / bc2) + damp))


def polar_fill(double[::1] out, Py_ssize_t start, const double[::1] u1,
               const double[::1] u2):
    """Fill out[start:] with standard normals via the Marsaglia polar method.

    Consumes uniform pairs (u1[t], u2[t]) in order; accepted pairs yield two
    consecutive normals. Returns (new_fill_position, pairs_consumed).
    """
    cdef Py_ssize_t need = out.shape[0], npairs = u1.shape[0]
    cdef Py_ssize_t pos = start, t = 0
    cdef double a, b, s, f
    while pos < need and t < npairs:
        a = 2.0 * u1[t] - 1.0
        b = 2.0 * u2[t] - 1.0
        t += 1
        s = a * a + b * b
        if s >= 1.0 or s == 0.0:
            continue
        f = sqrt(-2.0 * log(s) / s)
        out[pos] = a * f
        pos += 1
        if pos < need:
            out[pos] = b * f
            pos += 1
    return pos, t
