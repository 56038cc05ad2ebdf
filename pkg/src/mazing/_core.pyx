# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: dual coordinate solvers and inversion counting."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

ctypedef unsigned long long u64


cdef inline u64 _xorshift(u64 *s) noexcept nogil:
    cdef u64 x = s[0]
    x ^= x << 13
    x ^= x >> 7
    x ^= x << 17
    s[0] = x
    return x


cdef inline double _violation(double g, double a, double u) noexcept nogil:
    if a <= 0.0:
        return g if g > 0.0 else 0.0
    if a >= u:
        return -g if g < 0.0 else 0.0
    return fabs(g)


def linear_dual_cd(double[:, ::1] Z, double[::1] U, double tol, long max_passes, u64 seed):
    """Maximise sum(a) - |sum_k a_k z_k|^2 / 2 over 0 <= a <= U by coordinate ascent in shuffled order."""
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1]
    cdef Py_ssize_t i, j, k, t
    cdef double[::1] a = np.zeros(n)
    cdef double[::1] w = np.zeros(d)
    cdef double[::1] qkk = np.empty(n)
    cdef Py_ssize_t[::1] perm = np.arange(n, dtype=np.intp)
    cdef double g, s, new, delta, resid = 0.0, sa, ww
    cdef u64 state = seed if seed != 0 else 0x9E3779B97F4A7C15ULL
    cdef long passes = 0
    history = []
    for k in range(n):
        s = 0.0
        for j in range(d):
            s += Z[k, j] * Z[k, j]
        qkk[k] = s
    while passes < max_passes:
        for i in range(n - 1, 0, -1):
            j = <Py_ssize_t>(_xorshift(&state) % <u64>(i + 1))
            t = perm[i]
            perm[i] = perm[j]
            perm[j] = t
        for i in range(n):
            k = perm[i]
            s = 0.0
            for j in range(d):
                s += Z[k, j] * w[j]
            g = 1.0 - s
            if qkk[k] <= 1e-12:
                new = U[k] if g > 0.0 else (0.0 if g < 0.0 else a[k])
            else:
                new = a[k] + g / qkk[k]
                if new < 0.0:
                    new = 0.0
                elif new > U[k]:
                    new = U[k]
            delta = new - a[k]
            if delta != 0.0:
                a[k] = new
                for j in range(d):
                    w[j] += delta * Z[k, j]
        passes += 1
        resid = 0.0
        sa = 0.0
        for k in range(n):
            s = 0.0
            for j in range(d):
                s += Z[k, j] * w[j]
            g = _violation(1.0 - s, a[k], U[k])
            if g > resid:
                resid = g
            sa += a[k]
        ww = 0.0
        for j in range(d):
            ww += w[j] * w[j]
        history.append(sa - 0.5 * ww)
        if resid <= tol:
            break
    return np.asarray(a), np.asarray(w), passes, resid, history


def kernel_dual_cd(double[:, ::1] Q, double[::1] U, double tol, long max_passes):
    """Same dual with a precomputed Gram matrix; greedy maximal-violation coordinate steps."""
    cdef Py_ssize_t n = Q.shape[0]
    cdef Py_ssize_t i, k, best, step
    cdef double[::1] a = np.zeros(n)
    cdef double[::1] G = np.ones(n)
    cdef double v, vbest, new, delta, obj
    cdef long passes = 0
    history = []
    vbest = 0.0
    while passes < max_passes:
        for step in range(n):
            best = -1
            vbest = 0.0
            for i in range(n):
                v = _violation(G[i], a[i], U[i])
                if v > vbest:
                    vbest = v
                    best = i
            if best < 0 or vbest <= tol:
                break
            k = best
            if Q[k, k] <= 1e-12:
                new = U[k] if G[k] > 0.0 else 0.0
            else:
                new = a[k] + G[k] / Q[k, k]
                if new < 0.0:
                    new = 0.0
                elif new > U[k]:
                    new = U[k]
            delta = new - a[k]
            a[k] = new
            for i in range(n):
                G[i] -= delta * Q[i, k]
        passes += 1
        obj = 0.0
        vbest = 0.0
        for i in range(n):
            obj += a[i] * (1.0 + G[i])
            v = _violation(G[i], a[i], U[i])
            if v > vbest:
                vbest = v
        history.append(0.5 * obj)
        if vbest <= tol:
            break
    return np.asarray(a), passes, vbest, history


def count_inversions(double[::1] y):
    """Number of pairs i < j with y[i] > y[j] (merge sort)."""
    cdef Py_ssize_t n = y.shape[0]
    cdef double[::1] buf = np.array(y, dtype=np.float64)
    cdef double[::1] tmp = np.empty(n)
    cdef double[::1] src = buf, dst = tmp, sw
    cdef Py_ssize_t width = 1, lo, mid, hi, i, j, k
    cdef long long inv = 0
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    inv += mid - i
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
            lo += 2 * width
        sw = src
        src = dst
        dst = sw
        width *= 2
    return inv
