"""Pure-Python twins of the compiled kernels in ``_core.pyx``; same algorithms, same results."""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _xorshift(s: int) -> int:
    s ^= (s << 13) & _MASK
    s ^= s >> 7
    s ^= (s << 17) & _MASK
    return s


def _violation(g: float, a: float, u: float) -> float:
    if a <= 0.0:
        return g if g > 0.0 else 0.0
    if a >= u:
        return -g if g < 0.0 else 0.0
    return abs(g)


def linear_dual_cd(Z, U, tol: float, max_passes: int, seed: int):
    Z = np.ascontiguousarray(Z, dtype=float)
    U = np.asarray(U, dtype=float)
    n, d = Z.shape
    ub = U.tolist()
    a = [0.0] * n
    w = np.zeros(d)
    qkk = np.einsum("ij,ij->i", Z, Z).tolist()
    perm = list(range(n))
    state = seed if seed != 0 else 0x9E3779B97F4A7C15
    passes = 0
    resid = 0.0
    history = []
    while passes < max_passes:
        for i in range(n - 1, 0, -1):
            state = _xorshift(state)
            j = state % (i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        for k in perm:
            zk = Z[k]
            g = 1.0 - float(zk @ w)
            if qkk[k] <= 1e-12:
                new = ub[k] if g > 0.0 else (0.0 if g < 0.0 else a[k])
            else:
                new = min(max(a[k] + g / qkk[k], 0.0), ub[k])
            delta = new - a[k]
            if delta != 0.0:
                a[k] = new
                w += delta * zk
        passes += 1
        g_all = 1.0 - Z @ w
        resid = max((_violation(g, ak, u) for g, ak, u in zip(g_all.tolist(), a, ub)), default=0.0)
        history.append(sum(a) - 0.5 * float(w @ w))
        if resid <= tol:
            break
    return np.array(a), w, passes, resid, history


def kernel_dual_cd(Q, U, tol: float, max_passes: int):
    Q = np.ascontiguousarray(Q, dtype=float)
    U = np.asarray(U, dtype=float)
    n = Q.shape[0]
    a = np.zeros(n)
    G = np.ones(n)
    passes = 0
    vbest = 0.0

    def violations():
        v = np.abs(G)
        v[(a <= 0.0) & (G < 0.0)] = 0.0
        v[(a >= U) & (G > 0.0)] = 0.0
        return v

    history = []
    while passes < max_passes:
        for _ in range(n):
            v = violations()
            k = int(np.argmax(v))
            if v[k] <= tol:
                break
            if Q[k, k] <= 1e-12:
                new = U[k] if G[k] > 0.0 else 0.0
            else:
                new = min(max(a[k] + G[k] / Q[k, k], 0.0), U[k])
            delta = new - a[k]
            a[k] = new
            G -= delta * Q[:, k]
        passes += 1
        vbest = float(violations().max()) if n else 0.0
        history.append(0.5 * float(a @ (1.0 + G)))
        if vbest <= tol:
            break
    return a, passes, vbest, history


def count_inversions(y) -> int:
    """Number of pairs i < j with y[i] > y[j] (bottom-up merge sort)."""
    src = [float(v) for v in y]
    n = len(src)
    dst = [0.0] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    inv += mid - i
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            dst[k:k + mid - i] = src[i:mid]
            k += mid - i
            dst[k:k + hi - j] = src[j:hi]
        src, dst = dst, src
        width *= 2
    return inv
