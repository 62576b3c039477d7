# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: assignment solve, rope relaxation, RNG stream fill.

Algorithm and operation order match pam.kernels.pure exactly; the build
disables FP contraction so outputs are bit-identical to the fallbacks.
"""

from libc.math cimport sqrt, log, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()


def hungarian(cnp.ndarray[cnp.float64_t, ndim=2] cost_in):
    """Exact min-cost perfect matching; returns assign[row] = col."""
    cdef Py_ssize_t n = cost_in.shape[0]
    if cost_in.shape[1] != n:
        raise ValueError(f"cost matrix must be square, got {cost_in.shape[0]}x{cost_in.shape[1]}")
    if not np.all(np.isfinite(cost_in)):
        raise ValueError("cost matrix contains non-finite entries")

    cdef cnp.ndarray[cnp.float64_t, ndim=2] cost = np.ascontiguousarray(cost_in)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.zeros(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.zeros(n + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] minv = np.empty(n + 1)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] p = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] way = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] used = np.zeros(n + 1, dtype=np.uint8)

    cdef Py_ssize_t i, j, j0, j1
    cdef cnp.int64_t i0
    cdef double cur, delta

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = -1
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    cdef cnp.ndarray[cnp.int64_t, ndim=1] assign = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assign[p[j] - 1] = j - 1
    return assign


def rope_relax(cnp.ndarray[cnp.float64_t, ndim=2] nodes, cnp.ndarray[cnp.float64_t, ndim=1] rest, int iters):
    """Gauss-Seidel closed-chain length relaxation, in place."""
    cdef Py_ssize_t r = nodes.shape[0]
    cdef Py_ssize_t it, i, j
    cdef double dx, dy, dist, corr
    for it in range(iters):
        for i in range(r):
            j = i + 1 if i + 1 < r else 0
            dx = nodes[j, 0] - nodes[i, 0]
            dy = nodes[j, 1] - nodes[i, 1]
            dist = sqrt(dx * dx + dy * dy)
            if dist <= 0.0:
                continue
            corr = 0.5 * (dist - rest[i]) / dist
            nodes[i, 0] += corr * dx
            nodes[i, 1] += corr * dy
            nodes[j, 0] -= corr * dx
            nodes[j, 1] -= corr * dy


cdef inline cnp.uint64_t _rotl(cnp.uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline cnp.uint64_t _next_u64(cnp.uint64_t *s) nogil:
    cdef cnp.uint64_t result = _rotl(s[1] * <cnp.uint64_t>5, 7) * <cnp.uint64_t>9
    cdef cnp.uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


def fill_uniform(cnp.ndarray[cnp.uint64_t, ndim=1] state, cnp.ndarray[cnp.float64_t, ndim=1] out):
    cdef cnp.uint64_t s[4]
    cdef Py_ssize_t i, n = out.shape[0]
    for i in range(4):
        s[i] = state[i]
    for i in range(n):
        out[i] = <double>(_next_u64(s) >> 11) * (2.0 ** -53)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] new_state = np.empty(4, dtype=np.uint64)
    for i in range(4):
        new_state[i] = s[i]
    return new_state, n


def fill_normal(cnp.ndarray[cnp.uint64_t, ndim=1] state, cnp.ndarray[cnp.float64_t, ndim=1] out):
    cdef cnp.uint64_t s[4]
    cdef Py_ssize_t i = 0, n = out.shape[0]
    cdef long consumed = 0
    cdef double u, v, w, m
    cdef int k
    for k in range(4):
        s[k] = state[k]
    while i < n:
        u = 2.0 * (<double>(_next_u64(s) >> 11) * (2.0 ** -53)) - 1.0
        v = 2.0 * (<double>(_next_u64(s) >> 11) * (2.0 ** -53)) - 1.0
        consumed += 2
        w = u * u + v * v
        if w >= 1.0 or w == 0.0:
            continue
        m = sqrt(-2.0 * log(w) / w)
        out[i] = u * m
        i += 1
        if i < n:
            out[i] = v * m
            i += 1
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] new_state = np.empty(4, dtype=np.uint64)
    for k in range(4):
        new_state[k] = s[k]
    return new_state, consumed
