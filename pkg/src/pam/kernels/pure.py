"""Pure-Python/numpy reference implementations of the hot kernels.

These are the import-time fallbacks when the compiled core is absent and
the ground truth it is tested against. Operation order matches the
Cython versions exactly so both backends emit bit-identical floats.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_INF = float("inf")


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Exact min-cost perfect matching on a square cost matrix.

    Shortest-augmenting-path formulation with row/column potentials,
    O(n^3). Returns ``assign`` with ``assign[row] = col``. Ties are
    broken toward the lowest column index (strict < scans).
    """
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")

    # 1-indexed potentials; p[j] = row matched to column j (0 = none).
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, _INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], _INF)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    assign = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assign[p[j] - 1] = j - 1
    return assign


def rope_relax(nodes: np.ndarray, rest: np.ndarray, iters: int) -> None:
    """Gauss-Seidel length-constraint relaxation on a closed node chain.

    Segment i joins node i and node (i+1) mod R; both endpoints share
    the correction equally. Mutates ``nodes`` in place.
    """
    r = nodes.shape[0]
    for _ in range(iters):
        for i in range(r):
            j = i + 1 if i + 1 < r else 0
            dx = nodes[j, 0] - nodes[i, 0]
            dy = nodes[j, 1] - nodes[i, 1]
            dist = math.sqrt(dx * dx + dy * dy)
            if dist <= 0.0:
                continue
            corr = 0.5 * (dist - rest[i]) / dist
            nodes[i, 0] += corr * dx
            nodes[i, 1] += corr * dy
            nodes[j, 0] -= corr * dx
            nodes[j, 1] -= corr * dy


def _next_u64(s: list) -> int:
    x = (s[1] * 5) & _MASK64
    result = ((((x << 7) | (x >> 57)) & _MASK64) * 9) & _MASK64
    t = (s[1] << 17) & _MASK64
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = ((s[3] << 45) | (s[3] >> 19)) & _MASK64
    return result


def fill_uniform(state: np.ndarray, out: np.ndarray):
    """Fill ``out`` with uniforms in [0,1); returns (new_state, n_u64_consumed)."""
    s = [int(x) for x in state]
    n = out.shape[0]
    for i in range(n):
        out[i] = (_next_u64(s) >> 11) * 2.0**-53
    return np.array(s, dtype=np.uint64), n


def fill_normal(state: np.ndarray, out: np.ndarray):
    """Fill ``out`` with standard normals (polar method); returns (new_state, consumed)."""
    s = [int(x) for x in state]
    n = out.shape[0]
    consumed = 0
    i = 0
    while i < n:
        u = 2.0 * ((_next_u64(s) >> 11) * 2.0**-53) - 1.0
        v = 2.0 * ((_next_u64(s) >> 11) * 2.0**-53) - 1.0
        consumed += 2
        w = u * u + v * v
        if w >= 1.0 or w == 0.0:
            continue
        m = math.sqrt(-2.0 * math.log(w) / w)
        out[i] = u * m
        i += 1
        if i < n:
            out[i] = v * m
            i += 1
    return np.array(s, dtype=np.uint64), consumed
