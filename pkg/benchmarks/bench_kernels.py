"""Benchmark the compiled kernel core against the pure-Python fallbacks.

Run directly (`python benchmarks/bench_kernels.py`) or via `pam bench`.
Verifies bit-identical outputs while timing, so a speedup claim never
hides a semantic drift.
"""

import time

import numpy as np

from pam import kernels
from pam.kernels import pure
from pam.rng import Rng


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(repeats: int = 5) -> None:
    if not kernels.COMPILED:
        print("compiled core not available; showing pure-Python timings only")
    rng = Rng(7)

    rows = []

    cost = rng.uniforms(64 * 64).reshape(64, 64)
    pure_out = pure.hungarian(cost)
    t_pure = _time(lambda: pure.hungarian(cost), repeats)
    if kernels.COMPILED:
        from pam.kernels import _core

        assert np.array_equal(_core.hungarian(cost), pure_out)
        t_fast = _time(lambda: _core.hungarian(cost), repeats)
    else:
        t_fast = None
    rows.append(("hungarian 64x64", t_pure, t_fast))

    nodes = rng.uniforms(80).reshape(40, 2)
    rest = np.full(40, 0.04)
    check = nodes.copy()
    pure.rope_relax(check, rest, 50)
    t_pure = _time(lambda: pure.rope_relax(nodes.copy(), rest, 50), repeats)
    if kernels.COMPILED:
        from pam.kernels import _core

        other = nodes.copy()
        _core.rope_relax(other, rest, 50)
        assert np.array_equal(other, check)
        t_fast = _time(lambda: _core.rope_relax(nodes.copy(), rest, 50), repeats)
    else:
        t_fast = None
    rows.append(("rope_relax 40x50", t_pure, t_fast))

    state = np.array([1, 2, 3, 4], dtype=np.uint64)
    out_p = np.empty(100_000)
    pure_state, _ = pure.fill_normal(state.copy(), out_p)
    t_pure = _time(lambda: pure.fill_normal(state.copy(), np.empty(100_000)), repeats)
    if kernels.COMPILED:
        from pam.kernels import _core

        out_c = np.empty(100_000)
        fast_state, _ = _core.fill_normal(state.copy(), out_c)
        assert np.array_equal(out_p, out_c) and np.array_equal(pure_state, fast_state)
        t_fast = _time(lambda: _core.fill_normal(state.copy(), np.empty(100_000)), repeats)
    else:
        t_fast = None
    rows.append(("fill_normal 1e5", t_pure, t_fast))

    print(f"{'kernel':<20} {'pure':>12} {'compiled':>12} {'speedup':>9}")
    for name, tp, tf in rows:
        if tf is None:
            print(f"{name:<20} {tp * 1e3:>9.3f} ms {'-':>12} {'-':>9}")
        else:
            print(f"{name:<20} {tp * 1e3:>9.3f} ms {tf * 1e3:>9.3f} ms {tp / tf:>8.1f}x")


if __name__ == "__main__":
    main()
