"""Hot-loop kernels with a compiled core and pure-Python fallbacks.

The compiled extension (``pam.kernels._core``, Cython) is used when it
imports cleanly and ``PAM_PURE_KERNELS=1`` is not set; otherwise the
pure implementations take over. Both backends implement the same
algorithms with the same operation order, so results are bit-identical
(asserted by the test suite whenever the compiled core is present).

``benchmarks/bench_kernels.py`` times the two backends side by side.
"""

import importlib
import os

from pam.kernels import pure

COMPILED = False
_core = None
if os.environ.get("PAM_PURE_KERNELS", "") != "1":
    try:
        _core = importlib.import_module("pam.kernels._core")
        COMPILED = True
    except ImportError:
        _core = None

_active = _core if COMPILED else pure

hungarian = _active.hungarian
rope_relax = _active.rope_relax
fill_uniform = _active.fill_uniform
fill_normal = _active.fill_normal


def backend_name() -> str:
    return "compiled" if COMPILED else "pure"
