"""Backend selection for the sweep kernels.

The compiled extension is used when it imports; ``KERNEL_HJ_BACKEND=python``
forces the numpy fallback.
"""

import os

from . import _sweep_py

BACKEND = "python"
sweep = _sweep_py.sweep
quad_sweep = _sweep_py.quad_sweep

if os.environ.get("KERNEL_HJ_BACKEND", "").lower() != "python":
    try:
        from . import _sweep as _compiled
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        sweep = _compiled.sweep
        quad_sweep = _compiled.quad_sweep


def backends():
    """Mapping of available backend name -> (sweep, quad_sweep)."""
    found = {"python": (_sweep_py.sweep, _sweep_py.quad_sweep)}
    try:
        from . import _sweep as _compiled
    except ImportError:
        return found
    found["cython"] = (_compiled.sweep, _compiled.quad_sweep)
    return found
