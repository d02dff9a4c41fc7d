"""Hot numeric kernels: numba-jitted fast path with a pure-numpy fallback.

Backend selection happens once at import.  Set ``POSCM_NUMBA=0`` (also
``false``/``off``/``numpy``) to force the numpy path; anything else uses
numba when it imports cleanly.  Both backends implement the same step-for-
step arithmetic; ``benchmarks/bench_kernels.py`` times them against each
other and checks agreement.
"""

import os

_flag = os.environ.get("POSCM_NUMBA", "auto").strip().lower()

if _flag in ("0", "false", "off", "numpy", "no"):
    from . import _numpy as _impl
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # numba missing or broken: degrade quietly
        from . import _numpy as _impl
        BACKEND = "numpy"

integrate_layered = _impl.integrate_layered
mmd_perm_stats = _impl.mmd_perm_stats


def backend() -> str:
    """Which implementation is active ("numba" or "numpy")."""
    return BACKEND
