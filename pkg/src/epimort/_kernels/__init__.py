"""Kernel backend selection.

The compiled Cython kernels are used when the extension was built; otherwise
the pure-Python twins are picked up silently. Setting the environment
variable ``EPIMORT_PURE_PYTHON=1`` forces the fallback (useful for the
backend-comparison benchmark and for debugging).
"""

import os

if os.environ.get("EPIMORT_PURE_PYTHON", "") not in ("", "0"):
    from . import _ode_py as _impl
else:
    try:
        from . import _ode_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _ode_py as _impl

BACKEND = _impl.BACKEND
powerlaw_rk4 = _impl.powerlaw_rk4
mgf_rk4 = _impl.mgf_rk4
two_group_rk4 = _impl.two_group_rk4
driven_ei_rk4 = _impl.driven_ei_rk4

__all__ = [
    "BACKEND",
    "powerlaw_rk4",
    "mgf_rk4",
    "two_group_rk4",
    "driven_ei_rk4",
]
