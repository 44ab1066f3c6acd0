"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise the
pure-Python twin in ``_fallback`` takes over.  Setting ``GRIDMH_PURE_PYTHON=1``
forces the fallback.
"""

import os

from . import _fallback

if os.environ.get("GRIDMH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

gibbs_lattice = _impl.gibbs_lattice
gibbs_ergm = _impl.gibbs_ergm
log_mean_exp_dot = _impl.log_mean_exp_dot

__all__ = ["BACKEND", "gibbs_lattice", "gibbs_ergm", "log_mean_exp_dot"]
