"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``TDMCLUSTER_PURE_PYTHON=1``
to force the numpy/scipy fallback.
"""
import os

import numpy as np

from . import _fallback

_impl = _fallback
BACKEND = "python"

if os.environ.get("TDMCLUSTER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        _impl = _kernels
        BACKEND = "cython"


def sos_filter(sos, x):
    """Run ``x`` through a biquad cascade (zero initial state)."""
    return _impl.sos_filter(
        np.ascontiguousarray(sos, dtype=np.float64),
        np.ascontiguousarray(x, dtype=np.float64),
    )


def slot_sums(trace, weights, offset, period, count):
    """Weighted sums over ``count`` equally spaced windows of ``trace``."""
    return _impl.slot_sums(
        np.ascontiguousarray(trace, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        int(offset),
        int(period),
        int(count),
    )


__all__ = ["BACKEND", "sos_filter", "slot_sums"]
