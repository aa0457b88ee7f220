"""Pure numpy/scipy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy import signal


def sos_filter(sos, x):
    return signal.sosfilt(np.asarray(sos, dtype=np.float64), np.asarray(x, dtype=np.float64))


def slot_sums(trace, weights, offset, period, count):
    trace = np.asarray(trace, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    m = weights.shape[0]
    if count < 0 or (count > 0 and offset + (count - 1) * period + m > trace.shape[0]):
        raise IndexError("slot window exceeds the trace")
    if count == 0:
        return np.empty(0)
    windows = np.lib.stride_tricks.as_strided(
        trace[offset:],
        shape=(count, m),
        strides=(trace.strides[0] * period, trace.strides[0]),
        writeable=False,
    )
    return windows @ weights
