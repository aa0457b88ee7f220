# cython: language_level=3
"""Compiled inner loops: biquad cascade filtering and slot-wise weighted sums."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def sos_filter(const double[:, ::1] sos, const double[::1] x):
    """Transposed direct-form II biquad cascade with zero initial state.

    ``sos`` rows are ``(b0, b1, b2, a0, a1, a2)`` with ``a0 == 1``.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t ns = sos.shape[0]
    cdef Py_ssize_t i, s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    state = np.zeros((ns, 2), dtype=np.float64)
    cdef double[:, ::1] z = state
    cdef double v, w
    with nogil:
        for i in range(n):
            v = x[i]
            for s in range(ns):
                w = sos[s, 0] * v + z[s, 0]
                z[s, 0] = sos[s, 1] * v - sos[s, 4] * w + z[s, 1]
                z[s, 1] = sos[s, 2] * v - sos[s, 5] * w
                v = w
            y[i] = v
    return out


def slot_sums(const double[::1] trace, const double[::1] weights,
              Py_ssize_t offset, Py_ssize_t period, Py_ssize_t count):
    """``out[k] = sum_j weights[j] * trace[offset + k*period + j]``."""
    cdef Py_ssize_t m = weights.shape[0]
    cdef Py_ssize_t k, j, base
    cdef double acc
    if count < 0 or (count > 0 and offset + (count - 1) * period + m > trace.shape[0]):
        raise IndexError("slot window exceeds the trace")
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(count):
            base = offset + k * period
            acc = 0.0
            for j in range(m):
                acc = acc + weights[j] * trace[base + j]
            o[k] = acc
    return out
