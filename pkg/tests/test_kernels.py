import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from tdmcluster import _fallback, kernels
from tdmcluster.detection import design_filter_chain
from tdmcluster.modes import weight_function

try:
    from tdmcluster import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = [_fallback] + ([_kernels] if _kernels is not None else [])


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_sos_filter_matches_scipy(mod, rng):
    sos = np.ascontiguousarray(design_filter_chain().sos)
    x = rng.normal(size=5000)
    np.testing.assert_allclose(mod.sos_filter(sos, x), signal.sosfilt(sos, x), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_slot_sums_matches_loop(mod, rng):
    w = weight_function()
    offset, g = w.window
    x = rng.normal(size=16 * 50)
    count = 49
    expected = [np.dot(g, x[offset + 16 * k: offset + 16 * k + g.size]) for k in range(count)]
    np.testing.assert_allclose(mod.slot_sums(x, np.ascontiguousarray(g), offset, 16, count), expected, rtol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_slot_sums_bounds(mod):
    with pytest.raises((IndexError, ValueError)):
        mod.slot_sums(np.zeros(40), np.ones(8), 4, 16, 3)


@pytest.mark.skipif(_kernels is None, reason="compiled extension not built")
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3000), st.integers(0, 2**31 - 1))
def test_backends_agree(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    sos = np.ascontiguousarray(design_filter_chain().sos)
    np.testing.assert_allclose(_kernels.sos_filter(sos, x), _fallback.sos_filter(sos, x), rtol=1e-10, atol=1e-12)
    w = rng.normal(size=12)
    count = max(0, (n - 4 - 12) // 16 + 1) if n >= 16 else 0
    np.testing.assert_allclose(_kernels.slot_sums(x, w, 4, 16, count), _fallback.slot_sums(x, w, 4, 16, count),
                               rtol=1e-12, atol=1e-12)
