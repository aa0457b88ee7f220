"""Optical network of the time-domain-multiplexed cluster generator.

Two squeezed streams are mixed on a balanced beamsplitter, one output is delayed
by one time slot in a lossy fiber, and both arms are recombined on a second
beamsplitter. Streams are processed sample-wise; x and p quadratures see the same
real transformation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParameterError, ShapeError
from .source import (
    QuadratureTrace,
    SqueezerSpec,
    TraceKind,
    VACUUM_VARIANCE,
    _rng,
    child_seeds,
    generate_squeezed_stream,
)

SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class ProbeTone:
    """Classical phase-probe sinusoid; ``amplitude`` is its rms relative to shot-noise rms."""

    frequency: float
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class NetworkConfig:
    delay_time: float = 160e-9
    fiber_loss: float = 0.11
    visibility: float = 0.97
    quantum_efficiency: float = 0.99
    extra_efficiency: float = 1.0
    probe_tones: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "probe_tones", tuple(self.probe_tones))
        for name in ("fiber_loss", "visibility", "quantum_efficiency", "extra_efficiency"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ParameterError(f"{name} must lie in [0, 1], got {v!r}")
        if not (self.delay_time > 0):
            raise ParameterError(f"delay_time must be positive, got {self.delay_time!r}")

    @property
    def detection_efficiency(self) -> float:
        """Per-port efficiency: mode-matching ``V**2`` times photodiode and lumped losses."""
        return self.visibility**2 * self.quantum_efficiency * self.extra_efficiency

    def delay_samples(self, sample_rate: float) -> int:
        n = self.delay_time * sample_rate
        n_int = int(round(n))
        if n_int < 1 or abs(n - n_int) > 1e-6:
            raise ConfigurationError(
                f"delay_time {self.delay_time!r} s is not an integer number of samples at {sample_rate!r} Hz"
            )
        return n_int


def _check_same(*traces):
    n, rate = len(traces[0]), traces[0].sample_rate
    for t in traces[1:]:
        if len(t) != n or t.sample_rate != rate:
            raise ShapeError("traces differ in length or sample rate")


def balanced_beamsplitter(a, b, inverse: bool = False):
    """Mix two ports given as ``(x, p)`` trace pairs.

    Forward: ``out1 = (a - b)/sqrt2``, ``out2 = (a + b)/sqrt2``. ``inverse=True``
    applies the transposed matrix, ``out1 = (a + b)/sqrt2``, ``out2 = (b - a)/sqrt2``.
    """
    _check_same(*a, *b)
    out1, out2 = [], []
    for ta, tb in zip(a, b):
        if inverse:
            s1 = (ta.samples + tb.samples) * SQRT_HALF
            s2 = (tb.samples - ta.samples) * SQRT_HALF
        else:
            s1 = (ta.samples - tb.samples) * SQRT_HALF
            s2 = (ta.samples + tb.samples) * SQRT_HALF
        out1.append(ta.with_samples(s1))
        out2.append(tb.with_samples(s2))
    return tuple(out1), tuple(out2)


def _admix_vacuum(samples, loss, rng):
    if loss == 0.0:
        return samples.copy()
    vac = rng.normal(0.0, np.sqrt(VACUUM_VARIANCE), samples.size)
    return np.sqrt(1.0 - loss) * samples + np.sqrt(loss) * vac


def delay_line(port, config: NetworkConfig, vacuum_seed):
    """Delay an ``(x, p)`` port by ``config.delay_time`` through a fiber of loss ``config.fiber_loss``.

    The leading gap left by the shift is filled with vacuum.
    """
    _check_same(*port)
    rng = _rng(vacuum_seed)
    n_delay = config.delay_samples(port[0].sample_rate)
    out = []
    for t in port:
        shifted = np.empty_like(t.samples)
        n = t.samples.size
        d = min(n_delay, n)
        shifted[:d] = rng.normal(0.0, np.sqrt(VACUUM_VARIANCE), d)
        shifted[d:] = t.samples[: n - d]
        out.append(t.with_samples(_admix_vacuum(shifted, config.fiber_loss, rng)))
    return tuple(out)


def apply_efficiency(port, eta: float, vacuum_seed):
    """Beam-splitter loss model ``a' = sqrt(eta) a + sqrt(1 - eta) v``."""
    if not (0.0 <= eta <= 1.0):
        raise ParameterError(f"eta must lie in [0, 1], got {eta!r}")
    rng = _rng(vacuum_seed)
    return tuple(t.with_samples(_admix_vacuum(t.samples, 1.0 - eta, rng)) for t in port)


def inject_probe_tones(trace: QuadratureTrace, tones, frame_start_time: float = 0.0) -> QuadratureTrace:
    """Add ``sum_i A_i sin(2 pi f_i t + phi_i)`` with ``A_i = amplitude_i`` (peak, trace units).

    With vacuum variance 1/2 a tone of amplitude ``A`` has rms ``A/sqrt2``, i.e.
    ``A`` times the shot-noise rms.
    """
    tones = tuple(tones)
    if not tones:
        return trace.with_samples(trace.samples.copy())
    nyquist = trace.sample_rate / 2.0
    t = frame_start_time + np.arange(len(trace)) / trace.sample_rate
    out = trace.samples.copy()
    for tone in tones:
        if not (0.0 <= tone.frequency < nyquist):
            raise ConfigurationError(f"tone at {tone.frequency!r} Hz is not below Nyquist ({nyquist} Hz)")
        out += tone.amplitude * np.sin(2.0 * np.pi * tone.frequency * t + tone.phase)
    return trace.with_samples(out)


def effective_reflectivity(f, T: float):
    """Signed single-sideband reflectivity ``cos(2 pi f T)`` of the unbalanced interferometer.

    The fraction of the x-squeezed input power routed to rail A at sideband ``f``
    is ``(1 + R)/2``.
    """
    r = np.cos(2.0 * np.pi * np.asarray(f, dtype=np.float64) * T)
    return float(r) if r.ndim == 0 else r


def build_exepr_streams(spec_a: SqueezerSpec, spec_b: SqueezerSpec, config: NetworkConfig,
                        n_samples: int, sample_rate: float, seed):
    """Simulate the two output rails of the cluster generator.

    ``seed`` may be an int or a ``SeedSequence``; it is split into independent
    streams for the two sources, the fiber vacuum and the two detection losses.

    A unitary acting on the state maps sampled mode values through the inverse
    of its operator matrix, so the first beamsplitter is applied in its
    transposed form and the second (the Hermitian conjugate) in forward form.
    Rail B of the first mixer carries the delay. This reproduces the nullifier
    signs ``x_A,k + x_B,k + x_A,k+1 - x_B,k+1`` and ``p_A,k + p_B,k - p_A,k+1 + p_B,k+1``.

    Returns
    -------
    rail_a, rail_b : tuple of (QuadratureTrace, QuadratureTrace)
        ``(x, p)`` per output rail, including the per-port detection efficiency.
    """
    s_a, s_b, s_fib, s_det = child_seeds(seed, 4)
    in_a = generate_squeezed_stream(spec_a, n_samples, sample_rate, np.random.default_rng(s_a))
    in_b = generate_squeezed_stream(spec_b, n_samples, sample_rate, np.random.default_rng(s_b))
    arm1, arm2 = balanced_beamsplitter(in_a, in_b, inverse=True)
    arm2 = delay_line(arm2, config, np.random.default_rng(s_fib))
    rail_a, rail_b = balanced_beamsplitter(arm1, arm2)
    rail_a = tuple(t.with_samples(t.samples, rail="A", kind=TraceKind.SIGNAL) for t in rail_a)
    rail_b = tuple(t.with_samples(t.samples, rail="B", kind=TraceKind.SIGNAL) for t in rail_b)
    return detect_ports(rail_a, rail_b, config, s_det)


def detect_ports(rail_a, rail_b, config: NetworkConfig, seed):
    """Apply the per-port detection efficiency to both rails."""
    s_a, s_b = child_seeds(seed, 2)
    eta = config.detection_efficiency
    return (
        apply_efficiency(rail_a, eta, np.random.default_rng(s_a)),
        apply_efficiency(rail_b, eta, np.random.default_rng(s_b)),
    )
