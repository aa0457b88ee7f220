"""Squeezed-vacuum and vacuum quadrature streams.

Convention: hbar = 1, so a vacuum quadrature sample has variance 1/2 before any
electronic filtering. All reported quantities are ratios to shot noise, so the
absolute scale cancels.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft

from .errors import ParameterError, SizeError

VACUUM_VARIANCE = 0.5


class Orientation(str, enum.Enum):
    SQUEEZE_X = "squeeze_x"
    SQUEEZE_P = "squeeze_p"


class Quadrature(str, enum.Enum):
    X = "x"
    P = "p"


class TraceKind(str, enum.Enum):
    SIGNAL = "signal"
    SHOT_NOISE = "shot_noise"
    DARK_NOISE = "dark_noise"


@dataclass(frozen=True)
class SqueezerSpec:
    """One below-threshold OPO.

    Parameters
    ----------
    pump_parameter : float
        Pump amplitude relative to threshold, ``0 <= x < 1``.
    cavity_hwhm : float
        Cavity half width at half maximum in Hz.
    orientation : Orientation
        Which quadrature leaves the OPO squeezed.
    """

    pump_parameter: float = 0.0
    cavity_hwhm: float = 17e6
    orientation: Orientation = Orientation.SQUEEZE_X

    def __post_init__(self):
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        x = float(self.pump_parameter)
        if not (0.0 <= x < 1.0) or not np.isfinite(x):
            raise ParameterError(f"pump_parameter must lie in [0, 1), got {self.pump_parameter!r}")
        if not (float(self.cavity_hwhm) > 0.0) or not np.isfinite(self.cavity_hwhm):
            raise ParameterError(f"cavity_hwhm must be positive, got {self.cavity_hwhm!r}")

    def with_pump(self, pump_parameter: float) -> "SqueezerSpec":
        return replace(self, pump_parameter=pump_parameter)


@dataclass
class QuadratureTrace:
    """A uniformly sampled record of one homodyne quadrature channel."""

    samples: np.ndarray
    sample_rate: float
    quadrature: Quadrature = Quadrature.X
    rail: str | None = None
    kind: TraceKind = TraceKind.SIGNAL

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.quadrature = Quadrature(self.quadrature)
        self.kind = TraceKind(self.kind)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise SizeError("a trace needs a 1-D array with at least one sample")
        if not (self.sample_rate > 0):
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate!r}")
        if self.rail is not None and self.rail not in ("A", "B"):
            raise ParameterError(f"rail must be 'A', 'B' or None, got {self.rail!r}")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples, **changes) -> "QuadratureTrace":
        return replace(self, samples=np.asarray(samples, dtype=np.float64), **changes)


def squeezing_spectrum(f, spec: SqueezerSpec):
    """Squeezed and anti-squeezed noise spectra of a below-threshold OPO.

    ``S_-(f) = 1 - 4x / ((1 + x)^2 + (f/g)^2)`` and
    ``S_+(f) = 1 + 4x / ((1 - x)^2 + (f/g)^2)``, relative to vacuum, with pump
    parameter ``x`` and cavity HWHM ``g``. Scalars in, scalars out.
    """
    if not isinstance(spec, SqueezerSpec):
        raise ParameterError("spec must be a SqueezerSpec")
    x = spec.pump_parameter
    u2 = (np.asarray(f, dtype=np.float64) / spec.cavity_hwhm) ** 2
    s_sq = 1.0 - 4.0 * x / ((1.0 + x) ** 2 + u2)
    s_anti = 1.0 + 4.0 * x / ((1.0 - x) ** 2 + u2)
    if np.ndim(s_sq) == 0:
        return float(s_sq), float(s_anti)
    return s_sq, s_anti


def quadrature_spectra(f, spec: SqueezerSpec):
    """``(S_x, S_p)`` for the source, honouring its orientation."""
    s_sq, s_anti = squeezing_spectrum(f, spec)
    if spec.orientation is Orientation.SQUEEZE_X:
        return s_sq, s_anti
    return s_anti, s_sq


def child_seeds(seed, n: int):
    """``n`` independent child seeds of ``seed`` without mutating it."""
    if isinstance(seed, np.random.SeedSequence):
        entropy, key = seed.entropy, tuple(seed.spawn_key)
    else:
        entropy, key = int(seed), ()
    return [np.random.SeedSequence(entropy, spawn_key=key + (i,)) for i in range(n)]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def colored_gaussian(n_samples: int, sample_rate: float, spectrum, rng) -> np.ndarray:
    """Zero-mean Gaussian stream with power spectrum ``VACUUM_VARIANCE * spectrum(f)``.

    White samples are shaped in the frequency domain by ``sqrt(spectrum)`` on a
    fast FFT length and truncated to ``n_samples``; the result is exactly
    stationary with the requested spectrum sampled on that grid.
    """
    rng = _rng(rng)
    n_fft = sfft.next_fast_len(int(n_samples), real=True)
    white = rng.normal(0.0, np.sqrt(VACUUM_VARIANCE), n_fft)
    freqs = sfft.rfftfreq(n_fft, d=1.0 / sample_rate)
    gain = np.sqrt(np.asarray(spectrum(freqs), dtype=np.float64))
    shaped = sfft.irfft(sfft.rfft(white) * gain, n=n_fft)
    return shaped[:n_samples]


def generate_squeezed_stream(spec: SqueezerSpec, n_samples: int, sample_rate: float, seed):
    """Sampled x and p quadratures of one OPO output.

    Returns ``(trace_x, trace_p)``: independent zero-mean Gaussian processes whose
    spectra follow :func:`quadrature_spectra`. Output is a pure function of the
    arguments.
    """
    if int(n_samples) < 2:
        raise SizeError(f"n_samples must be at least 2, got {n_samples}")
    rng = _rng(seed)
    n = int(n_samples)
    x = colored_gaussian(n, sample_rate, lambda f: quadrature_spectra(f, spec)[0], rng)
    p = colored_gaussian(n, sample_rate, lambda f: quadrature_spectra(f, spec)[1], rng)
    return (
        QuadratureTrace(x, sample_rate, Quadrature.X),
        QuadratureTrace(p, sample_rate, Quadrature.P),
    )


def generate_vacuum_stream(n_samples: int, sample_rate: float, seed,
                           quadrature: Quadrature = Quadrature.X, rail=None) -> QuadratureTrace:
    """White vacuum (shot-noise) stream with per-sample variance 1/2."""
    if int(n_samples) < 1:
        raise SizeError(f"n_samples must be at least 1, got {n_samples}")
    rng = _rng(seed)
    samples = rng.normal(0.0, np.sqrt(VACUUM_VARIANCE), int(n_samples))
    return QuadratureTrace(samples, sample_rate, quadrature, rail, TraceKind.SHOT_NOISE)
