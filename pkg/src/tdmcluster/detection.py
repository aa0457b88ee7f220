"""Homodyne readout electronics: filter chain, digitizer and spectrum estimates."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import kernels
from .errors import ConfigurationError, ParameterError, SizeError
from .source import QuadratureTrace, TraceKind, VACUUM_VARIANCE, _rng


@dataclass(frozen=True)
class FilterSection:
    """One rational section: analog prototype plus its bilinear discretization.

    ``analog_zpk`` is in rad/s (already pre-warped), ``sos`` is the digital
    cascade at ``sample_rate``.
    """

    name: str
    family: str
    btype: str
    order: int
    corner_hz: float
    analog_zpk: tuple
    sos: np.ndarray
    sample_rate: float

    @property
    def analog_ba(self):
        return signal.zpk2tf(*self.analog_zpk)

    def frequency_response(self, f):
        _, h = signal.sosfreqz(self.sos, worN=np.atleast_1d(np.asarray(f, dtype=float)), fs=self.sample_rate)
        return h


@dataclass(frozen=True)
class FilterChain:
    """Serial cascade of :class:`FilterSection`; an empty chain is the identity."""

    sections: tuple = ()
    sample_rate: float = 100e6
    params: dict = field(default_factory=dict, compare=False)

    @property
    def sos(self) -> np.ndarray:
        if not self.sections:
            return np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
        return np.vstack([s.sos for s in self.sections])

    @property
    def is_identity(self) -> bool:
        return not self.sections

    def frequency_response(self, f):
        """Complex response at ``f`` (Hz); scalar in, scalar out."""
        scalar = np.ndim(f) == 0
        f = np.atleast_1d(np.asarray(f, dtype=float))
        if self.is_identity:
            h = np.ones(f.shape, dtype=complex)
        else:
            _, h = signal.sosfreqz(self.sos, worN=f, fs=self.sample_rate)
        return complex(h[0]) if scalar else h

    def gain_db(self, f):
        with np.errstate(divide="ignore"):
            g = 20.0 * np.log10(np.abs(self.frequency_response(f)))
        return float(g) if np.ndim(g) == 0 else g

    def impulse_response(self, n: int) -> np.ndarray:
        x = np.zeros(int(n))
        x[0] = 1.0
        return signal.sosfilt(self.sos, x)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(row[3:]) for row in self.sos])

    @property
    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))


def identity_chain(sample_rate: float = 100e6) -> FilterChain:
    return FilterChain((), sample_rate)


def _prewarp(f_hz: float, fs: float) -> float:
    return 2.0 * fs * np.tan(np.pi * f_hz / fs)


def _section(name, family, btype, order, corner, zpk_analog, fs):
    z, p, k = signal.bilinear_zpk(*zpk_analog, fs)
    sos = signal.zpk2sos(z, p, k)
    return FilterSection(name, family, btype, order, corner, zpk_analog, sos, fs)


def design_filter_chain(sample_rate: float = 100e6, *, highpass_hz: float = 1.5e6, highpass_order: int = 5,
                        notch_hz: float = 32e6, notch_order: int = 3, notch_attenuation_db: float = 40.0,
                        lowpass_hz: float = 40e6, lowpass_order: int = 3) -> FilterChain:
    """Detection filter: Butterworth high-pass, inverse-Chebyshev notch low-pass, Butterworth anti-alias.

    Every analog prototype is pre-warped at its own corner (for the inverse
    Chebyshev, at its first transmission zero) before the bilinear transform, so
    the 1.5 MHz corner, 32 MHz null and 40 MHz corner land exactly.

    Raises
    ------
    ConfigurationError
        If ``sample_rate`` is below 2.5x the anti-aliasing corner.
    """
    fs = float(sample_rate)
    if fs < 2.5 * lowpass_hz or notch_hz >= fs / 2 or highpass_hz >= fs / 2:
        raise ConfigurationError(
            f"sample rate {fs!r} Hz too low for a {lowpass_hz / 1e6:g} MHz anti-aliasing corner"
        )
    hp = signal.butter(highpass_order, _prewarp(highpass_hz, fs), "highpass", analog=True, output="zpk")
    # Type-II Chebyshev zeros sit at w_s / cos((2i - 1) pi / 2N); place the first at the notch.
    ws = _prewarp(notch_hz, fs) * np.cos(np.pi / (2 * notch_order))
    notch = signal.cheby2(notch_order, notch_attenuation_db, ws, "lowpass", analog=True, output="zpk")
    lp = signal.butter(lowpass_order, _prewarp(lowpass_hz, fs), "lowpass", analog=True, output="zpk")
    sections = (
        _section("highpass", "butterworth", "highpass", highpass_order, highpass_hz, hp, fs),
        _section("notch", "inverse_chebyshev", "lowpass", notch_order, notch_hz, notch, fs),
        _section("antialias", "butterworth", "lowpass", lowpass_order, lowpass_hz, lp, fs),
    )
    params = dict(highpass_hz=highpass_hz, highpass_order=highpass_order, notch_hz=notch_hz,
                  notch_order=notch_order, notch_attenuation_db=notch_attenuation_db,
                  lowpass_hz=lowpass_hz, lowpass_order=lowpass_order)
    return FilterChain(sections, fs, params)


def apply_filter(chain: FilterChain, trace: QuadratureTrace) -> QuadratureTrace:
    """Causal recursive filtering from zero initial state; output has the input's length."""
    if abs(chain.sample_rate - trace.sample_rate) > 1e-9 * trace.sample_rate:
        raise ConfigurationError(
            f"filter designed at {chain.sample_rate!r} Hz, trace sampled at {trace.sample_rate!r} Hz"
        )
    if chain.is_identity:
        return trace.with_samples(trace.samples.copy())
    return trace.with_samples(kernels.sos_filter(chain.sos, trace.samples))


def add_dark_noise(trace: QuadratureTrace, level_db: float, seed) -> QuadratureTrace:
    """Additive white electronic noise at ``level_db`` relative to the vacuum variance."""
    rng = _rng(seed)
    sigma = np.sqrt(VACUUM_VARIANCE * 10.0 ** (level_db / 10.0))
    return trace.with_samples(trace.samples + rng.normal(0.0, sigma, len(trace)))


def dark_noise_trace(n_samples: int, sample_rate: float, level_db: float, seed) -> QuadratureTrace:
    rng = _rng(seed)
    sigma = np.sqrt(VACUUM_VARIANCE * 10.0 ** (level_db / 10.0))
    return QuadratureTrace(rng.normal(0.0, sigma, int(n_samples)), sample_rate, kind=TraceKind.DARK_NOISE)


def quantize(trace: QuadratureTrace, bits: int | None = None, full_scale: float | None = None):
    """Uniform mid-tread quantizer with clipping at ``+-full_scale``.

    ``bits=None`` is pass-through. Returns ``(trace, clip_count)``.
    """
    if bits is None:
        return trace.with_samples(trace.samples.copy()), 0
    if int(bits) < 2:
        raise ParameterError(f"bits must be at least 2, got {bits}")
    if full_scale is None or not (full_scale > 0):
        raise ParameterError(f"full_scale must be positive, got {full_scale!r}")
    step = full_scale / 2 ** (int(bits) - 1)
    clipped = np.clip(trace.samples, -full_scale, full_scale)
    clip_count = int(np.count_nonzero(clipped != trace.samples))
    levels = np.round(clipped / step)
    top = 2 ** (int(bits) - 1) - 1
    levels = np.clip(levels, -top - 1, top)
    return trace.with_samples(levels * step), clip_count


@dataclass
class SpectrumEstimate:
    """One-sided averaged periodogram.

    ``power`` is the linear density (variance per Hz); ``power_db`` is relative
    to ``reference`` (same units).
    """

    frequencies: np.ndarray
    power: np.ndarray
    n_fft: int
    n_averages: int
    reference: float

    @property
    def power_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.power / self.reference)

    def band_mean(self, f_lo: float, f_hi: float) -> float:
        mask = (self.frequencies >= f_lo) & (self.frequencies <= f_hi)
        return float(self.power[mask].mean())


def vacuum_density(sample_rate: float) -> float:
    """One-sided power density of unfiltered vacuum (variance 1/2 spread over ``fs/2``)."""
    return 2.0 * VACUUM_VARIANCE / sample_rate


class PeriodogramAccumulator:
    """Mergeable sum of rectangular-window periodograms.

    Each ``add`` call is also kept as one block (its mean periodogram), so the
    standard error can come from block-to-block scatter. Segments inside a
    record are not independent in leakage-dominated bins, blocks are.
    """

    def __init__(self, n_fft: int, sample_rate: float):
        self.n_fft = int(n_fft)
        self.sample_rate = float(sample_rate)
        self.total = np.zeros(self.n_fft // 2 + 1)
        self.count = 0
        self.block_sum = np.zeros_like(self.total)
        self.block_sq = np.zeros_like(self.total)
        self.blocks = 0

    def add(self, samples, max_segments: int | None = None) -> int:
        samples = np.asarray(samples, dtype=np.float64)
        n_seg = samples.size // self.n_fft
        if max_segments is not None:
            n_seg = min(n_seg, max_segments)
        if n_seg == 0:
            return 0
        segs = samples[: n_seg * self.n_fft].reshape(n_seg, self.n_fft)
        spec = np.abs(np.fft.rfft(segs, axis=1)) ** 2
        block = spec.sum(axis=0)
        self.total += block
        self.count += n_seg
        self.block_sum += block / n_seg
        self.block_sq += (block / n_seg) ** 2
        self.blocks += 1
        return n_seg

    def merge(self, other: "PeriodogramAccumulator"):
        self.total += other.total
        self.count += other.count
        self.block_sum += other.block_sum
        self.block_sq += other.block_sq
        self.blocks += other.blocks

    def _scale(self):
        scale = np.full(self.n_fft // 2 + 1, 2.0 / (self.sample_rate * self.n_fft))
        scale[0] /= 2.0
        if self.n_fft % 2 == 0:
            scale[-1] /= 2.0
        return scale

    def standard_error(self) -> np.ndarray:
        """Per-bin standard error of the block-mean density (blocks of equal size)."""
        if self.blocks < 2:
            raise SizeError("need at least two blocks for a standard error")
        m = self.block_sum / self.blocks
        var = (self.block_sq / self.blocks - m**2) * self.blocks / (self.blocks - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.blocks) * self._scale()

    def estimate(self, reference: float | None = None) -> SpectrumEstimate:
        if self.count == 0:
            raise SizeError("no segments accumulated")
        power = self.total / self.count * self._scale()
        freqs = np.fft.rfftfreq(self.n_fft, d=1.0 / self.sample_rate)
        ref = vacuum_density(self.sample_rate) if reference is None else float(reference)
        return SpectrumEstimate(freqs, power, self.n_fft, self.count, ref)


def power_spectrum(trace: QuadratureTrace, n_fft: int = 2048, n_averages: int | None = None,
                   reference: float | None = None) -> SpectrumEstimate:
    """Averaged periodogram over non-overlapping rectangular segments.

    ``n_averages=None`` uses every complete segment. ``reference`` defaults to the
    unfiltered vacuum density, so white shot noise reads 0 dB.
    """
    available = len(trace) // int(n_fft)
    if n_averages is None:
        n_averages = available
    if n_averages < 1 or n_averages > available:
        raise SizeError(f"need {n_averages} x {n_fft} samples, trace has {len(trace)}")
    acc = PeriodogramAccumulator(n_fft, trace.sample_rate)
    acc.add(trace.samples, max_segments=n_averages)
    return acc.estimate(reference)


def expected_periodogram(chain: FilterChain, n_fft: int = 2048, input_density: float | None = None,
                         n_impulse: int = 1 << 14) -> np.ndarray:
    """Exact mean of the rectangular-window periodogram of filtered white noise.

    Equals ``|H(f)|^2`` times the flat input density smoothed by the window's
    Fejer kernel, computed from the filter autocovariance so deep stopband bins
    include leakage.
    """
    fs = chain.sample_rate
    dens = vacuum_density(fs) if input_density is None else input_density
    var_in = dens * fs / 2.0
    h = chain.impulse_response(n_impulse)
    m = int(n_fft)
    nfull = 1 << int(np.ceil(np.log2(2 * n_impulse)))
    hf = np.fft.rfft(h, nfull)
    acov = np.fft.irfft(np.abs(hf) ** 2, nfull)[:m] * var_in
    lags = np.arange(m)
    tri = (1.0 - lags / m) * acov
    seq = np.zeros(2 * m)
    seq[:m] = tri
    seq[m + 1:] = tri[1:][::-1]
    s = np.real(np.fft.fft(seq))[: 2 * m: 2][: m // 2 + 1]
    scale = np.full(m // 2 + 1, 2.0 / fs)
    scale[0] /= 2.0
    if m % 2 == 0:
        scale[-1] /= 2.0
    return s * scale


def write_spectrum_csv(path, estimate: SpectrumEstimate, header: str = "", columns=None):
    """``frequency_hz,power_db`` rows (extra named columns via ``columns``) after a ``#`` header."""
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        names = ["frequency_hz", "power_db"] + [c for c in (columns or {})]
        w.writerow(names)
        extra = list((columns or {}).values())
        db = estimate.power_db
        for i, f in enumerate(estimate.frequencies):
            w.writerow([f"{f:.6g}", f"{db[i]:.6f}"] + [f"{col[i]:.6f}" for col in extra])
