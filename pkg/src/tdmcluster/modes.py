"""Temporal-mode extraction from sampled homodyne records.

A qumode value is a weighted Riemann sum of the trace over one time slot. The
weight function is a Gaussian envelope times a linear factor, so it has a
negative lobe that cancels the long tail the high-pass filter leaves in the
neighbouring slot. Weight values and the integration step use nanoseconds.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .detection import FilterChain
from .errors import (
    ConfigurationError,
    NormalizationError,
    RegularizationWarning,
    SizeError,
)
from .source import QuadratureTrace

NS = 1e-9


def _ns(seconds: float) -> float:
    return round(seconds / NS, 9)


@dataclass(frozen=True)
class WeightFunction:
    """Discretized ``g(t) = exp(-gamma^2 (t - t_k)^2) (t - t_k + t_c)`` for ``|t - t_k| <= T_w/2``.

    Times are in seconds; ``samples[j]`` is ``g`` (in ns) at ``j * grid_step``
    after the start of a slot, so slot ``k`` starts at ``k * slot_period`` and its
    centre is ``t_k = center_offset + k * slot_period``.
    """

    window_width: float = 120e-9
    fall_time: float = 40e-9
    balance_offset: float = 2e-9
    center_offset: float = 95e-9
    slot_period: float = 160e-9
    grid_step: float = 10e-9
    samples: np.ndarray = None
    positive_only: bool = False

    @property
    def samples_per_slot(self) -> int:
        return int(round(self.slot_period / self.grid_step))

    @property
    def support(self):
        """``(first, last)`` sample offsets within the slot pattern where ``g`` may be nonzero."""
        idx = np.nonzero(np.abs(self.offsets_ns()) <= _ns(self.window_width) / 2 + 1e-9)[0]
        return int(idx[0]), int(idx[-1])

    def offsets_ns(self) -> np.ndarray:
        """``t - t_k`` in ns for each grid point of the slot pattern."""
        n = self.samples_per_slot
        last = int(math.floor(_ns(self.center_offset + self.window_width / 2) / _ns(self.grid_step) + 1e-9))
        n = max(n, last + 1)
        return np.arange(n) * _ns(self.grid_step) - _ns(self.center_offset)

    def value(self, t_rel):
        """Continuous ``g`` at ``t - t_k`` (seconds), in ns units."""
        t = np.asarray(t_rel, dtype=float) / NS
        g = _eval(t, _ns(self.window_width), _ns(self.fall_time), _ns(self.balance_offset))
        if self.positive_only:
            g = np.maximum(g, 0.0)
        return float(g) if g.ndim == 0 else g

    @property
    def window(self):
        """``(offset, weights)``: first nonzero-window sample and the weights from there on."""
        first, last = self.support
        return first, self.samples[first: last + 1]

    def window_seconds(self) -> np.ndarray:
        return self.samples * _ns(self.grid_step)


def _eval(t_ns, tw_ns, fall_ns, tc_ns):
    t_ns = np.asarray(t_ns, dtype=float)
    inside = 2.0 * np.abs(t_ns) <= tw_ns + 1e-9
    g = np.exp(-((t_ns / fall_ns) ** 2)) * (t_ns + tc_ns)
    return np.where(inside, g, 0.0)


def weight_function(window_width: float = 120e-9, fall_time: float = 40e-9, balance_offset: float = 2e-9,
                    center_offset: float = 95e-9, slot_period: float = 160e-9,
                    grid_step: float = 10e-9) -> WeightFunction:
    """Build the per-slot weight pattern on the acquisition grid.

    Raises
    ------
    ConfigurationError
        If the window is wider than a slot, the grid does not divide the slot
        period, or the window would start before its slot.
    """
    if window_width > slot_period + 1e-15:
        raise ConfigurationError(
            f"window width {window_width!r} s exceeds slot period {slot_period!r} s; windows would overlap"
        )
    ratio = slot_period / grid_step
    if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
        raise ConfigurationError(f"grid_step {grid_step!r} s does not divide slot_period {slot_period!r} s")
    if center_offset - window_width / 2 < -1e-15:
        raise ConfigurationError("weight window starts before its slot (center_offset < window_width/2)")
    if fall_time <= 0:
        raise ConfigurationError("fall_time must be positive")
    w = WeightFunction(window_width, fall_time, balance_offset, center_offset, slot_period, grid_step)
    samples = _eval(w.offsets_ns(), _ns(window_width), _ns(fall_time), _ns(balance_offset))
    return replace(w, samples=samples)


def positive_part(w: WeightFunction) -> WeightFunction:
    """Weights clamped at zero from below."""
    return replace(w, samples=np.maximum(w.samples, 0.0), positive_only=True)


def with_balance_offset(w: WeightFunction, balance_offset: float) -> WeightFunction:
    out = weight_function(w.window_width, w.fall_time, balance_offset, w.center_offset, w.slot_period, w.grid_step)
    return positive_part(out) if w.positive_only else out


def qumode_count(duration: float, w: WeightFunction) -> int:
    """Whole slots per record: ``floor((duration - t_0 - T_w/2) / T)``."""
    num = _ns(duration) - _ns(w.center_offset) - _ns(w.window_width) / 2
    return max(0, int(math.floor(num / _ns(w.slot_period) + 1e-9)))


def _check_grid(trace: QuadratureTrace, w: WeightFunction):
    if abs(trace.sample_rate * w.grid_step - 1.0) > 1e-9:
        raise ConfigurationError(
            f"weight grid {w.grid_step!r} s does not match the trace sample period {1 / trace.sample_rate!r} s"
        )


def extract_qumodes(trace: QuadratureTrace, w: WeightFunction, count: int | None = None) -> np.ndarray:
    """Qumode values for slots ``0 .. count-1`` (all complete slots by default)."""
    _check_grid(trace, w)
    if count is None:
        count = qumode_count(trace.duration, w)
    offset, weights = w.window
    step_ns = _ns(w.grid_step)
    return kernels.slot_sums(trace.samples, weights, offset, w.samples_per_slot, count) * step_ns


def extract_qumode(trace: QuadratureTrace, w: WeightFunction, k: int) -> float:
    """``sum_j g_k(t_j) trace(t_j) grid_step`` for one slot."""
    _check_grid(trace, w)
    n = qumode_count(trace.duration, w)
    if not (0 <= k < n):
        raise IndexError(f"slot {k} outside the {n} complete slots of this trace")
    offset, weights = w.window
    start = k * w.samples_per_slot + offset
    seg = trace.samples[start: start + weights.size]
    return float(np.dot(weights, seg) * _ns(w.grid_step))


def normalize_by_shot_noise(values, shot_values):
    """Scale so that a vacuum qumode has variance 1/2: divide by ``sqrt(2 mean(shot^2))``."""
    shot = np.asarray(shot_values, dtype=float)
    if shot.size == 0:
        raise SizeError("no shot-noise values")
    ms = float(np.mean(shot**2))
    if not (ms > 1e-300) or not np.isfinite(ms):
        raise NormalizationError(f"degenerate shot-noise variance {ms!r}")
    return np.asarray(values, dtype=float) / np.sqrt(2.0 * ms)


def autocorrelation(values, m: int) -> float:
    """``C(m) = <v_k v_{k+m}> / <v_k^2>`` averaged over ``k``.

    ``values`` is one series or a 2-D array of series (frames by slots); pairs
    never straddle rows.
    """
    v = np.atleast_2d(np.asarray(values, dtype=float))
    m = int(m)
    n = v.shape[1]
    if n < 2 or abs(m) > n - 1:
        raise SizeError(f"lag {m} needs at least {abs(m) + 1} values per series, have {n}")
    lag = abs(m)
    num = np.mean(v[:, : n - lag] * v[:, lag:])
    den = np.mean(v**2)
    return float(num / den)


class AutocorrelationAccumulator:
    """Mergeable lag products for ``C(m)``, ``0 <= m <= max_lag``."""

    def __init__(self, max_lag: int = 5):
        self.max_lag = int(max_lag)
        self.sums = np.zeros(self.max_lag + 1)
        self.counts = np.zeros(self.max_lag + 1, dtype=np.int64)
        self.frame_ratios = []

    def add(self, v):
        v = np.asarray(v, dtype=float)
        n = v.size
        frame = np.zeros(self.max_lag + 1)
        for m in range(self.max_lag + 1):
            if n > m:
                s = float(np.dot(v[: n - m], v[m:]))
                self.sums[m] += s
                self.counts[m] += n - m
                frame[m] = s / (n - m)
        self.frame_ratios.append(frame / frame[0] if frame[0] > 0 else frame)

    def merge(self, other: "AutocorrelationAccumulator"):
        self.sums += other.sums
        self.counts += other.counts
        self.frame_ratios.extend(other.frame_ratios)

    def values(self) -> np.ndarray:
        means = self.sums / np.maximum(self.counts, 1)
        return means / means[0]

    def std_errors(self) -> np.ndarray:
        """Frame-to-frame standard error of each ``C(m)``."""
        r = np.asarray(self.frame_ratios)
        if r.shape[0] < 2:
            return np.full(self.max_lag + 1, np.nan)
        return r.std(axis=0, ddof=1) / np.sqrt(r.shape[0])


def analytic_autocorrelation(w: WeightFunction, chain: FilterChain, m: int, n_impulse: int = 1 << 14) -> float:
    """Exact ``C(m)`` of weighted-integrated filtered white noise (no sampling error)."""
    h = chain.impulse_response(n_impulse) if not chain.is_identity else np.array([1.0])
    nfull = 1 << int(np.ceil(np.log2(2 * max(h.size, 2))))
    acov = np.fft.irfft(np.abs(np.fft.rfft(h, nfull)) ** 2, nfull)
    offset, g = w.window
    p = w.samples_per_slot

    def cov(lag_slots):
        total = 0.0
        for i, gi in enumerate(g):
            for j, gj in enumerate(g):
                tau = abs(lag_slots * p + j - i)
                if tau < acov.size // 2:
                    total += gi * gj * acov[tau]
        return total

    return cov(int(m)) / cov(0)


def optical_mode_function(w: WeightFunction, chain: FilterChain, n_grid: int = 1 << 15,
                          method: str = "adjoint", floor: float = 1e-3) -> np.ndarray:
    """Optical temporal mode ``f_0`` seen through the detection chain, on a periodic grid.

    ``method="adjoint"`` returns the mode the integrated detector output actually
    projects white input noise onto, ``f(s) = sum_t g(t) e(t - s)`` (spectrum
    ``G conj(H)``). ``method="deconvolution"`` solves ``g = e * f`` by spectral
    division with ``|H|`` floored at ``floor`` times its peak, and warns when the
    floor carries a significant share of the result.
    """
    _, g = w.window
    grid = np.zeros(n_grid)
    start = n_grid // 2
    grid[start: start + g.size] = g
    G = np.fft.fft(grid)
    if chain.is_identity:
        return grid
    h = chain.impulse_response(n_grid)
    H = np.fft.fft(h)
    if method == "adjoint":
        F = G * np.conj(H)
    elif method == "deconvolution":
        mag = np.abs(H)
        lim = floor * mag.max()
        floored = mag < lim
        Hreg = np.where(floored, lim * np.exp(1j * np.angle(H)), H)
        F = G / Hreg
        share = np.sum(np.abs(F[floored]) ** 2) / max(np.sum(np.abs(F) ** 2), 1e-300)
        if share > 0.1:
            warnings.warn(
                f"{share:.0%} of the deconvolved mode energy comes from floored frequencies",
                RegularizationWarning,
                stacklevel=2,
            )
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.real(np.fft.ifft(F))


def effective_mode_overlap(w: WeightFunction, chain: FilterChain, m: int, method: str = "adjoint",
                           n_grid: int = 1 << 15) -> float:
    """``int f_k f_{k+m} / int f_k^2`` for the optical modes behind the weight functions."""
    f = optical_mode_function(w, chain, n_grid=n_grid, method=method)
    shifted = np.roll(f, int(m) * w.samples_per_slot)
    return float(np.dot(f, shifted) / np.dot(f, f))


def scan_balance_offset(shot_traces, w: WeightFunction, candidates, max_lag: int = 5):
    """``max_{1<=|m|<=max_lag} |C(m)|`` from shot-noise records for each candidate ``t_c``.

    Returns ``(rows, best_tc, degenerate)`` with ``rows = [(t_c, max|C|, stat_err)]``.
    ``degenerate`` flags a scan whose spread between candidates is within the
    statistical resolution, i.e. ``t_c`` does not matter.
    """
    candidates = list(candidates)
    if not candidates:
        raise ConfigurationError("empty t_c range")
    rows = []
    for tc in candidates:
        if abs(tc) > w.window_width / 2:
            raise ConfigurationError(f"t_c={tc!r} s lies outside +-T_w/2")
        wc = with_balance_offset(w, tc)
        acc = AutocorrelationAccumulator(max_lag)
        for tr in shot_traces:
            acc.add(extract_qumodes(tr, wc))
        c = acc.values()[1:]
        n_pairs = max(int(acc.counts[1]), 1)
        rows.append((float(tc), float(np.max(np.abs(c))), 1.0 / math.sqrt(n_pairs)))
    vals = np.array([r[1] for r in rows])
    best = rows[int(np.argmin(vals))][0]
    resolution = 3.0 * rows[0][2]
    degenerate = bool(vals.max() - vals.min() < resolution and vals.max() < resolution)
    return rows, best, degenerate


@dataclass(frozen=True)
class QumodeRecord:
    rail: str
    k: int
    quadrature: str
    value: float


def write_qumode_csv(path, records, header: str = ""):
    with open(path, "w", newline="") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["rail", "k", "quadrature", "value"])
        for r in records:
            wr.writerow([r.rail, r.k, r.quadrature, f"{r.value:.10g}"])
