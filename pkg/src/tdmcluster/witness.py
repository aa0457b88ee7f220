"""Nullifier variance statistics and the full-inseparability verdict.

Units: hbar = 1 with vacuum quadrature variance 1/2, so a vacuum nullifier of
four modes has variance 2 and the inseparability bound is 1 (-3.01 dB).
"""
from __future__ import annotations

import csv
import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal

from .detection import FilterChain
from .errors import CoverageError, IncompleteDataError, NonZeroMeanWarning, ParameterError, SizeError
from .modes import WeightFunction
from .network import NetworkConfig
from .nullifiers import exepr_nullifier_expected
from .source import SqueezerSpec, quadrature_spectra

HBAR = 1.0
VACUUM_NULLIFIER = 2.0 * HBAR
BOUND = HBAR
BOUND_DB = 10.0 * np.log10(BOUND / VACUUM_NULLIFIER)
BLOCK = (("A", 0), ("B", 0), ("A", 1), ("B", 1))


def nullifier_variance(values):
    """Mean square and its standard error for one nullifier sampled once per frame.

    Nullifiers are zero-mean by construction, so the mean square is the
    variance; a :class:`NonZeroMeanWarning` is emitted when the sample mean is
    more than 5 standard errors from zero.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise SizeError(f"need at least 2 values, got {v.size}")
    sq = v**2
    var = float(sq.mean())
    se = float(sq.std(ddof=1) / np.sqrt(v.size))
    se_mean = v.std(ddof=1) / np.sqrt(v.size)
    if se_mean > 0 and abs(v.mean()) > 5 * se_mean:
        warnings.warn(f"nullifier mean {v.mean():.4g} is {abs(v.mean()) / se_mean:.1f} SE from zero",
                      NonZeroMeanWarning, stacklevel=2)
    return var, se


def squeezing_db(variance, reference=VACUUM_NULLIFIER):
    """``10 log10(variance / reference)``."""
    if not (reference > 0):
        raise ParameterError(f"reference must be positive, got {reference!r}")
    v = np.asarray(variance, dtype=float)
    if np.any(v <= 0):
        raise ParameterError("variance must be positive to express it in dB")
    out = 10.0 * np.log10(v / reference)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Bipartition:
    """A split of the four-mode block ``S_k`` into two nonempty parts."""

    subset_alpha: frozenset
    subset_beta: frozenset

    def __post_init__(self):
        a, b = frozenset(self.subset_alpha), frozenset(self.subset_beta)
        object.__setattr__(self, "subset_alpha", a)
        object.__setattr__(self, "subset_beta", b)
        if not a or not b:
            raise ValueError("both parts of a bipartition must be nonempty")
        if a & b:
            raise ValueError("bipartition parts overlap")

    @property
    def modes(self) -> frozenset:
        return self.subset_alpha | self.subset_beta

    def key(self):
        """Orientation-free identity (``{a, b}`` equals ``{b, a}``)."""
        return frozenset((self.subset_alpha, self.subset_beta))


@dataclass(frozen=True)
class BlockPattern:
    name: str
    bipartition: Bipartition
    x_offset: int  # X_{k + x_offset}
    p_offset: int  # P_{k + p_offset}


def _block(k):
    return [(r, k + d) for r, d in BLOCK]


def enumerate_block_bipartitions(k: int = 0):
    """The seven patterns (a)-(g) for block ``S_k`` with their witness nullifiers.

    (a)-(e) use ``X_k, P_k``; (f) and (g) use ``X_k, P_{k+1}``.
    """
    A0, B0, A1, B1 = _block(k)
    spec = [
        ("a", {A0}, 0),
        ("b", {B0}, 0),
        ("c", {A1}, 0),
        ("d", {B1}, 0),
        ("e", {A0, B0}, 0),
        ("f", {A0, A1}, 1),
        ("g", {A0, B1}, 1),
    ]
    full = frozenset(_block(k))
    return [BlockPattern(n, Bipartition(frozenset(a), full - frozenset(a)), 0, po) for n, a, po in spec]


def brute_force_bipartitions(modes):
    """Every unordered split of ``modes`` into two nonempty parts."""
    modes = list(modes)
    out = set()
    for r in range(1, len(modes)):
        for a in itertools.combinations(modes, r):
            a = frozenset(a)
            out.add(frozenset((a, frozenset(modes) - a)))
    return out


def bipartition_bound(b: Bipartition, cx, dp, hbar: float = HBAR) -> float:
    """``hbar (|sum_alpha c_j d_j| + |sum_beta c_j d_j|)``.

    ``cx`` and ``dp`` map ``(rail, k)`` to the x- and p-combination coefficients;
    both must list every mode of the bipartition (zeros allowed). Modes outside
    the bipartition must have a vanishing product ``c_j d_j``.
    """
    for name, m in (("cx", cx), ("dp", dp)):
        missing = [j for j in b.modes if j not in m]
        if missing:
            raise IncompleteDataError(f"{name} lacks coefficients for {sorted(missing)}")
    for j in set(cx) | set(dp):
        if j not in b.modes and cx.get(j, 0) * dp.get(j, 0) != 0:
            raise ValueError(f"mode {j} outside the bipartition contributes to the bound")
    sa = sum(cx[j] * dp[j] for j in b.subset_alpha)
    sb = sum(cx[j] * dp[j] for j in b.subset_beta)
    return float(hbar * (abs(sa) + abs(sb)))


def nullifier_coefficients(k: int, kind: str, modes=None):
    """``{(rail, k): coefficient}`` of ``X_k`` (kind ``"X"``) or ``P_k`` (``"P"``), zero-filled over ``modes``."""
    X, P = exepr_nullifier_expected(k)
    vec = X if kind == "X" else P
    out = {(r, kk): int(c) for (r, kk, _), c in vec.canonical().items()}
    for j in modes or ():
        out.setdefault(j, 0)
    return out


def pattern_bound(pattern: BlockPattern) -> float:
    """Bound of one block pattern, using the nullifiers it names."""
    modes = pattern.bipartition.modes
    k = min(kk for _, kk in modes)
    cx = nullifier_coefficients(k + pattern.x_offset, "X", modes)
    dp = nullifier_coefficients(k + pattern.p_offset, "P", modes)
    return bipartition_bound(pattern.bipartition, cx, dp)


class VarianceAccumulator:
    """Mergeable per-k sums of nullifier squares across frames."""

    def __init__(self, n_k: int):
        self.n_k = int(n_k)
        self.n_frames = 0
        self.s1 = {t: np.zeros(self.n_k) for t in "XP"}
        self.s2 = {t: np.zeros(self.n_k) for t in "XP"}
        self.s4 = {t: np.zeros(self.n_k) for t in "XP"}
        self.frame_means = {t: [] for t in "XP"}

    def add(self, x_values, p_values):
        for t, v in (("X", x_values), ("P", p_values)):
            v = np.asarray(v, dtype=float)[: self.n_k]
            if v.size != self.n_k:
                raise SizeError(f"frame has {v.size} {t} nullifiers, expected {self.n_k}")
            sq = v * v
            self.s1[t] += v
            self.s2[t] += sq
            self.s4[t] += sq * sq
            self.frame_means[t].append(float(sq.mean()))
        self.n_frames += 1

    def merge(self, other: "VarianceAccumulator"):
        if other.n_k != self.n_k:
            raise SizeError("accumulators cover different k ranges")
        for t in "XP":
            self.s1[t] += other.s1[t]
            self.s2[t] += other.s2[t]
            self.s4[t] += other.s4[t]
            self.frame_means[t].extend(other.frame_means[t])
        self.n_frames += other.n_frames

    def report(self, normalization_rel_se: float = 0.0, k_start: int = 0) -> "VarianceReport":
        n = self.n_frames
        if n < 2:
            raise SizeError("need at least 2 frames for standard errors")
        var, se, mean = {}, {}, {}
        for t in "XP":
            m2 = self.s2[t] / n
            var_sq = np.maximum(self.s4[t] / n - m2**2, 0.0) * n / (n - 1)
            var[t] = m2
            se[t] = np.sqrt(var_sq / n)
            mean[t] = self.s1[t] / n
        return VarianceReport(
            k=np.arange(k_start, k_start + self.n_k),
            variance=var,
            std_error=se,
            mean=mean,
            n_frames=n,
            frame_means={t: np.asarray(v) for t, v in self.frame_means.items()},
            normalization_rel_se=normalization_rel_se,
        )


@dataclass
class VarianceReport:
    """Per-k nullifier mean squares (shot-normalized, hbar = 1) with frame statistics."""

    k: np.ndarray
    variance: dict
    std_error: dict
    mean: dict
    n_frames: int
    frame_means: dict = field(default_factory=dict)
    normalization_rel_se: float = 0.0

    def squeezing_db(self, kind: str) -> np.ndarray:
        return squeezing_db(self.variance[kind])

    def aggregate(self, kind: str):
        """Mean and standard deviation of the per-k squeezing level in dB."""
        db = self.squeezing_db(kind)
        return float(db.mean()), float(db.std(ddof=1) if db.size > 1 else 0.0)

    def pooled(self, kind: str):
        """Variance pooled over all k, with a standard error from frame-to-frame scatter
        combined with the shot-noise normalization uncertainty."""
        fm = self.frame_means[kind]
        v = float(fm.mean())
        se_frames = float(fm.std(ddof=1) / np.sqrt(fm.size))
        return v, float(np.hypot(se_frames, v * self.normalization_rel_se))

    def worst(self, kind: str):
        i = int(np.argmax(self.variance[kind]))
        return int(self.k[i]), float(self.variance[kind][i])

    def rows(self):
        for t in "XP":
            db = self.squeezing_db(t)
            for i, k in enumerate(self.k):
                v = self.variance[t][i]
                yield int(k), t, float(v), float(self.std_error[t][i]), float(db[i]), bool(v < BOUND)


@dataclass
class InseparabilityVerdict:
    k: np.ndarray
    passed: np.ndarray
    margin_db: np.ndarray
    patterns_violated: np.ndarray  # count of (a)-(g) inequalities broken per k
    partial: np.ndarray  # block lacks P_{k+1}
    implied: bool  # passing blocks break every block inequality

    @property
    def overall(self) -> bool:
        return bool(self.passed.size and self.passed.all())


def full_inseparability_test(report: VarianceReport, k_max: int | None = None) -> InseparabilityVerdict:
    """Per k: pass iff ``<X_k^2> < hbar`` and ``<P_k^2> < hbar`` (strict).

    Also evaluates the seven block inequalities; blocks whose ``P_{k+1}`` is not
    in the report are flagged partial and judged on patterns (a)-(e) only.
    """
    ks = np.asarray(report.k)
    if k_max is None:
        k_max = int(ks[-1])
    wanted = np.arange(int(ks[0]) if ks.size else 0, k_max + 1)
    if ks.size == 0 or k_max > ks[-1] or k_max < ks[0]:
        raise CoverageError(f"report covers k={ks[0] if ks.size else None}..{ks[-1] if ks.size else None}, "
                            f"test asks for up to {k_max}")
    idx = wanted - ks[0]
    vx = report.variance["X"][idx]
    vp = report.variance["P"][idx]
    passed = (vx < BOUND) & (vp < BOUND)
    worst = np.maximum(vx, vp)
    with np.errstate(divide="ignore"):
        margin = 10.0 * np.log10(worst / VACUUM_NULLIFIER) - BOUND_DB
    patterns = enumerate_block_bipartitions(0)
    bounds = [pattern_bound(p) for p in patterns]
    violated = np.zeros(idx.size, dtype=int)
    partial = np.zeros(idx.size, dtype=bool)
    vp_all = report.variance["P"]
    for pat, bound in zip(patterns, bounds):
        j = idx + pat.p_offset
        ok = j < vp_all.size
        lhs = np.where(ok, vx + vp_all[np.minimum(j, vp_all.size - 1)], np.inf)
        violated += (lhs < bound).astype(int)
        partial |= ~ok
    complete = np.where(partial, 5, 7)
    # Patterns (f), (g) use P_{k+1}, so the implication needs it below the bound too.
    nxt = np.minimum(idx + 1, vp_all.size - 1)
    next_ok = partial | (vp_all[nxt] < BOUND)
    implied = bool(np.all(~(passed & next_ok) | (violated == complete)))
    return InseparabilityVerdict(wanted, passed, margin, violated, partial, implied)


def _nullifier_mode_coefficients(kind: str):
    X, P = exepr_nullifier_expected(0)
    vec = X if kind == "X" else P
    out = {"A": {}, "B": {}}
    for (rail, k, _), c in vec.canonical().items():
        out[rail][k] = float(c)
    return out


def analytic_variance_oracle(spec_a: SqueezerSpec, spec_b: SqueezerSpec, config: NetworkConfig,
                             chain: FilterChain, w: WeightFunction, kind: str,
                             dark_noise_db: float | None = None, n_grid: int = 1 << 16) -> float:
    """Predicted shot-normalized nullifier variance, computed in the frequency domain.

    Each independent noise source (two OPO quadratures, fiber vacuum, detection
    vacuum, optional dark noise) contributes ``1/2 * mean_f |W(f)|^2 S(f)``,
    where ``W`` is the spectrum of the nullifier's composite mode function
    propagated back from the weight functions through filter, detection loss,
    second mixer, delay line and first mixer. The shot-noise normalization is
    the same functional applied to vacuum at the detector. Exact for the
    Gaussian model; the only approximation is the frequency grid.
    """
    if kind not in ("X", "P"):
        raise ValueError(f"kind must be 'X' or 'P', got {kind!r}")
    fs = chain.sample_rate
    if abs(fs * w.grid_step - 1.0) > 1e-9:
        raise ParameterError("weight-function grid differs from the filter sample period")
    D = config.delay_samples(fs)
    period = w.samples_per_slot
    nu = np.fft.fftfreq(n_grid)
    f_abs = np.abs(nu) * fs

    offset, g = w.window
    gpad = np.zeros(n_grid)
    gpad[offset: offset + g.size] = g * (w.grid_step / 1e-9)
    G = np.fft.fft(gpad)
    if chain.is_identity:
        H = np.ones(n_grid, dtype=complex)
    else:
        _, H = signal.sosfreqz(chain.sos, worN=n_grid, whole=True)

    coeffs = _nullifier_mode_coefficients(kind)
    W = {}
    for rail in ("A", "B"):
        phase = sum(c * np.exp(-2j * np.pi * nu * m * period) for m, c in coeffs[rail].items())
        W[rail] = G * phase * np.conj(H)

    eta = config.detection_efficiency
    L = config.fiber_loss
    wa3, wb3 = np.sqrt(eta) * W["A"], np.sqrt(eta) * W["B"]
    wa1 = (wa3 + wb3) / np.sqrt(2.0)
    wb2 = (wb3 - wa3) / np.sqrt(2.0)
    wb1 = np.sqrt(1.0 - L) * np.exp(2j * np.pi * nu * D) * wb2
    wsa = (wa1 - wb1) / np.sqrt(2.0)
    wsb = (wa1 + wb1) / np.sqrt(2.0)

    qi = 0 if kind == "X" else 1
    s_a = quadrature_spectra(f_abs, spec_a)[qi]
    s_b = quadrature_spectra(f_abs, spec_b)[qi]
    dark = 0.0 if dark_noise_db is None else 10.0 ** (dark_noise_db / 10.0)
    det_power = np.abs(W["A"]) ** 2 + np.abs(W["B"]) ** 2
    total = (
        np.abs(wsa) ** 2 * s_a
        + np.abs(wsb) ** 2 * s_b
        + L * np.abs(wb2) ** 2
        + ((1.0 - eta) + dark) * det_power
    )
    var = 0.5 * total.mean()
    shot = 0.5 * (np.abs(G) ** 2 * np.abs(H) ** 2).mean() * (1.0 + dark)
    return float(var / (2.0 * shot))


def calibrate_pump(target_db: float, spec_a: SqueezerSpec, spec_b: SqueezerSpec, config: NetworkConfig,
                   chain: FilterChain, w: WeightFunction, kind: str = "X", dark_noise_db=None,
                   n_grid: int = 1 << 16) -> float:
    """Common pump parameter of both sources for which the oracle predicts ``target_db``.

    Both sources matter: the anti-squeezed quadrature of the second source
    leaks into each nullifier through the finite detection bandwidth.
    """

    def level(x):
        a, b = spec_a.with_pump(x), spec_b.with_pump(x)
        return squeezing_db(analytic_variance_oracle(a, b, config, chain, w, kind, dark_noise_db, n_grid)) - target_db

    hi = 0.999
    if level(0.0) < 0 or level(hi) > 0:
        raise ParameterError(f"target {target_db} dB is not reachable with this network")
    return float(optimize.brentq(level, 0.0, hi, xtol=1e-10))


def write_variance_csv(path, report: VarianceReport, header: str = ""):
    """``k,type,variance,std_error,db,pass`` rows."""
    with open(path, "w", newline="") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["k", "type", "variance", "std_error", "db", "pass"])
        for k, t, v, se, db, ok in report.rows():
            wr.writerow([k, t, f"{v:.8f}", f"{se:.8f}", f"{db:.5f}", int(ok)])


def summary_text(report: VarianceReport, verdict: InseparabilityVerdict) -> str:
    lines = [f"frames: {report.n_frames}", f"temporal indices: {report.k.size}"]
    for t in "XP":
        mean_db, std_db = report.aggregate(t)
        pv, pse = report.pooled(t)
        wk, wv = report.worst(t)
        lines.append(f"{t}: mean {mean_db:+.3f} dB, std {std_db:.3f} dB, pooled variance {pv:.5f} +- {pse:.5f}, "
                     f"worst k={wk} at {squeezing_db(wv):+.3f} dB")
    lines.append(f"bound: {BOUND_DB:+.3f} dB (variance < {BOUND:g} hbar)")
    lines.append(f"passing k: {int(verdict.passed.sum())}/{verdict.passed.size}")
    lines.append(f"block inequalities implied by variance test: {'yes' if verdict.implied else 'NO'}")
    lines.append(f"overall: {'PASS' if verdict.overall else 'FAIL'}")
    return "\n".join(lines)
