"""Frame simulation and the two-pass analysis (shot-noise reference, then signal)."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import RunConfig, config_hash, dump
from .detection import PeriodogramAccumulator, add_dark_noise, apply_filter, expected_periodogram, quantize, vacuum_density
from .errors import SizeError
from .modes import (
    AutocorrelationAccumulator,
    analytic_autocorrelation,
    extract_qumodes,
    optical_mode_function,
    positive_part,
    qumode_count,
)
from .network import build_exepr_streams, inject_probe_tones
from .nullifiers import exepr_nullifier_expected
from .source import Quadrature, QuadratureTrace, child_seeds, generate_vacuum_stream
from .traceio import SIGNAL_CHANNELS, frame_path, read_trace_file, write_trace_file
from .witness import (
    VarianceAccumulator,
    full_inseparability_test,
    summary_text,
    write_variance_csv,
)

SIGNAL, SHOT = "signal", "shot"
_ROLE_INDEX = {SIGNAL: 0, SHOT: 1}
_CHANNEL_SPEC = (("A", Quadrature.X), ("B", Quadrature.X), ("A", Quadrature.P), ("B", Quadrature.P))


def frame_seed(master_seed: int, frame: int, role: str) -> np.random.SeedSequence:
    """Seed of one frame's signal or shot record, independent of every other frame."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(frame), _ROLE_INDEX[role]))


def simulate_frame(cfg: RunConfig, frame: int, role: str, chain=None, keep_unfiltered: bool = False):
    """Acquire one frame: channels ``A.x, B.x, A.p, B.p`` as a ``(4, n)`` array.

    The record is simulated with ``warmup_samples`` extra leading samples that
    are dropped after filtering, so the filter transient never enters the
    frame. The shot-noise role replaces the optical signal by vacuum and runs it
    through the same detection chain.

    Returns ``(filtered, unfiltered_or_None, clip_count)``.
    """
    fs = cfg.run.sample_rate
    n = cfg.samples_per_frame
    warm = cfg.run.warmup_samples
    total = n + warm
    chain = cfg.filter_chain() if chain is None else chain
    s_opt, s_dark = child_seeds(frame_seed(cfg.run.master_seed, frame, role), 2)
    optical = role == SIGNAL and not cfg.run.shot_noise_only
    if optical:
        rail_a, rail_b = build_exepr_streams(cfg.squeezer_a, cfg.squeezer_b, cfg.network, total, fs, s_opt)
        traces = [rail_a[0], rail_b[0], rail_a[1], rail_b[1]]
    else:
        traces = [
            generate_vacuum_stream(total, fs, np.random.default_rng(s), q, rail)
            for s, (rail, q) in zip(child_seeds(s_opt, 4), _CHANNEL_SPEC)
        ]
    start = frame * cfg.run.frame_duration - warm / fs
    dark = cfg.detection.dark_noise_db
    out = np.empty((4, n))
    raw = np.empty((4, n)) if keep_unfiltered else None
    clips = 0
    for c, (tr, s) in enumerate(zip(traces, child_seeds(s_dark, 4))):
        if dark is not None:
            tr = add_dark_noise(tr, dark, np.random.default_rng(s))
        if optical and cfg.network.probe_tones:
            tr = inject_probe_tones(tr, cfg.network.probe_tones, start)
        if raw is not None:
            raw[c] = tr.samples[warm:]
        filt = apply_filter(chain, tr)
        q, nclip = quantize(filt.with_samples(filt.samples[warm:]), cfg.quantizer.bits, cfg.quantizer.full_scale)
        out[c] = q.samples
        clips += nclip
    return out, raw, clips


class SimulatedSource:
    """Frames produced on demand from the configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.chain = cfg.filter_chain()

    def frame(self, index: int, role: str, keep_unfiltered: bool = False):
        return simulate_frame(self.cfg, index, role, self.chain, keep_unfiltered)


class FileSource:
    """Frames read back from trace files written by :func:`write_traces`."""

    def __init__(self, cfg: RunConfig, directory):
        self.cfg = cfg
        self.directory = directory

    def frame(self, index: int, role: str, keep_unfiltered: bool = False):
        data, rate = read_trace_file(frame_path(self.directory, role, index))
        if abs(rate - self.cfg.run.sample_rate) > 1e-6 or data.shape != (4, self.cfg.samples_per_frame):
            raise SizeError(f"trace {role} frame {index} does not match the configuration")
        return data, None, 0


def _map_frames(fn, n_frames: int, workers: int):
    """``fn(frame)`` for every frame, results in frame order."""
    if workers <= 1:
        return [fn(i) for i in range(n_frames)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_frames)))


def _qumodes(data, cfg: RunConfig, w, count):
    fs = cfg.run.sample_rate
    return np.stack([extract_qumodes(QuadratureTrace(row, fs), w, count) for row in data])


def _new_periodograms(cfg):
    return [PeriodogramAccumulator(cfg.analysis.n_fft, cfg.run.sample_rate) for _ in range(4)]


def _add_spectra(accs, data, cfg):
    seg = cfg.analysis.spectrum_segments or None
    for acc, row in zip(accs, data):
        acc.add(row, max_segments=seg)


@dataclass
class ShotStatistics:
    """Raw (unnormalized) shot-noise qumode statistics per channel."""

    mean_square: np.ndarray  # (4,)
    rel_std_error: np.ndarray  # (4,)
    frame_mean_square: np.ndarray  # (frames, 4)
    autocorr_full: AutocorrelationAccumulator
    autocorr_positive: AutocorrelationAccumulator
    spectra: list

    @property
    def scale(self) -> np.ndarray:
        """Divide raw qumode values by this to reach vacuum variance 1/2."""
        return np.sqrt(2.0 * self.mean_square)


def shot_pass(cfg: RunConfig, source, n_frames: int | None = None) -> ShotStatistics:
    n_frames = cfg.run.n_frames if n_frames is None else n_frames
    if n_frames < 2:
        raise SizeError("shot-noise normalization needs at least 2 frames")
    w = cfg.weight_function()
    wp = positive_part(w)
    count = qumode_count(cfg.run.frame_duration, w)
    lag = cfg.analysis.max_lag

    def one(i):
        data, _, _ = source.frame(i, SHOT)
        q = _qumodes(data, cfg, w, count)
        qp = _qumodes(data, cfg, wp, count)
        full, pos = AutocorrelationAccumulator(lag), AutocorrelationAccumulator(lag)
        for c in range(4):
            full.add(q[c])
            pos.add(qp[c])
        spec = _new_periodograms(cfg) if cfg.outputs.spectra else None
        if spec:
            _add_spectra(spec, data, cfg)
        return np.mean(q**2, axis=1), full, pos, spec

    results = _map_frames(one, n_frames, cfg.run.workers)
    fms = np.array([r[0] for r in results])
    full, pos = AutocorrelationAccumulator(lag), AutocorrelationAccumulator(lag)
    spectra = _new_periodograms(cfg) if cfg.outputs.spectra else None
    for _, f, p, s in results:
        full.merge(f)
        pos.merge(p)
        if spectra:
            for acc, other in zip(spectra, s):
                acc.merge(other)
    ms = fms.mean(axis=0)
    rel = fms.std(axis=0, ddof=1) / np.sqrt(n_frames) / ms
    return ShotStatistics(ms, rel, fms, full, pos, spectra)


def _nullifier_taps(kind):
    X, P = exepr_nullifier_expected(0)
    vec = X if kind == "X" else P
    taps = []
    for (rail, k, quad), c in vec.canonical().items():
        taps.append((SIGNAL_CHANNELS.index(f"{rail}.{quad}"), k, float(c)))
    return taps


def nullifier_series(normalized: np.ndarray):
    """``X_k`` and ``P_k`` for every ``k`` whose modes lie inside the frame."""
    out = []
    for kind in "XP":
        taps = _nullifier_taps(kind)
        span = max(k for _, k, _ in taps)
        n = normalized.shape[1] - span
        out.append(sum(c * normalized[ch, k: k + n] for ch, k, c in taps))
    return out


@dataclass
class SignalStatistics:
    variance: VarianceAccumulator
    qumode_mean_square: np.ndarray  # (4,) of normalized qumodes
    qumode_frame_mean_square: np.ndarray  # (frames, 4)
    spectra_filtered: list
    spectra_unfiltered: list
    qumode_samples: list  # normalized (4, count) arrays of the first frames
    clip_count: int


def signal_pass(cfg: RunConfig, source, shot: ShotStatistics, n_frames: int | None = None) -> SignalStatistics:
    n_frames = cfg.run.n_frames if n_frames is None else n_frames
    w = cfg.weight_function()
    count = qumode_count(cfg.run.frame_duration, w)
    scale = shot.scale[:, None]
    keep = cfg.outputs.qumode_frames if cfg.outputs.qumodes else 0
    want_spec = cfg.outputs.spectra

    def one(i):
        data, raw, clips = source.frame(i, SIGNAL, keep_unfiltered=want_spec)
        norm = _qumodes(data, cfg, w, count) / scale
        X, P = nullifier_series(norm)
        acc = VarianceAccumulator(X.size)
        acc.add(X, P)
        sf = su = None
        if want_spec:
            sf = _new_periodograms(cfg)
            _add_spectra(sf, data, cfg)
            if raw is not None:
                su = _new_periodograms(cfg)
                _add_spectra(su, raw, cfg)
        return acc, np.mean(norm**2, axis=1), sf, su, (norm if i < keep else None), clips

    results = _map_frames(one, n_frames, cfg.run.workers)
    var = results[0][0]
    for r in results[1:]:
        var.merge(r[0])
    fms = np.array([r[1] for r in results])
    sf = su = None
    if want_spec:
        sf = _new_periodograms(cfg)
        for r in results:
            for acc, other in zip(sf, r[2]):
                acc.merge(other)
        if all(r[3] is not None for r in results):
            su = _new_periodograms(cfg)
            for r in results:
                for acc, other in zip(su, r[3]):
                    acc.merge(other)
    samples = [r[4] for r in results if r[4] is not None]
    return SignalStatistics(var, fms.mean(axis=0), fms, sf, su, samples, sum(r[5] for r in results))


@dataclass
class RunResult:
    config: RunConfig
    shot: ShotStatistics
    signal: SignalStatistics
    report: object
    verdict: object
    qumodes_per_frame: int
    artifacts: dict = field(default_factory=dict)


def analyze(cfg: RunConfig, source=None, n_frames: int | None = None) -> RunResult:
    """Shot-noise pass, signal pass, variance report and verdict."""
    source = SimulatedSource(cfg) if source is None else source
    shot = shot_pass(cfg, source, n_frames)
    sig = signal_pass(cfg, source, shot, n_frames)
    # The X nullifier mixes two channels with independent normalization errors.
    rel = 0.5 * float(np.sqrt(np.mean(shot.rel_std_error**2) * 2.0))
    report = sig.variance.report(normalization_rel_se=rel)
    verdict = full_inseparability_test(report)
    count = qumode_count(cfg.run.frame_duration, cfg.weight_function())
    return RunResult(cfg, shot, sig, report, verdict, count)


def write_traces(cfg: RunConfig, directory, source=None, n_frames: int | None = None):
    """Persist signal and shot records of every frame; returns the file paths."""
    os.makedirs(directory, exist_ok=True)
    source = SimulatedSource(cfg) if source is None else source
    n_frames = cfg.run.n_frames if n_frames is None else n_frames
    paths = []

    def one(i):
        out = []
        for role in (SIGNAL, SHOT):
            data, _, _ = source.frame(i, role)
            p = frame_path(directory, role, i)
            write_trace_file(p, data, cfg.run.sample_rate)
            out.append(p)
        return out

    for ps in _map_frames(one, n_frames, cfg.run.workers):
        paths.extend(ps)
    return paths


# --- artifacts -----------------------------------------------------------------

def _header(cfg):
    return f"# config_sha256={config_hash(cfg)}\n"


def _write_rows(path, cfg, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg))
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        wr.writerows(rows)


def _db(x):
    return 10.0 * np.log10(np.maximum(x, 1e-300))


def write_artifacts(result: RunResult, directory) -> dict:
    """Write CSV reports, the verdict summary and the manifest; returns ``{name: sha256}``."""
    cfg = result.config
    os.makedirs(directory, exist_ok=True)
    written = []
    o = cfg.outputs
    w = cfg.weight_function()
    chain = cfg.filter_chain()

    if o.variance:
        p = os.path.join(directory, "variance.csv")
        write_variance_csv(p, result.report, header=f"config_sha256={config_hash(cfg)}")
        written.append(p)
        p = os.path.join(directory, "verdict.txt")
        with open(p, "w") as fh:
            fh.write(summary_text(result.report, result.verdict) + "\n")
        written.append(p)

    if o.autocorrelation:
        p = os.path.join(directory, "autocorrelation.csv")
        full, pos = result.shot.autocorr_full, result.shot.autocorr_positive
        cf, ef, cp, ep = full.values(), full.std_errors(), pos.values(), pos.std_errors()
        wp = positive_part(w)
        rows = []
        for m in range(-cfg.analysis.max_lag, cfg.analysis.max_lag + 1):
            a = abs(m)
            rows.append([m, f"{cf[a]:.6f}", f"{ef[a]:.6f}", f"{cp[a]:.6f}", f"{ep[a]:.6f}",
                         f"{analytic_autocorrelation(w, chain, a):.6f}",
                         f"{analytic_autocorrelation(wp, chain, a):.6f}"])
        _write_rows(p, cfg, ["m", "c_full", "se_full", "c_positive", "se_positive",
                             "c_full_expected", "c_positive_expected"], rows)
        written.append(p)

    if o.spectra and result.shot.spectra:
        fs = cfg.run.sample_rate
        ref = vacuum_density(fs)
        shot_est = [a.estimate(ref) for a in result.shot.spectra]
        freqs = shot_est[0].frequencies
        exp_vac = expected_periodogram(chain, cfg.analysis.n_fft) if not chain.is_identity else None
        names = list(SIGNAL_CHANNELS)
        p = os.path.join(directory, "spectra_shot.csv")
        rows = []
        for i, f in enumerate(freqs):
            row = [f"{f:.1f}"] + [f"{_db(e.power[i] / ref):.4f}" for e in shot_est]
            row.append(f"{_db(exp_vac[i] / ref):.4f}" if exp_vac is not None else "0.0000")
            rows.append(row)
        _write_rows(p, cfg, ["frequency_hz"] + [f"{n}_db" for n in names] + ["expected_db"], rows)
        written.append(p)
        sig_est = [a.estimate(ref) for a in result.signal.spectra_filtered]
        p = os.path.join(directory, "spectra_signal.csv")
        rows = []
        for i, f in enumerate(freqs):
            row = [f"{f:.1f}"] + [f"{_db(e.power[i] / ref):.4f}" for e in sig_est]
            row += [f"{_db(s.power[i] / max(h.power[i], 1e-300)):.4f}" for s, h in zip(sig_est, shot_est)]
            rows.append(row)
        _write_rows(p, cfg, ["frequency_hz"] + [f"{n}_db" for n in names] + [f"{n}_rel_shot_db" for n in names],
                    rows)
        written.append(p)
        if result.signal.spectra_unfiltered:
            raw_est = [a.estimate(ref) for a in result.signal.spectra_unfiltered]
            p = os.path.join(directory, "spectra_signal_unfiltered.csv")
            rows = [[f"{f:.1f}"] + [f"{_db(e.power[i] / ref):.4f}" for e in raw_est] for i, f in enumerate(freqs)]
            _write_rows(p, cfg, ["frequency_hz"] + [f"{n}_db" for n in names], rows)
            written.append(p)

    if o.mode_functions:
        p = os.path.join(directory, "mode_functions.csv")
        n_grid = 4096
        mode = optical_mode_function(w, chain, n_grid=n_grid)
        offset, g = w.window
        start = n_grid // 2
        grid = np.zeros(n_grid)
        grid[start: start + g.size] = g
        peak = np.max(np.abs(mode)) or 1.0
        rows = []
        step_ns = w.grid_step * 1e9
        lo, hi = start - 2 * w.samples_per_slot, start + 3 * w.samples_per_slot
        center = start - offset + w.center_offset / w.grid_step
        for i in range(lo, hi):
            rows.append([f"{(i - center) * step_ns:.1f}", f"{grid[i]:.6f}", f"{mode[i] / peak:.6f}"])
        _write_rows(p, cfg, ["t_ns", "weight", "optical_mode"], rows)
        written.append(p)

    if o.qumodes:
        count = result.qumodes_per_frame
        for f, norm in enumerate(result.signal.qumode_samples):
            p = os.path.join(directory, f"qumodes_{f:05d}.csv")
            rows = []
            for ch, name in enumerate(SIGNAL_CHANNELS):
                rail, quad = name.split(".")
                rows.extend([rail, k, quad, f"{norm[ch, k]:.8f}"] for k in range(count))
            _write_rows(p, cfg, ["rail", "k", "quadrature", "value"], rows)
            written.append(p)

    with open(os.path.join(directory, "config.conf"), "w") as fh:
        fh.write(dump(cfg))

    hashes = {os.path.basename(p): _sha256(p) for p in sorted(written)}
    manifest = {
        "config_sha256": config_hash(cfg),
        "master_seed": cfg.run.master_seed,
        "n_frames": cfg.run.n_frames,
        "frame_seed": "SeedSequence(master_seed, spawn_key=(frame, role)), role 0 = signal, 1 = shot",
        "kernel_backend": kernels.BACKEND,
        "qumodes_per_frame": result.qumodes_per_frame,
        "artifacts": hashes,
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    result.artifacts = hashes
    return hashes


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
