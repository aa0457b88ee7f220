"""Run configuration: a flat ``key = value`` text format with dotted keys.

Grammar
-------
::

    file    := { line }
    line    := blank | comment | entry
    comment := "#" any-text
    entry   := key "=" value [ "#" any-text ]
    key     := section "." field
    value   := number | "true" | "false" | "none" | text | tone-list
    tone-list := tone { "," tone }        (empty text means no tones)
    tone    := frequency_hz ":" amplitude [ ":" phase_rad ]

Keys are unique; unknown keys and duplicates are errors. Anything not given
takes its default. ``dump`` writes every key in sorted order; its SHA-256
(without the output directory and worker count) identifies a configuration.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from .detection import FilterChain, design_filter_chain, identity_chain
from .errors import ConfigurationError
from .modes import WeightFunction, weight_function
from .network import NetworkConfig, ProbeTone
from .source import Orientation, SqueezerSpec

# Pump that makes the frequency-domain oracle predict -4.3 dB for both nullifier
# types with every other field at its default (see witness.calibrate_pump).
CALIBRATED_PUMP = 0.36555
CALIBRATION_TARGET_DB = -4.3
DEFAULT_TONES = (ProbeTone(231e3, 100.0), ProbeTone(326e3, 100.0))


@dataclass(frozen=True)
class RunSettings:
    master_seed: int = 20240607
    n_frames: int = 1000
    frame_duration: float = 1e-3
    sample_rate: float = 100e6
    warmup_samples: int = 4096
    workers: int = 1
    shot_noise_only: bool = False


@dataclass(frozen=True)
class FilterSettings:
    enabled: bool = True
    highpass_hz: float = 1.5e6
    highpass_order: int = 5
    notch_hz: float = 32e6
    notch_order: int = 3
    notch_attenuation_db: float = 40.0
    lowpass_hz: float = 40e6
    lowpass_order: int = 3


@dataclass(frozen=True)
class DetectionSettings:
    dark_noise_db: float | None = None


@dataclass(frozen=True)
class WeightSettings:
    window_width: float = 120e-9
    fall_time: float = 40e-9
    balance_offset: float = 2e-9
    center_offset: float = 95e-9


@dataclass(frozen=True)
class QuantizerSettings:
    bits: int | None = None
    full_scale: float = 8.0


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "out"
    traces: bool = False
    spectra: bool = True
    qumodes: bool = True
    qumode_frames: int = 1
    autocorrelation: bool = True
    variance: bool = True
    mode_functions: bool = True


@dataclass(frozen=True)
class AnalysisSettings:
    max_lag: int = 5
    n_fft: int = 2048
    spectrum_segments: int = 0  # per frame; 0 means every complete segment


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    squeezer_a: SqueezerSpec = field(default_factory=lambda: SqueezerSpec(CALIBRATED_PUMP, 17e6, "squeeze_x"))
    squeezer_b: SqueezerSpec = field(default_factory=lambda: SqueezerSpec(CALIBRATED_PUMP, 17e6, "squeeze_p"))
    network: NetworkConfig = field(default_factory=lambda: NetworkConfig(probe_tones=DEFAULT_TONES))
    filter: FilterSettings = field(default_factory=FilterSettings)
    detection: DetectionSettings = field(default_factory=DetectionSettings)
    weight: WeightSettings = field(default_factory=WeightSettings)
    quantizer: QuantizerSettings = field(default_factory=QuantizerSettings)
    outputs: OutputSettings = field(default_factory=OutputSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    def __post_init__(self):
        validate(self)

    @property
    def samples_per_frame(self) -> int:
        return int(round(self.run.frame_duration * self.run.sample_rate))

    def filter_chain(self) -> FilterChain:
        fs = self.run.sample_rate
        if not self.filter.enabled:
            return identity_chain(fs)
        kw = {f.name: getattr(self.filter, f.name) for f in fields(FilterSettings) if f.name != "enabled"}
        return design_filter_chain(fs, **kw)

    def weight_function(self) -> WeightFunction:
        w = self.weight
        return weight_function(w.window_width, w.fall_time, w.balance_offset, w.center_offset,
                               self.network.delay_time, 1.0 / self.run.sample_rate)

    def with_updates(self, **flat) -> "RunConfig":
        """Copy with dotted keys replaced by already-typed values, e.g. ``{"run.n_frames": 10}``."""
        sections = {}
        for key, value in flat.items():
            sec, name = _split(key)
            sections.setdefault(sec, {})[name] = value
        kw = {}
        for sec, vals in sections.items():
            try:
                kw[sec] = replace(getattr(self, sec), **vals)
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(f"{sec}: {exc}") from None
        return replace(self, **kw)


def _split(key):
    if "." not in key:
        raise ConfigurationError(f"{key}: keys have the form section.field")
    sec, name = key.split(".", 1)
    if sec not in SECTIONS or name not in SECTIONS[sec]:
        raise ConfigurationError(f"{key}: unknown key")
    return sec, name


def _fail(key, msg):
    raise ConfigurationError(f"{key}: {msg}")


def validate(cfg: RunConfig):
    r = cfg.run
    if r.n_frames < 1:
        _fail("run.n_frames", "must be at least 1")
    if not (r.sample_rate > 0):
        _fail("run.sample_rate", "must be positive")
    if not (r.frame_duration > 0):
        _fail("run.frame_duration", "must be positive")
    n = r.frame_duration * r.sample_rate
    if abs(n - round(n)) > 1e-6 * max(1.0, n):
        _fail("run.frame_duration", f"frame_duration * sample_rate = {n!r} is not an integer")
    if r.warmup_samples < 0:
        _fail("run.warmup_samples", "must be non-negative")
    if r.workers < 1:
        _fail("run.workers", "must be at least 1")
    try:
        cfg.network.delay_samples(r.sample_rate)
    except ConfigurationError as exc:
        _fail("network.delay_time", str(exc))
    nyq = r.sample_rate / 2
    for tone in cfg.network.probe_tones:
        if not (0 <= tone.frequency < nyq):
            _fail("network.probe_tones", f"tone at {tone.frequency!r} Hz is not below Nyquist")
    try:
        cfg.filter_chain()
    except (ValueError, ConfigurationError) as exc:
        _fail("filter", str(exc))
    try:
        cfg.weight_function()
    except ConfigurationError as exc:
        _fail("weight", str(exc))
    q = cfg.quantizer
    if q.bits is not None and q.bits < 2:
        _fail("quantizer.bits", "must be at least 2 or none")
    if not (q.full_scale > 0):
        _fail("quantizer.full_scale", "must be positive")
    a = cfg.analysis
    if a.max_lag < 1:
        _fail("analysis.max_lag", "must be at least 1")
    if a.n_fft < 16:
        _fail("analysis.n_fft", "must be at least 16")
    if a.spectrum_segments < 0:
        _fail("analysis.spectrum_segments", "must be non-negative")
    if cfg.outputs.qumode_frames < 0:
        _fail("outputs.qumode_frames", "must be non-negative")


# --- text form --------------------------------------------------------------

def _parse_bool(s):
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _parse_int(s):
    f = float(s)
    if f != int(f):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(f)


def _optional(parser):
    def parse(s):
        return None if s.lower() == "none" else parser(s)
    return parse


def _parse_tones(s):
    s = s.strip()
    if not s or s.lower() == "none":
        return ()
    out = []
    for item in s.split(","):
        parts = [p.strip() for p in item.split(":")]
        if len(parts) not in (2, 3):
            raise ValueError(f"tone {item.strip()!r} is not frequency:amplitude[:phase]")
        out.append(ProbeTone(*(float(p) for p in parts)))
    return tuple(out)


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Orientation):
        return v.value
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(f"{t.frequency!r}:{t.amplitude!r}:{t.phase!r}" for t in v)
    return str(v)


_sq = {"pump_parameter": float, "cavity_hwhm": float, "orientation": Orientation}
SECTIONS = {
    "run": {"master_seed": _parse_int, "n_frames": _parse_int, "frame_duration": float, "sample_rate": float,
            "warmup_samples": _parse_int, "workers": _parse_int, "shot_noise_only": _parse_bool},
    "squeezer_a": _sq,
    "squeezer_b": _sq,
    "network": {"delay_time": float, "fiber_loss": float, "visibility": float, "quantum_efficiency": float,
                "extra_efficiency": float, "probe_tones": _parse_tones},
    "filter": {"enabled": _parse_bool, "highpass_hz": float, "highpass_order": _parse_int, "notch_hz": float,
               "notch_order": _parse_int, "notch_attenuation_db": float, "lowpass_hz": float,
               "lowpass_order": _parse_int},
    "detection": {"dark_noise_db": _optional(float)},
    "weight": {"window_width": float, "fall_time": float, "balance_offset": float, "center_offset": float},
    "quantizer": {"bits": _optional(_parse_int), "full_scale": float},
    "outputs": {"directory": str, "traces": _parse_bool, "spectra": _parse_bool, "qumodes": _parse_bool,
                "qumode_frames": _parse_int, "autocorrelation": _parse_bool, "variance": _parse_bool,
                "mode_functions": _parse_bool},
    "analysis": {"max_lag": _parse_int, "n_fft": _parse_int, "spectrum_segments": _parse_int},
}


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse configuration text on top of ``base`` (defaults when omitted)."""
    seen = {}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        sec, name = _split(key)
        if key in seen:
            raise ConfigurationError(f"{key}: duplicate key (lines {seen[key]} and {lineno})")
        seen[key] = lineno
        try:
            values[key] = SECTIONS[sec][name](value)
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"{key}: line {lineno}: {exc}") from None
    cfg = base or RunConfig()
    return cfg.with_updates(**values) if values else cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def flatten(cfg: RunConfig) -> dict:
    out = {}
    for sec, keys in SECTIONS.items():
        obj = getattr(cfg, sec)
        for name in keys:
            out[f"{sec}.{name}"] = getattr(obj, name)
    return out


def dump(cfg: RunConfig) -> str:
    """Canonical text form: every key, sorted, one per line."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(flatten(cfg).items()))


# Keys that cannot change any result: where files go and how many threads run.
HASH_EXCLUDED = frozenset({"outputs.directory", "run.workers"})


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical dump, leaving out :data:`HASH_EXCLUDED`."""
    lines = [l for l in dump(cfg).splitlines(keepends=True) if l.split(" = ", 1)[0] not in HASH_EXCLUDED]
    return hashlib.sha256("".join(lines).encode("utf-8")).hexdigest()
