"""Command-line entry point: ``tdmcluster <subcommand> [options]``."""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import pipeline
from .config import RunConfig, config_hash, dump, load_config
from .errors import TDMClusterError
from .modes import scan_balance_offset
from .nullifiers import derivation_text
from .source import QuadratureTrace


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="configuration file (key = value)")
    p.add_argument("--seed", type=int, help="override run.master_seed")
    p.add_argument("--frames", type=int, help="override run.n_frames")
    p.add_argument("--out", metavar="DIR", help="override outputs.directory")
    p.add_argument("--workers", type=int, help="override run.workers")
    p.add_argument("--shot-noise-only", action="store_true", help="replace the optical signal by vacuum")
    p.add_argument("--no-filter", action="store_true", help="bypass the detection filter chain")
    p.add_argument("--smoke", action="store_true", help="10 frames of 1 ms")


def build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    upd = {}
    if args.smoke:
        upd.update({"run.n_frames": 10, "run.frame_duration": 1e-3})
    if args.seed is not None:
        upd["run.master_seed"] = args.seed
    if args.frames is not None:
        upd["run.n_frames"] = args.frames
    if args.out:
        upd["outputs.directory"] = args.out
    if args.workers is not None:
        upd["run.workers"] = args.workers
    if args.shot_noise_only:
        upd["run.shot_noise_only"] = True
    if args.no_filter:
        upd["filter.enabled"] = False
    return cfg.with_updates(**upd) if upd else cfg


def _report(result, out):
    print(f"config_sha256={config_hash(result.config)}")
    print(f"qumodes per rail per frame: {result.qumodes_per_frame}")
    for name, v in zip(pipeline.SIGNAL_CHANNELS, result.signal.qumode_mean_square):
        print(f"normalized qumode variance {name}: {v:.4f}")
    with open(os.path.join(out, "verdict.txt")) as fh:
        print(fh.read(), end="")
    print(f"artifacts written to {out}")


def cmd_simulate(cfg, args):
    out = cfg.outputs.directory
    paths = pipeline.write_traces(cfg, os.path.join(out, "traces"))
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.conf"), "w") as fh:
        fh.write(dump(cfg))
    print(f"wrote {len(paths)} trace files to {os.path.join(out, 'traces')}")
    return 0


def cmd_analyze(cfg, args):
    out = cfg.outputs.directory
    src = pipeline.FileSource(cfg, args.traces or os.path.join(out, "traces"))
    result = pipeline.analyze(cfg, src)
    pipeline.write_artifacts(result, out)
    _report(result, out)
    return 0


def cmd_run(cfg, args):
    out = cfg.outputs.directory
    if cfg.outputs.traces:
        pipeline.write_traces(cfg, os.path.join(out, "traces"))
    result = pipeline.analyze(cfg)
    pipeline.write_artifacts(result, out)
    _report(result, out)
    return 0


def cmd_spectra(cfg, args):
    cfg = cfg.with_updates(**{"outputs.spectra": True, "outputs.qumodes": False, "outputs.autocorrelation": False,
                              "outputs.variance": False, "outputs.mode_functions": False})
    result = pipeline.analyze(cfg)
    hashes = pipeline.write_artifacts(result, cfg.outputs.directory)
    for name in hashes:
        print(name)
    return 0


def cmd_nullifiers(cfg, args):
    text, ok = derivation_text(args.k_max)
    print(text)
    return 0 if ok else 1


def cmd_scan_tc(cfg, args):
    lo, hi = args.range
    if args.step <= 0 or hi < lo:
        raise TDMClusterError("empty t_c range")
    candidates = np.round(np.arange(lo, hi + 0.5 * args.step, args.step), 9) * 1e-9
    src = pipeline.SimulatedSource(cfg)
    fs = cfg.run.sample_rate
    traces = []
    for i in range(cfg.run.n_frames):
        data, _, _ = src.frame(i, pipeline.SHOT)
        traces.extend(QuadratureTrace(row, fs) for row in data)
    rows, best, degenerate = scan_balance_offset(traces, cfg.weight_function(), candidates, cfg.analysis.max_lag)
    out = cfg.outputs.directory
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "scan_tc.csv")
    pipeline._write_rows(path, cfg, ["t_c_ns", "max_abs_c", "stat_err"],
                         [[f"{tc * 1e9:.3f}", f"{c:.6f}", f"{e:.6f}"] for tc, c, e in rows])
    print(f"minimizer t_c = {best * 1e9:.3f} ns" + ("  (degenerate: t_c has no measurable effect)" if degenerate else ""))
    print(f"wrote {path}")
    return 0


COMMANDS = {
    "simulate": (cmd_simulate, "simulate frames and write trace files"),
    "analyze": (cmd_analyze, "analyze trace files written by 'simulate'"),
    "run": (cmd_run, "simulate and analyze in one pass"),
    "spectra": (cmd_spectra, "power spectra of shot-noise and signal records"),
    "nullifiers": (cmd_nullifiers, "print the symbolic nullifier derivation and checks"),
    "scan-tc": (cmd_scan_tc, "scan the weight-function balance offset on shot noise"),
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdmcluster", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _common(p)
        if name == "analyze":
            p.add_argument("--traces", metavar="DIR", help="trace directory (default OUT/traces)")
        if name == "nullifiers":
            p.add_argument("k_max", type=int, nargs="?", default=3, help="number of temporal indices")
        if name == "scan-tc":
            p.add_argument("--range", type=float, nargs=2, default=(-6.0, 10.0), metavar=("LO_NS", "HI_NS"))
            p.add_argument("--step", type=float, default=1.0, metavar="NS")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command][0](cfg, args)
    except (TDMClusterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
