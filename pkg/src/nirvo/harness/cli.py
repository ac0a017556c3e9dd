"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 data error (bad or
missing input files, unwritable output, or a failed self-test check).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import ConfigError, PipelineError
from ..metrics import read_report_csv
from ..preprocess import preprocess_frame_detailed
from ..synth import emit_dataset, render_scene
from .compare import (
    check_band_advantage, compare_bands, split_by_band, write_comparison_csv, write_plot_data, write_svg_charts,
)
from .config import ExperimentConfig, load_config
from .ingest import load_dataset
from .pipeline import REPORT_FILE, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file ([scene] [preprocess] [ransac] [sensor])")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")

    p = _Parser(prog="nirvo", description="NIR-versus-visible feature and visual-odometry evaluation.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic dataset")
    s.add_argument("--bands", help="comma-separated bands (default: from config)")
    s.add_argument("--frames", type=int, help="frames per band")

    s = sub.add_parser("preprocess", parents=[common], help="rectify, crop and equalize a dataset")
    s.add_argument("manifest", type=Path, nargs="?", help="dataset directory (default: the config's manifest)")
    s.add_argument("--vignetted", action="store_true", help="detect the vignette and crop to its square")
    s.add_argument("--no-clahe", action="store_true", help="skip CLAHE")

    s = sub.add_parser("evaluate", parents=[common], help="run the evaluation and write report.csv")
    s.add_argument("--no-clahe", action="store_true", help="skip CLAHE (ablation)")

    s = sub.add_parser("compare", parents=[common], help="compare bands from report CSVs")
    s.add_argument("reports", type=Path, nargs="+", help="one or two report.csv files")
    s.add_argument("--baseline-band", default="unfiltered")
    s.add_argument("--svg", action="store_true", help="also write SVG bar charts (needs matplotlib)")

    s = sub.add_parser("selftest", parents=[common], help="run the end-to-end NIR-vs-visible scenario")
    s.add_argument("--frames", type=int, default=60, help="frames per band (default 60)")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config is not None else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = replace(cfg, output=args.out)
    return cfg


def _cmd_synth(args) -> int:
    cfg = _config(args)
    if cfg.synth is None:
        raise ConfigError("synth needs a synthetic scene, not a manifest")
    scene = cfg.synth if args.frames is None else replace(cfg.synth, frames=args.frames)
    bands = tuple(b.strip() for b in args.bands.split(",")) if args.bands else cfg.bands
    out = cfg.output or Path("dataset")
    frames, imu = [], None
    for band in bands:
        fr, imu = render_scene(scene.for_band(band))
        frames.extend(fr)
    m = emit_dataset(frames, imu, out, scene.intrinsics())
    (Path(out) / "scene.cfg").write_text(scene.to_text())
    print(f"wrote {m.frames} frames ({', '.join(m.bands)}) and {m.imu_samples} IMU samples to {out}")
    return EXIT_OK


def _cmd_preprocess(args) -> int:
    cfg = _config(args) if args.config is not None else None
    manifest = args.manifest or (cfg.manifest if cfg else None)
    if manifest is None:
        raise ConfigError("preprocess needs a dataset directory")
    if args.out is None:
        raise ConfigError("preprocess needs --out")
    clahe = None if args.no_clahe else (cfg.clahe if cfg else ExperimentConfig().clahe)
    ds = load_dataset(manifest)
    if ds.intrinsics is None:
        raise ConfigError(f"{manifest}: no calibration.txt")
    vignetted = args.vignetted or (cfg.vignetted if cfg else False)
    out_frames, circle, origin = [], None, (0, 0)
    for f in ds.frames:
        pf, info = preprocess_frame_detailed(f, ds.intrinsics, vignetted, clahe, circle=circle)
        circle, origin = info.circle, info.origin
        out_frames.append(pf)
    intr = ds.intrinsics.undistorted().shifted(*origin)
    m = emit_dataset(out_frames, ds.imu, args.out, intr)
    print(f"wrote {m.frames} processed frames to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = _config(args)
    if args.no_clahe:
        cfg = replace(cfg, clahe=None)
    if cfg.output is None:
        cfg = replace(cfg, output=Path("results"))
    reports, ledger = run_experiment(cfg)
    for r in reports:
        ratio = "n/a" if r.inlier_ratio != r.inlier_ratio else f"{r.inlier_ratio:.3f}"
        print(f"{r.scene} {r.band:>10} {r.extractor:>4}  median {r.median_features:>8g}  "
              f"VOP {r.vop:5.1f}%  inliers {ratio}")
    print(f"{ledger.pairs} pairs; report in {Path(cfg.output) / REPORT_FILE}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    if len(args.reports) > 2:
        raise ConfigError("compare takes one or two report files")
    reports = [r for path in args.reports for r in _read_reports(path)]
    by_band = split_by_band(reports)
    if args.baseline_band not in by_band:
        raise ConfigError(f"baseline band {args.baseline_band!r} not in the reports")
    base = [r for r in by_band[args.baseline_band]]
    rows = []
    for band, rs in by_band.items():
        if band != args.baseline_band:
            rows.extend(compare_bands(base, rs))
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(out / "comparison.csv", rows)
    write_plot_data(out / "plot_data.csv", reports)
    for r in rows:
        print(f"{r.band:>10} vs {r.baseline_band}: {r.extractor:>4}  feature ratio {r.feature_ratio:.3g}  "
              f"VOP delta {r.vop_delta:+.1f}  inlier delta {r.inlier_ratio_delta:+.3f}")
    if args.svg:
        try:
            write_svg_charts(out, reports)
        except ImportError:
            print("matplotlib is not installed; skipped SVG charts", file=sys.stderr)
    return EXIT_OK


def _read_reports(path: Path):
    try:
        return read_report_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"report file not found: {path}") from None
    except ValueError as exc:
        raise PipelineError(str(exc)) from None


def _cmd_selftest(args) -> int:
    cfg = _config(args)
    if cfg.synth is None:
        raise ConfigError("selftest needs a synthetic scene")
    cfg = replace(cfg, synth=replace(cfg.synth, frames=args.frames), bands=("unfiltered", "850"))
    reports, _ = run_experiment(cfg, write=cfg.output is not None)
    checks = check_band_advantage(reports)
    for c in checks:
        print(c.describe())
    ok = all(c.passed for c in checks)
    print("selftest passed" if ok else "selftest FAILED")
    return EXIT_OK if ok else EXIT_DATA


COMMANDS = {
    "synth": _cmd_synth, "preprocess": _cmd_preprocess, "evaluate": _cmd_evaluate,
    "compare": _cmd_compare, "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"nirvo {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PipelineError, OSError, ValueError) as exc:
        print(f"nirvo {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
