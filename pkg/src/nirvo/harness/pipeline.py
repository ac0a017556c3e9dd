"""End-to-end evaluation: preprocess, detect, match, estimate pose, score."""

from __future__ import annotations

import csv
import json
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import CameraIntrinsics, FrameRecord, ImuStream, ground_truth_relative
from ..epipolar import classify_pair, normalize_points, ransac_essential
from ..errors import ConfigError, NoVignette, PipelineError
from ..features import EXTRACTORS, describe, match
from ..formats import format_float
from ..metrics import EvalReport, PairOutcome, assemble_report, write_report_csv
from ..preprocess import VignetteCircle, default_radius_range, detect_vignette, preprocess_frame_detailed, undistort
from ..synth import VISIBLE_NM, render_scene, wavelength_nm
from .config import ExperimentConfig
from .ingest import load_dataset

REPORT_FILE = "report.csv"
PAIRS_FILE = "pairs.csv"
LEDGER_FILE = "ledger.json"
PAIRS_HEADER = [
    "band", "extractor", "t1", "t2", "valid", "error_deg", "n_matches", "n_inliers", "failure_kind",
]


@dataclass
class RunLedger:
    """Bookkeeping for one run: stage timings, frame counts and pair tallies.

    Tallies are keyed by 'valid', 'invalid' (a model beyond tolerance) or the
    failure kind, so they always sum to the number of processed pairs.
    """

    timings: dict[str, float] = field(default_factory=dict)
    frames: dict[str, int] = field(default_factory=dict)
    tallies: Counter = field(default_factory=Counter)

    def add_time(self, stage: str, seconds: float) -> None:
        self.timings[stage] = self.timings.get(stage, 0.0) + seconds

    def record(self, outcome: PairOutcome) -> None:
        if outcome.failure_kind is not None:
            self.tallies[outcome.failure_kind] += 1
        else:
            self.tallies["valid" if outcome.valid else "invalid"] += 1

    @property
    def pairs(self) -> int:
        return sum(self.tallies.values())

    def to_json(self) -> str:
        return json.dumps(
            {"timings_s": self.timings, "frames": self.frames, "pairs": self.pairs, "tallies": dict(self.tallies)},
            indent=2, sort_keys=True,
        )


class _Timer:
    def __init__(self, ledger: RunLedger, stage: str):
        self.ledger, self.stage = ledger, stage

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.ledger.add_time(self.stage, time.perf_counter() - self.t0)


@dataclass(frozen=True)
class _Prepared:
    """A preprocessed frame, or the error that stopped it."""

    frame: FrameRecord | None
    origin: tuple[int, int]
    error: str | None


def _load_bands(cfg: ExperimentConfig):
    """Per-band frame lists, the IMU stream and the intrinsics."""
    if cfg.synth is not None:
        frames, imu = {}, None
        for band in cfg.bands:
            fr, imu_b = render_scene(cfg.synth.for_band(band))
            frames[band] = fr
            imu = imu if imu is not None else imu_b
        return frames, imu, cfg.synth.intrinsics()
    ds = load_dataset(cfg.manifest, cfg.calibration if cfg.calibration is not None else True)
    if ds.intrinsics is None:
        raise ConfigError(f"{cfg.manifest}: no calibration.txt in the dataset and no calibration configured")
    return {b: ds.band(b) for b in cfg.bands}, ds.imu, ds.intrinsics


def _find_vignette(frames: dict[str, list[FrameRecord]], bands, intr: CameraIntrinsics) -> VignetteCircle | None:
    """Vignette circle from the first filtered band (falling back to any band).

    The circle is shared by every band so all streams are cropped to the same
    square. Frames are tried in order until one yields a circle.
    """
    order = sorted(bands, key=lambda b: wavelength_nm(b) == VISIBLE_NM)
    for band in order:
        for f in frames[band]:
            img = undistort(f.image, intr) if intr.has_distortion else f.image
            try:
                return detect_vignette(img, *default_radius_range(img.width, img.height))
            except NoVignette:
                continue
    return None


def _prepare(frames, intr, cfg: ExperimentConfig, circle) -> list[_Prepared]:
    if cfg.vignetted and circle is None:
        # no frame of any band showed a vignette, so nothing can be cropped
        return [_Prepared(None, (0, 0), NoVignette.__name__) for _ in frames]
    out = []
    for f in frames:
        try:
            pf, info = preprocess_frame_detailed(f, intr, False, cfg.clahe, circle=circle)
            out.append(_Prepared(pf, info.origin, None))
        except PipelineError as exc:
            out.append(_Prepared(None, (0, 0), type(exc).__name__))
    return out


def _pair_outcome(
    cfg: ExperimentConfig, name: str, a: _Prepared, b: _Prepared, da, db, imu: ImuStream,
    intr: CameraIntrinsics, t1: float, t2: float, pair_seed: int,
) -> PairOutcome:
    def fail(kind, n_matches=0):
        return PairOutcome(t1, t2, name, False, None, n_matches, 0, kind)

    if a.error or b.error:
        return fail(a.error or b.error)
    try:
        gt = ground_truth_relative(imu, cfg.extrinsic, t1, t2)
    except PipelineError as exc:
        return fail(type(exc).__name__)
    if isinstance(da, str) or isinstance(db, str):
        return fail(da if isinstance(da, str) else db)
    matches = match(da, db)
    n = len(matches)
    pa = np.array([[da.keypoints[m.idx_a].x, da.keypoints[m.idx_a].y] for m in matches]).reshape(-1, 2)
    pb = np.array([[db.keypoints[m.idx_b].x, db.keypoints[m.idx_b].y] for m in matches]).reshape(-1, 2)
    x1 = normalize_points(pa + np.asarray(a.origin, dtype=np.float64), intr)
    x2 = normalize_points(pb + np.asarray(b.origin, dtype=np.float64), intr)
    try:
        res = ransac_essential(
            x1, x2, cfg.ransac.threshold, cfg.ransac.confidence, cfg.ransac.max_iters, rng_seed=pair_seed,
        )
    except PipelineError as exc:
        return fail(type(exc).__name__, n)
    # X2 = R X1 + t, so the estimate maps frame-1 coordinates into frame 2:
    # it is the transpose of the frame-2-in-frame-1 ground truth.
    verdict = classify_pair(res.pose, gt.T, cfg.vop_threshold_deg)
    return PairOutcome(t1, t2, name, verdict.valid, verdict.error_deg, n, res.n_inliers, None)


def evaluate_band(
    cfg: ExperimentConfig, band: str, frames: list[FrameRecord], imu: ImuStream, intr: CameraIntrinsics,
    circle: VignetteCircle | None, ledger: RunLedger,
) -> tuple[list[EvalReport], dict[str, list[PairOutcome]]]:
    ledger.frames[band] = len(frames)
    with _Timer(ledger, "preprocess"):
        prepared = _prepare(frames, intr, cfg, circle)
    per_outcomes, per_counts = {}, {}
    pairs = [(i, i + cfg.stride) for i in range(len(frames) - cfg.stride)]
    for name in cfg.extractors:
        detector, kind = EXTRACTORS[name]
        descs, counts = [], []
        with _Timer(ledger, f"detect_describe[{name}]"):
            for p in prepared:
                if p.frame is None:
                    descs.append(p.error)
                    counts.append(0)
                    continue
                kps = detector(p.frame.image)
                counts.append(len(kps))
                descs.append(describe(p.frame.image, kps, kind))
        outcomes = []
        with _Timer(ledger, f"match_pose[{name}]"):
            for k, (i, j) in enumerate(pairs):
                o = _pair_outcome(
                    cfg, name, prepared[i], prepared[j], descs[i], descs[j], imu, intr,
                    frames[i].t, frames[j].t, cfg.seed + k,
                )
                ledger.record(o)
                outcomes.append(o)
        per_outcomes[name] = outcomes
        per_counts[name] = counts
    with _Timer(ledger, "metrics"):
        reports = assemble_report(cfg.scene, band, per_outcomes, per_counts)
    return reports, per_outcomes


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> tuple[list[EvalReport], RunLedger]:
    """Evaluate every configured band and extractor.

    With `write` and an output directory configured, writes report.csv,
    pairs.csv (one row per frame pair) and ledger.json there.
    """
    ledger = RunLedger()
    with _Timer(ledger, "load"):
        frames, imu, intr = _load_bands(cfg)
    circle = None
    if cfg.vignetted:
        with _Timer(ledger, "vignette"):
            circle = _find_vignette(frames, cfg.bands, intr)
    reports, all_outcomes = [], {}
    for band in cfg.bands:
        if not frames[band]:
            raise ConfigError(f"no frames for band {band!r}")
        r, outs = evaluate_band(cfg, band, frames[band], imu, intr, circle, ledger)
        reports.extend(r)
        all_outcomes[band] = outs
    if write and cfg.output is not None:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        write_report_csv(out / REPORT_FILE, reports)
        write_pairs_csv(out / PAIRS_FILE, all_outcomes)
        (out / LEDGER_FILE).write_text(ledger.to_json() + "\n")
    return reports, ledger


def write_pairs_csv(path, outcomes: dict[str, dict[str, list[PairOutcome]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIRS_HEADER)
        for band, per in outcomes.items():
            for name, outs in per.items():
                for o in outs:
                    w.writerow([
                        band, name, format_float(o.t1), format_float(o.t2), int(o.valid),
                        "" if o.error_deg is None else format_float(o.error_deg),
                        o.n_matches, o.n_inliers, o.failure_kind or "",
                    ])
