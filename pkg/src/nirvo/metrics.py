"""Evaluation metrics and report rows.

* median feature count per video (lower-middle element for even lengths)
* mean of those medians over extractors
* VOP: percentage of frame pairs with a valid rotation estimate
* inlier ratio: inliers over matched correspondences, for pairs with a model
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import EmptyVideo, NoModelsFound
from .formats import format_float

AGGREGATE = "ALL"
REPORT_HEADER = [
    "scene", "band", "extractor", "frames", "median_features", "ln_median_features", "vop_pct", "inlier_ratio",
]


@dataclass(frozen=True)
class PairOutcome:
    t1: float
    t2: float
    extractor: str
    valid: bool
    error_deg: float | None = None
    n_matches: int = 0
    n_inliers: int = 0
    failure_kind: str | None = None

    def __post_init__(self):
        if self.n_matches < 0 or self.n_inliers < 0 or self.n_inliers > self.n_matches:
            raise ValueError(f"need 0 <= n_inliers <= n_matches, got {self.n_inliers}/{self.n_matches}")
        if self.valid and self.error_deg is None:
            raise ValueError("a valid outcome must carry its error angle")
        if self.valid and self.failure_kind is not None:
            raise ValueError("a valid outcome cannot carry a failure kind")

    @property
    def model_found(self) -> bool:
        return self.failure_kind is None


@dataclass(frozen=True)
class EvalReport:
    """One report row. For the aggregate row (extractor ``ALL``) median_features
    holds the mean over extractors; inlier_ratio is NaN when no pair produced
    a model."""

    scene: str
    band: str
    extractor: str
    frames: int
    median_features: float
    mean_median_features: float
    vop: float
    inlier_ratio: float

    def __post_init__(self):
        if not 0.0 <= self.vop <= 100.0:
            raise ValueError(f"vop must be in [0, 100], got {self.vop}")
        if not (math.isnan(self.inlier_ratio) or 0.0 <= self.inlier_ratio <= 1.0):
            raise ValueError(f"inlier_ratio must be in [0, 1], got {self.inlier_ratio}")
        if self.median_features < 0 or self.frames < 0:
            raise ValueError("counts must be non-negative")

    @property
    def ln_median_features(self) -> float:
        return math.log1p(self.median_features)

    def same_as(self, other: "EvalReport") -> bool:
        """Field-wise equality that treats two NaN inlier ratios as equal."""
        a, b = self.inlier_ratio, other.inlier_ratio
        ratio_eq = (math.isnan(a) and math.isnan(b)) or a == b
        return ratio_eq and self.__dict__ | {"inlier_ratio": 0} == other.__dict__ | {"inlier_ratio": 0}


def median_feature_count(per_frame_counts: Sequence[int]) -> int:
    counts = sorted(per_frame_counts)
    if not counts:
        raise EmptyVideo("no frames to take a median over")
    return counts[(len(counts) - 1) // 2]


def mean_over_extractors(medians: Mapping[str, float]) -> float:
    if not medians:
        raise ValueError("no extractors to average over")
    return round(sum(medians.values()) / len(medians), 1)


def vop(outcomes: Sequence[PairOutcome]) -> float:
    if not outcomes:
        raise EmptyVideo("no frame pairs")
    return 100.0 * sum(1 for o in outcomes if o.valid) / len(outcomes)


def inlier_ratio(outcomes: Sequence[PairOutcome]) -> float:
    found = [o for o in outcomes if o.model_found]
    if not outcomes or not found:
        raise NoModelsFound("no frame pair produced an essential matrix")
    matches = sum(o.n_matches for o in found)
    return sum(o.n_inliers for o in found) / matches if matches else 0.0


def _ratio_or_nan(outcomes) -> float:
    try:
        return inlier_ratio(outcomes)
    except NoModelsFound:
        return math.nan


def assemble_report(
    scene: str,
    band: str,
    per_extractor_outcomes: Mapping[str, Sequence[PairOutcome]],
    per_frame_counts: Mapping[str, Sequence[int]],
) -> list[EvalReport]:
    """One row per extractor (in mapping order) followed by the aggregate row.

    The aggregate row pools every extractor's pairs for VOP and inlier ratio.
    """
    if set(per_extractor_outcomes) != set(per_frame_counts):
        raise ValueError("outcome and feature-count maps name different extractors")
    medians = {k: median_feature_count(per_frame_counts[k]) for k in per_frame_counts}
    mean = mean_over_extractors(medians)
    rows = []
    pooled = []
    frames = 0
    for name in per_frame_counts:
        outs = list(per_extractor_outcomes[name])
        pooled.extend(outs)
        frames = max(frames, len(per_frame_counts[name]))
        rows.append(EvalReport(
            scene, band, name, len(per_frame_counts[name]), medians[name], mean, vop(outs), _ratio_or_nan(outs),
        ))
    rows.append(EvalReport(scene, band, AGGREGATE, frames, mean, mean, vop(pooled), _ratio_or_nan(pooled)))
    return rows


def _fmt_count(x: float) -> str:
    return str(x) if isinstance(x, int) else format_float(x)


def write_report_csv(path, rows: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([
                r.scene, r.band, r.extractor, r.frames, _fmt_count(r.median_features),
                format_float(r.ln_median_features), format_float(r.vop), format_float(r.inlier_ratio),
            ])


def _count(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def read_report_csv(path) -> list[EvalReport]:
    """Inverse of write_report_csv; mean_median_features comes from each group's ALL row."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != REPORT_HEADER:
        raise ValueError(f"{path}: header must be {','.join(REPORT_HEADER)}")
    parsed = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(REPORT_HEADER):
            raise ValueError(f"{path}:{lineno}: expected {len(REPORT_HEADER)} fields, got {len(row)}")
        try:
            parsed.append((row[0], row[1], row[2], int(row[3]), _count(row[4]), float(row[6]), float(row[7])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    means = {(p[0], p[1]): float(p[4]) for p in parsed if p[2] == AGGREGATE}
    out = []
    for scene, band, ext, frames, med, v, ratio in parsed:
        if (scene, band) not in means:
            raise ValueError(f"{path}: no {AGGREGATE} row for scene {scene!r}, band {band!r}")
        out.append(EvalReport(scene, band, ext, frames, med, means[(scene, band)], v, ratio))
    return out
