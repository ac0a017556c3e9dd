"""Band-versus-band comparison of evaluation reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..errors import MismatchedRuns
from ..formats import format_float
from ..metrics import AGGREGATE, EvalReport

COMPARISON_HEADER = ["scene", "baseline_band", "band", "extractor", "feature_ratio", "vop_delta", "inlier_ratio_delta"]
PLOT_HEADER = ["metric", "scene", "extractor", "band", "value"]


@dataclass(frozen=True)
class ComparisonRow:
    scene: str
    baseline_band: str
    band: str
    extractor: str
    feature_ratio: float  # band median / baseline median
    vop_delta: float  # percentage points
    inlier_ratio_delta: float


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den


def _index(reports: Sequence[EvalReport]):
    if not reports:
        raise MismatchedRuns("empty report list")
    scenes = {r.scene for r in reports}
    bands = {r.band for r in reports}
    if len(scenes) != 1 or len(bands) != 1:
        raise MismatchedRuns(f"each report list must hold one scene and one band, got {sorted(scenes)} / {sorted(bands)}")
    return scenes.pop(), bands.pop(), {r.extractor: r for r in reports}


def compare_bands(baseline: Sequence[EvalReport], other: Sequence[EvalReport]) -> list[ComparisonRow]:
    """Per-extractor (and aggregate) change from the baseline band to the other band.

    An inlier-ratio delta is NaN when either side never produced a model.
    """
    scene_a, band_a, a = _index(baseline)
    scene_b, band_b, b = _index(other)
    if scene_a != scene_b:
        raise MismatchedRuns(f"scenes differ: {scene_a!r} vs {scene_b!r}")
    if set(a) != set(b):
        raise MismatchedRuns(f"extractor sets differ: {sorted(a)} vs {sorted(b)}")
    order = [r.extractor for r in baseline if r.extractor != AGGREGATE]
    if AGGREGATE in a:
        order.append(AGGREGATE)
    return [
        ComparisonRow(
            scene_a, band_a, band_b, name,
            _ratio(b[name].median_features, a[name].median_features),
            b[name].vop - a[name].vop,
            b[name].inlier_ratio - a[name].inlier_ratio,
        )
        for name in order
    ]


def split_by_band(reports: Sequence[EvalReport]) -> dict[str, list[EvalReport]]:
    out: dict[str, list[EvalReport]] = {}
    for r in reports:
        out.setdefault(r.band, []).append(r)
    return out


def write_comparison_csv(path, rows: Sequence[ComparisonRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_HEADER)
        for r in rows:
            w.writerow([
                r.scene, r.baseline_band, r.band, r.extractor,
                format_float(r.feature_ratio), format_float(r.vop_delta), format_float(r.inlier_ratio_delta),
            ])


def plot_rows(reports: Sequence[EvalReport]) -> list[tuple[str, str, str, str, float]]:
    """Long-format (metric, scene, extractor, band, value) rows for plotting."""
    out = []
    for r in reports:
        out.append(("ln_median_features", r.scene, r.extractor, r.band, r.ln_median_features))
        out.append(("vop_pct", r.scene, r.extractor, r.band, r.vop))
        out.append(("inlier_ratio", r.scene, r.extractor, r.band, r.inlier_ratio))
    return out


def write_plot_data(path, reports: Sequence[EvalReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_HEADER)
        for metric, scene, ext, band, value in plot_rows(reports):
            w.writerow([metric, scene, ext, band, format_float(value)])


def write_svg_charts(directory, reports: Sequence[EvalReport]) -> list[Path]:
    """Grouped bar charts (band on x, one bar per extractor) for each metric.

    Needs matplotlib; raises ImportError when it is not installed.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    bands = list(dict.fromkeys(r.band for r in reports))
    extractors = list(dict.fromkeys(r.extractor for r in reports))
    paths = []
    for metric, label in (("ln_median_features", "ln(1 + median features)"), ("vop", "VOP (%)"),
                          ("inlier_ratio", "inlier ratio")):
        fig, ax = plt.subplots(figsize=(6, 4))
        width = 0.8 / max(len(extractors), 1)
        for k, ext in enumerate(extractors):
            vals = []
            for band in bands:
                match = [r for r in reports if r.band == band and r.extractor == ext]
                vals.append(getattr(match[0], metric) if match else math.nan)
            ax.bar([i + k * width for i in range(len(bands))], vals, width, label=ext)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(bands))], bands)
        ax.set_xlabel("band")
        ax.set_ylabel(label)
        ax.legend()
        fig.tight_layout()
        p = directory / f"{metric}.svg"
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(p)
    return paths


@dataclass(frozen=True)
class AdvantageCheck:
    extractor: str
    baseline_median: float
    median: float
    baseline_vop: float
    vop: float
    factor: float

    @property
    def passed(self) -> bool:
        return self.median >= self.factor * self.baseline_median and self.vop >= self.baseline_vop

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.extractor}: median features {self.median:g} vs {self.baseline_median:g} "
            f"(need >= {self.factor:g}x), VOP {self.vop:.1f}% vs {self.baseline_vop:.1f}%"
        )


def check_band_advantage(
    reports: Sequence[EvalReport], baseline_band: str = "unfiltered", band: str = "850", factor: float = 2.0
) -> list[AdvantageCheck]:
    """Per extractor: does `band` have >= factor x the features and >= the VOP of the baseline?"""
    by_band = split_by_band(reports)
    if baseline_band not in by_band or band not in by_band:
        raise MismatchedRuns(f"reports lack band {baseline_band!r} or {band!r}")
    a = {r.extractor: r for r in by_band[baseline_band] if r.extractor != AGGREGATE}
    b = {r.extractor: r for r in by_band[band] if r.extractor != AGGREGATE}
    if set(a) != set(b):
        raise MismatchedRuns(f"extractor sets differ: {sorted(a)} vs {sorted(b)}")
    return [
        AdvantageCheck(name, a[name].median_features, b[name].median_features, a[name].vop, b[name].vop, factor)
        for name in a
    ]
