"""Keypoint type plus the debug CSV dump format."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

KEYPOINT_HEADER = ["x", "y", "scale", "response", "orientation"]


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    response: float
    orientation: float = 0.0
    octave: int = 0  # pyramid level the detection came from

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"keypoint scale must be positive, got {self.scale}")
        if not math.isfinite(self.response):
            raise ValueError("keypoint response must be finite")

    def with_orientation(self, theta: float) -> "Keypoint":
        return Keypoint(self.x, self.y, self.scale, self.response, float(theta), self.octave)


def keypoint_array(kps: Sequence[Keypoint]) -> np.ndarray:
    """(N, 5) array of x, y, scale, response, orientation."""
    if not kps:
        return np.zeros((0, 5))
    return np.array([[k.x, k.y, k.scale, k.response, k.orientation] for k in kps], dtype=np.float64)


def keypoint_positions(kps: Sequence[Keypoint]) -> np.ndarray:
    return keypoint_array(kps)[:, :2]


def write_keypoints_csv(path, kps: Iterable[Keypoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(KEYPOINT_HEADER)
        for k in kps:
            w.writerow([repr(float(v)) for v in (k.x, k.y, k.scale, k.response, k.orientation)])


def read_keypoints_csv(path) -> list[Keypoint]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != KEYPOINT_HEADER:
        raise ValueError(f"{path}: header must be {','.join(KEYPOINT_HEADER)}")
    return [Keypoint(*(float(v) for v in row)) for row in rows[1:] if row]
