"""Loading datasets written by the synthetic generator (or by hand)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from ..core import BANDS, CameraIntrinsics, FrameRecord, ImuStream
from ..errors import ManifestError, MissingImu
from ..formats import FRAMES_HEADER, read_calibration, read_image, read_imu_log

FRAMES_FILE = "frames.csv"
IMU_FILE = "imu.csv"
CALIBRATION_FILE = "calibration.txt"


@dataclass(frozen=True, eq=False)
class Dataset:
    frames: list[FrameRecord]
    imu: ImuStream
    intrinsics: CameraIntrinsics | None

    def band(self, band: str) -> list[FrameRecord]:
        return [f for f in self.frames if f.band == band]


def ingest(manifest_dir) -> tuple[list[FrameRecord], ImuStream]:
    """Frames (sorted by timestamp, stable) and the IMU stream of a dataset directory."""
    ds = load_dataset(manifest_dir, calibration=False)
    return ds.frames, ds.imu


def _read_manifest(path: Path) -> list[tuple[int, str, float, str]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ManifestError(f"{path}: manifest not found") from None
    except OSError as exc:
        raise ManifestError(f"{path}: {exc.strerror or exc}") from None
    if not rows or [c.strip() for c in rows[0]] != FRAMES_HEADER:
        raise ManifestError(f"{path}:1: header must be {','.join(FRAMES_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ManifestError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        name, t_text, band = (c.strip() for c in row)
        try:
            t = float(t_text)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: field 't' is not a number: {t_text!r}") from None
        if not math.isfinite(t):
            raise ManifestError(f"{path}:{lineno}: field 't' must be finite")
        if band not in BANDS:
            raise ManifestError(f"{path}:{lineno}: field 'band' has unknown label {band!r}")
        out.append((lineno, name, t, band))
    return out


def load_dataset(manifest_dir, calibration: bool | Path = True) -> Dataset:
    """Read frames.csv, its images, imu.csv and, optionally, calibration.

    `calibration` may be a path to a calibration file; True reads
    calibration.txt from the dataset if present.
    """
    root = Path(manifest_dir)
    if not root.is_dir():
        raise ManifestError(f"{root}: dataset directory not found")
    entries = _read_manifest(root / FRAMES_FILE)
    frames = []
    for lineno, name, t, band in entries:
        img_path = root / name
        if not img_path.is_file():
            raise ManifestError(f"{root / FRAMES_FILE}:{lineno}: referenced file {name!r} does not exist")
        try:
            img = read_image(img_path)
        except (OSError, ValueError) as exc:
            raise ManifestError(f"{root / FRAMES_FILE}:{lineno}: cannot read {name!r}: {exc}") from None
        frames.append(FrameRecord(img, t, band))
    frames.sort(key=lambda f: f.t)
    imu_path = root / IMU_FILE
    if not imu_path.is_file():
        raise MissingImu(f"{imu_path}: IMU log not found")
    try:
        imu = read_imu_log(imu_path)
    except ValueError as exc:
        raise ManifestError(str(exc)) from None
    if len(imu) == 0 and frames:
        raise MissingImu(f"{imu_path}: IMU log has no samples")
    intr = None
    if calibration is not False:
        cal_path = root / CALIBRATION_FILE if calibration is True else Path(calibration)
        if cal_path.is_file():
            try:
                intr = read_calibration(cal_path)
            except ValueError as exc:
                raise ManifestError(str(exc)) from None
        elif calibration is not True:
            raise ManifestError(f"{cal_path}: calibration file not found")
    return Dataset(frames, imu, intr)
