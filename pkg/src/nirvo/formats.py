"""Readers and writers for the on-disk formats.

* images: 8-bit grayscale PNG or binary PGM (P5)
* IMU log: CSV with header ``t,qw,qx,qy,qz``
* frame manifest: ``frames.csv`` with header ``filename,t,band``
* calibration: ``key = value`` lines for fx, fy, cx, cy, k1, k2, p1, p2, k3
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .core import CameraIntrinsics, GrayImage, ImuStream

IMU_HEADER = ["t", "qw", "qx", "qy", "qz"]
FRAMES_HEADER = ["filename", "t", "band"]
CALIBRATION_KEYS = ("fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2", "k3")


def read_image(path) -> GrayImage:
    path = Path(path)
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "1"):
            raise ValueError(f"{path}: expected an 8-bit grayscale image, got mode {im.mode}")
        return GrayImage(np.asarray(im.convert("L")))


def write_image(path, img: GrayImage) -> None:
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".pnm") else "PNG"
    Image.fromarray(np.ascontiguousarray(img.pixels), mode="L").save(path, format=fmt)


def format_float(x: float) -> str:
    # repr round-trips exactly
    return repr(float(x))


def write_imu_log(path, imu: ImuStream) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IMU_HEADER)
        for t, q in zip(imu.t, imu.q):
            w.writerow([format_float(t)] + [format_float(c) for c in q])


def read_imu_log(path) -> ImuStream:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != IMU_HEADER:
        raise ValueError(f"{path}: header must be {','.join(IMU_HEADER)}")
    ts, qs = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        ts.append(vals[0])
        qs.append(vals[1:])
    return ImuStream(ts, np.array(qs).reshape(-1, 4))


def write_calibration(path, intr: CameraIntrinsics) -> None:
    vals = [intr.fx, intr.fy, intr.cx, intr.cy, *intr.distortion]
    lines = [f"{k} = {format_float(v)}" for k, v in zip(CALIBRATION_KEYS, vals)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_calibration(text: str, source: str = "<calibration>") -> CameraIntrinsics:
    values = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CALIBRATION_KEYS:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = float(val)
    missing = [k for k in ("fx", "fy", "cx", "cy") if k not in values]
    if missing:
        raise ValueError(f"{source}: missing keys {missing}")
    dist = tuple(values.get(k, 0.0) for k in ("k1", "k2", "p1", "p2", "k3"))
    return CameraIntrinsics(values["fx"], values["fy"], values["cx"], values["cy"], dist)


def read_calibration(path) -> CameraIntrinsics:
    path = Path(path)
    return parse_calibration(path.read_text(), str(path))
