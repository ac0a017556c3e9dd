"""Keypoint orientation and descriptors.

Three kinds, each paired with one detector:

* ``gradient-histogram-128``: 4x4 cells x 8 orientation bins (DoG keypoints)
* ``haar-64``: 4x4 cells x (sum dx, sum dy, sum |dx|, sum |dy|) (fast-Hessian)
* ``binary-256``: 256 rotated intensity comparisons, packed into 32 bytes (FAST)

All sampling happens on a Gaussian-blurred copy of the image chosen from
half-octave blur levels, on a grid rotated into the keypoint frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..core import GrayImage
from .keypoint import Keypoint

GRADIENT_HISTOGRAM = "gradient-histogram-128"
HAAR = "haar-64"
BINARY = "binary-256"
KIND_LENGTH = {GRADIENT_HISTOGRAM: 128, HAAR: 64, BINARY: 32}
KINDS = tuple(KIND_LENGTH)


@dataclass(frozen=True, eq=False)
class Descriptor:
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in KIND_LENGTH:
            raise ValueError(f"unknown descriptor kind {self.kind!r}")
        data = np.asarray(self.data)
        if data.shape != (KIND_LENGTH[self.kind],):
            raise ValueError(f"{self.kind} descriptors have length {KIND_LENGTH[self.kind]}, got {data.shape}")
        if self.kind == GRADIENT_HISTOGRAM and abs(np.linalg.norm(data) - 1.0) > 1e-6:
            raise ValueError("gradient-histogram descriptors must be unit length")


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """Descriptors for the keypoints that survived the border check.

    ``index_map[i]`` is the input-keypoint index of row i; ``dropped`` lists
    the input indices whose sampling window left the image.
    """

    kind: str
    data: np.ndarray
    index_map: np.ndarray
    keypoints: list[Keypoint] = field(default_factory=list)
    dropped: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.data)

    def __getitem__(self, i) -> Descriptor:
        return Descriptor(self.kind, self.data[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))


class _BlurLevels:
    """Lazily built half-octave blur levels (sigma = 2**(k/2)) and their gradients."""

    def __init__(self, img: GrayImage):
        self.a = img.as_float()
        self._cache = {}

    @staticmethod
    def index(sigma):
        return np.maximum(np.rint(2.0 * np.log2(np.maximum(sigma, 1.0))), 0).astype(int)

    def get(self, k: int):
        if k not in self._cache:
            sigma = 2.0 ** (k / 2.0)
            # input is assumed to carry 0.5 px of blur already
            b = ndimage.gaussian_filter(self.a, math.sqrt(sigma * sigma - 0.25), mode="nearest")
            gy, gx = np.gradient(b)
            self._cache[k] = (b, gx, gy)
        return self._cache[k]


def _sample(arr, xs, ys):
    return ndimage.map_coordinates(arr, [ys.ravel(), xs.ravel()], order=1, mode="nearest").reshape(xs.shape)


def _rotate(u, v, theta):
    c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
    return u * c - v * s, u * s + v * c


def _in_bounds(kps_arr, radius, width, height):
    x, y = kps_arr[:, 0], kps_arr[:, 1]
    return (x - radius >= 0) & (x + radius <= width - 1) & (y - radius >= 0) & (y + radius <= height - 1)


def _by_level(blur, sigmas):
    """Yield (rows, (image, gx, gy)) groups sharing a blur level."""
    levels = _BlurLevels.index(sigmas)
    for k in np.unique(levels):
        yield np.nonzero(levels == k)[0], blur.get(int(k))


def _gradient_orientation(blur, arr, radius_factor, weight_factor, sample_factor):
    """Dominant gradient direction from a smoothed 36-bin histogram."""
    n = len(arr)
    theta = np.zeros(n)
    g = np.linspace(-1.0, 1.0, 15)
    gu, gv = np.meshgrid(g, g)
    disk = gu ** 2 + gv ** 2 <= 1.0
    gu, gv = gu[disk][None, :], gv[disk][None, :]
    for rows, (_, gx, gy) in _by_level(blur, sample_factor * arr[:, 2]):
        s = arr[rows, 2][:, None]
        R = radius_factor * s
        xs = arr[rows, 0][:, None] + gu * R
        ys = arr[rows, 1][:, None] + gv * R
        sx, sy = _sample(gx, xs, ys), _sample(gy, xs, ys)
        mag = np.hypot(sx, sy) * np.exp(-((gu * R) ** 2 + (gv * R) ** 2) / (2.0 * (weight_factor * s) ** 2))
        ang = np.mod(np.arctan2(sy, sx), 2 * np.pi)
        b = np.minimum((ang * 36 / (2 * np.pi)).astype(int), 35)
        hist = np.zeros((len(rows), 36))
        np.add.at(hist, (np.repeat(np.arange(len(rows)), b.shape[1]), b.ravel()), mag.ravel())
        for _ in range(2):
            hist = (np.roll(hist, 1, axis=1) + hist + np.roll(hist, -1, axis=1)) / 3.0
        peak = np.argmax(hist, axis=1)
        r = np.arange(len(rows))
        left, mid, right = hist[r, peak - 1], hist[r, peak], hist[r, (peak + 1) % 36]
        den = left - 2 * mid + right
        shift = np.where(np.abs(den) > 1e-12, 0.5 * (left - right) / np.where(den == 0, 1, den), 0.0)
        theta[rows] = (peak + 0.5 + shift) * (2 * np.pi / 36)
    return np.mod(theta, 2 * np.pi)


def _centroid_orientation(blur, arr):
    """Intensity-centroid direction over a disc of radius 15 * scale."""
    g = np.arange(-15, 16, dtype=np.float64)
    gu, gv = np.meshgrid(g, g)
    disk = gu ** 2 + gv ** 2 <= 15 ** 2
    gu, gv = gu[disk][None, :], gv[disk][None, :]
    theta = np.zeros(len(arr))
    for rows, (img, _, _) in _by_level(blur, arr[:, 2]):
        s = arr[rows, 2][:, None]
        vals = _sample(img, arr[rows, 0][:, None] + gu * s, arr[rows, 1][:, None] + gv * s)
        m10 = (vals * gu).sum(axis=1)
        m01 = (vals * gv).sum(axis=1)
        theta[rows] = np.arctan2(m01, m10)
    return np.mod(theta, 2 * np.pi)


def _gradient_histogram(blur, arr):
    n = len(arr)
    out = np.zeros((n, 128))
    idx = np.arange(16)
    gu, gv = np.meshgrid((idx + 0.5 - 8) * 0.75, (idx + 0.5 - 8) * 0.75)  # in units of sigma
    cell = (np.meshgrid(idx // 4, idx // 4)[1] * 4 + np.meshgrid(idx // 4, idx // 4)[0]).ravel()
    gu, gv = gu.ravel()[None, :], gv.ravel()[None, :]
    weight = np.exp(-(gu ** 2 + gv ** 2) / (2.0 * 6.0 ** 2))
    for rows, (_, gx, gy) in _by_level(blur, arr[:, 2]):
        s = arr[rows, 2][:, None]
        th = arr[rows, 4]
        du, dv = _rotate(gu * s, gv * s, th)
        xs, ys = arr[rows, 0][:, None] + du, arr[rows, 1][:, None] + dv
        sx, sy = _sample(gx, xs, ys), _sample(gy, xs, ys)
        c, si = np.cos(th)[:, None], np.sin(th)[:, None]
        rx, ry = sx * c + sy * si, -sx * si + sy * c
        mag = np.hypot(rx, ry) * weight
        o = np.mod(np.arctan2(ry, rx), 2 * np.pi) * 8 / (2 * np.pi)
        o0 = np.floor(o).astype(int) % 8
        frac = o - np.floor(o)
        o1 = (o0 + 1) % 8
        desc = np.zeros((len(rows), 128))
        r = np.repeat(np.arange(len(rows)), 256)
        base = np.tile(cell * 8, len(rows))
        np.add.at(desc, (r, base + o0.ravel()), (mag * (1 - frac)).ravel())
        np.add.at(desc, (r, base + o1.ravel()), (mag * frac).ravel())
        out[rows] = desc
    return _normalize(out, clip=0.2)


def _haar(blur, arr):
    n = len(arr)
    out = np.zeros((n, 64))
    idx = np.arange(20)
    gu, gv = np.meshgrid(idx + 0.5 - 10, idx + 0.5 - 10)  # in units of scale
    cell = ((np.meshgrid(idx // 5, idx // 5)[1] * 4 + np.meshgrid(idx // 5, idx // 5)[0]).ravel())
    gu, gv = gu.ravel()[None, :], gv.ravel()[None, :]
    weight = np.exp(-(gu ** 2 + gv ** 2) / (2.0 * 3.3 ** 2))
    for rows, (_, gx, gy) in _by_level(blur, arr[:, 2]):
        s = arr[rows, 2][:, None]
        th = arr[rows, 4]
        du, dv = _rotate(gu * s, gv * s, th)
        xs, ys = arr[rows, 0][:, None] + du, arr[rows, 1][:, None] + dv
        sx, sy = _sample(gx, xs, ys), _sample(gy, xs, ys)
        c, si = np.cos(th)[:, None], np.sin(th)[:, None]
        rx, ry = (sx * c + sy * si) * weight, (-sx * si + sy * c) * weight
        desc = np.zeros((len(rows), 16, 4))
        for j, comp in enumerate((rx, ry, np.abs(rx), np.abs(ry))):
            for ci in range(16):
                desc[:, ci, j] = comp[:, cell == ci].sum(axis=1)
        out[rows] = desc.reshape(len(rows), 64)
    return _normalize(out)


def _brief_pattern(seed: int = 0x5EED) -> np.ndarray:
    """256 point pairs (x1, y1, x2, y2), isotropic Gaussian, clipped to the 31x31 patch."""
    rng = np.random.default_rng(seed)
    pts = np.clip(np.rint(rng.normal(0.0, 31.0 / 5.0, size=(256, 4))), -15, 15)
    return pts


BRIEF_PATTERN = _brief_pattern()


def _binary(blur, arr):
    n = len(arr)
    bits = np.zeros((n, 256), dtype=bool)
    p = BRIEF_PATTERN
    for rows, (img, _, _) in _by_level(blur, 2.0 * arr[:, 2]):
        s = arr[rows, 2][:, None]
        th = arr[rows, 4]
        x, y = arr[rows, 0][:, None], arr[rows, 1][:, None]
        u1, v1 = _rotate(p[None, :, 0] * s, p[None, :, 1] * s, th)
        u2, v2 = _rotate(p[None, :, 2] * s, p[None, :, 3] * s, th)
        a = _sample(img, x + u1, y + v1)
        b = _sample(img, x + u2, y + v2)
        bits[rows] = a < b
    return np.packbits(bits, axis=1)


def _normalize(d: np.ndarray, clip: float | None = None) -> np.ndarray:
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    flat = norms[:, 0] <= 1e-12
    d = np.where(flat[:, None], 1.0, d)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    if clip is not None:
        d = np.minimum(d, clip)
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
    return d


# window radius in units of keypoint scale, plus a fixed pixel allowance
_WINDOW = {
    GRADIENT_HISTOGRAM: 6.0 * math.sqrt(2.0),
    HAAR: 10.0 * math.sqrt(2.0),
    BINARY: 15.0 * math.sqrt(2.0),
}


def describe(img: GrayImage, kps: Sequence[Keypoint], kind: str, upright: bool = False) -> DescriptorSet:
    """Compute descriptors; keypoints whose window leaves the image are dropped.

    Unless ``upright`` is set, each keypoint first gets an orientation
    (gradient histogram for the real-valued kinds, intensity centroid for
    the binary kind) and the descriptor is sampled in that frame.
    """
    if kind not in KIND_LENGTH:
        raise ValueError(f"unknown descriptor kind {kind!r}")
    dtype = np.uint8 if kind == BINARY else np.float64
    arr = np.array([[k.x, k.y, k.scale, k.response, k.orientation] for k in kps], dtype=np.float64).reshape(-1, 5)
    keep = _in_bounds(arr, _WINDOW[kind] * arr[:, 2] + 2.0, img.width, img.height)
    index_map = np.nonzero(keep)[0]
    dropped = np.nonzero(~keep)[0].tolist()
    arr = arr[keep]
    if len(arr) == 0:
        return DescriptorSet(kind, np.zeros((0, KIND_LENGTH[kind]), dtype=dtype), index_map, [], dropped)

    blur = _BlurLevels(img)
    if not upright:
        if kind == GRADIENT_HISTOGRAM:
            arr[:, 4] = _gradient_orientation(blur, arr, 4.5, 1.5, 1.0)
        elif kind == HAAR:
            arr[:, 4] = _gradient_orientation(blur, arr, 6.0, 2.0, 1.0)
        else:
            arr[:, 4] = _centroid_orientation(blur, arr)

    if kind == GRADIENT_HISTOGRAM:
        data = _gradient_histogram(blur, arr)
    elif kind == HAAR:
        data = _haar(blur, arr)
    else:
        data = _binary(blur, arr)
    oriented = [kps[i].with_orientation(th) for i, th in zip(index_map, arr[:, 4])]
    return DescriptorSet(kind, data.astype(dtype), index_map, oriented, dropped)


# --- binary dumps --------------------------------------------------------
# Sequence of records, each a little-endian uint32 byte length followed by
# the payload. The first record is the kind name (UTF-8); each later record
# is one descriptor (float64 little-endian, or the packed bits for binary).

def write_descriptors(path, descs: DescriptorSet) -> None:
    with open(path, "wb") as fh:
        for payload in [descs.kind.encode("utf-8")] + [
            np.ascontiguousarray(row, dtype="<f8" if descs.kind != BINARY else np.uint8).tobytes()
            for row in descs.data
        ]:
            fh.write(len(payload).to_bytes(4, "little"))
            fh.write(payload)


def read_descriptors(path) -> list[Descriptor]:
    with open(path, "rb") as fh:
        raw = fh.read()
    records, pos = [], 0
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise ValueError(f"{path}: truncated length prefix at byte {pos}")
        n = int.from_bytes(raw[pos:pos + 4], "little")
        pos += 4
        if pos + n > len(raw):
            raise ValueError(f"{path}: truncated record at byte {pos}")
        records.append(raw[pos:pos + n])
        pos += n
    if not records:
        raise ValueError(f"{path}: missing kind record")
    kind = records[0].decode("utf-8")
    dtype = np.uint8 if kind == BINARY else "<f8"
    return [Descriptor(kind, np.frombuffer(r, dtype=dtype).astype(np.uint8 if kind == BINARY else np.float64))
            for r in records[1:]]
