"""Multi-scale FAST (the oriented-FAST pyramid configuration)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..core import GrayImage
from .keypoint import Keypoint

# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)
ARC = 9
NMS_RADIUS = 3


def build_pyramid(img: GrayImage, n_levels: int = 8, scale_factor: float = 1.2) -> list[np.ndarray]:
    """uint8 pyramid; level l pixel (x, y) samples base position (x, y) * scale_factor**l."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    if not scale_factor > 1:
        raise ValueError("scale_factor must be > 1")
    base = img.as_float()
    levels = [img.pixels.copy()]
    for lvl in range(1, n_levels):
        s = scale_factor ** lvl
        w = int(round(img.width / s))
        h = int(round(img.height / s))
        if w < 7 or h < 7:
            break
        # anti-alias before resampling
        smooth = ndimage.gaussian_filter(base, 0.5 * np.sqrt(s * s - 1.0), mode="nearest")
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        sampled = ndimage.map_coordinates(smooth, [yy * s, xx * s], order=1, mode="nearest")
        levels.append(np.clip(np.floor(sampled + 0.5), 0, 255).astype(np.uint8))
    return levels


def fast_score(level: np.ndarray) -> np.ndarray:
    """Largest threshold at which each pixel still passes the 9-of-16 segment test.

    A pixel is a corner at threshold t exactly when its score is >= t.
    Pixels within 3 px of the border score -1.
    """
    a = level.astype(np.int16)
    h, w = a.shape
    out = np.full((h, w), -1, dtype=np.int16)
    if h < 7 or w < 7:
        return out
    c = a[3:h - 3, 3:w - 3]
    diffs = np.stack([a[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx] - c for dx, dy in CIRCLE])
    best = np.full(c.shape, np.iinfo(np.int16).min, dtype=np.int16)
    for d in (diffs, -diffs):
        # running minimum over 9 consecutive circle positions, with wrap-around
        m2 = np.minimum(d, np.roll(d, -1, axis=0))
        m4 = np.minimum(m2, np.roll(m2, -2, axis=0))
        m8 = np.minimum(m4, np.roll(m4, -4, axis=0))
        m9 = np.minimum(m8, np.roll(d, -8, axis=0))
        best = np.maximum(best, m9.max(axis=0))
    out[3:h - 3, 3:w - 3] = best - 1
    return out


def segment_test_mask(level: np.ndarray, threshold: int) -> np.ndarray:
    return fast_score(level) >= threshold


def harris_response(level: np.ndarray, k: float = 0.04, window_sigma: float = 1.0) -> np.ndarray:
    """Harris corner measure det(M) - k trace(M)^2 of the Sobel structure tensor."""
    a = level.astype(np.float64)
    gx = ndimage.sobel(a, axis=1, mode="nearest")
    gy = ndimage.sobel(a, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(gx * gx, window_sigma, mode="nearest")
    syy = ndimage.gaussian_filter(gy * gy, window_sigma, mode="nearest")
    sxy = ndimage.gaussian_filter(gx * gy, window_sigma, mode="nearest")
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def detect_fast_level(level: np.ndarray, threshold: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Corners at one level after non-maximum suppression: (xs, ys, scores).

    Suppression ranks pixels by segment-test score, then Harris response,
    then raster order, so plateaus of equal score keep the pixel nearest the
    true corner. The ranking does not depend on the threshold.
    """
    score = fast_score(level).astype(np.int64)
    corner = score >= threshold
    h, w = score.shape
    order = np.lexsort((-np.arange(h * w), harris_response(level).ravel(), score.ravel()))
    rank = np.empty(h * w, dtype=np.int64)
    rank[order] = np.arange(h * w)
    masked = np.where(corner, rank.reshape(h, w), -1)
    size = 2 * NMS_RADIUS + 1
    local_max = ndimage.maximum_filter(masked, size=size, mode="constant", cval=-1)
    keep = corner & (masked == local_max)
    ys, xs = np.nonzero(keep)
    return xs, ys, score[ys, xs]


def detect_fast_pyramid(
    img: GrayImage,
    threshold: int = 20,
    n_levels: int = 8,
    scale_factor: float = 1.2,
) -> list[Keypoint]:
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    kps = []
    for lvl, level in enumerate(build_pyramid(img, n_levels, scale_factor)):
        s = scale_factor ** lvl
        xs, ys, scores = detect_fast_level(level, threshold)
        for x, y, sc in zip(xs, ys, scores):
            bx, by = float(x) * s, float(y) * s
            if bx < img.width and by < img.height:
                kps.append(Keypoint(bx, by, s, float(sc), 0.0, lvl))
    return kps
