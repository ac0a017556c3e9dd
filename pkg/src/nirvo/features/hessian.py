"""Fast-Hessian blob detector (the SURF detector) on an integral image."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..core import GrayImage
from .dog import MAX_OFFSET, MAX_REFINE_ITERS
from .keypoint import Keypoint

LAYERS_PER_OCTAVE = 4
DXY_WEIGHT = 0.9


def integral_image(a: np.ndarray) -> np.ndarray:
    ii = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.float64)
    ii[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    return ii


def _box(ii, y0, y1, x0, x1):
    """Sums over rows [y0, y1) and cols [x0, x1); all arguments broadcast."""
    return ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]


def filter_size(octave: int, layer: int) -> int:
    return 3 * (2 ** (octave + 1) * (layer + 1) + 1)


def hessian_response(ii: np.ndarray, size: int, step: int, shape) -> np.ndarray:
    """Box-filter det(Hessian) sampled every `step` pixels; zero where the filter does not fit."""
    h, w = shape
    lobe = size // 3
    half = (size - 1) // 2
    ys = np.arange(0, h, step)
    xs = np.arange(0, w, step)
    out = np.zeros((len(ys), len(xs)))
    vy = (ys >= half) & (ys < h - half)
    vx = (xs >= half) & (xs < w - half)
    if not vy.any() or not vx.any():
        return out
    y = ys[vy][:, None]
    x = xs[vx][None, :]
    # second derivative along x: +1 | -2 | +1 lobes, 2*lobe-1 rows tall
    r0, r1 = y - (lobe - 1), y + lobe
    whole = _box(ii, r0, r1, x - half, x + half + 1)
    mid = _box(ii, r0, r1, x - (lobe - 1) // 2, x + (lobe - 1) // 2 + 1)
    dxx = whole - 3.0 * mid
    c0, c1 = x - (lobe - 1), x + lobe
    whole = _box(ii, y - half, y + half + 1, c0, c1)
    mid = _box(ii, y - (lobe - 1) // 2, y + (lobe - 1) // 2 + 1, c0, c1)
    dyy = whole - 3.0 * mid
    dxy = (
        _box(ii, y - lobe, y, x - lobe, x) + _box(ii, y + 1, y + lobe + 1, x + 1, x + lobe + 1)
        - _box(ii, y - lobe, y, x + 1, x + lobe + 1) - _box(ii, y + 1, y + lobe + 1, x - lobe, x)
    )
    norm = 1.0 / (size * size)
    dxx, dyy, dxy = dxx * norm, dyy * norm, dxy * norm
    det = dxx * dyy - (DXY_WEIGHT * dxy) ** 2
    out[np.ix_(vy, vx)] = det
    return out


def _refine(R: np.ndarray, l, y, x):
    """Quadratic refinement in (x, y, layer) on the sampled response stack."""
    n_layers, h, w = R.shape
    l, y, x = l.copy(), y.copy(), x.copy()
    alive = np.ones(len(l), dtype=bool)
    done = np.zeros(len(l), dtype=bool)
    offset = np.zeros((len(l), 3))
    for _ in range(MAX_REFINE_ITERS):
        todo = alive & ~done
        if not todo.any():
            break
        i = np.nonzero(todo)[0]
        L, Y, X = l[i], y[i], x[i]
        c = R[L, Y, X]
        g = np.stack([
            (R[L, Y, X + 1] - R[L, Y, X - 1]) / 2,
            (R[L, Y + 1, X] - R[L, Y - 1, X]) / 2,
            (R[L + 1, Y, X] - R[L - 1, Y, X]) / 2,
        ], axis=1)
        dxx = R[L, Y, X + 1] + R[L, Y, X - 1] - 2 * c
        dyy = R[L, Y + 1, X] + R[L, Y - 1, X] - 2 * c
        dss = R[L + 1, Y, X] + R[L - 1, Y, X] - 2 * c
        dxy = (R[L, Y + 1, X + 1] - R[L, Y + 1, X - 1] - R[L, Y - 1, X + 1] + R[L, Y - 1, X - 1]) / 4
        dxs = (R[L + 1, Y, X + 1] - R[L + 1, Y, X - 1] - R[L - 1, Y, X + 1] + R[L - 1, Y, X - 1]) / 4
        dys = (R[L + 1, Y + 1, X] - R[L + 1, Y - 1, X] - R[L - 1, Y + 1, X] + R[L - 1, Y - 1, X]) / 4
        H = np.stack([
            np.stack([dxx, dxy, dxs], 1), np.stack([dxy, dyy, dys], 1), np.stack([dxs, dys, dss], 1)
        ], 1)
        ok = np.abs(np.linalg.det(H)) > 1e-12
        off = np.zeros((len(i), 3))
        if ok.any():
            off[ok] = -np.linalg.solve(H[ok], g[ok][..., None])[..., 0]
        alive[i[~ok]] = False
        conv = ok & (np.abs(off).max(axis=1) <= MAX_OFFSET)
        done[i[conv]] = True
        offset[i[conv]] = off[conv]
        mv = ok & ~conv
        mi = i[mv]
        st = np.rint(off[mv]).astype(np.intp)
        x[mi] += st[:, 0]
        y[mi] += st[:, 1]
        l[mi] += st[:, 2]
        inside = (
            (l[mi] >= 1) & (l[mi] <= n_layers - 2)
            & (y[mi] >= 1) & (y[mi] < h - 1) & (x[mi] >= 1) & (x[mi] < w - 1)
        )
        alive[mi[~inside]] = False
    return l, y, x, offset, alive & done


def detect_fast_hessian(img: GrayImage, min_hessian: float = 500.0, n_octaves: int = 4) -> list[Keypoint]:
    """Maxima of the box-filter Hessian determinant over a 3x3x3 neighbourhood.

    Intensities stay on the 0-255 scale, so min_hessian has the same
    meaning as the usual SURF hessianThreshold.
    """
    if not min_hessian > 0:
        raise ValueError("min_hessian must be > 0")
    if n_octaves < 1:
        raise ValueError("n_octaves must be >= 1")
    ii = integral_image(img.as_float())
    shape = (img.height, img.width)
    fp = np.ones((3, 3, 3), dtype=bool)
    fp[1, 1, 1] = False
    kps = []
    seen = set()
    for o in range(n_octaves):
        step = 2 ** o
        sizes = [filter_size(o, i) for i in range(LAYERS_PER_OCTAVE)]
        if sizes[-1] > min(shape):
            break
        R = np.stack([hessian_response(ii, s, step, shape) for s in sizes])
        nmax = ndimage.maximum_filter(R, footprint=fp, mode="constant", cval=np.inf)
        cand = (R > nmax) & (R > min_hessian)
        cand[0] = cand[-1] = False
        l, y, x = np.nonzero(cand)
        if len(l) == 0:
            continue
        l, y, x, off, keep = _refine(R, l, y, x)
        size_step = sizes[1] - sizes[0]
        for i in np.nonzero(keep)[0]:
            key = (o, int(l[i]), int(y[i]), int(x[i]))
            if key in seen:
                continue
            seen.add(key)
            bx = (x[i] + off[i, 0]) * step
            by = (y[i] + off[i, 1]) * step
            if not (0 <= bx < img.width and 0 <= by < img.height):
                continue
            size = sizes[l[i]] + off[i, 2] * size_step
            if size <= 0:
                continue
            kps.append(Keypoint(float(bx), float(by), float(1.2 * size / 9.0), float(R[l[i], y[i], x[i]]), 0.0, o))
    return kps
