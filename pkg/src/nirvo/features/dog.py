"""Difference-of-Gaussians scale-space extrema (the SIFT detector)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..core import GrayImage
from .keypoint import Keypoint

SIGMA0 = 1.6
ASSUMED_BLUR = 0.5
BORDER = 5
MAX_REFINE_ITERS = 5
MAX_OFFSET = 0.6


def gaussian_octaves(img: GrayImage, n_octaves: int, scales_per_octave: int, sigma0: float = SIGMA0):
    """Gaussian stacks per octave, intensities scaled to [0, 1].

    Each octave holds scales_per_octave + 3 images; the next octave starts
    from the image at twice the base blur, decimated by two.
    """
    s = scales_per_octave
    k = 2.0 ** (1.0 / s)
    base = ndimage.gaussian_filter(
        img.as_float() / 255.0, np.sqrt(sigma0 ** 2 - ASSUMED_BLUR ** 2), mode="nearest"
    )
    octaves = []
    for _ in range(n_octaves):
        if min(base.shape) < 2 * BORDER + 3:
            break
        stack = [base]
        for i in range(1, s + 3):
            prev = sigma0 * k ** (i - 1)
            inc = np.sqrt((prev * k) ** 2 - prev ** 2)
            stack.append(ndimage.gaussian_filter(stack[-1], inc, mode="nearest"))
        octaves.append(np.stack(stack))
        base = stack[s][::2, ::2]
    return octaves


def _derivatives(D: np.ndarray, l, y, x):
    """Finite-difference gradient (N, 3) and Hessian (N, 3, 3) in (x, y, layer)."""
    c = D[l, y, x]
    dx = (D[l, y, x + 1] - D[l, y, x - 1]) / 2.0
    dy = (D[l, y + 1, x] - D[l, y - 1, x]) / 2.0
    ds = (D[l + 1, y, x] - D[l - 1, y, x]) / 2.0
    dxx = D[l, y, x + 1] + D[l, y, x - 1] - 2 * c
    dyy = D[l, y + 1, x] + D[l, y - 1, x] - 2 * c
    dss = D[l + 1, y, x] + D[l - 1, y, x] - 2 * c
    dxy = (D[l, y + 1, x + 1] - D[l, y + 1, x - 1] - D[l, y - 1, x + 1] + D[l, y - 1, x - 1]) / 4.0
    dxs = (D[l + 1, y, x + 1] - D[l + 1, y, x - 1] - D[l - 1, y, x + 1] + D[l - 1, y, x - 1]) / 4.0
    dys = (D[l + 1, y + 1, x] - D[l + 1, y - 1, x] - D[l - 1, y + 1, x] + D[l - 1, y - 1, x]) / 4.0
    g = np.stack([dx, dy, ds], axis=1)
    H = np.stack([
        np.stack([dxx, dxy, dxs], axis=1),
        np.stack([dxy, dyy, dys], axis=1),
        np.stack([dxs, dys, dss], axis=1),
    ], axis=1)
    return c, g, H


def refine_extrema(D: np.ndarray, l, y, x, border: int = BORDER):
    """Iterative quadratic refinement of scale-space extrema.

    Returns (l, y, x, offset (N, 3), value, keep-mask). Points whose offset
    stays above MAX_OFFSET after MAX_REFINE_ITERS steps are dropped, as are
    points that walk out of the valid region or sit on a singular Hessian.
    """
    n_layers, h, w = D.shape
    l, y, x = l.copy(), y.copy(), x.copy()
    alive = np.ones(len(l), dtype=bool)
    done = np.zeros(len(l), dtype=bool)
    offset = np.zeros((len(l), 3))
    value = np.zeros(len(l))
    for _ in range(MAX_REFINE_ITERS):
        todo = alive & ~done
        if not todo.any():
            break
        idx = np.nonzero(todo)[0]
        c, g, H = _derivatives(D, l[idx], y[idx], x[idx])
        det = np.linalg.det(H)
        ok = np.abs(det) > 1e-12
        off = np.zeros((len(idx), 3))
        if ok.any():
            off[ok] = -np.linalg.solve(H[ok], g[ok][..., None])[..., 0]
        alive[idx[~ok]] = False
        conv = ok & (np.abs(off).max(axis=1) <= MAX_OFFSET)
        ci = idx[conv]
        done[ci] = True
        offset[ci] = off[conv]
        value[ci] = c[conv] + 0.5 * np.einsum("ij,ij->i", g[conv], off[conv])
        mv = ok & ~conv
        mi = idx[mv]
        step = np.rint(off[mv]).astype(np.intp)
        x[mi] += step[:, 0]
        y[mi] += step[:, 1]
        l[mi] += step[:, 2]
        inside = (
            (l[mi] >= 1) & (l[mi] <= n_layers - 2)
            & (y[mi] >= border) & (y[mi] < h - border)
            & (x[mi] >= border) & (x[mi] < w - border)
        )
        alive[mi[~inside]] = False
    keep = alive & done
    return l, y, x, offset, value, keep


def _strict_extrema(D: np.ndarray, prethreshold: float, border: int):
    fp = np.ones((3, 3, 3), dtype=bool)
    fp[1, 1, 1] = False
    nmax = ndimage.maximum_filter(D, footprint=fp, mode="nearest")
    nmin = ndimage.minimum_filter(D, footprint=fp, mode="nearest")
    ext = ((D > nmax) | (D < nmin)) & (np.abs(D) > prethreshold)
    ext[0] = ext[-1] = False
    ext[:, :border] = ext[:, -border:] = False
    ext[:, :, :border] = ext[:, :, -border:] = False
    return np.nonzero(ext)


def detect_dog(
    img: GrayImage,
    n_octaves: int = 4,
    scales_per_octave: int = 3,
    contrast_threshold: float = 0.04,
    edge_ratio: float = 10.0,
) -> list[Keypoint]:
    """DoG extrema refined to sub-pixel/sub-scale accuracy.

    As in the canonical detector, the contrast threshold is divided by
    scales_per_octave before it is compared with |DoG| (intensities in
    [0, 1]); the edge test keeps points with tr(H)^2/det(H) below
    (r + 1)^2 / r.
    """
    if min(n_octaves, scales_per_octave) < 1 or contrast_threshold <= 0 or edge_ratio <= 0:
        raise ValueError("DoG parameters must be positive")
    s = scales_per_octave
    thr = contrast_threshold / s
    kps: list[Keypoint] = []
    seen = set()
    for o, G in enumerate(gaussian_octaves(img, n_octaves, s)):
        D = G[1:] - G[:-1]
        l, y, x = _strict_extrema(D, 0.5 * thr, BORDER)
        if len(l) == 0:
            continue
        l, y, x, off, val, keep = refine_extrema(D, l, y, x)
        keep &= np.abs(val) >= thr
        # edge rejection on the 2D spatial Hessian
        ki = np.nonzero(keep)[0]
        _, _, H = _derivatives(D, l[ki], y[ki], x[ki])
        tr = H[:, 0, 0] + H[:, 1, 1]
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
        keep[ki] = (det > 0) & (tr * tr * edge_ratio < (edge_ratio + 1.0) ** 2 * det)
        f = 2.0 ** o
        for i in np.nonzero(keep)[0]:
            key = (o, int(l[i]), int(y[i]), int(x[i]))
            if key in seen:
                continue
            seen.add(key)
            bx = (x[i] + off[i, 0]) * f
            by = (y[i] + off[i, 1]) * f
            if not (0 <= bx < img.width and 0 <= by < img.height):
                continue
            sigma = SIGMA0 * 2.0 ** (o + (l[i] + off[i, 2]) / s)
            kps.append(Keypoint(float(bx), float(by), float(sigma), float(abs(val[i])), 0.0, o))
    return kps
