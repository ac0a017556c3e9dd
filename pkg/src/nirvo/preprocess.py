"""Frame preprocessing: rectification, vignette crop and CLAHE.

The pipeline order is undistort -> (vignette detection + inscribed square
crop) -> CLAHE. Vignette detection runs before CLAHE because CLAHE
amplifies the noise that would otherwise pollute the Hough accumulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import CameraIntrinsics, FrameRecord, GrayImage
from .errors import DegenerateCrop, NoVignette

MIN_CROP_SIDE = 16


# --- lens distortion -----------------------------------------------------

def distort_normalized(x, y, distortion):
    """Apply the radial-tangential model to normalized image coordinates."""
    k1, k2, p1, p2, k3 = distortion
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return xd, yd


def undistort_points(pts, intr: CameraIntrinsics, iterations: int = 50) -> np.ndarray:
    """Map distorted pixel positions to their ideal pinhole positions.

    Fixed-point inversion of the distortion model; converges for the
    moderate coefficients seen in machine-vision lenses.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    xd = (pts[:, 0] - intr.cx) / intr.fx
    yd = (pts[:, 1] - intr.cy) / intr.fy
    x, y = xd.copy(), yd.copy()
    k1, k2, p1, p2, k3 = intr.distortion
    for _ in range(iterations):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
        x = (xd - dx) / radial
        y = (yd - dy) / radial
    return np.column_stack([x * intr.fx + intr.cx, y * intr.fy + intr.cy])


def distort_points(pts, intr: CameraIntrinsics) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    x = (pts[:, 0] - intr.cx) / intr.fx
    y = (pts[:, 1] - intr.cy) / intr.fy
    xd, yd = distort_normalized(x, y, intr.distortion)
    return np.column_stack([xd * intr.fx + intr.cx, yd * intr.fy + intr.cy])


def bilinear_sample(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray, eps: float = 1e-6):
    """Sample arr at float positions; returns (values, inside_mask)."""
    h, w = arr.shape
    inside = (xs >= -eps) & (xs <= w - 1 + eps) & (ys >= -eps) & (ys <= h - 1 + eps)
    xc = np.clip(xs, 0.0, w - 1)
    yc = np.clip(ys, 0.0, h - 1)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    a = arr.astype(np.float64, copy=False)
    top = a[y0, x0] * (1.0 - fx) + a[y0, x1] * fx
    bottom = a[y1, x0] * (1.0 - fx) + a[y1, x1] * fx
    vals = top * (1.0 - fy) + bottom * fy
    return np.where(inside, vals, 0.0), inside


def undistort(img: GrayImage, intr: CameraIntrinsics) -> GrayImage:
    intr.check_image_size(img.width, img.height)
    v, u = np.mgrid[0:img.height, 0:img.width].astype(np.float64)
    x = (u - intr.cx) / intr.fx
    y = (v - intr.cy) / intr.fy
    xd, yd = distort_normalized(x, y, intr.distortion)
    src_u = xd * intr.fx + intr.cx
    src_v = yd * intr.fy + intr.cy
    vals, _ = bilinear_sample(img.pixels, src_u, src_v)
    return GrayImage(np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8))


# --- vignette detection --------------------------------------------------

@dataclass(frozen=True)
class VignetteCircle:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"vignette radius must be positive, got {self.r}")


def _box3(acc: np.ndarray) -> np.ndarray:
    out = np.zeros_like(acc)
    p = np.pad(acc, 1)
    for dy in range(3):
        for dx in range(3):
            out += p[dy:dy + acc.shape[0], dx:dx + acc.shape[1]]
    return out


def detect_vignette(
    img: GrayImage,
    r_min: float,
    r_max: float,
    *,
    radius_step: float = 2.0,
    vote_fraction: float = 0.4,
    edge_fraction: float = 0.25,
    min_edge_magnitude: float = 40.0,
    smooth_sigma: float = 2.0,
) -> VignetteCircle:
    """Find the vignette perimeter with a gradient-directed circular Hough transform.

    Every strong-gradient pixel votes, for each candidate radius, at the two
    points one radius away along its gradient line. Votes are accumulated
    in a 2D centre accumulator per radius and scored over a 3x3 window.
    """
    h, w = img.height, img.width
    if not 0 < r_min < r_max:
        raise ValueError(f"need 0 < r_min < r_max, got {r_min}, {r_max}")
    # smoothing first keeps gradient directions of aliased edges accurate
    a = ndimage.gaussian_filter(img.as_float(), smooth_sigma, mode="nearest")
    gx = ndimage.sobel(a, axis=1, mode="nearest")
    gy = ndimage.sobel(a, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    peak_mag = mag.max()
    if peak_mag < min_edge_magnitude:
        raise NoVignette("image has no usable gradients")
    ys, xs = np.nonzero(mag >= max(min_edge_magnitude, edge_fraction * peak_mag))
    ux = gx[ys, xs] / mag[ys, xs]
    uy = gy[ys, xs] / mag[ys, xs]

    best = None  # (score, r, acc)
    for r in np.arange(r_min, r_max + 1e-9, radius_step):
        votes = []
        for sign in (1.0, -1.0):
            vx = np.floor(xs + sign * r * ux + 0.5).astype(np.intp)
            vy = np.floor(ys + sign * r * uy + 0.5).astype(np.intp)
            ok = (vx >= 0) & (vx < w) & (vy >= 0) & (vy < h)
            votes.append(vy[ok] * w + vx[ok])
        flat = np.concatenate(votes)
        if flat.size == 0:
            continue
        acc = np.bincount(flat, minlength=h * w).reshape(h, w)
        score = _box3(acc)
        peak = int(score.max())
        if best is None or peak > best[0]:
            best = (peak, float(r), acc, score)
    if best is None:
        raise NoVignette("no votes landed inside the image")

    peak, r, acc, score = best
    py, px = np.unravel_index(int(np.argmax(score)), score.shape)
    y0, y1 = max(py - 1, 0), min(py + 2, h)
    x0, x1 = max(px - 1, 0), min(px + 2, w)
    win = acc[y0:y1, x0:x1].astype(np.float64)
    wy, wx = np.mgrid[y0:y1, x0:x1]
    cx = float((win * wx).sum() / win.sum())
    cy = float((win * wy).sum() / win.sum())

    # refine with a weighted algebraic circle fit over the edge band
    for _ in range(2):
        d = np.hypot(xs - cx, ys - cy)
        near = np.abs(d - r) <= radius_step + 2.0 * smooth_sigma + 1.0
        if np.count_nonzero(near) < 3:
            break
        wts = np.sqrt(mag[ys[near], xs[near]])
        px_, py_ = xs[near].astype(np.float64), ys[near].astype(np.float64)
        A = np.column_stack([px_, py_, np.ones_like(px_)]) * wts[:, None]
        b = -(px_ ** 2 + py_ ** 2) * wts
        (D, E, F), *_ = np.linalg.lstsq(A, b, rcond=None)
        cx, cy = -D / 2.0, -E / 2.0
        r = float(np.sqrt(max(cx * cx + cy * cy - F, 1e-12)))

    if peak < vote_fraction * 2.0 * math.pi * r:
        raise NoVignette(
            f"best circle has {peak} votes, below {vote_fraction:.2f} of its circumference"
        )
    return VignetteCircle(cx, cy, r)


def crop_box(c: VignetteCircle, width: int, height: int) -> tuple[int, int, int]:
    """Return (x0, y0, side) of the square inscribed in c, clipped to the image.

    Clipping shrinks the square about the circle centre so it stays square.
    """
    side = math.floor(c.r * math.sqrt(2.0))
    room = min(c.cx + 0.5, width - 0.5 - c.cx, c.cy + 0.5, height - 0.5 - c.cy)
    side = min(side, math.floor(2.0 * room)) if room > 0 else 0
    if side < MIN_CROP_SIDE:
        raise DegenerateCrop(f"inscribed square side {side} px is below {MIN_CROP_SIDE} px")
    x0 = math.floor(c.cx - (side - 1) / 2.0 + 0.5)
    y0 = math.floor(c.cy - (side - 1) / 2.0 + 0.5)
    x0 = min(max(x0, 0), width - side)
    y0 = min(max(y0, 0), height - side)
    return x0, y0, side


def inscribe_crop(img: GrayImage, c: VignetteCircle) -> GrayImage:
    x0, y0, side = crop_box(c, img.width, img.height)
    return GrayImage(img.pixels[y0:y0 + side, x0:x0 + side])


# --- CLAHE ---------------------------------------------------------------

@dataclass(frozen=True)
class ClaheParams:
    tile_grid: tuple[int, int] = (8, 8)
    clip_limit: float = 2.0

    def __post_init__(self):
        rows, cols = self.tile_grid
        if rows < 1 or cols < 1:
            raise ValueError(f"tile grid must be at least 1x1, got {self.tile_grid}")
        if self.clip_limit < 1.0:
            raise ValueError(f"clip_limit must be >= 1.0, got {self.clip_limit}")
        object.__setattr__(self, "tile_grid", (int(rows), int(cols)))


@dataclass
class ClaheTiles:
    """Per-call CLAHE state, exposed so the clip can be checked in tests."""

    tile_h: int
    tile_w: int
    clip: int
    clipped_hist: np.ndarray  # (rows, cols, 256) before redistribution
    lut: np.ndarray  # (rows, cols, 256)


def clahe_tiles(img: GrayImage, p: ClaheParams) -> ClaheTiles:
    rows, cols = p.tile_grid
    h, w = img.height, img.width
    th, tw = -(-h // rows), -(-w // cols)
    # edge tiles are completed by mirroring so all tiles share one size
    padded = np.pad(img.pixels, ((0, th * rows - h), (0, tw * cols - w)), mode="symmetric")
    tiles = padded.reshape(rows, th, cols, tw).transpose(0, 2, 1, 3).reshape(rows * cols, th * tw)
    npix = th * tw
    offsets = np.arange(rows * cols)[:, None] * 256
    hist = np.bincount((tiles.astype(np.int64) + offsets).ravel(), minlength=rows * cols * 256)
    hist = hist.reshape(rows * cols, 256)

    clip = max(int(p.clip_limit * npix / 256), 1)
    clipped = np.minimum(hist, clip)
    excess = (hist - clipped).sum(axis=1)
    bonus = excess // 256
    residual = excess - bonus * 256
    redistributed = clipped + bonus[:, None]
    step = np.where(residual > 0, 256 // np.maximum(residual, 1), 256)[:, None]
    j = np.arange(256)[None, :]
    redistributed += ((j % step == 0) & (j // step < residual[:, None])).astype(np.int64)

    cdf = np.cumsum(redistributed, axis=1)
    lut = (2 * 255 * cdf + npix) // (2 * npix)
    return ClaheTiles(
        th, tw, clip,
        clipped.reshape(rows, cols, 256),
        lut.reshape(rows, cols, 256),
    )


def _blend_axis(n: int, tile: int, count: int):
    """Neighbouring tile indices and integer blend weights along one axis."""
    pos2 = 2 * np.arange(n)
    i0 = np.floor_divide(pos2 - (tile - 1), 2 * tile)
    lo = i0 < 0
    hi = i0 >= count - 1
    i0 = np.clip(i0, 0, count - 1)
    i1 = np.where(lo | hi, i0, i0 + 1)
    num = np.where(lo | hi, 0, pos2 - (2 * i0 * tile + tile - 1))
    den = np.where(lo | hi, 1, 2 * tile)
    return i0, i1, num, den


def clahe(img: GrayImage, p: ClaheParams = ClaheParams()) -> GrayImage:
    """Contrast limited adaptive histogram equalization.

    Tile mappings are blended bilinearly between tile centres; the blend is
    carried out in integer arithmetic so results are exactly reproducible.
    """
    rows, cols = p.tile_grid
    st = clahe_tiles(img, p)
    ri0, ri1, rn, rd = _blend_axis(img.height, st.tile_h, rows)
    ci0, ci1, cn, cd = _blend_axis(img.width, st.tile_w, cols)
    v = img.pixels.astype(np.intp)
    lut = st.lut
    l00 = lut[ri0[:, None], ci0[None, :], v]
    l01 = lut[ri0[:, None], ci1[None, :], v]
    l10 = lut[ri1[:, None], ci0[None, :], v]
    l11 = lut[ri1[:, None], ci1[None, :], v]
    ny, dy = rn[:, None], rd[:, None]
    nx, dx = cn[None, :], cd[None, :]
    num = (dy - ny) * ((dx - nx) * l00 + nx * l01) + ny * ((dx - nx) * l10 + nx * l11)
    den = dy * dx
    out = (2 * num + den) // (2 * den)
    return GrayImage(out.astype(np.uint8))


# --- full pipeline -------------------------------------------------------

@dataclass(frozen=True)
class PreprocessInfo:
    """Where the processed frame sits inside the rectified full frame."""

    origin: tuple[int, int]
    circle: VignetteCircle | None


def default_radius_range(width: int, height: int) -> tuple[float, float]:
    return 0.25 * min(width, height), 0.5 * math.hypot(width, height)


def preprocess_frame_detailed(
    f: FrameRecord,
    intr: CameraIntrinsics,
    vignetted: bool,
    p: ClaheParams | None = ClaheParams(),
    *,
    circle: VignetteCircle | None = None,
    radius_range: tuple[float, float] | None = None,
) -> tuple[FrameRecord, PreprocessInfo]:
    """Run the pipeline and also report the crop origin.

    ``circle`` reuses a vignette found on another stream (paired runs crop
    the unfiltered camera with the filtered camera's square). ``p=None``
    skips CLAHE.
    """
    img = undistort(f.image, intr) if intr.has_distortion else f.image
    origin = (0, 0)
    if vignetted and circle is None:
        r_min, r_max = radius_range or default_radius_range(img.width, img.height)
        circle = detect_vignette(img, r_min, r_max)
    if circle is not None:
        x0, y0, side = crop_box(circle, img.width, img.height)
        img = GrayImage(img.pixels[y0:y0 + side, x0:x0 + side])
        origin = (x0, y0)
    if p is not None:
        img = clahe(img, p)
    return FrameRecord(img, f.t, f.band), PreprocessInfo(origin, circle)


def preprocess_frame(
    f: FrameRecord,
    intr: CameraIntrinsics,
    vignetted: bool,
    p: ClaheParams | None = ClaheParams(),
) -> FrameRecord:
    return preprocess_frame_detailed(f, intr, vignetted, p)[0]
