"""Essential matrices, relative poses and cheirality-based decomposition.

Convention: a point X1 in the first camera frame appears as X2 = R X1 + t in
the second, so normalized correspondences satisfy x2^T E x1 = 0 with
E = [t]x R.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import CameraIntrinsics, Rotation, skew
from ..errors import DecompositionFailure

SQRT2 = float(np.sqrt(2.0))


def _canonical(e: np.ndarray) -> np.ndarray:
    """Project onto the essential manifold, scale to Frobenius sqrt(2), fix the sign."""
    u, _, vt = np.linalg.svd(e)
    out = u @ np.diag([1.0, 1.0, 0.0]) @ vt
    flat = out.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        out = -out
    return out


@dataclass(frozen=True, eq=False)
class EssentialMatrix:
    """Essential matrix projected to singular values (1, 1, 0) at construction."""

    e: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.e, dtype=np.float64)
        if e.shape != (3, 3) or not np.all(np.isfinite(e)):
            raise ValueError("essential matrix must be a finite 3x3 array")
        if np.linalg.norm(e) == 0:
            raise ValueError("essential matrix must be nonzero")
        e = _canonical(e)
        e.setflags(write=False)
        object.__setattr__(self, "e", e)

    @classmethod
    def from_pose(cls, r: Rotation, t) -> "EssentialMatrix":
        return cls(skew(np.asarray(t, dtype=np.float64)) @ r.m)

    def residuals(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        """Algebraic epipolar residuals x2^T E x1 for (N, 2) normalized points."""
        h1, h2 = homogeneous(x1), homogeneous(x2)
        return np.einsum("ni,ij,nj->n", h2, self.e, h1)

    def trace_constraint(self) -> float:
        """Max-abs entry of 2 E E^T E - tr(E E^T) E on the unit-Frobenius matrix."""
        e = self.e / np.linalg.norm(self.e)
        return float(np.abs(2 * e @ e.T @ e - np.trace(e @ e.T) * e).max())

    def close_to(self, other, tol: float = 1e-6) -> bool:
        other = other.e if isinstance(other, EssentialMatrix) else EssentialMatrix(other).e
        return bool(min(np.abs(self.e - other).max(), np.abs(self.e + other).max()) <= tol)


@dataclass(frozen=True, eq=False)
class RelativePose:
    r: Rotation
    t: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(t) - 1.0) > 1e-9:
            raise ValueError("translation direction must have unit norm")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)


def homogeneous(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    return np.hstack([x, np.ones((len(x), 1))])


def normalize_points(pts, intr: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates (N, 2) to normalized image coordinates via K^-1."""
    p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    return np.column_stack([(p[:, 0] - intr.cx) / intr.fx, (p[:, 1] - intr.cy) / intr.fy])


def denormalize_points(x, intr: CameraIntrinsics) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    return np.column_stack([x[:, 0] * intr.fx + intr.cx, x[:, 1] * intr.fy + intr.cy])


def triangulate_depths(r: np.ndarray, t: np.ndarray, x1: np.ndarray, x2: np.ndarray):
    """Least-squares depths (lambda1, lambda2) with lambda2 x2 = lambda1 R x1 + t."""
    a = (r @ homogeneous(x1).T).T
    b = -homogeneous(x2)
    # normal equations of [a b] [l1 l2]^T = -t, one 2x2 system per point
    aa = (a * a).sum(1)
    ab = (a * b).sum(1)
    bb = (b * b).sum(1)
    ra = -(a @ t)
    rb = -(b @ t)
    det = aa * bb - ab * ab
    safe = np.where(np.abs(det) > 1e-15, det, np.inf)
    return (bb * ra - ab * rb) / safe, (aa * rb - ab * ra) / safe


def pose_candidates(e: EssentialMatrix):
    """The four (R, t) factorizations of E."""
    u, _, vt = np.linalg.svd(e.e)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t = u[:, 2]
    out = []
    for r in (u @ w @ vt, u @ w.T @ vt):
        out.append((r, t))
        out.append((r, -t))
    return out


def decompose(e: EssentialMatrix, x1, x2) -> RelativePose:
    """Pick the factorization with the most points in front of both cameras.

    Ties on the count are broken by the larger summed depth margin
    (sum over points of min(lambda1, lambda2)). The winner must put a strict
    majority of the correspondences in front of both cameras.
    """
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    if len(x1) == 0 or len(x1) != len(x2):
        raise ValueError("decompose needs >= 1 correspondence and matching point counts")
    best = None
    for r, t in pose_candidates(e):
        l1, l2 = triangulate_depths(r, t, x1, x2)
        count = int(np.count_nonzero((l1 > 0) & (l2 > 0)))
        margin = float(np.sum(np.minimum(l1, l2)))
        if best is None or (count, margin) > (best[0], best[1]):
            best = (count, margin, r, t)
    count, _, r, t = best
    if 2 * count <= len(x1):
        raise DecompositionFailure(f"best factorization has only {count}/{len(x1)} points in front")
    return RelativePose(Rotation.from_noisy(r), t / np.linalg.norm(t))
