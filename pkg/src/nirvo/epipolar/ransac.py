"""RANSAC around the five-point solver with a Sampson-distance residual."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateSample, InsufficientMatches, NoModelFound
from .pose import EssentialMatrix, RelativePose, decompose, homogeneous
from .solver import five_point

SAMPLE_SIZE = 5


@dataclass(frozen=True)
class RansacParams:
    threshold: float = 1e-3
    confidence: float = 0.999
    max_iters: int = 1000

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True, eq=False)
class RansacResult:
    pose: RelativePose
    essential: EssentialMatrix
    inlier_mask: np.ndarray
    iterations_used: int

    @property
    def n_inliers(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


def sampson_distance(e: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """First-order geometric distance to the epipolar constraint.

    `e` may be a single (3, 3) matrix or a stack (K, 3, 3); the result has
    shape (N,) or (K, N) accordingly.
    """
    h1, h2 = homogeneous(x1), homogeneous(x2)
    e = np.asarray(e, dtype=np.float64)
    ex1 = h1 @ np.swapaxes(e, -1, -2)  # rows are (E x1)^T
    etx2 = h2 @ e  # rows are (E^T x2)^T
    num = (ex1 * h2).sum(-1)
    den = ex1[..., 0] ** 2 + ex1[..., 1] ** 2 + etx2[..., 0] ** 2 + etx2[..., 1] ** 2
    return np.abs(num) / np.sqrt(np.maximum(den, 1e-300))


def required_iterations(inlier_fraction: float, confidence: float, cap: int) -> int:
    """N = log(1 - conf) / log(1 - w^5), clamped to [1, cap]."""
    p = inlier_fraction ** SAMPLE_SIZE
    if p <= 0:
        return cap
    if p >= 1:
        return 1
    return int(min(cap, max(1, math.ceil(math.log(1.0 - confidence) / math.log(1.0 - p)))))


def ransac_essential(
    x1,
    x2,
    threshold: float = 1e-3,
    confidence: float = 0.999,
    max_iters: int = 1000,
    rng_seed: int = 0,
) -> RansacResult:
    """Robust essential matrix and pose from normalized correspondences.

    Hypotheses are ranked by inlier count, ties going to the smaller summed
    inlier Sampson distance. A hypothesis counts only if at least
    min(5, N - 5) correspondences outside its own minimal sample agree with
    it; the five sample points fit any model exactly and carry no evidence.
    """
    params = RansacParams(threshold, confidence, max_iters)
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    if len(x1) != len(x2):
        raise ValueError("point arrays differ in length")
    n = len(x1)
    if n < SAMPLE_SIZE:
        raise InsufficientMatches(f"need >= {SAMPLE_SIZE} correspondences, got {n}")
    rng = np.random.default_rng(rng_seed)
    min_support = min(SAMPLE_SIZE, n - SAMPLE_SIZE)
    best_mask, best_e, best_count, best_err = None, None, -1, np.inf
    needed = params.max_iters
    it = 0
    while it < needed:
        it += 1
        sample = rng.choice(n, SAMPLE_SIZE, replace=False)
        try:
            models = five_point(x1[sample], x2[sample])
        except DegenerateSample:
            continue
        if not models:
            continue
        stack = np.stack([m.e for m in models])
        dist = sampson_distance(stack, x1, x2)
        masks = dist < params.threshold
        counts = masks.sum(axis=1)
        outside = counts - masks[:, sample].sum(axis=1)
        err = np.where(masks, dist, 0.0).sum(axis=1)
        for k in np.nonzero(outside >= min_support)[0]:
            if (counts[k], -err[k]) > (best_count, -best_err):
                best_mask, best_e, best_count, best_err = masks[k], models[k], int(counts[k]), err[k]
        if best_mask is not None:
            needed = required_iterations(best_count / n, params.confidence, params.max_iters)
    if best_mask is None:
        raise NoModelFound(f"no model with >= {SAMPLE_SIZE} inliers after {it} iterations")
    pose = decompose(best_e, x1[best_mask], x2[best_mask])
    best_mask = best_mask.copy()
    best_mask.setflags(write=False)
    return RansacResult(pose, best_e, best_mask, it)
