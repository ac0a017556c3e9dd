"""Relative pose from calibrated correspondences."""

from .pose import (
    EssentialMatrix, RelativePose, decompose, denormalize_points, normalize_points, pose_candidates,
    triangulate_depths,
)
from .ransac import RansacParams, RansacResult, ransac_essential, required_iterations, sampson_distance
from .solver import five_point
from .validity import DEFAULT_TOL_DEG, PairVerdict, classify_pair

__all__ = [
    "DEFAULT_TOL_DEG", "EssentialMatrix", "PairVerdict", "RansacParams", "RansacResult", "RelativePose",
    "classify_pair", "decompose", "denormalize_points", "five_point", "normalize_points", "pose_candidates",
    "ransac_essential", "required_iterations", "sampson_distance", "triangulate_depths",
]
