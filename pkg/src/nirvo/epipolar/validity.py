"""Valid/invalid verdicts for estimated relative rotations."""

from __future__ import annotations

from dataclasses import dataclass

from ..core import Rotation, rotation_angle_deg
from .pose import RelativePose

DEFAULT_TOL_DEG = 5.0


@dataclass(frozen=True)
class PairVerdict:
    valid: bool
    error_deg: float | None


def classify_pair(est: RelativePose | Rotation | None, gt: Rotation, tol_deg: float = DEFAULT_TOL_DEG) -> PairVerdict:
    """An estimate is valid iff its rotation is within tol_deg of ground truth.

    `est` may be None or an exception instance to mark a failed estimate,
    which is always invalid and carries no angle.
    """
    if not tol_deg > 0:
        raise ValueError("tol_deg must be > 0")
    if est is None or isinstance(est, BaseException):
        return PairVerdict(False, None)
    r = est.r if isinstance(est, RelativePose) else est
    angle = rotation_angle_deg(r, gt)
    return PairVerdict(angle <= tol_deg, angle)
