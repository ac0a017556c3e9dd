"""Ratio-test nearest-neighbour matching with a mutual-consistency filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import KindMismatch
from .describe import BINARY, DescriptorSet


@dataclass(frozen=True)
class Match:
    idx_a: int
    idx_b: int
    distance: float

    def __post_init__(self):
        if self.idx_a < 0 or self.idx_b < 0:
            raise ValueError("match indices must be non-negative")
        if not self.distance >= 0:
            raise ValueError("match distance must be >= 0")


def _as_array(desc):
    if isinstance(desc, DescriptorSet):
        return desc.kind, np.asarray(desc.data)
    desc = list(desc)
    kinds = {d.kind for d in desc}
    if len(kinds) > 1:
        raise KindMismatch(f"mixed descriptor kinds in one list: {sorted(kinds)}")
    kind = kinds.pop() if kinds else None
    if not desc:
        return kind, np.zeros((0, 0))
    return kind, np.stack([np.asarray(d.data) for d in desc])


def distance_matrix(a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    if kind == BINARY:
        # |a xor b| = |a| + |b| - 2 |a and b|; the bit dot product is exact in float32
        ba = np.unpackbits(np.asarray(a, dtype=np.uint8), axis=1).astype(np.float32)
        bb = np.unpackbits(np.asarray(b, dtype=np.uint8), axis=1).astype(np.float32)
        both = ba @ bb.T
        return (ba.sum(1)[:, None] + bb.sum(1)[None, :] - 2.0 * both).astype(np.float64)
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(d2, 0.0))


def _nearest_two(d: np.ndarray):
    """Index of the nearest column per row, its distance, and the runner-up distance."""
    nn = np.argmin(d, axis=1)
    rows = np.arange(len(d))
    d1 = d[rows, nn]
    if d.shape[1] < 2:
        return nn, d1, np.full(len(d), np.nan)
    d2 = np.partition(d, 1, axis=1)[:, 1]
    return nn, d1, d2


def match(desc_a, desc_b, ratio: float = 0.8) -> list[Match]:
    """Mutual nearest neighbours that pass the ratio test in both directions.

    Applying the ratio test both ways makes the result symmetric under
    swapping the inputs. When the other side holds a single descriptor
    there is no runner-up and that direction's ratio test is waived.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    kind_a, a = _as_array(desc_a)
    kind_b, b = _as_array(desc_b)
    if kind_a is not None and kind_b is not None and kind_a != kind_b:
        raise KindMismatch(f"cannot match {kind_a} against {kind_b}")
    if len(a) == 0 or len(b) == 0:
        return []
    d = distance_matrix(a, b, kind_a)
    nn_ab, d1_ab, d2_ab = _nearest_two(d)
    nn_ba, _, d2_ba = _nearest_two(d.T)
    out = []
    for i, j in enumerate(nn_ab):
        if nn_ba[j] != i:
            continue
        dist = d1_ab[i]
        if len(b) > 1 and not dist < ratio * d2_ab[i]:
            continue
        if len(a) > 1 and not dist < ratio * d2_ba[j]:
            continue
        out.append(Match(int(i), int(j), float(dist)))
    return out
