"""Geometry and time primitives shared by the whole pipeline.

Quaternions are (w, x, y, z), Hamilton product, body-to-world. Camera
frames follow the pinhole convention: x right, y down, z forward.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import EmptyStream, TimestampOutOfRange

IMU_RATE_HZ = 800.0
FRAME_RATE_HZ = 20.0
ORTHO_TOL = 1e-9

BANDS = ("unfiltered", "800", "850", "900", "950", "1000")


@dataclass(frozen=True)
class GrayImage:
    """Single-channel 8-bit raster, stored row-major as an (height, width) array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"GrayImage needs a 2D array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("GrayImage must be at least 1x1")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
                raise ValueError("GrayImage pixels must be integers in [0, 255]")
            px = px.astype(np.uint8)
        px = np.array(px, dtype=np.uint8, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_buffer(cls, width: int, height: int, data: bytes | Sequence[int]) -> "GrayImage":
        arr = np.asarray(bytearray(data) if isinstance(data, (bytes, bytearray)) else data)
        if arr.size != width * height:
            raise ValueError(f"expected {width * height} pixels, got {arr.size}")
        return cls(arr.reshape(height, width))

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with Brown-Conrady (k1, k2, p1, p2, k3) distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    distortion: tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        dist = tuple(float(c) for c in self.distortion)
        if len(dist) != 5:
            raise ValueError("distortion needs exactly five coefficients (k1, k2, p1, p2, k3)")
        object.__setattr__(self, "distortion", dist)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def has_distortion(self) -> bool:
        return any(c != 0.0 for c in self.distortion)

    def check_image_size(self, width: int, height: int) -> None:
        if not (0 <= self.cx < width and 0 <= self.cy < height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside a {width}x{height} image"
            )

    def undistorted(self) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)

    def shifted(self, dx: float, dy: float) -> "CameraIntrinsics":
        """Intrinsics of a crop whose origin sits at (dx, dy) in this image."""
        return CameraIntrinsics(self.fx, self.fy, self.cx - dx, self.cy - dy, self.distortion)


# --- quaternions ---------------------------------------------------------

def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m) -> np.ndarray:
    # Shepperd's method; result has w >= 0
    m = np.asarray(m, dtype=np.float64)
    tr = np.trace(m)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


# --- rotations -----------------------------------------------------------

def nearest_rotation(m) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) (closest in Frobenius norm)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True, eq=False)
class Rotation:
    """Proper rotation matrix. Construction validates; it never silently repairs."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=np.float64, copy=True)
        if m.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {m.shape}")
        if not np.allclose(m.T @ m, np.eye(3), rtol=0.0, atol=ORTHO_TOL):
            raise ValueError("matrix is not orthonormal within 1e-9")
        if abs(np.linalg.det(m) - 1.0) > ORTHO_TOL:
            raise ValueError("matrix determinant is not +1")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @classmethod
    def from_noisy(cls, m) -> "Rotation":
        """Explicit re-orthonormalization for matrices from noisy sources."""
        return cls(nearest_rotation(m))

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float) -> "Rotation":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        k = skew(axis)
        m = np.eye(3) + np.sin(angle_rad) * k + (1 - np.cos(angle_rad)) * (k @ k)
        return cls(nearest_rotation(m))

    @classmethod
    def from_rotvec(cls, rv) -> "Rotation":
        rv = np.asarray(rv, dtype=np.float64)
        angle = np.linalg.norm(rv)
        if angle == 0.0:
            return cls.identity()
        return cls.from_axis_angle(rv / angle, angle)

    @classmethod
    def from_quaternion(cls, q) -> "Rotation":
        return cls(nearest_rotation(quat_to_matrix(q)))

    def as_quaternion(self) -> np.ndarray:
        return matrix_to_quat(self.m)

    @property
    def T(self) -> "Rotation":
        return Rotation(self.m.T)

    def inverse(self) -> "Rotation":
        return self.T

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            return Rotation(nearest_rotation(self.m @ other.m))
        return self.m @ np.asarray(other)

    def __eq__(self, other):
        if not isinstance(other, Rotation):
            return NotImplemented
        return bool(np.array_equal(self.m, other.m))

    def __hash__(self):
        return hash(self.m.tobytes())

    def __repr__(self):
        return f"Rotation({np.array2string(self.m, precision=6)})"


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_angle_deg(a: Rotation, b: Rotation) -> float:
    """Geodesic distance between two rotations, in degrees.

    Equal to arccos((trace(a^T b) - 1) / 2), evaluated as atan2(sin, cos) so
    that angles near 0 and 180 degrees keep full precision. The sine part is
    the norm of vee(a^T b - b^T a), summed from row cross products so that
    swapping the arguments only flips its sign.
    """
    ma = a.m if isinstance(a, Rotation) else np.asarray(a)
    mb = b.m if isinstance(b, Rotation) else np.asarray(b)
    cos2 = float(np.sum(ma * mb)) - 1.0
    sin2 = float(np.linalg.norm(np.cross(ma, mb).sum(axis=0)))
    return float(np.degrees(np.arctan2(sin2, cos2)))


# --- IMU streams ---------------------------------------------------------

@dataclass(frozen=True)
class ImuSample:
    t: float
    q: tuple[float, float, float, float]

    def __post_init__(self):
        q = tuple(float(c) for c in self.q)
        if len(q) != 4:
            raise ValueError("quaternion needs four components (w, x, y, z)")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"quaternion is not unit length: {q}")
        object.__setattr__(self, "q", q)

    def rotation(self) -> Rotation:
        return Rotation.from_quaternion(self.q)


class ImuStream:
    """Time-sorted sequence of IMU samples backed by arrays."""

    def __init__(self, t, q):
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        q = np.asarray(q, dtype=np.float64).reshape(-1, 4)
        if len(t) != len(q):
            raise ValueError("timestamp and quaternion counts differ")
        norms = np.linalg.norm(q, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("all quaternions must be unit length")
        order = np.argsort(t, kind="stable")
        self.t = t[order]
        self.q = q[order]
        self.t.setflags(write=False)
        self.q.setflags(write=False)

    @classmethod
    def from_samples(cls, samples: Sequence[ImuSample]) -> "ImuStream":
        samples = list(samples)
        return cls([s.t for s in samples], [s.q for s in samples] or np.zeros((0, 4)))

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i) -> ImuSample:
        return ImuSample(float(self.t[i]), tuple(self.q[i]))

    def __iter__(self) -> Iterator[ImuSample]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, ImuStream):
            return NotImplemented
        return np.array_equal(self.t, other.t) and np.array_equal(self.q, other.q)

    @property
    def nominal_period(self) -> float:
        if len(self.t) < 2:
            return 0.0
        return float(np.median(np.diff(self.t)))

    def without_interval(self, t0: float, t1: float) -> "ImuStream":
        keep = (self.t < t0) | (self.t > t1)
        return ImuStream(self.t[keep], self.q[keep])


def _as_stream(imu) -> ImuStream:
    return imu if isinstance(imu, ImuStream) else ImuStream.from_samples(imu)


def _nearest_index(ts: np.ndarray, t: float) -> int:
    i = bisect.bisect_left(ts, t)
    if i == 0:
        return 0
    if i == len(ts):
        return len(ts) - 1
    # tie goes to the earlier sample
    return i - 1 if (t - ts[i - 1]) <= (ts[i] - t) else i


def nearest_sample(imu, t: float) -> ImuSample:
    stream = _as_stream(imu)
    if len(stream) == 0:
        raise EmptyStream("IMU stream has no samples")
    return stream[_nearest_index(stream.t, float(t))]


@dataclass(frozen=True)
class ExtrinsicRotation:
    """Rotation taking IMU body-frame vectors into the camera frame."""

    r_cam_imu: Rotation = field(default_factory=Rotation.identity)


def _covered(stream: ImuStream, t: float) -> bool:
    # allow half a sample period of slack at either end
    slack = 0.5 * stream.nominal_period
    return stream.t[0] - slack <= t <= stream.t[-1] + slack


def camera_orientation(imu, extr: ExtrinsicRotation, t: float) -> Rotation:
    """Camera-to-world orientation at time t from the nearest IMU sample.

    Raises TimestampOutOfRange outside the stream (half a period of slack)
    or where the nearest sample is more than one nominal period away.
    """
    stream = _as_stream(imu)
    if len(stream) == 0:
        raise EmptyStream("IMU stream has no samples")
    if not _covered(stream, t):
        raise TimestampOutOfRange(
            f"t={t} outside IMU coverage [{stream.t[0]}, {stream.t[-1]}]"
        )
    i = _nearest_index(stream.t, t)
    gap = stream.nominal_period
    if len(stream) > 1 and abs(stream.t[i] - t) > gap:
        raise TimestampOutOfRange(f"t={t} falls in an IMU gap; nearest sample at {stream.t[i]}")
    r_world_body = quat_to_matrix(stream.q[i])
    return Rotation(nearest_rotation(r_world_body @ extr.r_cam_imu.m.T))


def ground_truth_relative(imu, extr: ExtrinsicRotation, t1: float, t2: float) -> Rotation:
    """Orientation of the camera at t2 expressed in the camera frame at t1."""
    if t2 < t1:
        raise ValueError(f"t1 must precede t2 (got {t1}, {t2})")
    stream = _as_stream(imu)
    r1 = camera_orientation(stream, extr, t1)
    r2 = camera_orientation(stream, extr, t2)
    return Rotation(nearest_rotation(r1.m.T @ r2.m))


@dataclass(frozen=True)
class FrameRecord:
    image: GrayImage
    t: float
    band: str

    def __post_init__(self):
        band = str(self.band)
        if band not in BANDS:
            raise ValueError(f"unknown band label {band!r}; expected one of {BANDS}")
        object.__setattr__(self, "band", band)
        object.__setattr__(self, "t", float(self.t))
