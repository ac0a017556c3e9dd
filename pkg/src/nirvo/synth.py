"""Synthetic glacial-wall scenes.

A planar snow wall (the world plane z = 0) carries a fractal specific
surface area (SSA) field. Grain diameter follows d = 6 / SSA and albedo
a = exp(-c * sqrt(gamma(band) * d)), so near-infrared bands, with their much
larger gamma, see far more contrast between coarse and fine grains than
visible light does. A handheld camera sways in front of the wall and every
frame is rendered through a pinhole model followed by a simple sensor model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .core import IMU_RATE_HZ, FRAME_RATE_HZ, CameraIntrinsics, FrameRecord, GrayImage, ImuStream, Rotation
from .errors import IoError, UnknownBand, WallOutOfView
from .formats import FRAMES_HEADER, format_float, write_calibration, write_image, write_imu_log

VISIBLE_NM = 560
DEFAULT_GAMMA = {560: 0.002, 800: 0.7, 850: 1.0, 900: 2.0, 950: 3.0, 1000: 4.0}
MIN_WALL_FRACTION = 0.5


# --- SSA field -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SsaField:
    grid: np.ndarray  # SSA in 1/mm, row-major, rows along world y
    extent: float  # metres per side

    def __post_init__(self):
        g = np.array(self.grid, dtype=np.float64)
        if g.ndim != 2 or min(g.shape) < 2:
            raise ValueError("SSA grid must be 2D with at least 2x2 cells")
        if not np.all(g > 0):
            raise ValueError("SSA values must be positive")
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)


def _value_noise(shape, cells: int, rng: np.random.Generator) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [-1, 1] with `cells` cells per side."""
    lattice = rng.uniform(-1.0, 1.0, (cells + 1, cells + 1))
    h, w = shape
    ys = np.linspace(0.0, cells, h, endpoint=False)
    xs = np.linspace(0.0, cells, w, endpoint=False)
    y0, x0 = ys.astype(int), xs.astype(int)
    fy, fx = ys - y0, xs - x0
    fy, fx = fy * fy * (3 - 2 * fy), fx * fx * (3 - 2 * fx)
    a = lattice[y0][:, x0]
    b = lattice[y0][:, x0 + 1]
    c = lattice[y0 + 1][:, x0]
    d = lattice[y0 + 1][:, x0 + 1]
    top = a + (b - a) * fx[None, :]
    bot = c + (d - c) * fx[None, :]
    return top + (bot - top) * fy[:, None]


def generate_ssa_field(
    size: tuple[int, int] = (512, 512),
    extent: float = 2.0,
    octaves: int = 5,
    seed: int = 0,
    *,
    ssa_range: tuple[float, float] = (5.0, 60.0),
    amplitude: float = 1.0,
    base_cells: int = 16,
    persistence: float = 0.9,
    spread: float = 1.5,
    crust_rows: tuple[int, int] | None = None,
    crust_ssa: float = 3.0,
) -> SsaField:
    """Fractal value noise mapped affinely into ssa_range.

    Octave k has base_cells * 2**k lattice cells per side and weight
    persistence**k. The sum is standardized and divided by `spread`, so
    mean +/- spread standard deviations lands on the range ends; the few
    values beyond are clipped to [-1, 1]. The result is scaled by
    `amplitude` and mapped affinely onto ssa_range. Rows crust_rows[0] to
    crust_rows[1] (inclusive) are overwritten with crust_ssa.
    """
    h, w = size
    if h < 64 or w < 64:
        raise ValueError("SSA grid must be at least 64x64")
    if octaves < 1:
        raise ValueError("octaves must be >= 1")
    lo, hi = ssa_range
    if not 0 < lo <= hi:
        raise ValueError("ssa_range must satisfy 0 < lo <= hi")
    if not 0 <= amplitude <= 1:
        raise ValueError("amplitude must be in [0, 1]")
    if not spread > 0 or base_cells < 1:
        raise ValueError("spread and base_cells must be positive")
    rng = np.random.default_rng(seed)
    total = np.zeros((h, w))
    for k in range(octaves):
        total += persistence ** k * _value_noise((h, w), base_cells * 2 ** k, rng)
    sd = total.std()
    noise = np.clip((total - total.mean()) / (spread * sd), -1.0, 1.0) if sd > 0 else np.zeros_like(total)
    grid = 0.5 * (lo + hi) + amplitude * noise * 0.5 * (hi - lo)
    if crust_rows is not None:
        r0, r1 = crust_rows
        if not 0 <= r0 <= r1 < h:
            raise ValueError(f"crust rows {crust_rows} outside the grid")
        if not crust_ssa > 0:
            raise ValueError("crust_ssa must be positive")
        grid[r0:r1 + 1] = crust_ssa
    return SsaField(grid, extent)


def grain_diameter(ssa):
    """Optical grain diameter in mm for SSA in 1/mm (spheres: d = 6 / SSA)."""
    ssa = np.asarray(ssa, dtype=np.float64)
    if not np.all(ssa > 0):
        raise ValueError("SSA must be positive")
    d = 6.0 / ssa
    return float(d) if d.ndim == 0 else d


# --- albedo --------------------------------------------------------------

@dataclass(frozen=True)
class AlbedoModel:
    """a = exp(-c * sqrt(gamma[band] * d)); gamma keyed by wavelength in nm."""

    gamma: Mapping[int, float] = field(default_factory=lambda: dict(DEFAULT_GAMMA))
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        keys = sorted(self.gamma)
        vals = [self.gamma[k] for k in keys]
        if any(v <= 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("gamma must be positive and strictly increasing with wavelength")


def wavelength_nm(band) -> int:
    """Band label to wavelength: 'unfiltered' is modelled as 560 nm."""
    if isinstance(band, str):
        if band == "unfiltered":
            return VISIBLE_NM
        try:
            return int(band)
        except ValueError:
            raise UnknownBand(f"unknown band {band!r}") from None
    return int(band)


def albedo(model: AlbedoModel, band, d):
    nm = wavelength_nm(band)
    if nm not in model.gamma:
        raise UnknownBand(f"no absorption constant for {nm} nm")
    d = np.asarray(d, dtype=np.float64)
    if not np.all(d > 0):
        raise ValueError("grain diameter must be positive")
    a = np.exp(-model.c * np.sqrt(model.gamma[nm] * d))
    return float(a) if a.ndim == 0 else a


# --- trajectory ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pose:
    t: float
    rotation: Rotation  # camera-to-world
    position: np.ndarray  # camera centre in metres


@dataclass(frozen=True, eq=False)
class Trajectory:
    poses: tuple[Pose, ...]
    rot_sigma_deg: float
    trans_sigma_m: float
    seed: int

    def __post_init__(self):
        ts = [p.t for p in self.poses]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.poses)


def generate_trajectory(
    n_frames: int,
    fps: float = FRAME_RATE_HZ,
    rot_sigma_deg: float = 0.4,
    trans_sigma_m: float = 0.004,
    seed: int = 0,
    *,
    distance: float = 1.0,
    drift: tuple[float, float, float] = (0.15, 0.05, 0.0),
    pull: float = 0.1,
) -> Trajectory:
    """Handheld sway: drifting position plus per-frame rotation/translation jitter.

    The camera starts at (0, 0, -distance) looking along +z at the wall.
    `drift` is a steady velocity in m/s; `pull` draws the orientation back
    toward facing the wall each frame so long sequences keep it in view.
    Frame i is stamped at exactly (i * k) / IMU_RATE_HZ when fps divides the
    IMU rate as k, so frame times coincide with IMU samples.
    """
    if n_frames < 0:
        raise ValueError("n_frames must be >= 0")
    if not fps > 0 or rot_sigma_deg < 0 or trans_sigma_m < 0:
        raise ValueError("fps must be > 0 and jitter sigmas >= 0")
    rng = np.random.default_rng(seed)
    ratio = IMU_RATE_HZ / fps
    if abs(ratio - round(ratio)) < 1e-9:
        times = [i * round(ratio) / IMU_RATE_HZ for i in range(n_frames)]
    else:
        times = [i / fps for i in range(n_frames)]
    rv = np.zeros(3)
    pos = np.array([0.0, 0.0, -distance])
    walk = np.zeros(3)
    poses = []
    for i, t in enumerate(times):
        if i > 0:
            rv = (1.0 - pull) * rv + rng.normal(0.0, math.radians(rot_sigma_deg), 3)
            walk = walk + rng.normal(0.0, trans_sigma_m, 3)
        else:
            # draw the same number of variates for frame 0 so seeds line up
            rng.normal(size=6)
        p = pos + np.asarray(drift) * t + walk
        poses.append(Pose(float(t), Rotation.from_rotvec(rv), p))
    return Trajectory(tuple(poses), rot_sigma_deg, trans_sigma_m, seed)


# --- sensor and rendering ------------------------------------------------

@dataclass(frozen=True)
class SensorModel:
    """Amplifier gain applies to signal and read noise alike, so a dim band
    brought up to brightness with gain ends up noisier."""

    gain: float = 1.0
    read_noise_sigma: float = 1.0
    blur_sigma: float = 0.6

    def __post_init__(self):
        if not self.gain >= 1:
            raise ValueError("gain must be >= 1")
        if self.read_noise_sigma < 0 or self.blur_sigma < 0:
            raise ValueError("sigmas must be >= 0")


def default_intrinsics(width: int = 320, height: int = 240, focal: float = 300.0) -> CameraIntrinsics:
    return CameraIntrinsics(focal, focal, (width - 1) / 2.0, (height - 1) / 2.0)


def _wall_hits(pose: Pose, intr: CameraIntrinsics, width: int, height: int, extent: float):
    """World (X, Y) of every pixel's ray on the wall and the mask of rays hitting the patch."""
    u, v = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    d_cam = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    d_w = d_cam @ pose.rotation.m.T
    c = pose.position
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -c[2] / d_w[..., 2]
    X = c[0] + s * d_w[..., 0]
    Y = c[1] + s * d_w[..., 1]
    half = extent / 2.0
    hit = np.isfinite(s) & (s > 0) & (np.abs(X) <= half) & (np.abs(Y) <= half)
    return X, Y, hit


def render_albedo(
    field_: SsaField, model: AlbedoModel, band, pose: Pose, intr: CameraIntrinsics, width: int, height: int
) -> tuple[np.ndarray, float]:
    """Per-pixel albedo (0 off the wall) and the fraction of pixels on the wall."""
    X, Y, hit = _wall_hits(pose, intr, width, height, field_.extent)
    n_rows, n_cols = field_.grid.shape
    gx = (np.where(hit, X, 0.0) / field_.extent + 0.5) * (n_cols - 1)
    gy = (np.where(hit, Y, 0.0) / field_.extent + 0.5) * (n_rows - 1)
    ssa = ndimage.map_coordinates(field_.grid, [gy.ravel(), gx.ravel()], order=1, mode="nearest")
    a = albedo(model, band, grain_diameter(ssa)).reshape(height, width)
    return np.where(hit, a, 0.0), float(hit.mean())


def render_frame(
    field_: SsaField,
    model: AlbedoModel,
    band,
    pose: Pose,
    intr: CameraIntrinsics,
    sensor: SensorModel,
    illum: float,
    seed: int,
    width: int,
    height: int,
    vignette_radius: float | None = None,
) -> GrayImage:
    a, frac = render_albedo(field_, model, band, pose, intr, width, height)
    if frac < MIN_WALL_FRACTION:
        raise WallOutOfView(f"only {frac:.0%} of pixels see the wall at t={pose.t}")
    img = sensor.gain * np.minimum(255.0 * illum * a, 255.0)
    if sensor.blur_sigma > 0:
        img = ndimage.gaussian_filter(img, sensor.blur_sigma, mode="nearest")
    if vignette_radius is not None:
        yy, xx = np.mgrid[0:height, 0:width]
        r = np.hypot(xx - (width - 1) / 2.0, yy - (height - 1) / 2.0)
        img = np.where(r <= vignette_radius, img, 0.0)
    rng = np.random.default_rng(seed)
    img = img + rng.normal(0.0, sensor.gain * sensor.read_noise_sigma, img.shape)
    return GrayImage(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))


def imu_from_trajectory(traj: Trajectory, rate: float = IMU_RATE_HZ) -> ImuStream:
    """Samples at k / rate covering the trajectory, each holding the nearest frame pose."""
    if len(traj) == 0:
        return ImuStream(np.zeros(0), np.zeros((0, 4)))
    frame_t = np.array([p.t for p in traj.poses])
    k_end = int(math.ceil(frame_t[-1] * rate - 1e-9))
    t = np.arange(k_end + 1) / rate
    # nearest frame, ties to the earlier one
    idx = np.searchsorted(frame_t, t, side="left")
    idx = np.clip(idx, 0, len(frame_t) - 1)
    prev = np.clip(idx - 1, 0, len(frame_t) - 1)
    use_prev = (t - frame_t[prev]) <= (frame_t[idx] - t)
    idx = np.where(use_prev, prev, idx)
    quats = np.array([p.rotation.as_quaternion() for p in traj.poses])
    q = quats[idx]
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    return ImuStream(t, q)


def render_sequence(
    field_: SsaField,
    model: AlbedoModel,
    band,
    traj: Trajectory,
    intr: CameraIntrinsics,
    sensor: SensorModel,
    illum: float,
    *,
    width: int = 320,
    height: int = 240,
    vignette_radius: float | None = None,
) -> tuple[list[FrameRecord], ImuStream]:
    """Frames along the trajectory plus a matching IMU stream.

    Frame i's noise uses seed traj.seed + i, so frames can be rendered in
    any order.
    """
    if not illum >= 0:
        raise ValueError("illum must be >= 0")
    intr.check_image_size(width, height)
    label = _band_label(band)
    frames = [
        FrameRecord(
            render_frame(field_, model, band, pose, intr, sensor, illum, traj.seed + i, width, height, vignette_radius),
            pose.t,
            label,
        )
        for i, pose in enumerate(traj.poses)
    ]
    return frames, imu_from_trajectory(traj)


def _band_label(band) -> str:
    nm = wavelength_nm(band)
    return "unfiltered" if nm == VISIBLE_NM else str(nm)


# --- scene configuration -------------------------------------------------

@dataclass(frozen=True)
class SceneConfig:
    """Everything needed to render one band of a synthetic scene.

    NIR bands multiply illum by nir_illum_factor and use nir_gain in place
    of gain, modelling the dimmer, noisier NIR camera.
    """

    grid: int = 512
    extent: float = 2.0
    octaves: int = 5
    ssa_min: float = 2.0
    ssa_max: float = 60.0
    crust_start: int = -1
    crust_end: int = -1
    band: str = "850"
    illum: float = 0.9
    nir_illum_factor: float = 0.5
    gain: float = 1.0
    nir_gain: float = 2.0
    noise: float = 1.0
    blur: float = 0.6
    fps: float = FRAME_RATE_HZ
    frames: int = 60
    rot_jitter_deg: float = 0.4
    trans_jitter_m: float = 0.004
    width: int = 320
    height: int = 240
    focal: float = 300.0
    vignette_radius: float = 0.0
    seed: int = 0

    @classmethod
    def from_mapping(cls, values: Mapping[str, str], source: str = "<scene>") -> "SceneConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            key = key.strip()
            if key not in kinds:
                raise ValueError(f"{source}: unknown scene key {key!r}")
            conv = {"int": int, "float": float, "str": str}[kinds[key]]
            try:
                out[key] = conv(str(raw).strip())
            except ValueError:
                raise ValueError(f"{source}: bad value for {key}: {raw!r}") from None
        return cls(**out)

    @classmethod
    def from_text(cls, text: str, source: str = "<scene>") -> "SceneConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise ValueError(f"{source}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            values[k.strip()] = v.strip()
        return cls.from_mapping(values, source)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    def for_band(self, band: str) -> "SceneConfig":
        return replace(self, band=band)

    def ssa_field(self) -> SsaField:
        crust = (self.crust_start, self.crust_end) if self.crust_start >= 0 else None
        return generate_ssa_field(
            (self.grid, self.grid), self.extent, self.octaves, self.seed,
            ssa_range=(self.ssa_min, self.ssa_max), crust_rows=crust,
        )

    def trajectory(self) -> Trajectory:
        return generate_trajectory(self.frames, self.fps, self.rot_jitter_deg, self.trans_jitter_m, self.seed)

    def intrinsics(self) -> CameraIntrinsics:
        return default_intrinsics(self.width, self.height, self.focal)

    def sensor(self) -> SensorModel:
        nir = wavelength_nm(self.band) != VISIBLE_NM
        return SensorModel(self.nir_gain if nir else self.gain, self.noise, self.blur)

    def effective_illum(self) -> float:
        nir = wavelength_nm(self.band) != VISIBLE_NM
        return self.illum * (self.nir_illum_factor if nir else 1.0)


def render_scene(cfg: SceneConfig, model: AlbedoModel | None = None) -> tuple[list[FrameRecord], ImuStream]:
    return render_sequence(
        cfg.ssa_field(), model or AlbedoModel(), cfg.band, cfg.trajectory(), cfg.intrinsics(), cfg.sensor(),
        cfg.effective_illum(), width=cfg.width, height=cfg.height,
        vignette_radius=cfg.vignette_radius if cfg.vignette_radius > 0 else None,
    )


# --- dataset emission ----------------------------------------------------

@dataclass(frozen=True)
class Manifest:
    directory: Path
    frames: int
    imu_samples: int
    bands: tuple[str, ...]


def emit_dataset(
    frames: Sequence[FrameRecord],
    imu: ImuStream,
    directory,
    intr: CameraIntrinsics | None = None,
    image_ext: str = ".png",
) -> Manifest:
    """Write frames, frames.csv, imu.csv and (optionally) calibration.txt."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        rows = []
        for i, f in enumerate(frames):
            name = f"frame_{i:05d}{image_ext}"
            write_image(directory / name, f.image)
            rows.append([name, format_float(f.t), f.band])
        with open(directory / "frames.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FRAMES_HEADER)
            w.writerows(rows)
        write_imu_log(directory / "imu.csv", imu)
        if intr is not None:
            write_calibration(directory / "calibration.txt", intr)
    except OSError as exc:
        raise IoError(f"cannot write dataset to {directory}: {exc}") from exc
    return Manifest(directory, len(frames), len(imu), tuple(sorted({f.band for f in frames})))
