"""Experiment configuration files.

INI-style text with four sections::

    [scene]       label, manifest or synthetic-scene keys, bands, extractors, seed, ...
    [preprocess]  vignetted, clahe, tile_rows, tile_cols, clip_limit, calibration
    [ransac]      threshold, confidence, max_iters
    [sensor]      gain, nir_gain, noise, blur, illum, nir_illum_factor

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..core import BANDS, ExtrinsicRotation, Rotation
from ..epipolar import DEFAULT_TOL_DEG, RansacParams
from ..errors import ConfigError
from ..features import EXTRACTORS
from ..preprocess import ClaheParams
from ..synth import SceneConfig

SECTIONS = ("scene", "preprocess", "ransac", "sensor")
EXTRACTOR_ALIASES = {"SIFT-STYLE": "SIFT", "SURF-STYLE": "SURF", "ORB": "FAST"}
DEFAULT_BANDS = ("unfiltered", "850")
SENSOR_KEYS = ("gain", "nir_gain", "noise", "blur", "illum", "nir_illum_factor")
_SCENE_OWN_KEYS = {
    "label", "manifest", "bands", "extractors", "seed", "output", "vop_threshold_deg", "stride", "extrinsic",
}


@dataclass(frozen=True)
class ExperimentConfig:
    scene: str = "synthetic"
    manifest: Path | None = None
    synth: SceneConfig | None = field(default_factory=SceneConfig)
    calibration: Path | None = None
    bands: tuple[str, ...] = DEFAULT_BANDS
    extractors: tuple[str, ...] = tuple(EXTRACTORS)
    vignetted: bool = False
    clahe: ClaheParams | None = field(default_factory=ClaheParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    vop_threshold_deg: float = DEFAULT_TOL_DEG
    extrinsic: ExtrinsicRotation = field(default_factory=ExtrinsicRotation)
    output: Path | None = None
    seed: int = 0
    stride: int = 1

    def __post_init__(self):
        if not self.bands:
            raise ConfigError("at least one band is required")
        bad = [b for b in self.bands if b not in BANDS]
        if bad:
            raise ConfigError(f"unknown bands {bad}; expected a subset of {BANDS}")
        if not self.extractors:
            raise ConfigError("at least one extractor is required")
        bad = [e for e in self.extractors if e not in EXTRACTORS]
        if bad:
            raise ConfigError(f"unknown extractors {bad}; expected a subset of {sorted(EXTRACTORS)}")
        if not self.vop_threshold_deg > 0:
            raise ConfigError("vop_threshold_deg must be > 0")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if (self.manifest is None) == (self.synth is None):
            raise ConfigError("give exactly one of a manifest directory or a synthetic scene")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        synth = replace(self.synth, seed=seed) if self.synth is not None else None
        return replace(self, seed=seed, synth=synth)


def _split_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.replace(";", ",").split(",") if p.strip())


def _extractor(name: str) -> str:
    up = name.strip().upper()
    return EXTRACTOR_ALIASES.get(up, up)


def _bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _num(conv, text: str, key: str):
    try:
        return conv(text.strip())
    except ValueError:
        raise ConfigError(f"{key}: bad value {text!r}") from None


def _path(text: str, base: Path) -> Path:
    p = Path(text.strip()).expanduser()
    return p if p.is_absolute() else base / p


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> ExperimentConfig:
    base_dir = base_dir or Path.cwd()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"{source}: unknown sections {unknown}; expected {list(SECTIONS)}")
    sec = {s: dict(cp[s]) if cp.has_section(s) else {} for s in SECTIONS}
    scene = sec["scene"]
    kw: dict = {}
    where = lambda s, k: f"{source} [{s}] {k}"  # noqa: E731

    if "label" in scene:
        kw["scene"] = scene["label"].strip()
    if "bands" in scene:
        kw["bands"] = _split_list(scene["bands"])
    if "extractors" in scene:
        kw["extractors"] = tuple(_extractor(e) for e in _split_list(scene["extractors"]))
    if "seed" in scene:
        kw["seed"] = _num(int, scene["seed"], where("scene", "seed"))
    if "output" in scene:
        kw["output"] = _path(scene["output"], base_dir)
    if "vop_threshold_deg" in scene:
        kw["vop_threshold_deg"] = _num(float, scene["vop_threshold_deg"], where("scene", "vop_threshold_deg"))
    if "stride" in scene:
        kw["stride"] = _num(int, scene["stride"], where("scene", "stride"))
    if "extrinsic" in scene:
        # rotation vector in radians, IMU body frame to camera frame
        rv = [_num(float, v, where("scene", "extrinsic")) for v in _split_list(scene["extrinsic"])]
        if len(rv) != 3:
            raise ConfigError(f"{where('scene', 'extrinsic')}: expected 3 comma-separated numbers")
        kw["extrinsic"] = ExtrinsicRotation(Rotation.from_rotvec(np.array(rv)))

    synth_keys = {k: v for k, v in scene.items() if k not in _SCENE_OWN_KEYS}
    for k, v in sec["sensor"].items():
        if k not in SENSOR_KEYS:
            raise ConfigError(f"{where('sensor', k)}: unknown key; expected one of {list(SENSOR_KEYS)}")
        synth_keys[k] = v
    if "manifest" in scene:
        if synth_keys:
            raise ConfigError(f"{source}: synthetic scene keys {sorted(synth_keys)} given with a manifest")
        kw["manifest"] = _path(scene["manifest"], base_dir)
        kw["synth"] = None
    else:
        try:
            synth = SceneConfig.from_mapping(synth_keys, source)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        kw["synth"] = replace(synth, seed=kw.get("seed", synth.seed))

    pre = sec["preprocess"]
    tiles = list(ClaheParams().tile_grid)
    clip = ClaheParams().clip_limit
    use_clahe = True
    for k, v in pre.items():
        key = where("preprocess", k)
        if k == "vignetted":
            kw["vignetted"] = _bool(v, key)
        elif k == "clahe":
            use_clahe = _bool(v, key)
        elif k == "tile_rows":
            tiles[0] = _num(int, v, key)
        elif k == "tile_cols":
            tiles[1] = _num(int, v, key)
        elif k == "clip_limit":
            clip = _num(float, v, key)
        elif k == "calibration":
            kw["calibration"] = _path(v, base_dir)
        else:
            raise ConfigError(f"{key}: unknown key")
    try:
        kw["clahe"] = ClaheParams(tuple(tiles), clip) if use_clahe else None
    except ValueError as exc:
        raise ConfigError(f"{source} [preprocess]: {exc}") from None

    rs = {}
    for k, v in sec["ransac"].items():
        key = where("ransac", k)
        if k in ("threshold", "confidence"):
            rs[k] = _num(float, v, key)
        elif k == "max_iters":
            rs[k] = _num(int, v, key)
        else:
            raise ConfigError(f"{key}: unknown key")
    try:
        kw["ransac"] = RansacParams(**rs)
    except ValueError as exc:
        raise ConfigError(f"{source} [ransac]: {exc}") from None
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text, str(path), path.parent)


def format_config(cfg: ExperimentConfig) -> str:
    """Render a config back to INI text (paths as given)."""
    lines = ["[scene]", f"label = {cfg.scene}"]
    lines.append(f"bands = {', '.join(cfg.bands)}")
    lines.append(f"extractors = {', '.join(cfg.extractors)}")
    lines.append(f"seed = {cfg.seed}")
    lines.append(f"vop_threshold_deg = {cfg.vop_threshold_deg!r}")
    lines.append(f"stride = {cfg.stride}")
    if cfg.output is not None:
        lines.append(f"output = {cfg.output}")
    rv = _rotvec(cfg.extrinsic.r_cam_imu)
    if np.any(rv != 0):
        lines.append("extrinsic = " + ", ".join(repr(float(v)) for v in rv))
    if cfg.manifest is not None:
        lines.append(f"manifest = {cfg.manifest}")
    sensor = []
    if cfg.synth is not None:
        for f in fields(SceneConfig):
            if f.name in ("band", "seed"):
                continue
            val = getattr(cfg.synth, f.name)
            (sensor if f.name in SENSOR_KEYS else lines).append(f"{f.name} = {val}")
    lines += ["", "[preprocess]", f"vignetted = {str(cfg.vignetted).lower()}"]
    lines.append(f"clahe = {str(cfg.clahe is not None).lower()}")
    if cfg.clahe is not None:
        lines.append(f"tile_rows = {cfg.clahe.tile_grid[0]}")
        lines.append(f"tile_cols = {cfg.clahe.tile_grid[1]}")
        lines.append(f"clip_limit = {cfg.clahe.clip_limit!r}")
    if cfg.calibration is not None:
        lines.append(f"calibration = {cfg.calibration}")
    lines += ["", "[ransac]", f"threshold = {cfg.ransac.threshold!r}", f"confidence = {cfg.ransac.confidence!r}"]
    lines.append(f"max_iters = {cfg.ransac.max_iters}")
    if sensor:
        lines += ["", "[sensor]", *sensor]
    return "\n".join(lines) + "\n"


def _rotvec(r: Rotation) -> np.ndarray:
    q = r.as_quaternion()  # w >= 0
    n = np.linalg.norm(q[1:])
    if n < 1e-15:
        return np.zeros(3)
    return q[1:] / n * 2.0 * np.arctan2(n, q[0])
