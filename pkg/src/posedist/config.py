"""Scene configuration: a single JSON file drives every CLI command.

Paths inside the config resolve relative to the config file. Exactly one of
`heatmaps_path` / `synthesis` must be present. Experimental knobs default to
the evaluation-protocol values: 16 keypoints via farthest-point sampling,
sigma 1 px, recursion 3, an 11x11 translation grid spanning 10mm x 10mm,
coupled mode. The optional `noise` block defaults each present field to the
protocol magnitudes (position +/-10mm, crop scale +/-5%, auto-bounded crop
translation); omitting the block entirely means a noiseless run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import so3
from .distribution import MODES
from .errors import ValidationError
from .projection import CameraIntrinsics, Pose


class ConfigError(ValidationError):
    """Validation failure with the offending field path in the message."""

    def __init__(self, path: str, message: str):
        self.field = path
        super().__init__(f"{path}: {message}")


MAX_RECURSION = 6

_MISSING = object()


@dataclass(frozen=True)
class NoiseSpec:
    position_m: float = 0.0
    crop_scale_frac: float = 0.0
    crop_translation_px: float | str = 0.0  # crop pixels, or "auto"

    @property
    def any_active(self) -> bool:
        return (
            self.position_m > 0
            or self.crop_scale_frac > 0
            or self.crop_translation_px == "auto"
            or (isinstance(self.crop_translation_px, float) and self.crop_translation_px > 0)
        )

    @property
    def crop_active(self) -> bool:
        return self.crop_scale_frac > 0 or self.crop_translation_px != 0.0


@dataclass(frozen=True)
class SynthesisSpec:
    symmetries: np.ndarray  # (S, 4) quaternions, identity included
    sigma_px: float = 1.0


@dataclass(frozen=True)
class TranslationGridSpec:
    count: tuple[int, int] = (11, 11)
    span_m: tuple[float, float] = (0.010, 0.010)
    depth_offsets_m: tuple[float, ...] = (0.0,)


@dataclass(frozen=True)
class SceneConfig:
    keypoints_path: Path
    intrinsics: CameraIntrinsics
    gt_pose: Pose
    position_estimate: np.ndarray
    recursion: int = 3
    mode: str = "coupled"
    seed: int | None = None
    heatmaps_path: Path | None = None
    synthesis: SynthesisSpec | None = None
    tgrid: TranslationGridSpec = TranslationGridSpec()
    noise: NoiseSpec = NoiseSpec()
    log_floor: float = -30.0


def _expect(d: dict, key: str, types, path: str, default=_MISSING):
    if key not in d:
        if default is _MISSING:
            raise ConfigError(f"{path}{key}", "required field is missing")
        return default
    val = d[key]
    if types is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, types):
        raise ConfigError(
            f"{path}{key}", f"expected {getattr(types, '__name__', types)}, got {type(val).__name__}"
        )
    return val


def _vector(d: dict, key: str, length: int, path: str, default=None) -> np.ndarray:
    if key not in d:
        if default is not None:
            return np.asarray(default, dtype=np.float64)
        raise ConfigError(f"{path}{key}", "required field is missing")
    val = d[key]
    if not isinstance(val, list) or len(val) != length or not all(
        isinstance(v, (int, float)) for v in val
    ):
        raise ConfigError(f"{path}{key}", f"expected a list of {length} numbers")
    return np.asarray(val, dtype=np.float64)


def _quaternion(val, path: str) -> np.ndarray:
    if not isinstance(val, list) or len(val) != 4 or not all(
        isinstance(v, (int, float)) for v in val
    ):
        raise ConfigError(path, "expected a quaternion [w, x, y, z]")
    q = np.asarray(val, dtype=np.float64)
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > 1e-3:
        raise ConfigError(path, f"quaternion norm {norm:.6f} is not 1")
    return q / norm


def _parse_pose(d: dict, key: str, path: str) -> Pose:
    block = _expect(d, key, dict, path)
    q = _quaternion(block.get("rotation"), f"{path}{key}.rotation")
    t = _vector(block, "translation", 3, f"{path}{key}.")
    if t[2] <= 0:
        raise ConfigError(f"{path}{key}.translation", "z must be positive (in front of the camera)")
    return Pose(rotation=q, translation=t)


def _parse_symmetries(val, path: str) -> np.ndarray:
    if isinstance(val, dict):
        axis = _vector(val, "axis", 3, f"{path}.")
        order = _expect(val, "order", int, f"{path}.")
        if order < 1:
            raise ConfigError(f"{path}.order", "must be >= 1")
        return so3.cyclic_group(axis, order)
    if isinstance(val, list):
        if len(val) == 0:
            raise ConfigError(path, "symmetry list must not be empty")
        quats = np.stack([_quaternion(q, f"{path}[{i}]") for i, q in enumerate(val)])
        if not np.any(so3.geodesic_distance(quats, so3.IDENTITY) < 1e-9):
            raise ConfigError(path, "symmetry set must contain the identity")
        return quats
    raise ConfigError(path, "expected a quaternion list or {axis, order}")


def _parse_intrinsics(d: dict, path: str) -> CameraIntrinsics:
    block = _expect(d, "intrinsics", dict, path)
    p = f"{path}intrinsics."
    fx = _expect(block, "fx", float, p)
    fy = _expect(block, "fy", float, p)
    cx = _expect(block, "cx", float, p)
    cy = _expect(block, "cy", float, p)
    off = _vector(block, "crop_offset", 2, p, default=[0.0, 0.0])
    scale = _expect(block, "crop_scale", float, p, default=1.0)
    res = _expect(block, "crop_resolution", int, p)
    try:
        return CameraIntrinsics(
            fx=fx, fy=fy, cx=cx, cy=cy,
            crop_offset=(off[0], off[1]), crop_scale=scale, crop_resolution=res,
        )
    except ValidationError as e:
        raise ConfigError(f"{path}intrinsics", str(e)) from e


def _parse_noise(val, path: str) -> NoiseSpec:
    if val is None:
        return NoiseSpec()
    if not isinstance(val, dict):
        raise ConfigError(path, "expected an object")
    pos_mm = _expect(val, "position_mm", float, f"{path}.", default=10.0)
    scale_pct = _expect(val, "crop_scale_pct", float, f"{path}.", default=5.0)
    trans = val.get("crop_translation_px", "auto")
    if trans != "auto":
        if not isinstance(trans, (int, float)):
            raise ConfigError(f"{path}.crop_translation_px", 'expected a number or "auto"')
        trans = float(trans)
        if trans < 0:
            raise ConfigError(f"{path}.crop_translation_px", "must be >= 0")
    if pos_mm < 0:
        raise ConfigError(f"{path}.position_mm", "must be >= 0")
    if scale_pct < 0:
        raise ConfigError(f"{path}.crop_scale_pct", "must be >= 0")
    return NoiseSpec(
        position_m=pos_mm * 1e-3,
        crop_scale_frac=scale_pct / 100.0,
        crop_translation_px=trans,
    )


def _parse_tgrid(val, path: str) -> TranslationGridSpec:
    if val is None:
        return TranslationGridSpec()
    if not isinstance(val, dict):
        raise ConfigError(path, "expected an object")
    count = val.get("count", [11, 11])
    if (
        not isinstance(count, list)
        or len(count) != 2
        or not all(isinstance(c, int) and c >= 1 for c in count)
    ):
        raise ConfigError(f"{path}.count", "expected two positive integers")
    span = _vector(val, "span_mm", 2, f"{path}.", default=[10.0, 10.0])
    if np.any(span < 0):
        raise ConfigError(f"{path}.span_mm", "must be >= 0")
    depths = val.get("depth_offsets_mm", [0.0])
    if not isinstance(depths, list) or not all(isinstance(v, (int, float)) for v in depths):
        raise ConfigError(f"{path}.depth_offsets_mm", "expected a list of numbers")
    return TranslationGridSpec(
        count=(count[0], count[1]),
        span_m=(span[0] * 1e-3, span[1] * 1e-3),
        depth_offsets_m=tuple(float(v) * 1e-3 for v in depths),
    )


def load_scene(path) -> SceneConfig:
    """Parse and validate a scene config; errors carry the field path."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: top-level value must be an object")
    base = path.parent

    kp_rel = _expect(raw, "keypoints_path", str, "")
    intr = _parse_intrinsics(raw, "")
    gt = _parse_pose(raw, "gt_pose", "")
    pos_est = (
        _vector(raw, "position_estimate", 3, "")
        if "position_estimate" in raw
        else gt.translation.copy()
    )
    recursion = _expect(raw, "recursion", int, "", default=3)
    if not 0 <= recursion <= MAX_RECURSION:
        raise ConfigError("recursion", f"must be in [0, {MAX_RECURSION}]")
    mode = _expect(raw, "mode", str, "", default="coupled")
    if mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}")
    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        raise ConfigError("seed", "must be a non-negative integer")
    log_floor = _expect(raw, "log_floor", float, "", default=-30.0)
    if log_floor >= 0:
        raise ConfigError("log_floor", "must be negative")

    heatmaps = raw.get("heatmaps_path")
    synth_raw = raw.get("synthesis")
    if (heatmaps is None) == (synth_raw is None):
        raise ConfigError(
            "heatmaps_path/synthesis", "exactly one of the two must be present"
        )
    synthesis = None
    heatmaps_path = None
    if heatmaps is not None:
        if not isinstance(heatmaps, str):
            raise ConfigError("heatmaps_path", "expected a string path")
        heatmaps_path = base / heatmaps
    else:
        if not isinstance(synth_raw, dict):
            raise ConfigError("synthesis", "expected an object")
        sigma = _expect(synth_raw, "sigma_px", float, "synthesis.", default=1.0)
        if sigma <= 0:
            raise ConfigError("synthesis.sigma_px", "must be positive")
        syms = _parse_symmetries(
            synth_raw.get("symmetries", [[1.0, 0.0, 0.0, 0.0]]),
            "synthesis.symmetries",
        )
        synthesis = SynthesisSpec(symmetries=syms, sigma_px=sigma)

    noise = _parse_noise(raw.get("noise"), "noise")
    if noise.any_active and seed is None:
        raise ConfigError("seed", "required whenever any noise is enabled")
    if noise.crop_active and synthesis is None:
        raise ConfigError(
            "noise",
            "crop jitter requires a synthesis block (file heatmaps are fixed "
            "to the intrinsics they were rendered with)",
        )

    return SceneConfig(
        keypoints_path=base / kp_rel,
        intrinsics=intr,
        gt_pose=gt,
        position_estimate=pos_est,
        recursion=recursion,
        mode=mode,
        seed=seed,
        heatmaps_path=heatmaps_path,
        synthesis=synthesis,
        tgrid=_parse_tgrid(raw.get("translation_grid"), "translation_grid"),
        noise=noise,
        log_floor=log_floor,
    )
