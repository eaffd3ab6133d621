"""Pose-likelihood evaluation over rotation x translation grids.

Two joint-keypoint approximations are supported for the per-pose score:

  * coupled (default): the N-th root of the product of per-keypoint
    marginals, i.e. mean of the per-keypoint logs. Conservative: it tempers
    the product, never sharper than the independent form.
  * independent: the plain product, i.e. sum of the logs.

All accumulation is in log space; normalization uses a max-shifted
log-sum-exp over the whole grid, so probability masses are exact to float64
even when most cells sit at the likelihood floor.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import so3
from .errors import DegenerateSceneError, FormatError, ValidationError
from .heatmaps import HeatmapStack, log_lookup
from .kernels import get_engine
from .projection import CameraIntrinsics, Pose, project_keypoints, validate_keypoints
from .rotation_grid import (
    RotationGrid,
    estimate_covering_radius,
    nearest_sample,
)

MODES = ("coupled", "independent")

PD_MAGIC = b"KPPD"
PD_VERSION = 1

_SUM_CHUNK = 1 << 18
_ROW_CHUNK = 1 << 14


@dataclass(frozen=True)
class TranslationGrid:
    """Camera-frame translation samples: a center plus fixed offsets."""

    center: np.ndarray
    offsets: np.ndarray  # (T, 3), meters

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        offs = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 3)
        if offs.shape[0] == 0:
            raise ValidationError("translation grid must be non-empty")
        object.__setattr__(self, "offsets", offs)

    def __len__(self) -> int:
        return self.offsets.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self.center + self.offsets

    @classmethod
    def planar(
        cls,
        center,
        count: tuple[int, int] = (11, 11),
        span_m: tuple[float, float] = (0.010, 0.010),
        depth_offsets_m: Sequence[float] = (0.0,),
    ) -> "TranslationGrid":
        """In-plane grid around `center`: count x count samples spanning span_m.

        The default is an 11 x 11 grid over 10mm x 10mm (1mm pitch, endpoints
        at +/-5mm) at a single depth.
        """
        nx, ny = count
        if nx < 1 or ny < 1:
            raise ValidationError("translation grid counts must be >= 1")
        xs = np.linspace(-span_m[0] / 2, span_m[0] / 2, nx) if nx > 1 else np.zeros(1)
        ys = np.linspace(-span_m[1] / 2, span_m[1] / 2, ny) if ny > 1 else np.zeros(1)
        zs = np.asarray(depth_offsets_m, dtype=np.float64)
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        offs = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
        return cls(center=center, offsets=offs)


def _log_sum_exp_all(logs: np.ndarray) -> float:
    """Max-shifted LSE over the full array, chunked with a fixed layout."""
    mx = float(logs.max())
    flat = logs.ravel()
    total = 0.0
    for a in range(0, flat.size, _SUM_CHUNK):
        total += float(np.sum(np.exp(flat[a : a + _SUM_CHUNK] - mx)))
    return mx + float(np.log(total))


@dataclass(frozen=True)
class PoseDistribution:
    """Normalized probability masses over rotation x translation cells."""

    rotation_grid: RotationGrid
    translation_grid: TranslationGrid
    log_masses: np.ndarray  # (M, T)
    approx_mode: str
    behind_count: int = 0

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_masses)

    def mass_sum(self) -> float:
        flat = self.log_masses.ravel()
        total = 0.0
        for a in range(0, flat.size, _SUM_CHUNK):
            total += float(np.sum(np.exp(flat[a : a + _SUM_CHUNK])))
        return total


@dataclass(frozen=True)
class RotationDistribution:
    """Marginal rotation distribution over a rotation grid."""

    rotation_grid: RotationGrid
    log_masses: np.ndarray  # (M,)

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_masses)

    @property
    def densities(self) -> np.ndarray:
        """Probability densities: mass / cell volume."""
        return self.masses / self.rotation_grid.cell_volume

    @classmethod
    def from_masses(cls, grid: RotationGrid, masses: np.ndarray):
        masses = np.asarray(masses, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return cls(grid, np.log(masses))


def unnormalized_log_likelihood(
    stack: HeatmapStack,
    keypoints: np.ndarray,
    pose: Pose,
    cam: CameraIntrinsics,
    mode: str = "coupled",
) -> float:
    """Per-pose score before normalization.

    Coupled mode: mean of per-keypoint log-probabilities (log of the N-th
    root of the product). Independent mode: their sum. A pose with any
    keypoint behind the camera scores the floor for every channel.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    keypoints = validate_keypoints(keypoints)
    n = keypoints.shape[0]
    if stack.channels != n:
        raise ValidationError(
            f"heatmap stack has {stack.channels} channels for {n} keypoints"
        )
    from .errors import ProjectionError

    try:
        kp = project_keypoints(keypoints, pose, cam)
    except ProjectionError:
        total = n * stack.log_floor
    else:
        total = 0.0
        for i in range(n):
            total = total + log_lookup(stack, i, kp[i])
    return total / n if mode == "coupled" else total


def evaluate_grid(
    stack: HeatmapStack,
    keypoints: np.ndarray,
    rotation_grid: RotationGrid,
    translation_grid: TranslationGrid,
    cam: CameraIntrinsics,
    mode: str = "coupled",
    engine: str | None = None,
    workers: int = 1,
) -> PoseDistribution:
    """Evaluate and normalize the pose likelihood over all grid cells.

    The result is deterministic: per-cell scores are computed independently
    and the normalization reduces in a fixed order, so the masses are
    bit-identical across engines and worker counts.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    keypoints = validate_keypoints(keypoints)
    n = keypoints.shape[0]
    if stack.channels != n:
        raise ValidationError(
            f"heatmap stack has {stack.channels} channels for {n} keypoints"
        )
    evaluate = get_engine(engine)
    logs, behind = evaluate(
        stack.log_data,
        keypoints,
        rotation_grid.quats,
        translation_grid.points,
        cam.fx,
        cam.fy,
        cam.cx,
        cam.cy,
        cam.crop_offset[0],
        cam.crop_offset[1],
        cam.crop_scale,
        stack.log_floor,
        workers,
    )
    if behind == logs.size:
        raise DegenerateSceneError("every grid pose is behind the camera")
    if mode == "coupled":
        logs /= n
    logs -= _log_sum_exp_all(logs)
    return PoseDistribution(
        rotation_grid=rotation_grid,
        translation_grid=translation_grid,
        log_masses=logs,
        approx_mode=mode,
        behind_count=behind,
    )


def marginalize_rotation(pd: PoseDistribution) -> RotationDistribution:
    """Sum masses over the translation axis (log-space, row-chunked)."""
    logs = pd.log_masses
    m = logs.shape[0]
    out = np.empty(m, dtype=np.float64)
    for a in range(0, m, _ROW_CHUNK):
        chunk = logs[a : a + _ROW_CHUNK]
        rm = chunk.max(axis=1)
        out[a : a + _ROW_CHUNK] = rm + np.log(
            np.sum(np.exp(chunk - rm[:, None]), axis=1)
        )
    return RotationDistribution(pd.rotation_grid, out)


def log_likelihood_of(rd: RotationDistribution, gt_rotation: np.ndarray) -> float:
    """Log-density of the grid cell nearest to the ground-truth rotation."""
    idx, _ = nearest_sample(rd.rotation_grid, gt_rotation)
    return float(rd.log_masses[idx] - np.log(rd.rotation_grid.cell_volume))


def mean_log_likelihood(
    scores_by_object: Mapping[str, Sequence[float]],
) -> tuple[dict[str, float], float]:
    """Per-object means of image scores, then their unweighted overall mean."""
    if not scores_by_object:
        raise ValidationError("no objects to score")
    per_object = {}
    for name, scores in scores_by_object.items():
        if len(scores) == 0:
            raise ValidationError(f"object {name!r} has no scores")
        per_object[name] = float(np.mean(scores))
    overall = float(np.mean(list(per_object.values())))
    return per_object, overall


def entropy(masses: np.ndarray) -> float:
    """Shannon entropy -sum m ln m in nats; zero-mass cells contribute 0."""
    m = np.asarray(masses, dtype=np.float64).ravel()
    total = 0.0
    for a in range(0, m.size, _SUM_CHUNK):
        chunk = m[a : a + _SUM_CHUNK]
        nz = chunk > 0.0
        total -= float(np.sum(chunk[nz] * np.log(chunk[nz])))
    return total


@dataclass(frozen=True)
class Mode:
    index: int
    mass: float


_covering_radius_cache: dict[int, float] = {}


def default_mode_radius(grid: RotationGrid) -> float:
    """Twice the (cached, Monte-Carlo estimated) covering radius."""
    s = grid.recursion
    if s not in _covering_radius_cache:
        _covering_radius_cache[s] = estimate_covering_radius(grid)
    return 2.0 * _covering_radius_cache[s]


def mode_masses(
    rd: RotationDistribution,
    mode_radius: float | None = None,
    max_modes: int = 16,
    min_peak_ratio: float = 1e-3,
) -> list[Mode]:
    """Greedy mode extraction: repeatedly take the highest unassigned cell
    as a mode center and absorb all unassigned mass within mode_radius.

    Stops after max_modes or when the next peak falls below min_peak_ratio
    of the first peak.
    """
    grid = rd.rotation_grid
    if mode_radius is None:
        mode_radius = default_mode_radius(grid)
    masses = rd.masses
    order = np.argsort(-masses, kind="stable")
    assigned = np.zeros(len(grid), dtype=bool)
    modes: list[Mode] = []
    first_peak = masses[order[0]]
    for idx in order:
        if assigned[idx]:
            continue
        peak = masses[idx]
        if modes and peak < min_peak_ratio * first_peak:
            break
        dist = so3.geodesic_distance(grid.quats[idx], grid.quats)
        sel = ~assigned & (dist <= mode_radius)
        modes.append(Mode(index=int(idx), mass=float(masses[sel].sum())))
        assigned |= sel
        if len(modes) >= max_modes:
            break
    return modes


def write_rotation_csv(rd: RotationDistribution, path) -> None:
    """Rows `index,w,x,y,z,mass,log_density` at full float64 precision."""
    masses = rd.masses
    log_v = np.log(rd.rotation_grid.cell_volume)
    with open(path, "w") as f:
        f.write("index,w,x,y,z,mass,log_density\n")
        for i, q in enumerate(rd.rotation_grid.quats):
            f.write(
                f"{i},{q[0]:.17g},{q[1]:.17g},{q[2]:.17g},{q[3]:.17g},"
                f"{masses[i]:.17g},{rd.log_masses[i] - log_v:.17g}\n"
            )


def read_rotation_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Back out (quats, masses) from a rotation-distribution CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 7:
        raise FormatError(f"{path}: expected 7 columns, got {data.shape[1]}")
    return data[:, 1:5], data[:, 5]


def write_pose_dist(pd: PoseDistribution, path) -> None:
    """KPPD binary: magic, u32 version, u32 M, u32 T, M*T float64 masses."""
    m, t = pd.log_masses.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIII", PD_MAGIC, PD_VERSION, m, t))
        for a in range(0, m, _ROW_CHUNK):
            f.write(
                np.exp(pd.log_masses[a : a + _ROW_CHUNK])
                .astype("<f8")
                .tobytes()
            )


def read_pose_dist(path) -> np.ndarray:
    """Masses (M, T) from a KPPD file; grids are not stored and must be rebuilt."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    magic, version, m, t = struct.unpack_from("<4sIII", blob, 0)
    if magic != PD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != PD_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = 16 + 8 * m * t
    if len(blob) != expected:
        raise FormatError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    return np.frombuffer(blob, dtype="<f8", offset=16).reshape(m, t).copy()
