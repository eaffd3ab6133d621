"""Pinhole camera, crop geometry and keypoint selection."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import so3
from .errors import ProjectionError, ValidationError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus the axis-aligned crop transform.

    Sensor pixel (u, v) maps to crop pixel crop_scale * ((u, v) - crop_offset);
    the crop covers [0, crop_resolution)^2. A pixel (u, v) spans
    [u, u+1) x [v, v+1) and its center sits at (u + 0.5, v + 0.5).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    crop_offset: tuple[float, float] = (0.0, 0.0)
    crop_scale: float = 1.0
    crop_resolution: int = 128

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if self.crop_scale <= 0:
            raise ValidationError("crop_scale must be positive")
        if self.crop_resolution <= 0:
            raise ValidationError("crop_resolution must be positive")
        object.__setattr__(self, "crop_offset", tuple(float(v) for v in self.crop_offset))

    def with_jitter(self, scale_factor: float = 1.0, offset_shift=(0.0, 0.0)):
        return replace(
            self,
            crop_scale=self.crop_scale * scale_factor,
            crop_offset=(
                self.crop_offset[0] + offset_shift[0],
                self.crop_offset[1] + offset_shift[1],
            ),
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform of the object frame into the camera frame."""

    rotation: np.ndarray  # unit quaternion (w, x, y, z)
    translation: np.ndarray  # meters

    def __post_init__(self):
        object.__setattr__(
            self, "rotation", np.asarray(self.rotation, dtype=np.float64)
        )
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64)
        )

    def matrix(self) -> np.ndarray:
        return so3.to_matrix(self.rotation)


def project_keypoints(
    keypoints: np.ndarray, pose: Pose, cam: CameraIntrinsics
) -> np.ndarray:
    """Crop-pixel coordinates of the model keypoints under `pose`, shape (N, 2).

    Results may fall outside [0, crop_resolution)^2; callers decide what an
    out-of-crop keypoint means. A keypoint at or behind the camera plane
    raises ProjectionError.
    """
    keypoints = np.asarray(keypoints, dtype=np.float64)
    p = keypoints @ pose.matrix().T + pose.translation
    z = p[:, 2]
    if np.any(z <= 0.0):
        raise ProjectionError(
            f"{int(np.sum(z <= 0.0))} keypoint(s) at or behind the camera plane"
        )
    u = cam.crop_scale * ((cam.fx * p[:, 0] / z + cam.cx) - cam.crop_offset[0])
    v = cam.crop_scale * ((cam.fy * p[:, 1] / z + cam.cy) - cam.crop_offset[1])
    return np.stack([u, v], axis=1)


def farthest_point_sample(
    cloud: np.ndarray, n: int, seed_index: int = 0
) -> np.ndarray:
    """Greedy max-min selection of n points from the cloud.

    Starts at seed_index, then repeatedly adds the point with the largest
    minimum distance to the points already chosen. Ties break toward the
    lowest index, so the result is deterministic.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ValidationError("cloud must have shape (n, 3)")
    if not 1 <= n <= cloud.shape[0]:
        raise ValidationError(
            f"cannot select {n} points from a cloud of {cloud.shape[0]}"
        )
    if not 0 <= seed_index < cloud.shape[0]:
        raise ValidationError(f"seed_index {seed_index} out of range")
    chosen = [seed_index]
    dist = np.linalg.norm(cloud - cloud[seed_index], axis=1)
    while len(chosen) < n:
        idx = int(np.argmax(dist))
        chosen.append(idx)
        dist = np.minimum(dist, np.linalg.norm(cloud - cloud[idx], axis=1))
    return cloud[chosen]


def validate_keypoints(keypoints: np.ndarray) -> np.ndarray:
    """Check the pose-identifiability premise: N >= 4, not all collinear."""
    keypoints = np.asarray(keypoints, dtype=np.float64)
    if keypoints.ndim != 2 or keypoints.shape[1] != 3:
        raise ValidationError("keypoints must have shape (N, 3)")
    if keypoints.shape[0] < 4:
        raise ValidationError("at least 4 keypoints are required")
    centered = keypoints - keypoints.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-12) < 2:
        raise ValidationError("keypoints must not be collinear")
    return keypoints


def load_points_csv(path) -> np.ndarray:
    """Point cloud / keypoint CSV: one `x,y,z` row per point, meters."""
    pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if pts.shape[1] != 3:
        raise ValidationError(f"{path}: expected 3 columns, got {pts.shape[1]}")
    return pts


def save_points_csv(points: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(points, dtype=np.float64), delimiter=",", fmt="%.17g")
