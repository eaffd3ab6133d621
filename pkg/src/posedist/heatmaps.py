"""Per-keypoint probability heatmaps.

A stack holds N channels of r x r per-pixel probabilities, one channel per
keypoint, each channel summing to 1. Data is float32 (the wire format),
indexed [channel, y, x]. Log lookups are clamped at `log_floor` so a single
empty cell can never contribute -inf.

The synthetic generator renders what an ideal detector would output: an
isotropic Gaussian at each keypoint's projection, optionally mixed over an
object symmetry set, evaluated at pixel centers and renormalized.
"""
from __future__ import annotations

import struct
import warnings

import numpy as np

from . import so3
from .errors import DegenerateSceneError, FormatError, ValidationError
from .projection import (
    CameraIntrinsics,
    Pose,
    project_keypoints,
    validate_keypoints,
)

MAGIC = b"KPHM"
VERSION = 1
DEFAULT_LOG_FLOOR = -30.0

CHANNEL_SUM_TOL = 1e-6  # invariant on a valid stack
RENORM_TOL = 1e-3  # file reader repairs sums within this band


class HeatmapStack:
    """N channels of r x r marginal keypoint probabilities."""

    def __init__(self, data: np.ndarray, log_floor: float = DEFAULT_LOG_FLOOR):
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 3 or data.shape[1] != data.shape[2]:
            raise ValidationError("heatmap data must have shape (N, r, r)")
        if np.any(data < 0):
            raise ValidationError("heatmap values must be non-negative")
        sums = data.sum(axis=(1, 2), dtype=np.float64)
        bad = np.abs(sums - 1.0) > CHANNEL_SUM_TOL
        if np.any(bad):
            raise ValidationError(
                f"channel(s) {np.nonzero(bad)[0].tolist()} do not sum to 1 "
                f"(sums {sums[bad]})"
            )
        self.data = data
        self.log_floor = float(log_floor)
        self._log_data: np.ndarray | None = None

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def resolution(self) -> int:
        return self.data.shape[1]

    @property
    def log_data(self) -> np.ndarray:
        """float64 log-probabilities with values below exp(log_floor) clamped."""
        if self._log_data is None:
            floor_val = np.exp(self.log_floor)
            self._log_data = np.log(
                np.maximum(self.data.astype(np.float64), floor_val)
            )
        return self._log_data

    @classmethod
    def from_unnormalized(
        cls, raw: np.ndarray, log_floor: float = DEFAULT_LOG_FLOOR
    ) -> "HeatmapStack":
        """Normalize each channel (float64 accumulation) and build a stack."""
        raw = np.asarray(raw, dtype=np.float64)
        sums = raw.sum(axis=(1, 2))
        if np.any(sums < 1e-12):
            raise DegenerateSceneError(
                f"channel(s) {np.nonzero(sums < 1e-12)[0].tolist()} carry no mass"
            )
        return cls((raw / sums[:, None, None]).astype(np.float32), log_floor)


def uniform_stack(
    channels: int, resolution: int, log_floor: float = DEFAULT_LOG_FLOOR
) -> HeatmapStack:
    data = np.full(
        (channels, resolution, resolution),
        1.0 / (resolution * resolution),
        dtype=np.float64,
    )
    return HeatmapStack.from_unnormalized(data, log_floor)


def log_lookup(
    stack: HeatmapStack,
    channel: int,
    point,
    interpolation: str = "nearest",
) -> float:
    """Log-probability at a crop-pixel position, clamped at log_floor.

    Nearest-pixel lookup by default: the pixel containing the point under
    the half-integer-center convention. Out-of-crop points return the floor.
    """
    if not 0 <= channel < stack.channels:
        raise ValidationError(f"channel {channel} out of range")
    x, y = float(point[0]), float(point[1])
    r = stack.resolution
    if not (0.0 <= x < r and 0.0 <= y < r):
        return stack.log_floor
    if interpolation == "nearest":
        return float(stack.log_data[channel, int(y), int(x)])
    if interpolation == "bilinear":
        gx, gy = x - 0.5, y - 0.5
        x0, y0 = int(np.floor(gx)), int(np.floor(gy))
        wx, wy = gx - x0, gy - y0
        val = 0.0
        for dy, fy in ((0, 1.0 - wy), (1, wy)):
            for dx, fx in ((0, 1.0 - wx), (1, wx)):
                xi, yi = x0 + dx, y0 + dy
                if 0 <= xi < r and 0 <= yi < r:
                    val += fx * fy * float(stack.data[channel, yi, xi])
        return max(np.log(max(val, np.exp(stack.log_floor))), stack.log_floor)
    raise ValidationError(f"unknown interpolation mode {interpolation!r}")


def synthesize_heatmaps(
    keypoints: np.ndarray,
    gt_pose: Pose,
    symmetries: np.ndarray,
    cam: CameraIntrinsics,
    sigma_px: float,
    log_floor: float = DEFAULT_LOG_FLOOR,
) -> HeatmapStack:
    """Ideal-detector heatmaps: per-keypoint Gaussians mixed over symmetries.

    Channel i is the equal-weight mixture, over the symmetry-equivalent poses
    gt_pose * S, of isotropic Gaussians N(projection of keypoint i, sigma_px)
    sampled at pixel centers and renormalized to sum 1. Keypoints projecting
    outside the crop contribute whatever tail lands inside; a channel whose
    entire mixture falls outside is a degenerate scene.
    """
    if sigma_px <= 0:
        raise ValidationError("sigma_px must be positive")
    r = cam.crop_resolution
    if r < 8:
        raise ValidationError("crop_resolution must be at least 8")
    symmetries = np.atleast_2d(np.asarray(symmetries, dtype=np.float64))
    if not np.any(so3.geodesic_distance(symmetries, so3.IDENTITY) < 1e-9):
        raise ValidationError("symmetry set must contain the identity")
    keypoints = validate_keypoints(keypoints)
    n = keypoints.shape[0]

    centers = np.arange(r, dtype=np.float64) + 0.5
    inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px)
    raw = np.zeros((n, r, r), dtype=np.float64)
    for sym in symmetries:
        pose = Pose(so3.multiply(gt_pose.rotation, sym), gt_pose.translation)
        kp = project_keypoints(keypoints, pose, cam)
        for i in range(n):
            gx = np.exp(-((centers - kp[i, 0]) ** 2) * inv2s2)
            gy = np.exp(-((centers - kp[i, 1]) ** 2) * inv2s2)
            raw[i] += np.outer(gy, gx)
    return HeatmapStack.from_unnormalized(raw, log_floor)


def write_heatmaps(stack: HeatmapStack, path) -> None:
    """KPHM binary: magic, u32 version, u32 r, u32 N, then N*r*r float32
    (channel-major, row-major within a channel), all little-endian."""
    header = struct.pack(
        "<4sIII", MAGIC, VERSION, stack.resolution, stack.channels
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(stack.data, dtype="<f4").tobytes())


def read_heatmaps(path, log_floor: float = DEFAULT_LOG_FLOOR) -> HeatmapStack:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    magic, version, r, n = struct.unpack_from("<4sIII", blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = 16 + 4 * n * r * r
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload is {len(blob)} bytes, expected {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=16).reshape(n, r, r).copy()
    if np.any(data < 0):
        raise FormatError(f"{path}: negative heatmap values")
    sums = data.sum(axis=(1, 2), dtype=np.float64)
    err = np.abs(sums - 1.0)
    if np.any(err > RENORM_TOL):
        raise FormatError(
            f"{path}: channel sums {sums[err > RENORM_TOL]} outside the "
            f"{RENORM_TOL} tolerance band"
        )
    if np.any(err > CHANNEL_SUM_TOL):
        warnings.warn(
            f"{path}: renormalizing {int(np.sum(err > CHANNEL_SUM_TOL))} "
            "channel(s) with off-unit sums",
            stacklevel=2,
        )
        data = (data.astype(np.float64) / sums[:, None, None]).astype(np.float32)
    return HeatmapStack(data, log_floor)
