"""Shared scene builders.

Two canonical synthetic scenes are used across the suite:

* unimodal: a generic (asymmetric) 16-keypoint object, identity symmetry.
  Object radius ~15mm at 0.6m with fx=600 makes the rotation-space peak a
  few grid cells wide at recursion 3.
* box: a cuboid point cloud with a 180-degree symmetry about the object
  z-axis, which makes the rotation posterior exactly bimodal.

Both keep every keypoint inside the crop for every rotation, so uniform
heatmaps normalize to an exactly uniform pose distribution.
"""
import numpy as np
import pytest

import posedist as pdl
from posedist import so3


def make_unimodal_keypoints(n: int = 16, rho: float = 0.015, seed: int = 7):
    rng = np.random.default_rng(seed)
    cloud = rng.uniform(-rho, rho, (400, 3))
    return pdl.farthest_point_sample(cloud, n)


def make_box_keypoints(
    half_extents=(0.012, 0.009, 0.006), n: int = 16, seed: int = 3
):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 1.0, (600, 3))
    face = rng.integers(0, 3, 600)
    sign = rng.choice([-1.0, 1.0], 600)
    pts[np.arange(600), face] = sign
    return pdl.farthest_point_sample(pts * np.asarray(half_extents), n)


def make_camera(r: int = 96, fx: float = 600.0) -> pdl.CameraIntrinsics:
    return pdl.CameraIntrinsics(fx=fx, fy=fx, cx=r / 2, cy=r / 2, crop_resolution=r)


GT_ROTATION = so3.normalize(np.array([0.9, 0.2, -0.3, 0.15]))
GT_TRANSLATION = np.array([0.0, 0.0, 0.6])

# The box scene sits at 0.7m so the 1mm translation pitch is a non-integer
# 0.857px: the 121 translation cells then sample different sub-pixel phases
# and the two symmetric modes accumulate comparable discretization error.
BOX_GT_ROTATION = np.array(
    [0.5032658922416283, 0.4137410560437216, -0.6254393092258828, -0.42938031012741434]
)
BOX_GT_TRANSLATION = np.array([0.0, 0.0, 0.7])


@pytest.fixture(scope="session")
def unimodal_scene():
    keypoints = make_unimodal_keypoints()
    cam = make_camera()
    gt = pdl.Pose(rotation=GT_ROTATION, translation=GT_TRANSLATION)
    stack = pdl.synthesize_heatmaps(
        keypoints, gt, np.array([[1.0, 0.0, 0.0, 0.0]]), cam, sigma_px=1.0
    )
    return keypoints, cam, gt, stack


@pytest.fixture(scope="session")
def box_scene():
    keypoints = make_box_keypoints()
    cam = make_camera()
    gt = pdl.Pose(rotation=BOX_GT_ROTATION, translation=BOX_GT_TRANSLATION)
    sym = so3.cyclic_group([0.0, 0.0, 1.0], 2)
    stack = pdl.synthesize_heatmaps(keypoints, gt, sym, cam, sigma_px=1.0)
    return keypoints, cam, gt, sym, stack


@pytest.fixture(scope="session")
def grid_s1():
    return pdl.build_rotation_grid(1)


@pytest.fixture(scope="session")
def grid_s2():
    return pdl.build_rotation_grid(2)


@pytest.fixture(scope="session")
def grid_s3():
    return pdl.build_rotation_grid(3)


def random_stack(n: int, r: int, rng) -> pdl.HeatmapStack:
    return pdl.HeatmapStack.from_unnormalized(rng.uniform(0.0, 1.0, (n, r, r)))
