"""Implicit 6D pose distributions from per-keypoint probability heatmaps.

The pipeline: sample SO(3) with an equivolumetric HEALPix/Hopf grid, pair it
with a small in-plane translation grid, score every pose by projecting the
model keypoints into the heatmaps, normalize in log space, and marginalize
to a rotation distribution.
"""
from .distribution import (
    Mode,
    PoseDistribution,
    RotationDistribution,
    TranslationGrid,
    entropy,
    evaluate_grid,
    log_likelihood_of,
    marginalize_rotation,
    mean_log_likelihood,
    mode_masses,
    read_pose_dist,
    read_rotation_csv,
    unnormalized_log_likelihood,
    write_pose_dist,
    write_rotation_csv,
)
from .errors import (
    DegenerateSceneError,
    FormatError,
    PosedistError,
    ProjectionError,
    ValidationError,
)
from .healpix import SphereGrid, healpix_centers
from .heatmaps import (
    HeatmapStack,
    log_lookup,
    read_heatmaps,
    synthesize_heatmaps,
    uniform_stack,
    write_heatmaps,
)
from .kernels import available_engines, default_engine
from .projection import (
    CameraIntrinsics,
    Pose,
    farthest_point_sample,
    load_points_csv,
    project_keypoints,
    save_points_csv,
)
from .rotation_grid import (
    RotationGrid,
    build_rotation_grid,
    estimate_covering_radius,
    nearest_sample,
    nearest_samples,
    write_grid_csv,
)
from .so3 import geodesic_distance

__version__ = "0.1.0"
