import numpy as np
import pytest

from conftest import random_stack
from posedist import so3
from posedist.distribution import (
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
from posedist.errors import DegenerateSceneError, ValidationError
from posedist.heatmaps import HeatmapStack, synthesize_heatmaps, uniform_stack
from posedist.projection import CameraIntrinsics, Pose
from posedist.rotation_grid import build_rotation_grid

UNIT_POSE = Pose(rotation=so3.IDENTITY, translation=np.array([0.0, 0.0, 1.0]))
SQUARE_KP = np.array(
    [[0.02, 0.0, 0.0], [-0.02, 0.0, 0.0], [0.0, 0.02, 0.01], [0.0, -0.02, 0.01]]
)
CAM64 = CameraIntrinsics(fx=300, fy=300, cx=32, cy=32, crop_resolution=64)


def test_translation_grid_default_layout():
    tg = TranslationGrid.planar(np.array([0.0, 0.0, 0.5]))
    assert len(tg) == 121
    xs = np.unique(tg.offsets[:, 0])
    assert xs.shape == (11,)
    assert xs[0] == pytest.approx(-0.005)
    assert xs[-1] == pytest.approx(0.005)
    assert np.allclose(np.diff(xs), 0.001)  # 1mm pitch
    assert np.all(tg.offsets[:, 2] == 0.0)
    assert np.allclose(tg.points[60], [0.0, 0.0, 0.5])


def test_translation_grid_validation():
    with pytest.raises(ValidationError):
        TranslationGrid(center=[0, 0, 1], offsets=np.zeros((0, 3)))
    with pytest.raises(ValidationError):
        TranslationGrid.planar([0, 0, 1], count=(0, 5))


# ------------------------------------------------- per-pose log likelihood


def test_unnormalized_equal_lookups():
    """All N lookups equal ln p: coupled gives ln p, independent N ln p."""
    stack = uniform_stack(4, 64)
    lnp = -2.0 * np.log(64)
    coupled = unnormalized_log_likelihood(stack, SQUARE_KP, UNIT_POSE, CAM64)
    indep = unnormalized_log_likelihood(
        stack, SQUARE_KP, UNIT_POSE, CAM64, mode="independent"
    )
    assert coupled == pytest.approx(lnp, rel=1e-12)
    assert indep == pytest.approx(4 * lnp, rel=1e-12)


def test_unnormalized_behind_camera_floors():
    stack = uniform_stack(4, 64)
    pose = Pose(rotation=so3.IDENTITY, translation=np.array([0.0, 0.0, -0.5]))
    assert unnormalized_log_likelihood(stack, SQUARE_KP, pose, CAM64) == -30.0
    assert (
        unnormalized_log_likelihood(stack, SQUARE_KP, pose, CAM64, "independent")
        == 4 * -30.0
    )


def test_unnormalized_channel_mismatch():
    stack = uniform_stack(5, 64)
    with pytest.raises(ValidationError):
        unnormalized_log_likelihood(stack, SQUARE_KP, UNIT_POSE, CAM64)
    with pytest.raises(ValidationError):
        unnormalized_log_likelihood(stack, SQUARE_KP, UNIT_POSE, CAM64, mode="both")


def _expspace_single_pose(stack, keypoints, pose, cam, mode):
    """Independent oracle: products in exp space, then the N-th root."""
    rot = pose.matrix()
    floor_val = np.exp(stack.log_floor)
    prod = 1.0
    r = stack.resolution
    for i, k in enumerate(keypoints):
        p = rot @ k + pose.translation
        u = cam.crop_scale * ((cam.fx * p[0] / p[2] + cam.cx) - cam.crop_offset[0])
        v = cam.crop_scale * ((cam.fy * p[1] / p[2] + cam.cy) - cam.crop_offset[1])
        if 0 <= u < r and 0 <= v < r:
            prod *= max(float(stack.data[i, int(v), int(u)]), floor_val)
        else:
            prod *= floor_val
    if mode == "coupled":
        return np.log(prod ** (1.0 / len(keypoints)))
    return np.log(prod)


@pytest.mark.parametrize("mode", ["coupled", "independent"])
def test_unnormalized_matches_expspace_oracle(mode):
    rng = np.random.default_rng(3)
    stack = random_stack(4, 64, rng)
    for q in so3.random_rotations(20, rng):
        pose = Pose(rotation=q, translation=np.array([0.0, 0.005, 1.0]))
        got = unnormalized_log_likelihood(stack, SQUARE_KP, pose, CAM64, mode)
        want = _expspace_single_pose(stack, SQUARE_KP, pose, CAM64, mode)
        assert got == pytest.approx(want, rel=1e-9)


# ------------------------------------------------------------- grid eval


def test_uniform_heatmaps_give_uniform_distribution(unimodal_scene, grid_s1):
    keypoints, cam, gt, _ = unimodal_scene
    stack = uniform_stack(16, cam.crop_resolution)
    tg = TranslationGrid.planar(gt.translation, count=(3, 3))
    pd = evaluate_grid(stack, keypoints, grid_s1, tg, cam)
    masses = pd.masses
    expected = 1.0 / masses.size
    assert np.all(np.abs(masses - expected) < 1e-9 * expected)
    assert pd.mass_sum() == pytest.approx(1.0, abs=1e-9)


def test_grid_masses_match_expspace_reference(grid_s1):
    """Plain exp-space normalization oracle on a one-translation grid."""
    rng = np.random.default_rng(5)
    grid = build_rotation_grid(0)
    stack = random_stack(4, 64, rng)
    tg = TranslationGrid(center=[0.0, 0.003, 1.0], offsets=[[0.0, 0.0, 0.0]])
    pd = evaluate_grid(stack, SQUARE_KP, grid, tg, CAM64)
    likes = np.array(
        [
            np.exp(
                _expspace_single_pose(
                    stack, SQUARE_KP, Pose(q, tg.points[0]), CAM64, "coupled"
                )
            )
            for q in grid.quats
        ]
    )
    ref = likes / likes.sum()
    got = pd.masses[:, 0]
    assert np.all(np.abs(got - ref) <= 1e-9 * ref)


def test_evaluate_grid_deterministic(unimodal_scene, grid_s1):
    keypoints, cam, gt, stack = unimodal_scene
    tg = TranslationGrid.planar(gt.translation, count=(3, 3))
    a = evaluate_grid(stack, keypoints, grid_s1, tg, cam)
    b = evaluate_grid(stack, keypoints, grid_s1, tg, cam)
    assert a.log_masses.tobytes() == b.log_masses.tobytes()


def test_all_poses_behind_camera_is_degenerate(grid_s1):
    stack = uniform_stack(4, 64)
    tg = TranslationGrid(center=[0.0, 0.0, -1.0], offsets=[[0.0, 0.0, 0.0]])
    with pytest.raises(DegenerateSceneError):
        evaluate_grid(stack, SQUARE_KP, grid_s1, tg, CAM64)


# --------------------------------------------------------- marginalization


def test_marginalize_single_translation(grid_s1):
    rng = np.random.default_rng(6)
    stack = random_stack(4, 64, rng)
    tg = TranslationGrid(center=[0.0, 0.0, 1.0], offsets=[[0.0, 0.0, 0.0]])
    pd = evaluate_grid(stack, SQUARE_KP, grid_s1, tg, CAM64)
    rd = marginalize_rotation(pd)
    assert np.allclose(rd.masses, pd.masses[:, 0], rtol=1e-12)


def test_marginalize_matches_row_sum_oracle(grid_s1):
    rng = np.random.default_rng(7)
    logs = rng.normal(size=(len(grid_s1), 9))
    logs -= np.log(np.exp(logs).sum())
    pd = PoseDistribution(
        rotation_grid=grid_s1,
        translation_grid=TranslationGrid.planar([0, 0, 1], count=(3, 3)),
        log_masses=logs,
        approx_mode="coupled",
    )
    rd = marginalize_rotation(pd)
    assert np.allclose(rd.masses, np.exp(logs).sum(axis=1), rtol=1e-12)
    assert rd.masses.sum() == pytest.approx(1.0, abs=1e-9)


def test_uniform_marginal_density(grid_s1):
    lm = np.full((len(grid_s1), 2), -np.log(2.0 * len(grid_s1)))
    pd = PoseDistribution(
        rotation_grid=grid_s1,
        translation_grid=TranslationGrid(center=[0, 0, 1], offsets=[[0, 0, 0], [0, 0, 0.001]]),
        log_masses=lm,
        approx_mode="coupled",
    )
    rd = marginalize_rotation(pd)
    assert np.allclose(rd.masses, 1.0 / len(grid_s1), rtol=1e-12)
    # uniform density on SO(3): 1 / pi^2
    assert np.allclose(rd.densities, 1.0 / np.pi**2, rtol=1e-9)


# ------------------------------------------------------------------ scoring


def test_uniform_score_is_log_inverse_so3_volume(grid_s1):
    rd = RotationDistribution.from_masses(
        grid_s1, np.full(len(grid_s1), 1.0 / len(grid_s1))
    )
    q = so3.random_rotations(1, np.random.default_rng(8))[0]
    assert log_likelihood_of(rd, q) == pytest.approx(-np.log(np.pi**2), rel=1e-9)
    assert log_likelihood_of(rd, q) == pytest.approx(-2.288, abs=5e-3)


def test_point_mass_score_hits_upper_bound(grid_s2):
    masses = np.zeros(len(grid_s2))
    masses[1234] = 1.0
    rd = RotationDistribution.from_masses(grid_s2, masses)
    got = log_likelihood_of(rd, grid_s2.quats[1234])
    assert got == pytest.approx(np.log(len(grid_s2) / np.pi**2), rel=1e-12)


def test_mean_log_likelihood_aggregation():
    per, overall = mean_log_likelihood({"a": [1.0, 3.0]})
    assert per == {"a": 2.0}
    assert overall == 2.0
    # object-level, not image-level, averaging
    per, overall = mean_log_likelihood({"a": [2.0] * 10, "b": [4.0]})
    assert overall == 3.0
    per, overall = mean_log_likelihood({"a": [1.5, 1.5], "b": [1.5, 1.5, 1.5]})
    assert overall == 1.5
    with pytest.raises(ValidationError):
        mean_log_likelihood({})
    with pytest.raises(ValidationError):
        mean_log_likelihood({"a": []})


def test_entropy_basics():
    assert entropy(np.full(64, 1.0 / 64)) == pytest.approx(np.log(64), rel=1e-12)
    point = np.zeros(64)
    point[3] = 1.0
    assert entropy(point) == 0.0


def test_coupled_is_never_sharper_than_independent(grid_s1):
    rng = np.random.default_rng(10)
    tg = TranslationGrid.planar([0.0, 0.0, 1.0], count=(2, 2))
    for _ in range(10):
        stack = random_stack(4, 32, rng)
        cam = CameraIntrinsics(fx=200, fy=200, cx=16, cy=16, crop_resolution=32)
        pc = evaluate_grid(stack, SQUARE_KP, grid_s1, tg, cam, mode="coupled")
        pi = evaluate_grid(stack, SQUARE_KP, grid_s1, tg, cam, mode="independent")
        assert entropy(pc.masses) >= entropy(pi.masses) - 1e-9
        assert np.argmax(pc.log_masses) == np.argmax(pi.log_masses)


# ------------------------------------------------------------------- modes


def test_mode_masses_two_point_distribution(grid_s1):
    masses = np.zeros(len(grid_s1))
    a = 0
    dists = so3.geodesic_distance(grid_s1.quats[a], grid_s1.quats)
    b = int(np.argmax(dists))
    masses[a] = 0.5
    masses[b] = 0.5
    rd = RotationDistribution.from_masses(grid_s1, masses)
    modes = mode_masses(rd, mode_radius=0.5 * dists[b])
    assert len(modes) == 2
    assert {m.index for m in modes} == {a, b}
    assert all(m.mass == pytest.approx(0.5, abs=1e-12) for m in modes)


def test_box_scene_identity_symmetry_is_unimodal(box_scene, grid_s3):
    """Without the symmetry mixture the same scene concentrates in one mode
    (>= 0.9 of total mass at recursion 3)."""
    keypoints, cam, gt, _, _ = box_scene
    stack = synthesize_heatmaps(
        keypoints, gt, np.array([[1.0, 0.0, 0.0, 0.0]]), cam, sigma_px=1.0
    )
    tg = TranslationGrid.planar(gt.translation)
    pd = evaluate_grid(stack, keypoints, grid_s3, tg, cam)
    modes = mode_masses(marginalize_rotation(pd), mode_radius=1.0)
    assert modes[0].mass >= 0.9


def test_scores_respect_theoretical_bounds(grid_s1):
    """Any gt score is finite and can never exceed ln(M / pi^2)."""
    rng = np.random.default_rng(21)
    tg = TranslationGrid.planar([0.0, 0.0, 0.9], count=(3, 3))
    cam = CameraIntrinsics(fx=200, fy=200, cx=16, cy=16, crop_resolution=32)
    kp = rng.uniform(-0.03, 0.03, (4, 3))
    upper = np.log(len(grid_s1) / np.pi**2)
    for _ in range(5):
        stack = random_stack(4, 32, rng)
        rd = marginalize_rotation(evaluate_grid(stack, kp, grid_s1, tg, cam))
        score = log_likelihood_of(rd, so3.random_rotations(1, rng)[0])
        assert np.isfinite(score)
        assert score <= upper + 1e-9


def test_translation_cells_scale_evaluation_count():
    a = TranslationGrid.planar([0, 0, 1], count=(11, 11))
    b = TranslationGrid.planar([0, 0, 1], count=(11, 22))
    assert len(b) == 2 * len(a) == 242


def test_mode_masses_absorbs_neighborhood(grid_s1):
    rng = np.random.default_rng(11)
    center = 42
    d = so3.geodesic_distance(grid_s1.quats[center], grid_s1.quats)
    masses = np.where(d < 0.4, 1.0, 1e-6)
    masses /= masses.sum()
    rd = RotationDistribution.from_masses(grid_s1, masses)
    modes = mode_masses(rd, mode_radius=0.45, min_peak_ratio=0.5)
    assert modes[0].mass == pytest.approx(float(masses[d < 0.45].sum()), rel=1e-9)


# ------------------------------------------------------------------ exports


def test_rotation_csv_round_trip(tmp_path, grid_s1):
    rng = np.random.default_rng(12)
    masses = rng.uniform(0.1, 1.0, len(grid_s1))
    masses /= masses.sum()
    rd = RotationDistribution.from_masses(grid_s1, masses)
    path = tmp_path / "rot.csv"
    write_rotation_csv(rd, path)
    header = path.read_text().splitlines()[0]
    assert header == "index,w,x,y,z,mass,log_density"
    quats, back = read_rotation_csv(path)
    assert np.array_equal(quats, grid_s1.quats)
    # 17 significant digits round-trip the distribution's masses exactly
    assert np.array_equal(back, rd.masses)


def test_pose_dist_binary_round_trip(tmp_path, grid_s1):
    rng = np.random.default_rng(13)
    logs = rng.normal(size=(len(grid_s1), 4))
    logs -= np.log(np.exp(logs).sum())
    pd = PoseDistribution(
        rotation_grid=grid_s1,
        translation_grid=TranslationGrid.planar([0, 0, 1], count=(2, 2)),
        log_masses=logs,
        approx_mode="coupled",
    )
    path = tmp_path / "dist.kppd"
    write_pose_dist(pd, path)
    back = read_pose_dist(path)
    assert back.shape == logs.shape
    assert np.array_equal(back, np.exp(logs))
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    from posedist.errors import FormatError

    with pytest.raises(FormatError):
        read_pose_dist(path)
