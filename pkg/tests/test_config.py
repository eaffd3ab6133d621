import json

import numpy as np
import pytest

from conftest import GT_ROTATION, make_unimodal_keypoints
from posedist import save_points_csv
from posedist.config import ConfigError, load_scene
from posedist.errors import ValidationError


def base_config(**over):
    cfg = {
        "keypoints_path": "kp.csv",
        "intrinsics": {
            "fx": 600.0, "fy": 600.0, "cx": 48.0, "cy": 48.0,
            "crop_offset": [0.0, 0.0], "crop_scale": 1.0, "crop_resolution": 96,
        },
        "gt_pose": {
            "rotation": GT_ROTATION.tolist(),
            "translation": [0.0, 0.0, 0.6],
        },
        "recursion": 1,
        "synthesis": {"sigma_px": 1.0},
    }
    cfg.update(over)
    return cfg


def write_config(tmp_path, cfg, name="scene.json"):
    save_points_csv(make_unimodal_keypoints(), tmp_path / "kp.csv")
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_valid_config_parses(tmp_path):
    path = write_config(tmp_path, base_config())
    cfg = load_scene(path)
    assert cfg.recursion == 1
    assert cfg.mode == "coupled"
    assert cfg.keypoints_path == tmp_path / "kp.csv"  # resolved relative to config
    assert cfg.synthesis is not None
    assert cfg.synthesis.sigma_px == 1.0
    assert cfg.synthesis.symmetries.shape == (1, 4)
    assert np.allclose(cfg.position_estimate, [0.0, 0.0, 0.6])  # defaults to gt
    # the gt quaternion is normalized on load
    assert np.linalg.norm(cfg.gt_pose.rotation) == pytest.approx(1.0, rel=1e-12)


def test_symmetry_axis_order_form(tmp_path):
    cfg = base_config(
        synthesis={"sigma_px": 1.0, "symmetries": {"axis": [0, 0, 1], "order": 2}}
    )
    parsed = load_scene(write_config(tmp_path, cfg))
    assert parsed.synthesis.symmetries.shape == (2, 4)


def test_exactly_one_heatmap_source(tmp_path):
    cfg = base_config()
    cfg["heatmaps_path"] = "x.kphm"
    with pytest.raises(ConfigError, match="exactly one"):
        load_scene(write_config(tmp_path, cfg))
    cfg = base_config()
    del cfg["synthesis"]
    with pytest.raises(ConfigError, match="exactly one"):
        load_scene(write_config(tmp_path, cfg))


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda c: c.pop("keypoints_path"), "keypoints_path"),
        (lambda c: c["intrinsics"].pop("fx"), "intrinsics.fx"),
        (lambda c: c["intrinsics"].update(fx=-1.0), "intrinsics"),
        (lambda c: c.update(recursion=9), "recursion"),
        (lambda c: c.update(mode="best"), "mode"),
        (lambda c: c.update(log_floor=1.0), "log_floor"),
        (lambda c: c["gt_pose"].update(rotation=[1, 0, 0]), "gt_pose.rotation"),
        (lambda c: c["gt_pose"].update(rotation=[0.5, 0, 0, 0]), "gt_pose.rotation"),
        (lambda c: c["gt_pose"].update(translation=[0, 0, -1]), "gt_pose.translation"),
        (lambda c: c["synthesis"].update(sigma_px=0.0), "synthesis.sigma_px"),
        (lambda c: c.update(translation_grid={"count": [0, 11]}), "translation_grid.count"),
    ],
)
def test_field_level_errors(tmp_path, mutate, field):
    cfg = base_config()
    mutate(cfg)
    with pytest.raises(ConfigError) as err:
        load_scene(write_config(tmp_path, cfg))
    assert field in str(err.value)


def test_noise_requires_seed(tmp_path):
    cfg = base_config(noise={"position_mm": 10.0})
    with pytest.raises(ConfigError, match="seed"):
        load_scene(write_config(tmp_path, cfg))
    cfg["seed"] = 42
    parsed = load_scene(write_config(tmp_path, cfg))
    assert parsed.noise.position_m == pytest.approx(0.010)
    # present-but-empty noise block: protocol defaults
    cfg = base_config(noise={}, seed=1)
    parsed = load_scene(write_config(tmp_path, cfg))
    assert parsed.noise.position_m == pytest.approx(0.010)
    assert parsed.noise.crop_scale_frac == pytest.approx(0.05)
    assert parsed.noise.crop_translation_px == "auto"


def test_crop_noise_needs_synthesis(tmp_path):
    cfg = base_config(seed=3, noise={"position_mm": 0.0, "crop_scale_pct": 5.0})
    del cfg["synthesis"]
    cfg["heatmaps_path"] = "scene.kphm"
    with pytest.raises(ConfigError, match="crop jitter"):
        load_scene(write_config(tmp_path, cfg))
    # position-only noise is fine with file heatmaps
    cfg["noise"] = {"position_mm": 10.0, "crop_scale_pct": 0.0, "crop_translation_px": 0.0}
    parsed = load_scene(write_config(tmp_path, cfg))
    assert parsed.heatmaps_path == tmp_path / "scene.kphm"


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        load_scene(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError, match="invalid JSON"):
        load_scene(bad)
