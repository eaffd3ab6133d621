"""Command-line workflows.

Subcommands: grid, synth, eval, sweep, viz, bench, score. Every command is a
pure function of (config, seed): repeated runs write identical files. Wall
times are printed to stdout only, never into output files.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import distribution as dist
from . import so3, viz
from .config import SceneConfig, load_scene
from .errors import FormatError, PosedistError, ValidationError
from .heatmaps import HeatmapStack, read_heatmaps, synthesize_heatmaps, write_heatmaps
from .kernels import available_engines, default_engine
from .projection import CameraIntrinsics, load_points_csv, validate_keypoints
from .rotation_grid import build_rotation_grid, nearest_sample, write_grid_csv


@dataclass
class PreparedScene:
    """A config resolved into concrete arrays, with noise already applied."""

    cfg: SceneConfig
    keypoints: np.ndarray
    cam: CameraIntrinsics  # effective (jittered) intrinsics
    grid_center: np.ndarray
    stack: HeatmapStack
    noise_report: dict


def _sensor_coords(keypoints, pose, cam):
    p = keypoints @ pose.matrix().T + pose.translation
    u = cam.fx * p[:, 0] / p[:, 2] + cam.cx
    v = cam.fy * p[:, 1] / p[:, 2] + cam.cy
    return u, v


def _apply_noise(cfg: SceneConfig, keypoints):
    """Jitter intrinsics and position estimate; fixed draw order from the seed."""
    rng = np.random.default_rng(cfg.seed if cfg.seed is not None else 0)
    noise = cfg.noise
    pos_offset = rng.uniform(-noise.position_m, noise.position_m, 3)
    scale_jit = float(rng.uniform(-noise.crop_scale_frac, noise.crop_scale_frac))

    cam = cfg.intrinsics
    factor = 1.0 + scale_jit
    if factor != 1.0:
        # rescale about the crop window center so the object stays framed
        half = cam.crop_resolution / 2.0
        center = (
            cam.crop_offset[0] + half / cam.crop_scale,
            cam.crop_offset[1] + half / cam.crop_scale,
        )
        new_scale = cam.crop_scale * factor
        cam = CameraIntrinsics(
            fx=cam.fx,
            fy=cam.fy,
            cx=cam.cx,
            cy=cam.cy,
            crop_offset=(
                center[0] - half / new_scale,
                center[1] - half / new_scale,
            ),
            crop_scale=new_scale,
            crop_resolution=cam.crop_resolution,
        )

    if noise.crop_translation_px == "auto":
        # largest symmetric crop shift that keeps all gt keypoints inside
        u, v = _sensor_coords(keypoints, cfg.gt_pose, cam)
        win = cam.crop_resolution / cam.crop_scale
        bu = max(
            0.0,
            min(u.min() - cam.crop_offset[0], cam.crop_offset[0] + win - u.max()),
        )
        bv = max(
            0.0,
            min(v.min() - cam.crop_offset[1], cam.crop_offset[1] + win - v.max()),
        )
    else:
        bu = bv = float(noise.crop_translation_px) / cam.crop_scale
    shift = (float(rng.uniform(-bu, bu)), float(rng.uniform(-bv, bv)))
    cam = cam.with_jitter(offset_shift=shift)

    report = {
        "position_offset_m": pos_offset.tolist(),
        "crop_scale_factor": factor,
        "crop_shift_sensor_px": list(shift),
        "crop_translation_bound_sensor_px": [bu, bv],
    }
    return cam, cfg.position_estimate + pos_offset, report


def prepare_scene(cfg: SceneConfig) -> PreparedScene:
    keypoints = validate_keypoints(load_points_csv(cfg.keypoints_path))
    cam, grid_center, report = _apply_noise(cfg, keypoints)
    if cfg.synthesis is not None:
        stack = synthesize_heatmaps(
            keypoints,
            cfg.gt_pose,
            cfg.synthesis.symmetries,
            cam,
            cfg.synthesis.sigma_px,
            log_floor=cfg.log_floor,
        )
    else:
        stack = read_heatmaps(cfg.heatmaps_path, log_floor=cfg.log_floor)
        if stack.resolution != cam.crop_resolution:
            raise ValidationError(
                f"heatmap resolution {stack.resolution} does not match "
                f"crop_resolution {cam.crop_resolution}"
            )
    return PreparedScene(
        cfg=cfg,
        keypoints=keypoints,
        cam=cam,
        grid_center=grid_center,
        stack=stack,
        noise_report=report,
    )


def run_scene(
    scene: PreparedScene,
    recursion: int | None = None,
    mode: str | None = None,
    engine: str | None = None,
    workers: int = 1,
):
    """Full pipeline: grids, dense evaluation, rotation marginal, gt score."""
    cfg = scene.cfg
    s = cfg.recursion if recursion is None else recursion
    mode = mode or cfg.mode
    rgrid = build_rotation_grid(s)
    tgrid = dist.TranslationGrid.planar(
        scene.grid_center,
        count=cfg.tgrid.count,
        span_m=cfg.tgrid.span_m,
        depth_offsets_m=cfg.tgrid.depth_offsets_m,
    )
    t0 = time.perf_counter()
    pd = dist.evaluate_grid(
        scene.stack, scene.keypoints, rgrid, tgrid, scene.cam,
        mode=mode, engine=engine, workers=workers,
    )
    elapsed = time.perf_counter() - t0
    rd = dist.marginalize_rotation(pd)

    gt_idx, gt_dist = nearest_sample(rgrid, cfg.gt_pose.rotation)
    log_v = float(np.log(rgrid.cell_volume))
    argmax = int(np.argmax(rd.log_masses))
    summary = {
        "mode": mode,
        "recursion": s,
        "rotation_samples": len(rgrid),
        "translation_samples": len(tgrid),
        "evaluations": len(rgrid) * len(tgrid),
        "engine": engine or default_engine(),
        "workers": workers,
        "gt_log_likelihood": float(rd.log_masses[gt_idx] - log_v),
        "gt_nearest_index": gt_idx,
        "gt_nearest_distance_rad": gt_dist,
        "argmax_index": argmax,
        "argmax_rotation": rgrid.quats[argmax].tolist(),
        "argmax_mass": float(np.exp(rd.log_masses[argmax])),
        "rotation_entropy": dist.entropy(rd.masses),
        "upper_bound_log_likelihood": float(-log_v),
        "behind_camera_poses": pd.behind_count,
        "log_floor": cfg.log_floor,
        "noise": scene.noise_report,
    }
    return pd, rd, summary, elapsed


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands


def cmd_grid(args) -> int:
    out = _outdir(args)
    grid = build_rotation_grid(args.recursion)
    path = out / f"grid_s{args.recursion}.csv"
    write_grid_csv(grid, path)
    print(f"wrote {len(grid)} rotations to {path}")
    return 0


def cmd_synth(args) -> int:
    cfg = load_scene(args.config)
    if cfg.synthesis is None:
        raise ValidationError("synth requires a config with a synthesis block")
    cfg = _override(cfg, args)
    out = _outdir(args)
    scene = prepare_scene(cfg)
    heatmap_path = out / "scene.kphm"
    write_heatmaps(scene.stack, heatmap_path)
    manifest = {
        "format": "KPHM",
        "version": 1,
        "resolution": scene.stack.resolution,
        "channels": scene.stack.channels,
        "sigma_px": cfg.synthesis.sigma_px,
        "symmetries": cfg.synthesis.symmetries.tolist(),
        "gt_pose": {
            "rotation": cfg.gt_pose.rotation.tolist(),
            "translation": cfg.gt_pose.translation.tolist(),
        },
        "seed": cfg.seed,
        "log_floor": cfg.log_floor,
        "effective_intrinsics": {
            "fx": scene.cam.fx,
            "fy": scene.cam.fy,
            "cx": scene.cam.cx,
            "cy": scene.cam.cy,
            "crop_offset": list(scene.cam.crop_offset),
            "crop_scale": scene.cam.crop_scale,
            "crop_resolution": scene.cam.crop_resolution,
        },
        "noise": scene.noise_report,
    }
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {heatmap_path} ({scene.stack.channels} channels, "
          f"r={scene.stack.resolution}) and manifest.json")
    return 0


def cmd_eval(args) -> int:
    cfg = _override(load_scene(args.config), args)
    scene = prepare_scene(cfg)
    pd, rd, summary, elapsed = run_scene(
        scene, engine=args.engine, workers=args.workers
    )
    out = _outdir(args)
    dist.write_rotation_csv(rd, out / "rotation_dist.csv")
    _write_json(out / "summary.json", summary)
    if args.full_dist:
        dist.write_pose_dist(pd, out / "pose_dist.kppd")
    rate = summary["evaluations"] / elapsed if elapsed > 0 else float("inf")
    print(
        f"gt log-likelihood {summary['gt_log_likelihood']:+.4f}  "
        f"entropy {summary['rotation_entropy']:.4f}  "
        f"argmax cell {summary['argmax_index']}"
    )
    print(
        f"{summary['evaluations']} evaluations in {elapsed:.3f}s "
        f"({rate / 1e6:.2f} M/s, engine {summary['engine']})"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _override(load_scene(args.config), args)
    recursions = sorted(set(args.recursions))
    if any(s < 0 or s > 5 for s in recursions):
        raise ValidationError("sweep recursions must be within [0, 5]")
    scene = prepare_scene(cfg)
    out = _outdir(args)
    rows = []
    print(f"{'s':>2} {'M':>9} {'gt logLL':>10} {'bound':>7} {'runtime':>9}")
    for s in recursions:
        _, _, summary, elapsed = run_scene(
            scene, recursion=s, engine=args.engine, workers=args.workers
        )
        bound = summary["upper_bound_log_likelihood"]
        rows.append((s, summary["rotation_samples"], summary["gt_log_likelihood"], bound))
        print(
            f"{s:>2} {summary['rotation_samples']:>9} "
            f"{summary['gt_log_likelihood']:>10.4f} {bound:>7.2f} {elapsed:>8.2f}s"
        )
    with open(out / "sweep.csv", "w") as f:
        f.write("recursion,rotation_samples,gt_log_likelihood,upper_bound\n")
        for s, m, ll, bound in rows:
            f.write(f"{s},{m},{ll:.17g},{bound:.17g}\n")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_viz(args) -> int:
    out = _outdir(args)
    gt_rotation = None
    if args.dist is not None:
        quats, masses = dist.read_rotation_csv(args.dist)
        if args.config:
            gt_rotation = load_scene(args.config).gt_pose.rotation
    else:
        if args.config is None:
            raise ValidationError("viz needs --dist or --config")
        cfg = _override(load_scene(args.config), args)
        scene = prepare_scene(cfg)
        _, rd, _, _ = run_scene(scene, engine=args.engine, workers=args.workers)
        quats, masses = rd.rotation_grid.quats, rd.masses
        gt_rotation = cfg.gt_pose.rotation
    if args.gt:
        gt_rotation = so3.normalize(np.array([float(v) for v in args.gt.split(",")]))
    records = viz.viz_records(quats, masses)
    viz.write_viz_csv(records, out / "viz.csv")
    viz.render_mollweide_ppm(
        records, out / "viz.ppm", gt_rotation=gt_rotation
    )
    manifest = {"records": len(records), "conventions": viz.CONVENTIONS}
    if gt_rotation is not None:
        manifest["gt_rotation"] = list(map(float, gt_rotation))
    _write_json(out / "viz_manifest.json", manifest)
    print(f"wrote {out / 'viz.csv'}, viz.ppm ({len(records)} records)")
    return 0


def cmd_bench(args) -> int:
    cfg = _override(load_scene(args.config), args)
    scene = prepare_scene(cfg)
    engines = available_engines() if args.engine is None else [args.engine]
    for engine in engines:
        times = []
        count = None
        for _ in range(args.repetitions):
            _, _, summary, elapsed = run_scene(
                scene, engine=engine, workers=args.workers
            )
            times.append(elapsed)
            count = summary["evaluations"]
        med = sorted(times)[len(times) // 2]
        print(
            f"engine {engine:>6}: {count} evaluations, median {med:.3f}s "
            f"over {args.repetitions} run(s), {count / med / 1e6:.2f} M evals/s"
        )
    return 0


def cmd_score(args) -> int:
    spec_path = Path(args.scenes)
    try:
        spec = json.loads(spec_path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"scene list not found: {spec_path}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"{spec_path}: invalid JSON ({e})") from None
    entries = spec.get("scenes") if isinstance(spec, dict) else None
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"{spec_path}: expected a non-empty 'scenes' list")
    scores: dict[str, list[float]] = {}
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "object" not in entry or "config" not in entry:
            raise ValidationError(
                f"{spec_path}: scenes[{i}] must have 'object' and 'config'"
            )
        cfg = load_scene(spec_path.parent / entry["config"])
        scene = prepare_scene(cfg)
        _, _, summary, _ = run_scene(scene, engine=args.engine, workers=args.workers)
        scores.setdefault(str(entry["object"]), []).append(
            summary["gt_log_likelihood"]
        )
    per_object, overall = dist.mean_log_likelihood(scores)
    out = _outdir(args)
    _write_json(
        out / "scores.json",
        {
            "per_object_mean_log_likelihood": per_object,
            "mean_log_likelihood": overall,
            "scene_count": len(entries),
        },
    )
    for name in sorted(per_object):
        print(f"{name:>24}: {per_object[name]:+.4f} ({len(scores[name])} scene(s))")
    print(f"{'meanLL':>24}: {overall:+.4f}")
    return 0


# ---------------------------------------------------------------- plumbing


def _override(cfg: SceneConfig, args) -> SceneConfig:
    from dataclasses import replace

    changes = {}
    if getattr(args, "recursion", None) is not None:
        if not 0 <= args.recursion <= 6:
            raise ValidationError("--recursion must be in [0, 6]")
        changes["recursion"] = args.recursion
    if getattr(args, "mode", None) is not None:
        changes["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    return replace(cfg, **changes) if changes else cfg


def _add_common(p, config=True, out=True):
    if config:
        p.add_argument("--config", required=True, help="scene config JSON")
    if out:
        p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--recursion", type=int, help="override grid recursion")
    p.add_argument("--mode", choices=("coupled", "independent"))
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--engine", choices=("native", "numpy"))
    p.add_argument("--workers", type=int, default=1)


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    runtime failures and report bad arguments as validation errors (1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="posedist",
        description="Pose distributions from keypoint heatmaps on an "
        "equivolumetric SE(3) grid",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", help="export the rotation grid as CSV")
    p.add_argument("--recursion", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", help="synthesize heatmaps + manifest")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="evaluate the pose distribution of a scene")
    _add_common(p)
    p.add_argument(
        "--full-dist", action="store_true",
        help="also write the full pose distribution (KPPD)",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="gt log-likelihood across recursions")
    _add_common(p)
    p.add_argument(
        "--recursions", type=lambda s: [int(v) for v in s.split(",")],
        default=[1, 2, 3], help="comma-separated recursion list",
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("viz", help="Mollweide visualization of a rotation distribution")
    p.add_argument("--dist", help="rotation_dist.csv from eval")
    p.add_argument("--config", help="scene config (evaluates fresh)")
    p.add_argument("--out", required=True)
    p.add_argument("--gt", help="mark rotation 'w,x,y,z'")
    p.add_argument("--recursion", type=int)
    p.add_argument("--mode", choices=("coupled", "independent"))
    p.add_argument("--seed", type=int)
    p.add_argument("--engine", choices=("native", "numpy"))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("bench", help="throughput of the dense evaluation")
    _add_common(p, out=False)
    p.add_argument("--repetitions", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("score", help="batch meanLL over a scene list")
    p.add_argument("--scenes", required=True, help="JSON with a 'scenes' list")
    p.add_argument("--out", required=True)
    p.add_argument("--engine", choices=("native", "numpy"))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_score)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except PosedistError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
