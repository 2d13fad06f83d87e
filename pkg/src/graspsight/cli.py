"""Command-line entry points.

Subcommands: render, saliency, detect, plan, eval, metrics. Exit codes:
0 success, 2 no detection / no ROI, 3 planning failed, 1 other errors.
Defaults for --seed and --out can be overridden with the GRASPSIGHT_SEED and
GRASPSIGHT_OUT environment variables.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import cv2
import numpy as np

from . import __version__
from .detect import (
    DetectParams,
    NoGraspPointError,
    confusion_matrix,
    detect,
    full_roi,
    iou_per_type,
    read_pmap,
)
from .experiment import RunConfig, run_experiment
from .imaging import ImageF, InvalidInputError, read_image, write_image
from .planner import HandKind, HandModel, PlanParams, PlanningFailedError, plan
from .provider import SyntheticProvider
from .saliency import Roi, SaliencyParams, compute_saliency, extract_rois
from .scene import CameraModel, NoSurfaceError, load_scene, render_depth, render_rgb

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_DETECTION = 2
EXIT_PLANNING_FAILED = 3


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _camera(args) -> CameraModel:
    return CameraModel.overhead(width=args.width, height=args.height,
                                fx=args.focal, fy=args.focal,
                                camera_height=args.camera_height)


def cmd_render(args) -> int:
    out = _out_dir(args)
    scene = load_scene(args.scene)
    camera = _camera(args)
    write_image(out / "rgb.png", render_rgb(scene, camera))
    depth = render_depth(scene, camera)
    peak = float(depth.data.max())
    vis = ImageF(depth.data / peak if peak > 0 else depth.data)
    write_image(out / "depth.pgm", vis)
    print(f"wrote {out / 'rgb.png'} and {out / 'depth.pgm'}")
    return EXIT_OK


def cmd_saliency(args) -> int:
    out = _out_dir(args)
    rgb = read_image(args.image)
    sal = compute_saliency(rgb, SaliencyParams())
    rois = extract_rois(sal, max_rois=args.max_rois, grow_fraction=args.grow_fraction)
    write_image(out / "saliency.pgm", sal.map)
    (out / "rois.json").write_text(json.dumps([r.to_dict() for r in rois], indent=2))
    print(f"wrote {out / 'saliency.pgm'} and {out / 'rois.json'} ({len(rois)} ROIs)")
    return EXIT_OK


def _roi_from_args(args, maps) -> Roi:
    if args.rois:
        entries = json.loads(Path(args.rois).read_text())
        if not entries:
            raise NoGraspPointError("ROI list is empty")
        e = entries[args.roi_index]
        return Roi(x=e["x"], y=e["y"], w=e["w"], h=e["h"],
                   mask=np.ones((e["h"], e["w"]), dtype=bool),
                   seed=tuple(e.get("seed", (e["x"], e["y"]))), peak=e.get("peak", 1.0))
    return full_roi(maps)


def _draw_overlay(base: ImageF, roi: Roi, point) -> ImageF:
    img = np.moveaxis(np.clip(base.data, 0, 1), 0, 2).copy()
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    u8 = (img * 255).astype(np.uint8)
    cv2.rectangle(u8, (roi.x, roi.y), (roi.x + roi.w - 1, roi.y + roi.h - 1),
                  (255, 0, 0), 2)
    if point is not None:
        cv2.circle(u8, (int(round(point[0])), int(round(point[1]))), 4, (0, 255, 0), -1)
    return ImageF(np.moveaxis(u8.astype(np.float32) / 255.0, 2, 0))


def cmd_detect(args) -> int:
    out = _out_dir(args)
    maps = read_pmap(args.pmap)
    roi = _roi_from_args(args, maps)
    base = read_image(args.image) if args.image else ImageF(maps.data.max(axis=0))
    try:
        info = detect(maps, roi, DetectParams(bandwidth=args.bandwidth,
                                              activation=args.activation))
    except NoGraspPointError:
        payload = {"roi": roi.to_dict(), "type_name": None, "type_code": None,
                   "point": None, "score": None}
        (out / "omega.json").write_text(json.dumps(payload, indent=2))
        write_image(out / "overlay.png", _draw_overlay(base, roi, None))
        print("no grasp point found", file=sys.stderr)
        return EXIT_NO_DETECTION
    (out / "omega.json").write_text(json.dumps(info.to_dict(), indent=2))
    write_image(out / "overlay.png", _draw_overlay(base, roi, info.point))
    print(f"wrote {out / 'omega.json'}: {info.grasp_type.display_name} at "
          f"({info.point[0]:.1f},{info.point[1]:.1f})")
    return EXIT_OK


def cmd_plan(args) -> int:
    out = _out_dir(args)
    scene = load_scene(args.scene)
    camera = _camera(args)
    rgb = render_rgb(scene, camera)
    sal = compute_saliency(rgb, SaliencyParams())
    rois = extract_rois(sal, max_rois=3)
    if not rois:
        print("no ROI found in the scene", file=sys.stderr)
        return EXIT_NO_DETECTION
    maps = SyntheticProvider().maps(scene, camera)
    params = PlanParams(d0=args.standoff, max_attempts=args.max_attempts)
    try:
        info = detect(maps, rois[0], DetectParams())
    except NoGraspPointError:
        print("no grasp point found", file=sys.stderr)
        return EXIT_NO_DETECTION
    hand = HandModel.default(HandKind(args.hand))
    try:
        result = plan(scene, camera, info, hand, params)
    except (PlanningFailedError, NoSurfaceError) as e:
        print(f"planning failed: {e}", file=sys.stderr)
        return EXIT_PLANNING_FAILED
    (out / "plan.json").write_text(json.dumps(result.to_dict(), indent=2))
    print(f"wrote {out / 'plan.json'}: {result.grasp_type.display_name}, "
          f"Q={result.outcome.quality:.3f}, attempts={result.attempts_used}")
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _out_dir(args)
    if args.config:
        cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text()))
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    report = run_experiment(cfg)
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.json").write_text(report.to_json())
    print(report.to_csv())
    return EXIT_OK


def cmd_metrics(args) -> int:
    out = _out_dir(args)
    pred = read_pmap(args.pred)
    gt = read_pmap(args.gt)
    ious = iou_per_type(pred, gt, bin_threshold=args.threshold)
    cm = confusion_matrix(pred, gt)
    names = ["large_wrap", "small_wrap", "power", "pinch", "precision", "tripod"]
    lines = ["type,iou"]
    lines += [f"{n},{v:.6f}" for n, v in zip(names, ious)]
    lines.append(f"mean,{float(np.mean(ious)):.6f}")
    (out / "iou.csv").write_text("\n".join(lines) + "\n")
    cm_lines = ["gt\\pred," + ",".join(names)]
    cm_lines += [f"{names[i]}," + ",".join(f"{v:.6f}" for v in cm[i]) for i in range(6)]
    (out / "confusion.csv").write_text("\n".join(cm_lines) + "\n")
    print(f"mean IoU = {float(np.mean(ious)):.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graspsight",
                                description="Saliency-guided grasp detection and planning")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_out(sp):
        sp.add_argument("--out", default=os.environ.get("GRASPSIGHT_OUT", "out"),
                        help="output directory")

    def add_camera(sp):
        sp.add_argument("--width", type=int, default=640)
        sp.add_argument("--height", type=int, default=480)
        sp.add_argument("--focal", type=float, default=540.0)
        sp.add_argument("--camera-height", type=float, default=0.8)

    sp = sub.add_parser("render", help="render a scene to RGB + depth")
    sp.add_argument("--scene", required=True)
    add_camera(sp)
    add_out(sp)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("saliency", help="saliency map + ROIs from an image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--max-rois", type=int, default=5)
    sp.add_argument("--grow-fraction", type=float, default=0.5)
    add_out(sp)
    sp.set_defaults(func=cmd_saliency)

    sp = sub.add_parser("detect", help="grasp type + point from probability maps")
    sp.add_argument("--pmap", required=True, help="PMAP probability maps")
    sp.add_argument("--rois", help="rois.json produced by the saliency command")
    sp.add_argument("--roi-index", type=int, default=0)
    sp.add_argument("--image", help="base image for the overlay")
    sp.add_argument("--bandwidth", type=float, default=15.0)
    sp.add_argument("--activation", type=float, default=0.3)
    add_out(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("plan", help="full pipeline: scene -> ranked grasp")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--hand", choices=[k.value for k in HandKind], default="five")
    sp.add_argument("--standoff", type=float, default=None,
                    help="palm standoff in m (default: hand-relative)")
    sp.add_argument("--max-attempts", type=int, default=40)
    add_camera(sp)
    add_out(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("eval", help="run the grasping experiment suite")
    sp.add_argument("--config", help="RunConfig JSON")
    sp.add_argument("--seed", type=int,
                    default=(int(os.environ["GRASPSIGHT_SEED"])
                             if "GRASPSIGHT_SEED" in os.environ else None))
    add_out(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("metrics", help="IoU table + confusion matrix")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--threshold", type=float, default=0.5)
    add_out(sp)
    sp.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, FileNotFoundError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
