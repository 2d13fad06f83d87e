"""Tabletop grasping experiment runner.

Runs repeated grasp trials over a suite of primitive objects for both the
informed planner (saliency -> detection -> local search) and the random
surface-sampling baseline, and aggregates success rates and search attempts.
Everything is deterministic given the config seed: trial poses are derived
from a hash of (seed, object, trial).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .detect import DetectParams, NoGraspPointError, detect
from .imaging import InvalidInputError, PyramidParams
from .planner import (
    HandKind,
    HandModel,
    PlanParams,
    PlanningFailedError,
    plan,
    random_baseline,
)
from .provider import SyntheticProvider
from .saliency import SaliencyParams, compute_saliency, extract_rois
from .scene import CameraModel, NoSurfaceError, Pose, PrimitiveObject, Scene, _shape_from_dict, rpy_matrix

METHOD_INFORMED = "informed"
METHOD_BASELINE = "random_baseline"


def default_suite() -> list[dict]:
    """Six desk-scale primitive analogs of common household objects."""
    return [
        {"id": "soup_can", "shape": {"kind": "cylinder", "r": 0.033, "h": 0.10},
         "pose": {"translation": [0.0, 0.0, 0.05], "rotation_rpy": [0, 0, 0]},
         "color": [0.85, 0.15, 0.15], "mass": 0.15},
        {"id": "tuna_can", "shape": {"kind": "cylinder", "r": 0.045, "h": 0.033},
         "pose": {"translation": [0.0, 0.0, 0.0165], "rotation_rpy": [0, 0, 0]},
         "color": [0.20, 0.40, 0.85], "mass": 0.12},
        {"id": "banana", "shape": {"kind": "capsule", "r": 0.009, "l": 0.12},
         "pose": {"translation": [0.0, 0.0, 0.009], "rotation_rpy": [0, math.pi / 2, 0]},
         "color": [0.90, 0.85, 0.10], "mass": 0.08},
        {"id": "apple", "shape": {"kind": "sphere", "r": 0.038},
         "pose": {"translation": [0.0, 0.0, 0.038], "rotation_rpy": [0, 0, 0]},
         "color": [0.80, 0.10, 0.10], "mass": 0.12},
        {"id": "orange", "shape": {"kind": "sphere", "r": 0.035},
         "pose": {"translation": [0.0, 0.0, 0.035], "rotation_rpy": [0, 0, 0]},
         "color": [0.95, 0.55, 0.05], "mass": 0.12},
        {"id": "chips_can", "shape": {"kind": "cylinder", "r": 0.037, "h": 0.23},
         "pose": {"translation": [0.0, 0.0, 0.115], "rotation_rpy": [0, 0, 0]},
         "color": [0.70, 0.20, 0.60], "mass": 0.10},
    ]


@dataclass(frozen=True)
class RunConfig:
    trials: int = 10
    seed: int = 0
    hand: str = "five"
    max_attempts: int = 40
    methods: tuple = (METHOD_INFORMED, METHOD_BASELINE)
    objects: tuple = field(default_factory=lambda: tuple(default_suite()))
    image_width: int = 640
    image_height: int = 480
    focal: float = 540.0
    camera_height: float = 0.8
    jitter_xy: float = 0.02
    jitter_yaw: float = 0.2
    saliency: SaliencyParams = field(default_factory=SaliencyParams)
    detection: DetectParams = field(default_factory=DetectParams)
    planner: PlanParams = field(default_factory=PlanParams)

    def to_dict(self) -> dict:
        p = self.saliency.pyramid
        return {
            "trials": self.trials,
            "seed": self.seed,
            "hand": self.hand,
            "max_attempts": self.max_attempts,
            "methods": list(self.methods),
            "objects": [dict(o) for o in self.objects],
            "image": {"width": self.image_width, "height": self.image_height,
                      "focal": self.focal, "camera_height": self.camera_height},
            "jitter": {"xy": self.jitter_xy, "yaw": self.jitter_yaw},
            "saliency": {"sigma_center": p.sigma_center, "sigma_surround": p.sigma_surround,
                         "octaves": p.octaves, "scales_per_octave": p.scales_per_octave},
            "detection": {"bandwidth": self.detection.bandwidth,
                          "activation": self.detection.activation},
            "planner": {"d0": self.planner.d0, "mu": self.planner.mu,
                        "cone_edges": self.planner.cone_edges},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        img = d.get("image", {})
        jit = d.get("jitter", {})
        sal = d.get("saliency", {})
        det = d.get("detection", {})
        pl = d.get("planner", {})
        base = cls()
        return cls(
            trials=int(d.get("trials", base.trials)),
            seed=int(d.get("seed", base.seed)),
            hand=str(d.get("hand", base.hand)),
            max_attempts=int(d.get("max_attempts", base.max_attempts)),
            methods=tuple(d.get("methods", list(base.methods))),
            objects=tuple(d.get("objects", default_suite())),
            image_width=int(img.get("width", base.image_width)),
            image_height=int(img.get("height", base.image_height)),
            focal=float(img.get("focal", base.focal)),
            camera_height=float(img.get("camera_height", base.camera_height)),
            jitter_xy=float(jit.get("xy", base.jitter_xy)),
            jitter_yaw=float(jit.get("yaw", base.jitter_yaw)),
            saliency=SaliencyParams(pyramid=PyramidParams(
                sigma_center=float(sal.get("sigma_center", 2.0)),
                sigma_surround=float(sal.get("sigma_surround", 10.0)),
                octaves=int(sal.get("octaves", 4)),
                scales_per_octave=int(sal.get("scales_per_octave", 2)),
            )),
            detection=DetectParams(
                bandwidth=float(det.get("bandwidth", 15.0)),
                activation=float(det.get("activation", 0.3)),
            ),
            planner=PlanParams(
                d0=(float(pl["d0"]) if pl.get("d0") is not None else None),
                mu=float(pl.get("mu", 0.6)),
                cone_edges=int(pl.get("cone_edges", 8)),
                max_attempts=int(d.get("max_attempts", base.max_attempts)),
            ),
        )


def trial_jitter(seed: int, object_id: str, trial: int, max_xy: float, max_yaw: float):
    """Deterministic pose perturbation from a hash of (seed, object, trial)."""
    h = hashlib.sha256(f"{seed}:{object_id}:{trial}".encode()).digest()
    u = [int.from_bytes(h[i : i + 8], "little") / 2.0**64 for i in (0, 8, 16)]
    return ((2 * u[0] - 1) * max_xy, (2 * u[1] - 1) * max_xy, (2 * u[2] - 1) * max_yaw)


def build_trial_scene(obj_dict: dict, seed: int, trial: int,
                      max_xy: float, max_yaw: float) -> Scene:
    dx, dy, yaw = trial_jitter(seed, obj_dict["id"], trial, max_xy, max_yaw)
    pose_d = obj_dict.get("pose", {})
    base = Pose.from_rpy(pose_d.get("translation", [0, 0, 0]),
                         pose_d.get("rotation_rpy", [0, 0, 0]))
    rot = rpy_matrix(0.0, 0.0, yaw) @ base.rotation
    t = base.translation + np.array([dx, dy, 0.0])
    obj = PrimitiveObject(
        id=obj_dict["id"],
        shape=_shape_from_dict(obj_dict["shape"]),
        pose=Pose(rot, t),
        color=tuple(obj_dict.get("color", (0.8, 0.2, 0.2))),
        mass=float(obj_dict.get("mass", 0.15)),
    )
    return Scene(objects=[obj], table_height=0.0)


@dataclass(frozen=True)
class TrialResult:
    object_id: str
    method: str
    trial: int
    success: bool
    attempts: int
    grasp_type: str | None = None
    note: str = ""


def run_informed_trial(scene: Scene, camera: CameraModel, hand: HandModel,
                       cfg: RunConfig) -> TrialResult:
    obj_id = scene.objects[0].id
    rgb = None
    try:
        from .scene import render_rgb

        rgb = render_rgb(scene, camera)
        sal = compute_saliency(rgb, cfg.saliency)
        rois = extract_rois(sal, max_rois=cfg.planner.max_rois)
        if not rois:
            return TrialResult(obj_id, METHOD_INFORMED, -1, False, cfg.max_attempts,
                               note="no ROI")
        maps = SyntheticProvider().maps(scene, camera)
        info = detect(maps, rois[0], cfg.detection)
        result = plan(scene, camera, info, hand, cfg.planner)
        return TrialResult(obj_id, METHOD_INFORMED, -1, True, result.attempts_used,
                           grasp_type=result.grasp_type.display_name)
    except (NoGraspPointError, NoSurfaceError, PlanningFailedError, InvalidInputError) as e:
        return TrialResult(obj_id, METHOD_INFORMED, -1, False, cfg.max_attempts,
                           note=type(e).__name__)


def run_baseline_trial(scene: Scene, hand: HandModel, cfg: RunConfig,
                       rng_seed: int) -> TrialResult:
    obj_id = scene.objects[0].id
    try:
        result = random_baseline(scene, hand, max_attempts=cfg.max_attempts,
                                 rng_seed=rng_seed, params=cfg.planner)
        return TrialResult(obj_id, METHOD_BASELINE, -1, True, result.attempts_used,
                           grasp_type=result.grasp_type.display_name)
    except (PlanningFailedError, NoSurfaceError) as e:
        return TrialResult(obj_id, METHOD_BASELINE, -1, False, cfg.max_attempts,
                           note=type(e).__name__)


@dataclass(frozen=True)
class ExperimentReport:
    rows: list  # per (object, method) dicts
    aggregates: dict  # method -> pooled stats
    config: dict

    def to_json(self) -> str:
        return json.dumps(
            {"rows": self.rows, "aggregates": self.aggregates, "config": self.config},
            indent=2, sort_keys=True,
        )

    def to_csv(self) -> str:
        methods = sorted({r["method"] for r in self.rows},
                         key=lambda m: (m != METHOD_INFORMED, m))
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        header = ["object"]
        for m in methods:
            header += [f"{m}_success_rate", f"{m}_mean_attempts"]
        writer.writerow(header)
        objects = []
        for r in self.rows:
            if r["object"] not in objects:
                objects.append(r["object"])
        by_key = {(r["object"], r["method"]): r for r in self.rows}
        for o in objects:
            line = [o]
            for m in methods:
                r = by_key.get((o, m))
                line += ([f"{r['success_rate']:.4f}", f"{r['mean_attempts']:.4f}"]
                         if r else ["", ""])
            writer.writerow(line)
        line = ["average"]
        for m in methods:
            a = self.aggregates.get(m)
            line += ([f"{a['success_rate']:.4f}", f"{a['mean_attempts']:.4f}"]
                     if a else ["", ""])
        writer.writerow(line)
        return out.getvalue()

    def method_stats(self, method: str) -> dict:
        return self.aggregates[method]


def run_experiment(cfg: RunConfig) -> ExperimentReport:
    """Run the full suite; failed trials count the attempt cap as attempts used."""
    hand = HandModel.default(HandKind(cfg.hand))
    camera = CameraModel.overhead(width=cfg.image_width, height=cfg.image_height,
                                  fx=cfg.focal, fy=cfg.focal,
                                  camera_height=cfg.camera_height)
    trials_by_key: dict = {}
    for obj_dict in cfg.objects:
        for trial in range(cfg.trials):
            scene = build_trial_scene(obj_dict, cfg.seed, trial,
                                      cfg.jitter_xy, cfg.jitter_yaw)
            for method in cfg.methods:
                if method == METHOD_INFORMED:
                    tr = run_informed_trial(scene, camera, hand, cfg)
                elif method == METHOD_BASELINE:
                    h = hashlib.sha256(
                        f"{cfg.seed}:{obj_dict['id']}:{trial}:baseline".encode()
                    ).digest()
                    tr = run_baseline_trial(scene, hand, cfg,
                                            rng_seed=int.from_bytes(h[:8], "little"))
                else:
                    raise InvalidInputError(f"unknown method: {method}")
                trials_by_key.setdefault((obj_dict["id"], method), []).append(tr)

    rows = []
    pooled: dict = {m: {"succ": 0, "n": 0, "att": 0} for m in cfg.methods}
    for (obj_id, method), results in trials_by_key.items():
        succ = sum(1 for r in results if r.success)
        att = sum(r.attempts for r in results)
        rows.append({
            "object": obj_id,
            "method": method,
            "successes": succ,
            "trials": len(results),
            "success_rate": succ / len(results),
            "mean_attempts": att / len(results),
        })
        pooled[method]["succ"] += succ
        pooled[method]["n"] += len(results)
        pooled[method]["att"] += att
    aggregates = {
        m: {
            "success_rate": p["succ"] / p["n"] if p["n"] else 0.0,
            "mean_attempts": p["att"] / p["n"] if p["n"] else 0.0,
            "trials": p["n"],
        }
        for m, p in pooled.items()
    }
    return ExperimentReport(rows=rows, aggregates=aggregates, config=cfg.to_dict())
