"""End-to-end acceptance suite: one test per criterion.

Each test validates one property with an independent oracle where applicable
and emits a single PASS/FAIL line (visible with -s or -rA).
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import ndimage

from graspsight.cli import main as cli_main
from graspsight.detect import (
    GraspType,
    N_TYPES,
    confusion_matrix,
    full_roi,
    iou_per_type,
    mean_shift_modes,
    mean_shift_step,
    score_roi,
)
from graspsight.experiment import (
    METHOD_BASELINE,
    METHOD_INFORMED,
    RunConfig,
    build_trial_scene,
    default_suite,
    run_experiment,
    run_informed_trial,
)
from graspsight.imaging import ImageF
from graspsight.planner import (
    Contact,
    FailureReason,
    HandKind,
    HandModel,
    PlanParams,
    SearchPoint,
    epsilon_metric,
    execute_candidate,
    make_pregrasp,
    quality,
    resists_gravity,
)
from graspsight.provider import synthetic_maps_and_masks
from graspsight.saliency import Roi, compute_saliency, extract_rois
from graspsight.scene import (
    Box,
    CameraModel,
    Capsule,
    Cylinder,
    Pose,
    PrimitiveObject,
    Scene,
    Sphere,
    SurfacePoint,
    raycast,
    rpy_matrix,
)


def _verdict(num: int, desc: str, ok: bool):
    print(f"ACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {desc}")
    assert ok, f"criterion {num}: {desc}"


@pytest.fixture(scope="module")
def full_report():
    """Default 6-object / 10-trial / both-methods experiment, shared by 6 and 7."""
    t0 = time.monotonic()
    report = run_experiment(RunConfig())
    return report, time.monotonic() - t0


# --------------------------------------------------------------------------
# 1. ROI scoring equals a brute-force double-loop mean


def test_criterion_01_score_roi_oracle():
    rng = np.random.default_rng(11)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(100):
        h, w = int(rng.integers(8, 48)), int(rng.integers(8, 48))
        p = ImageF(rng.uniform(size=(N_TYPES, h, w)).astype(np.float32))
        rw, rh = int(rng.integers(2, w)), int(rng.integers(2, h))
        rx, ry = int(rng.integers(0, w - rw + 1)), int(rng.integers(0, h - rh + 1))
        mask = rng.uniform(size=(rh, rw)) > 0.3
        if not mask.any():
            mask[0, 0] = True
        roi = Roi(x=rx, y=ry, w=rw, h=rh, mask=mask, seed=(rx, ry), peak=1.0)
        scores = score_roi(p, roi)
        for c in range(N_TYPES):
            vals = [float(p.data[c, ry + i, rx + j])
                    for i in range(rh) for j in range(rw) if mask[i, j]]
            worst = max(worst, abs(scores[c] - math.fsum(vals) / len(vals)))
    elapsed = time.monotonic() - t0
    _verdict(1, f"score_roi vs double-loop mean: max |delta| {worst:.2e} <= 1e-12, "
                f"{elapsed:.2f}s < 1s", worst <= 1e-12 and elapsed < 1.0)


# --------------------------------------------------------------------------
# 2. Saliency invariants at 256x256


def _square_image(h, w, x, y, size, color=(1.0, 0.1, 0.1), bg=0.5):
    img = np.full((3, h, w), bg, dtype=np.float32)
    for c in range(3):
        img[c, y : y + size, x : x + size] = color[c]
    return ImageF(img)


def test_criterion_02_saliency_invariants():
    t0 = time.monotonic()
    # uniform image -> identically zero map
    uniform_ok = bool(np.all(
        compute_saliency(ImageF(np.full((3, 256, 256), 0.4, dtype=np.float32))).map.data == 0.0
    ))
    # translation equivariance of the top ROI seed; shift is a multiple of the
    # coarsest pyramid stride (2**(octaves-1) = 8)
    seed_a = extract_rois(compute_saliency(_square_image(256, 256, 64, 80, 24)))[0].seed
    seed_b = extract_rois(compute_saliency(_square_image(256, 256, 64 + 16, 80 + 24, 24)))[0].seed
    shift_ok = seed_b == (seed_a[0] + 16, seed_a[1] + 24)
    # 90-degree rotation equivariance, interior RMS
    rng = np.random.default_rng(12)
    base = ndimage.gaussian_filter(rng.uniform(size=(3, 256, 256)), (0, 4, 4))
    img = ImageF(base.astype(np.float32))
    sal = compute_saliency(img).map.data[0]
    rot_img = ImageF(np.rot90(img.data, k=1, axes=(1, 2)).copy())
    sal_rot = compute_saliency(rot_img).map.data[0]
    diff = sal_rot - np.rot90(sal, k=1)
    rms = float(np.sqrt(np.mean(diff[24:-24, 24:-24] ** 2)))
    elapsed = time.monotonic() - t0
    _verdict(2, f"uniform-zero {uniform_ok}, seed shift {shift_ok}, "
                f"rot90 interior RMS {rms:.2e} <= 1e-3, {elapsed:.1f}s < 10s",
             uniform_ok and shift_ok and rms <= 1e-3 and elapsed < 10.0)


# --------------------------------------------------------------------------
# 3. Mean shift on two bumps separated by 4x bandwidth


def test_criterion_03_mean_shift_two_bumps():
    bandwidth = 15.0
    centers = [(40.0, 50.0), (100.0, 50.0)]  # 60 px apart = 4 x bandwidth
    yy, xx = np.mgrid[0:100, 0:140].astype(np.float64)
    chan = np.zeros((100, 140))
    for cx, cy in centers:
        chan += 0.9 * np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 4.0**2)))
    data = np.zeros((N_TYPES, 100, 140), dtype=np.float32)
    data[GraspType.POWER - 1] = chan
    p = ImageF(data)
    roi = full_roi(p)
    modes = mean_shift_modes(p, GraspType.POWER, roi, bandwidth=bandwidth)
    count_ok = len(modes) == 2
    loc_ok, stat_ok = False, False
    if count_ok:
        found = sorted((m for m, _ in modes), key=lambda m: m[0])
        loc_ok = all(np.linalg.norm(np.asarray(f) - np.asarray(c)) < 1.0
                     for f, c in zip(found, centers))
        ys, xs = np.nonzero(roi.mask)
        pts = np.stack([xs, ys], axis=1).astype(np.float64)
        w = p.data[GraspType.POWER - 1][ys, xs].astype(np.float64)
        stat_ok = all(
            np.linalg.norm(mean_shift_step(np.asarray(m), pts, w, bandwidth) - m) < 0.1
            for m, _ in modes
        )
    _verdict(3, f"2 modes ({len(modes)}), each within 1 px ({loc_ok}) "
                f"and stationary ({stat_ok})", count_ok and loc_ok and stat_ok)


# --------------------------------------------------------------------------
# 4. Geometry oracles: normals vs finite differences, depth vs per-ray bisection


def test_criterion_04_geometry_oracles():
    rng = np.random.default_rng(13)
    shapes = [Sphere(0.04), Box(0.06, 0.08, 0.05), Cylinder(0.03, 0.09), Capsule(0.02, 0.07)]
    h = 1e-6
    worst_deg = 0.0
    for shape in shapes:
        obj = PrimitiveObject("o", shape,
                              Pose(rpy_matrix(*rng.uniform(-math.pi, math.pi, 3)),
                                   rng.uniform(-0.05, 0.05, 3)))
        for p in obj.sample_surface(rng, 250):
            n = obj.normal(p)
            g = np.array([(obj.sdf(p + h * e) - obj.sdf(p - h * e)) / (2 * h)
                          for e in np.eye(3)])
            g /= np.linalg.norm(g)
            worst_deg = max(worst_deg,
                            math.degrees(math.acos(min(1.0, abs(float(np.dot(n, g)))))))
    normals_ok = worst_deg < 0.5

    scene = Scene([
        PrimitiveObject("s", Sphere(0.04), Pose.from_rpy([-0.08, 0.06, 0.05])),
        PrimitiveObject("b", Box(0.06, 0.05, 0.04), Pose.from_rpy([0.08, 0.06, 0.03],
                                                                  (0.2, 0.1, 0.4))),
        PrimitiveObject("c", Cylinder(0.03, 0.08), Pose.from_rpy([-0.08, -0.06, 0.04],
                                                                 (0.1, 0.3, 0.0))),
        PrimitiveObject("k", Capsule(0.02, 0.07), Pose.from_rpy([0.08, -0.06, 0.03],
                                                                (0.0, 1.2, 0.5))),
    ], table_height=None)
    cam = CameraModel.overhead()
    depth, idx = raycast(scene, cam)
    interior = ndimage.binary_erosion(idx >= 0, iterations=2)
    vs, us = np.nonzero(interior)
    pick = rng.choice(vs.size, size=300, replace=False)
    o = cam.pose.translation
    worst_depth = 0.0
    for v, u in zip(vs[pick], us[pick]):
        d = cam.ray_directions(np.float64(u), np.float64(v))
        ts = np.linspace(0.3, 1.2, 4501)
        sd = scene.sdf(o + ts[:, None] * d)
        below = np.nonzero(sd <= 0.0)[0]
        assert below.size > 0, "oracle lost a ray the renderer hit"
        lo, hi = ts[below[0] - 1], ts[below[0]]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if float(scene.sdf(o + mid * d)) <= 0.0:
                hi = mid
            else:
                lo = mid
        worst_depth = max(worst_depth, abs(float(depth[v, u]) - hi))
    depth_ok = worst_depth <= 1e-9
    _verdict(4, f"1000 normals vs FD: worst {worst_deg:.3f} deg < 0.5; "
                f"300 rays vs bisection oracle: worst |delta| {worst_depth:.2e} <= 1e-9",
             normals_ok and depth_ok)


# --------------------------------------------------------------------------
# 5. Grasp physics sanity


def test_criterion_05_grasp_physics():
    r = 0.04
    obj = PrimitiveObject("ball", Sphere(r), Pose.from_rpy([0, 0, r]), mass=0.12)
    scene = Scene([obj], table_height=0.0)
    c = obj.centroid()
    anti = [
        Contact(position=c + [-r, 0, 0], normal=np.array([-1.0, 0, 0]),
                force_dir=np.array([1.0, 0, 0]), normal_force=5.0),
        Contact(position=c + [r, 0, 0], normal=np.array([1.0, 0, 0]),
                force_dir=np.array([-1.0, 0, 0]), normal_force=5.0),
    ]
    eps = epsilon_metric(anti, c, obj.shape.bounding_radius())
    q = quality(anti, obj)
    antipodal_ok = eps > 1e-6 and resists_gravity(anti, obj) and q > 0.0

    single = anti[:1]
    single_ok = (epsilon_metric(single, c, obj.shape.bounding_radius()) == 0.0
                 and not resists_gravity(single, obj))

    z = 0.003  # grasp point 3 mm above the table
    x = math.sqrt(r * r - (z - r) ** 2)
    p = np.array([x, 0.0, z])
    sp3 = SurfacePoint(position=p, normal=obj.normal(p), object_id="ball")
    hand = HandModel.default(HandKind.FIVE_FINGER)
    pg = make_pregrasp(sp3, GraspType.POWER, hand, d0=0.07)
    out = execute_candidate(scene, hand, pg,
                            SearchPoint(d=0.07, alpha=0, beta=0, gamma=0), obj,
                            PlanParams(d0=0.07))
    table_ok = (not out.feasible
                and out.failure_reason == FailureReason.TABLE_COLLISION)
    _verdict(5, f"antipodal force closure (eps {eps:.3f}, Q {q:.3f}) {antipodal_ok}, "
                f"single contact infeasible {single_ok}, "
                f"3 mm above table -> TableCollision {table_ok}",
             antipodal_ok and single_ok and table_ok)


# --------------------------------------------------------------------------
# 6. Table-2 trend on the 6-object desk suite


def test_criterion_06_experiment_trend(full_report):
    report, elapsed = full_report
    inf = report.method_stats(METHOD_INFORMED)
    base = report.method_stats(METHOD_BASELINE)
    trend_ok = (inf["success_rate"] >= base["success_rate"]
                and inf["mean_attempts"] <= 0.5 * base["mean_attempts"])
    time_ok = elapsed < 300.0
    _verdict(6, f"informed success {inf['success_rate']:.2f} >= baseline "
                f"{base['success_rate']:.2f}; informed attempts {inf['mean_attempts']:.2f} "
                f"<= 0.5 x {base['mean_attempts']:.2f}; runtime {elapsed:.0f}s < 300s",
             trend_ok and time_ok)


# --------------------------------------------------------------------------
# 7. Small-object effect on the thin capsule


def test_criterion_07_small_object_effect(full_report):
    report, _ = full_report
    by_key = {(r["object"], r["method"]): r for r in report.rows}
    inf = by_key[("banana", METHOD_INFORMED)]["success_rate"]
    base = by_key[("banana", METHOD_BASELINE)]["success_rate"]
    _verdict(7, f"thin capsule: baseline success {base:.2f} < informed {inf:.2f}",
             base < inf)


# --------------------------------------------------------------------------
# 8. Two-finger gripper on the sphere suite


def test_criterion_08_two_finger_spheres():
    cfg = RunConfig()
    cam = CameraModel.overhead()
    hand = HandModel.default(HandKind.TWO_FINGER)
    spheres = [o for o in default_suite() if o["shape"]["kind"] == "sphere"]
    succ, attempts = 0, []
    for obj in spheres:
        for trial in range(10):
            scene = build_trial_scene(obj, cfg.seed, trial, cfg.jitter_xy, cfg.jitter_yaw)
            tr = run_informed_trial(scene, cam, hand, cfg)
            succ += tr.success
            attempts.append(tr.attempts)
    rate = succ / len(attempts)
    mean_att = sum(attempts) / len(attempts)
    _verdict(8, f"two-finger spheres: success {succ}/{len(attempts)} "
                f"(rate {rate:.2f} >= 0.9), mean attempts {mean_att:.2f} <= 4",
             rate >= 0.9 and mean_att <= 4.0)


# --------------------------------------------------------------------------
# 9. Provider self-consistency: IoU and confusion diagonal dominance
#
# Binarization uses 0.45, strictly below the smallest rule activation (0.5):
# at exactly 0.5 the power-band precision activation sits on a knife edge
# that any smoothing pushes below threshold.


def test_criterion_09_provider_self_consistency():
    scene = Scene([
        PrimitiveObject("slab", Box(0.14, 0.14, 0.04), Pose.from_rpy([-0.12, 0.10, 0.02])),
        PrimitiveObject("ball", Sphere(0.038), Pose.from_rpy([0.13, 0.10, 0.038])),
        PrimitiveObject("thin", Capsule(0.009, 0.12),
                        Pose.from_rpy([0.13, -0.10, 0.009], (0, math.pi / 2, 0))),
        PrimitiveObject("can", Cylinder(0.030, 0.10), Pose.from_rpy([-0.13, -0.10, 0.05])),
    ], table_height=0.0)
    maps, masks = synthetic_maps_and_masks(scene, CameraModel.overhead())
    ious = iou_per_type(maps, masks, bin_threshold=0.45)
    cm = confusion_matrix(maps, masks)
    mean_iou = float(ious.mean())
    dominant = all(cm[i, i] == cm[i].max() for i in range(N_TYPES))
    _verdict(9, f"mean IoU {mean_iou:.3f} >= 0.9, confusion diagonally dominant {dominant}",
             mean_iou >= 0.9 and dominant)


# --------------------------------------------------------------------------
# 10. Determinism of the evaluation command


def test_criterion_10_eval_determinism(tmp_path):
    suite = default_suite()
    cfg = {"trials": 2, "seed": 42,
           "objects": [suite[0], suite[3]],
           "methods": [METHOD_INFORMED, METHOD_BASELINE]}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        rc = cli_main(["eval", "--config", str(cfg_path), "--out", str(out)])
        assert rc == 0
        outputs.append(((out / "report.csv").read_bytes(),
                        (out / "report.json").read_bytes()))
    same = outputs[0] == outputs[1]
    _verdict(10, f"repeated eval runs byte-identical {same}", same)
