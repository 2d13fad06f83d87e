"""Pre-grasp construction, 4-DoF local grasp search, quasi-static contact
simulation and contact-wrench grasp quality.

The hand is a parametric abstraction: a palm disc with rigid arc-closing
fingers. A candidate grasp is executed by placing the palm at an offset d
along the detected surface normal (rotated by alpha/beta/gamma about the hand
axes), closing the active fingers until contact, then checking table
clearance, gravity-wrench resistance and force closure of the contact set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .detect import GraspType
from .imaging import InvalidInputError
from .scene import (
    CameraModel,
    NoSurfaceError,
    PrimitiveObject,
    Scene,
    SurfacePoint,
    lift_point,
    raycast,
)

GRAVITY = 9.81


class PlanningFailedError(RuntimeError):
    """Raised when no feasible grasp is found within the attempt budget."""


class HandKind(str, Enum):
    FIVE_FINGER = "five"
    THREE_FINGER = "three"
    TWO_FINGER = "two"


_FINGER_COUNTS = {HandKind.FIVE_FINGER: 5, HandKind.THREE_FINGER: 3, HandKind.TWO_FINGER: 2}


def _ring(radius: float, angles_deg) -> tuple:
    return tuple(
        (radius * math.cos(math.radians(a)), radius * math.sin(math.radians(a)))
        for a in angles_deg
    )


@dataclass(frozen=True)
class HandModel:
    kind: HandKind
    palm_radius: float
    finger_length: float
    finger_base_offsets: tuple  # 2D palm-frame positions, opposing pairs first
    max_aperture: float
    force_threshold: float = 5.0  # N

    def __post_init__(self):
        if len(self.finger_base_offsets) != _FINGER_COUNTS[self.kind]:
            raise InvalidInputError("finger count does not match hand kind")
        if min(self.palm_radius, self.finger_length, self.max_aperture) <= 0:
            raise InvalidInputError("hand dimensions must be positive")

    @classmethod
    def default(cls, kind: HandKind) -> "HandModel":
        kind = HandKind(kind)
        if kind == HandKind.FIVE_FINGER:
            return cls(kind, palm_radius=0.045, finger_length=0.10,
                       finger_base_offsets=_ring(0.04, [180, 0, 40, -40, 75]),
                       max_aperture=0.14)
        if kind == HandKind.THREE_FINGER:
            return cls(kind, palm_radius=0.040, finger_length=0.09,
                       finger_base_offsets=_ring(0.035, [180, 30, -30]),
                       max_aperture=0.12)
        return cls(kind, palm_radius=0.035, finger_length=0.08,
                   finger_base_offsets=_ring(0.03, [0, 180]),
                   max_aperture=0.10)


def fingers_for_type(s: GraspType, hand: HandModel) -> int:
    """Active finger count for a grasp type, clamped to the hand's fingers."""
    total = _FINGER_COUNTS[hand.kind]
    if s == GraspType.PINCH:
        return min(2, total)
    if s == GraspType.TRIPOD:
        return min(3, total)
    return total


@dataclass(frozen=True)
class PreGrasp:
    palm_center: np.ndarray
    approach: np.ndarray  # unit, palm -> object (= -n)
    palm_x: np.ndarray  # unit, perpendicular to approach
    standoff: float
    grasp_type: GraspType
    active_fingers: int

    @property
    def anchor(self) -> np.ndarray:
        """The 3D grasp point the palm stands off from."""
        return self.palm_center + self.standoff * self.approach


def make_pregrasp(sp: SurfacePoint, s: GraspType, hand: HandModel, d0: float) -> PreGrasp:
    """Palm offset d0 along the surface normal, palm plane perpendicular to it."""
    if d0 <= 0:
        raise InvalidInputError("standoff d0 must be > 0")
    n = sp.normal / np.linalg.norm(sp.normal)
    palm_x = np.cross(n, np.array([0.0, 0.0, 1.0]))
    if np.linalg.norm(palm_x) < 1e-6:
        palm_x = np.cross(n, np.array([1.0, 0.0, 0.0]))
    palm_x = palm_x / np.linalg.norm(palm_x)
    return PreGrasp(
        palm_center=sp.position + d0 * n,
        approach=-n,
        palm_x=palm_x,
        standoff=d0,
        grasp_type=s,
        active_fingers=fingers_for_type(s, hand),
    )


@dataclass(frozen=True)
class SearchPoint:
    d: float
    alpha: float
    beta: float
    gamma: float

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass(frozen=True)
class SearchSpace:
    d_delta: float = 0.04
    d_step: float = 0.01
    angle_max: float = 0.35
    angle_step: float = 0.175
    d_min: float = 0.005


def sample_candidates(pg: PreGrasp, space: SearchSpace = SearchSpace(),
                      max_attempts: int = 40) -> list[SearchPoint]:
    """Deterministic outward spiral over the {d, alpha, beta, gamma} grid.

    Starts at the nominal point and proceeds in order of increasing weighted
    norm (each coordinate measured in grid steps), truncated at max_attempts.
    """
    if max_attempts < 1:
        raise InvalidInputError("max_attempts must be >= 1")
    kd = int(round(space.d_delta / space.d_step))
    ka = int(round(space.angle_max / space.angle_step))
    entries = []
    for i in range(-kd, kd + 1):
        d = pg.standoff + i * space.d_step
        if d < space.d_min:
            continue
        for a in range(-ka, ka + 1):
            for b in range(-ka, ka + 1):
                for g in range(-ka, ka + 1):
                    norm = math.sqrt(i * i + a * a + b * b + g * g)
                    entries.append((norm, i, a, b, g, d))
    entries.sort(key=lambda e: e[:5])
    return [
        SearchPoint(d=e[5], alpha=e[2] * space.angle_step,
                    beta=e[3] * space.angle_step, gamma=e[4] * space.angle_step)
        for e in entries[:max_attempts]
    ]


class FailureReason(str, Enum):
    TABLE_COLLISION = "TableCollision"
    NO_CONTACT = "NoContact"
    NOT_FORCE_CLOSURE = "NotForceClosure"
    DROPS_UNDER_GRAVITY = "DropsUnderGravity"


@dataclass(frozen=True)
class Contact:
    position: np.ndarray
    normal: np.ndarray  # outward unit
    force_dir: np.ndarray  # unit direction of the applied fingertip force
    normal_force: float  # N

    def to_dict(self) -> dict:
        return {
            "p": [float(x) for x in self.position],
            "n": [float(x) for x in self.normal],
            "f": [float(x) for x in self.force_dir * self.normal_force],
        }


@dataclass(frozen=True)
class GraspOutcome:
    feasible: bool
    contacts: tuple
    quality: float
    failure_reason: FailureReason | None = None


@dataclass(frozen=True)
class PlanParams:
    d0: float | None = None  # None: hand-relative (finger_length - overshoot)
    space: SearchSpace = field(default_factory=SearchSpace)
    max_attempts: int = 40
    mu: float = 0.6
    cone_edges: int = 8
    mu_spin: float = 0.005  # m; soft-finger torsional friction arm
    lam: float = 0.5
    close_step: float = 0.001  # m of fingertip travel per closing step
    close_max_angle: float = 2.2  # rad
    table_clearance: float = 0.002  # m
    eps_min: float = 1e-6
    max_rois: int = 3


def _rot_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    k = np.array([
        [0, -axis[2], axis[1]],
        [axis[2], 0, -axis[0]],
        [-axis[1], axis[0], 0],
    ])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def candidate_frame(pg: PreGrasp, sp: SearchPoint):
    """Hand frame (x, y, z=approach axes) and palm center for a search point.

    Rotations alpha/beta/gamma are applied about the hand's X/Y/Z axes with the
    3D grasp point as pivot; d replaces the standoff along the new approach.
    """
    z0 = pg.approach
    x0 = pg.palm_x
    y0 = np.cross(z0, x0)
    r0 = np.stack([x0, y0, z0], axis=1)
    rx = _rot_axis(np.array([1.0, 0, 0]), sp.alpha)
    ry = _rot_axis(np.array([0, 1.0, 0]), sp.beta)
    rz = _rot_axis(np.array([0, 0, 1.0]), sp.gamma)
    r = r0 @ rx @ ry @ rz
    x, y, z = r[:, 0], r[:, 1], r[:, 2]
    palm = pg.anchor - sp.d * z
    return x, y, z, palm


def _hand_body_points(hand: HandModel, x, y, z, palm):
    pts = [palm]
    for a in np.linspace(0, 2 * math.pi, 8, endpoint=False):
        pts.append(palm + hand.palm_radius * (math.cos(a) * x + math.sin(a) * y))
    for bx, by in hand.finger_base_offsets:
        base = palm + bx * x + by * y
        pts.append(base)
        pts.append(base + hand.finger_length * z)
    return np.stack(pts, axis=0)


def _close_finger(target: PrimitiveObject, base, rhat, z, length,
                  dtheta, max_angle, table_z):
    """Sweep a fingertip arc toward the approach axis until first contact.

    Returns (contact_point, force_dir) or None. The finger is blocked without
    contact if the tip reaches the table plane first.
    """
    thetas = np.arange(0.0, max_angle + dtheta, dtheta)
    tips = base + length * (np.cos(thetas)[:, None] * z - np.sin(thetas)[:, None] * rhat)
    sdf = target.sdf(tips)
    blocked = np.nonzero(tips[:, 2] < table_z)[0]
    hit = np.nonzero(sdf <= 0.0)[0]
    if hit.size == 0 or (blocked.size > 0 and blocked[0] < hit[0]):
        return None
    i = int(hit[0])

    def tip_at(th):
        return base + length * (math.cos(th) * z - math.sin(th) * rhat)

    if i == 0:
        th = 0.0
    else:
        lo, hi = thetas[i - 1], thetas[i]
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if float(target.sdf(tip_at(mid))) <= 0.0:
                hi = mid
            else:
                lo = mid
        th = hi
    tp = tip_at(th)
    # resolve residual penetration onto the surface
    for _ in range(3):
        tp = tp - float(target.sdf(tp)) * target.normal(tp)
    vel = -math.sin(th) * z - math.cos(th) * rhat
    return tp, vel / np.linalg.norm(vel)


def _tangent_basis(n):
    a = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(n, a)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def _wrench_generators(contacts, center, mu, edges, mu_spin):
    """Friction-cone edge wrenches per contact, unit normal-force component.

    Soft-finger contact: two extra generators carry +/- torsional moment about
    the contact normal. Returns (forces, torques, contact_index) arrays.
    """
    forces, torques, owner = [], [], []
    for ci, c in enumerate(contacts):
        n_in = -c.normal
        t1, t2 = _tangent_basis(n_in)
        r = c.position - center
        for k in range(edges):
            phi = 2 * math.pi * k / edges
            f = n_in + mu * (math.cos(phi) * t1 + math.sin(phi) * t2)
            forces.append(f)
            torques.append(np.cross(r, f))
            owner.append(ci)
        for sign in (1.0, -1.0):
            forces.append(n_in)
            torques.append(np.cross(r, n_in) + sign * mu_spin * n_in)
            owner.append(ci)
    return np.array(forces), np.array(torques), np.array(owner)


def resists_gravity(contacts, target: PrimitiveObject, mu=0.6, edges=8,
                    mu_spin=0.005, f_max=5.0) -> bool:
    """Can bounded contact forces inside their friction cones hold the object?

    Linear feasibility: nonnegative cone-edge coefficients reproducing the
    anti-gravity wrench about the centroid, at most f_max normal force per
    contact.
    """
    if not contacts:
        return False
    center = target.centroid()
    forces, torques, owner = _wrench_generators(contacts, center, mu, edges, mu_spin)
    a_eq = np.concatenate([forces.T, torques.T], axis=0)  # 6 x E
    b_eq = np.array([0.0, 0.0, target.mass * GRAVITY, 0.0, 0.0, 0.0])
    n_contacts = int(owner.max()) + 1
    a_ub = np.zeros((n_contacts, forces.shape[0]))
    a_ub[owner, np.arange(forces.shape[0])] = 1.0
    res = linprog(
        c=np.zeros(forces.shape[0]),
        A_eq=a_eq, b_eq=b_eq,
        A_ub=a_ub, b_ub=np.full(n_contacts, f_max),
        bounds=(0, None), method="highs",
    )
    return res.status == 0


def epsilon_metric(contacts, center, bounding_radius, mu=0.6, edges=8,
                   mu_spin=0.005) -> float:
    """Largest origin-centered ball inside the hull of unit contact wrenches.

    Torques are normalized by the object bounding radius; each generator is
    scaled to unit force magnitude. Returns 0 if the origin is not strictly
    inside the hull (no force closure).
    """
    if not contacts:
        raise InvalidInputError("epsilon metric needs at least one contact")
    forces, torques, _ = _wrench_generators(contacts, center, mu, edges, mu_spin)
    fn = np.linalg.norm(forces, axis=1, keepdims=True)
    wrenches = np.concatenate([forces / fn, torques / (bounding_radius * fn)], axis=1)
    try:
        hull = ConvexHull(wrenches)
    except QhullError:
        return 0.0
    eps = float(-hull.equations[:, -1].max())
    return max(eps, 0.0)


def quality(contacts, target: PrimitiveObject, mu=0.6, edges=8,
            mu_spin=0.005, lam=0.5) -> float:
    """Blend of the wrench-space ball radius and the worst normal alignment of
    applied fingertip forces, clamped to [0,1]."""
    if not contacts:
        raise InvalidInputError("quality needs at least one contact")
    center = target.centroid()
    eps = epsilon_metric(contacts, center, target.shape.bounding_radius(),
                         mu=mu, edges=edges, mu_spin=mu_spin)
    align = min(float(np.dot(c.force_dir, -c.normal)) for c in contacts)
    align = max(align, 0.0)
    return float(np.clip(lam * eps + (1 - lam) * align, 0.0, 1.0))


def execute_candidate(scene: Scene, hand: HandModel, pg: PreGrasp, sp: SearchPoint,
                      target: PrimitiveObject, params: PlanParams = PlanParams()) -> GraspOutcome:
    """Place the hand at a search point, close the fingers, check the grasp.

    Checks, in order: table clearance of the hand body, >=2 finger contacts on
    the target, gravity-wrench resistance, force closure (epsilon > 0).
    """
    x, y, z, palm = candidate_frame(pg, sp)
    table_z = -np.inf if scene.table_height is None else scene.table_height
    body = _hand_body_points(hand, x, y, z, palm)
    if np.any(body[:, 2] < table_z + params.table_clearance):
        return GraspOutcome(False, (), 0.0, FailureReason.TABLE_COLLISION)

    dtheta = params.close_step / hand.finger_length
    contacts = []
    for bx, by in hand.finger_base_offsets[: pg.active_fingers]:
        base = palm + bx * x + by * y
        lateral = bx * x + by * y
        lnorm = np.linalg.norm(lateral)
        rhat = lateral / lnorm if lnorm > 1e-12 else x
        hit = _close_finger(target, base, rhat, z, hand.finger_length,
                            dtheta, params.close_max_angle,
                            table_z + params.table_clearance / 2.0)
        if hit is None:
            continue
        pos, fdir = hit
        contacts.append(Contact(position=pos, normal=target.normal(pos),
                                force_dir=fdir, normal_force=hand.force_threshold))
    if len(contacts) < 2:
        return GraspOutcome(False, tuple(contacts), 0.0, FailureReason.NO_CONTACT)

    if not resists_gravity(contacts, target, mu=params.mu, edges=params.cone_edges,
                           mu_spin=params.mu_spin, f_max=hand.force_threshold):
        return GraspOutcome(False, tuple(contacts), 0.0, FailureReason.DROPS_UNDER_GRAVITY)

    eps = epsilon_metric(contacts, target.centroid(), target.shape.bounding_radius(),
                         mu=params.mu, edges=params.cone_edges, mu_spin=params.mu_spin)
    if eps <= params.eps_min:
        return GraspOutcome(False, tuple(contacts), 0.0, FailureReason.NOT_FORCE_CLOSURE)

    q = quality(contacts, target, mu=params.mu, edges=params.cone_edges,
                mu_spin=params.mu_spin, lam=params.lam)
    return GraspOutcome(True, tuple(contacts), q, None)


@dataclass(frozen=True)
class PlanResult:
    search_point: SearchPoint
    outcome: GraspOutcome
    attempts_used: int
    pregrasp: PreGrasp
    grasp_type: GraspType

    def to_dict(self) -> dict:
        x, y, z, palm = candidate_frame(self.pregrasp, self.search_point)
        return {
            "grasp_type": self.grasp_type.display_name,
            "search_point": self.search_point.to_dict(),
            "palm_pose": {
                "position": [float(v) for v in palm],
                "x_axis": [float(v) for v in x],
                "approach": [float(v) for v in z],
            },
            "contacts": [c.to_dict() for c in self.outcome.contacts],
            "quality": float(self.outcome.quality),
            "attempts_used": self.attempts_used,
            "feasible": self.outcome.feasible,
        }


def surface_point_for_pixel(scene: Scene, camera: CameraModel, pixel) -> SurfacePoint:
    """Lift a pixel through rendered depth and snap it to the hit object."""
    depth, idx = raycast(scene, camera)
    iu = min(max(int(round(pixel[0])), 0), camera.width - 1)
    iv = min(max(int(round(pixel[1])), 0), camera.height - 1)
    obj_idx = int(idx[iv, iu])
    if obj_idx < 0:
        raise NoSurfaceError(f"pixel {pixel} does not hit an object")
    from .imaging import ImageF

    p = lift_point(camera, ImageF(depth.astype(np.float32)), pixel)
    obj = scene.objects[obj_idx]
    for _ in range(4):
        p = p - float(obj.sdf(p)) * obj.normal(p)
    return SurfacePoint(position=p, normal=obj.normal(p), object_id=obj.id)


FINGER_OVERSHOOT = 0.035  # m the extended fingertips reach past the grasp point


def base_standoff(hand: HandModel, params: PlanParams) -> float:
    """Configured standoff, or a hand-relative default when unset."""
    if params.d0 is not None:
        return params.d0
    return max(hand.finger_length - FINGER_OVERSHOOT, 0.01)


def effective_standoff(hand: HandModel, point_z: float, table_z: float,
                       params: PlanParams) -> float:
    """Standoff large enough that extended fingertips start above the table."""
    d0 = base_standoff(hand, params)
    if not math.isfinite(table_z):
        return d0
    needed = hand.finger_length - (point_z - table_z) + params.table_clearance + 0.004
    return max(d0, needed)


def segment_axis_world(scene: Scene, camera: CameraModel, object_id: str,
                       min_elongation: float = 1.3):
    """Horizontal principal axis of the target's image segment, or None.

    Estimates the in-plane orientation of the object segment so the palm can be
    aligned across an elongated object. Near-isotropic segments return None.
    """
    _, idx = raycast(scene, camera)
    for i, obj in enumerate(scene.objects):
        if obj.id == object_id:
            ys, xs = np.nonzero(idx == i)
            break
    else:
        return None
    if xs.size < 8:
        return None
    pts = np.stack([xs - xs.mean(), ys - ys.mean()], axis=0)
    cov = pts @ pts.T / xs.size
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= 0 or math.sqrt(evals[1] / max(evals[0], 1e-12)) < min_elongation:
        return None
    dx, dy = evecs[:, 1]
    axis = camera.pose.apply_vector(np.array([dx, dy, 0.0]))
    axis[2] = 0.0
    n = np.linalg.norm(axis)
    return axis / n if n > 1e-9 else None


def plan(scene: Scene, camera: CameraModel, info, hand: HandModel,
         params: PlanParams = PlanParams()) -> PlanResult:
    """Informed local search: pre-grasp from the detected grasp point, spiral
    over the 4-DoF grid, return the feasible candidate with the best quality.

    The standoff is raised when needed so the open fingers clear the table, and
    the palm axis is aligned across the object segment's principal axis when
    the segment is clearly elongated.
    """
    sp3 = surface_point_for_pixel(scene, camera, info.point)
    target = scene.get(sp3.object_id)
    table_z = -np.inf if scene.table_height is None else scene.table_height
    d0 = effective_standoff(hand, float(sp3.position[2]), table_z, params)
    pg = make_pregrasp(sp3, info.grasp_type, hand, d0)
    axis = segment_axis_world(scene, camera, sp3.object_id)
    if axis is not None:
        across = np.cross(sp3.normal, axis)
        nn = np.linalg.norm(across)
        if nn > 1e-6:
            pg = PreGrasp(palm_center=pg.palm_center, approach=pg.approach,
                          palm_x=across / nn, standoff=pg.standoff,
                          grasp_type=pg.grasp_type, active_fingers=pg.active_fingers)
    candidates = sample_candidates(pg, params.space, params.max_attempts)
    best = None
    first_feasible = None
    for i, cand in enumerate(candidates):
        outcome = execute_candidate(scene, hand, pg, cand, target, params)
        if outcome.feasible:
            if first_feasible is None:
                first_feasible = i + 1
            if best is None or outcome.quality > best[1].quality:
                best = (cand, outcome)
    if best is None:
        raise PlanningFailedError(
            f"no feasible grasp within {len(candidates)} candidates"
        )
    return PlanResult(search_point=best[0], outcome=best[1],
                      attempts_used=first_feasible, pregrasp=pg,
                      grasp_type=pg.grasp_type)


def random_baseline(scene: Scene, hand: HandModel, max_attempts: int = 40,
                    rng_seed: int = 0, target_id: str | None = None,
                    params: PlanParams = PlanParams()) -> PlanResult:
    """Uninformed baseline: random surface points with a fixed power grasp,
    executed at the nominal search point until one is feasible."""
    if not scene.objects:
        raise InvalidInputError("scene has no objects")
    target = scene.get(target_id) if target_id else scene.objects[0]
    rng = np.random.default_rng(rng_seed)
    table_z = -np.inf if scene.table_height is None else scene.table_height
    for i in range(max_attempts):
        p = target.sample_surface(rng, 1)[0]
        sp3 = SurfacePoint(position=p, normal=target.normal(p), object_id=target.id)
        d0 = effective_standoff(hand, float(p[2]), table_z, params)
        pg = make_pregrasp(sp3, GraspType.POWER, hand, d0)
        nominal = SearchPoint(d=d0, alpha=0.0, beta=0.0, gamma=0.0)
        outcome = execute_candidate(scene, hand, pg, nominal, target, params)
        if outcome.feasible:
            return PlanResult(search_point=nominal, outcome=outcome,
                              attempts_used=i + 1, pregrasp=pg,
                              grasp_type=GraspType.POWER)
    raise PlanningFailedError(f"no feasible grasp within {max_attempts} random samples")
