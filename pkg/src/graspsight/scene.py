"""Synthetic tabletop world: analytic primitives, pinhole camera, ray-cast
depth/RGB rendering, signed distances, outward normals and 2D->3D lifting.

Conventions: camera looks along its local +z axis; depth is the camera-frame z
coordinate of the hit point (0 = no hit). All lengths in meters.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import ImageF, InvalidInputError


class NoSurfaceError(ValueError):
    """Raised when a query point has no nearby object surface."""


# ---------------------------------------------------------------------------
# rigid transforms


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class Pose:
    """Rigid transform taking local coordinates to world coordinates."""

    rotation: np.ndarray  # 3x3
    translation: np.ndarray  # 3

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.linalg.norm(r @ r.T - np.eye(3)) > 1e-9:
            raise InvalidInputError("rotation is not orthonormal")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rpy(cls, translation, rpy=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(rpy_matrix(*rpy), np.asarray(translation, dtype=np.float64))

    def apply(self, p: np.ndarray) -> np.ndarray:
        return p @ self.rotation.T + self.translation

    def apply_vector(self, v: np.ndarray) -> np.ndarray:
        return v @ self.rotation.T

    def inverse_apply(self, p: np.ndarray) -> np.ndarray:
        return (p - self.translation) @ self.rotation

    def inverse_apply_vector(self, v: np.ndarray) -> np.ndarray:
        return v @ self.rotation

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)


# ---------------------------------------------------------------------------
# primitive shapes (local frame; z is the symmetry axis where one exists)


@dataclass(frozen=True)
class Sphere:
    radius: float
    kind = "sphere"

    def sdf(self, p):
        return np.linalg.norm(p, axis=-1) - self.radius

    def normal(self, p):
        n = np.asarray(p, dtype=np.float64)
        return n / np.linalg.norm(n)

    def ray(self, o, d):
        return _ray_sphere(o, d, self.radius)

    def bounding_radius(self):
        return self.radius

    def volume(self):
        return 4.0 / 3.0 * math.pi * self.radius ** 3

    def sample_surface(self, rng, n):
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * self.radius

    def dims(self):
        return {"r": self.radius}


@dataclass(frozen=True)
class Box:
    sx: float
    sy: float
    sz: float
    kind = "box"

    @property
    def half(self):
        return np.array([self.sx, self.sy, self.sz]) / 2.0

    def sdf(self, p):
        q = np.abs(p) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def normal(self, p):
        q = np.abs(np.asarray(p, dtype=np.float64)) - self.half
        k = int(np.argmax(q))
        n = np.zeros(3)
        n[k] = math.copysign(1.0, p[k])
        return n

    def ray(self, o, d):
        return _ray_box(o, d, self.half)

    def bounding_radius(self):
        return float(np.linalg.norm(self.half))

    def volume(self):
        return self.sx * self.sy * self.sz

    def sample_surface(self, rng, n):
        h = self.half
        areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]]) * 4.0
        faces = rng.choice(3, size=n, p=areas / areas.sum())
        signs = rng.choice([-1.0, 1.0], size=n)
        u = rng.uniform(-1.0, 1.0, size=(n, 3)) * h
        pts = u.copy()
        pts[np.arange(n), faces] = signs * h[faces]
        return pts

    def dims(self):
        return {"sx": self.sx, "sy": self.sy, "sz": self.sz}


@dataclass(frozen=True)
class Cylinder:
    radius: float
    height: float
    kind = "cylinder"

    def sdf(self, p):
        p = np.asarray(p, dtype=np.float64)
        dr = np.linalg.norm(p[..., :2], axis=-1) - self.radius
        dz = np.abs(p[..., 2]) - self.height / 2.0
        outside = np.sqrt(np.maximum(dr, 0.0) ** 2 + np.maximum(dz, 0.0) ** 2)
        inside = np.minimum(np.maximum(dr, dz), 0.0)
        return outside + inside

    def normal(self, p):
        dr = math.hypot(p[0], p[1]) - self.radius
        dz = abs(p[2]) - self.height / 2.0
        if dz > dr:
            return np.array([0.0, 0.0, math.copysign(1.0, p[2])])
        r = math.hypot(p[0], p[1])
        if r < 1e-12:
            return np.array([0.0, 0.0, math.copysign(1.0, p[2])])
        return np.array([p[0] / r, p[1] / r, 0.0])

    def ray(self, o, d):
        return _ray_cylinder(o, d, self.radius, self.height)

    def bounding_radius(self):
        return math.hypot(self.radius, self.height / 2.0)

    def volume(self):
        return math.pi * self.radius ** 2 * self.height

    def sample_surface(self, rng, n):
        side = 2.0 * math.pi * self.radius * self.height
        cap = math.pi * self.radius ** 2
        pick = rng.uniform(0.0, side + 2 * cap, size=n)
        phi = rng.uniform(0.0, 2 * math.pi, size=n)
        pts = np.zeros((n, 3))
        on_side = pick < side
        pts[on_side, 0] = self.radius * np.cos(phi[on_side])
        pts[on_side, 1] = self.radius * np.sin(phi[on_side])
        pts[on_side, 2] = rng.uniform(-self.height / 2, self.height / 2, size=int(on_side.sum()))
        caps = ~on_side
        rr = self.radius * np.sqrt(rng.uniform(size=int(caps.sum())))
        pts[caps, 0] = rr * np.cos(phi[caps])
        pts[caps, 1] = rr * np.sin(phi[caps])
        pts[caps, 2] = np.where(pick[caps] < side + cap, self.height / 2, -self.height / 2)
        return pts

    def dims(self):
        return {"r": self.radius, "h": self.height}


@dataclass(frozen=True)
class Capsule:
    radius: float
    length: float  # spine length (between hemisphere centers)
    kind = "capsule"

    def _spine_closest(self, p):
        z = np.clip(p[..., 2], -self.length / 2.0, self.length / 2.0)
        c = np.zeros_like(np.asarray(p, dtype=np.float64))
        c[..., 2] = z
        return c

    def sdf(self, p):
        p = np.asarray(p, dtype=np.float64)
        return np.linalg.norm(p - self._spine_closest(p), axis=-1) - self.radius

    def normal(self, p):
        p = np.asarray(p, dtype=np.float64)
        v = p - self._spine_closest(p)
        return v / np.linalg.norm(v)

    def ray(self, o, d):
        return _ray_capsule(o, d, self.radius, self.length)

    def bounding_radius(self):
        return self.length / 2.0 + self.radius

    def volume(self):
        return math.pi * self.radius ** 2 * self.length + 4.0 / 3.0 * math.pi * self.radius ** 3

    def sample_surface(self, rng, n):
        side = 2.0 * math.pi * self.radius * self.length
        caps = 4.0 * math.pi * self.radius ** 2
        pick = rng.uniform(0.0, side + caps, size=n)
        pts = np.zeros((n, 3))
        on_side = pick < side
        phi = rng.uniform(0.0, 2 * math.pi, size=n)
        pts[on_side, 0] = self.radius * np.cos(phi[on_side])
        pts[on_side, 1] = self.radius * np.sin(phi[on_side])
        pts[on_side, 2] = rng.uniform(-self.length / 2, self.length / 2, size=int(on_side.sum()))
        hemi = ~on_side
        m = int(hemi.sum())
        v = rng.normal(size=(m, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        v[:, 2] = np.abs(v[:, 2]) * np.where(rng.uniform(size=m) < 0.5, 1.0, -1.0)
        pts[hemi] = v * self.radius
        pts[hemi, 2] += np.sign(v[:, 2]) * self.length / 2
        return pts

    def dims(self):
        return {"r": self.radius, "l": self.length}


# ray intersectors: rays (o + t*d) in local frame, d need not be unit.
# Return t arrays with inf where no hit (t > eps only).

_EPS = 1e-9


def _ray_sphere(o, d, r):
    b = np.sum(o * d, axis=-1)
    a = np.sum(d * d, axis=-1)
    c = np.sum(o * o, axis=-1) - r * r
    disc = b * b - a * c
    t = np.full(b.shape, np.inf)
    hit = disc >= 0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = (-b - sq) / a
    t2 = (-b + sq) / a
    tt = np.where(t1 > _EPS, t1, np.where(t2 > _EPS, t2, np.inf))
    t[hit] = tt[hit]
    return t


def _ray_box(o, d, half):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (-half - o) * inv
        t1 = (half - o) * inv
    tmin = np.nanmax(np.minimum(t0, t1), axis=-1)
    tmax = np.nanmin(np.maximum(t0, t1), axis=-1)
    # axis-parallel rays: miss if origin outside the slab on that axis
    par = np.abs(d) < 1e-15
    outside = par & (np.abs(o) > half)
    miss = np.any(outside, axis=-1)
    t = np.where(tmin > _EPS, tmin, np.where(tmax > _EPS, tmax, np.inf))
    t = np.where((tmax >= np.maximum(tmin, 0.0)) & ~miss, t, np.inf)
    return t


def _ray_cylinder(o, d, r, h):
    hz = h / 2.0
    ox, oy, oz = o[..., 0], o[..., 1], o[..., 2]
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - r * r
    t_best = np.full(ox.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / a
            z = oz + t * dz
            ok = (disc >= 0) & (a > 1e-18) & (t > _EPS) & (np.abs(z) <= hz)
            t_best = np.where(ok & (t < t_best), t, t_best)
        for zc in (hz, -hz):
            t = (zc - oz) / dz
            xx = ox + t * dx
            yy = oy + t * dy
            ok = (np.abs(dz) > 1e-18) & (t > _EPS) & (xx * xx + yy * yy <= r * r)
            t_best = np.where(ok & (t < t_best), t, t_best)
    return t_best


def _ray_capsule(o, d, r, l):
    hz = l / 2.0
    ox, oy, oz = o[..., 0], o[..., 1], o[..., 2]
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    t_best = np.full(ox.shape, np.inf)
    a = dx * dx + dy * dy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - r * r
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / a
            z = oz + t * dz
            ok = (disc >= 0) & (a > 1e-18) & (t > _EPS) & (np.abs(z) <= hz)
            t_best = np.where(ok & (t < t_best), t, t_best)
    for zc in (hz, -hz):
        oc = np.stack([ox, oy, oz - zc], axis=-1)
        t = _ray_sphere(oc, d, r)
        z = oz + t * dz
        ok = np.isfinite(t) & ((z - zc) * np.sign(zc) >= 0)
        t_best = np.where(ok & (t < t_best), t, t_best)
    return t_best


SHAPE_KINDS = {"sphere": Sphere, "box": Box, "cylinder": Cylinder, "capsule": Capsule}

DEFAULT_MASS = 0.15  # kg; typical filled household object at desk scale


@dataclass(frozen=True)
class PrimitiveObject:
    id: str
    shape: object
    pose: Pose = field(default_factory=Pose.identity)
    color: tuple = (0.8, 0.2, 0.2)
    mass: float = DEFAULT_MASS

    def sdf(self, p_world):
        return self.shape.sdf(self.pose.inverse_apply(np.asarray(p_world, dtype=np.float64)))

    def normal(self, p_world):
        local = self.pose.inverse_apply(np.asarray(p_world, dtype=np.float64))
        return self.pose.apply_vector(self.shape.normal(local))

    def centroid(self):
        return self.pose.translation.copy()

    def sample_surface(self, rng, n):
        return self.pose.apply(self.shape.sample_surface(rng, n))


@dataclass(frozen=True)
class Scene:
    objects: list
    table_height: float | None = 0.0

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("object ids must be unique")

    def get(self, object_id: str) -> PrimitiveObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def sdf(self, p_world):
        p = np.asarray(p_world, dtype=np.float64)
        vals = np.stack([o.sdf(p) for o in self.objects], axis=0)
        return np.min(vals, axis=0)


@dataclass(frozen=True)
class SurfacePoint:
    position: np.ndarray
    normal: np.ndarray
    object_id: str


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: Pose = field(default_factory=Pose.identity)  # world <- camera

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError("principal point outside image")

    @classmethod
    def overhead(cls, width=640, height=480, fx=540.0, fy=540.0, camera_height=0.8,
                 center=(0.0, 0.0)) -> "CameraModel":
        """Camera above the table looking straight down (+z camera = -z world)."""
        rot = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
        pose = Pose(rot, np.array([center[0], center[1], camera_height]))
        return cls(fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0,
                   width=width, height=height, pose=pose)

    def ray_directions(self, us, vs):
        """World-frame ray directions with unit camera-z component."""
        d = np.stack(
            [(us - self.cx) / self.fx, (vs - self.cy) / self.fy, np.ones_like(us)], axis=-1
        )
        return self.pose.apply_vector(d)

    def project(self, p_world):
        pc = self.pose.inverse_apply(np.asarray(p_world, dtype=np.float64))
        return np.array([self.fx * pc[0] / pc[2] + self.cx, self.fy * pc[1] / pc[2] + self.cy])


TABLE_ID = -2
NO_HIT = -1


def raycast(scene: Scene, camera: CameraModel):
    """Cast one ray per pixel; returns (depth, hit_index) arrays.

    depth is camera z at the hit (0 = none); hit_index is the object's index in
    scene.objects, TABLE_ID for the table plane, NO_HIT otherwise.
    """
    us, vs = np.meshgrid(
        np.arange(camera.width, dtype=np.float64),
        np.arange(camera.height, dtype=np.float64),
    )
    d_world = camera.ray_directions(us, vs)
    o_world = camera.pose.translation
    t_best = np.full((camera.height, camera.width), np.inf)
    idx = np.full((camera.height, camera.width), NO_HIT, dtype=np.int32)
    for i, obj in enumerate(scene.objects):
        o_loc = np.broadcast_to(obj.pose.inverse_apply(o_world), d_world.shape)
        d_loc = obj.pose.inverse_apply_vector(d_world)
        t = obj.shape.ray(o_loc, d_loc)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        idx = np.where(closer, i, idx)
    if scene.table_height is not None:
        dz = d_world[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (scene.table_height - o_world[2]) / dz
        ok = (np.abs(dz) > 1e-15) & (t > _EPS)
        t = np.where(ok, t, np.inf)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        idx = np.where(closer, TABLE_ID, idx)
    depth = np.where(np.isfinite(t_best), t_best, 0.0)
    return depth, idx


def render_depth(scene: Scene, camera: CameraModel) -> ImageF:
    depth, _ = raycast(scene, camera)
    return ImageF(depth.astype(np.float32))


BACKGROUND_GRAY = 0.5
TABLE_COLOR = (0.62, 0.60, 0.58)


def render_rgb(scene: Scene, camera: CameraModel) -> ImageF:
    """Flat per-object color shaded by a camera-attached headlight Lambert term."""
    depth, idx = raycast(scene, camera)
    us, vs = np.meshgrid(
        np.arange(camera.width, dtype=np.float64),
        np.arange(camera.height, dtype=np.float64),
    )
    d_world = camera.ray_directions(us, vs)
    o_world = camera.pose.translation
    pts = o_world + depth[..., None] * d_world
    img = np.full((camera.height, camera.width, 3), BACKGROUND_GRAY)
    light_world = -camera.pose.rotation[:, 2]  # toward the camera along its axis
    for i, obj in enumerate(scene.objects):
        mask = idx == i
        if not mask.any():
            continue
        local = obj.pose.inverse_apply(pts[mask])
        normals = np.stack([obj.shape.normal(p) for p in local], axis=0)
        normals = normals @ obj.pose.rotation.T
        lam = np.maximum(normals @ light_world, 0.0)
        img[mask] = np.asarray(obj.color) * lam[:, None]
    tmask = idx == TABLE_ID
    if tmask.any():
        lam = max(float(np.array([0.0, 0.0, 1.0]) @ light_world), 0.0)
        img[tmask] = np.asarray(TABLE_COLOR) * lam
    return ImageF(np.moveaxis(img, 2, 0).astype(np.float32))


def lift_point(camera: CameraModel, depth: ImageF, pixel) -> np.ndarray:
    """Back-project a pixel through its depth to a world-frame 3D point."""
    u, v = float(pixel[0]), float(pixel[1])
    iu = min(max(int(round(u)), 0), camera.width - 1)
    iv = min(max(int(round(v)), 0), camera.height - 1)
    z = float(depth.data[0, iv, iu])
    if z <= 0.0:
        raise NoSurfaceError(f"no depth at pixel ({u:.1f},{v:.1f})")
    pc = np.array([(u - camera.cx) * z / camera.fx, (v - camera.cy) * z / camera.fy, z])
    return camera.pose.apply(pc)


def surface_normal(scene: Scene, p, max_dist: float = 1e-3) -> SurfacePoint:
    """Outward normal of the nearest primitive; position snapped onto the surface."""
    p = np.asarray(p, dtype=np.float64)
    best, best_d = None, np.inf
    for obj in scene.objects:
        d = abs(float(obj.sdf(p)))
        if d < best_d:
            best, best_d = obj, d
    if best is None or best_d > max_dist:
        raise NoSurfaceError(f"point {p} is {best_d:.4g} m from the nearest surface")
    n = best.normal(p)
    pos = p - float(best.sdf(p)) * n
    # one more projection pass tightens curved-surface snapping
    pos = pos - float(best.sdf(pos)) * best.normal(pos)
    return SurfacePoint(position=pos, normal=n / np.linalg.norm(n), object_id=best.id)


# ---------------------------------------------------------------------------
# scene JSON


def _shape_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "sphere":
        return Sphere(radius=float(d["r"]))
    if kind == "box":
        return Box(sx=float(d["sx"]), sy=float(d["sy"]), sz=float(d["sz"]))
    if kind == "cylinder":
        return Cylinder(radius=float(d["r"]), height=float(d["h"]))
    if kind == "capsule":
        return Capsule(radius=float(d["r"]), length=float(d["l"]))
    raise InvalidInputError(f"unknown shape kind: {kind!r}")


def scene_to_dict(scene: Scene) -> dict:
    objs = []
    for o in scene.objects:
        r = o.pose.rotation
        # recover rpy (zyx convention used by rpy_matrix)
        pitch = -math.asin(max(-1.0, min(1.0, r[2, 0])))
        roll = math.atan2(r[2, 1], r[2, 2])
        yaw = math.atan2(r[1, 0], r[0, 0])
        objs.append(
            {
                "id": o.id,
                "shape": {"kind": o.shape.kind, **o.shape.dims()},
                "pose": {
                    "translation": [float(x) for x in o.pose.translation],
                    "rotation_rpy": [roll, pitch, yaw],
                },
                "color": [float(c) for c in o.color],
                "mass": o.mass,
            }
        )
    return {"table_height": scene.table_height, "objects": objs}


def scene_from_dict(d: dict) -> Scene:
    objects = []
    for od in d.get("objects", []):
        pose_d = od.get("pose", {})
        pose = Pose.from_rpy(
            pose_d.get("translation", [0.0, 0.0, 0.0]),
            pose_d.get("rotation_rpy", [0.0, 0.0, 0.0]),
        )
        objects.append(
            PrimitiveObject(
                id=od["id"],
                shape=_shape_from_dict(od["shape"]),
                pose=pose,
                color=tuple(od.get("color", (0.8, 0.2, 0.2))),
                mass=float(od.get("mass", DEFAULT_MASS)),
            )
        )
    return Scene(objects=objects, table_height=d.get("table_height", 0.0))


def load_scene(path) -> Scene:
    with open(path) as f:
        return scene_from_dict(json.load(f))


def save_scene(path, scene: Scene) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2))
