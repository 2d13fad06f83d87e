"""Probability-map providers.

The detection pipeline is agnostic to where its 6-channel probability maps come
from. Two providers are included: a file-backed one (PMAP format) and a
synthetic one that derives per-type probabilities from rendered object masks,
using the local pixel width of each object as a proxy for graspable size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .detect import N_TYPES, GraspType, read_pmap
from .imaging import ImageF
from .scene import CameraModel, Cylinder, Scene, raycast

# local object width (pixels) -> grasp-type activations
WIDTH_PINCH_MAX = 15.0
WIDTH_TRIPOD_MAX = 30.0
WIDTH_POWER_MAX = 60.0
SMALL_CYLINDER_RADIUS = 0.035  # m; below this a cylinder also affords a small wrap
SMOOTH_SIGMA = 2.0


@dataclass(frozen=True)
class FilePmapProvider:
    """Serves fixed probability maps loaded from a PMAP file."""

    path: str

    def maps(self, scene=None, camera=None) -> ImageF:
        return read_pmap(self.path)


class SyntheticProvider:
    """Rule-based provider rendering the scene to per-type probability maps."""

    def maps(self, scene: Scene, camera: CameraModel) -> ImageF:
        maps, _ = synthetic_maps_and_masks(scene, camera)
        return maps


def synthetic_maps_and_masks(scene: Scene, camera: CameraModel) -> tuple[ImageF, ImageF]:
    """Probability maps plus the binary label masks the rules fired on.

    Per object: the local width at each mask pixel is twice the Euclidean
    distance to the mask boundary. Width bands activate pinch / tripod+precision
    / power+precision / large-wrap channels; thin cylinders additionally get a
    small-wrap activation. Maps are smoothed with a Gaussian (sigma=2); masks
    are returned unsmoothed.
    """
    h, w = camera.height, camera.width
    maps = np.zeros((N_TYPES, h, w), dtype=np.float64)
    masks = np.zeros((N_TYPES, h, w), dtype=np.float64)

    def put(t: GraspType, sel, value: float):
        c = t - 1
        maps[c][sel] = np.maximum(maps[c][sel], value)
        masks[c][sel] = 1.0

    _, idx = raycast(scene, camera)
    for i, obj in enumerate(scene.objects):
        mask = idx == i
        if not mask.any():
            continue
        width_px = 2.0 * ndimage.distance_transform_edt(mask)
        pinch = mask & (width_px < WIDTH_PINCH_MAX)
        tripod = mask & (width_px >= WIDTH_PINCH_MAX) & (width_px < WIDTH_TRIPOD_MAX)
        power = mask & (width_px >= WIDTH_TRIPOD_MAX) & (width_px < WIDTH_POWER_MAX)
        large = mask & (width_px >= WIDTH_POWER_MAX)
        put(GraspType.PINCH, pinch, 0.9)
        put(GraspType.TRIPOD, tripod, 0.8)
        put(GraspType.PRECISION, tripod, 0.6)
        put(GraspType.POWER, power, 0.8)
        put(GraspType.PRECISION, power, 0.5)
        put(GraspType.LARGE_WRAP, large, 0.9)
        if isinstance(obj.shape, Cylinder) and obj.shape.radius < SMALL_CYLINDER_RADIUS:
            put(GraspType.SMALL_WRAP, mask, 0.85)
    for c in range(N_TYPES):
        maps[c] = ndimage.gaussian_filter(maps[c], SMOOTH_SIGMA, mode="nearest")
    np.clip(maps, 0.0, 1.0, out=maps)
    return ImageF(maps.astype(np.float32)), ImageF(masks.astype(np.float32))
