"""Pixel-precise bottom-up saliency and region-of-interest selection.

The saliency map is built from center-surround contrasts of the three opponent
channels across a multi-scale twin pyramid, fused by arithmetic means at input
resolution and normalized by the global maximum. ROIs are extracted by seeded
region growing around successive global maxima.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imaging import (
    ImageF,
    InvalidInputError,
    PyramidParams,
    build_twin_pyramid,
    dog_contrast,
    to_opponent,
    upsample_to,
)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SaliencyParams:
    pyramid: PyramidParams = field(default_factory=PyramidParams)


@dataclass(frozen=True)
class SaliencyMap:
    """Single-channel map in [0,1]; max is 1 unless the map is identically 0."""

    map: ImageF


@dataclass(frozen=True)
class Roi:
    """Salient region: tight bounding rect, binary mask over it, seed pixel, peak."""

    x: int
    y: int
    w: int
    h: int
    mask: np.ndarray  # bool, shape (h, w)
    seed: tuple[int, int]  # (x, y) of the local maximum
    peak: float

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + (self.w - 1) / 2.0, self.y + (self.h - 1) / 2.0)

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "w": self.w,
            "h": self.h,
            "peak": float(self.peak),
            "seed": [int(self.seed[0]), int(self.seed[1])],
        }


def compute_saliency(rgb: ImageF, params: SaliencyParams = SaliencyParams()) -> SaliencyMap:
    """Compute the bottom-up saliency map of an RGB image.

    Per opponent channel: twin pyramid, on/off DoG contrast per level, bilinear
    upsample to input resolution, arithmetic mean over levels. The three channel
    maps are averaged and the result normalized by its global maximum.
    """
    h, w = rgb.height, rgb.width
    opp = to_opponent(rgb)
    channel_maps = []
    for ch in opp:
        pyr = build_twin_pyramid(ch, params.pyramid)
        contrast_maps = []
        for c, s in zip(pyr.center_levels, pyr.surround_levels):
            on, off = dog_contrast(c, s)
            contrast_maps.append(upsample_to(on, h, w).data[0])
            contrast_maps.append(upsample_to(off, h, w).data[0])
        channel_maps.append(np.mean(contrast_maps, axis=0))
    sal = np.mean(channel_maps, axis=0)
    peak = float(sal.max())
    if peak > 0:
        sal = sal / peak
    return SaliencyMap(map=ImageF(sal))


def extract_rois(sal: SaliencyMap, max_rois: int = 5, grow_fraction: float = 0.5) -> list[Roi]:
    """Extract up to max_rois regions by iterative peak-seeded region growing.

    Each iteration takes the global maximum as seed, grows over 8-connected
    pixels >= grow_fraction * seed value, emits the region and suppresses it.
    Returned in descending peak order (row-major seed on ties, by construction).
    """
    if max_rois < 1:
        raise InvalidInputError("max_rois must be >= 1")
    if not 0.0 < grow_fraction < 1.0:
        raise InvalidInputError("grow_fraction must be in (0,1)")
    work = sal.map.data[0].copy()
    rois: list[Roi] = []
    for _ in range(max_rois):
        idx = int(np.argmax(work))
        sy, sx = np.unravel_index(idx, work.shape)
        peak = float(work[sy, sx])
        if peak <= 0.0:
            break
        above = work >= grow_fraction * peak
        labels, _ = ndimage.label(above, structure=EIGHT_CONNECTED)
        region = labels == labels[sy, sx]
        ys, xs = np.nonzero(region)
        x0, x1 = int(xs.min()), int(xs.max())
        y0, y1 = int(ys.min()), int(ys.max())
        rois.append(
            Roi(
                x=x0,
                y=y0,
                w=x1 - x0 + 1,
                h=y1 - y0 + 1,
                mask=region[y0 : y1 + 1, x0 : x1 + 1].copy(),
                seed=(int(sx), int(sy)),
                peak=peak,
            )
        )
        work[region] = 0.0
    return rois
