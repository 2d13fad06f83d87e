"""Grasp taxonomy, ROI scoring, mean-shift grasp point localization and the
per-type segmentation metrics (IoU, confusion matrix).

Probability maps are 6-channel float images (one channel per grasp type, values
in [0,1]) supplied by a provider: file-backed (PMAP format) or synthetic.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .imaging import ImageF, InvalidInputError
from .saliency import Roi


class NoGraspPointError(ValueError):
    """Raised when no grasp point can be localized in a region."""


class GraspType(IntEnum):
    LARGE_WRAP = 1
    SMALL_WRAP = 2
    POWER = 3
    PINCH = 4
    PRECISION = 5
    TRIPOD = 6

    @property
    def display_name(self) -> str:
        return {
            GraspType.LARGE_WRAP: "large wrap",
            GraspType.SMALL_WRAP: "small wrap",
            GraspType.POWER: "power",
            GraspType.PINCH: "pinch",
            GraspType.PRECISION: "precision",
            GraspType.TRIPOD: "tripod",
        }[self]


N_TYPES = len(GraspType)


@dataclass(frozen=True)
class GraspInfo:
    """Grasp-relevant information for one region: type, 2D point, score."""

    roi: Roi
    grasp_type: GraspType
    point: tuple[float, float]  # (x, y), subpixel
    score: float

    def to_dict(self) -> dict:
        return {
            "roi": self.roi.to_dict(),
            "type_name": self.grasp_type.display_name,
            "type_code": int(self.grasp_type),
            "point": [float(self.point[0]), float(self.point[1])],
            "score": float(self.score),
        }


@dataclass(frozen=True)
class DetectParams:
    bandwidth: float = 15.0
    activation: float = 0.3
    step_tol: float = 0.1
    max_iters: int = 100
    max_seeds: int = 2000


def _check_maps(p: ImageF):
    if p.channels != N_TYPES:
        raise InvalidInputError(f"expected {N_TYPES} channels, got {p.channels}")


def _roi_mask_coords(p: ImageF, o: Roi):
    if o.w < 1 or o.h < 1:
        raise InvalidInputError("empty ROI")
    if o.x < 0 or o.y < 0 or o.x + o.w > p.width or o.y + o.h > p.height:
        raise InvalidInputError("ROI exceeds map bounds")
    ys, xs = np.nonzero(o.mask)
    if ys.size == 0:
        raise InvalidInputError("ROI mask is empty")
    return ys + o.y, xs + o.x


def score_roi(p: ImageF, o: Roi) -> np.ndarray:
    """Mean per-type probability over the ROI's masked pixels (6 floats)."""
    _check_maps(p)
    ys, xs = _roi_mask_coords(p, o)
    return p.data[:, ys, xs].astype(np.float64).mean(axis=1)


def select_type(scores) -> GraspType:
    """Argmax over the 6 per-type scores; ties go to the lowest type code."""
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != (N_TYPES,):
        raise InvalidInputError(f"expected {N_TYPES} scores")
    if np.any(np.isnan(s)):
        raise InvalidInputError("NaN score")
    return GraspType(int(np.argmax(s)) + 1)


def mean_shift_modes(p: ImageF, s: GraspType, o: Roi,
                     bandwidth: float = 15.0, activation: float = 0.3,
                     step_tol: float = 0.1, max_iters: int = 100,
                     max_seeds: int = 2000) -> list[tuple[np.ndarray, float]]:
    """Weighted mean-shift modes of one probability channel inside a ROI.

    Support points are the ROI's masked pixels weighted by the channel value;
    the kernel is flat with radius = bandwidth. Seeds are pixels at or above
    the activation threshold. Modes closer than bandwidth/2 are merged; each
    mode's value is a bilinear sample of the channel.
    """
    if bandwidth <= 0:
        raise InvalidInputError("bandwidth must be > 0")
    if not 0.0 <= activation < 1.0:
        raise InvalidInputError("activation must be in [0,1)")
    _check_maps(p)
    ys, xs = _roi_mask_coords(p, o)
    chan = p.data[s - 1]
    w = chan[ys, xs].astype(np.float64)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)  # (M, 2) as (x, y)

    active = w >= activation
    if activation == 0.0:
        active = w > 0.0
    seeds = pts[active]
    if seeds.shape[0] == 0:
        return []
    if seeds.shape[0] > max_seeds:
        stride = int(np.ceil(seeds.shape[0] / max_seeds))
        seeds = seeds[::stride]

    modes = _iterate_mean_shift(seeds, pts, w, bandwidth, step_tol, max_iters)
    values = np.array([_bilinear(chan, m[0], m[1]) for m in modes])
    order = np.lexsort((modes[:, 1], modes[:, 0], -values))
    kept: list[tuple[np.ndarray, float]] = []
    for i in order:
        m = modes[i]
        if all(np.linalg.norm(m - km) >= bandwidth / 2.0 for km, _ in kept):
            kept.append((m, float(values[i])))
    return kept


def mean_shift_step(pos: np.ndarray, pts: np.ndarray, w: np.ndarray,
                    bandwidth: float) -> np.ndarray:
    """One flat-kernel weighted mean-shift update of a single position."""
    new, _ = _batched_step(pos[None, :], pts, w, bandwidth)
    return new[0]


def _batched_step(positions, pts, w, bandwidth, chunk=256):
    out = np.empty_like(positions)
    moved = np.zeros(positions.shape[0], dtype=bool)
    for lo in range(0, positions.shape[0], chunk):
        pos = positions[lo : lo + chunk]
        d2 = ((pos[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        inside = d2 <= bandwidth * bandwidth
        wm = inside * w[None, :]
        tot = wm.sum(axis=1)
        num = wm @ pts
        ok = tot > 0
        upd = pos.copy()
        upd[ok] = num[ok] / tot[ok, None]
        out[lo : lo + chunk] = upd
        moved[lo : lo + chunk] = ok
    return out, moved


def _iterate_mean_shift(seeds, pts, w, bandwidth, step_tol, max_iters):
    positions = seeds.copy()
    activefl = np.ones(positions.shape[0], dtype=bool)
    for _ in range(max_iters):
        if not activefl.any():
            break
        upd, ok = _batched_step(positions[activefl], pts, w, bandwidth)
        step = np.linalg.norm(upd - positions[activefl], axis=1)
        positions[activefl] = upd
        conv = (step < step_tol) | ~ok
        idx = np.nonzero(activefl)[0]
        activefl[idx[conv]] = False
        # collapse near-duplicates to cut redundant iterations
        if positions.shape[0] > 512:
            rounded = np.round(positions / (step_tol * 2))
            _, uniq = np.unique(rounded, axis=0, return_index=True)
            keep = np.sort(uniq)
            positions = positions[keep]
            activefl = activefl[keep]
    return positions


def _bilinear(chan: np.ndarray, x: float, y: float) -> float:
    h, w = chan.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    return float(
        chan[y0, x0] * (1 - fx) * (1 - fy)
        + chan[y0, x1] * fx * (1 - fy)
        + chan[y1, x0] * (1 - fx) * fy
        + chan[y1, x1] * fx * fy
    )


def select_point(modes, roi: Roi) -> tuple[np.ndarray, float]:
    """Mode with the highest value; ties go to the one nearest the ROI center,
    then to row-major order."""
    if not modes:
        raise NoGraspPointError("no candidate grasp point")
    cx, cy = roi.center

    def key(mv):
        m, v = mv
        return (-v, (m[0] - cx) ** 2 + (m[1] - cy) ** 2, m[1], m[0])

    m, v = min(modes, key=key)
    return m, v


def detect(p: ImageF, o: Roi, params: DetectParams = DetectParams()) -> GraspInfo:
    """Full per-ROI detection: score types, pick the best, localize its point."""
    scores = score_roi(p, o)
    s = select_type(scores)
    modes = mean_shift_modes(
        p, s, o,
        bandwidth=params.bandwidth, activation=params.activation,
        step_tol=params.step_tol, max_iters=params.max_iters,
        max_seeds=params.max_seeds,
    )
    point, _ = select_point(modes, o)
    return GraspInfo(roi=o, grasp_type=s, point=(float(point[0]), float(point[1])),
                     score=float(scores[s - 1]))


def full_roi(p: ImageF) -> Roi:
    """A ROI covering the whole map (seed at the global max of the channel sum)."""
    total = p.data.sum(axis=0)
    sy, sx = np.unravel_index(int(np.argmax(total)), total.shape)
    return Roi(x=0, y=0, w=p.width, h=p.height,
               mask=np.ones((p.height, p.width), dtype=bool),
               seed=(int(sx), int(sy)), peak=float(total[sy, sx]))


# ---------------------------------------------------------------------------
# metrics


def iou_per_type(pred: ImageF, gt: ImageF, bin_threshold: float = 0.5) -> np.ndarray:
    """Per-type IoU of binarized prediction vs ground truth (empty union -> 1)."""
    _check_maps(pred)
    _check_maps(gt)
    if pred.data.shape != gt.data.shape:
        raise InvalidInputError("prediction/ground-truth dimension mismatch")
    pb = pred.data >= bin_threshold
    gb = gt.data >= 0.5
    inter = (pb & gb).sum(axis=(1, 2)).astype(np.float64)
    union = (pb | gb).sum(axis=(1, 2)).astype(np.float64)
    return np.where(union > 0, inter / np.maximum(union, 1), 1.0)


def confusion_matrix(pred: ImageF, gt: ImageF) -> np.ndarray:
    """Row g = mean predicted probability vector over pixels with gt type g,
    renormalized to sum 1 (all-zero row when a type has no gt pixels)."""
    _check_maps(pred)
    _check_maps(gt)
    if pred.data.shape != gt.data.shape:
        raise InvalidInputError("prediction/ground-truth dimension mismatch")
    cm = np.zeros((N_TYPES, N_TYPES))
    for g in range(N_TYPES):
        mask = gt.data[g] >= 0.5
        if not mask.any():
            continue
        row = pred.data[:, mask].mean(axis=1).astype(np.float64)
        total = row.sum()
        cm[g] = row / total if total > 0 else 0.0
    return cm


# ---------------------------------------------------------------------------
# PMAP binary format: b"PMAP", u32le h, u32le w, u32le c, then c*h*w f32le
# (channel-planar, row-major)

PMAP_MAGIC = b"PMAP"


def write_pmap(path, maps: ImageF) -> None:
    data = maps.data.astype("<f4")
    header = PMAP_MAGIC + struct.pack("<III", maps.height, maps.width, maps.channels)
    Path(path).write_bytes(header + data.tobytes())


def read_pmap(path) -> ImageF:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != PMAP_MAGIC:
        raise InvalidInputError(f"bad magic in PMAP file: {path}")
    h, w, c = struct.unpack("<III", raw[4:16])
    expected = 16 + 4 * h * w * c
    if len(raw) != expected:
        raise InvalidInputError(f"truncated PMAP file: {path}")
    data = np.frombuffer(raw, dtype="<f4", offset=16).reshape(c, h, w)
    return ImageF(np.ascontiguousarray(data))
