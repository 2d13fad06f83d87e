"""Float image containers, opponent color conversion, Gaussian pyramids and
center-surround (DoG) contrast.

Images are stored channel-planar: a float32 array of shape (channels, height,
width). All operations are pure and never emit NaN for finite inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter1d


class InvalidInputError(ValueError):
    """Raised when an image or parameter violates an operation's contract."""


@dataclass(frozen=True)
class ImageF:
    """Multi-channel float raster, shape (channels, height, width), float32."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        if arr.ndim != 3:
            raise InvalidInputError(f"image data must be 2D or 3D, got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("image contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def plane(self, c: int) -> np.ndarray:
        return self.data[c]


@dataclass(frozen=True)
class OpponentImage:
    """Intensity / red-green / blue-yellow channels of equal size."""

    intensity: ImageF
    rg: ImageF
    by: ImageF

    def __iter__(self):
        return iter((self.intensity, self.rg, self.by))


@dataclass(frozen=True)
class PyramidParams:
    sigma_center: float = 2.0
    sigma_surround: float = 10.0
    octaves: int = 4
    scales_per_octave: int = 2

    def validate(self):
        if self.sigma_center <= 0 or self.sigma_surround <= self.sigma_center:
            raise InvalidInputError("require 0 < sigma_center < sigma_surround")
        if self.octaves < 1 or self.scales_per_octave < 1:
            raise InvalidInputError("octaves and scales_per_octave must be >= 1")


@dataclass(frozen=True)
class TwinPyramid:
    """Paired center/surround Gaussian pyramids, one level per (octave, scale)."""

    center_levels: list
    surround_levels: list
    sigma_center: float
    sigma_surround: float
    octaves: int
    scales_per_octave: int


def to_opponent(rgb: ImageF) -> OpponentImage:
    """Convert an RGB image in [0,1] to intensity / red-green / blue-yellow.

    intensity = (R+G+B)/3, rg = R-G, by = B-(R+G)/2.
    """
    if rgb.channels != 3:
        raise InvalidInputError(f"expected 3 channels, got {rgb.channels}")
    r, g, b = rgb.data[0], rgb.data[1], rgb.data[2]
    return OpponentImage(
        intensity=ImageF((r + g + b) / 3.0),
        rg=ImageF(r - g),
        by=ImageF(b - (r + g) / 2.0),
    )


def gaussian_blur(img: ImageF, sigma: float) -> ImageF:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), replicate border."""
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    out = np.empty_like(img.data, dtype=np.float64)
    src = img.data.astype(np.float64)
    for c in range(img.channels):
        tmp = gaussian_filter1d(src[c], sigma, axis=0, mode="nearest", radius=radius)
        out[c] = gaussian_filter1d(tmp, sigma, axis=1, mode="nearest", radius=radius)
    return ImageF(out.astype(np.float32))


def downsample2(img: ImageF) -> ImageF:
    """Halve both dimensions with a 2x2 box mean (odd trailing row/col dropped)."""
    h2, w2 = img.height // 2, img.width // 2
    if h2 < 1 or w2 < 1:
        raise InvalidInputError("image too small to downsample")
    d = img.data[:, : 2 * h2, : 2 * w2]
    out = 0.25 * (d[:, 0::2, 0::2] + d[:, 1::2, 0::2] + d[:, 0::2, 1::2] + d[:, 1::2, 1::2])
    return ImageF(out)


def build_twin_pyramid(ch: ImageF, params: PyramidParams = PyramidParams()) -> TwinPyramid:
    """Build paired center/surround Gaussian pyramids for one channel.

    Within an octave, scale k scales both sigmas by 2**(k/S); between octaves the
    base image is halved with a 2x2 box mean.
    """
    params.validate()
    if ch.channels != 1:
        raise InvalidInputError("pyramid input must be single-channel")
    if min(ch.height, ch.width) < 2 ** params.octaves:
        raise InvalidInputError(
            f"image {ch.width}x{ch.height} too small for {params.octaves} octaves"
        )
    center, surround = [], []
    base = ch
    for o in range(params.octaves):
        for k in range(params.scales_per_octave):
            m = 2.0 ** (k / params.scales_per_octave)
            center.append(gaussian_blur(base, params.sigma_center * m))
            surround.append(gaussian_blur(base, params.sigma_surround * m))
        if o + 1 < params.octaves:
            base = downsample2(base)
    return TwinPyramid(
        center_levels=center,
        surround_levels=surround,
        sigma_center=params.sigma_center,
        sigma_surround=params.sigma_surround,
        octaves=params.octaves,
        scales_per_octave=params.scales_per_octave,
    )


def dog_contrast(center: ImageF, surround: ImageF) -> tuple[ImageF, ImageF]:
    """On/off center-surround contrast: rectified differences with disjoint support."""
    if center.data.shape != surround.data.shape:
        raise InvalidInputError("center/surround dimension mismatch")
    diff = center.data - surround.data
    return ImageF(np.maximum(diff, 0.0)), ImageF(np.maximum(-diff, 0.0))


def upsample_to(img: ImageF, height: int, width: int) -> ImageF:
    """Bilinear resize to (height, width)."""
    planes = [
        cv2.resize(img.data[c], (width, height), interpolation=cv2.INTER_LINEAR)
        for c in range(img.channels)
    ]
    return ImageF(np.stack(planes, axis=0))


def read_image(path) -> ImageF:
    """Read a PNG/PGM/PPM image as float RGB (or single channel) in [0,1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidInputError(f"cannot read image: {path}")
    if raw.ndim == 2:
        return ImageF(raw.astype(np.float32) / 255.0)
    if raw.shape[2] == 4:
        raw = raw[:, :, :3]
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0
    return ImageF(np.moveaxis(rgb, 2, 0))


def write_image(path, img: ImageF) -> None:
    """Write as 8-bit PNG/PGM/PPM; values clamped to [0,1], rounded to nearest."""
    path = Path(path)
    u8 = np.rint(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    if img.channels == 1:
        ok = cv2.imwrite(str(path), u8[0])
    elif img.channels == 3:
        bgr = cv2.cvtColor(np.moveaxis(u8, 0, 2), cv2.COLOR_RGB2BGR)
        ok = cv2.imwrite(str(path), bgr)
    else:
        raise InvalidInputError(f"cannot write {img.channels}-channel image")
    if not ok:
        raise InvalidInputError(f"cannot write image: {path}")
