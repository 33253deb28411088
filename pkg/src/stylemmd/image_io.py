"""PNG loading/saving and conversion to the network's preprocessed space.

The network consumes (1, 3, H, W) float64 tensors in B,G,R channel order with
the Caffe-lineage channel means subtracted; 8-bit RGB images round-trip
exactly through preprocess/postprocess.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .tensor import Tensor4

# Means subtracted per channel, in B, G, R order.
BGR_MEANS = np.array([103.939, 116.779, 123.68])


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster, pixels shaped (height, width, 3) row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image must be at least 1x1, got {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def load_png(path) -> RgbImage:
    """Read a PNG as 8-bit RGB; an alpha channel is dropped."""
    with Image.open(path) as im:
        if im.mode != "RGB":
            im = im.convert("RGB")
        return RgbImage(np.asarray(im, dtype=np.uint8))


def save_png(img: RgbImage, path) -> None:
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def preprocess(img: RgbImage) -> Tensor4:
    """RGB uint8 -> (1, 3, H, W) float64, channels reordered to B,G,R,
    per-channel means subtracted."""
    rgb = img.pixels.astype(np.float64)
    bgr = rgb[:, :, ::-1] - BGR_MEANS
    return np.ascontiguousarray(bgr.transpose(2, 0, 1))[None, :, :, :]


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.floor(np.abs(x) + 0.5) * np.sign(x)


def postprocess(t: Tensor4) -> RgbImage:
    """Inverse of preprocess: add means, reorder to RGB, clamp and round."""
    if t.ndim != 4 or t.shape[0] != 1 or t.shape[1] != 3:
        raise ValueError(f"expected a (1, 3, H, W) tensor, got shape {t.shape}")
    bgr = t[0].transpose(1, 2, 0) + BGR_MEANS
    rgb = np.clip(bgr[:, :, ::-1], 0.0, 255.0)
    return RgbImage(_round_half_away(rgb).astype(np.uint8))


def resize_bilinear(img: RgbImage, width: int, height: int) -> RgbImage:
    """Bilinear resample with half-pixel-aligned sample centers."""
    if width < 1 or height < 1:
        raise ValueError(f"target size must be >= 1x1, got {width}x{height}")
    src = img.pixels.astype(np.float64)
    sh, sw = src.shape[0], src.shape[1]

    def axis_coords(dst_n: int, src_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(dst_n) + 0.5) * (src_n / dst_n) - 0.5
        pos = np.clip(pos, 0.0, src_n - 1.0)
        lo = np.floor(pos).astype(np.int64)
        lo = np.minimum(lo, src_n - 1)
        hi = np.minimum(lo + 1, src_n - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis_coords(height, sh)
    x0, x1, fx = axis_coords(width, sw)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    return RgbImage(_round_half_away(np.clip(out, 0.0, 255.0)).astype(np.uint8))


def fit_long_side(img: RgbImage, long_side: int) -> RgbImage:
    """Downscale so the longer side is at most long_side, preserving aspect.

    Images already within the bound are returned unchanged (never upscaled).
    """
    longest = max(img.width, img.height)
    if longest <= long_side:
        return img
    scale = long_side / longest
    w = max(1, round(img.width * scale))
    h = max(1, round(img.height * scale))
    return resize_bilinear(img, w, h)
