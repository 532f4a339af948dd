"""Image containers, region arithmetic and the compositing rule.

Images are plain ``numpy`` arrays of shape ``(H, W, C)`` with ``C`` in
``{1, 3}`` and float64 values in ``[0, 1]``.  Masks are ``(H, W)`` arrays.
Every function here returns a new array; inputs are never mutated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    pass


class BoundsError(ValueError):
    pass


def as_image(data, copy: bool = False) -> np.ndarray:
    """Validate/convert ``data`` into an ``(H, W, C)`` float64 image."""
    img = np.array(data, dtype=np.float64, copy=copy)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShapeError(f"expected HxWx1 or HxWx3 image, got shape {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return img


def _mask2d(mask) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[:, :, 0]
    if m.ndim != 2:
        raise ShapeError(f"mask must be single-channel, got shape {m.shape}")
    return m


def round_half_away(v: float) -> int:
    """Round to nearest integer, ties away from zero (platform independent)."""
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


@dataclass(frozen=True)
class RegionNorm:
    """Rectangle in canvas fractions; ``(x, y)`` is the upper-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        eps = 1e-9
        if not (0 <= self.x <= 1 and 0 <= self.y <= 1 and self.w > 0 and self.h > 0):
            raise ValueError(f"invalid region {self}")
        if self.x + self.w > 1 + eps or self.y + self.h > 1 + eps:
            raise ValueError(f"region {self} leaves the unit square")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class RegionPx:
    """Integer pixel rectangle: origin ``(x0, y0)`` and extents ``(w, h)``."""

    x0: int
    y0: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.h), slice(self.x0, self.x0 + self.w)

    def to_norm(self, width: int, height: int) -> RegionNorm:
        return RegionNorm(self.x0 / width, self.y0 / height, self.w / width, self.h / height)

    def inside(self, width: int, height: int) -> bool:
        return (
            self.x0 >= 0 and self.y0 >= 0 and self.w >= 1 and self.h >= 1
            and self.x0 + self.w <= width and self.y0 + self.h <= height
        )


def round_region(r: RegionNorm, width: int, height: int, min_px: int = 16) -> RegionPx:
    """Round a normalized region to pixels.

    Each coordinate is rounded half-away-from-zero, extents are raised to
    ``min_px`` (and capped at the image size), then the origin is shifted so
    the rectangle lies inside the image.
    """
    if min_px > min(width, height):
        raise ValueError("min_px exceeds image size")

    def axis(pos, ext, size):
        p = round_half_away(pos * size)
        e = round_half_away(ext * size)
        e = min(max(e, min_px), size)
        p = min(max(p, 0), size - e)
        return p, e

    x0, w = axis(r.x, r.w, width)
    y0, h = axis(r.y, r.h, height)
    return RegionPx(x0, y0, w, h)


def crop(img: np.ndarray, r: RegionPx) -> np.ndarray:
    img = np.asarray(img)
    if not r.inside(img.shape[1], img.shape[0]):
        raise BoundsError(f"{r} outside image of size {img.shape[1]}x{img.shape[0]}")
    ys, xs = r.slices()
    return img[ys, xs].copy()


def paste(canvas: np.ndarray, patch: np.ndarray, r: RegionPx) -> np.ndarray:
    canvas = np.asarray(canvas)
    patch = np.asarray(patch)
    if patch.shape[:2] != (r.h, r.w) or patch.shape[2:] != canvas.shape[2:]:
        raise ShapeError(f"patch of shape {patch.shape} does not fit {r}")
    if not r.inside(canvas.shape[1], canvas.shape[0]):
        raise BoundsError(f"{r} outside canvas")
    out = canvas.copy()
    ys, xs = r.slices()
    out[ys, xs] = patch
    return out


def composite(canvas: np.ndarray, stroke_img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``stroke_img * mask + canvas * (1 - mask)``, mask broadcast over channels."""
    canvas = np.asarray(canvas, dtype=np.float64)
    stroke_img = np.asarray(stroke_img, dtype=np.float64)
    m = _mask2d(mask)
    if canvas.shape != stroke_img.shape or canvas.shape[:2] != m.shape:
        raise ShapeError(
            f"composite shapes disagree: {canvas.shape}, {stroke_img.shape}, {m.shape}"
        )
    m = m[:, :, None]
    return stroke_img * m + canvas * (1.0 - m)


def _bilinear_matrix(n_out: int, n_in: int) -> np.ndarray:
    # Half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5, clamped to [0, n_in - 1].
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    return m


def resize_bilinear(img: np.ndarray, w: int, h: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-centred sampling and edge clamping.

    Output pixel ``j`` samples source coordinate ``(j + 0.5) * W_in / w - 0.5``,
    clamped to ``[0, W_in - 1]``, and interpolates linearly between the two
    neighbouring source pixels (same along rows).
    """
    if w < 1 or h < 1:
        raise ValueError("target size must be positive")
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    H, W = img.shape[:2]
    if (H, W) == (h, w):
        out = img.copy()
    else:
        my = _bilinear_matrix(h, H)
        mx = _bilinear_matrix(w, W)
        C = img.shape[2]
        rows = (my @ img.reshape(H, W * C)).reshape(h, W, C)
        out = np.matmul(mx, rows)
    return out[:, :, 0] if squeeze else out
