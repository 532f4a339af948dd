"""Small procedural test images (deterministic, no files needed)."""
from __future__ import annotations

import numpy as np

QUADRANT_COLORS = ((0.9, 0.1, 0.1), (0.1, 0.8, 0.2), (0.1, 0.2, 0.9), (0.9, 0.9, 0.2))


def solid(color=(0.8, 0.3, 0.5), size: int = 128) -> np.ndarray:
    img = np.empty((size, size, 3))
    img[:] = color
    return img


def quadrants(size: int = 128) -> np.ndarray:
    img = np.empty((size, size, 3))
    h = size // 2
    img[:h, :h], img[:h, h:], img[h:, :h], img[h:, h:] = QUADRANT_COLORS
    return img


def circle(size: int = 128, radius: float = 0.3, fg=(0.95, 0.85, 0.3),
           bg=(0.15, 0.2, 0.35)) -> np.ndarray:
    """Anti-aliased disk centred in the frame; ``radius`` is a fraction of the size."""
    c = (np.arange(size) + 0.5) - size / 2
    dist = np.hypot(c[:, None], c[None, :])
    cover = np.clip(radius * size - dist + 0.5, 0.0, 1.0)[:, :, None]
    return cover * np.asarray(fg) + (1.0 - cover) * np.asarray(bg)


def blobs(size: int = 128, n: int = 6, seed: int = 7) -> np.ndarray:
    """Vertical colour gradient with a few soft coloured blobs."""
    rng = np.random.default_rng(seed)
    t = ((np.arange(size) + 0.5) / size)[:, None, None]
    img = (1 - t) * np.array([0.2, 0.35, 0.6]) + t * np.array([0.75, 0.6, 0.4])
    img = np.broadcast_to(img, (size, size, 3)).copy()
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    for _ in range(n):
        cx, cy = rng.uniform(0.15, 0.85, 2) * size
        s = rng.uniform(0.05, 0.15) * size
        w = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))[:, :, None]
        img = w * rng.random(3) + (1 - w) * img
    return np.clip(img, 0.0, 1.0)


def stripes(size: int = 128, period: float = 12.0, angle: float = 0.6,
            a=(0.1, 0.1, 0.4), b=(0.95, 0.6, 0.1)) -> np.ndarray:
    """Sinusoidal diagonal stripes; a texture-like style image."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    s = 0.5 + 0.5 * np.sin(2 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / period)
    s = s[:, :, None]
    return s * np.asarray(b) + (1 - s) * np.asarray(a)


BUNDLED = {"quadrants": quadrants, "circle": circle, "blobs": blobs}


def bundled(name: str, size: int = 128) -> np.ndarray:
    return BUNDLED[name](size)
