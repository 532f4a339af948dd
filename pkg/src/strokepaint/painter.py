"""Stroke fitting for one painting region, plus the adversarial loss helpers.

The region patch (target and current canvas) is resampled to a square
``working_res`` patch, ``N`` strokes are initialised from the residual and
refined by Adam on the squared pixel distance, and the result is drawn onto
the full-resolution canvas through the region's outer map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .compositor import residual_map
from .core import RegionPx, crop, resize_bilinear
from .optim import NumericError, adam_minimize
from .rasterizer import (Placement, clamp_params, default_brush, grad_strokes, load_brush,
                         region_clip, region_outer_map, render_forward)


@dataclass(frozen=True)
class PainterConfig:
    strokes_per_step: int = 5
    working_res: int = 128
    iters: int = 150
    step_size: float = 0.02
    sharpness: float = 20.0

    def __post_init__(self):
        if self.strokes_per_step < 1:
            raise ValueError("strokes_per_step must be >= 1")
        if self.working_res < 32:
            raise ValueError("working_res must be >= 32")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.sharpness > 0:
            raise ValueError("sharpness must be positive")


def pixel_loss(I, C) -> float:
    d = np.asarray(I, dtype=np.float64) - np.asarray(C, dtype=np.float64)
    return float(np.sum(d * d))


def init_strokes(target_patch, canvas_patch, n: int, rng: np.random.Generator) -> np.ndarray:
    """Initial ``(n, 8)`` parameters for a square patch.

    Centres are drawn in proportion to the residual (uniformly when it is
    zero), colours are read from the target at the centre, sizes shrink
    linearly from 0.6 to 0.15 over the stroke index and angles are uniform.
    """
    target_patch = np.asarray(target_patch, dtype=np.float64)
    H, W = target_patch.shape[:2]
    res = residual_map(target_patch, canvas_patch).ravel()
    total = res.sum()
    p = res / total if total > 0 else None
    idx = rng.choice(res.size, size=n, p=p)
    rows, cols = np.divmod(idx, W)
    out = np.empty((n, 8))
    out[:, 0] = (cols + 0.5) / W
    out[:, 1] = (rows + 0.5) / H
    sizes = np.linspace(0.6, 0.15, n) if n > 1 else np.array([0.6])
    out[:, 2] = sizes
    out[:, 3] = sizes
    out[:, 4] = rng.random(n)
    colors = target_patch[rows, cols]
    if colors.shape[1] == 1:
        colors = np.repeat(colors, 3, axis=1)
    out[:, 5:8] = colors
    return clamp_params(out)


def optimize_strokes(target_patch, canvas_patch, init: np.ndarray, cfg: PainterConfig,
                     brush=None):
    """Fit stroke parameters to ``target_patch`` painted over ``canvas_patch``.

    Returns the lowest-loss iterate and its squared pixel loss.
    """
    target_patch = np.asarray(target_patch, dtype=np.float64)
    canvas_patch = np.asarray(canvas_patch, dtype=np.float64)
    if target_patch.shape != canvas_patch.shape:
        raise ValueError("target and canvas patches differ in shape")
    brush = default_brush() if brush is None else load_brush(brush)
    init = np.asarray(init, dtype=np.float64).reshape(-1, 8)
    n = len(init)

    def fg(flat):
        g, loss = grad_strokes(flat.reshape(n, 8), None, canvas_patch, target_patch,
                               cfg.sharpness, brush, return_loss=True)
        return loss, g.ravel()

    x, loss = adam_minimize(fg, init.ravel(), cfg.iters, cfg.step_size,
                            clamp=lambda a: clamp_params(a.reshape(n, 8)).ravel())
    return x.reshape(n, 8), loss


def apply_strokes(canvas: np.ndarray, strokes: np.ndarray, region, frame: int, k: float,
                  brush) -> np.ndarray:
    """Draw patch-normalized strokes onto the canvas, clipped to the (normalized) region."""
    H, W = canvas.shape[:2]
    pl = Placement(region_outer_map(region, W, H, frame), (float(frame), float(frame)),
                   region_clip(region, W, H))
    out, _ = render_forward(strokes, pl, canvas, k, brush, tape=False)
    return out


class RegionPainter:
    """Paints ``n`` strokes into a pixel region of the canvas."""

    def __init__(self, cfg: PainterConfig | None = None, brush=None, final_sharpness: float = 50.0):
        self.cfg = cfg or PainterConfig()
        self.brush = default_brush() if brush is None else load_brush(brush)
        self.final_sharpness = final_sharpness

    def __call__(self, I, C, region: RegionPx, n: int, rng: np.random.Generator):
        P = self.cfg.working_res
        H, W = C.shape[:2]
        tp = resize_bilinear(crop(I, region), P, P)
        cp = resize_bilinear(crop(C, region), P, P)
        init = init_strokes(tp, cp, n, rng)
        strokes, _ = optimize_strokes(tp, cp, init, self.cfg, self.brush)
        norm = region.to_norm(W, H)
        return apply_strokes(C, strokes, norm, P, self.final_sharpness, self.brush), strokes


# ------------------------------------------------------------ adversarial terms

@dataclass(frozen=True)
class Critic:
    """Scalar critic ``fn(image)`` with its input gradient ``grad(image)``."""

    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return float(self.fn(x))


def wgan_gp_loss(critic: Critic, fake, real, u: float, gp_coeff: float = 10.0) -> float:
    """``D(fake) - D(real) - gp_coeff * (||grad D(x_hat)|| - 1)^2``, ``x_hat = u fake + (1-u) real``."""
    fake = np.asarray(fake, dtype=np.float64)
    real = np.asarray(real, dtype=np.float64)
    if fake.shape != real.shape:
        raise ValueError("fake and real images differ in shape")
    if not 0.0 <= u <= 1.0:
        raise ValueError("interpolation weight must lie in [0, 1]")
    x_hat = u * fake + (1.0 - u) * real
    g = np.asarray(critic.grad(x_hat), dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericError("critic gradient is not finite")
    gnorm = math.sqrt(float(np.sum(g * g)))
    return critic(fake) - critic(real) - gp_coeff * (gnorm - 1.0) ** 2


def adaptive_gamma(pixel_loss_val: float, adv_loss_val: float, balance: float = 1.0) -> float:
    return balance * abs(pixel_loss_val) / max(abs(adv_loss_val), 1e-12)


def total_loss(pixel_loss_val: float, adv_loss_val: float, balance: float = 1.0) -> float:
    return pixel_loss_val + adaptive_gamma(pixel_loss_val, adv_loss_val, balance) * adv_loss_val
