"""Choosing where to paint next.

Square windows at several scales are scored by the residual error they
contain (relative to ``||I||^2``), the best ``top_k`` are handed to the
painter, and the candidate with the largest measured phasic reward wins.
A step whose best reward is not positive leaves the canvas untouched.

Window sums come from an integral image over a fixed-point copy of the
residual (``round(r * 2**32)`` as int64), so sums are exact and equal
scores really compare equal; ties go to the smaller window, then to the
row-major first origin.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import RegionPx
from .reward import RewardConfig, reward_phasic

FIXED_POINT = float(2**32)


@dataclass(frozen=True)
class CompositorConfig:
    scales: tuple[float, ...] = (1.0, 0.5, 0.25, 0.125)
    stride: float = 0.5
    top_k: int = 4
    min_region_px: int = 16

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if not self.scales or any(not 0 < s <= 1 for s in self.scales):
            raise ValueError("scales must lie in (0, 1]")
        if not 0 < self.stride <= 1:
            raise ValueError("stride must lie in (0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.min_region_px < 1:
            raise ValueError("min_region_px must be >= 1")


@dataclass(frozen=True)
class Candidate:
    region: RegionPx
    score: float
    mass: int  # fixed-point residual sum; the exact sort key


@dataclass
class CandidateSet:
    candidates: list[Candidate]
    sides: tuple[int, ...]

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]


def residual_map(I, C) -> np.ndarray:
    """Per-pixel squared error summed over channels, shape ``(H, W)``."""
    d = np.asarray(I, dtype=np.float64) - np.asarray(C, dtype=np.float64)
    return np.sum(d * d, axis=2)


def quantize_residual(residual: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(residual, dtype=np.float64) * FIXED_POINT).astype(np.int64)


def _positions(size: int, side: int, stride: int) -> list[int]:
    pos = list(range(0, size - side + 1, stride))
    if pos[-1] != size - side:
        pos.append(size - side)
    return pos


def propose_regions(residual: np.ndarray, cfg: CompositorConfig | None = None,
                    norm_sq: float = 1.0) -> CandidateSet:
    """Score every multiscale square window by the residual mass it holds."""
    cfg = cfg or CompositorConfig()
    residual = np.asarray(residual, dtype=np.float64)
    if residual.size and residual.min() < 0:
        raise ValueError("residual must be non-negative")
    H, W = residual.shape
    q = quantize_residual(residual)
    ii = np.zeros((H + 1, W + 1), dtype=np.int64)
    ii[1:, 1:] = q.cumsum(axis=0).cumsum(axis=1)

    sides = []
    for s in cfg.scales:
        side = int(s * min(W, H))
        if side >= cfg.min_region_px and side not in sides:
            sides.append(side)
    if not sides:
        sides.append(min(W, H, max(cfg.min_region_px, 1)))

    cands = []
    for side in sides:
        stride = max(1, int(side * cfg.stride))
        ys = np.array(_positions(H, side, stride))
        xs = np.array(_positions(W, side, stride))
        sums = (ii[ys[:, None] + side, xs[None, :] + side] - ii[ys[:, None], xs[None, :] + side]
                - ii[ys[:, None] + side, xs[None, :]] + ii[ys[:, None], xs[None, :]])
        for a, y0 in enumerate(ys):
            for b, x0 in enumerate(xs):
                mass = int(sums[a, b])
                cands.append(Candidate(RegionPx(int(x0), int(y0), side, side),
                                       mass / FIXED_POINT / norm_sq, mass))
    cands.sort(key=lambda c: (-c.mass, c.region.area, c.region.y0, c.region.x0))
    return CandidateSet(cands, tuple(sides))


@dataclass
class StepResult:
    canvas: np.ndarray
    region: RegionPx | None
    strokes: np.ndarray | None
    reward: float
    improved: bool
    converged: bool = False
    tried: list = field(default_factory=list)


Painter = Callable[..., tuple]


def select_and_paint(I, C_t, painter: Painter, cfg: CompositorConfig | None = None,
                     rng: np.random.Generator | None = None, reward_cfg: RewardConfig | None = None,
                     n_strokes: int | None = None) -> StepResult:
    """Paint the ``top_k`` candidate windows and keep the one with the best phasic reward.

    ``painter(I, C, region, n, rng)`` must return ``(new_canvas, strokes)``.
    Each candidate gets its own child generator spawned from ``rng``, so the
    outcome does not depend on evaluation order.
    """
    cfg = cfg or CompositorConfig()
    reward_cfg = reward_cfg or RewardConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    I = np.asarray(I, dtype=np.float64)
    C_t = np.asarray(C_t, dtype=np.float64)
    if I.shape != C_t.shape:
        raise ValueError("target and canvas differ in shape")
    n = n_strokes if n_strokes is not None else getattr(getattr(painter, "cfg", None),
                                                        "strokes_per_step", 5)
    norm_sq = float(np.sum(I * I))
    cset = propose_regions(residual_map(I, C_t), cfg, norm_sq)
    if not cset.candidates or cset[0].mass == 0:
        return StepResult(C_t, None, None, 0.0, improved=False, converged=True)

    top = [c for c in cset.candidates[:cfg.top_k] if c.mass > 0]
    children = rng.spawn(len(top))
    best = None
    tried = []
    for cand, child in zip(top, children):
        C_next, strokes = painter(I, C_t, cand.region, n, child)
        r = reward_phasic(I, C_t, C_next, reward_cfg)
        tried.append((cand.region, r))
        if best is None or r > best[0]:
            best = (r, cand.region, C_next, strokes)
    r, region, C_next, strokes = best
    if not r > 0:
        return StepResult(C_t, None, None, r, improved=False, tried=tried)
    return StepResult(C_next, region, strokes, r, improved=True, tried=tried)
