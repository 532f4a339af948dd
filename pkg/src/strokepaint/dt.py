"""Windowed, differentiable distance transform of edge maps.

For every pixel the transform takes the (soft) minimum over a ``K x K``
neighbourhood of ``E[k,l] * D[k-i, l-j] + (1 - E[k,l]) * d_max`` where ``D``
holds Euclidean offsets and ``d_max`` is its largest entry.  Neighbours
outside the image count as non-edge, i.e. contribute ``d_max``.

``temp=None`` (the :data:`HARD` sentinel) selects the exact minimum; a
positive temperature selects the softmin
``sum_i softmax(-v / temp)_i * v_i``, evaluated with the minimum subtracted
before exponentiation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imageio import luminance

HARD = None


@dataclass(frozen=True, eq=False)
class DtKernel:
    size: int
    values: np.ndarray
    d_max: float

    @property
    def radius(self) -> int:
        return self.size // 2


def dt_kernel(K: int = 11) -> DtKernel:
    if K < 3 or K % 2 == 0:
        raise ValueError("kernel size must be odd and >= 3")
    r = K // 2
    off = np.arange(-r, r + 1, dtype=np.float64)
    values = np.sqrt(off[:, None] ** 2 + off[None, :] ** 2)
    values.setflags(write=False)
    return DtKernel(K, values, float(np.sqrt(2.0) * r))


def softmin(values, temp: float) -> float:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("softmin of an empty sequence")
    if not temp > 0:
        raise ValueError("temperature must be positive")
    w = np.exp(-(v - v.min()) / temp)
    return float(np.dot(w, v) / w.sum())


def _candidates(E: np.ndarray, kern: DtKernel) -> np.ndarray:
    """``(K*K, H, W)`` stack of candidate distances, one slice per kernel offset."""
    r = kern.radius
    H, W = E.shape
    P = np.pad(E, r)
    out = np.empty((kern.size * kern.size, H, W))
    n = 0
    for di in range(kern.size):
        for dj in range(kern.size):
            e = P[di:di + H, dj:dj + W]
            out[n] = e * kern.values[di, dj] + (1.0 - e) * kern.d_max
            n += 1
    return out


def _edge2d(E) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    if E.ndim == 3 and E.shape[2] == 1:
        E = E[:, :, 0]
    if E.ndim != 2:
        raise ValueError(f"edge map must be single-channel, got {E.shape}")
    return E


def dt_matrix(E, kern: DtKernel, temp: float | None = HARD) -> np.ndarray:
    E = _edge2d(E)
    v = _candidates(E, kern)
    m = v.min(axis=0)
    if temp is HARD:
        return m
    w = np.exp(-(v - m) / temp)
    return np.sum(w * v, axis=0) / np.sum(w, axis=0)


def dt_matrix_vjp(E, kern: DtKernel, temp: float, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(grad_out * dt_matrix(E, kern, temp))`` with respect to ``E``."""
    E = _edge2d(E)
    v = _candidates(E, kern)
    m = v.min(axis=0)
    w = np.exp(-(v - m) / temp)
    w /= w.sum(axis=0)
    S = np.sum(w * v, axis=0)
    dv = w * (1.0 - (v - S) / temp) * grad_out
    r = kern.radius
    H, W = E.shape
    G = np.zeros((H + 2 * r, W + 2 * r))
    n = 0
    for di in range(kern.size):
        for dj in range(kern.size):
            G[di:di + H, dj:dj + W] += dv[n] * (kern.values[di, dj] - kern.d_max)
            n += 1
    return G[r:r + H, r:r + W]


def dt_exact(E) -> np.ndarray:
    """Brute-force Euclidean distance to the nearest pixel with ``E > 0`` (``inf`` if none)."""
    E = _edge2d(E)
    H, W = E.shape
    ey, ex = np.nonzero(E > 0)
    out = np.full((H, W), np.inf)
    if ey.size == 0:
        return out
    yy, xx = np.mgrid[0:H, 0:W]
    yy = yy.ravel().astype(np.float64)
    xx = xx.ravel().astype(np.float64)
    best = np.full(yy.size, np.inf)
    for s in range(0, ey.size, 2048):
        dy = yy[:, None] - ey[None, s:s + 2048]
        dx = xx[:, None] - ex[None, s:s + 2048]
        best = np.minimum(best, np.sqrt(dy * dy + dx * dx).min(axis=1))
    return best.reshape(H, W)


def dt_loss(E_s, E_gt, kern: DtKernel, temp: float | None = 0.3) -> float:
    """Mean over all pixels of ``dt_matrix(E_s) * E_gt``."""
    E_s = _edge2d(E_s)
    E_gt = _edge2d(E_gt)
    if E_s.shape != E_gt.shape:
        raise ValueError("edge maps differ in shape")
    return float(np.mean(dt_matrix(E_s, kern, temp) * E_gt))


def dt_loss_grad(E_s, E_gt, kern: DtKernel, temp: float) -> np.ndarray:
    E_gt = _edge2d(E_gt)
    return dt_matrix_vjp(E_s, kern, temp, E_gt / E_gt.size)


def sobel_xy(lum: np.ndarray):
    """3x3 Sobel responses (x, y) with replicated borders, scaled by 1/8.

    Evaluated separably (smooth, then difference) so that a constant image
    gives exactly zero.
    """
    P = np.pad(lum, 1, mode="edge")
    sm_y = P[:-2] + 2 * P[1:-1] + P[2:]
    sm_x = P[:, :-2] + 2 * P[:, 1:-1] + P[:, 2:]
    sx = sm_y[:, 2:] - sm_y[:, :-2]
    sy = sm_x[2:] - sm_x[:-2]
    return sx / 8.0, sy / 8.0


def extract_edges(img, threshold: float = 0.2) -> np.ndarray:
    """Binary edge map: Sobel magnitude of luminance, divided by its max, ``>= threshold``."""
    gx, gy = sobel_xy(luminance(img))
    mag = np.hypot(gx, gy)
    top = mag.max()
    if top <= 0:
        return np.zeros_like(mag)
    return (mag / top >= threshold).astype(np.float64)
