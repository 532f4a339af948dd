"""Stroke-space style transfer with a distance-transform edge term.

The strokes of a painted log are optimized (Adam, best iterate) against::

    w_style * style_loss(img, style) + w_content * content_loss(img, content)
        + w_dt * dt_loss(E_s, extract_edges(content))

where ``img`` is the log re-rendered on its own canvas and ``E_s`` is the
pixelwise max of the strokes' soft edge maps.  All gradients are analytic:
image gradients come from the feature extractor's ``vjp`` and flow into the
strokes through the rasterizer, edge gradients go through the DT softmin and
the rasterizer's edge maps.

Feature extractors return a list of ``(h, w, c)`` layers.  The builtin
:class:`PyramidExtractor` builds a 3-level binomial pyramid and at every
level emits ``(R, G, B, |grad|, gx, gy)`` with ``gx, gy`` the Sobel responses
of luminance (scaled by 1/8) and ``|grad| = sqrt(gx^2 + gy^2 + e^2) - e`` so
the magnitude stays differentiable at zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .core import ShapeError
from .dt import dt_kernel, dt_loss, dt_loss_grad, extract_edges
from .optim import adam_minimize
from .pipeline import StrokeLog
from .rasterizer import (Placement, clamp_params, edge_backward, edge_forward, load_brush,
                         region_clip, region_outer_map, render_backward, render_forward)

LUMA = np.array([0.299, 0.587, 0.114])


class FeatureExtractor(Protocol):
    def features(self, img: np.ndarray) -> list[np.ndarray]: ...

    def vjp(self, img: np.ndarray, grads: Sequence[np.ndarray | None]) -> np.ndarray:
        """Gradient w.r.t. ``img`` of ``sum_l <grads[l], features(img)[l]>`` (``None`` = zero)."""
        ...


def _replicate_conv_matrix(n: int, taps: Sequence[float]) -> np.ndarray:
    """``(n, n)`` matrix applying a centred 1-D filter with replicated borders."""
    r = len(taps) // 2
    m = np.zeros((n, n))
    for i in range(n):
        for o, t in enumerate(taps):
            m[i, min(max(i + o - r, 0), n - 1)] += t
    return m


_BINOMIAL = (1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16)


class PyramidExtractor:
    """Binomial-pyramid colour and gradient features (see module docstring)."""

    def __init__(self, levels: int = 3, content_layer: int = 1, eps: float = 1e-3):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        if not 0 <= content_layer < levels:
            raise ValueError("content_layer must index a pyramid level")
        self.levels = levels
        self.content_layer = content_layer
        self.eps = eps
        self._mats: dict = {}

    def _matrices(self, n: int):
        if n not in self._mats:
            smooth = _replicate_conv_matrix(n, (0.25, 0.5, 0.25))
            diff = _replicate_conv_matrix(n, (-0.5, 0.0, 0.5))
            down = _replicate_conv_matrix(n, _BINOMIAL)[::2].copy()
            self._mats[n] = (smooth, diff, down)
        return self._mats[n]

    def _sizes(self, h: int, w: int):
        sizes = [(h, w)]
        for _ in range(1, self.levels):
            h, w = (h + 1) // 2, (w + 1) // 2
            sizes.append((h, w))
        return sizes

    def _forward(self, img):
        img = np.asarray(img, dtype=np.float64)
        if img.shape[2] == 1:
            img = np.repeat(img, 3, axis=2)
        levels, caches = [], []
        cur = img
        for lev in range(self.levels):
            if lev > 0:
                _, _, dy = self._matrices(cur.shape[0])
                _, _, dx = self._matrices(cur.shape[1])
                cur = np.stack([dy @ cur[:, :, c] @ dx.T for c in range(3)], axis=2)
            h, w = cur.shape[:2]
            sy, ddy, _ = self._matrices(h)
            sx, ddx, _ = self._matrices(w)
            lum = cur @ LUMA
            gx = sy @ lum @ ddx.T
            gy = ddy @ lum @ sx.T
            root = np.sqrt(gx * gx + gy * gy + self.eps**2)
            mag = root - self.eps
            levels.append(np.concatenate([cur, np.stack([mag, gx, gy], axis=2)], axis=2))
            caches.append((gx, gy, root))
        return levels, caches, img

    def features(self, img: np.ndarray) -> list[np.ndarray]:
        return self._forward(img)[0]

    def vjp(self, img: np.ndarray, grads) -> np.ndarray:
        levels, caches, full = self._forward(img)
        up = None  # gradient flowing from the next-coarser level
        for lev in range(self.levels - 1, -1, -1):
            h, w = levels[lev].shape[:2]
            gimg = np.zeros((h, w, 3)) if up is None else up
            g = grads[lev] if lev < len(grads) else None
            if g is not None:
                g = np.asarray(g, dtype=np.float64)
                gx, gy, root = caches[lev]
                sy, ddy, _ = self._matrices(h)
                sx, ddx, _ = self._matrices(w)
                ggx = g[:, :, 4] + g[:, :, 3] * gx / root
                ggy = g[:, :, 5] + g[:, :, 3] * gy / root
                glum = sy.T @ ggx @ ddx + ddy.T @ ggy @ sx
                gimg = gimg + g[:, :, :3] + glum[:, :, None] * LUMA
            if lev > 0:
                ph, pw = levels[lev - 1].shape[:2]
                _, _, dy = self._matrices(ph)
                _, _, dx = self._matrices(pw)
                up = np.stack([dy.T @ gimg[:, :, c] @ dx for c in range(3)], axis=2)
            else:
                up = gimg
        if np.asarray(img).shape[2] == 1:
            return up.sum(axis=2, keepdims=True)
        return up


def _flat(F: np.ndarray) -> np.ndarray:
    return F.reshape(-1, F.shape[-1])


def gram(F: np.ndarray) -> np.ndarray:
    """Channel inner products averaged over positions: ``F^T F / M``."""
    X = _flat(F)
    return X.T @ X / X.shape[0]


def _style_terms(feats, style_feats):
    loss = 0.0
    grads = []
    for F, S in zip(feats, style_feats):
        X = _flat(F)
        c = X.shape[1]
        D = gram(F) - gram(S)
        loss += float(np.sum(D * D)) / (4.0 * c * c)
        grads.append((X @ D / (c * c * X.shape[0])).reshape(F.shape))
    return loss, grads


def style_loss(img, style_img, extractor: FeatureExtractor | None = None) -> float:
    """Sum over layers of ``||gram(F) - gram(S)||^2 / (4 c^2)``."""
    ex = extractor or PyramidExtractor()
    return _style_terms(ex.features(img), ex.features(style_img))[0]


def _content_layer(ex) -> int:
    return getattr(ex, "content_layer", 0)


def content_loss(img, content_img, extractor: FeatureExtractor | None = None) -> float:
    """Mean squared feature difference on the extractor's content layer."""
    ex = extractor or PyramidExtractor()
    li = _content_layer(ex)
    d = ex.features(img)[li] - ex.features(content_img)[li]
    return float(np.mean(d * d))


def log_placements(log: StrokeLog, width: int | None = None, height: int | None = None):
    """Per-stroke placements and the concatenated ``(N, 8)`` parameters of a log."""
    W = width or log.header.width
    H = height or log.header.height
    P = log.header.frame
    pls, arrays = [], []
    for s in log.steps:
        pl = Placement(region_outer_map(s.region, W, H, P), (float(P), float(P)),
                       region_clip(s.region, W, H))
        pls.extend([pl] * s.n_strokes)
        arrays.append(s.array)
    params = np.concatenate(arrays) if arrays else np.zeros((0, 8))
    return params, pls


def render_edge_map(log: StrokeLog, width: int | None = None, height: int | None = None,
                    k: float | None = None) -> np.ndarray:
    """Pixelwise max of all strokes' soft edge maps (the earlier stroke owns ties)."""
    W = width or log.header.width
    H = height or log.header.height
    params, pls = log_placements(log, W, H)
    k = log.header.sharpness if k is None else k
    E, _ = edge_forward(params, pls, W, H, k, load_brush(log.header.brush_id), tape=False)
    return E


@dataclass(frozen=True)
class StyleWeights:
    style: float = 1.0
    content: float = 0.05
    dt: float = 0.5
    iters: int = 100
    step_size: float = 0.01
    kernel: int = 11
    temp: float = 0.3
    sharpness: float | None = None  # None: the log's own sharpness

    def __post_init__(self):
        if min(self.style, self.content, self.dt) < 0:
            raise ValueError("loss weights must be non-negative")
        if max(self.style, self.content, self.dt) <= 0:
            raise ValueError("at least one loss weight must be positive")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.temp > 0:
            raise ValueError("temp must be positive")


class StylizeObjective:
    """Weighted stylization loss of a log's strokes and its gradient."""

    def __init__(self, log: StrokeLog, content, style, weights: StyleWeights | None = None,
                 extractor: FeatureExtractor | None = None):
        self.log = log
        self.w = weights or StyleWeights()
        self.ex = extractor or PyramidExtractor()
        h = log.header
        content = np.asarray(content, dtype=np.float64)
        if content.shape[:2] != (h.height, h.width):
            raise ShapeError(f"content image is {content.shape[1]}x{content.shape[0]}, "
                             f"log canvas is {h.width}x{h.height}")
        self.brush = load_brush(h.brush_id)
        self.k = h.sharpness if self.w.sharpness is None else self.w.sharpness
        self.x0, self.placements = log_placements(log)
        self.canvas0 = np.empty((h.height, h.width, len(h.init_color)))
        self.canvas0[:] = np.asarray(h.init_color)
        self.kern = dt_kernel(self.w.kernel)
        self.edges_gt = extract_edges(content)
        li = _content_layer(self.ex)
        self.content_feat = self.ex.features(content)[li] if self.w.content > 0 else None
        self.style_feats = self.ex.features(np.asarray(style, dtype=np.float64)) \
            if self.w.style > 0 else None

    def render(self, params) -> np.ndarray:
        out, _ = render_forward(params, self.placements, self.canvas0, self.k, self.brush,
                                tape=False)
        return out

    def terms(self, params) -> dict[str, float]:
        """Unweighted style, content and DT losses."""
        img = self.render(params)
        H, W = img.shape[:2]
        E, _ = edge_forward(params, self.placements, W, H, self.k, self.brush, tape=False)
        out = {"dt": dt_loss(E, self.edges_gt, self.kern, self.w.temp)}
        feats = self.ex.features(img)
        if self.style_feats is not None:
            out["style"] = _style_terms(feats, self.style_feats)[0]
        if self.content_feat is not None:
            d = feats[_content_layer(self.ex)] - self.content_feat
            out["content"] = float(np.mean(d * d))
        return out

    def __call__(self, flat: np.ndarray):
        w = self.w
        params = flat.reshape(-1, 8)
        img, tape = render_forward(params, self.placements, self.canvas0, self.k, self.brush)
        H, W = img.shape[:2]
        loss = 0.0
        grad = np.zeros_like(params)
        if w.style > 0 or w.content > 0:
            feats = self.ex.features(img)
            fgrads = [None] * len(feats)
            if w.style > 0:
                s, sg = _style_terms(feats, self.style_feats)
                loss += w.style * s
                fgrads = [w.style * g for g in sg]
            if w.content > 0:
                li = _content_layer(self.ex)
                d = feats[li] - self.content_feat
                loss += w.content * float(np.mean(d * d))
                gc = w.content * 2.0 * d / d.size
                fgrads[li] = gc if fgrads[li] is None else fgrads[li] + gc
            gimg = self.ex.vjp(img, fgrads)
            grad += render_backward(tape, gimg)
        if w.dt > 0:
            E, etape = edge_forward(params, self.placements, W, H, self.k, self.brush)
            loss += w.dt * dt_loss(E, self.edges_gt, self.kern, w.temp)
            gE = dt_loss_grad(E, self.edges_gt, self.kern, w.temp)
            grad += w.dt * edge_backward(etape, gE)
        return loss, grad.ravel()


def stylize_strokes(log: StrokeLog, content_img, style_img, weights: StyleWeights | None = None,
                    extractor: FeatureExtractor | None = None) -> StrokeLog:
    """Optimize every stroke of ``log``; returns a log with the same steps and stroke counts.

    Step regions, the header and the recorded painting distances are kept as
    they were.  The procedure is deterministic, so no generator is taken.
    """
    weights = weights or StyleWeights()
    obj = StylizeObjective(log, content_img, style_img, weights, extractor)
    if weights.iters == 0 or len(obj.x0) == 0:
        return StrokeLog(log.header, list(log.steps))
    n = len(obj.x0)
    x, _ = adam_minimize(obj, obj.x0.ravel(), weights.iters, weights.step_size,
                         clamp=lambda a: clamp_params(a.reshape(n, 8)).ravel())
    x = x.reshape(n, 8)
    counts = np.cumsum([s.n_strokes for s in log.steps])[:-1]
    return log.with_strokes(np.split(x, counts))
