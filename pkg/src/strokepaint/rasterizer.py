"""Differentiable soft rasterizer for 8-parameter brushstrokes.

A stroke ``(x, y, w, h, theta, r, g, b)`` places a square brush texture,
scaled to ``w*fw`` by ``h*fh`` pixels, rotated by ``theta*pi`` and centred at
``(x*fw, y*fh)`` inside a frame of ``fw x fh`` pixels.  A second affine map
(the *outer* map) carries frame pixels onto the output raster, which is how
strokes fitted on a resampled region patch are drawn onto the full canvas.

Pixel ``(row i, col j)`` has its centre at ``(j + 0.5, i + 0.5)``.  Brush
texel ``(m, n)`` of an ``S x S`` texture sits at brush coordinate
``((n + 0.5) / S - 0.5, (m + 0.5) / S - 0.5)``; samples are bilinear with
zeros outside the grid.

The soft mask is ``(sig(k (a - 1/2)) - sig(-k/2)) / (sig(k/2) - sig(-k/2))``
for sampled alpha ``a``, so alpha 0 maps to 0 and alpha 1 maps to 1.  Because
alpha is exactly zero away from the brush support every stroke only touches a
bounded window, and all work below is done inside that window.

Gradients are reverse-mode products written out by hand (compositing,
sigmoid, bilinear sample, inverse affine map).  Reductions are plain numpy
sums over fixed-shape arrays and therefore deterministic.
"""
from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RegionPx, resize_bilinear

PARAM_NAMES = ("x", "y", "w", "h", "theta", "r", "g", "b")
W_MIN = 0.01
H_MIN = 0.01
LOWER = np.array([0.0, 0.0, W_MIN, H_MIN, 0.0, 0.0, 0.0, 0.0])
UPPER = np.ones(8)

BRUSH_SIZE = 128
BRUSH_DIR_ENV = "STROKEPAINT_BRUSH_DIR"
BUILTIN_BRUSHES = ("oval", "rect-soft")


def clamp_params(params: np.ndarray) -> np.ndarray:
    """Clip an ``(..., 8)`` parameter array into the valid stroke ranges."""
    return np.clip(params, LOWER, UPPER)


@dataclass(frozen=True)
class StrokeParams:
    x: float
    y: float
    w: float
    h: float
    theta: float
    r: float
    g: float
    b: float

    def __post_init__(self):
        a = self.to_array()
        if not np.all(np.isfinite(a)) or np.any(a < LOWER) or np.any(a > UPPER):
            raise ValueError(f"stroke parameters out of range: {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h, self.theta, self.r, self.g, self.b])

    @classmethod
    def from_array(cls, a, clamp: bool = False) -> "StrokeParams":
        a = np.asarray(a, dtype=np.float64)
        if clamp:
            a = clamp_params(a)
        return cls(*(float(v) for v in a))

    @property
    def color(self) -> tuple[float, float, float]:
        return (self.r, self.g, self.b)


@dataclass(frozen=True)
class AffineMap:
    """``(X, Y) = (a x + b y + tx, c x + d y + ty)``."""

    a: float
    b: float
    tx: float
    c: float
    d: float
    ty: float

    def __post_init__(self):
        if not abs(self.a * self.d - self.b * self.c) > 0:
            raise ValueError("affine map is singular")

    @classmethod
    def identity(cls) -> "AffineMap":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @classmethod
    def scale_translate(cls, sx: float, sy: float, tx: float = 0.0, ty: float = 0.0) -> "AffineMap":
        return cls(sx, 0.0, tx, 0.0, sy, ty)

    @property
    def linear(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def offset(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """Map applying ``inner`` first, then ``self``."""
        L = self.linear @ inner.linear
        t = self.linear @ inner.offset + self.offset
        return AffineMap(L[0, 0], L[0, 1], t[0], L[1, 0], L[1, 1], t[1])

    def inverse(self) -> "AffineMap":
        det = self.det
        a, b, c, d = self.d / det, -self.b / det, -self.c / det, self.a / det
        return AffineMap(a, b, -(a * self.tx + b * self.ty), c, d, -(c * self.tx + d * self.ty))

    def apply(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty


IDENTITY = AffineMap.identity()


@dataclass(frozen=True, eq=False)
class BrushTexture:
    """Square single-channel stroke footprint with ``max(alpha) == 1``.

    ``full_rotation`` widens the theta range from half a turn to a full turn;
    it is set for user textures, which need not be point-symmetric.
    """

    alpha: np.ndarray
    name: str
    full_rotation: bool = False
    _padded: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
            raise ValueError("brush alpha must be a square 2-D grid")
        if not alpha.max() > 0:
            raise ValueError(f"brush {self.name!r} has an all-zero alpha")
        alpha = np.clip(alpha, 0.0, None)
        alpha = alpha / alpha.max()
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        # two zero texels before and three after: clipped coordinates in
        # [-2, S + 1] then interpolate between zeros (value and slope 0)
        object.__setattr__(self, "_padded", np.pad(alpha, ((2, 3), (2, 3))))

    @property
    def size(self) -> int:
        return self.alpha.shape[0]

    @property
    def rotation_scale(self) -> float:
        return 2.0 * math.pi if self.full_rotation else math.pi

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.alpha.tobytes()).hexdigest()

    def sample(self, gu: np.ndarray, gv: np.ndarray, with_grad: bool = False):
        """Bilinear sample at texel coordinates; returns ``a`` (and ``da/dgu, da/dgv``)."""
        S = self.size
        gu = np.clip(gu, -2.0, float(S + 1))
        gv = np.clip(gv, -2.0, float(S + 1))
        j0 = np.floor(gu)
        i0 = np.floor(gv)
        fu = gu - j0
        fv = gv - i0
        j0 = j0.astype(np.intp) + 2
        i0 = i0.astype(np.intp) + 2
        P = self._padded
        a00 = P[i0, j0]
        a01 = P[i0, j0 + 1]
        a10 = P[i0 + 1, j0]
        a11 = P[i0 + 1, j0 + 1]
        top = a00 + fu * (a01 - a00)
        bot = a10 + fu * (a11 - a10)
        a = top + fv * (bot - top)
        if not with_grad:
            return a
        dgu = (1.0 - fv) * (a01 - a00) + fv * (a11 - a10)
        dgv = bot - top
        return a, dgu, dgv


def _falloff_alpha(r: np.ndarray, band: float = 0.15) -> np.ndarray:
    t = np.clip((1.0 - r) / band, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def builtin_brush(name: str, size: int = BRUSH_SIZE) -> BrushTexture:
    c = (np.arange(size) + 0.5) / size - 0.5
    u, v = np.meshgrid(2.0 * np.abs(c), 2.0 * np.abs(c))
    if name == "oval":
        r = (u**4 + v**4) ** 0.25
    elif name == "rect-soft":
        r = np.maximum(u, v)
    else:
        raise KeyError(f"unknown builtin brush {name!r}; choose from {BUILTIN_BRUSHES}")
    return BrushTexture(_falloff_alpha(r), name)


def load_brush(source) -> BrushTexture:
    """Return a builtin brush by id or load a grayscale/RGB image as brush alpha.

    Bare names that are not builtins are looked up as ``<name>.png`` in the
    directory named by ``$STROKEPAINT_BRUSH_DIR``.
    """
    if isinstance(source, BrushTexture):
        return source
    if str(source) in BUILTIN_BRUSHES:
        return builtin_brush(str(source))
    path = Path(source)
    if not path.exists() and os.environ.get(BRUSH_DIR_ENV):
        cand = Path(os.environ[BRUSH_DIR_ENV]) / f"{source}.png"
        if cand.exists():
            path = cand
    from .imageio import read_image

    img = read_image(path, channels=1)[:, :, 0]
    if not img.max() > 0:
        raise ValueError(f"brush image {path} is all black")
    n = max(img.shape)
    if img.shape != (n, n):
        img = resize_bilinear(img, n, n)
    return BrushTexture(img, path.stem, full_rotation=True)


_DEFAULT_BRUSH: BrushTexture | None = None


def default_brush() -> BrushTexture:
    global _DEFAULT_BRUSH
    if _DEFAULT_BRUSH is None:
        _DEFAULT_BRUSH = builtin_brush("oval")
    return _DEFAULT_BRUSH


def _brush(brush) -> BrushTexture:
    return default_brush() if brush is None else load_brush(brush)


def stroke_affine(s, frame_w: float, frame_h: float, brush: BrushTexture | None = None) -> AffineMap:
    """Map brush coordinates in ``[-1/2, 1/2]^2`` onto frame pixels for stroke ``s``."""
    p = s.to_array() if isinstance(s, StrokeParams) else np.asarray(s, dtype=np.float64)
    phi = p[4] * _brush(brush).rotation_scale
    cs, sn = math.cos(phi), math.sin(phi)
    sx, sy = p[2] * frame_w, p[3] * frame_h
    return AffineMap(cs * sx, -sn * sy, p[0] * frame_w, sn * sx, cs * sy, p[1] * frame_h)


def region_outer_map(region, width: int, height: int, frame: int) -> AffineMap:
    """Outer map from a ``frame x frame`` patch onto ``region`` of a ``width x height`` canvas."""
    x, y, w, h = region.as_tuple() if hasattr(region, "as_tuple") else region
    return AffineMap.scale_translate(w * width / frame, h * height / frame, x * width, y * height)


def region_clip(region, width: int, height: int) -> RegionPx:
    """Pixels of a ``width x height`` raster whose centres fall in a normalized region."""
    x, y, w, h = region.as_tuple() if hasattr(region, "as_tuple") else region
    c0 = max(0, math.ceil(x * width - 0.5))
    c1 = min(width, math.ceil((x + w) * width - 0.5))
    r0 = max(0, math.ceil(y * height - 0.5))
    r1 = min(height, math.ceil((y + h) * height - 0.5))
    return RegionPx(c0, r0, max(c1 - c0, 0), max(r1 - r0, 0))


@dataclass(frozen=True)
class Placement:
    """Where a group of strokes lands: outer map, normalization frame and clip rectangle."""

    outer: AffineMap = IDENTITY
    frame: tuple[float, float] | None = None
    clip: RegionPx | None = None

    def frame_size(self, width: int, height: int) -> tuple[float, float]:
        return self.frame if self.frame is not None else (float(width), float(height))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Footprint:
    """Soft mask of one stroke inside its pixel window, with optional Jacobian.

    ``jac`` holds d(mask)/d(x, y, w, h, theta) for the pixels listed in
    ``active`` (flat window indices); every other window pixel has zero
    geometric derivative.
    """

    __slots__ = ("r0", "r1", "c0", "c1", "mask", "active", "jac")

    def __init__(self, r0, r1, c0, c1, mask, active=None, jac=None):
        self.r0, self.r1, self.c0, self.c1 = r0, r1, c0, c1
        self.mask = mask
        self.active = active
        self.jac = jac

    @property
    def slices(self):
        return slice(self.r0, self.r1), slice(self.c0, self.c1)

    def jac_full(self) -> np.ndarray:
        out = np.zeros((5, self.mask.size))
        if self.active is not None:
            out[:, self.active] = self.jac
        return out.reshape((5,) + self.mask.shape)


def footprint(p: np.ndarray, placement: Placement, width: int, height: int, k: float,
              brush: BrushTexture, jac: bool = False, pad: int = 0,
              clip: RegionPx | None = None) -> Footprint | None:
    """Rasterize the soft mask of parameter vector ``p`` over its support window.

    ``pad`` dilates the window (used for central differences of the mask);
    ``clip`` limits it.  Returns ``None`` when the window is empty.
    """
    fw, fh = placement.frame_size(width, height)
    full = placement.outer.compose(stroke_affine(p, fw, fh, brush))
    S = brush.size
    e = 0.5 + 1.0 / S
    cx, cy = full.apply([-e, e, e, -e], [-e, -e, e, e])
    c0 = math.ceil(cx.min() - 0.5) - 1 - pad
    c1 = math.floor(cx.max() - 0.5) + 2 + pad
    r0 = math.ceil(cy.min() - 0.5) - 1 - pad
    r1 = math.floor(cy.max() - 0.5) + 2 + pad
    lo_c, hi_c, lo_r, hi_r = 0, width, 0, height
    if clip is not None:
        lo_c, hi_c = clip.x0, clip.x0 + clip.w
        lo_r, hi_r = clip.y0, clip.y0 + clip.h
    c0, c1 = max(c0, lo_c), min(c1, hi_c)
    r0, r1 = max(r0, lo_r), min(r1, hi_r)
    if c0 >= c1 or r0 >= r1:
        return None

    inv = placement.outer.inverse()
    px, py = np.meshgrid(np.arange(c0, c1) + 0.5, np.arange(r0, r1) + 0.5)
    fx, fy = inv.apply(px, py)
    x, y, w, h, th = p[0], p[1], p[2], p[3], p[4]
    rs = brush.rotation_scale
    phi = th * rs
    cs, sn = math.cos(phi), math.sin(phi)
    qx = fx - x * fw
    qy = fy - y * fh
    sw, sh = w * fw, h * fh
    u = (cs * qx + sn * qy) / sw
    v = (cs * qy - sn * qx) / sh
    gu = (u + 0.5) * S - 0.5
    gv = (v + 0.5) * S - 0.5

    s0 = _sigmoid(-0.5 * k)
    span = _sigmoid(0.5 * k) - s0
    if not jac:
        a = brush.sample(gu, gv)
        mask = np.clip((_sigmoid(k * (a - 0.5)) - s0) / span, 0.0, 1.0)
        return Footprint(r0, r1, c0, c1, mask)

    a, dgu, dgv = brush.sample(gu, gv, with_grad=True)
    sig = _sigmoid(k * (a - 0.5))
    mask = np.clip((sig - s0) / span, 0.0, 1.0)
    dmda = k * sig * (1.0 - sig) / span
    active = np.flatnonzero((dgu != 0.0) | (dgv != 0.0))
    g_u = (dmda * S * dgu).ravel()[active]
    g_v = (dmda * S * dgv).ravel()[active]
    ua = u.ravel()[active]
    va = v.ravel()[active]
    J = np.empty((5, active.size))
    J[0] = g_u * (-cs / w) + g_v * (sn * fw / sh)
    J[1] = g_u * (-sn * fh / sw) + g_v * (-cs / h)
    J[2] = g_u * (-ua / w)
    J[3] = g_v * (-va / h)
    J[4] = rs * (g_u * (va * sh / sw) - g_v * (ua * sw / sh))
    return Footprint(r0, r1, c0, c1, mask, active, J)


def _placements(placement, n: int) -> list[Placement]:
    if placement is None:
        return [Placement()] * n
    if isinstance(placement, Placement):
        return [placement] * n
    if isinstance(placement, AffineMap):
        return [Placement(outer=placement)] * n
    placement = list(placement)
    if len(placement) != n:
        raise ValueError("need one placement per stroke")
    return placement


def _param_array(strokes) -> np.ndarray:
    if isinstance(strokes, np.ndarray):
        arr = np.asarray(strokes, dtype=np.float64)
    else:
        arr = np.array([s.to_array() if isinstance(s, StrokeParams) else s for s in strokes],
                       dtype=np.float64)
    return arr.reshape(-1, 8)


# ---------------------------------------------------------------- single stroke

def rasterize_soft(s, outer: AffineMap | None, frame_w: int, frame_h: int, k: float = 20.0,
                   brush=None, frame: tuple[float, float] | None = None):
    """Soft mask and normalized edge map of one stroke on a ``frame_w x frame_h`` raster.

    The stroke is normalized to ``frame`` (default: the raster itself) and
    carried onto the raster by ``outer``.  The edge map is the central
    difference gradient magnitude of the mask divided by its maximum.
    """
    if k <= 0:
        raise ValueError("sharpness must be positive")
    brush = _brush(brush)
    p = _param_array([s])[0]
    pl = Placement(outer or IDENTITY, frame)
    mask = np.zeros((frame_h, frame_w))
    edge = np.zeros((frame_h, frame_w))
    fp = footprint(p, pl, frame_w, frame_h, k, brush, pad=2)
    if fp is not None:
        mask[fp.slices] = fp.mask
        e, _ = _edge_of(fp.mask, frame_w, frame_h, fp)
        edge[fp.slices] = e
    return mask, edge


def rasterize_reference(s, outer: AffineMap | None, frame_w: int, frame_h: int, brush=None,
                        frame: tuple[float, float] | None = None) -> np.ndarray:
    """Hard mask: brush alpha sampled through the exact inverse affine map, thresholded at 1/2.

    Evaluated at every raster pixel with no windowing, as an independent check
    on :func:`rasterize_soft`.
    """
    brush = _brush(brush)
    p = _param_array([s])[0]
    fw, fh = frame if frame is not None else (frame_w, frame_h)
    full = (outer or IDENTITY).compose(stroke_affine(p, fw, fh, brush))
    inv = full.inverse()
    px, py = np.meshgrid(np.arange(frame_w) + 0.5, np.arange(frame_h) + 0.5)
    u, v = inv.apply(px, py)
    S = brush.size
    a = brush.sample((u + 0.5) * S - 0.5, (v + 0.5) * S - 0.5)
    return (a > 0.5).astype(np.float64)


def stroke_image(mask: np.ndarray, color) -> np.ndarray:
    """Colored footprint: channel ``c`` is ``mask * color[c]``."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 3:
        m = m[:, :, 0]
    return m[:, :, None] * np.asarray(color, dtype=np.float64)


# ---------------------------------------------------------------- many strokes

class RenderTape:
    """What the backward pass of :func:`render_forward` needs."""

    def __init__(self, params, footprints, prev):
        self.params = params
        self.footprints = footprints
        self.prev = prev


def render_forward(params: np.ndarray, placements, canvas: np.ndarray, k: float,
                   brush=None, tape: bool = True):
    """Composite strokes in order onto a copy of ``canvas``.

    Per stroke: ``C <- (mask * color) * mask + C * (1 - mask)``.
    """
    brush = _brush(brush)
    params = _param_array(params)
    out = np.array(canvas, dtype=np.float64, copy=True)
    if out.ndim != 3:
        raise ValueError("canvas must be HxWxC")
    height, width = out.shape[:2]
    pls = _placements(placements, len(params))
    fps, prev = [], []
    for p, pl in zip(params, pls):
        fp = footprint(p, pl, width, height, k, brush, jac=tape, clip=pl.clip)
        fps.append(fp)
        if fp is None:
            prev.append(None)
            continue
        ys, xs = fp.slices
        win = out[ys, xs]
        if tape:
            prev.append(win.copy())
        m = fp.mask[:, :, None]
        color = p[5:8] if out.shape[2] == 3 else p[5:8].mean(keepdims=True)
        out[ys, xs] = (m * color) * m + win * (1.0 - m)
    return out, (RenderTape(params, fps, prev) if tape else None)


def render_backward(tape: RenderTape, grad_out: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of :func:`render_forward` w.r.t. the ``(N, 8)`` parameters."""
    G = np.array(grad_out, dtype=np.float64, copy=True)
    n = len(tape.params)
    grads = np.zeros((n, 8))
    gray = G.shape[2] == 1
    for i in range(n - 1, -1, -1):
        fp = tape.footprints[i]
        if fp is None:
            continue
        p = tape.params[i]
        ys, xs = fp.slices
        Gw = G[ys, xs]
        m = fp.mask
        cprev = tape.prev[i]
        color = p[5:8].mean(keepdims=True) if gray else p[5:8]
        gm = np.sum(Gw * (2.0 * color * m[:, :, None] - cprev), axis=2)
        if fp.active.size:
            grads[i, :5] = fp.jac @ gm.ravel()[fp.active]
        m2 = m * m
        gcol = m2.ravel() @ Gw.reshape(-1, Gw.shape[2])
        grads[i, 5:8] = np.repeat(gcol / 3.0, 3) if gray else gcol
        G[ys, xs] = Gw * (1.0 - m)[:, :, None]
    return grads


def render_strokes(strokes, outer, canvas: np.ndarray, k: float = 20.0, brush=None,
                   frame: tuple[float, float] | None = None, clip: RegionPx | None = None):
    """Paint ``strokes`` in list order onto ``canvas`` (returns a new array)."""
    pl = Placement(outer or IDENTITY, frame, clip)
    out, _ = render_forward(_param_array(strokes), pl, canvas, k, brush, tape=False)
    return out


def grad_strokes(strokes, outer, canvas, target, k: float = 20.0, brush=None,
                 frame: tuple[float, float] | None = None, clip: RegionPx | None = None,
                 return_loss: bool = False):
    """Gradient of ``||target - render_strokes(...)||^2`` w.r.t. every stroke parameter.

    Returns an ``(N, 8)`` array (and the loss when ``return_loss``).
    """
    target = np.asarray(target, dtype=np.float64)
    pl = Placement(outer or IDENTITY, frame, clip)
    out, tape = render_forward(_param_array(strokes), pl, canvas, k, brush)
    if out.shape != target.shape:
        raise ValueError(f"canvas {out.shape} and target {target.shape} differ")
    diff = out - target
    g = render_backward(tape, 2.0 * diff)
    if return_loss:
        return g, float(np.sum(diff * diff))
    return g


# ---------------------------------------------------------------- edge maps

def _central_diff(m: np.ndarray):
    pc = np.pad(m, ((0, 0), (1, 1)), mode="edge")
    pr = np.pad(m, ((1, 1), (0, 0)), mode="edge")
    gx = 0.5 * (pc[:, 2:] - pc[:, :-2])
    gy = 0.5 * (pr[2:, :] - pr[:-2, :])
    return gx, gy


def _central_diff_T(ggx: np.ndarray, ggy: np.ndarray) -> np.ndarray:
    h, w = ggx.shape
    pc = np.zeros((h, w + 2))
    pc[:, 2:] += 0.5 * ggx
    pc[:, :-2] -= 0.5 * ggx
    out = pc[:, 1:-1].copy()
    out[:, 0] += pc[:, 0]
    out[:, -1] += pc[:, -1]
    pr = np.zeros((h + 2, w))
    pr[2:, :] += 0.5 * ggy
    pr[:-2, :] -= 0.5 * ggy
    out += pr[1:-1, :]
    out[0, :] += pr[0, :]
    out[-1, :] += pr[-1, :]
    return out


def _edge_of(mask_win: np.ndarray, width: int, height: int, fp: Footprint):
    # The window is padded past the support (mask 0 there) unless it hits the
    # raster border, where edge replication is the intended boundary rule.
    gx, gy = _central_diff(mask_win)
    g = np.sqrt(gx * gx + gy * gy)
    gmax = g.max()
    if gmax <= 0.0:
        return np.zeros_like(g), (gx, gy, g, 0.0, 0)
    return g / gmax, (gx, gy, g, gmax, int(np.argmax(g)))


class EdgeTape:
    def __init__(self, params, footprints, caches, owner):
        self.params = params
        self.footprints = footprints
        self.caches = caches
        self.owner = owner


def edge_forward(params: np.ndarray, placements, width: int, height: int, k: float,
                 brush=None, tape: bool = True):
    """Pixelwise maximum of the strokes' normalized edge maps (ties go to the earlier stroke).

    Each stroke's edge map is computed from its unclipped mask and then
    restricted to the stroke's clip rectangle.
    """
    brush = _brush(brush)
    params = _param_array(params)
    pls = _placements(placements, len(params))
    E = np.zeros((height, width))
    owner = np.full((height, width), -1, dtype=np.intp)
    fps, caches = [], []
    for i, (p, pl) in enumerate(zip(params, pls)):
        fp = footprint(p, pl, width, height, k, brush, jac=tape, pad=2)
        if fp is None:
            fps.append(None)
            caches.append(None)
            continue
        e, cache = _edge_of(fp.mask, width, height, fp)
        if pl.clip is not None:
            cm = np.zeros_like(e, dtype=bool)
            c = pl.clip
            cm[max(c.y0 - fp.r0, 0):max(c.y0 + c.h - fp.r0, 0),
               max(c.x0 - fp.c0, 0):max(c.x0 + c.w - fp.c0, 0)] = True
            e = np.where(cm, e, 0.0)
        else:
            cm = None
        ys, xs = fp.slices
        win = E[ys, xs]
        better = e > win
        win[better] = e[better]
        owner[ys, xs][better] = i
        fps.append(fp)
        caches.append((cache, cm))
    return E, (EdgeTape(params, fps, caches, owner) if tape else None)


def edge_backward(tape: EdgeTape, grad_E: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of :func:`edge_forward` (subgradient of the max)."""
    grad_E = np.asarray(grad_E, dtype=np.float64)
    grads = np.zeros((len(tape.params), 8))
    for i, fp in enumerate(tape.footprints):
        if fp is None:
            continue
        ys, xs = fp.slices
        (gx, gy, g, gmax, amax), cm = tape.caches[i]
        if gmax <= 0.0:
            continue
        ge = np.where(tape.owner[ys, xs] == i, grad_E[ys, xs], 0.0)
        if cm is not None:
            ge = np.where(cm, ge, 0.0)
        if not np.any(ge):
            continue
        gg = ge / gmax
        gg.flat[amax] -= np.sum(ge * g) / (gmax * gmax)
        safe = np.where(g > 0.0, g, 1.0)
        ratio = np.where(g > 0.0, gg / safe, 0.0)
        gm = _central_diff_T(ratio * gx, ratio * gy)
        if fp.active.size:
            grads[i, :5] = fp.jac @ gm.ravel()[fp.active]
    return grads
