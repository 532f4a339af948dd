"""The painting loop, its configuration and the replayable stroke log.

A run starts from a flat canvas and repeats ``select_and_paint`` with
``N`` strokes per step until the stroke budget is spent, the canvas matches
the target, or ``patience`` consecutive steps fail to improve it.  Only
accepted steps are logged; their ``t`` indices run 0, 1, 2, ...

Randomness: attempt ``a`` (accepted or not) uses
``np.random.default_rng([seed, a])``.  A run with a larger budget therefore
repeats a smaller run step for step before continuing.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .compositor import CompositorConfig, select_and_paint
from .core import RegionNorm, resize_bilinear
from .imageio import write_image
from .painter import PainterConfig, RegionPainter, apply_strokes
from .rasterizer import LOWER, UPPER, load_brush
from .reward import RewardConfig, normalized_distance

LOG_FORMAT = "cnp-log/1"
CANVAS_INITS = ("black", "white", "mean")


class ConfigError(ValueError):
    """Unknown key or invalid value in a paint configuration."""


class LogFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PaintConfig:
    budget: int = 1000
    seed: int = 0
    canvas_size: int = 512  # long side of the working canvas; 0 keeps the input size
    canvas_init: str = "black"
    brush: str = "oval"
    final_sharpness: float = 50.0
    patience: int = 5
    frames_every: int = 0
    painter: PainterConfig = field(default_factory=PainterConfig)
    compositor: CompositorConfig = field(default_factory=CompositorConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if 0 < self.budget < self.painter.strokes_per_step:
            raise ConfigError("budget must be 0 or at least painter.strokes_per_step")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.canvas_size < 0:
            raise ConfigError("canvas_size must be >= 0")
        if self.canvas_init not in CANVAS_INITS:
            raise ConfigError(f"canvas_init must be one of {CANVAS_INITS}")
        if not self.final_sharpness > 0:
            raise ConfigError("final_sharpness must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.frames_every < 0:
            raise ConfigError("frames_every must be >= 0")

    # -- flat "section.key" view, used by config files and the log header

    def to_flat(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                for g in dataclasses.fields(v):
                    sub = getattr(v, g.name)
                    out[f"{f.name}.{g.name}"] = list(sub) if isinstance(sub, tuple) else sub
            else:
                out[f.name] = v
        return out

    @classmethod
    def from_flat(cls, flat: dict[str, Any], base: "PaintConfig | None" = None) -> "PaintConfig":
        """Build a config from ``{"budget": 100, "painter.iters": 50, ...}`` over ``base``."""
        base = base or cls()
        known = base.to_flat()
        top: dict[str, Any] = {}
        subs: dict[str, dict[str, Any]] = {}
        for key, value in flat.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            value = _coerce(key, value, known[key])
            if "." in key:
                sec, name = key.split(".", 1)
                subs.setdefault(sec, {})[name] = value
            else:
                top[key] = value
        try:
            for sec, kw in subs.items():
                top[sec] = dataclasses.replace(getattr(base, sec), **kw)
            return dataclasses.replace(base, **top)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_toml(cls, path, base: "PaintConfig | None" = None) -> "PaintConfig":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"{path}: {e}") from e
        return cls.from_flat(flatten(data), base)


def flatten(d: dict, prefix: str = "") -> dict[str, Any]:
    """``{"painter": {"iters": 5}}`` -> ``{"painter.iters": 5}``."""
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value, default):
    if key == "reward.alpha":
        return None if value is None else float(value)
    if isinstance(default, bool) or default is None:
        return value
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                value = value.split(",")
            return tuple(float(v) for v in value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for {key}") from None


# ---------------------------------------------------------------- stroke log

@dataclass(frozen=True)
class StepRecord:
    t: int
    region: tuple[float, float, float, float]
    strokes: tuple[tuple[float, ...], ...]
    distance: float

    @property
    def array(self) -> np.ndarray:
        return np.array(self.strokes, dtype=np.float64).reshape(-1, 8)

    @property
    def n_strokes(self) -> int:
        return len(self.strokes)


@dataclass(frozen=True)
class LogHeader:
    width: int
    height: int
    brush_id: str
    brush_sha256: str
    frame: int
    sharpness: float
    init_color: tuple[float, ...]
    seed: int
    config: dict = field(default_factory=dict, compare=True)


@dataclass
class StrokeLog:
    header: LogHeader
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def n_strokes(self) -> int:
        return sum(s.n_strokes for s in self.steps)

    def with_strokes(self, arrays) -> "StrokeLog":
        """Copy with each step's strokes replaced by the matching ``(n, 8)`` array."""
        arrays = list(arrays)
        if len(arrays) != len(self.steps):
            raise ValueError("one stroke array per step is required")
        steps = []
        for s, a in zip(self.steps, arrays):
            a = np.asarray(a, dtype=np.float64).reshape(-1, 8)
            if len(a) != s.n_strokes:
                raise ValueError("stroke count of a step may not change")
            steps.append(dataclasses.replace(s, strokes=_stroke_tuples(a)))
        return StrokeLog(self.header, steps)

    # -- JSONL

    def to_jsonl(self) -> str:
        h = self.header
        lines = [json.dumps({
            "format": LOG_FORMAT,
            "width": h.width,
            "height": h.height,
            "brush": {"id": h.brush_id, "sha256": h.brush_sha256},
            "frame": h.frame,
            "sharpness": h.sharpness,
            "init_color": list(h.init_color),
            "seed": h.seed,
            "config": h.config,
        })]
        for s in self.steps:
            lines.append(json.dumps({
                "t": s.t,
                "region": list(s.region),
                "strokes": [list(x) for x in s.strokes],
                "distance": s.distance,
            }))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "StrokeLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise LogFormatError("empty stroke log")
        try:
            head = json.loads(lines[0])
            if head.get("format") != LOG_FORMAT:
                raise LogFormatError(f"unsupported log format {head.get('format')!r}")
            header = LogHeader(
                width=int(head["width"]), height=int(head["height"]),
                brush_id=str(head["brush"]["id"]), brush_sha256=str(head["brush"]["sha256"]),
                frame=int(head["frame"]), sharpness=float(head["sharpness"]),
                init_color=tuple(float(c) for c in head["init_color"]),
                seed=int(head["seed"]), config=dict(head.get("config", {})),
            )
            steps = []
            for i, ln in enumerate(lines[1:]):
                rec = json.loads(ln)
                if rec["t"] != i:
                    raise LogFormatError(f"step index {rec['t']} where {i} was expected")
                region = tuple(float(v) for v in rec["region"])
                RegionNorm(*region)
                arr = np.array(rec["strokes"], dtype=np.float64)
                if arr.ndim != 2 or arr.shape[1] != 8:
                    raise LogFormatError(f"step {i}: strokes must be lists of 8 numbers")
                if np.any(arr < LOWER) or np.any(arr > UPPER):
                    raise LogFormatError(f"step {i}: stroke parameter out of range")
                steps.append(StepRecord(i, region, _stroke_tuples(arr), float(rec["distance"])))
        except LogFormatError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise LogFormatError(f"malformed stroke log: {e}") from e
        return cls(header, steps)

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "StrokeLog":
        return cls.from_jsonl(Path(path).read_text())


def _stroke_tuples(arr: np.ndarray) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in arr)


# ---------------------------------------------------------------- running

def working_size(width: int, height: int, canvas_size: int) -> tuple[int, int]:
    """Canvas size whose long side is ``canvas_size`` (input size when 0)."""
    if canvas_size == 0:
        return width, height
    s = canvas_size / max(width, height)
    return max(1, round(width * s)), max(1, round(height * s))


def prepare_target(img: np.ndarray, cfg: PaintConfig) -> np.ndarray:
    H, W = img.shape[:2]
    w, h = working_size(W, H, cfg.canvas_size)
    return resize_bilinear(img, w, h) if (w, h) != (W, H) else np.array(img, dtype=np.float64)


def initial_color(I: np.ndarray, how: str) -> np.ndarray:
    C = I.shape[2]
    if how == "black":
        return np.zeros(C)
    if how == "white":
        return np.ones(C)
    if how == "mean":
        return I.reshape(-1, C).mean(axis=0)
    raise ConfigError(f"unknown canvas_init {how!r}")


@dataclass
class PaintResult:
    canvas: np.ndarray
    log: StrokeLog
    attempts: int
    stop_reason: str

    def __iter__(self):  # allows ``canvas, log = paint(...)``
        return iter((self.canvas, self.log))


def paint(I: np.ndarray, cfg: PaintConfig | None = None, frames_dir=None) -> PaintResult:
    """Paint target ``I`` (already at working size) with at most ``cfg.budget`` strokes."""
    cfg = cfg or PaintConfig()
    I = np.asarray(I, dtype=np.float64)
    if I.ndim != 3:
        raise ValueError("target must be an HxWxC image")
    H, W = I.shape[:2]
    brush = load_brush(cfg.brush)
    painter = RegionPainter(cfg.painter, brush, cfg.final_sharpness)
    init = initial_color(I, cfg.canvas_init)
    C = np.empty_like(I)
    C[:] = init
    header = LogHeader(W, H, cfg.brush, brush.sha256, cfg.painter.working_res,
                       cfg.final_sharpness, tuple(float(c) for c in init), cfg.seed,
                       cfg.to_flat())
    log = StrokeLog(header)
    if frames_dir is not None and cfg.frames_every > 0:
        frames_dir = Path(frames_dir)
        frames_dir.mkdir(parents=True, exist_ok=True)
        write_image(frames_dir / "frame_00000.png", C)
    else:
        frames_dir = None

    N = cfg.painter.strokes_per_step
    n_steps = math.ceil(cfg.budget / N) if cfg.budget else 0
    fails = 0
    reason = "budget"
    attempt = 0
    for attempt in range(n_steps):
        n = min(N, cfg.budget - attempt * N)
        rng = np.random.default_rng([cfg.seed, attempt])
        res = select_and_paint(I, C, painter, cfg.compositor, rng, cfg.reward, n)
        if res.converged:
            reason = "converged"
            break
        if not res.improved:
            fails += 1
            if fails >= cfg.patience:
                reason = "patience"
                break
            continue
        fails = 0
        C = res.canvas
        t = len(log.steps)
        region = res.region.to_norm(W, H).as_tuple()
        log.steps.append(StepRecord(t, region, _stroke_tuples(res.strokes),
                                    normalized_distance(I, C)))
        if frames_dir is not None and (t + 1) % cfg.frames_every == 0:
            write_image(frames_dir / f"frame_{t + 1:05d}.png", C)
    return PaintResult(C, log, attempt + 1 if n_steps else 0, reason)


def replay(log: StrokeLog, width: int | None = None, height: int | None = None,
           brush=None) -> np.ndarray:
    """Re-render a log; at the logged size this reproduces the painted canvas exactly."""
    h = log.header
    width = width or h.width
    height = height or h.height
    brush = load_brush(brush if brush is not None else h.brush_id)
    if brush.sha256 != h.brush_sha256:
        raise ValueError(f"brush {h.brush_id!r} differs from the one used to paint")
    C = np.empty((height, width, len(h.init_color)))
    C[:] = np.asarray(h.init_color)
    for s in log.steps:
        C = apply_strokes(C, s.array, s.region, h.frame, h.sharpness, brush)
    return C
