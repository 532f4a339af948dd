"""Stroke-based painting: region selection, differentiable stroke fitting and stylization."""
from .compositor import CompositorConfig, propose_regions, select_and_paint
from .core import RegionNorm, RegionPx, composite, crop, paste, resize_bilinear, round_region
from .metrics import l2_distance, psnr
from .painter import PainterConfig, RegionPainter
from .pipeline import PaintConfig, StrokeLog, paint, replay
from .rasterizer import StrokeParams, load_brush, rasterize_reference, rasterize_soft
from .reward import RewardConfig, normalized_distance, reward_phasic

__version__ = "0.1.0"

__all__ = [
    "CompositorConfig", "propose_regions", "select_and_paint",
    "RegionNorm", "RegionPx", "composite", "crop", "paste", "resize_bilinear", "round_region",
    "l2_distance", "psnr", "PainterConfig", "RegionPainter",
    "PaintConfig", "StrokeLog", "paint", "replay",
    "StrokeParams", "load_brush", "rasterize_reference", "rasterize_soft",
    "RewardConfig", "normalized_distance", "reward_phasic",
]
