"""Step rewards used to decide where to paint.

``normalized_distance`` is ``||I - C|| / ||I||`` (Frobenius over pixels and
channels).  The phasic reward multiplies the plain improvement by an
amplification factor once the canvas is within ``threshold`` of the target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def continuity_alpha(threshold: float, epsilon: float) -> float:
    """The slope constant for which the amplification equals 1 at ``d == threshold``."""
    return math.log((2.0 - threshold) / (threshold + epsilon))


@dataclass(frozen=True)
class RewardConfig:
    threshold: float = 0.005
    epsilon: float = 1e-6
    alpha: float | None = None  # None -> continuity_alpha(threshold, epsilon)

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.alpha is not None and not self.alpha > 0.0:
            raise ValueError("alpha must be positive")

    @property
    def alpha_value(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return continuity_alpha(self.threshold, self.epsilon)


def normalized_distance(I: np.ndarray, C: np.ndarray) -> float:
    I = np.asarray(I, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if I.shape != C.shape:
        raise ValueError(f"shape mismatch {I.shape} vs {C.shape}")
    norm = np.linalg.norm(I.ravel())
    if norm == 0.0:
        raise ValueError("target image is all black; normalized distance undefined")
    return float(np.linalg.norm((I - C).ravel()) / norm)


def reward_original(I, C_t, C_next) -> float:
    return normalized_distance(I, C_t) - normalized_distance(I, C_next)


def inverse_sigmoid(x: float, alpha: float, epsilon: float) -> float:
    """``ln((1 + x) / (1 - x + epsilon)) / alpha``."""
    return math.log((1.0 + x) / (1.0 - x + epsilon)) / alpha


def phasic_beta(d: float, cfg: RewardConfig) -> float:
    if d > cfg.threshold:
        return 1.0
    return inverse_sigmoid(1.0 - d, cfg.alpha_value, cfg.epsilon)


def reward_phasic(I, C_t, C_next, cfg: RewardConfig | None = None) -> float:
    cfg = cfg or RewardConfig()
    d_t = normalized_distance(I, C_t)
    d = normalized_distance(I, C_next)
    return phasic_beta(d, cfg) * (d_t - d)
