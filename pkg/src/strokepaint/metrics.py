"""Reconstruction metrics: mean squared difference ("L2 distance") and PSNR."""
import math

import numpy as np

PSNR_CAP = 100.0


def l2_distance(I, J) -> float:
    I = np.asarray(I, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    if I.shape != J.shape:
        raise ValueError(f"shape mismatch {I.shape} vs {J.shape}")
    return float(np.mean((I - J) ** 2))


def psnr(I, J) -> float:
    """PSNR in dB for unit-range images, capped at 100 dB for (near-)identical inputs."""
    mse = l2_distance(I, J)
    if mse < 1e-10:
        return PSNR_CAP
    return -10.0 * math.log10(mse)
