"""Adam over a flat parameter array, with box clamping and best-iterate return.

Update rule at step ``t`` (1-based), for gradient ``g``::

    m <- 0.9 m + 0.1 g
    v <- 0.999 v + 0.001 g^2
    x <- clamp(x - lr * (m / (1 - 0.9^t)) / (sqrt(v / (1 - 0.999^t)) + 1e-8))
"""
from __future__ import annotations

from typing import Callable

import numpy as np


class NumericError(ArithmeticError):
    """Raised when an objective or gradient stays non-finite after step halving."""


BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8
MAX_HALVINGS = 5


def adam_minimize(fun_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
                  x0: np.ndarray, iters: int, lr: float,
                  clamp: Callable[[np.ndarray], np.ndarray] | None = None):
    """Run ``iters`` Adam steps from ``x0``; return ``(best_x, best_loss)``.

    Every visited iterate (including ``x0`` and the final one) is scored and
    the lowest-loss one is returned.  A non-finite loss or gradient rewinds
    the last step and retries it with half the step size; after
    ``MAX_HALVINGS`` failures a :class:`NumericError` is raised.
    """
    clamp = clamp or (lambda a: a)
    x = np.array(x0, dtype=np.float64, copy=True)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    best_x, best_loss = x.copy(), np.inf
    prev_x = None
    direction = None
    t = 0
    halvings = 0
    while True:
        loss, g = fun_and_grad(x)
        if not (np.isfinite(loss) and np.all(np.isfinite(g))):
            if prev_x is None or halvings >= MAX_HALVINGS:
                raise NumericError("non-finite objective or gradient")
            halvings += 1
            lr *= 0.5
            x = clamp(prev_x - lr * direction)
            continue
        if loss < best_loss:
            best_loss, best_x = float(loss), x.copy()
        if t >= iters:
            break
        t += 1
        m = BETA1 * m + (1.0 - BETA1) * g
        v = BETA2 * v + (1.0 - BETA2) * (g * g)
        direction = (m / (1.0 - BETA1**t)) / (np.sqrt(v / (1.0 - BETA2**t)) + EPS)
        prev_x = x
        x = clamp(x - lr * direction)
    return best_x, best_loss
