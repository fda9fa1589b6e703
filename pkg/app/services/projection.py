"""Projection onto the admissible design set {|phi| <= 1, int phi <= beta |Omega|}."""

import numpy as np
from scipy.optimize import bisect

_SHIFT_TOLERANCE = 1e-12


def clip_box(values: np.ndarray) -> np.ndarray:
    return np.clip(values, -1.0, 1.0)


def project_with_shift(
    values: np.ndarray,
    beta: float,
    weights: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Return (clip(values - sigma), sigma) with the smallest feasible shift sigma >= 0.

    ``weights`` are the exact integrals of the linear hat functions, so
    ``weights @ values`` is the integral of the interpolant.
    """

    measure = float(np.sum(weights))
    target = beta * measure
    clipped = clip_box(values)
    if float(weights @ clipped) <= target:
        return clipped, 0.0

    def excess(shift: float) -> float:
        return float(weights @ clip_box(values - shift)) - target

    upper = float(np.max(values)) + 1.0
    shift = bisect(excess, 0.0, upper, xtol=_SHIFT_TOLERANCE, maxiter=200)
    # bisect returns a point inside the final bracket; move to the feasible side
    projected = clip_box(values - shift)
    if float(weights @ projected) > target:
        shift += _SHIFT_TOLERANCE
        projected = clip_box(values - shift)
    return projected, float(shift)
