"""Quadrature rules on the reference triangle and reference interval.

Triangle rules are collapsed Gauss products: n Gauss points per direction
integrate degree 2n - 1 exactly, and degree d uses (d + 2) // 2 + 1 points in
the collapsed direction and (d + 1) // 2 + 1 in the other, so the default
degree 6 rule has 5 x 4 = 20 points.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule exact for polynomials of total degree ``degree``.

    The unit square is mapped onto the reference triangle
    {x >= 0, y >= 0, x + y <= 1} by (s, t) -> (s, (1 - s) t). The Jacobian
    (1 - s) raises the degree in s by one, hence the extra point in that
    direction. Weights sum to 1/2.
    """

    if degree < 0:
        raise ValueError("degree must be nonnegative")

    s_count = (degree + 2) // 2 + 1
    t_count = (degree + 1) // 2 + 1
    s_nodes, s_weights = _unit_gauss(s_count)
    t_nodes, t_weights = _unit_gauss(t_count)

    s, t = np.meshgrid(s_nodes, t_nodes, indexing="ij")
    ws, wt = np.meshgrid(s_weights, t_weights, indexing="ij")
    points = np.stack([s.ravel(), ((1.0 - s) * t).ravel()], axis=1)
    weights = (ws * wt * (1.0 - s)).ravel()

    points.flags.writeable = False
    weights.flags.writeable = False
    return points, weights


@lru_cache(maxsize=None)
def interval_rule(count: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] with ``count`` points."""

    nodes, weights = _unit_gauss(count)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def _unit_gauss(count: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(count)
    return 0.5 * (nodes + 1.0), 0.5 * weights
