"""Analytic vector expressions used for body forces, boundary data and design velocities."""

from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

PointMap = Callable[[np.ndarray], np.ndarray]

_FD_STEP = 1e-6


class VectorExpression(BaseModel):
    """Vector field x -> R^2 evaluated on arrays of points with shape (..., 2).

    ``jacobian`` returns J[..., i, j] = d value_i / d x_j. When no exact
    Jacobian is supplied a central difference of ``value`` is used, which
    limits derivative accuracy to about 1e-9 relative.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str = "expression"
    value_fn: PointMap
    jacobian_fn: Optional[PointMap] = None

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        result = np.asarray(self.value_fn(points), dtype=float)
        return np.broadcast_to(result, points.shape[:-1] + (2,)).copy()

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.jacobian_fn is not None:
            result = np.asarray(self.jacobian_fn(points), dtype=float)
            return np.broadcast_to(result, points.shape[:-1] + (2, 2)).copy()

        jac = np.empty(points.shape[:-1] + (2, 2))
        for axis in range(2):
            shift = np.zeros(2)
            shift[axis] = _FD_STEP
            forward = self.value(points + shift)
            backward = self.value(points - shift)
            jac[..., :, axis] = (forward - backward) / (2.0 * _FD_STEP)
        return jac

    def divergence(self, points: np.ndarray) -> np.ndarray:
        jac = self.jacobian(points)
        return jac[..., 0, 0] + jac[..., 1, 1]

    @property
    def has_exact_jacobian(self) -> bool:
        return self.jacobian_fn is not None


class PolynomialTerm(BaseModel):
    """Monomial ``coefficient * x**px * y**py``."""

    coefficient: float
    px: int = Field(default=0, ge=0)
    py: int = Field(default=0, ge=0)


def _monomial_sum(terms: list[PolynomialTerm], x: np.ndarray, y: np.ndarray) -> np.ndarray:
    total = np.zeros_like(x)
    for term in terms:
        total = total + term.coefficient * x**term.px * y**term.py
    return total


def _monomial_derivative(terms: list[PolynomialTerm], axis: int) -> list[PolynomialTerm]:
    derived: list[PolynomialTerm] = []
    for term in terms:
        power = term.px if axis == 0 else term.py
        if power == 0:
            continue
        derived.append(
            PolynomialTerm(
                coefficient=term.coefficient * power,
                px=term.px - 1 if axis == 0 else term.px,
                py=term.py - 1 if axis == 1 else term.py,
            )
        )
    return derived


def polynomial_expression(
    x_terms: list[PolynomialTerm],
    y_terms: list[PolynomialTerm],
    name: str = "polynomial",
) -> VectorExpression:
    """Build a polynomial vector field with its exact Jacobian."""

    derivatives = [
        [_monomial_derivative(component, axis) for axis in range(2)]
        for component in (x_terms, y_terms)
    ]

    def value(points: np.ndarray) -> np.ndarray:
        x, y = points[..., 0], points[..., 1]
        return np.stack(
            [_monomial_sum(x_terms, x, y), _monomial_sum(y_terms, x, y)], axis=-1
        )

    def jacobian(points: np.ndarray) -> np.ndarray:
        x, y = points[..., 0], points[..., 1]
        rows = [
            np.stack([_monomial_sum(derivatives[i][j], x, y) for j in range(2)], axis=-1)
            for i in range(2)
        ]
        return np.stack(rows, axis=-2)

    return VectorExpression(name=name, value_fn=value, jacobian_fn=jacobian)


def constant_expression(vector: tuple[float, float], name: str = "constant") -> VectorExpression:
    """Spatially constant vector field."""

    constant = np.asarray(vector, dtype=float)

    def value(points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(constant, points.shape[:-1] + (2,))

    def jacobian(points: np.ndarray) -> np.ndarray:
        return np.zeros(points.shape[:-1] + (2, 2))

    return VectorExpression(name=name, value_fn=value, jacobian_fn=jacobian)


def zero_expression() -> VectorExpression:
    return constant_expression((0.0, 0.0), name="zero")
