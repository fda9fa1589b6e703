"""Design velocities, transformation flows and shape-verification records."""

from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

PointMap = Callable[[np.ndarray], np.ndarray]


class DesignVelocity(BaseModel):
    """Analytic perturbation field V(0) with its exact Jacobian DV[..., i, j] = dV_i/dx_j."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    value_fn: PointMap
    jacobian_fn: PointMap
    autonomous: bool = True

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(self.value_fn(points), points.shape[:-1] + (2,)).copy()

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(
            self.jacobian_fn(points), points.shape[:-1] + (2, 2)
        ).copy()

    def divergence(self, points: np.ndarray) -> np.ndarray:
        jac = self.jacobian(points)
        return jac[..., 0, 0] + jac[..., 1, 1]

    def combine(self, other: "DesignVelocity", weight: float = 1.0) -> "DesignVelocity":
        """Return self + weight * other."""

        return DesignVelocity(
            name=f"{self.name}+{weight:g}*{other.name}",
            value_fn=lambda points: self.value(points) + weight * other.value(points),
            jacobian_fn=lambda points: self.jacobian(points) + weight * other.jacobian(points),
        )

    @classmethod
    def zero(cls) -> "DesignVelocity":
        return cls(
            name="zero",
            value_fn=lambda points: np.zeros(points.shape[:-1] + (2,)),
            jacobian_fn=lambda points: np.zeros(points.shape[:-1] + (2, 2)),
        )


class TransportFlow(BaseModel):
    """Flow T_t of dx/dt = V(x), integrated with classical RK4."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    velocity: DesignVelocity
    substeps: int = Field(default=32, ge=1)
    t_max: float = Field(default=0.25, gt=0)

    def advance(self, points: np.ndarray, t: float) -> np.ndarray:
        """Map points through T_t; negative t gives the inverse map."""

        if abs(t) > self.t_max:
            raise ValueError(f"|t|={abs(t):g} exceeds the flow validity window {self.t_max:g}")
        current = np.array(points, dtype=float, copy=True)
        if t == 0.0:
            return current
        h = t / self.substeps
        for _ in range(self.substeps):
            k1 = self.velocity.value(current)
            k2 = self.velocity.value(current + 0.5 * h * k1)
            k3 = self.velocity.value(current + 0.5 * h * k2)
            k4 = self.velocity.value(current + h * k3)
            current = current + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return current

    def inverse(self, points: np.ndarray, t: float) -> np.ndarray:
        return self.advance(points, -t)


class GeometricResidual(BaseModel):
    """Optimality residual r(V) = dj(V) + lambda * int(phi div V)."""

    velocity: str
    derivative: float
    multiplier_term: float
    residual: float
    normalized: float


class ShapeSweepRow(BaseModel):
    """Shape derivative at one epsilon level."""

    eps: float
    derivative: float
    cauchy_difference: Optional[float] = None


class ShapeCheckRow(BaseModel):
    """Formula vs transported-design central difference for one step."""

    velocity: str
    step: float
    derivative: float
    finite_difference: float
    relative_error: float


class GradientCheckRow(BaseModel):
    """Adjoint directional derivative vs central difference for one step."""

    direction: int
    step: float
    derivative: float
    finite_difference: float
    relative_error: float


class GammaCheckRow(BaseModel):
    """Ginzburg-Landau energy of the clipped-sine profile at one epsilon."""

    eps: float
    cells_across: float
    energy: float
    expected: float
    relative_error: float
