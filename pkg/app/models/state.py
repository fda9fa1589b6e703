"""State, adjoint and gradient models for the Brinkman-penalized Navier-Stokes problem."""

from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator

from app.models.alpha import AlphaInterpolation
from app.models.expressions import VectorExpression
from app.models.fem import Field, SpaceKind


class MarginClass(str, Enum):
    """Uniqueness regimes of the margin K_Omega * ||grad u|| / mu."""

    SHARP_MINIMIZER = "m<1/2"
    UNIQUE = "m<1"
    UNCERTIFIED = "uncertified"


class InnerProduct(str, Enum):
    """Inner products available for the gradient Riesz representative."""

    L2 = "l2"
    H1_WEIGHTED = "h1_weighted"


class SolverOptions(BaseModel):
    """Nonlinear solver controls."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    rtol: float = PydanticField(default=1e-10, gt=0)
    atol: float = PydanticField(default=1e-12, gt=0)
    max_iter: int = PydanticField(default=50, ge=1)
    picard_reduction: float = PydanticField(default=10.0, gt=1)
    picard_relaxation: float = PydanticField(default=1.0, gt=0, le=1)
    armijo_slope: float = PydanticField(default=1e-4, gt=0, lt=0.5)
    max_backtracks: int = PydanticField(default=20, ge=1)


class StateProblem(BaseModel):
    """Data of one state solve: mu, f, g, the phase field and alpha_eps."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    viscosity: float = PydanticField(..., gt=0)
    body_force: VectorExpression
    boundary_data: VectorExpression
    phase: Field
    alpha: AlphaInterpolation
    options: SolverOptions = PydanticField(default_factory=SolverOptions)

    @model_validator(mode="after")
    def validate_phase_space(self) -> "StateProblem":
        if self.phase.space.kind != SpaceKind.DESIGN:
            raise ValueError("phase must live in the design space")
        return self


class StateSolution(BaseModel):
    """Converged velocity/pressure pair with solver diagnostics."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    velocity: Field
    pressure: Field
    residual_norm: float
    residual_history: list[float] = PydanticField(default_factory=list)
    iterations: int = 0
    newton_iterations: int = 0
    gradient_norm: float
    margin: float
    divergence_residual: float

    @property
    def certified(self) -> bool:
        return self.margin < 1.0


class AdjointSolution(BaseModel):
    """Adjoint velocity q and pressure for the reduced objective."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    velocity: Field
    pressure: Field
    residual_norm: float
    divergence_residual: float


class ReducedGradient(BaseModel):
    """Derivative of j_eps with respect to the nodal design values.

    ``functional`` holds the dual vector <Dj, N_a>; ``field`` is its Riesz
    representative in ``inner_product``; ``lumped`` is the representative in
    the lumped-mass L2 product, which characterizes the discrete variational
    inequality through a nodewise projection.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    functional: np.ndarray
    field: Field
    lumped: Field
    mass_weights: np.ndarray
    inner_product: InnerProduct
    multiplier: float = PydanticField(..., ge=0)
    volume_slack: float
    beta: float

    @property
    def complementarity(self) -> float:
        return abs(self.multiplier * self.volume_slack)


class UniquenessDiagnostic(BaseModel):
    """Margin classification of a solved state."""

    margin: float = PydanticField(..., ge=0)
    margin_class: MarginClass
    gradient_norm: float = PydanticField(..., ge=0)
