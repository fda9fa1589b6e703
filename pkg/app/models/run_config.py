"""Strict JSON run configuration for the command-line entry point."""

from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.expressions import PolynomialTerm
from app.models.optimization import ContinuationOptions, OptimizerOptions
from app.models.state import SolverOptions


class RunMode(str, Enum):
    """Command-line modes."""

    SOLVE = "solve"
    OPTIMIZE = "optimize"
    CONTINUE = "continue"
    VERIFY_GRADIENT = "verify-gradient"
    VERIFY_SHAPE = "verify-shape"
    GAMMA_CHECK = "gamma-check"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MeshSection(_Section):
    nx: int = Field(default=64, ge=1)
    ny: int = Field(default=64, ge=1)
    width: float = Field(default=1.0, gt=0)
    height: float = Field(default=1.0, gt=0)
    diagonal: Literal["right", "crossed"] = "right"


class PolynomialSpec(_Section):
    x: list[PolynomialTerm] = Field(default_factory=list)
    y: list[PolynomialTerm] = Field(default_factory=list)


class ForcingSection(_Section):
    preset: Literal["zero", "constant", "polynomial"] = "zero"
    value: tuple[float, float] = (0.0, 0.0)
    polynomial: Optional[PolynomialSpec] = None

    @model_validator(mode="after")
    def validate_polynomial(self) -> "ForcingSection":
        if self.preset == "polynomial" and self.polynomial is None:
            raise ValueError("polynomial forcing requires a 'polynomial' block")
        return self


class BoundarySection(_Section):
    preset: Literal[
        "poiseuille", "pipe", "diffuser", "pipe_bend", "obstacle", "noslip", "polynomial"
    ] = "poiseuille"
    speed: float = Field(default=0.25, gt=0)
    opening: float = Field(default=0.2, gt=0, lt=1)  # band width as a fraction of the side
    polynomial: Optional[PolynomialSpec] = None

    @model_validator(mode="after")
    def validate_polynomial(self) -> "BoundarySection":
        if self.preset == "polynomial" and self.polynomial is None:
            raise ValueError("polynomial boundary data requires a 'polynomial' block")
        return self


class DesignSection(_Section):
    preset: Literal["uniform", "obstacle", "disc"] = "uniform"
    value: Optional[float] = Field(default=None, ge=-1, le=1)  # uniform value, defaults to beta
    size: float = Field(default=0.25, gt=0)  # obstacle side or disc radius


class PhysicsSection(_Section):
    viscosity: float = Field(default=1.0, gt=0)
    gamma: float = Field(default=0.01, gt=0)
    beta: float = 0.0
    body_force: ForcingSection = Field(default_factory=ForcingSection)
    boundary: BoundarySection = Field(default_factory=BoundarySection)
    design: DesignSection = Field(default_factory=DesignSection)

    @field_validator("beta")
    @classmethod
    def validate_beta(cls, value: float) -> float:
        if not -1.0 < value < 1.0:
            raise ValueError("beta must lie strictly between -1 and 1")
        return value


class AlphaSection(_Section):
    a0: float = Field(default=10.0, gt=0)
    exponent: float = 0.5
    smoothing: float = Field(default=4.0, ge=1)
    delta: float = Field(default=0.01, gt=0)

    @field_validator("exponent")
    @classmethod
    def validate_exponent(cls, value: float) -> float:
        if not 0.0 < value < 2.0 / 3.0:
            raise ValueError("exponent violates growth condition o(eps^{-2/3})")
        return value


class VerificationSection(_Section):
    directions: int = Field(default=5, ge=1)
    steps: list[float] = Field(default_factory=lambda: [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7])
    shape_steps: list[float] = Field(default_factory=lambda: [4e-2, 2e-2, 1e-2, 5e-3])
    velocities: int = Field(default=3, ge=1, le=8)
    gradient_tolerance: float = Field(default=1e-4, gt=0)
    shape_tolerance: float = Field(default=1e-2, gt=0)
    gamma_levels: int = Field(default=3, ge=1)
    gamma_tolerance: float = Field(default=0.02, gt=0)

    @field_validator("steps", "shape_steps")
    @classmethod
    def validate_steps(cls, value: list[float]) -> list[float]:
        if not value or any(step <= 0 for step in value):
            raise ValueError("finite-difference steps must be positive")
        return value


class RunConfig(_Section):
    """Complete, self-describing run configuration."""

    mode: RunMode = RunMode.SOLVE
    mesh: MeshSection = Field(default_factory=MeshSection)
    physics: PhysicsSection = Field(default_factory=PhysicsSection)
    alpha: AlphaSection = Field(default_factory=AlphaSection)
    continuation: ContinuationOptions = Field(default_factory=ContinuationOptions)
    optimizer: OptimizerOptions = Field(default_factory=OptimizerOptions)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    verification: VerificationSection = Field(default_factory=VerificationSection)
    objective: Literal["total_potential_power"] = "total_potential_power"
    output_dir: Optional[str] = None
    seed: int = Field(default=0, ge=0)

    def to_json(self) -> dict:
        return self.model_dump(mode="json")
