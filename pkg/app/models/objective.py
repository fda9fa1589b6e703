"""Objective functional models: objective data, phase field, term breakdowns."""

import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField, field_validator, model_validator

from app.models.expressions import VectorExpression
from app.models.fem import Field, SpaceKind

C0 = math.pi / 2.0
PHASE_TOLERANCE = 1e-12


class ObjectiveKind(str, Enum):
    """Objective integrands shipped with the solver."""

    TOTAL_POTENTIAL_POWER = "total_potential_power"


class ObjectiveSpec(BaseModel):
    """Integrand f(x, u, Du) = mu/2 |Du|^2 - f.u plus the perimeter weight gamma."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: ObjectiveKind = ObjectiveKind.TOTAL_POTENTIAL_POWER
    gamma: float = PydanticField(..., gt=0)
    c0: float = C0
    viscosity: float = PydanticField(..., gt=0)
    body_force: VectorExpression

    @field_validator("c0")
    @classmethod
    def validate_c0(cls, value: float) -> float:
        if value != C0:
            raise ValueError("c0 is fixed at pi/2")
        return value


class PhaseField(BaseModel):
    """Nodal design variable with its interface width and volume bound."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    field: Field
    eps: float = PydanticField(..., gt=0)
    beta: float = PydanticField(..., gt=-1, le=1)

    @model_validator(mode="after")
    def validate_box(self) -> "PhaseField":
        if self.field.space.kind != SpaceKind.DESIGN:
            raise ValueError("phase field must live in the design space")
        if np.any(np.abs(self.field.values) > 1.0 + PHASE_TOLERANCE):
            raise ValueError("phase values must lie in [-1, 1]")
        return self

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def with_values(self, values: np.ndarray) -> "PhaseField":
        return PhaseField(field=self.field.with_values(values), eps=self.eps, beta=self.beta)


class ObjectiveBreakdown(BaseModel):
    """J_eps split into its terms; ``total`` sums them in this field order."""

    alpha_term: float
    f_term: float
    gl_term: float
    total: float

    @classmethod
    def from_terms(cls, alpha_term: float, f_term: float, gl_term: float) -> "ObjectiveBreakdown":
        return cls(
            alpha_term=alpha_term,
            f_term=f_term,
            gl_term=gl_term,
            total=alpha_term + f_term + gl_term,
        )


class SharpMask(BaseModel):
    """Black-and-white design: +1 fluid, -1 solid, on nodes and cells."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    node_values: np.ndarray
    cell_values: np.ndarray

    @field_validator("node_values", "cell_values")
    @classmethod
    def validate_signs(cls, value: np.ndarray) -> np.ndarray:
        if not np.all(np.isin(value, (-1, 1))):
            raise ValueError("mask entries must be +1 or -1")
        return value

    @property
    def fluid_cells(self) -> np.ndarray:
        return self.cell_values > 0


class SharpObjective(BaseModel):
    """J_0 = F(u_sharp) + gamma * c0 * perimeter."""

    f_term: float
    perimeter: float
    perimeter_edge_count: float
    perimeter_term: float
    total: float
