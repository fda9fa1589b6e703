"""Optimization, continuation and problem configuration models."""

from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator

from app.models.alpha import AlphaSchedule
from app.models.expressions import VectorExpression
from app.models.objective import ObjectiveBreakdown, ObjectiveKind, PhaseField, SharpMask, SharpObjective
from app.models.state import InnerProduct, MarginClass, ReducedGradient, SolverOptions, StateSolution


class OptimizerOptions(BaseModel):
    """Projected-gradient controls."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_outer: int = PydanticField(default=500, ge=1)
    tolerance: float = PydanticField(default=1e-6, gt=0)  # relative to the initial residual
    armijo_c1: float = PydanticField(default=1e-4, gt=0, lt=1)
    max_halvings: int = PydanticField(default=30, ge=1)
    initial_step: float = PydanticField(default=1.0, gt=0)
    max_step: float = PydanticField(default=1e3, gt=0)
    step_growth: float = PydanticField(default=2.0, ge=1)
    inner_product: InnerProduct = InnerProduct.H1_WEIGHTED


class ContinuationOptions(BaseModel):
    """Epsilon schedule: eps_k = eps0 * factor**k for k < levels."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    eps0: float = PydanticField(default=0.16, gt=0)
    levels: int = PydanticField(default=4, ge=1, le=10)
    factor: float = PydanticField(default=0.5, gt=0, lt=1)
    min_cells_across: float = PydanticField(default=4.0, gt=0)

    def schedule(self) -> list[float]:
        return [self.eps0 * self.factor**level for level in range(self.levels)]


class ProblemConfig(BaseModel):
    """Physical data, penalization schedule, objective choice and tolerances."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    viscosity: float = PydanticField(..., gt=0)
    body_force: VectorExpression
    boundary_data: VectorExpression
    beta: float = PydanticField(..., gt=-1, le=1)
    gamma: float = PydanticField(..., gt=0)
    alpha_schedule: AlphaSchedule = PydanticField(default_factory=AlphaSchedule)
    objective: ObjectiveKind = ObjectiveKind.TOTAL_POTENTIAL_POWER
    solver: SolverOptions = PydanticField(default_factory=SolverOptions)
    optimizer: OptimizerOptions = PydanticField(default_factory=OptimizerOptions)


class IterationRecord(BaseModel):
    """One optimizer iterate."""

    iteration: int
    j_total: float
    alpha_term: float
    f_term: float
    gl_term: float
    stationarity: float
    multiplier: float
    step_length: float
    volume: float
    margin: float


class OptimizationHistory(BaseModel):
    """Per-iteration records for one epsilon level."""

    eps: float
    records: list[IterationRecord] = PydanticField(default_factory=list)
    converged: bool = False
    reason: str = ""

    @model_validator(mode="after")
    def validate_monotone(self) -> "OptimizationHistory":
        totals = [record.j_total for record in self.records]
        for previous, current in zip(totals, totals[1:]):
            if current > previous:
                raise ValueError("accepted steps must not increase J_eps")
        return self


class StepResult(BaseModel):
    """Outcome of one projected Armijo step."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phase: PhaseField
    accepted: bool
    step_length: float
    halvings: int
    breakdown: ObjectiveBreakdown
    state: StateSolution


class OptimizationResult(BaseModel):
    """Best iterate of a projected-gradient run."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phase: PhaseField
    state: StateSolution
    breakdown: ObjectiveBreakdown
    gradient: ReducedGradient
    stationarity: float
    history: OptimizationHistory


class LevelResult(BaseModel):
    """Summary of one epsilon level of the continuation."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    eps: float
    alpha_bar: float
    phase: PhaseField
    state: StateSolution
    breakdown: ObjectiveBreakdown
    history: OptimizationHistory
    multiplier: float
    stationarity: float
    margin: float
    margin_class: MarginClass
    l1_distance: float
    l1_ratio: float
    mismatch: Optional[float] = None
    mismatch_ratio: Optional[float] = None

    def summary_row(self) -> dict:
        return {
            "eps": self.eps,
            "alpha_bar": self.alpha_bar,
            "j_total": self.breakdown.total,
            "alpha_term": self.breakdown.alpha_term,
            "f_term": self.breakdown.f_term,
            "gl_term": self.breakdown.gl_term,
            "multiplier": self.multiplier,
            "stationarity": self.stationarity,
            "margin": self.margin,
            "margin_class": self.margin_class.value,
            "iterations": len(self.history.records),
            "l1_distance": self.l1_distance,
            "l1_ratio": self.l1_ratio,
            "mismatch": self.mismatch,
            "mismatch_ratio": self.mismatch_ratio,
        }


class ContinuationResult(BaseModel):
    """All epsilon levels plus the extracted sharp design and its J_0."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    levels: list[LevelResult]
    sharp_mask: SharpMask
    sharp_state: StateSolution
    sharp_objective: SharpObjective

    @property
    def final(self) -> LevelResult:
        return self.levels[-1]


def volume_of(values: np.ndarray, weights: np.ndarray) -> float:
    """Integral of a P1 function given its lumped (exact) node weights."""
    return float(np.dot(weights, values))
