"""Epsilon continuation toward the sharp-interface design."""

import logging
import math
from typing import Optional

import numpy as np

from app.models.alpha import ZeroAlpha
from app.models.fem import Field
from app.models.objective import PhaseField, SharpMask
from app.models.optimization import (
    ContinuationOptions,
    ContinuationResult,
    LevelResult,
    OptimizationResult,
    ProblemConfig,
)
from app.models.state import MarginClass, StateProblem, StateSolution, UniquenessDiagnostic
from app.services.adjoint_gradient import ReducedFunctional, objective_spec
from app.services.fem_assembly import Discretization, ElementQuadrature, integrate
from app.services.objective_evaluator import eval_J0
from app.services.optimizer import project_admissible, run_optimization
from app.services.state_solver import solve_sharp_state

logger = logging.getLogger(__name__)


class InterfaceUnresolvedError(ValueError):
    """An epsilon level is too thin for the mesh."""


def classify_margin(margin: float) -> MarginClass:
    if margin < 0.5:
        return MarginClass.SHARP_MINIMIZER
    if margin < 1.0:
        return MarginClass.UNIQUE
    return MarginClass.UNCERTIFIED


def check_uniqueness_gate(state: StateSolution) -> UniquenessDiagnostic:
    """Classify the margin: m < 1/2, m < 1 or uncertified."""

    return UniquenessDiagnostic(
        margin=state.margin,
        margin_class=classify_margin(state.margin),
        gradient_norm=state.gradient_norm,
    )


def extract_sharp_interface(phase: PhaseField) -> SharpMask:
    """Threshold at zero; ties go to fluid. Cells use the centroid value."""

    mesh = phase.field.space.mesh
    values = phase.values
    nodes = np.where(values >= 0.0, 1, -1)
    centroid = values[mesh.triangles].mean(axis=1)
    cells = np.where(centroid >= 0.0, 1, -1)
    return SharpMask(node_values=nodes, cell_values=cells)


def check_resolution(options: ContinuationOptions, cell_size: float) -> None:
    for eps in options.schedule():
        cells_across = math.pi * eps / cell_size
        if cells_across < options.min_cells_across:
            raise InterfaceUnresolvedError(
                f"eps={eps:.4g} gives {cells_across:.2f} cells across the interface "
                f"(need >= {options.min_cells_across:g}); refine the mesh or stop earlier"
            )


def _l1_to_threshold(phase: PhaseField, disc: Discretization) -> float:
    values = phase.values

    def integrand(quad: ElementQuadrature) -> np.ndarray:
        phi = quad.p1(values)
        return np.abs(phi - np.where(phi >= 0.0, 1.0, -1.0))

    return integrate(disc.mesh, integrand, disc.degree)


def _mismatch(phase: PhaseField, mask: SharpMask, disc: Discretization) -> float:
    """Measure of {sharp fluid, phi < 0}."""

    values = phase.values
    fluid = mask.fluid_cells

    def integrand(quad: ElementQuadrature) -> np.ndarray:
        inside = fluid[quad.triangles][:, None]
        return np.where(inside & (quad.p1(values) < 0.0), 1.0, 0.0)

    return integrate(disc.mesh, integrand, disc.degree)


def run_continuation(
    config: ProblemConfig,
    discretization: Discretization,
    phase_init: Field,
    options: Optional[ContinuationOptions] = None,
) -> ContinuationResult:
    """Optimize on a decreasing epsilon schedule, then extract and evaluate the sharp design."""

    options = options or ContinuationOptions()
    disc = discretization
    check_resolution(options, disc.mesh.cell_size)

    runs: list[tuple[float, float, OptimizationResult]] = []
    current = phase_init
    previous_state: Optional[StateSolution] = None
    for level, eps in enumerate(options.schedule()):
        functional = ReducedFunctional(config, disc, eps)
        if previous_state is not None:
            functional.remember(previous_state)
        start = project_admissible(current, config.beta, eps, disc.lumped)
        result = run_optimization(functional, start, config.optimizer)
        runs.append((eps, functional.alpha.alpha_bar, result))
        current = result.phase.field
        previous_state = result.state
        logger.info(
            "Level %d (eps=%.4g): J=%.10g, margin %.3f, %s",
            level,
            eps,
            result.breakdown.total,
            result.state.margin,
            result.history.reason,
        )

    final_phase = runs[-1][2].phase
    mask = extract_sharp_interface(final_phase)
    sharp_problem = StateProblem(
        viscosity=config.viscosity,
        body_force=config.body_force,
        boundary_data=config.boundary_data,
        phase=final_phase.field,
        alpha=ZeroAlpha(),
        options=config.solver,
    )
    sharp_state = solve_sharp_state(sharp_problem, mask, disc)
    sharp_objective = eval_J0(mask, objective_spec(config), sharp_state, disc.degree)

    levels = []
    for eps, alpha_bar, result in runs:
        gate = check_uniqueness_gate(result.state)
        l1_distance = _l1_to_threshold(result.phase, disc)
        mismatch = _mismatch(result.phase, mask, disc)
        levels.append(
            LevelResult(
                eps=eps,
                alpha_bar=alpha_bar,
                phase=result.phase,
                state=result.state,
                breakdown=result.breakdown,
                history=result.history,
                multiplier=result.gradient.multiplier,
                stationarity=result.stationarity,
                margin=gate.margin,
                margin_class=gate.margin_class,
                l1_distance=l1_distance,
                l1_ratio=l1_distance / eps,
                mismatch=mismatch,
                mismatch_ratio=mismatch / eps,
            )
        )

    logger.info(
        "Sharp design: J0=%.10g (perimeter %.6f, edge count %.6f)",
        sharp_objective.total,
        sharp_objective.perimeter,
        sharp_objective.perimeter_edge_count,
    )
    return ContinuationResult(
        levels=levels,
        sharp_mask=mask,
        sharp_state=sharp_state,
        sharp_objective=sharp_objective,
    )
