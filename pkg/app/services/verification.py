"""Finite-difference and Gamma-limit verification tables."""

import logging
import math
from typing import Iterable

import numpy as np

from app.models.objective import C0, PhaseField
from app.models.shape import DesignVelocity, GammaCheckRow, GradientCheckRow, ShapeCheckRow, TransportFlow
from app.services.adjoint_gradient import ReducedFunctional, directional_derivative
from app.services.fem_assembly import Discretization, interpolate
from app.services.mesh_builder import build_structured_mesh
from app.services.objective_evaluator import eval_ginzburg_landau, straight_interface_phase
from app.services.shape_calculus import eval_shape_derivative, solve_linearized_geometric, transport_design

logger = logging.getLogger(__name__)

_DERIVATIVE_FLOOR = 1e-300


class VerificationFailedError(RuntimeError):
    """A verification table missed its tolerance."""


def _relative_error(reference: float, approximation: float) -> float:
    return abs(approximation - reference) / max(abs(reference), _DERIVATIVE_FLOOR)


def feasible_directions(phase: PhaseField, count: int, seed: int) -> list[np.ndarray]:
    """Random directions scaled by 1 - |phi| so that phi +/- t*d stays in [-1, 1] for t <= 1."""

    rng = np.random.default_rng(seed)
    room = 1.0 - np.abs(phase.values)
    return [rng.uniform(-1.0, 1.0, size=phase.values.shape) * room for _ in range(count)]


def gradient_check(
    functional: ReducedFunctional,
    phase: PhaseField,
    steps: Iterable[float],
    directions: list[np.ndarray],
) -> list[GradientCheckRow]:
    """Adjoint directional derivative against central differences of j_eps (the V-curve)."""

    breakdown, state = functional.evaluate(phase)
    gradient = functional.gradient(phase, state)
    rows: list[GradientCheckRow] = []
    for index, direction in enumerate(directions):
        derivative = directional_derivative(gradient, direction)
        for step in steps:
            functional.remember(state)
            forward, _ = functional.evaluate(phase.with_values(phase.values + step * direction))
            functional.remember(state)
            backward, _ = functional.evaluate(phase.with_values(phase.values - step * direction))
            difference = (forward.total - backward.total) / (2.0 * step)
            rows.append(
                GradientCheckRow(
                    direction=index,
                    step=step,
                    derivative=derivative,
                    finite_difference=difference,
                    relative_error=_relative_error(derivative, difference),
                )
            )
            logger.debug("direction %d step %.1e: relative error %.3e", index, step, rows[-1].relative_error)
    functional.remember(state)
    logger.info("Gradient check at J=%.10g over %d directions", breakdown.total, len(directions))
    return rows


def shape_check(
    functional: ReducedFunctional,
    phase: PhaseField,
    velocities: list[DesignVelocity],
    steps: Iterable[float],
) -> list[ShapeCheckRow]:
    """Shape derivative formula against central differences of j_eps on transported designs."""

    _, state = functional.evaluate(phase)
    problem = functional.problem(phase)
    rows: list[ShapeCheckRow] = []
    for velocity in velocities:
        material = solve_linearized_geometric(problem, state, velocity, functional.disc)
        derivative = eval_shape_derivative(
            problem, state, material, velocity, functional.spec, phase.eps, functional.disc
        )
        flow = TransportFlow(velocity=velocity)
        for step in steps:
            functional.remember(state)
            forward, _ = functional.evaluate(transport_design(phase, flow, step))
            functional.remember(state)
            backward, _ = functional.evaluate(transport_design(phase, flow, -step))
            difference = (forward.total - backward.total) / (2.0 * step)
            rows.append(
                ShapeCheckRow(
                    velocity=velocity.name,
                    step=step,
                    derivative=derivative,
                    finite_difference=difference,
                    relative_error=_relative_error(derivative, difference),
                )
            )
        logger.info("Shape check %s: derivative %.8g", velocity.name, derivative)
    functional.remember(state)
    return rows


def gamma_profile(eps: float, cells: int, width: float = 1.0, height: float = 1.0) -> PhaseField:
    """Clipped-sine profile across x = width/2 on a cells x cells mesh."""

    mesh = build_structured_mesh(cells, cells, width, height)
    return straight_interface_phase(interpolate(Discretization(mesh).design, 0.0), eps, 0.0, 0.5 * width)


def gamma_check(
    eps: float,
    base_cells: int,
    levels: int,
    width: float = 1.0,
    height: float = 1.0,
) -> list[GammaCheckRow]:
    """GL energy of the straight clipped-sine interface x = width/2 under mesh refinement.

    The exact profile has energy c0 * height for every eps, so the table
    isolates the discretization error of the Gamma-limit constant.
    """

    rows: list[GammaCheckRow] = []
    expected = C0 * height
    for level in range(levels):
        phase = gamma_profile(eps, base_cells * 2**level, width, height)
        mesh = phase.field.space.mesh
        energy = eval_ginzburg_landau(phase, 1.0)
        rows.append(
            GammaCheckRow(
                eps=eps,
                cells_across=math.pi * eps / mesh.cell_size,
                energy=energy,
                expected=expected,
                relative_error=_relative_error(expected, energy),
            )
        )
    return rows


def best_errors(rows: list, key: str) -> dict:
    """Smallest relative error per direction or velocity, the bottom of each V-curve."""

    best: dict = {}
    for row in rows:
        label = getattr(row, key)
        best[label] = min(best.get(label, math.inf), row.relative_error)
    return best


def require_gradient_agreement(rows: list[GradientCheckRow], tolerance: float) -> None:
    failing = {k: v for k, v in best_errors(rows, "direction").items() if v > tolerance}
    if failing:
        raise VerificationFailedError(
            f"gradient check above {tolerance:g} for directions {sorted(failing)}: "
            + ", ".join(f"{v:.3e}" for v in failing.values())
        )


def require_shape_agreement(rows: list[ShapeCheckRow], tolerance: float) -> None:
    failing = {k: v for k, v in best_errors(rows, "velocity").items() if v > tolerance}
    if failing:
        raise VerificationFailedError(
            f"shape check above {tolerance:g} for {', '.join(sorted(failing))}"
        )


def require_gamma_limit(rows: list[GammaCheckRow], tolerance: float, min_cells: float = 8.0) -> None:
    """Resolved rows within ``tolerance`` and errors nonincreasing under refinement."""

    for row in rows:
        if row.cells_across >= min_cells and row.relative_error > tolerance:
            raise VerificationFailedError(
                f"GL energy off by {row.relative_error:.3%} at {row.cells_across:.1f} cells across"
            )
    errors = [row.relative_error for row in rows]
    if any(later > earlier for earlier, later in zip(errors, errors[1:])):
        raise VerificationFailedError(f"GL energy error not monotone under refinement: {errors}")
