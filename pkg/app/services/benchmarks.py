"""Named benchmark presets: boundary data, body forces and initial designs."""

import logging
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.models.alpha import AlphaSchedule
from app.models.expressions import (
    VectorExpression,
    constant_expression,
    polynomial_expression,
    zero_expression,
)
from app.models.fem import Field, Mesh
from app.models.objective import PhaseField
from app.models.optimization import ProblemConfig
from app.models.run_config import BoundarySection, DesignSection, ForcingSection, RunConfig
from app.services.fem_assembly import Discretization, expression_flux, interpolate
from app.services.mesh_builder import build_structured_mesh
from app.services.objective_evaluator import sine_profile

logger = logging.getLogger(__name__)

_SIDE_TOLERANCE = 1e-12


class BenchmarkSetup(BaseModel):
    """Everything a run mode needs: mesh, operators, problem data and starting design."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    run: RunConfig
    mesh: Mesh
    discretization: Discretization
    problem: ProblemConfig
    initial_phase: Field

    def initial_design(self, eps: float) -> PhaseField:
        return PhaseField(field=self.initial_phase, eps=eps, beta=self.problem.beta)


# ---------------------------------------------------------------------------
# Boundary data
# ---------------------------------------------------------------------------


def parabolic_band(s: np.ndarray, lower: float, upper: float) -> np.ndarray:
    """4 (s - lower)(upper - s) / (upper - lower)^2 on (lower, upper), zero elsewhere."""

    inside = (s > lower) & (s < upper)
    return np.where(inside, 4.0 * (s - lower) * (upper - s) / (upper - lower) ** 2, 0.0)


def _side_band(side: str, lower: float, upper: float, direction: tuple[float, float], mesh: Mesh) -> Callable:
    """Parabolic profile on part of one side of the rectangle."""

    width, height = mesh.width, mesh.height
    coordinate = {"left": (0, 0.0, 1), "right": (0, width, 1), "bottom": (1, 0.0, 0), "top": (1, height, 0)}
    if side not in coordinate:
        raise ValueError(f"Unknown side '{side}'")
    normal_axis, offset, tangent_axis = coordinate[side]
    vector = np.asarray(direction, dtype=float)

    def value(points: np.ndarray) -> np.ndarray:
        on_side = np.abs(points[..., normal_axis] - offset) <= _SIDE_TOLERANCE
        profile = np.where(on_side, parabolic_band(points[..., tangent_axis], lower, upper), 0.0)
        return profile[..., None] * vector

    return value


def _combine(parts: list[Callable], weights: list[float], name: str) -> VectorExpression:
    def value(points: np.ndarray) -> np.ndarray:
        total = np.zeros(np.shape(points)[:-1] + (2,))
        for part, weight in zip(parts, weights):
            total = total + weight * part(points)
        return total

    return VectorExpression(name=name, value_fn=value)


def balanced_inflow_outflow(
    mesh: Mesh,
    inflow: Callable,
    outflow: Callable,
    speed: float,
    name: str,
) -> VectorExpression:
    """Scale the outflow so the discrete boundary flux of the combined data vanishes."""

    space = Discretization(mesh).velocity
    flux_in = expression_flux(space, VectorExpression(name=f"{name}-in", value_fn=inflow))
    flux_out = expression_flux(space, VectorExpression(name=f"{name}-out", value_fn=outflow))
    if flux_out == 0.0:
        raise ValueError(f"{name}: the outflow band carries no flux on this mesh")
    scale = -flux_in / flux_out
    logger.debug("%s: inflow flux %.6g, outflow scaled by %.6g", name, speed * flux_in, scale)
    return _combine([inflow, outflow], [speed, speed * scale], name)


def poiseuille_data(mesh: Mesh, speed: float) -> VectorExpression:
    """u = (4 y (H - y) / H^2 * speed, 0), used as boundary data on every side."""

    height = mesh.height

    def value(points: np.ndarray) -> np.ndarray:
        y = points[..., 1]
        ux = 4.0 * speed * y * (height - y) / height**2
        return np.stack([ux, np.zeros_like(ux)], axis=-1)

    def jacobian(points: np.ndarray) -> np.ndarray:
        y = points[..., 1]
        jac = np.zeros(points.shape[:-1] + (2, 2))
        jac[..., 0, 1] = 4.0 * speed * (height - 2.0 * y) / height**2
        return jac

    return VectorExpression(name="poiseuille", value_fn=value, jacobian_fn=jacobian)


def boundary_expression(section: BoundarySection, mesh: Mesh) -> VectorExpression:
    width, height = mesh.width, mesh.height
    preset = section.preset
    if preset in ("poiseuille", "obstacle"):
        return poiseuille_data(mesh, section.speed)
    if preset == "noslip":
        return zero_expression()
    if preset == "polynomial":
        return polynomial_expression(section.polynomial.x, section.polynomial.y, name="boundary")

    if preset == "pipe":
        half = 0.5 * section.opening * height
        inflow = _side_band("left", 0.5 * height - half, 0.5 * height + half, (1.0, 0.0), mesh)
        outflow = _side_band("right", 0.5 * height - half, 0.5 * height + half, (1.0, 0.0), mesh)
    elif preset == "diffuser":
        inflow = _side_band("left", 0.0, height, (1.0, 0.0), mesh)
        outflow = _side_band("right", height / 3.0, 2.0 * height / 3.0, (1.0, 0.0), mesh)
    elif preset == "pipe_bend":
        inflow = _side_band("left", 0.7 * height, 0.9 * height, (1.0, 0.0), mesh)
        outflow = _side_band("bottom", 0.7 * width, 0.9 * width, (0.0, -1.0), mesh)
    else:
        raise ValueError(f"Unknown boundary preset '{preset}'")
    return balanced_inflow_outflow(mesh, inflow, outflow, section.speed, preset)


# ---------------------------------------------------------------------------
# Body force and design
# ---------------------------------------------------------------------------


def forcing_expression(section: ForcingSection) -> VectorExpression:
    if section.preset == "zero":
        return zero_expression()
    if section.preset == "constant":
        return constant_expression(section.value, name="body-force")
    return polynomial_expression(section.polynomial.x, section.polynomial.y, name="body-force")


def initial_design(section: DesignSection, beta: float, eps: float, discretization: Discretization) -> Field:
    """Starting phase field: uniform value, solid square obstacle or solid disc in the center."""

    space = discretization.design
    mesh = discretization.mesh
    nodes = space.node_coordinates
    center = np.array([0.5 * mesh.width, 0.5 * mesh.height])

    if section.preset == "uniform":
        value = beta if section.value is None else section.value
        return interpolate(space, value)
    if section.preset == "obstacle":
        distance = np.max(np.abs(nodes - center), axis=1) - 0.5 * section.size
    else:
        distance = np.linalg.norm(nodes - center, axis=1) - section.size
    return Field(space=space, values=sine_profile(distance, eps))


# ---------------------------------------------------------------------------
# Assembly of a complete setup
# ---------------------------------------------------------------------------


def problem_config(run: RunConfig, mesh: Mesh) -> ProblemConfig:
    physics = run.physics
    return ProblemConfig(
        viscosity=physics.viscosity,
        body_force=forcing_expression(physics.body_force),
        boundary_data=boundary_expression(physics.boundary, mesh),
        beta=physics.beta,
        gamma=physics.gamma,
        alpha_schedule=AlphaSchedule(
            a0=run.alpha.a0,
            exponent=run.alpha.exponent,
            smoothing=run.alpha.smoothing,
            delta=run.alpha.delta,
        ),
        solver=run.solver,
        optimizer=run.optimizer,
    )


def build_benchmark(run: RunConfig, degree: Optional[int] = None) -> BenchmarkSetup:
    """Mesh, discretization, problem data and initial design described by ``run``."""

    section = run.mesh
    mesh = build_structured_mesh(section.nx, section.ny, section.width, section.height, section.diagonal)
    discretization = Discretization(mesh, degree)
    problem = problem_config(run, mesh)
    phase = initial_design(run.physics.design, run.physics.beta, run.continuation.eps0, discretization)
    logger.info(
        "Benchmark %s on %dx%d %s mesh (%d vertices)",
        run.physics.boundary.preset,
        section.nx,
        section.ny,
        section.diagonal,
        mesh.vertex_count,
    )
    return BenchmarkSetup(
        run=run,
        mesh=mesh,
        discretization=discretization,
        problem=problem,
        initial_phase=phase,
    )
