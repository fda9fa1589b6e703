"""Geometric variations: design velocities, transport, linearized state and shape derivative.

The linearized system is obtained by pulling the state equation back along
T_t and differentiating at t = 0. For a test function v it reads

    J(u)[du, dp] = int H : Dv + h . v,   B du = c

with H = mu Du DV + mu Du DV^T - p DV^T - div V (mu Du - p I),
h = Du DV u + Df V - div V (alpha u + Du u - f) and c_a = int N_a (tr(Du DV) - div V div u),
where du is the material derivative of the velocity.
"""

import logging
from typing import Optional

import numpy as np

from app.models.expressions import VectorExpression
from app.models.fem import Field, Mesh
from app.models.objective import ObjectiveSpec, PhaseField
from app.models.optimization import LevelResult, ProblemConfig
from app.models.shape import DesignVelocity, GeometricResidual, ShapeSweepRow, TransportFlow
from app.models.state import StateProblem, StateSolution
from app.services.adjoint_gradient import objective_spec
from app.services.fem_assembly import (
    Discretization,
    ElementQuadrature,
    assemble_p1_functional,
    assemble_velocity_functional,
    evaluate_at_points,
    integrate,
)
from app.services.quadrature import interval_rule
from app.services.state_solver import StateSolveError, problem_system

logger = logging.getLogger(__name__)

ADMISSIBILITY_TOLERANCE = 1e-10
_DOMAIN_TOLERANCE = 1e-8
_TRACE_TOLERANCE = 1e-14
_RESIDUAL_FLOOR = 1e-14


class InadmissibleVelocityError(ValueError):
    """V . n != 0 on the boundary or V != 0 where the boundary data is nonzero."""


class FlowLeftDomainError(RuntimeError):
    """A node was transported outside the closed domain."""


class UncertifiedLinearizationError(RuntimeError):
    """The state margin does not certify the linearized operator."""


# ---------------------------------------------------------------------------
# Design velocities
# ---------------------------------------------------------------------------


def _boundary_samples(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Points on every boundary edge (ends and Gauss points) with their normals."""

    nodes, _ = interval_rule(4)
    fractions = np.concatenate([[0.0], nodes, [1.0]])
    start = mesh.vertices[mesh.boundary_edges[:, 0]]
    end = mesh.vertices[mesh.boundary_edges[:, 1]]
    points = start[:, None, :] + fractions[None, :, None] * (end - start)[:, None, :]
    normals = np.broadcast_to(mesh.boundary_normals[:, None, :], points.shape)
    return points.reshape(-1, 2), normals.reshape(-1, 2)


def validate_design_velocity(
    velocity: DesignVelocity,
    mesh: Mesh,
    boundary_data: Optional[VectorExpression] = None,
) -> DesignVelocity:
    """Reject fields that cross the boundary or move nodes carrying inflow data."""

    points, normals = _boundary_samples(mesh)
    values = velocity.value(points)
    normal_part = np.abs(np.einsum("ni,ni->n", values, normals))
    if np.max(normal_part) > ADMISSIBILITY_TOLERANCE:
        raise InadmissibleVelocityError(
            f"{velocity.name}: |V.n| reaches {np.max(normal_part):.3e} on the boundary"
        )
    if boundary_data is not None:
        carrying = np.linalg.norm(boundary_data.value(points), axis=1) > _TRACE_TOLERANCE
        moved = np.linalg.norm(values, axis=1) > ADMISSIBILITY_TOLERANCE
        if np.any(carrying & moved):
            raise InadmissibleVelocityError(
                f"{velocity.name}: V is nonzero where the boundary data is nonzero"
            )
    return velocity


def bump_velocity(
    name: str,
    center: tuple[float, float],
    radius: float,
    direction: str,
) -> DesignVelocity:
    """V = b(x) w(x) with the C2 bump b = (1 - r^2/radius^2)^3 on the disc.

    ``direction`` selects w: ``x``, ``y`` (translations), ``rotation``,
    ``dilation``, ``shear_x`` (w = (y, 0)) or ``shear_y`` (w = (0, x)),
    all relative to ``center``.
    """

    cx, cy = center
    directions = {
        "x": (lambda d: np.stack([np.ones_like(d[..., 0]), np.zeros_like(d[..., 0])], axis=-1), np.zeros((2, 2))),
        "y": (lambda d: np.stack([np.zeros_like(d[..., 0]), np.ones_like(d[..., 0])], axis=-1), np.zeros((2, 2))),
        "rotation": (lambda d: np.stack([-d[..., 1], d[..., 0]], axis=-1), np.array([[0.0, -1.0], [1.0, 0.0]])),
        "dilation": (lambda d: d.copy(), np.eye(2)),
        "shear_x": (lambda d: np.stack([d[..., 1], np.zeros_like(d[..., 0])], axis=-1), np.array([[0.0, 1.0], [0.0, 0.0]])),
        "shear_y": (lambda d: np.stack([np.zeros_like(d[..., 0]), d[..., 0]], axis=-1), np.array([[0.0, 0.0], [1.0, 0.0]])),
    }
    if direction not in directions:
        raise ValueError(f"Unknown bump direction '{direction}'")
    direction_fn, direction_jacobian = directions[direction]

    def bump(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        offset = points - np.array([cx, cy])
        s = 1.0 - np.einsum("...i,...i->...", offset, offset) / radius**2
        inside = s > 0.0
        s = np.where(inside, s, 0.0)
        value = s**3
        grad = (-6.0 / radius**2) * (s**2)[..., None] * offset
        return offset, value, grad

    def value_fn(points: np.ndarray) -> np.ndarray:
        offset, b, _ = bump(points)
        return b[..., None] * direction_fn(offset)

    def jacobian_fn(points: np.ndarray) -> np.ndarray:
        offset, b, grad_b = bump(points)
        w = direction_fn(offset)
        return w[..., :, None] * grad_b[..., None, :] + b[..., None, None] * direction_jacobian

    return DesignVelocity(name=name, value_fn=value_fn, jacobian_fn=jacobian_fn)


def canonical_velocity_family(mesh: Mesh) -> list[DesignVelocity]:
    """Eight interior fields: two translations, rotation, dilation, two shears, two off-center translations."""

    center = (0.5 * mesh.width, 0.5 * mesh.height)
    radius = 0.4 * min(mesh.width, mesh.height)
    half = 0.5 * radius
    family = [
        bump_velocity("translate_x", center, radius, "x"),
        bump_velocity("translate_y", center, radius, "y"),
        bump_velocity("rotate", center, radius, "rotation"),
        bump_velocity("dilate", center, radius, "dilation"),
        bump_velocity("shear_x", center, radius, "shear_x"),
        bump_velocity("shear_y", center, radius, "shear_y"),
        bump_velocity("translate_x_right", (center[0] + half, center[1]), half, "x"),
        bump_velocity("translate_y_low", (center[0], center[1] - half), half, "y"),
    ]
    return [validate_design_velocity(velocity, mesh) for velocity in family]


# ---------------------------------------------------------------------------
# Transport
# ---------------------------------------------------------------------------


def transport_design(phase: PhaseField, flow: TransportFlow, t: float) -> PhaseField:
    """phi o T_t^{-1} at the nodes, re-clipped to [-1, 1]."""

    if t == 0.0:
        return phase
    space = phase.field.space
    mesh = space.mesh
    origins = flow.inverse(space.node_coordinates, t)
    excess = np.maximum.reduce(
        [
            -origins[:, 0],
            origins[:, 0] - mesh.width,
            -origins[:, 1],
            origins[:, 1] - mesh.height,
        ]
    )
    if np.max(excess) > _DOMAIN_TOLERANCE:
        raise FlowLeftDomainError(
            f"flow of {flow.velocity.name} moved a node {np.max(excess):.3e} outside the domain at t={t:g}"
        )
    values = np.clip(evaluate_at_points(phase.field, origins), -1.0, 1.0)
    return phase.with_values(values)


# ---------------------------------------------------------------------------
# Linearized geometric state
# ---------------------------------------------------------------------------


def _shape_coefficients(problem: StateProblem, state: StateSolution, velocity: DesignVelocity):
    u = state.velocity.values
    p = state.pressure.values
    phi = problem.phase.values
    mu = problem.viscosity

    def fields(quad: ElementQuadrature):
        du = quad.vector_gradient(u)
        dv = velocity.jacobian(quad.points)
        return du, dv, np.einsum("tqii->tq", dv)

    def momentum_gradient(quad: ElementQuadrature) -> np.ndarray:
        du, dv, div_v = fields(quad)
        pressure = quad.p1(p)
        eye = np.eye(2)
        stress = mu * du - pressure[..., None, None] * eye
        return (
            mu * np.einsum("tqik,tqkj->tqij", du, dv)
            + mu * np.einsum("tqik,tqjk->tqij", du, dv)
            - pressure[..., None, None] * np.swapaxes(dv, -1, -2)
            - div_v[..., None, None] * stress
        )

    def momentum_value(quad: ElementQuadrature) -> np.ndarray:
        du, dv, div_v = fields(quad)
        vel = quad.vector(u)
        alpha = problem.alpha.value(quad.p1(phi))
        force = problem.body_force.value(quad.points)
        force_jac = problem.body_force.jacobian(quad.points)
        v_values = velocity.value(quad.points)
        convect = np.einsum("tqij,tqj->tqi", du, vel)
        return (
            np.einsum("tqik,tqkj,tqj->tqi", du, dv, vel)
            + np.einsum("tqij,tqj->tqi", force_jac, v_values)
            - div_v[..., None] * (alpha[..., None] * vel + convect - force)
        )

    def continuity(quad: ElementQuadrature) -> np.ndarray:
        du, dv, div_v = fields(quad)
        return np.einsum("tqij,tqji->tq", du, dv) - div_v * np.einsum("tqii->tq", du)

    return momentum_gradient, momentum_value, continuity


def divergence_target(
    problem: StateProblem,
    state: StateSolution,
    velocity: DesignVelocity,
    discretization: Discretization,
) -> np.ndarray:
    """c_a = int N_a (tr(Du DV) - div V div u), shifted to zero total by the lumped weights."""

    _, _, continuity = _shape_coefficients(problem, state, velocity)
    disc = discretization
    target = assemble_p1_functional(disc.pressure, continuity, None, disc.degree)
    return target - disc.lumped * (np.sum(target) / disc.mesh.measure)


def solve_linearized_geometric(
    problem: StateProblem,
    state: StateSolution,
    velocity: DesignVelocity,
    discretization: Optional[Discretization] = None,
) -> Field:
    """Material derivative of the velocity along the flow of ``velocity``."""

    disc = discretization or Discretization(problem.phase.space.mesh)
    if state.margin >= 1.0:
        raise UncertifiedLinearizationError(
            f"margin {state.margin:.3f} >= 1 does not certify the linearized operator"
        )
    system = problem_system(problem, disc)
    momentum_gradient, momentum_value, _ = _shape_coefficients(problem, state, velocity)
    rhs = np.zeros(system.size)
    rhs[: system.velocity_size] = assemble_velocity_functional(
        disc.velocity, momentum_value, momentum_gradient, disc.degree
    )
    rhs[system.velocity_size :] = -divergence_target(problem, state, velocity, disc)
    if not np.any(rhs):
        return Field.zeros(disc.velocity)

    x = np.concatenate([state.velocity.values, state.pressure.values])
    try:
        solution = system.solve(system.jacobian(x), rhs, np.zeros(system.size))
    except StateSolveError as exc:
        raise UncertifiedLinearizationError(f"linearized geometric system failed: {exc}") from exc
    return system.velocity_field(solution)


def divergence_identity_residual(
    problem: StateProblem,
    state: StateSolution,
    velocity: DesignVelocity,
    material_derivative: Field,
    discretization: Optional[Discretization] = None,
) -> float:
    """max_a |int N_a div du - c_a| over all pressure test functions, c from ``divergence_target``.

    Differentiating the transported constraint det(DT_t) tr(DT_t^{-1} Du_t) = 0
    at t = 0 gives div du = tr(Du DV) - div V div u. For a pointwise
    divergence-free u the second term vanishes and the target reduces to
    Du^T : DV. A discretely divergence-free P2 velocity is only orthogonal to
    P1, so div u is nonzero pointwise and the term is kept.

    The target equals div((Du) V - (div u) V) and integrates to zero for V
    vanishing on the boundary. Du jumps across element edges and the bump
    fields are not polynomial, so the assembled vector sums to a small
    nonzero value. B du sums to the boundary flux of du, which is zero, so
    the constant mode is removed with the lumped weights before comparing.
    """

    disc = discretization or Discretization(problem.phase.space.mesh)
    defect = disc.divergence @ material_derivative.values - divergence_target(problem, state, velocity, disc)
    return float(np.max(np.abs(defect))) if defect.size else 0.0


# ---------------------------------------------------------------------------
# Shape derivative
# ---------------------------------------------------------------------------


def eval_shape_derivative(
    problem: StateProblem,
    state: StateSolution,
    material_derivative: Field,
    velocity: DesignVelocity,
    spec: ObjectiveSpec,
    eps: float,
    discretization: Optional[Discretization] = None,
) -> float:
    """d/dt j_eps(phi o T_t^{-1}) at t = 0."""

    disc = discretization or Discretization(problem.phase.space.mesh)
    u = state.velocity.values
    du_dot = material_derivative.values
    phi = problem.phase.values
    mu = spec.viscosity
    gamma = spec.gamma

    def integrand(quad: ElementQuadrature) -> np.ndarray:
        vel = quad.vector(u)
        vel_dot = quad.vector(du_dot)
        du = quad.vector_gradient(u)
        du_dot_grad = quad.vector_gradient(du_dot)
        dv = velocity.jacobian(quad.points)
        div_v = np.einsum("tqii->tq", dv)
        v_values = velocity.value(quad.points)
        phase = quad.p1(phi)
        grad_phi = quad.p1_gradient(phi)
        alpha = problem.alpha.value(phase)
        force = spec.body_force.value(quad.points)
        force_jac = spec.body_force.jacobian(quad.points)

        speed2 = np.einsum("tqi,tqi->tq", vel, vel)
        alpha_part = alpha * (np.einsum("tqi,tqi->tq", vel, vel_dot) + 0.5 * speed2 * div_v)
        du_dv = np.einsum("tqik,tqkj->tqij", du, dv)
        power = (
            mu * np.einsum("tqij,tqij->tq", du, du_dot_grad - du_dv)
            - np.einsum("tqi,tqi->tq", force, vel_dot)
            - np.einsum("tqij,tqj,tqi->tq", force_jac, v_values, vel)
            + (0.5 * mu * np.einsum("tqij,tqij->tq", du, du) - np.einsum("tqi,tqi->tq", force, vel)) * div_v
        )
        potential = 0.5 * (1.0 - phase**2)
        interface = gamma * (
            (0.5 * eps * np.einsum("tqi,tqi->tq", grad_phi, grad_phi) + potential / eps) * div_v
            - eps * np.einsum("tqi,tqij,tqj->tq", grad_phi, dv, grad_phi)
        )
        return alpha_part + power + interface

    return integrate(disc.mesh, integrand, disc.degree)


def multiplier_term(phase: PhaseField, velocity: DesignVelocity, multiplier: float, discretization: Discretization) -> float:
    """lambda * int phi div V dx."""

    values = phase.values
    return multiplier * integrate(
        discretization.mesh,
        lambda quad: quad.p1(values) * velocity.divergence(quad.points),
        discretization.degree,
    )


def optimality_residual_geometric(
    problem: StateProblem,
    state: StateSolution,
    phase: PhaseField,
    multiplier: float,
    family: list[DesignVelocity],
    spec: ObjectiveSpec,
    discretization: Optional[Discretization] = None,
) -> list[GeometricResidual]:
    """r(V) = dj_eps(V) + lambda int phi div V for every field in ``family``."""

    disc = discretization or Discretization(problem.phase.space.mesh)
    rows = []
    for velocity in family:
        material = solve_linearized_geometric(problem, state, velocity, disc)
        derivative = eval_shape_derivative(problem, state, material, velocity, spec, phase.eps, disc)
        lam_term = multiplier_term(phase, velocity, multiplier, disc)
        residual = derivative + lam_term
        scale = max(abs(derivative), abs(lam_term), _RESIDUAL_FLOOR)
        rows.append(
            GeometricResidual(
                velocity=velocity.name,
                derivative=derivative,
                multiplier_term=lam_term,
                residual=residual,
                normalized=abs(residual) / scale,
            )
        )
    return rows


def level_problem(config: ProblemConfig, level: LevelResult) -> StateProblem:
    return StateProblem(
        viscosity=config.viscosity,
        body_force=config.body_force,
        boundary_data=config.boundary_data,
        phase=level.phase.field,
        alpha=config.alpha_schedule.at(level.eps),
        options=config.solver,
    )


def shape_derivative_eps_sweep(
    config: ProblemConfig,
    levels: list[LevelResult],
    velocity: DesignVelocity,
    discretization: Discretization,
) -> list[ShapeSweepRow]:
    """dj_eps(V) per continuation level with consecutive Cauchy differences."""

    spec = objective_spec(config)
    rows: list[ShapeSweepRow] = []
    previous: Optional[float] = None
    for level in levels:
        problem = level_problem(config, level)
        material = solve_linearized_geometric(problem, level.state, velocity, discretization)
        derivative = eval_shape_derivative(
            problem, level.state, material, velocity, spec, level.eps, discretization
        )
        rows.append(
            ShapeSweepRow(
                eps=level.eps,
                derivative=derivative,
                cauchy_difference=None if previous is None else abs(derivative - previous),
            )
        )
        previous = derivative
        logger.debug("Sweep eps=%.4g: derivative %.8g", level.eps, derivative)
    return rows

