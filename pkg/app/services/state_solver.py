"""Brinkman-penalized stationary Navier-Stokes: lift, Picard/Newton solve, sharp solve."""

import logging
import math
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from app.models.alpha import AlphaInterpolation, ZeroAlpha
from app.models.expressions import VectorExpression, zero_expression
from app.models.fem import Field
from app.models.objective import SharpMask
from app.models.state import SolverOptions, StateProblem, StateSolution
from app.services.fem_assembly import (
    Discretization,
    assemble_convection,
    assemble_load,
    assemble_transposed_convection,
    assemble_weighted_mass,
    boundary_flux,
    interpolate,
)

logger = logging.getLogger(__name__)

FLUX_TOLERANCE = 1e-10
_ROUNDOFF_FLOOR = 1e-8
_TRACE_TOLERANCE = 1e-14


class FluxCompatibilityError(ValueError):
    """Boundary data with nonzero net flux."""

    def __init__(self, flux: float, component: Optional[int] = None):
        self.flux = flux
        where = "" if component is None else f" on fluid component {component}"
        super().__init__(
            f"boundary data violates flux compatibility{where}: "
            f"|flux|={abs(flux):.3e} > {FLUX_TOLERANCE:g}"
        )


class EmptyAdmissibleSetError(ValueError):
    """The sharp design masks Dirichlet nodes carrying nonzero data."""


class StateSolveError(RuntimeError):
    """Nonlinear or linear solve failure, carrying the residual history."""

    def __init__(self, message: str, residual_history: Optional[list[float]] = None):
        self.residual_history = list(residual_history or [])
        super().__init__(message)


# ---------------------------------------------------------------------------
# Constants and diagnostics
# ---------------------------------------------------------------------------


def continuity_constant(measure: float, dimension: int = 2) -> float:
    """K_Omega bounding |b(u, v, w)| <= K ||grad u|| ||grad v|| ||grad w||."""

    if dimension == 2:
        return math.sqrt(measure) / 2.0
    if dimension == 3:
        return 2.0 * math.sqrt(2.0) * measure ** (1.0 / 6.0) / 3.0
    raise ValueError("dimension must be 2 or 3")


def margin_from_norm(gradient_norm: float, viscosity: float, measure: float, dimension: int = 2) -> float:
    return continuity_constant(measure, dimension) * gradient_norm / viscosity


def uniqueness_margin(
    velocity: Field,
    viscosity: float,
    discretization: Optional[Discretization] = None,
    dimension: int = 2,
) -> float:
    """K_Omega ||grad u|| / mu; below 1 the state is the unique one."""

    if viscosity <= 0:
        raise ValueError("viscosity must be greater than 0")
    disc = discretization or Discretization(velocity.space.mesh)
    return margin_from_norm(disc.gradient_norm(velocity), viscosity, disc.mesh.measure, dimension)


# ---------------------------------------------------------------------------
# Saddle-point system
# ---------------------------------------------------------------------------


class SaddleSystem:
    """Discrete momentum/continuity system for one phase field.

    Unknowns are ``x = [u; p]``. The linear part is
    ``[[M_alpha + mu K, -B^T], [-B, 0]]``; ``fixed`` marks eliminated
    unknowns (Dirichlet velocity dofs and pinned pressure dofs).
    """

    def __init__(
        self,
        discretization: Discretization,
        viscosity: float,
        alpha_mass: sp.csr_matrix,
        load: np.ndarray,
        fixed: np.ndarray,
    ):
        self.disc = discretization
        self.viscosity = viscosity
        self.alpha_mass = alpha_mass
        self.load = load
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        self.fixed_index = np.flatnonzero(fixed)
        self.velocity_size = discretization.velocity.dof_count
        self.size = self.velocity_size + discretization.pressure.dof_count
        self.linear_velocity = (alpha_mass + viscosity * discretization.velocity_stiffness).tocsr()
        self.rhs = np.concatenate([load, np.zeros(discretization.pressure.dof_count)])

    def velocity_field(self, x: np.ndarray) -> Field:
        return Field(space=self.disc.velocity, values=x[: self.velocity_size].copy())

    def pressure_field(self, x: np.ndarray) -> Field:
        return Field(space=self.disc.pressure, values=x[self.velocity_size :].copy())

    def block(self, velocity_block: sp.spmatrix) -> sp.csr_matrix:
        divergence = self.disc.divergence
        return sp.bmat([[velocity_block, -divergence.T], [-divergence, None]], format="csr")

    def stokes_matrix(self) -> sp.csr_matrix:
        return self.block(self.linear_velocity)

    def picard_matrix(self, x: np.ndarray) -> sp.csr_matrix:
        return self.block(self.linear_velocity + assemble_convection(self.velocity_field(x), self.disc.degree))

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        velocity = self.velocity_field(x)
        return self.block(
            self.linear_velocity
            + assemble_convection(velocity, self.disc.degree)
            + assemble_transposed_convection(velocity, self.disc.degree)
        )

    def residual(self, x: np.ndarray) -> np.ndarray:
        velocity = self.velocity_field(x)
        convection = assemble_convection(velocity, self.disc.degree) @ velocity.values
        matrix = self.stokes_matrix()
        result = matrix @ x - self.rhs
        result[: self.velocity_size] += convection
        return result

    def residual_norm(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.residual(x)[self.free]))

    def operator_scale(self, x: np.ndarray) -> float:
        """Size of the balancing terms: max(||rhs||, ||A_lin x||) on the free rows."""
        linear = (self.stokes_matrix() @ x)[self.free]
        return max(float(np.linalg.norm(self.rhs[self.free])), float(np.linalg.norm(linear)))

    def solve(self, matrix: sp.spmatrix, rhs: np.ndarray, fixed_values: np.ndarray) -> np.ndarray:
        """Solve ``matrix x = rhs`` on the free unknowns with x fixed elsewhere."""

        x = np.where(self.fixed, fixed_values, 0.0)
        if self.free.size == 0:
            return x
        matrix = sp.csr_matrix(matrix)
        reduced_rhs = rhs[self.free] - matrix[self.free][:, self.fixed_index] @ x[self.fixed_index]
        x[self.free] = factorize(matrix[self.free][:, self.free])(reduced_rhs)
        return x

    def solve_transposed(self, matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
        """Solve ``matrix^T y = rhs`` with y = 0 on the fixed unknowns."""

        y = np.zeros(self.size)
        if self.free.size == 0:
            return y
        reduced = sp.csr_matrix(matrix)[self.free][:, self.free]
        y[self.free] = factorize(reduced.T)(rhs[self.free])
        return y


def factorize(matrix: sp.spmatrix):
    """Sparse LU solve callable; singular or non-finite results raise StateSolveError."""

    try:
        lu = splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        raise StateSolveError(f"singular linear system: {exc}") from exc

    def solve(rhs: np.ndarray) -> np.ndarray:
        solution = lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(solution)):
            raise StateSolveError("linear solve produced non-finite values")
        return solution

    return solve


def _fixed_mask(disc: Discretization, pinned_pressure: np.ndarray) -> np.ndarray:
    pressure_fixed = np.zeros(disc.pressure.dof_count, dtype=bool)
    pressure_fixed[pinned_pressure] = True
    return np.concatenate([disc.velocity.dirichlet_mask, pressure_fixed])


def _fixed_values(disc: Discretization, boundary: Field) -> np.ndarray:
    values = np.zeros(disc.velocity.dof_count + disc.pressure.dof_count)
    values[: disc.velocity.dof_count] = np.where(disc.velocity.dirichlet_mask, boundary.values, 0.0)
    return values


def _build_system(
    disc: Discretization,
    viscosity: float,
    phase: Field,
    alpha: AlphaInterpolation,
    body_force: VectorExpression,
    fixed: Optional[np.ndarray] = None,
) -> SaddleSystem:
    alpha_mass = assemble_weighted_mass(disc.velocity, phase, alpha.value, disc.degree)
    load = assemble_load(disc.velocity, body_force, disc.degree)
    if fixed is None:
        fixed = _fixed_mask(disc, np.array([0]))
    return SaddleSystem(disc, viscosity, alpha_mass, load, fixed)


def problem_system(problem: StateProblem, discretization: Optional[Discretization] = None) -> SaddleSystem:
    """Saddle system of ``problem`` with Dirichlet velocity and pressure dof 0 eliminated."""

    disc = discretization or Discretization(problem.phase.space.mesh)
    return _build_system(
        disc, problem.viscosity, problem.phase, problem.alpha, problem.body_force
    )


# ---------------------------------------------------------------------------
# Boundary lift
# ---------------------------------------------------------------------------


def check_flux(boundary: Field) -> float:
    flux = boundary_flux(boundary)
    if abs(flux) > FLUX_TOLERANCE:
        raise FluxCompatibilityError(flux)
    return flux


def lift_boundary_data(
    problem: StateProblem,
    discretization: Optional[Discretization] = None,
) -> Field:
    """Discretely divergence-free extension of the boundary data (Stokes solve, mu=1)."""

    disc = discretization or Discretization(problem.phase.space.mesh)
    boundary = interpolate(disc.velocity, problem.boundary_data)
    check_flux(boundary)
    if not np.any(boundary.values[disc.velocity.dirichlet_mask]):
        return Field.zeros(disc.velocity)

    system = _build_system(disc, 1.0, problem.phase, ZeroAlpha(), zero_expression())
    x = system.solve(system.stokes_matrix(), system.rhs, _fixed_values(disc, boundary))
    lift = system.velocity_field(x)
    logger.debug("Lifted boundary data: divergence residual %.3e", disc.divergence_residual(lift))
    return lift


# ---------------------------------------------------------------------------
# Nonlinear solve
# ---------------------------------------------------------------------------


def _newton_iterate(
    system: SaddleSystem,
    x: np.ndarray,
    options: SolverOptions,
    label: str,
) -> tuple[np.ndarray, list[float], int, int]:
    """Damped Picard until the residual drops, then Newton with Armijo backtracking."""

    residual = system.residual_norm(x)
    history = [residual]
    scale = max(residual, system.operator_scale(x))
    target = options.rtol * scale + options.atol
    picard_target = residual / options.picard_reduction
    relaxation = options.picard_relaxation
    newton_steps = 0
    phase = "picard"

    for iteration in range(1, options.max_iter + 1):
        if residual <= target:
            return x, history, iteration - 1, newton_steps

        if phase == "picard":
            candidate = system.solve(system.picard_matrix(x), system.rhs, x)
            trial = x + relaxation * (candidate - x)
            trial_residual = system.residual_norm(trial)
            if trial_residual > residual:
                relaxation *= 0.5
                logger.debug("%s Picard residual increased; relaxation %.3g", label, relaxation)
                if relaxation < 1e-3:
                    phase = "newton"
                history.append(residual)
                continue
            x, residual = trial, trial_residual
            if residual <= picard_target:
                phase = "newton"
        else:
            rhs = -system.residual(x)
            delta = system.solve(system.jacobian(x), rhs, np.zeros(system.size))
            step = 1.0
            accepted = False
            for _ in range(options.max_backtracks):
                trial = x + step * delta
                trial_residual = system.residual_norm(trial)
                if trial_residual**2 <= (1.0 - 2.0 * options.armijo_slope * step) * residual**2:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                if residual <= _ROUNDOFF_FLOOR * scale:
                    logger.debug("%s stopped at round-off floor %.3e", label, residual)
                    return x, history, iteration, newton_steps
                raise StateSolveError(
                    f"{label}: line search failed at residual {residual:.3e}", history
                )
            x, residual = trial, trial_residual
            newton_steps += 1

        history.append(residual)
        logger.debug("%s iteration %d (%s): residual %.3e", label, iteration, phase, residual)

    if residual <= target:
        return x, history, options.max_iter, newton_steps
    raise StateSolveError(
        f"{label} did not converge in {options.max_iter} iterations "
        f"(residual {residual:.3e}, target {target:.3e})",
        history,
    )


def _normalize_pressure(x: np.ndarray, disc: Discretization, vertex_sets: list[np.ndarray]) -> np.ndarray:
    pressure = x[disc.velocity.dof_count :]
    weights = disc.lumped
    for vertices in vertex_sets:
        total = float(np.sum(weights[vertices]))
        if total > 0:
            pressure[vertices] -= float(weights[vertices] @ pressure[vertices]) / total
    return x


def _solution(
    system: SaddleSystem,
    x: np.ndarray,
    viscosity: float,
    history: list[float],
    iterations: int,
    newton_steps: int,
) -> StateSolution:
    disc = system.disc
    velocity = system.velocity_field(x)
    gradient_norm = disc.gradient_norm(velocity)
    return StateSolution(
        velocity=velocity,
        pressure=system.pressure_field(x),
        residual_norm=history[-1],
        residual_history=history,
        iterations=iterations,
        newton_iterations=newton_steps,
        gradient_norm=gradient_norm,
        margin=margin_from_norm(gradient_norm, viscosity, disc.mesh.measure),
        divergence_residual=disc.divergence_residual(velocity),
    )


def solve_state(
    problem: StateProblem,
    initial_guess: Optional[StateSolution] = None,
    discretization: Optional[Discretization] = None,
) -> StateSolution:
    """Solve the penalized state equation for ``problem.phase``.

    Without an initial guess the iteration starts from the Stokes-Brinkman
    solution with the same data.
    """

    disc = discretization or Discretization(problem.phase.space.mesh)
    boundary = interpolate(disc.velocity, problem.boundary_data)
    check_flux(boundary)
    system = problem_system(problem, disc)
    fixed_values = _fixed_values(disc, boundary)

    if initial_guess is not None:
        x = np.concatenate([initial_guess.velocity.values, initial_guess.pressure.values])
        x = np.where(system.fixed, fixed_values, x)
    else:
        x = system.solve(system.stokes_matrix(), system.rhs, fixed_values)

    x, history, iterations, newton_steps = _newton_iterate(system, x, problem.options, "state solve")
    x = _normalize_pressure(x, disc, [np.arange(disc.pressure.dof_count)])
    solution = _solution(system, x, problem.viscosity, history, iterations, newton_steps)

    if solution.margin >= 1.0:
        logger.warning(
            "State solution is not certified unique: margin %.3f >= 1", solution.margin
        )
    logger.debug(
        "State solved in %d iterations (%d Newton): residual %.3e, margin %.3f",
        iterations,
        newton_steps,
        solution.residual_norm,
        solution.margin,
    )
    return solution


# ---------------------------------------------------------------------------
# Sharp designs
# ---------------------------------------------------------------------------


def _fluid_components(disc: Discretization, fluid: np.ndarray) -> tuple[int, np.ndarray]:
    mesh = disc.mesh
    pairs = mesh.edge_triangles
    interior = (pairs[:, 1] >= 0) & fluid[pairs[:, 0]] & fluid[np.maximum(pairs[:, 1], 0)]
    rows, cols = pairs[interior, 0], pairs[interior, 1]
    graph = sp.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(mesh.triangle_count, mesh.triangle_count)
    )
    count, labels = connected_components(graph, directed=False)
    labels = np.where(fluid, labels, -1)
    present = np.unique(labels[labels >= 0])
    remap = np.full(count, -1)
    remap[present] = np.arange(len(present))
    return len(present), np.where(labels >= 0, remap[np.maximum(labels, 0)], -1)


def _component_flux(disc: Discretization, boundary: Field, triangle_labels: np.ndarray, component: int) -> float:
    mesh = disc.mesh
    owners = mesh.edge_triangles[mesh.boundary_edge_ids, 0]
    selected = triangle_labels[owners] == component
    start, end = mesh.boundary_edges[selected, 0], mesh.boundary_edges[selected, 1]
    middle = mesh.vertex_count + mesh.boundary_edge_ids[selected]
    normals = mesh.boundary_normals[selected]
    flux = 0.0
    for axis in range(2):
        comp = boundary.component(axis)
        flux += float(
            np.sum(mesh.boundary_lengths[selected] / 6.0 * (comp[start] + 4.0 * comp[middle] + comp[end]) * normals[:, axis])
        )
    return flux


def solve_sharp_state(
    problem: StateProblem,
    sharp_mask: SharpMask,
    discretization: Optional[Discretization] = None,
    initial_guess: Optional[StateSolution] = None,
) -> StateSolution:
    """Navier-Stokes on the fluid cells of a black-and-white design, u = 0 elsewhere.

    Velocity dofs on the closure of every solid triangle are constrained to
    zero. Pressure is pinned on vertices surrounded by solid only and at one
    vertex of each connected fluid component.
    """

    disc = discretization or Discretization(problem.phase.space.mesh)
    mesh = disc.mesh
    fluid = np.asarray(sharp_mask.fluid_cells, dtype=bool)
    if fluid.shape != (mesh.triangle_count,):
        raise ValueError("sharp mask must carry one value per triangle")

    boundary = interpolate(disc.velocity, problem.boundary_data)
    n2 = disc.velocity.node_count
    solid_nodes = np.unique(disc.velocity.element_dofs[~fluid].ravel())
    masked = np.zeros(n2, dtype=bool)
    masked[solid_nodes] = True
    velocity_masked = np.concatenate([masked, masked])

    carrying = velocity_masked & disc.velocity.dirichlet_mask & (np.abs(boundary.values) > _TRACE_TOLERANCE)
    if np.any(carrying):
        raise EmptyAdmissibleSetError(
            f"U^phi empty: {int(np.count_nonzero(carrying))} masked Dirichlet dofs carry nonzero data"
        )

    vertex_has_fluid = np.zeros(mesh.vertex_count, dtype=bool)
    vertex_has_fluid[mesh.triangles[fluid].ravel()] = True
    pinned = list(np.flatnonzero(~vertex_has_fluid))

    component_count, labels = _fluid_components(disc, fluid)
    owner_count = np.zeros(mesh.vertex_count, dtype=int)
    vertex_sets: list[np.ndarray] = []
    for component in range(component_count):
        vertices = np.unique(mesh.triangles[labels == component].ravel())
        vertex_sets.append(vertices)
        owner_count[vertices] += 1
        flux = _component_flux(disc, boundary, labels, component)
        if abs(flux) > FLUX_TOLERANCE:
            raise FluxCompatibilityError(flux, component)
    for vertices in vertex_sets:
        exclusive = vertices[owner_count[vertices] == 1]
        if exclusive.size:
            pinned.append(int(exclusive[0]))

    pressure_fixed = np.zeros(mesh.vertex_count, dtype=bool)
    pressure_fixed[np.asarray(pinned, dtype=int)] = True
    fixed = np.concatenate([disc.velocity.dirichlet_mask | velocity_masked, pressure_fixed])

    system = _build_system(
        disc, problem.viscosity, problem.phase, ZeroAlpha(), problem.body_force, fixed
    )
    fixed_values = _fixed_values(disc, boundary)
    fixed_values[: disc.velocity.dof_count][velocity_masked] = 0.0

    if initial_guess is not None:
        x = np.concatenate([initial_guess.velocity.values, initial_guess.pressure.values])
        x = np.where(fixed, fixed_values, x)
    else:
        x = system.solve(system.stokes_matrix(), system.rhs, fixed_values)

    x, history, iterations, newton_steps = _newton_iterate(system, x, problem.options, "sharp solve")
    x = _normalize_pressure(x, disc, vertex_sets)
    logger.debug("Sharp state: %d fluid components, %d pinned pressure dofs", component_count, len(pinned))
    return _solution(system, x, problem.viscosity, history, iterations, newton_steps)


# ---------------------------------------------------------------------------
# Energy identity
# ---------------------------------------------------------------------------


def energy_balance(
    problem: StateProblem,
    state: StateSolution,
    lift: Field,
    discretization: Optional[Discretization] = None,
) -> tuple[float, float]:
    """Both sides of the state equation tested with w = u - lift.

    Returns (int alpha |w|^2 + mu ||grad w||^2, right-hand-side pairing).
    """

    disc = discretization or Discretization(problem.phase.space.mesh)
    system = problem_system(problem, disc)
    u = state.velocity.values
    w = u - lift.values
    stiffness = disc.velocity_stiffness
    alpha_mass = system.alpha_mass
    convection = assemble_convection(state.velocity, disc.degree)

    lhs = float(w @ (alpha_mass @ w) + problem.viscosity * (w @ (stiffness @ w)))
    rhs = float(
        system.load @ w
        - lift.values @ (alpha_mass @ w)
        - problem.viscosity * (lift.values @ (stiffness @ w))
        - w @ (convection @ u)
    )
    return lhs, rhs
