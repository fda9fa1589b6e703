"""Adjoint state, reduced gradient of j_eps and the discrete variational inequality residual.

The adjoint is the exact transpose of the Newton system used by the state
solver, so directional derivatives agree with finite differences of the
discrete reduced objective up to the nonlinear solver tolerance.
"""

import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp

from app.models.alpha import AlphaInterpolation
from app.models.fem import Field
from app.models.objective import ObjectiveBreakdown, ObjectiveSpec, PhaseField
from app.models.optimization import ProblemConfig, volume_of
from app.models.state import (
    AdjointSolution,
    InnerProduct,
    ReducedGradient,
    SolverOptions,
    StateProblem,
    StateSolution,
)
from app.services.fem_assembly import (
    Discretization,
    ElementQuadrature,
    assemble_coefficient_mass,
    assemble_p1_functional,
)
from app.services.objective_evaluator import eval_J_eps
from app.services.projection import project_with_shift
from app.services.state_solver import (
    SaddleSystem,
    StateSolveError,
    factorize,
    problem_system,
    solve_state,
)

logger = logging.getLogger(__name__)

ACTIVE_TOLERANCE = 1e-10


class SingularSystemError(RuntimeError):
    """The linearized state operator could not be factorized."""


def _state_vector(state: StateSolution) -> np.ndarray:
    return np.concatenate([state.velocity.values, state.pressure.values])


def _objective_velocity_gradient(system: SaddleSystem, u: np.ndarray) -> np.ndarray:
    """Partial derivative of J_eps with respect to u: M_alpha u + mu K u - F."""
    return system.linear_velocity @ u - system.load


def solve_adjoint(
    problem: StateProblem,
    state: StateSolution,
    discretization: Optional[Discretization] = None,
) -> AdjointSolution:
    """Solve J(u)^T y = [dJ/du; 0] on the free unknowns; q is the velocity part of y."""

    disc = discretization or Discretization(problem.phase.space.mesh)
    if state.margin >= 1.0:
        logger.warning("Adjoint solve on an uncertified state (margin %.3f)", state.margin)

    system = problem_system(problem, disc)
    x = _state_vector(state)
    rhs = np.zeros(system.size)
    rhs[: system.velocity_size] = _objective_velocity_gradient(system, state.velocity.values)

    jacobian = system.jacobian(x)
    try:
        y = system.solve_transposed(jacobian, rhs)
    except StateSolveError as exc:
        raise SingularSystemError(
            f"adjoint system is singular at margin {state.margin:.3f}: {exc}"
        ) from exc

    residual = (jacobian.T @ y - rhs)[system.free]
    scale = max(float(np.linalg.norm(rhs[system.free])), 1e-300)
    velocity = system.velocity_field(y)
    return AdjointSolution(
        velocity=velocity,
        pressure=system.pressure_field(y),
        residual_norm=float(np.linalg.norm(residual)) / scale if np.any(rhs) else 0.0,
        divergence_residual=disc.divergence_residual(velocity),
    )


def gradient_functional(
    problem: StateProblem,
    state: StateSolution,
    adjoint: AdjointSolution,
    spec: ObjectiveSpec,
    eps: float,
    discretization: Optional[Discretization] = None,
) -> np.ndarray:
    """Dual vector d_a = <Dj_eps(phi), N_a>.

    d_a = int alpha'(phi) N_a (|u|^2/2 - u . q) - gamma phi N_a / eps
          + gamma eps grad phi . grad N_a dx
    """

    disc = discretization or Discretization(problem.phase.space.mesh)
    phi = problem.phase.values
    u = state.velocity.values
    q = adjoint.velocity.values
    alpha = problem.alpha
    gamma = spec.gamma

    def value(quad: ElementQuadrature) -> np.ndarray:
        vel = quad.vector(u)
        adj = quad.vector(q)
        phase = quad.p1(phi)
        kinetic = 0.5 * np.einsum("tqi,tqi->tq", vel, vel) - np.einsum("tqi,tqi->tq", vel, adj)
        return alpha.derivative(phase) * kinetic - gamma * phase / eps

    def gradient(quad: ElementQuadrature) -> np.ndarray:
        return gamma * eps * quad.p1_gradient(phi)

    return assemble_p1_functional(disc.design, value, gradient, disc.degree)


def inner_product_matrix(
    discretization: Discretization,
    inner_product: InnerProduct,
    eps: float,
) -> sp.csr_matrix:
    if inner_product == InnerProduct.L2:
        return discretization.design_mass
    return (eps * discretization.design_stiffness + discretization.design_mass / eps).tocsr()


def reduced_gradient(
    problem: StateProblem,
    state: StateSolution,
    adjoint: AdjointSolution,
    phase: PhaseField,
    spec: ObjectiveSpec,
    inner_product: InnerProduct = InnerProduct.H1_WEIGHTED,
    discretization: Optional[Discretization] = None,
) -> ReducedGradient:
    """Assemble Dj_eps(phi), its Riesz representatives and the volume multiplier.

    The multiplier is the volume shift of the lumped projected-gradient
    update when the constraint is active at ``phase`` and zero otherwise.
    """

    disc = discretization or Discretization(phase.field.space.mesh)
    functional = gradient_functional(problem, state, adjoint, spec, phase.eps, disc)
    weights = disc.lumped
    lumped = functional / weights
    matrix = inner_product_matrix(disc, inner_product, phase.eps)
    representative = factorize(matrix)(functional)

    slack = volume_of(phase.values, weights) - phase.beta * disc.mesh.measure
    multiplier = 0.0
    if abs(slack) <= ACTIVE_TOLERANCE * disc.mesh.measure:
        _, multiplier = project_with_shift(phase.values - lumped, phase.beta, weights)

    return ReducedGradient(
        functional=functional,
        field=phase.field.with_values(representative),
        lumped=phase.field.with_values(lumped),
        mass_weights=weights,
        inner_product=inner_product,
        multiplier=multiplier,
        volume_slack=slack,
        beta=phase.beta,
    )


def stationarity_residual(gradient: ReducedGradient, phase: PhaseField) -> float:
    """Lumped-mass norm of phi - P(phi - g - lambda), zero at discrete stationarity."""

    weights = gradient.mass_weights
    shifted = phase.values - gradient.lumped.values - gradient.multiplier
    projected, _ = project_with_shift(shifted, phase.beta, weights)
    difference = phase.values - projected
    return float(np.sqrt(weights @ difference**2))


def directional_derivative(gradient: ReducedGradient, direction: np.ndarray) -> float:
    return float(gradient.functional @ direction)


# ---------------------------------------------------------------------------
# Linearized state
# ---------------------------------------------------------------------------


def _alpha_variation_mass(problem: StateProblem, direction: np.ndarray, disc: Discretization) -> sp.csr_matrix:
    phi = problem.phase.values
    alpha = problem.alpha

    def coefficient(quad: ElementQuadrature) -> np.ndarray:
        return alpha.derivative(quad.p1(phi)) * quad.p1(direction)

    return assemble_coefficient_mass(disc.velocity, coefficient, disc.degree)


def solve_linearized_state(
    problem: StateProblem,
    state: StateSolution,
    direction: np.ndarray,
    discretization: Optional[Discretization] = None,
) -> Field:
    """Control-to-state derivative du[dphi] from J(u) dx = [-M_{alpha' dphi} u; 0]."""

    disc = discretization or Discretization(problem.phase.space.mesh)
    system = problem_system(problem, disc)
    rhs = np.zeros(system.size)
    if not np.any(direction):
        return Field.zeros(disc.velocity)
    rhs[: system.velocity_size] = -(
        _alpha_variation_mass(problem, direction, disc) @ state.velocity.values
    )
    try:
        dx = system.solve(system.jacobian(_state_vector(state)), rhs, np.zeros(system.size))
    except StateSolveError as exc:
        raise SingularSystemError(
            f"linearized state system is singular at margin {state.margin:.3f}: {exc}"
        ) from exc
    return system.velocity_field(dx)


def chain_rule_derivative(
    problem: StateProblem,
    state: StateSolution,
    velocity_variation: Field,
    direction: np.ndarray,
    spec: ObjectiveSpec,
    eps: float,
    discretization: Optional[Discretization] = None,
) -> float:
    """Dj_eps(phi)(dphi) through the linearized state instead of the adjoint."""

    disc = discretization or Discretization(problem.phase.space.mesh)
    system = problem_system(problem, disc)
    u = state.velocity.values
    state_part = float(_objective_velocity_gradient(system, u) @ velocity_variation.values)
    alpha_part = 0.5 * float(u @ (_alpha_variation_mass(problem, direction, disc) @ u))
    phi = problem.phase.values
    gamma = spec.gamma
    gl_functional = assemble_p1_functional(
        disc.design,
        lambda quad: -gamma * quad.p1(phi) / eps,
        lambda quad: gamma * eps * quad.p1_gradient(phi),
        disc.degree,
    )
    return state_part + alpha_part + float(gl_functional @ direction)


# ---------------------------------------------------------------------------
# Reduced functional
# ---------------------------------------------------------------------------


def objective_spec(config: ProblemConfig) -> ObjectiveSpec:
    return ObjectiveSpec(
        kind=config.objective,
        gamma=config.gamma,
        viscosity=config.viscosity,
        body_force=config.body_force,
    )


class ReducedFunctional:
    """phi -> j_eps(phi) = J_eps(phi, u(phi)) at a fixed epsilon, with warm-started solves."""

    def __init__(
        self,
        config: ProblemConfig,
        discretization: Discretization,
        eps: float,
        alpha: Optional[AlphaInterpolation] = None,
    ):
        self.config = config
        self.disc = discretization
        self.eps = eps
        self.alpha = alpha or config.alpha_schedule.at(eps)
        self.spec = objective_spec(config)
        self._last_state: Optional[StateSolution] = None

    @property
    def solver_options(self) -> SolverOptions:
        return self.config.solver

    def problem(self, phase: PhaseField) -> StateProblem:
        return StateProblem(
            viscosity=self.config.viscosity,
            body_force=self.config.body_force,
            boundary_data=self.config.boundary_data,
            phase=phase.field,
            alpha=self.alpha,
            options=self.config.solver,
        )

    def solve(self, phase: PhaseField, warm_start: bool = True) -> StateSolution:
        guess = self._last_state if warm_start else None
        state = solve_state(self.problem(phase), guess, self.disc)
        self._last_state = state
        return state

    def evaluate(self, phase: PhaseField, warm_start: bool = True) -> tuple[ObjectiveBreakdown, StateSolution]:
        state = self.solve(phase, warm_start)
        return eval_J_eps(phase, state, self.spec, self.alpha, self.disc.degree), state

    def remember(self, state: StateSolution) -> None:
        self._last_state = state

    def gradient(
        self,
        phase: PhaseField,
        state: StateSolution,
        inner_product: Optional[InnerProduct] = None,
    ) -> ReducedGradient:
        problem = self.problem(phase)
        adjoint = solve_adjoint(problem, state, self.disc)
        return reduced_gradient(
            problem,
            state,
            adjoint,
            phase,
            self.spec,
            inner_product or self.config.optimizer.inner_product,
            self.disc,
        )
