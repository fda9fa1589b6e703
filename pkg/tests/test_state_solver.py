"""Tests for the penalized Navier-Stokes state solver."""

import numpy as np
import pytest

from app.models.alpha import LinearAlpha, ZeroAlpha
from app.models.expressions import PolynomialTerm, VectorExpression, polynomial_expression, zero_expression
from app.models.objective import ObjectiveSpec, SharpMask
from app.models.state import MarginClass, StateProblem
from app.services.continuation import classify_margin
from app.services.fem_assembly import Discretization, evaluate_at_points, interpolate
from app.services.mesh_builder import build_structured_mesh
from app.services.objective_evaluator import eval_F
from app.services.state_solver import (
    EmptyAdmissibleSetError,
    FluxCompatibilityError,
    continuity_constant,
    energy_balance,
    lift_boundary_data,
    solve_sharp_state,
    solve_state,
    uniqueness_margin,
)


def _all_fluid_mask(disc) -> SharpMask:
    return SharpMask(
        node_values=np.ones(disc.mesh.vertex_count, dtype=int),
        cell_values=np.ones(disc.mesh.triangle_count, dtype=int),
    )


# ---------------------------------------------------------------------------
# Exact solutions
# ---------------------------------------------------------------------------


def test_poiseuille_is_reproduced_exactly(fluid_problem, channel_disc):
    state = solve_state(fluid_problem, discretization=channel_disc)
    exact = interpolate(channel_disc.velocity, fluid_problem.boundary_data)
    x = channel_disc.pressure.node_coordinates[:, 0]

    assert np.allclose(state.velocity.values, exact.values, atol=1e-10)
    # -mu u_xx'' balances dp/dx = -8 * speed; zero mean on the unit square
    assert np.allclose(state.pressure.values, 1.0 - 2.0 * x, atol=1e-8)
    assert state.divergence_residual < 1e-10


def test_poiseuille_margin(fluid_problem, channel_disc):
    state = solve_state(fluid_problem, discretization=channel_disc)

    assert state.gradient_norm == pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-10)
    assert state.margin == pytest.approx(0.5 * np.sqrt(1.0 / 3.0), rel=1e-10)
    assert classify_margin(state.margin) == MarginClass.SHARP_MINIMIZER
    assert uniqueness_margin(state.velocity, 1.0, channel_disc) == pytest.approx(state.margin)


def test_pressure_has_zero_mean(porous_problem, channel_disc):
    state = solve_state(porous_problem, discretization=channel_disc)
    assert float(channel_disc.lumped @ state.pressure.values) == pytest.approx(0.0, abs=1e-12)


def test_residual_history_reaches_tolerance(porous_problem, channel_disc):
    state = solve_state(porous_problem, discretization=channel_disc)

    assert state.residual_history[-1] == state.residual_norm
    assert state.residual_norm < 1e-8
    assert state.iterations >= 1


def test_warm_start_converges_immediately(porous_problem, channel_disc):
    first = solve_state(porous_problem, discretization=channel_disc)
    second = solve_state(porous_problem, first, channel_disc)

    assert second.iterations <= 1
    assert np.allclose(second.velocity.values, first.velocity.values, atol=1e-10)


# ---------------------------------------------------------------------------
# Brinkman penalization
# ---------------------------------------------------------------------------


def test_brinkman_term_slows_the_flow_inside_the_solid(make_channel_problem, channel_disc):
    nodes = channel_disc.design.node_coordinates
    inside = (np.abs(nodes[:, 0] - 0.5) < 0.2) & (np.abs(nodes[:, 1] - 0.5) < 0.2)
    phase = np.where(inside, -1.0, 1.0)
    center = np.array([[0.5, 0.5]])

    speeds = []
    for alpha_bar in (0.0, 10.0, 1000.0):
        problem = make_channel_problem(phase, LinearAlpha(alpha_bar=alpha_bar))
        state = solve_state(problem, discretization=channel_disc)
        speeds.append(float(np.linalg.norm(evaluate_at_points(state.velocity, center))))

    assert speeds[0] == pytest.approx(0.25, rel=1e-8)
    assert speeds[0] > speeds[1] > speeds[2]
    assert speeds[2] < 0.05


def test_energy_identity(porous_problem, channel_disc):
    state = solve_state(porous_problem, discretization=channel_disc)
    lift = lift_boundary_data(porous_problem, channel_disc)
    lhs, rhs = energy_balance(porous_problem, state, lift, channel_disc)

    assert lhs > 0
    assert lhs == pytest.approx(rhs, rel=1e-7)


def test_lift_is_discretely_divergence_free(porous_problem, channel_disc):
    lift = lift_boundary_data(porous_problem, channel_disc)
    boundary = interpolate(channel_disc.velocity, porous_problem.boundary_data)
    mask = channel_disc.velocity.dirichlet_mask

    assert np.allclose(lift.values[mask], boundary.values[mask])
    assert channel_disc.divergence_residual(lift) < 1e-10


# ---------------------------------------------------------------------------
# Failures
# ---------------------------------------------------------------------------


def test_boundary_data_with_net_flux_is_rejected(fluid_problem, channel_disc):
    leaking = fluid_problem.model_copy(
        update={"boundary_data": polynomial_expression([PolynomialTerm(coefficient=1.0, px=1)], [])}
    )
    with pytest.raises(FluxCompatibilityError, match="flux compatibility") as info:
        solve_state(leaking, discretization=channel_disc)
    assert info.value.flux == pytest.approx(1.0)


def test_sharp_design_blocking_inflow_is_empty(fluid_problem, channel_disc):
    cells = np.ones(channel_disc.mesh.triangle_count, dtype=int)
    # cell (0, 3) touches the left side where the inflow is nonzero
    cells[[48, 49]] = -1
    mask = SharpMask(node_values=np.ones(channel_disc.mesh.vertex_count, dtype=int), cell_values=cells)

    with pytest.raises(EmptyAdmissibleSetError, match="U\\^phi empty"):
        solve_sharp_state(fluid_problem, mask, channel_disc)


def test_all_fluid_sharp_state_matches_state(fluid_problem, channel_disc):
    state = solve_state(fluid_problem, discretization=channel_disc)
    sharp = solve_sharp_state(fluid_problem, _all_fluid_mask(channel_disc), channel_disc)

    assert np.allclose(sharp.velocity.values, state.velocity.values, atol=1e-10)
    assert np.allclose(sharp.pressure.values, state.pressure.values, atol=1e-8)


def test_sharp_state_vanishes_on_solid_cells(fluid_problem, channel_disc):
    mesh = channel_disc.mesh
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    solid = (np.abs(centroids[:, 0] - 0.5) < 0.2) & (np.abs(centroids[:, 1] - 0.5) < 0.2)
    mask = SharpMask(
        node_values=np.ones(mesh.vertex_count, dtype=int),
        cell_values=np.where(solid, -1, 1),
    )
    sharp = solve_sharp_state(fluid_problem, mask, channel_disc)
    solid_nodes = np.unique(channel_disc.velocity.element_dofs[solid].ravel())

    assert np.all(sharp.velocity.component(0)[solid_nodes] == 0.0)
    assert np.all(sharp.velocity.component(1)[solid_nodes] == 0.0)
    assert sharp.residual_norm < 1e-8


def test_continuity_constant():
    assert continuity_constant(4.0) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="dimension"):
        continuity_constant(1.0, 4)


def test_state_is_independent_of_initial_guess(porous_problem, channel_disc):
    reference = solve_state(porous_problem, discretization=channel_disc)
    rng = np.random.default_rng(5)
    far_guess = reference.model_copy(
        update={
            "velocity": reference.velocity.with_values(
                reference.velocity.values + 0.5 * rng.normal(size=channel_disc.velocity.dof_count)
            ),
            "pressure": reference.pressure.with_values(np.zeros(channel_disc.pressure.dof_count)),
        }
    )
    restarted = solve_state(porous_problem, far_guess, channel_disc)

    assert reference.margin < 1.0
    assert restarted.iterations > 1
    assert np.allclose(restarted.velocity.values, reference.velocity.values, atol=1e-8)
    assert np.allclose(restarted.pressure.values, reference.pressure.values, atol=1e-6)


def test_sharp_obstacle_raises_dissipation(fluid_problem, channel_disc):
    mesh = channel_disc.mesh
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    solid = (np.abs(centroids[:, 0] - 0.5) < 0.125) & (np.abs(centroids[:, 1] - 0.5) < 0.125)
    mask = SharpMask(
        node_values=np.ones(mesh.vertex_count, dtype=int),
        cell_values=np.where(solid, -1, 1),
    )
    spec = ObjectiveSpec(gamma=0.01, viscosity=1.0, body_force=zero_expression())

    free = solve_sharp_state(fluid_problem, _all_fluid_mask(channel_disc), channel_disc)
    blocked = solve_sharp_state(fluid_problem, mask, channel_disc)

    assert solid.sum() == 8
    assert eval_F(blocked.velocity, spec) > eval_F(free.velocity, spec)
    assert eval_F(free.velocity, spec) == pytest.approx(0.5 / 3.0, rel=1e-10)


# ---------------------------------------------------------------------------
# Manufactured solution
# ---------------------------------------------------------------------------

_AMPLITUDE = 0.1


def _manufactured_velocity(points: np.ndarray) -> np.ndarray:
    x, y = np.pi * points[..., 0], np.pi * points[..., 1]
    scale = _AMPLITUDE * np.pi
    return np.stack([scale * np.sin(x) * np.cos(y), -scale * np.cos(x) * np.sin(y)], axis=-1)


def _manufactured_pressure(points: np.ndarray) -> np.ndarray:
    return np.cos(np.pi * points[..., 0]) * np.sin(np.pi * points[..., 1])


def _manufactured_force(points: np.ndarray) -> np.ndarray:
    """-lap u + (u.grad)u + grad p for mu = 1."""
    x, y = np.pi * points[..., 0], np.pi * points[..., 1]
    viscous = 2.0 * np.pi**2 * _manufactured_velocity(points)
    convective = 0.5 * _AMPLITUDE**2 * np.pi**3 * np.stack([np.sin(2 * x), np.sin(2 * y)], axis=-1)
    pressure = np.pi * np.stack([-np.sin(x) * np.sin(y), np.cos(x) * np.cos(y)], axis=-1)
    return viscous + convective + pressure


def _manufactured_errors(cells: int) -> tuple[float, float]:
    disc = Discretization(build_structured_mesh(cells, cells, 1.0, 1.0))
    problem = StateProblem(
        viscosity=1.0,
        body_force=VectorExpression(name="manufactured force", value_fn=_manufactured_force),
        boundary_data=VectorExpression(name="manufactured velocity", value_fn=_manufactured_velocity),
        phase=interpolate(disc.design, 1.0),
        alpha=ZeroAlpha(),
    )
    state = solve_state(problem, discretization=disc)

    exact_velocity = interpolate(disc.velocity, problem.boundary_data)
    velocity_error = disc.gradient_norm(state.velocity.with_values(state.velocity.values - exact_velocity.values))

    weights = disc.lumped
    exact_pressure = _manufactured_pressure(disc.pressure.node_coordinates)
    difference = state.pressure.values - exact_pressure
    difference -= float(weights @ difference) / float(weights.sum())
    pressure_error = float(np.sqrt(weights @ difference**2))
    return velocity_error, pressure_error


def test_manufactured_solution_converges_at_second_order():
    errors = [_manufactured_errors(cells) for cells in (4, 8, 16)]
    velocity_rates = [np.log2(coarse[0] / fine[0]) for coarse, fine in zip(errors, errors[1:])]
    pressure_rates = [np.log2(coarse[1] / fine[1]) for coarse, fine in zip(errors, errors[1:])]

    assert errors[-1][0] < errors[0][0] / 10.0
    assert velocity_rates[-1] >= 1.8
    assert pressure_rates[-1] >= 1.7
