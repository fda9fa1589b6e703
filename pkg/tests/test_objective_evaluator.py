"""Tests for J_eps, the Ginzburg-Landau energy, J_0 and perimeter estimators."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.models.alpha import LinearAlpha, ZeroAlpha
from app.models.expressions import zero_expression
from app.models.objective import C0, ObjectiveSpec, PhaseField, SharpMask
from app.services.fem_assembly import Discretization, interpolate
from app.services.mesh_builder import build_structured_mesh
from app.services.objective_evaluator import (
    PotentialDomainError,
    eval_alpha_term,
    eval_F,
    eval_ginzburg_landau,
    eval_J0,
    eval_J_eps,
    ginzburg_landau_energy,
    interface_contour,
    is_rectilinear_interface,
    perimeter_edge_count,
    perimeter_gl_estimate,
    sharp_perimeter,
    sine_profile,
    straight_interface_phase,
)
from app.services.state_solver import solve_sharp_state, solve_state


@pytest.fixture
def spec():
    """Total potential power with mu = 1, f = 0, gamma = 0.01."""
    return ObjectiveSpec(gamma=0.01, viscosity=1.0, body_force=zero_expression())


def _half_plane_cells(mesh) -> np.ndarray:
    """-1 on triangles left of x = 1/2, +1 on the right."""
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    return np.where(centroids[:, 0] >= 0.5, 1, -1)


def _square_hole_cells(mesh, side: float = 0.25) -> np.ndarray:
    """-1 on triangles whose centroid lies in the centered square of the given side."""
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    inside = np.all(np.abs(centroids - 0.5) < 0.5 * side, axis=1)
    return np.where(inside, -1, 1)


def _disc_hole_cells(mesh, radius: float = 0.25) -> np.ndarray:
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    return np.where(np.hypot(centroids[:, 0] - 0.5, centroids[:, 1] - 0.5) < radius, -1, 1)


# ---------------------------------------------------------------------------
# Diffuse objective
# ---------------------------------------------------------------------------


def test_total_potential_power_of_poiseuille(fluid_problem, channel_disc, spec):
    u = interpolate(channel_disc.velocity, fluid_problem.boundary_data)
    # mu/2 * int (1 - 2y)^2 dy with speed 1/4
    assert eval_F(u, spec) == pytest.approx(1.0 / 6.0, rel=1e-12)


def test_alpha_term(fluid_problem, channel_disc):
    u = interpolate(channel_disc.velocity, fluid_problem.boundary_data)
    solid = PhaseField(field=interpolate(channel_disc.design, -1.0), eps=0.1, beta=0.0)

    assert eval_alpha_term(u, solid, ZeroAlpha()) == 0.0
    assert eval_alpha_term(u, solid, LinearAlpha(alpha_bar=2.0)) == pytest.approx(1.0 / 30.0, rel=1e-12)


def test_breakdown_total_sums_terms(porous_problem, channel_disc, spec):
    state = solve_state(porous_problem, discretization=channel_disc)
    phase = PhaseField(field=porous_problem.phase, eps=0.2, beta=0.0)
    breakdown = eval_J_eps(phase, state, spec, porous_problem.alpha)

    assert breakdown.alpha_term > 0
    assert breakdown.gl_term > 0
    assert breakdown.total == breakdown.alpha_term + breakdown.f_term + breakdown.gl_term


def test_objective_spec_fixes_c0():
    with pytest.raises(ValidationError, match="c0 is fixed"):
        ObjectiveSpec(gamma=0.1, viscosity=1.0, body_force=zero_expression(), c0=2.0)


# ---------------------------------------------------------------------------
# Ginzburg-Landau energy
# ---------------------------------------------------------------------------


def test_gl_energy_of_straight_profile_approaches_c0():
    disc = Discretization(build_structured_mesh(32, 32, 1.0, 1.0))
    phase = straight_interface_phase(interpolate(disc.design, 0.0), 0.1, 0.0, 0.5)

    assert eval_ginzburg_landau(phase, 1.0) == pytest.approx(C0, rel=2e-2)


def test_gl_energy_of_pure_phase_is_zero(unit_disc):
    fluid = PhaseField(field=interpolate(unit_disc.design, 1.0), eps=0.1, beta=1.0)
    assert eval_ginzburg_landau(fluid, 1.0) == pytest.approx(0.0, abs=1e-14)


def test_gl_energy_of_zero_phase(unit_mesh):
    # only the potential term survives: |Omega| / (2 eps)
    values = np.zeros(unit_mesh.vertex_count)

    assert ginzburg_landau_energy(unit_mesh, values, 0.1) == pytest.approx(5.0, rel=1e-12)
    assert ginzburg_landau_energy(unit_mesh, values, 0.1, gamma=0.02) == pytest.approx(0.1, rel=1e-12)


def test_gl_energy_is_even_in_phi():
    mesh = build_structured_mesh(8, 8, 1.0, 1.0)
    rng = np.random.default_rng(7)
    values = rng.uniform(-1.0, 1.0, mesh.vertex_count)
    values[0] = 1.0

    energy = ginzburg_landau_energy(mesh, values, 0.1)

    assert ginzburg_landau_energy(mesh, -values, 0.1) == pytest.approx(energy, rel=1e-13)
    assert energy != pytest.approx(ginzburg_landau_energy(mesh, np.abs(values), 0.1), rel=1e-6)


def test_gl_energy_rejects_values_outside_box(unit_mesh):
    values = np.full(unit_mesh.vertex_count, 1.5)
    with pytest.raises(PotentialDomainError, match="infinite"):
        ginzburg_landau_energy(unit_mesh, values, 0.1)


def test_sine_profile_is_clipped():
    distance = np.array([-1.0, 0.0, 0.05, 1.0])
    values = sine_profile(distance, 0.1)

    assert values[0] == -1.0
    assert values[1] == 0.0
    assert values[2] == pytest.approx(math.sin(0.5))
    assert values[3] == 1.0


# ---------------------------------------------------------------------------
# Sharp perimeter
# ---------------------------------------------------------------------------


def test_perimeter_edge_count_of_straight_interface():
    mesh = build_structured_mesh(8, 8, 1.0, 1.0)
    assert perimeter_edge_count(mesh, _half_plane_cells(mesh)) == pytest.approx(1.0, rel=1e-14)


def test_perimeter_edge_count_overestimates_diagonal_interfaces():
    mesh = build_structured_mesh(16, 16, 1.0, 1.0)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    cells = np.where(centroids[:, 0] + centroids[:, 1] >= 1.0, 1, -1)

    # a staircase has length 2 while the diagonal it resolves has length sqrt(2)
    assert perimeter_edge_count(mesh, cells) > math.sqrt(2.0)


def test_perimeter_gl_estimate_of_straight_interface():
    mesh = build_structured_mesh(64, 64, 1.0, 1.0)
    assert perimeter_gl_estimate(mesh, _half_plane_cells(mesh)) == pytest.approx(1.0, rel=3e-2)


def test_uniform_design_has_no_interface(unit_mesh):
    cells = np.ones(unit_mesh.triangle_count)

    assert interface_contour(unit_mesh, np.ones(unit_mesh.vertex_count)).is_empty
    assert perimeter_edge_count(unit_mesh, cells) == 0.0
    assert perimeter_gl_estimate(unit_mesh, cells) == 0.0


def test_square_hole_perimeter_is_exact_on_aligned_meshes():
    for cells in (8, 32):
        mesh = build_structured_mesh(cells, cells, 1.0, 1.0)
        values = _square_hole_cells(mesh)

        assert is_rectilinear_interface(mesh, values)
        assert sharp_perimeter(mesh, values) == pytest.approx(1.0, rel=1e-12)


def test_disc_hole_perimeter_within_three_percent():
    mesh = build_structured_mesh(64, 64, 1.0, 1.0)
    values = _disc_hole_cells(mesh)

    assert not is_rectilinear_interface(mesh, values)
    assert sharp_perimeter(mesh, values) == pytest.approx(0.5 * math.pi, rel=3e-2)


def test_staircase_is_not_rectilinear():
    mesh = build_structured_mesh(16, 16, 1.0, 1.0, "crossed")
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    # whole cells below the anti-diagonal, so the interface is a unit staircase
    cell_index = np.floor(centroids * 16.0)
    values = np.where(cell_index[:, 0] + cell_index[:, 1] >= 16, 1, -1)

    assert perimeter_edge_count(mesh, values) == pytest.approx(2.0 - 1.0 / 8.0)
    assert not is_rectilinear_interface(mesh, values)
    assert sharp_perimeter(mesh, values) < perimeter_edge_count(mesh, values)


def test_sharp_objective_uses_exact_square_perimeter(fluid_problem, channel_disc, spec):
    mesh = channel_disc.mesh
    mask = SharpMask(
        node_values=np.ones(mesh.vertex_count, dtype=int),
        cell_values=_square_hole_cells(mesh),
    )
    sharp_state = solve_sharp_state(fluid_problem, mask, channel_disc)

    sharp = eval_J0(mask, spec, sharp_state)

    assert sharp.perimeter == pytest.approx(1.0, rel=1e-12)
    assert sharp.perimeter_edge_count == pytest.approx(1.0, rel=1e-12)
    assert sharp.perimeter_term == pytest.approx(spec.gamma * C0)
    assert sharp.total == pytest.approx(sharp.f_term + sharp.perimeter_term)
