"""Tests for benchmark presets."""

import numpy as np
import pytest

from app.models.run_config import BoundarySection, DesignSection, ForcingSection, RunConfig
from app.services.benchmarks import (
    _side_band,
    boundary_expression,
    build_benchmark,
    forcing_expression,
    initial_design,
    parabolic_band,
)
from app.services.fem_assembly import Discretization, expression_flux
from app.services.mesh_builder import build_structured_mesh


@pytest.fixture
def mesh():
    return build_structured_mesh(12, 9, 1.5, 1.0)


@pytest.mark.parametrize("preset", ["poiseuille", "pipe", "diffuser", "pipe_bend", "obstacle", "noslip"])
def test_boundary_presets_carry_no_net_flux(preset, mesh):
    expression = boundary_expression(BoundarySection(preset=preset), mesh)
    velocity = Discretization(mesh).velocity

    assert expression_flux(velocity, expression) == pytest.approx(0.0, abs=1e-12)


def test_pipe_inflow_profile(mesh):
    section = BoundarySection(preset="pipe", speed=2.0, opening=0.5)
    expression = boundary_expression(section, mesh)
    inflow = expression.value(np.array([[0.0, 0.5], [0.0, 0.1], [0.75, 0.5]]))

    assert inflow[0] == pytest.approx([2.0, 0.0])
    assert np.all(inflow[1:] == 0.0)


def test_pipe_bend_leaves_through_the_bottom(mesh):
    expression = boundary_expression(BoundarySection(preset="pipe_bend"), mesh)
    outflow = expression.value(np.array([[0.8 * mesh.width, 0.0]]))[0]

    assert outflow[0] == 0.0
    assert outflow[1] < 0.0


def test_parabolic_band():
    s = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    values = parabolic_band(s, 0.2, 0.4)

    assert values.tolist() == pytest.approx([0.0, 0.0, 1.0, 0.0, 0.0])


def test_unknown_side_is_rejected(mesh):
    with pytest.raises(ValueError, match="side"):
        _side_band("front", 0.0, 1.0, (1.0, 0.0), mesh)


def test_forcing_presets():
    constant = forcing_expression(ForcingSection(preset="constant", value=(0.0, -1.0)))
    points = np.zeros((3, 2))

    assert np.all(forcing_expression(ForcingSection()).value(points) == 0.0)
    assert np.allclose(constant.value(points), [0.0, -1.0])


def test_initial_designs(unit_disc):
    obstacle = initial_design(DesignSection(preset="obstacle", size=0.5), 0.0, 0.05, unit_disc)
    uniform = initial_design(DesignSection(), 0.3, 0.05, unit_disc)
    nodes = unit_disc.design.node_coordinates
    center = np.flatnonzero(np.all(np.isclose(nodes, 0.5), axis=1))[0]

    assert obstacle.values[center] == -1.0
    assert obstacle.values[0] == 1.0
    assert np.all(uniform.values == 0.3)


def test_build_benchmark_from_config():
    run = RunConfig.model_validate({"mesh": {"nx": 6, "ny": 4, "width": 1.5}, "physics": {"beta": 0.2}})
    setup = build_benchmark(run)

    assert setup.mesh.triangle_count == 48
    assert setup.problem.beta == 0.2
    assert setup.initial_phase.values.shape == (setup.mesh.vertex_count,)
    assert setup.initial_design(0.1).eps == 0.1
    assert setup.discretization.degree == 6
    assert build_benchmark(run, 8).discretization.degree == 8
