"""
Shared test configuration and fixtures.

Provides:
- Small structured meshes and their lazily assembled discretizations.
- A Poiseuille channel problem with exact polynomial data.
- ``slow`` marker registration for benchmark-scale runs.
"""

from __future__ import annotations

import numpy as np
import pytest

from app.models.alpha import AlphaSchedule, LinearAlpha, ZeroAlpha
from app.models.expressions import zero_expression
from app.models.optimization import OptimizerOptions, ProblemConfig
from app.models.state import StateProblem
from app.services.benchmarks import poiseuille_data
from app.services.fem_assembly import Discretization, interpolate
from app.services.mesh_builder import build_structured_mesh


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: benchmark-scale runs (minutes)")


# ---------------------------------------------------------------------------
# Meshes
# ---------------------------------------------------------------------------


@pytest.fixture
def unit_mesh():
    """4x4 right-diagonal mesh of the unit square."""
    return build_structured_mesh(4, 4, 1.0, 1.0)


@pytest.fixture
def unit_disc(unit_mesh):
    return Discretization(unit_mesh)


@pytest.fixture
def channel_disc():
    """8x8 mesh of the unit square, large enough for flow problems."""
    return Discretization(build_structured_mesh(8, 8, 1.0, 1.0))


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


@pytest.fixture
def channel_config(channel_disc):
    """Poiseuille data on every side, no body force, beta = 0."""
    return ProblemConfig(
        viscosity=1.0,
        body_force=zero_expression(),
        boundary_data=poiseuille_data(channel_disc.mesh, 0.25),
        beta=0.0,
        gamma=0.01,
        alpha_schedule=AlphaSchedule(a0=10.0, exponent=0.5),
        optimizer=OptimizerOptions(max_outer=15, tolerance=1e-4),
    )


def _channel_problem(disc: Discretization, phase_values, alpha=None, viscosity: float = 1.0) -> StateProblem:
    """State problem on the Poiseuille channel with the given nodal phase."""
    phase = interpolate(disc.design, 0.0).with_values(np.asarray(phase_values, dtype=float))
    return StateProblem(
        viscosity=viscosity,
        body_force=zero_expression(),
        boundary_data=poiseuille_data(disc.mesh, 0.25),
        phase=phase,
        alpha=alpha or ZeroAlpha(),
    )


@pytest.fixture
def fluid_problem(channel_disc):
    """All-fluid channel with no penalization."""
    return _channel_problem(channel_disc, np.ones(channel_disc.mesh.vertex_count))


@pytest.fixture
def porous_problem(channel_disc):
    """Channel with a penalized block in the middle."""
    nodes = channel_disc.design.node_coordinates
    inside = (np.abs(nodes[:, 0] - 0.5) < 0.2) & (np.abs(nodes[:, 1] - 0.5) < 0.2)
    phase = np.where(inside, -1.0, 1.0)
    return _channel_problem(channel_disc, phase, LinearAlpha(alpha_bar=50.0))


@pytest.fixture
def make_channel_problem(channel_disc):
    """Factory for channel problems with a custom phase and interpolation."""

    def build(phase_values, alpha=None, viscosity: float = 1.0) -> StateProblem:
        return _channel_problem(channel_disc, phase_values, alpha, viscosity)

    return build
