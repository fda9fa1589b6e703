"""Tests for gradient, shape and Gamma-limit verification tables."""

import numpy as np
import pytest

from app.models.objective import C0, PhaseField
from app.models.shape import GammaCheckRow, GradientCheckRow
from app.services.adjoint_gradient import ReducedFunctional
from app.services.fem_assembly import interpolate
from app.services.objective_evaluator import disc_phase
from app.services.verification import (
    VerificationFailedError,
    best_errors,
    feasible_directions,
    gamma_check,
    gradient_check,
    require_gamma_limit,
    require_gradient_agreement,
)


def _gamma_row(cells: float, error: float) -> GammaCheckRow:
    return GammaCheckRow(eps=0.1, cells_across=cells, energy=C0, expected=C0, relative_error=error)


def test_feasible_directions_respect_the_box(unit_disc):
    values = np.linspace(-1.0, 1.0, unit_disc.design.dof_count)
    phase = PhaseField(field=interpolate(unit_disc.design, 0.0).with_values(values), eps=0.1, beta=0.0)

    first = feasible_directions(phase, 3, seed=4)
    again = feasible_directions(phase, 3, seed=4)

    assert len(first) == 3
    assert all(np.array_equal(a, b) for a, b in zip(first, again))
    for direction in first:
        assert direction[0] == 0.0 and direction[-1] == 0.0
        assert np.all(np.abs(values + direction) <= 1.0 + 1e-15)
        assert np.all(np.abs(values - direction) <= 1.0 + 1e-15)


def test_gamma_check_converges_to_c0():
    rows = gamma_check(0.1, 8, 3)

    assert [row.cells_across for row in rows] == pytest.approx([np.pi * 0.8, np.pi * 1.6, np.pi * 3.2])
    assert all(row.expected == pytest.approx(C0) for row in rows)
    assert rows[-1].relative_error < 0.02
    require_gamma_limit(rows, 0.02)


def test_gamma_limit_gate_failures():
    with pytest.raises(VerificationFailedError, match="cells across"):
        require_gamma_limit([_gamma_row(10.0, 0.05)], 0.02)
    with pytest.raises(VerificationFailedError, match="not monotone"):
        require_gamma_limit([_gamma_row(2.0, 0.1), _gamma_row(4.0, 0.2)], 0.02)
    require_gamma_limit([_gamma_row(2.0, 0.3), _gamma_row(4.0, 0.1)], 0.02)


def test_best_errors_and_gradient_gate():
    rows = [
        GradientCheckRow(direction=0, step=1e-2, derivative=1.0, finite_difference=1.1, relative_error=0.1),
        GradientCheckRow(direction=0, step=1e-4, derivative=1.0, finite_difference=1.0, relative_error=1e-7),
        GradientCheckRow(direction=1, step=1e-4, derivative=1.0, finite_difference=1.2, relative_error=0.2),
    ]

    assert best_errors(rows, "direction") == {0: 1e-7, 1: 0.2}
    require_gradient_agreement(rows[:2], 1e-4)
    with pytest.raises(VerificationFailedError, match="directions \\[1\\]"):
        require_gradient_agreement(rows, 1e-4)


def test_gradient_check_table(channel_config, channel_disc):
    functional = ReducedFunctional(channel_config, channel_disc, 0.2)
    phase = disc_phase(interpolate(channel_disc.design, 0.0), 0.2, 0.0, (0.5, 0.5), 0.2)
    directions = feasible_directions(phase, 2, seed=0)
    steps = [1e-2, 1e-4, 1e-6]

    rows = gradient_check(functional, phase, steps, directions)

    assert len(rows) == 6
    assert [row.step for row in rows[:3]] == steps
    assert max(best_errors(rows, "direction").values()) < 1e-4
