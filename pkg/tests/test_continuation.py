"""Tests for epsilon continuation, sharp extraction and the uniqueness gate."""

import numpy as np
import pytest

from app.models.objective import PhaseField
from app.models.optimization import ContinuationOptions
from app.models.run_config import RunConfig
from app.models.state import MarginClass
from app.services.benchmarks import build_benchmark
from app.services.continuation import (
    InterfaceUnresolvedError,
    check_resolution,
    classify_margin,
    extract_sharp_interface,
    run_continuation,
)
from app.services.fem_assembly import interpolate
from app.services.objective_evaluator import disc_phase
from app.services.shape_calculus import canonical_velocity_family, shape_derivative_eps_sweep


def test_margin_classes():
    assert classify_margin(0.2) == MarginClass.SHARP_MINIMIZER
    assert classify_margin(0.5) == MarginClass.UNIQUE
    assert classify_margin(0.99) == MarginClass.UNIQUE
    assert classify_margin(1.0) == MarginClass.UNCERTIFIED


def test_sharp_extraction_sends_ties_to_fluid(unit_disc):
    field = interpolate(unit_disc.design, lambda nodes: nodes[:, 0] - 0.5)
    phase = PhaseField(field=field, eps=0.1, beta=0.0)
    mask = extract_sharp_interface(phase)
    x = unit_disc.design.node_coordinates[:, 0]

    assert np.array_equal(mask.node_values, np.where(x >= 0.5, 1, -1))
    assert mask.cell_values.shape == (unit_disc.mesh.triangle_count,)
    assert set(np.unique(mask.cell_values)) == {-1, 1}


def test_schedule_and_resolution_check():
    options = ContinuationOptions(eps0=0.2, levels=3, factor=0.5, min_cells_across=4.0)
    assert options.schedule() == pytest.approx([0.2, 0.1, 0.05])

    check_resolution(options, 1.0 / 64.0)
    with pytest.raises(InterfaceUnresolvedError, match="cells across"):
        check_resolution(options, 1.0 / 16.0)


def test_continuation_on_small_channel(channel_config, channel_disc):
    config = channel_config.model_copy(
        update={
            "beta": 0.5,
            "optimizer": channel_config.optimizer.model_copy(update={"max_outer": 4}),
        }
    )
    start = disc_phase(interpolate(channel_disc.design, 0.0), 0.4, 0.0, (0.5, 0.5), 0.2).field
    options = ContinuationOptions(eps0=0.4, levels=2)

    result = run_continuation(config, channel_disc, start, options)

    assert [level.eps for level in result.levels] == pytest.approx([0.4, 0.2])
    assert result.final is result.levels[-1]
    for level in result.levels:
        assert level.margin_class != MarginClass.UNCERTIFIED
        assert level.l1_ratio == pytest.approx(level.l1_distance / level.eps)
        assert level.mismatch is not None and level.mismatch >= 0.0
        assert level.summary_row()["eps"] == level.eps
    assert result.sharp_mask.cell_values.shape == (channel_disc.mesh.triangle_count,)
    assert result.sharp_objective.total == pytest.approx(
        result.sharp_objective.f_term + result.sharp_objective.perimeter_term
    )
    assert result.sharp_state.residual_norm < 1e-8


@pytest.mark.slow
def test_three_level_pipe_continuation_approaches_sharp_design():
    run = RunConfig.model_validate(
        {
            "mesh": {"nx": 32, "ny": 32},
            "physics": {"beta": 0.2, "boundary": {"preset": "pipe", "opening": 0.3}},
            "optimizer": {"max_outer": 40, "tolerance": 1e-3},
            "continuation": {"eps0": 0.4, "levels": 3, "min_cells_across": 3.0},
        }
    )
    setup = build_benchmark(run)
    disc = setup.discretization
    result = run_continuation(setup.problem, disc, setup.initial_phase, run.continuation)
    totals = [level.breakdown.total for level in result.levels]
    sharp_total = result.sharp_objective.total

    assert [level.eps for level in result.levels] == pytest.approx([0.4, 0.2, 0.1])
    assert all(level.margin < 1.0 for level in result.levels)
    assert abs(totals[-1] - sharp_total) / abs(sharp_total) < 0.3
    assert abs(totals[-1] - sharp_total) < abs(totals[0] - sharp_total)

    for velocity in canonical_velocity_family(setup.mesh)[:2]:
        rows = shape_derivative_eps_sweep(setup.problem, result.levels, velocity, disc)
        differences = [row.cauchy_difference for row in rows if row.cauchy_difference is not None]
        assert len(differences) == 2
        assert differences[1] < differences[0]
