"""Job runner: executes one run mode and persists its artifacts.

run_job() is the single entry point called by the CLI. It never raises:
every exception is written to ``error.json`` and mapped to an exit code.

Lifecycle:
  1. Prepare the run directory and echo the config.
  2. Build the benchmark and dispatch to the mode handler.
  3. The handler writes its tables, fields and ``summary.json``.
  4. Verification modes check their gates last, after all artifacts exist.
"""

import logging
from pathlib import Path
from typing import Any, Callable, Dict

from app.core.config import settings
from app.core.run_loader import ConfigError
from app.integrations.vtk_writer import vertex_values, write_vtk
from app.models.objective import ObjectiveBreakdown, PhaseField
from app.models.optimization import volume_of
from app.models.run_config import RunConfig, RunMode
from app.models.state import StateSolution
from app.repositories.run_repository import (
    prepare_run_dir,
    write_config,
    write_error,
    write_sharp_mask,
    write_summary,
    write_table,
)
from app.services.adjoint_gradient import ReducedFunctional, objective_spec
from app.services.benchmarks import BenchmarkSetup, build_benchmark
from app.services.continuation import check_uniqueness_gate, run_continuation
from app.services.optimizer import project_admissible, run_optimization
from app.services.shape_calculus import (
    UncertifiedLinearizationError,
    canonical_velocity_family,
    level_problem,
    optimality_residual_geometric,
    shape_derivative_eps_sweep,
)
from app.services.state_solver import energy_balance, lift_boundary_data
from app.services.verification import (
    best_errors,
    feasible_directions,
    gamma_check,
    gamma_profile,
    gradient_check,
    require_gamma_limit,
    require_gradient_agreement,
    require_shape_agreement,
    shape_check,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

_VERIFY_MODES = frozenset({RunMode.VERIFY_GRADIENT, RunMode.VERIFY_SHAPE, RunMode.GAMMA_CHECK})


# ---------------------------------------------------------------------------
# Public entry point
# ---------------------------------------------------------------------------


def run_job(config: RunConfig, run_dir: Path) -> int:
    """Execute ``config.mode`` into ``run_dir`` and return the process exit code."""

    run_dir = prepare_run_dir(Path(run_dir))
    write_config(run_dir, config)
    mode = config.mode.value
    logger.info("Starting %s run in %s", mode, run_dir)

    try:
        handler = _HANDLERS[config.mode]
        handler(config, run_dir)
        logger.info("Run %s succeeded", mode)
        return EXIT_OK
    except Exception as exc:
        error_message = f"{type(exc).__name__}: {exc}"
        write_error(run_dir, mode, exc)
        logger.error("Run %s failed: %s", mode, error_message)
        if isinstance(exc, ConfigError):
            return EXIT_USAGE
        return EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------


def _setup(config: RunConfig) -> BenchmarkSetup:
    degree = settings.VERIFICATION_QUADRATURE_DEGREE if config.mode in _VERIFY_MODES else None
    return build_benchmark(config, degree)


def _state_summary(state: StateSolution) -> Dict[str, Any]:
    gate = check_uniqueness_gate(state)
    return {
        "margin": gate.margin,
        "margin_class": gate.margin_class.value,
        "gradient_norm": state.gradient_norm,
        "residual_norm": state.residual_norm,
        "divergence_residual": state.divergence_residual,
        "iterations": state.iterations,
        "newton_iterations": state.newton_iterations,
    }


def _write_fields(run_dir: Path, name: str, setup: BenchmarkSetup, phase_values, state: StateSolution, **cells) -> None:
    write_vtk(
        run_dir / f"{name}.vtk",
        setup.mesh,
        point_scalars={"phase": phase_values, "pressure": vertex_values(state.pressure)},
        point_vectors={"velocity": vertex_values(state.velocity)},
        cell_scalars=cells or None,
    )


def _residual_rows(state: StateSolution) -> list[dict]:
    return [{"iteration": i, "residual": r} for i, r in enumerate(state.residual_history)]


# ---------------------------------------------------------------------------
# Mode handlers
# ---------------------------------------------------------------------------


def _solve_history_row(
    breakdown: ObjectiveBreakdown, phase: PhaseField, state: StateSolution, setup: BenchmarkSetup
) -> Dict[str, Any]:
    return {
        "iteration": 0,
        "j_total": breakdown.total,
        "alpha_term": breakdown.alpha_term,
        "f_term": breakdown.f_term,
        "gl_term": breakdown.gl_term,
        "volume": volume_of(phase.values, setup.discretization.lumped),
        "margin": state.margin,
    }


def _run_solve(config: RunConfig, run_dir: Path) -> None:
    setup = _setup(config)
    eps = config.continuation.eps0
    functional = ReducedFunctional(setup.problem, setup.discretization, eps)
    phase = setup.initial_design(eps)
    breakdown, state = functional.evaluate(phase)
    problem = functional.problem(phase)
    lift = lift_boundary_data(problem, setup.discretization)
    energy_lhs, energy_rhs = energy_balance(problem, state, lift, setup.discretization)

    write_table(run_dir / "history.csv", [_solve_history_row(breakdown, phase, state, setup)])
    write_table(run_dir / "residuals.csv", _residual_rows(state))
    _write_fields(run_dir, "state", setup, phase.values, state)
    write_summary(
        run_dir,
        {
            "mode": config.mode.value,
            "eps": eps,
            "objective": breakdown,
            "energy_lhs": energy_lhs,
            "energy_rhs": energy_rhs,
            **_state_summary(state),
        },
    )


def _run_optimize(config: RunConfig, run_dir: Path) -> None:
    setup = _setup(config)
    eps = config.continuation.eps0
    disc = setup.discretization
    functional = ReducedFunctional(setup.problem, disc, eps)
    start = project_admissible(setup.initial_phase, setup.problem.beta, eps, disc.lumped)
    result = run_optimization(functional, start, config.optimizer)

    write_table(run_dir / "history.csv", result.history.records)
    write_table(run_dir / "residuals.csv", _residual_rows(result.state))
    _write_fields(run_dir, "design", setup, result.phase.values, result.state)
    write_summary(
        run_dir,
        {
            "mode": config.mode.value,
            "eps": eps,
            "objective": result.breakdown,
            "multiplier": result.gradient.multiplier,
            "complementarity": result.gradient.complementarity,
            "volume_slack": result.gradient.volume_slack,
            "stationarity": result.stationarity,
            "converged": result.history.converged,
            "stop_reason": result.history.reason,
            "outer_iterations": len(result.history.records) - 1,
            **_state_summary(result.state),
        },
    )


def _relative_change(new: float, old: float) -> float:
    return abs(new - old) / abs(old) if old != 0.0 else abs(new - old)


def _run_continue(config: RunConfig, run_dir: Path) -> None:
    setup = _setup(config)
    disc = setup.discretization
    result = run_continuation(setup.problem, disc, setup.initial_phase, config.continuation)
    final = result.final
    family = canonical_velocity_family(setup.mesh)[: config.verification.velocities]

    history_rows = [
        {"eps": level.eps, **record.model_dump()}
        for level in result.levels
        for record in level.history.records
    ]
    write_table(run_dir / "history.csv", history_rows)
    write_table(run_dir / "levels.csv", [level.summary_row() for level in result.levels])
    write_table(run_dir / "residuals.csv", _residual_rows(final.state))
    write_sharp_mask(run_dir, result.sharp_mask)
    _write_fields(
        run_dir,
        "design",
        setup,
        final.phase.values,
        final.state,
        sharp=result.sharp_mask.cell_values.astype(float),
    )
    _write_fields(run_dir, "sharp", setup, result.sharp_mask.node_values.astype(float), result.sharp_state)

    sweep_rows: list[dict] = []
    sweep_decreasing: Dict[str, bool] = {}
    optimality_rows: list[dict] = []
    try:
        for velocity in family:
            rows = shape_derivative_eps_sweep(setup.problem, result.levels, velocity, disc)
            sweep_rows.extend({"velocity": velocity.name, **row.model_dump()} for row in rows)
            differences = [row.cauchy_difference for row in rows if row.cauchy_difference is not None]
            sweep_decreasing[velocity.name] = len(differences) < 2 or differences[-1] < differences[-2]
        residuals = optimality_residual_geometric(
            level_problem(setup.problem, final),
            final.state,
            final.phase,
            final.multiplier,
            family,
            objective_spec(setup.problem),
            disc,
        )
        optimality_rows = [row.model_dump() for row in residuals]
    except UncertifiedLinearizationError as exc:
        logger.warning("Shape diagnostics skipped: %s", exc)
    write_table(run_dir / "sweep.csv", sweep_rows)
    write_table(run_dir / "optimality.csv", optimality_rows)

    totals = [level.breakdown.total for level in result.levels]
    sharp_total = result.sharp_objective.total
    write_summary(
        run_dir,
        {
            "mode": config.mode.value,
            "levels": len(result.levels),
            "final_eps": final.eps,
            "objective": final.breakdown,
            "multiplier": final.multiplier,
            "stationarity": final.stationarity,
            "sharp_objective": result.sharp_objective,
            "sharp_margin": result.sharp_state.margin,
            "last_halving_change": _relative_change(totals[-1], totals[-2]) if len(totals) > 1 else None,
            "sharp_gap": _relative_change(totals[-1], sharp_total),
            "all_levels_unique": all(level.margin < 1.0 for level in result.levels),
            "sweep_cauchy_decreasing": sweep_decreasing,
            "max_optimality_residual": max((row["normalized"] for row in optimality_rows), default=None),
            **_state_summary(final.state),
        },
    )


def _verification_design(setup: BenchmarkSetup, functional: ReducedFunctional):
    disc = setup.discretization
    return project_admissible(setup.initial_phase, setup.problem.beta, functional.eps, disc.lumped)


def _run_verify_gradient(config: RunConfig, run_dir: Path) -> None:
    setup = _setup(config)
    eps = config.continuation.eps0
    functional = ReducedFunctional(setup.problem, setup.discretization, eps)
    phase = _verification_design(setup, functional)
    directions = feasible_directions(phase, config.verification.directions, config.seed)
    rows = gradient_check(functional, phase, config.verification.steps, directions)

    write_table(run_dir / "gradient_check.csv", rows)
    best = best_errors(rows, "direction")
    write_summary(
        run_dir,
        {
            "mode": config.mode.value,
            "eps": eps,
            "seed": config.seed,
            "best_relative_error": {str(k): v for k, v in best.items()},
            "worst_best_relative_error": max(best.values()),
            "tolerance": config.verification.gradient_tolerance,
        },
    )
    require_gradient_agreement(rows, config.verification.gradient_tolerance)


def _run_verify_shape(config: RunConfig, run_dir: Path) -> None:
    setup = _setup(config)
    eps = config.continuation.eps0
    functional = ReducedFunctional(setup.problem, setup.discretization, eps)
    phase = _verification_design(setup, functional)
    family = canonical_velocity_family(setup.mesh)[: config.verification.velocities]
    rows = shape_check(functional, phase, family, config.verification.shape_steps)

    write_table(run_dir / "shape_check.csv", rows)
    best = best_errors(rows, "velocity")
    write_summary(
        run_dir,
        {
            "mode": config.mode.value,
            "eps": eps,
            "best_relative_error": best,
            "worst_best_relative_error": max(best.values()),
            "tolerance": config.verification.shape_tolerance,
        },
    )
    require_shape_agreement(rows, config.verification.shape_tolerance)


def _run_gamma_check(config: RunConfig, run_dir: Path) -> None:
    mesh = config.mesh
    rows = gamma_check(
        config.continuation.eps0,
        mesh.nx,
        config.verification.gamma_levels,
        mesh.width,
        mesh.height,
    )
    write_table(run_dir / "gamma_check.csv", rows)
    write_table(
        run_dir / "history.csv",
        [{"iteration": level, "energy": row.energy, "relative_error": row.relative_error} for level, row in enumerate(rows)],
    )
    finest = gamma_profile(config.continuation.eps0, mesh.nx * 2 ** (len(rows) - 1), mesh.width, mesh.height)
    write_vtk(run_dir / "profile.vtk", finest.field.space.mesh, point_scalars={"phase": finest.values})
    write_summary(
        run_dir,
        {
            "mode": config.mode.value,
            "eps": config.continuation.eps0,
            "relative_errors": [row.relative_error for row in rows],
            "cells_across": [row.cells_across for row in rows],
            "tolerance": config.verification.gamma_tolerance,
        },
    )
    require_gamma_limit(rows, config.verification.gamma_tolerance)


_HANDLERS: Dict[RunMode, Callable[[RunConfig, Path], None]] = {
    RunMode.SOLVE: _run_solve,
    RunMode.OPTIMIZE: _run_optimize,
    RunMode.CONTINUE: _run_continue,
    RunMode.VERIFY_GRADIENT: _run_verify_gradient,
    RunMode.VERIFY_SHAPE: _run_verify_shape,
    RunMode.GAMMA_CHECK: _run_gamma_check,
}
