"""Projected-gradient descent on the admissible phase fields."""

import logging
from typing import Optional

import numpy as np

from app.models.fem import Field
from app.models.objective import ObjectiveBreakdown, PhaseField
from app.models.optimization import (
    IterationRecord,
    OptimizationHistory,
    OptimizationResult,
    OptimizerOptions,
    StepResult,
    volume_of,
)
from app.models.state import ReducedGradient, StateSolution
from app.services.adjoint_gradient import (
    ReducedFunctional,
    SingularSystemError,
    inner_product_matrix,
    stationarity_residual,
)
from app.services.fem_assembly import lumped_weights
from app.services.projection import project_with_shift
from app.services.state_solver import StateSolveError

logger = logging.getLogger(__name__)

_STATIONARY_FLOOR = 1e-14


class OptimizationStalledError(RuntimeError):
    """Armijo backtracking exhausted its halvings."""

    def __init__(self, message: str, step_length: float, halvings: int):
        self.step_length = step_length
        self.halvings = halvings
        super().__init__(message)


class OptimizationAbortedError(RuntimeError):
    """The state solver failed on an iterate that must be solvable."""

    def __init__(self, message: str, history: OptimizationHistory):
        self.history = history
        super().__init__(message)


def project_admissible(
    phi_raw: Field,
    beta: float,
    eps: float,
    weights: Optional[np.ndarray] = None,
) -> PhaseField:
    """Clip to [-1, 1] and shift down until int phi <= beta |Omega|."""

    if weights is None:
        weights = lumped_weights(phi_raw.space.mesh)
    projected, _ = project_with_shift(phi_raw.values, beta, weights)
    return PhaseField(field=phi_raw.with_values(projected), eps=eps, beta=beta)


def step(
    functional: ReducedFunctional,
    phase: PhaseField,
    breakdown: ObjectiveBreakdown,
    state: StateSolution,
    gradient: ReducedGradient,
    step_length: float,
    options: OptimizerOptions,
) -> StepResult:
    """One projected Armijo step from ``phase`` along ``-gradient.field``.

    Accepts when J(phi+) <= J(phi) - c1 / tau * ||phi+ - phi||_X^2, halving
    tau on rejection. Trial states that fail to solve count as rejections.
    """

    direction = gradient.field.values
    if not np.any(direction):
        return StepResult(
            phase=phase, accepted=True, step_length=step_length, halvings=0, breakdown=breakdown, state=state
        )

    weights = gradient.mass_weights
    metric = inner_product_matrix(functional.disc, gradient.inner_product, phase.eps)
    tau = step_length
    for halvings in range(options.max_halvings + 1):
        proposal, _ = project_with_shift(phase.values - tau * direction, phase.beta, weights)
        difference = proposal - phase.values
        if not np.any(difference):
            return StepResult(
                phase=phase, accepted=True, step_length=tau, halvings=halvings, breakdown=breakdown, state=state
            )
        trial = phase.with_values(proposal)
        functional.remember(state)
        try:
            trial_breakdown, trial_state = functional.evaluate(trial)
        except StateSolveError as exc:
            logger.debug("Trial state failed at tau=%.3e: %s", tau, exc)
            tau *= 0.5
            continue
        decrease = options.armijo_c1 / tau * float(difference @ (metric @ difference))
        if trial_breakdown.total <= breakdown.total - decrease:
            return StepResult(
                phase=trial,
                accepted=True,
                step_length=tau,
                halvings=halvings,
                breakdown=trial_breakdown,
                state=trial_state,
            )
        tau *= 0.5

    functional.remember(state)
    raise OptimizationStalledError(
        f"stalled: no Armijo decrease after {options.max_halvings} halvings (tau={tau:.3e})",
        step_length=tau,
        halvings=options.max_halvings,
    )


def _record(
    iteration: int,
    breakdown: ObjectiveBreakdown,
    stationarity: float,
    gradient: ReducedGradient,
    step_length: float,
    phase: PhaseField,
    state: StateSolution,
) -> IterationRecord:
    return IterationRecord(
        iteration=iteration,
        j_total=breakdown.total,
        alpha_term=breakdown.alpha_term,
        f_term=breakdown.f_term,
        gl_term=breakdown.gl_term,
        stationarity=stationarity,
        multiplier=gradient.multiplier,
        step_length=step_length,
        volume=volume_of(phase.values, gradient.mass_weights),
        margin=state.margin,
    )


def run_optimization(
    functional: ReducedFunctional,
    phase_init: PhaseField,
    options: Optional[OptimizerOptions] = None,
) -> OptimizationResult:
    """Projected gradient until the stationarity residual falls below tol * r0."""

    options = options or functional.config.optimizer
    weights = functional.disc.lumped
    phase = project_admissible(phase_init.field, phase_init.beta, phase_init.eps, weights)
    records: list[IterationRecord] = []

    try:
        breakdown, state = functional.evaluate(phase)
        gradient = functional.gradient(phase, state, options.inner_product)
    except (StateSolveError, SingularSystemError) as exc:
        history = OptimizationHistory(eps=phase.eps, records=records, reason="aborted")
        raise OptimizationAbortedError(f"initial design could not be solved: {exc}", history) from exc

    residual = stationarity_residual(gradient, phase)
    initial_residual = residual
    records.append(_record(0, breakdown, residual, gradient, 0.0, phase, state))
    tau = options.initial_step
    reason = "max_outer"
    converged = False

    for iteration in range(1, options.max_outer + 1):
        if residual <= options.tolerance * initial_residual or residual <= _STATIONARY_FLOOR:
            converged = True
            reason = "stationary"
            break
        try:
            result = step(functional, phase, breakdown, state, gradient, tau, options)
        except OptimizationStalledError as exc:
            logger.warning("Optimizer stalled at iteration %d: %s", iteration, exc)
            reason = "stalled"
            break
        if result.phase is phase:
            reason = "no_progress"
            break

        phase, breakdown, state = result.phase, result.breakdown, result.state
        try:
            gradient = functional.gradient(phase, state, options.inner_product)
        except SingularSystemError as exc:
            history = OptimizationHistory(eps=phase.eps, records=records, reason="aborted")
            raise OptimizationAbortedError(f"gradient failed at iteration {iteration}: {exc}", history) from exc
        residual = stationarity_residual(gradient, phase)
        records.append(_record(iteration, breakdown, residual, gradient, result.step_length, phase, state))
        logger.debug(
            "iteration %d: J=%.10g stationarity=%.3e tau=%.3e halvings=%d",
            iteration,
            breakdown.total,
            residual,
            result.step_length,
            result.halvings,
        )
        tau = min(result.step_length * options.step_growth, options.max_step)
    else:
        if residual <= options.tolerance * initial_residual:
            converged = True
            reason = "stationary"

    functional.remember(state)
    history = OptimizationHistory(eps=phase.eps, records=records, converged=converged, reason=reason)
    logger.info(
        "Optimization at eps=%.4g finished (%s) after %d iterations: J=%.10g, stationarity %.3e",
        phase.eps,
        reason,
        len(records) - 1,
        breakdown.total,
        residual,
    )
    return OptimizationResult(
        phase=phase,
        state=state,
        breakdown=breakdown,
        gradient=gradient,
        stationarity=residual,
        history=history,
    )
