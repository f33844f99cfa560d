"""Alternating minimization: exact state estimation and identification steps from (A0, B0),
with the descent identity checked on every sweep."""
import logging
from enum import Enum
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel

from dynamics_identification import mstep_stationarity, solve_mstep
from errors import DescentViolation, DimensionMismatch
from models import (
    ArrayModel, Dataset, DynamicsEstimate, FitOptions, ModelSpec, TimeGrid, TrajectoryEstimate,
    check_dataset, check_dynamics,
)
from objective import DescentGap, Iterate, ObjectiveTerms, descent_gap, evaluate_J, objective_terms
from state_estimation import EStepResiduals, solve_estep

logger = logging.getLogger(__name__)

DESCENT_RTOL = 1e-9


class StopReason(str, Enum):
    step_tol = "step_tol"
    stat_tol = "stat_tol"
    max_iters = "max_iters"


class SweepRecord(BaseModel):
    iteration: int
    J: float
    step_norm: float
    gap_error: float
    estep_residual: float
    mstep_residual: float


class FinalResiduals(BaseModel):
    estep: EStepResiduals
    mstep: float


class FitReport(ArrayModel):
    iterations: int
    J_history: List[float]
    step_norms: List[float]
    descent_gap_errors: List[float]
    gaps: List[DescentGap]
    sweeps: List[SweepRecord]
    final_estimate: DynamicsEstimate
    final_traj: TrajectoryEstimate
    final_residuals: FinalResiduals
    final_terms: ObjectiveTerms
    converged: bool
    stop_reason: StopReason


def z_norm(Z1: Iterate, Z2: Iterate, grid: TimeGrid) -> float:
    """Discrete Z-norm of Z1 - Z2: Frobenius on (A, B), |x_0|, and h-weighted sums of the
    forward-difference derivative of x and of w."""
    for field in ("A", "B", "x", "w"):
        a, b = getattr(Z1, field), getattr(Z2, field)
        if a.shape != b.shape:
            raise DimensionMismatch(field, a.shape, b.shape)
    dx = Z1.x - Z2.x
    squared = (
        np.sum((Z1.A - Z2.A) ** 2) + np.sum((Z1.B - Z2.B) ** 2) + np.sum(dx[0] ** 2)
        + grid.h * np.sum((np.diff(dx, axis=0) / grid.h) ** 2)
        + grid.h * np.sum((Z1.w - Z2.w) ** 2)
    )
    return float(np.sqrt(squared))


def fit(dataset: Dataset, spec: ModelSpec, options: Optional[FitOptions] = None,
        init: Optional[DynamicsEstimate] = None,
        on_sweep: Optional[Callable[[SweepRecord], None]] = None) -> FitReport:
    """Run sweeps until the step norm or the stationarity residual falls below tolerance.

    ``init`` overrides the (A0, B0) starting point. ``on_sweep`` is called with each
    sweep's record. Raises DescentViolation when J (or either half-step functional)
    increases by more than 1e-9 (1 + |J|) and ``options.check_descent`` is set.
    """
    options = options or FitOptions()
    check_dataset(dataset, spec)
    grid = dataset.grid
    estimate = init or DynamicsEstimate(A=spec.A0, B=spec.B0)
    check_dynamics(estimate, spec)

    sol = solve_estep(estimate, dataset, spec)
    z = Iterate(A=estimate.A, B=estimate.B, x=sol.traj.x, w=sol.traj.w)
    J = evaluate_J(z, dataset, spec)
    J_history, step_norms, gap_errors, gaps, sweeps = [J], [], [], [], []
    stop_reason = StopReason.max_iters
    logger.info("fit start: J0=%.10e M=%d alpha=%g beta=%g", J, grid.M, spec.alpha, spec.beta)

    for n in range(1, options.max_iters + 1):
        estimate = solve_mstep(z.x, z.w, dataset, spec)
        sol = solve_estep(estimate, dataset, spec)
        z_next = Iterate(A=estimate.A, B=estimate.B, x=sol.traj.x, w=sol.traj.w)
        J_next = evaluate_J(z_next, dataset, spec)
        gap = descent_gap(z, z_next, dataset, spec)
        step = z_norm(z_next, z, grid)
        mstep_residual = mstep_stationarity(estimate.A, estimate.B, sol.traj.x, sol.traj.q, dataset.v, spec, grid)
        estep_residual = sol.residuals.worst()

        record = SweepRecord(iteration=n, J=J_next, step_norm=step, gap_error=gap.error,
                             estep_residual=estep_residual, mstep_residual=mstep_residual)
        J_history.append(J_next)
        step_norms.append(step)
        gap_errors.append(gap.error)
        gaps.append(gap)
        sweeps.append(record)
        logger.debug("sweep %d: J=%.12e step=%.3e gap_error=%.3e", n, J_next, step, gap.error)
        if on_sweep is not None:
            on_sweep(record)

        tolerance = DESCENT_RTOL * (1 + abs(J))
        if options.check_descent and (
            J_next > J + tolerance or gap.estep_lhs < -tolerance or gap.mstep_lhs < -tolerance
        ):
            raise DescentViolation(n, gap, J, J_next)

        z, J = z_next, J_next
        if step <= options.tol_step:
            stop_reason = StopReason.step_tol
            break
        if estep_residual + mstep_residual <= options.tol_stat:
            stop_reason = StopReason.stat_tol
            break

    converged = stop_reason is not StopReason.max_iters
    logger.info("fit done: %d sweeps, J=%.10e, stop=%s", len(sweeps), J, stop_reason.value)
    return FitReport(
        iterations=len(sweeps),
        J_history=J_history,
        step_norms=step_norms,
        descent_gap_errors=gap_errors,
        gaps=gaps,
        sweeps=sweeps,
        final_estimate=z.dynamics,
        final_traj=sol.traj,
        final_residuals=FinalResiduals(estep=sol.residuals, mstep=mstep_residual),
        final_terms=objective_terms(z, dataset, spec),
        converged=converged,
        stop_reason=stop_reason,
    )
