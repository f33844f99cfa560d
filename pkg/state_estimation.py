"""State estimation for fixed (A, B).

Minimizes the convex quadratic K over (x, w). Each interval noise w_k is eliminated in
closed form, which leaves a symmetric positive-definite block-tridiagonal system in the
node states x_0..x_M; that system is solved by block Cholesky elimination.
"""
import logging

import numpy as np
from pydantic import BaseModel
from scipy import linalg

from errors import SingularSystem
from models import (
    ArrayModel, Array, Dataset, DynamicsEstimate, ModelSpec, TrajectoryEstimate,
    check_dataset, check_dynamics, spd_inverse,
)
from objective import Iterate, evaluate_K, model_defect, residual_q

logger = logging.getLogger(__name__)


class EStepResiduals(BaseModel):
    forward: float
    backward: float
    bc_initial: float
    bc_terminal: float

    def worst(self):
        return max(self.forward, self.backward, self.bc_initial, self.bc_terminal)


class EStepSolution(ArrayModel):
    traj: TrajectoryEstimate
    objective_K: float
    residuals: EStepResiduals
    pivot_min_eigenvalues: Array


def noise_gain(spec: ModelSpec):
    """The m x N map d -> beta (Q^{-1} + beta G^T G)^{-1} G^T d."""
    system = spd_inverse(spec.Q) + spec.beta * spec.G.T @ spec.G
    try:
        factor = linalg.cho_factor(system)
    except linalg.LinAlgError as exc:
        raise SingularSystem("noise elimination", str(exc)) from exc
    return spec.beta * linalg.cho_solve(factor, spec.G.T)


def eliminate_noise(defect, spec: ModelSpec):
    """Minimizer over w of (beta/2)|defect - G w|^2 + (1/2) Q^{-1} w . w."""
    return noise_gain(spec) @ np.asarray(defect, dtype=float)


def eliminated_weight(spec: ModelSpec):
    """Per-interval weight left on the defect once w is eliminated: beta I - beta G gain."""
    return spec.beta * (np.eye(spec.dims.N) - spec.G @ noise_gain(spec))


def interval_weight(spec: ModelSpec):
    """(G Q G^T + I/beta)^{-1}; equal to ``eliminated_weight`` by the Woodbury identity."""
    return spd_inverse(spec.G @ spec.Q @ spec.G.T + np.eye(spec.dims.N) / spec.beta)


def _assemble_blocks(A, B, dataset: Dataset, spec: ModelSpec):
    """Diagonal blocks, sub-diagonal blocks and right-hand side of the node-state system."""
    grid = dataset.grid
    M, h, N = grid.M, grid.h, spec.dims.N
    W_h = interval_weight(spec) / h
    F = np.eye(N) + h * A
    R_inv = spd_inverse(spec.R)
    CtRC = h * spec.C.T @ R_inv @ spec.C
    u = h * dataset.v @ B.T
    Pi0_inv = spd_inverse(spec.Pi0)

    diag = np.zeros((M + 1, N, N))
    diag[0] += Pi0_inv
    diag[:M] += F.T @ W_h @ F + CtRC
    diag[1:] += W_h
    lower = np.broadcast_to(-W_h @ F, (M, N, N))

    rhs = np.zeros((M + 1, N))
    rhs[0] += Pi0_inv @ spec.x0
    rhs[:M] += -u @ (F.T @ W_h).T + h * dataset.y @ R_inv @ spec.C
    rhs[1:] += u @ W_h
    return diag, lower, rhs


def _block_cholesky_solve(diag, lower, rhs):
    """Solve the SPD block-tridiagonal system; return (x, smallest pivot eigenvalues)."""
    n_blocks = diag.shape[0]
    factors = []
    couplings = []
    pivots = np.empty(n_blocks)
    pivot = diag[0]
    for j in range(n_blocks):
        if j > 0:
            pivot = diag[j] - couplings[j - 1] @ couplings[j - 1].T
        pivots[j] = linalg.eigvalsh(pivot)[0]
        try:
            factor = linalg.cholesky(pivot, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularSystem(f"state estimation pivot {j}", f"min eigenvalue {pivots[j]:.3e}") from exc
        factors.append(factor)
        if j < n_blocks - 1:
            couplings.append(linalg.solve_triangular(factor, lower[j].T, lower=True).T)

    z = np.empty_like(rhs)
    z[0] = linalg.solve_triangular(factors[0], rhs[0], lower=True)
    for j in range(1, n_blocks):
        z[j] = linalg.solve_triangular(factors[j], rhs[j] - couplings[j - 1] @ z[j - 1], lower=True)

    x = np.empty_like(rhs)
    x[-1] = linalg.solve_triangular(factors[-1], z[-1], lower=True, trans="T")
    for j in range(n_blocks - 2, -1, -1):
        x[j] = linalg.solve_triangular(factors[j], z[j] - couplings[j].T @ x[j + 1], lower=True, trans="T")
    return x, pivots


def _kkt_residuals(traj: TrajectoryEstimate, A, B, dataset: Dataset, spec: ModelSpec) -> EStepResiduals:
    h = dataset.grid.h
    x, q, v = traj.x, traj.q, dataset.v
    weight_inverse = spec.G @ spec.Q @ spec.G.T + np.eye(spec.dims.N) / spec.beta
    forward = np.diff(x, axis=0) / h - x[:-1] @ A.T - v @ B.T + q @ weight_inverse.T

    R_inv = spd_inverse(spec.R)
    innovation = (dataset.y - x[:-1] @ spec.C.T) @ R_inv @ spec.C
    backward = -np.diff(q, axis=0) / h - q[1:] @ A + innovation[1:]

    q_start = q[0] + h * (A.T @ q[0] - innovation[0])
    bc_initial = x[0] - spec.x0 + spec.Pi0 @ q_start
    return EStepResiduals(
        forward=float(np.max(np.abs(forward))),
        backward=float(np.max(np.abs(backward))) if backward.size else 0.0,
        bc_initial=float(np.max(np.abs(bc_initial))),
        bc_terminal=float(np.max(np.abs(q[-1]))),
    )


def estep_residuals(sol: EStepSolution, A, B, dataset: Dataset, spec: ModelSpec) -> EStepResiduals:
    """Defects of the discrete forward-backward optimality system at ``sol``.

    Uses the stored q, so perturbing x alone shows up in the forward defect.
    """
    return _kkt_residuals(sol.traj, np.asarray(A, dtype=float), np.asarray(B, dtype=float), dataset, spec)


def solve_estep(estimate: DynamicsEstimate, dataset: Dataset, spec: ModelSpec) -> EStepSolution:
    check_dynamics(estimate, spec)
    check_dataset(dataset, spec)
    A, B = estimate.A, estimate.B
    grid = dataset.grid

    diag, lower, rhs = _assemble_blocks(A, B, dataset, spec)
    x, pivots = _block_cholesky_solve(diag, lower, rhs)

    defect_without_noise = model_defect(A, B, x, np.zeros((grid.M, spec.dims.m)), dataset.v, spec, grid)
    w = defect_without_noise @ noise_gain(spec).T
    q = residual_q(A, B, x, w, dataset.v, spec, grid)
    traj = TrajectoryEstimate(x=x, w=w, q=q)

    K = evaluate_K(Iterate(A=A, B=B, x=x, w=w), dataset, spec)
    residuals = _kkt_residuals(traj, A, B, dataset, spec)
    logger.debug("E-step: K=%.6e worst residual=%.3e min pivot=%.3e", K, residuals.worst(), pivots.min())
    return EStepSolution(traj=traj, objective_K=K, residuals=residuals, pivot_min_eigenvalues=pivots)
