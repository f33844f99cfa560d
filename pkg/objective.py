"""The discretized functional J, its exact gradient, the adjoint q and the descent identity.

Conventions on a uniform grid with step h: x lives at the M+1 nodes, w, v, y and q are
constant on the M intervals, integrals are left-endpoint rectangle sums and dx/dt is
the forward difference. Every formula below is exact for that discrete objective.
"""
import numpy as np

from errors import DimensionMismatch
from models import (
    ArrayModel, Array, Dataset, DynamicsEstimate, ModelSpec, TimeGrid,
    check_dataset, check_trajectory, spd_inverse,
)


class Iterate(ArrayModel):
    """One point Z = (A, B, x, w) of the joint problem."""

    A: Array
    B: Array
    x: Array
    w: Array

    @property
    def dynamics(self):
        return DynamicsEstimate(A=self.A, B=self.B)


class GradientJ(ArrayModel):
    dA: Array
    dB: Array
    dx: Array
    dw: Array

    def pair(self, direction: Iterate) -> float:
        """Directional derivative of J along ``direction``."""
        return float(
            np.sum(self.dA * direction.A) + np.sum(self.dB * direction.B)
            + np.sum(self.dx * direction.x) + np.sum(self.dw * direction.w)
        )


class ObjectiveTerms(ArrayModel):
    dynamics_prior: float
    model_misfit: float
    initial: float
    noise: float
    observation: float

    @property
    def total(self):
        return self.dynamics_prior + self.model_misfit + self.initial + self.noise + self.observation


class DescentGap(ArrayModel):
    """Both sides of the per-sweep descent identity, split into its E- and M-step halves."""

    lhs: float
    rhs: float
    estep_lhs: float
    estep_rhs: float
    mstep_lhs: float
    mstep_rhs: float

    @property
    def error(self):
        return abs(self.lhs - self.rhs)


def _check_dynamics_shapes(A, B, spec):
    N, d = spec.dims.N, spec.dims.d
    if A.shape != (N, N):
        raise DimensionMismatch("A", (N, N), A.shape)
    if B.shape != (N, d):
        raise DimensionMismatch("B", (N, d), B.shape)


def model_defect(A, B, x, w, v, spec: ModelSpec, grid: TimeGrid):
    """d_k = (x_{k+1} - x_k)/h - A x_k - B v_k - G w_k, shape (M, N)."""
    x = np.asarray(x)
    return np.diff(x, axis=0) / grid.h - x[:-1] @ A.T - v @ B.T - w @ spec.G.T


def residual_q(A, B, x, w, v, spec: ModelSpec, grid: TimeGrid):
    """Adjoint per interval, q_k = -beta d_k."""
    A, B, x, w, v = (np.asarray(a, dtype=float) for a in (A, B, x, w, v))
    _check_dynamics_shapes(A, B, spec)
    check_trajectory(x, w, spec, grid)
    if v.shape != (grid.M, spec.dims.d):
        raise DimensionMismatch("v", (grid.M, spec.dims.d), v.shape)
    return -spec.beta * model_defect(A, B, x, w, v, spec, grid)


def _quadratic_sum(vectors, weight):
    return float(np.einsum("ki,ij,kj->", vectors, weight, vectors))


def _validate_iterate(Z: Iterate, dataset: Dataset, spec: ModelSpec):
    _check_dynamics_shapes(Z.A, Z.B, spec)
    check_trajectory(Z.x, Z.w, spec, dataset.grid)
    check_dataset(dataset, spec)


def objective_terms(Z: Iterate, dataset: Dataset, spec: ModelSpec) -> ObjectiveTerms:
    _validate_iterate(Z, dataset, spec)
    h = dataset.grid.h
    defect = model_defect(Z.A, Z.B, Z.x, Z.w, dataset.v, spec, dataset.grid)
    e0 = Z.x[0] - spec.x0
    r = dataset.y - Z.x[:-1] @ spec.C.T
    return ObjectiveTerms(
        dynamics_prior=0.5 * spec.alpha * (np.sum((Z.A - spec.A0) ** 2) + np.sum((Z.B - spec.B0) ** 2)),
        model_misfit=0.5 * spec.beta * h * float(np.sum(defect ** 2)),
        initial=0.5 * float(e0 @ spd_inverse(spec.Pi0) @ e0),
        noise=0.5 * h * _quadratic_sum(Z.w, spd_inverse(spec.Q)),
        observation=0.5 * h * _quadratic_sum(r, spd_inverse(spec.R)),
    )


def evaluate_J(Z: Iterate, dataset: Dataset, spec: ModelSpec) -> float:
    return objective_terms(Z, dataset, spec).total


def evaluate_K(Z: Iterate, dataset: Dataset, spec: ModelSpec) -> float:
    """State-estimation functional: J without the (A, B) prior."""
    terms = objective_terms(Z, dataset, spec)
    return terms.model_misfit + terms.initial + terms.noise + terms.observation


def evaluate_L(Z: Iterate, dataset: Dataset, spec: ModelSpec) -> float:
    """Identification functional: the (A, B) prior plus the model misfit."""
    terms = objective_terms(Z, dataset, spec)
    return terms.dynamics_prior + terms.model_misfit


def gradient_J(Z: Iterate, dataset: Dataset, spec: ModelSpec) -> GradientJ:
    _validate_iterate(Z, dataset, spec)
    h = dataset.grid.h
    v = dataset.v
    q = -spec.beta * model_defect(Z.A, Z.B, Z.x, Z.w, v, spec, dataset.grid)
    r = dataset.y - Z.x[:-1] @ spec.C.T
    R_inv = spd_inverse(spec.R)

    dA = spec.alpha * (Z.A - spec.A0) + h * q.T @ Z.x[:-1]
    dB = spec.alpha * (Z.B - spec.B0) + h * q.T @ v
    dw = h * (q @ spec.G + Z.w @ spd_inverse(spec.Q))

    dx = np.zeros_like(Z.x)
    # node j collects -q_{j-1} from the interval on its left and
    # q_j + h (A^T q_j - C^T R^{-1} r_j) from the interval on its right
    dx[1:] -= q
    dx[:-1] += q + h * (q @ Z.A - r @ R_inv @ spec.C)
    dx[0] += spd_inverse(spec.Pi0) @ (Z.x[0] - spec.x0)
    return GradientJ(dA=dA, dB=dB, dx=dx, dw=dw)


def descent_gap(z_prev: Iterate, z_next: Iterate, dataset: Dataset, spec: ModelSpec) -> DescentGap:
    """Compare J(Z^n) - J(Z^{n+1}) against the completed-square expression.

    The mixed point (A_{n+1}, B_{n+1}, x_n, w_n) splits the decrease into the L-decrease
    of the identification step and the K-decrease of the following estimation step.
    """
    _validate_iterate(z_prev, dataset, spec)
    _validate_iterate(z_next, dataset, spec)
    h = dataset.grid.h
    mixed = Iterate(A=z_next.A, B=z_next.B, x=z_prev.x, w=z_prev.w)

    J_prev = evaluate_J(z_prev, dataset, spec)
    J_next = evaluate_J(z_next, dataset, spec)
    estep_lhs = evaluate_K(mixed, dataset, spec) - evaluate_K(z_next, dataset, spec)
    mstep_lhs = evaluate_L(z_prev, dataset, spec) - evaluate_L(mixed, dataset, spec)

    dx = z_prev.x - z_next.x
    dw = z_prev.w - z_next.w
    dynamics_diff = np.diff(dx, axis=0) / h - dx[:-1] @ z_next.A.T - dw @ spec.G.T
    estep_rhs = (
        0.5 * float(dx[0] @ spd_inverse(spec.Pi0) @ dx[0])
        + 0.5 * spec.beta * h * float(np.sum(dynamics_diff ** 2))
        + 0.5 * h * _quadratic_sum(dw, spd_inverse(spec.Q))
        + 0.5 * h * _quadratic_sum(dx[:-1] @ spec.C.T, spd_inverse(spec.R))
    )

    dA = z_prev.A - z_next.A
    dB = z_prev.B - z_next.B
    model_diff = z_prev.x[:-1] @ dA.T + dataset.v @ dB.T
    mstep_rhs = (
        0.5 * spec.alpha * float(np.sum(dA ** 2) + np.sum(dB ** 2))
        + 0.5 * spec.beta * h * float(np.sum(model_diff ** 2))
    )
    return DescentGap(
        lhs=J_prev - J_next, rhs=estep_rhs + mstep_rhs,
        estep_lhs=estep_lhs, estep_rhs=estep_rhs, mstep_lhs=mstep_lhs, mstep_rhs=mstep_rhs,
    )
