"""Independent oracles and the built-in verification suites.

Every oracle here is coded separately from the solver it checks: the dense solves
assemble the objective as one stacked least-squares problem, and the smoother is a
textbook Kalman filter followed by a Rauch-Tung-Striebel pass.
"""
import logging
import time
from typing import Callable, List

import numpy as np
from pydantic import BaseModel
from scipy import linalg

from alternating_driver import fit
from dynamics_identification import solve_mstep
from models import Dims, DynamicsEstimate, FitOptions, ModelSpec, make_grid, spd_inverse, validate_spec
from objective import Iterate, evaluate_J, gradient_J
from simulator import make_control, simulate_sde
from state_estimation import solve_estep

logger = logging.getLogger(__name__)

SIZE_CAP = {"N": 4, "d": 4, "m": 4, "p": 4, "M": 64}

GRADIENT_RTOL = 1e-6
FD_STEP = 1e-6
ESTEP_RTOL = 1e-10
MSTEP_RTOL = 1e-10
DESCENT_RTOL = 1e-9
SMOOTHER_RTOL = 1e-4


class SuiteResult(BaseModel):
    name: str
    passed: bool
    worst_error: float
    threshold: float
    seed: int
    instances: int
    seconds: float = 0.0


def relative_error(value, reference):
    """Norm of the difference over the reference norm, floored at unit scale."""
    value, reference = np.asarray(value), np.asarray(reference)
    return float(np.linalg.norm(value - reference) / max(np.linalg.norm(reference), 1.0))


# Random problem instances

def random_spd(rng, n, floor=0.5):
    factor = rng.standard_normal((n, n))
    return factor @ factor.T / n + floor * np.eye(n)


def random_spec(rng, dims: Dims, alpha=1.0, beta=10.0) -> ModelSpec:
    N, d, m, p = dims.N, dims.d, dims.m, dims.p
    return validate_spec(ModelSpec(
        dims=dims,
        C=rng.standard_normal((p, N)),
        G=rng.standard_normal((N, m)) / np.sqrt(m),
        Q=random_spd(rng, m), R=random_spd(rng, p), Pi0=random_spd(rng, N),
        x0=rng.standard_normal(N),
        A0=-np.eye(N) + 0.3 * rng.standard_normal((N, N)),
        B0=rng.standard_normal((N, d)),
        alpha=alpha, beta=beta,
    ))


def random_problem(seed, dims: Dims, M, T=1.0, alpha=1.0, beta=10.0, noise_scale=0.3):
    """A random spec plus a dataset simulated from a perturbed (A0, B0)."""
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, dims, alpha, beta)
    grid = make_grid(T, M)
    A_true = spec.A0 + 0.3 * rng.standard_normal(spec.A0.shape)
    B_true = spec.B0 + 0.3 * rng.standard_normal(spec.B0.shape)
    v = make_control("multisine", {"components": [[1.0, 1.0 / T], [0.5, 3.0 / T, 0.4]]}, grid, dims.d)
    sim = simulate_sde(A_true, B_true, spec, grid, v, seed=seed, noise_scale=noise_scale)
    return spec, sim.dataset, DynamicsEstimate(A=A_true, B=B_true)


# Oracles

def _upper_root(matrix):
    """U with U^T U = matrix."""
    return linalg.cholesky(matrix, lower=False)


def dense_estep(estimate: DynamicsEstimate, dataset, spec: ModelSpec):
    """Minimize K over all (x, w) at once as a single stacked least-squares problem."""
    grid = dataset.grid
    M, h = grid.M, grid.h
    N, m, p = spec.dims.N, spec.dims.m, spec.dims.p
    n_x, n_w = (M + 1) * N, M * m
    A, B = estimate.A, estimate.B

    def x_cols(k):
        return slice(k * N, (k + 1) * N)

    def w_cols(k):
        return slice(n_x + k * m, n_x + (k + 1) * m)

    blocks, targets = [], []
    U_P = _upper_root(spd_inverse(spec.Pi0))
    row = np.zeros((N, n_x + n_w))
    row[:, x_cols(0)] = U_P
    blocks.append(row)
    targets.append(U_P @ spec.x0)

    scale = np.sqrt(spec.beta * h)
    U_Q = np.sqrt(h) * _upper_root(spd_inverse(spec.Q))
    U_R = np.sqrt(h) * _upper_root(spd_inverse(spec.R))
    for k in range(M):
        row = np.zeros((N, n_x + n_w))
        row[:, x_cols(k + 1)] = scale * np.eye(N) / h
        row[:, x_cols(k)] = -scale * (np.eye(N) / h + A)
        row[:, w_cols(k)] = -scale * spec.G
        blocks.append(row)
        targets.append(scale * B @ dataset.v[k])

        row = np.zeros((m, n_x + n_w))
        row[:, w_cols(k)] = U_Q
        blocks.append(row)
        targets.append(np.zeros(m))

        row = np.zeros((p, n_x + n_w))
        row[:, x_cols(k)] = U_R @ spec.C
        blocks.append(row)
        targets.append(U_R @ dataset.y[k])

    solution = np.linalg.lstsq(np.vstack(blocks), np.concatenate(targets), rcond=None)[0]
    return solution[:n_x].reshape(M + 1, N), solution[n_x:].reshape(M, m)


def dense_mstep(x, w, dataset, spec: ModelSpec) -> DynamicsEstimate:
    """Minimize L over vec([A B]) (row-major) as one stacked least-squares problem."""
    grid = dataset.grid
    N, d = spec.dims.N, spec.dims.d
    n = N * (N + d)
    prior = np.hstack([spec.A0, spec.B0]).reshape(-1)
    blocks = [np.sqrt(spec.alpha) * np.eye(n)]
    targets = [np.sqrt(spec.alpha) * prior]
    scale = np.sqrt(spec.beta * grid.h)
    for k in range(grid.M):
        z = np.concatenate([x[k], dataset.v[k]])
        blocks.append(scale * np.kron(np.eye(N), z[None, :]))
        targets.append(scale * ((x[k + 1] - x[k]) / grid.h - spec.G @ w[k]))
    theta = np.linalg.lstsq(np.vstack(blocks), np.concatenate(targets), rcond=None)[0].reshape(N, N + d)
    return DynamicsEstimate(A=theta[:, :N], B=theta[:, N:])


def rts_smooth(estimate: DynamicsEstimate, dataset, spec: ModelSpec):
    """Kalman filter + RTS smoother on the Euler-discretized model.

    Transition I + hA, input h B v_k, process covariance h G Q G^T, observation
    covariance R/h on the rate signal, observations at the M left endpoints.
    """
    grid = dataset.grid
    M, h, N = grid.M, grid.h, spec.dims.N
    F = np.eye(N) + h * estimate.A
    Qd = h * spec.G @ spec.Q @ spec.G.T
    Rd = spec.R / h
    C = spec.C

    filtered = np.zeros((M + 1, N))
    filtered_cov = np.zeros((M + 1, N, N))
    predicted = np.zeros((M + 1, N))
    predicted_cov = np.zeros((M + 1, N, N))
    mean, cov = spec.x0.copy(), spec.Pi0.copy()
    for k in range(M + 1):
        if k < M:
            S = C @ cov @ C.T + Rd
            gain = linalg.solve(S, C @ cov, assume_a="pos").T
            mean = mean + gain @ (dataset.y[k] - C @ mean)
            cov = (np.eye(N) - gain @ C) @ cov
        filtered[k], filtered_cov[k] = mean, cov
        if k < M:
            mean = F @ mean + h * estimate.B @ dataset.v[k]
            cov = F @ cov @ F.T + Qd
            predicted[k + 1], predicted_cov[k + 1] = mean, cov

    smoothed = filtered.copy()
    for k in range(M - 1, -1, -1):
        gain = linalg.solve(predicted_cov[k + 1], F @ filtered_cov[k], assume_a="pos").T
        smoothed[k] = filtered[k] + gain @ (smoothed[k + 1] - predicted[k + 1])
    return smoothed


def finite_difference(function: Callable[[Iterate], float], Z: Iterate, direction: Iterate, step=FD_STEP):
    def shifted(sign):
        return Iterate(**{f: getattr(Z, f) + sign * step * getattr(direction, f) for f in ("A", "B", "x", "w")})

    return (function(shifted(1.0)) - function(shifted(-1.0))) / (2 * step)


def _random_iterate(rng, spec: ModelSpec, M):
    N, d, m = spec.dims.N, spec.dims.d, spec.dims.m
    return Iterate(A=rng.standard_normal((N, N)), B=rng.standard_normal((N, d)),
                   x=rng.standard_normal((M + 1, N)), w=rng.standard_normal((M, m)))


# Suites

def gradient_suite(dims: Dims, M, seed, instances=20, directions=20, gradient=gradient_J) -> SuiteResult:
    worst, worst_seed = 0.0, seed
    for i in range(instances):
        instance_seed = seed + i
        spec, dataset, _ = random_problem(instance_seed, dims, M)
        rng = np.random.default_rng(instance_seed)
        Z = _random_iterate(rng, spec, M)
        grad = gradient(Z, dataset, spec)
        for _ in range(directions):
            direction = _random_iterate(rng, spec, M)
            analytic = grad.pair(direction)
            numeric = finite_difference(lambda z: evaluate_J(z, dataset, spec), Z, direction)
            error = abs(numeric - analytic) / max(abs(analytic), 1.0)
            if error > worst:
                worst, worst_seed = error, instance_seed
    return SuiteResult(name="gradient", passed=worst <= GRADIENT_RTOL, worst_error=worst,
                       threshold=GRADIENT_RTOL, seed=worst_seed, instances=instances)


def estep_suite(dims: Dims, M, seed, instances=10) -> SuiteResult:
    worst, worst_seed = 0.0, seed
    for i in range(instances):
        instance_seed = seed + i
        spec, dataset, truth = random_problem(instance_seed, dims, min(M, 50))
        sol = solve_estep(truth, dataset, spec)
        x, w = dense_estep(truth, dataset, spec)
        error = max(relative_error(sol.traj.x, x), relative_error(sol.traj.w, w))
        if error > worst:
            worst, worst_seed = error, instance_seed
    return SuiteResult(name="estep", passed=worst <= ESTEP_RTOL, worst_error=worst,
                       threshold=ESTEP_RTOL, seed=worst_seed, instances=instances)


def mstep_suite(dims: Dims, M, seed, instances=10) -> SuiteResult:
    worst, worst_seed = 0.0, seed
    for i in range(instances):
        instance_seed = seed + i
        spec, dataset, truth = random_problem(instance_seed, dims, M)
        traj = solve_estep(truth, dataset, spec).traj
        estimate = solve_mstep(traj.x, traj.w, dataset, spec)
        reference = dense_mstep(traj.x, traj.w, dataset, spec)
        error = max(relative_error(estimate.A, reference.A), relative_error(estimate.B, reference.B))
        if error > worst:
            worst, worst_seed = error, instance_seed
    return SuiteResult(name="mstep", passed=worst <= MSTEP_RTOL, worst_error=worst,
                       threshold=MSTEP_RTOL, seed=worst_seed, instances=instances)


def descent_suite(dims: Dims, M, seed, instances=10, max_iters=30) -> SuiteResult:
    """Descent identity, nonnegative right-hand side and monotone J on every sweep."""
    worst, worst_seed, passed = 0.0, seed, True
    options = FitOptions(max_iters=max_iters, tol_step=1e-8, tol_stat=0.0, check_descent=False)
    for i in range(instances):
        instance_seed = seed + i
        spec, dataset, _ = random_problem(instance_seed, dims, M)
        report = fit(dataset, spec, options)
        for n, gap in enumerate(report.gaps):
            J_prev, J_next = report.J_history[n], report.J_history[n + 1]
            scale = 1 + abs(J_prev)
            error = gap.error / scale
            if gap.rhs < 0 or J_next > J_prev + DESCENT_RTOL * scale:
                passed = False
                worst_seed = instance_seed
            if error > worst:
                worst = error
                if passed:
                    worst_seed = instance_seed
    return SuiteResult(name="descent", passed=passed and worst <= DESCENT_RTOL, worst_error=worst,
                       threshold=DESCENT_RTOL, seed=worst_seed, instances=instances)


def smoother_problem(seed, M=50, T=1.0, beta=1e8):
    """Scalar model A=-1 with unit C, G, Q, R, Pi0 at large beta."""
    one = [[1.0]]
    spec = validate_spec(ModelSpec(
        dims=Dims(N=1, d=1, m=1, p=1), C=one, G=one, Q=one, R=one, Pi0=one, x0=[1.0],
        A0=[[-1.0]], B0=[[0.5]], alpha=1.0, beta=beta,
    ))
    grid = make_grid(T, M)
    v = make_control("sine", {"amp": 1.0, "freq": 1.0}, grid, 1)
    sim = simulate_sde(spec.A0, spec.B0, spec, grid, v, seed=seed, noise_scale=1.0)
    return spec, sim.dataset


def smoother_suite(seed, instances=3) -> SuiteResult:
    worst, worst_seed = 0.0, seed
    for i in range(instances):
        instance_seed = seed + i
        spec, dataset = smoother_problem(instance_seed)
        estimate = DynamicsEstimate(A=spec.A0, B=spec.B0)
        x = solve_estep(estimate, dataset, spec).traj.x
        reference = rts_smooth(estimate, dataset, spec)
        error = float(np.linalg.norm(x - reference) / np.linalg.norm(reference))
        if error > worst:
            worst, worst_seed = error, instance_seed
    return SuiteResult(name="smoother", passed=worst <= SMOOTHER_RTOL, worst_error=worst,
                       threshold=SMOOTHER_RTOL, seed=worst_seed, instances=instances)


def faulty_gradient(Z, dataset, spec):
    """gradient_J with the sign of the dA block flipped; exercises the harness."""
    grad = gradient_J(Z, dataset, spec)
    return grad.model_copy(update={"dA": -grad.dA})


def run_suites(dims: Dims, M, seed, instances=10, inject_fault=False) -> List[SuiteResult]:
    gradient = faulty_gradient if inject_fault else gradient_J
    runs = [
        lambda: gradient_suite(dims, M, seed, instances=2 * instances, gradient=gradient),
        lambda: estep_suite(dims, M, seed, instances=instances),
        lambda: mstep_suite(dims, M, seed, instances=instances),
        lambda: descent_suite(dims, M, seed, instances=instances),
        lambda: smoother_suite(seed),
    ]
    results = []
    for run in runs:
        started = time.perf_counter()
        result = run()
        result = result.model_copy(update={"seconds": time.perf_counter() - started})
        logger.info("suite %s: passed=%s worst=%.3e", result.name, result.passed, result.worst_error)
        results.append(result)
    return results
