#!/usr/bin/env python3
"""
Tests for the alternating minimization loop and the Z-norm
"""

from pathlib import Path

import numpy as np
import pytest

import alternating_driver
import services
from alternating_driver import StopReason, fit, z_norm
from errors import DescentViolation, DimensionMismatch
from models import Dims, DynamicsEstimate, FitOptions, ModelSpec, make_grid, validate_spec
from objective import Iterate
from simulator import make_control, simulate_sde
from storage import load_run_config
from verification import random_problem


CONFIG_DIR = Path(__file__).parent / "configs"


def shipped_problem(name):
    config = load_run_config(CONFIG_DIR / f"{name}.json")
    spec, _, result = services.simulate_from_config(config)
    return spec, result.dataset, services.fit_options(config)


def exact_fit_problem():
    one = [[1.0]]
    spec = validate_spec(ModelSpec(dims=Dims(N=1, d=1, m=1, p=1), C=one, G=one, Q=one, R=[[0.1]], Pi0=one,
                                   x0=[1.0], A0=[[-1.0]], B0=[[0.5]], alpha=1.0, beta=10.0))
    grid = make_grid(1.0, 50)
    v = make_control("sine", {"amp": 1.0, "freq": 1.0}, grid, 1)
    return spec, simulate_sde(spec.A0, spec.B0, spec, grid, v, seed=0, noise_scale=0.0).dataset


def random_iterate(rng, N, d, m, M):
    return Iterate(A=rng.standard_normal((N, N)), B=rng.standard_normal((N, d)),
                   x=rng.standard_normal((M + 1, N)), w=rng.standard_normal((M, m)))


def test_exact_fit_is_a_fixed_point():
    spec, dataset = exact_fit_problem()
    report = fit(dataset, spec)
    assert report.iterations == 1
    assert report.converged
    assert report.stop_reason == StopReason.step_tol
    assert np.allclose(report.final_estimate.A, spec.A0, rtol=0, atol=1e-10)
    assert np.allclose(report.final_estimate.B, spec.B0, rtol=0, atol=1e-10)
    assert np.max(np.abs(report.final_traj.q)) <= 1e-9
    assert report.final_residuals.estep.worst() <= 1e-9
    assert report.final_residuals.mstep <= 1e-9
    assert report.J_history[-1] <= 1e-18


def test_monotone_descent_and_identity():
    spec, dataset, _ = random_problem(21, Dims(N=2, d=1, m=1, p=1), 50)
    report = fit(dataset, spec, FitOptions(max_iters=200))
    assert len(report.J_history) == report.iterations + 1
    assert len(report.step_norms) == report.iterations == len(report.descent_gap_errors)
    for n in range(report.iterations):
        scale = 1 + abs(report.J_history[n])
        assert report.J_history[n + 1] <= report.J_history[n] + 1e-9 * scale
        assert report.descent_gap_errors[n] <= 1e-9 * scale
        assert report.gaps[n].rhs >= 0


def test_max_iters_contract():
    spec, dataset, _ = random_problem(22, Dims(N=2, d=1, m=1, p=1), 40)
    report = fit(dataset, spec, FitOptions(max_iters=3, tol_step=0.0, tol_stat=0.0))
    assert report.stop_reason == StopReason.max_iters
    assert not report.converged
    assert report.iterations == 3
    assert len(report.sweeps) == 3


def test_steps_shrink_over_a_long_run():
    spec, dataset, _ = random_problem(23, Dims(N=2, d=1, m=1, p=1), 32)
    report = fit(dataset, spec, FitOptions(max_iters=500, tol_step=0.0, tol_stat=0.0))
    steps = report.step_norms
    assert min(steps) <= steps[0]
    assert np.mean(steps[-10:]) <= np.mean(steps[:10])


def test_stationarity_when_converged():
    spec, dataset, _ = random_problem(24, Dims(N=2, d=1, m=1, p=1), 40)
    report = fit(dataset, spec, FitOptions(max_iters=500))
    assert report.converged
    assert report.final_residuals.estep.worst() <= 1e-6
    assert report.final_residuals.mstep <= 1e-6


def test_stat_tol_stop_certifies_residuals():
    spec, dataset, _ = random_problem(25, Dims(N=2, d=1, m=1, p=1), 30)
    report = fit(dataset, spec, FitOptions(max_iters=500, tol_step=0.0, tol_stat=1e-6))
    assert report.stop_reason == StopReason.stat_tol
    assert report.final_residuals.estep.worst() + report.final_residuals.mstep <= 1e-6


def test_warm_start_at_prior_matches_default():
    spec, dataset, _ = random_problem(26, Dims(N=2, d=1, m=1, p=1), 20)
    default = fit(dataset, spec, FitOptions(max_iters=5))
    warm = fit(dataset, spec, FitOptions(max_iters=5), init=DynamicsEstimate(A=spec.A0, B=spec.B0))
    assert default.J_history == warm.J_history


def test_on_sweep_callback_sees_every_sweep():
    spec, dataset, _ = random_problem(27, Dims(N=1, d=1, m=1, p=1), 20)
    seen = []
    report = fit(dataset, spec, FitOptions(max_iters=4, tol_step=0.0, tol_stat=0.0), on_sweep=seen.append)
    assert [record.iteration for record in seen] == [1, 2, 3, 4]
    assert [record.J for record in seen] == report.J_history[1:]


def test_descent_violation_is_raised(monkeypatch):
    spec, dataset, _ = random_problem(28, Dims(N=2, d=1, m=1, p=1), 20)
    real_solve_mstep = alternating_driver.solve_mstep

    def worse_mstep(x, w, dataset, spec):
        estimate = real_solve_mstep(x, w, dataset, spec)
        return DynamicsEstimate(A=estimate.A + 5.0, B=estimate.B)

    monkeypatch.setattr(alternating_driver, "solve_mstep", worse_mstep)
    with pytest.raises(DescentViolation) as info:
        fit(dataset, spec, FitOptions(max_iters=3))
    assert info.value.iteration == 1
    assert info.value.gap.mstep_lhs < 0


def test_shipped_configs_reach_step_tolerance():
    for name in ("scalar", "two_state"):
        spec, dataset, options = shipped_problem(name)
        report = fit(dataset, spec, options.model_copy(update={"tol_stat": 0.0}))
        assert report.stop_reason == StopReason.step_tol, name
        assert report.iterations <= 200, name
        assert report.step_norms[-1] <= 1e-8, name


def test_z_norm_axioms():
    rng = np.random.default_rng(0)
    grid = make_grid(1.0, 10)
    Z1, Z2, Z3 = (random_iterate(rng, 2, 1, 1, 10) for _ in range(3))
    assert z_norm(Z1, Z1, grid) == 0.0
    assert z_norm(Z1, Z2, grid) == z_norm(Z2, Z1, grid)
    assert z_norm(Z1, Z3, grid) <= z_norm(Z1, Z2, grid) + z_norm(Z2, Z3, grid) + 1e-12


def test_z_norm_of_A_offset():
    rng = np.random.default_rng(1)
    grid = make_grid(1.0, 10)
    Z = random_iterate(rng, 2, 1, 1, 10)
    E = np.array([[3.0, 0.0], [0.0, 4.0]])
    shifted = Z.model_copy(update={"A": Z.A + E})
    assert np.isclose(z_norm(shifted, Z, grid), 5.0, rtol=1e-14)


def test_z_norm_shape_mismatch():
    rng = np.random.default_rng(2)
    grid = make_grid(1.0, 10)
    with pytest.raises(DimensionMismatch):
        z_norm(random_iterate(rng, 2, 1, 1, 10), random_iterate(rng, 3, 1, 1, 10), grid)


if __name__ == "__main__":
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test) and name != "test_descent_violation_is_raised":
            try:
                test()
                print(f"✓ {name}")
            except Exception as e:
                print(f"✗ {name}: {e}")
