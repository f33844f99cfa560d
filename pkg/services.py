"""Command layer shared by the CLI and the HTTP front end."""
import logging

import numpy as np

from alternating_driver import fit
from errors import SizeCapExceeded, SpecError
from models import Dims, FitOptions, RunConfig, validate_spec
from simulator import make_control, simulate_sde
from storage import config_model
from verification import SIZE_CAP, run_suites

logger = logging.getLogger(__name__)


def prepare_model(config: RunConfig):
    """Validated (ModelSpec, TimeGrid) for a loaded config."""
    spec, grid = config_model(config)
    return validate_spec(spec), grid


def control_for(config: RunConfig, grid, d):
    control = config.control
    params = {"amp": control.amp, "freq": control.freq, "onset": control.onset,
              "components": control.components}
    return make_control(control.kind, params, grid, d)


def simulate_from_config(config: RunConfig, seed=None):
    """Simulate the config's ``sim`` block; ``seed`` overrides ``sim.seed``."""
    if config.sim is None:
        raise SpecError("sim: block required for simulate")
    spec, grid = prepare_model(config)
    seed = config.sim.seed if seed is None else seed
    v = control_for(config, grid, spec.dims.d)
    logger.info("simulate: N=%d M=%d seed=%d noise_scale=%g", spec.dims.N, grid.M, seed, config.sim.noise_scale)
    result = simulate_sde(np.array(config.sim.A_true), np.array(config.sim.B_true), spec, grid, v,
                          seed=seed, noise_scale=config.sim.noise_scale)
    return spec, grid, result


def fit_options(config: RunConfig, max_iters=None, tol_step=None, tol_stat=None) -> FitOptions:
    update = {k: v for k, v in (("max_iters", max_iters), ("tol_step", tol_step), ("tol_stat", tol_stat))
              if v is not None}
    return FitOptions.model_validate({**config.fit.model_dump(), **update})


def fit_dataset(dataset, spec, options: FitOptions, on_sweep=None):
    return fit(dataset, spec, options, on_sweep=on_sweep)


def check_size_cap(dims: Dims, M):
    sizes = {"N": dims.N, "d": dims.d, "m": dims.m, "p": dims.p, "M": M}
    for field, value in sizes.items():
        if value > SIZE_CAP[field]:
            raise SizeCapExceeded(field, value, SIZE_CAP[field])


def verify_sizes(config: RunConfig):
    """Instance sizes for the verify suites, checked against the size cap."""
    spec, grid = config_model(config)
    check_size_cap(spec.dims, grid.M)
    return spec.dims, grid.M


def verify(dims: Dims, M, seed, instances=10, inject_fault=False):
    return run_suites(dims, M, seed, instances=instances, inject_fault=inject_fault)
