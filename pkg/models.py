from typing import Annotated, List, Optional, Union

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PositiveInt
from scipy import linalg

import settings
from errors import (
    DimensionMismatch, InvalidGrid, NonFiniteValue, NonPositiveWeight, NotSPD, NotSymmetric,
)

SPD_RTOL = 1e-12
SYMMETRY_RTOL = 1e-10


def frozen_array(value):
    """Copy ``value`` into a read-only float64 array."""
    array = np.array(value, dtype=float)
    array.flags.writeable = False
    return array


Array = Annotated[np.ndarray, BeforeValidator(frozen_array)]


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# Domain types

class Dims(BaseModel):
    model_config = ConfigDict(frozen=True)

    N: PositiveInt
    d: PositiveInt
    m: PositiveInt
    p: PositiveInt


class ModelSpec(ArrayModel):
    """Every known quantity of the model: observation and noise maps, covariances,
    the initial prior and the (A, B) prior with its weights."""

    dims: Dims
    C: Array
    G: Array
    Q: Array
    R: Array
    Pi0: Array
    x0: Array
    A0: Array
    B0: Array
    alpha: float
    beta: float

    def expected_shapes(self):
        N, d, m, p = self.dims.N, self.dims.d, self.dims.m, self.dims.p
        return {
            "C": (p, N), "G": (N, m), "Q": (m, m), "R": (p, p), "Pi0": (N, N),
            "x0": (N,), "A0": (N, N), "B0": (N, d),
        }


class TimeGrid(ArrayModel):
    T: float
    M: int
    nodes: Array

    @property
    def h(self):
        return self.T / self.M


class DynamicsEstimate(ArrayModel):
    A: Array
    B: Array


class TrajectoryEstimate(ArrayModel):
    """x at the M+1 nodes, w and q constant on each of the M intervals."""

    x: Array
    w: Array
    q: Array


class Dataset(ArrayModel):
    """Control and observation-rate signal, one row per interval."""

    grid: TimeGrid
    v: Array
    y: Array


# Validation

def _check_spd(name, matrix):
    scale = float(np.max(np.abs(matrix))) if matrix.size else 0.0
    asymmetry = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
    if asymmetry > SYMMETRY_RTOL * scale:
        raise NotSymmetric(name, asymmetry)
    symmetric = (matrix + matrix.T) / 2
    eigenvalues = linalg.eigvalsh(symmetric)
    if eigenvalues[0] <= SPD_RTOL * np.max(np.abs(eigenvalues)):
        raise NotSPD(name, eigenvalues[0])
    return frozen_array(symmetric)


def validate_spec(spec: ModelSpec) -> ModelSpec:
    """Check shapes, SPD covariances and positive weights.

    Symmetric covariances come back unchanged; near-symmetric ones (asymmetry within
    1e-10 relative) are replaced by their symmetric part, so validating twice is a no-op.
    """
    for field, shape in spec.expected_shapes().items():
        value = getattr(spec, field)
        if value.shape != shape:
            raise DimensionMismatch(field, shape, value.shape)
        if not np.all(np.isfinite(value)):
            raise NonFiniteValue(field)
    for name in ("alpha", "beta"):
        value = getattr(spec, name)
        if not np.isfinite(value) or value <= 0:
            raise NonPositiveWeight(name, value)
    update = {name: _check_spd(name, getattr(spec, name)) for name in ("Q", "R", "Pi0")}
    return spec.model_copy(update=update)


def make_grid(T: float, M: int) -> TimeGrid:
    if not np.isfinite(T) or T <= 0:
        raise InvalidGrid(f"horizon T must be > 0, got {T}")
    if int(M) != M or M < 1:
        raise InvalidGrid(f"interval count M must be a positive integer, got {M}")
    M = int(M)
    return TimeGrid(T=float(T), M=M, nodes=np.linspace(0.0, T, M + 1))


def check_dynamics(estimate: DynamicsEstimate, spec: ModelSpec):
    N, d = spec.dims.N, spec.dims.d
    for field, shape in (("A", (N, N)), ("B", (N, d))):
        value = getattr(estimate, field)
        if value.shape != shape:
            raise DimensionMismatch(field, shape, value.shape)
        if not np.all(np.isfinite(value)):
            raise NonFiniteValue(field)


def check_dataset(dataset: Dataset, spec: ModelSpec):
    M = dataset.grid.M
    for field, shape in (("v", (M, spec.dims.d)), ("y", (M, spec.dims.p))):
        value = getattr(dataset, field)
        if value.shape != shape:
            raise DimensionMismatch(field, shape, value.shape)


def check_trajectory(x, w, spec: ModelSpec, grid: TimeGrid):
    M = grid.M
    if x.shape != (M + 1, spec.dims.N):
        raise DimensionMismatch("x", (M + 1, spec.dims.N), x.shape)
    if w.shape != (M, spec.dims.m):
        raise DimensionMismatch("w", (M, spec.dims.m), w.shape)


def spd_inverse(matrix):
    factor = linalg.cho_factor(matrix)
    return linalg.cho_solve(factor, np.eye(matrix.shape[0]))


# Wire documents (JSON, row-major nested lists)

Matrix = List[List[float]]


class ModelSpecDocument(BaseModel):
    N: int
    d: int
    m: int
    p: int
    C: Matrix
    G: Matrix
    Q: Matrix
    R: Matrix
    Pi0: Matrix
    x0: List[float]
    A0: Matrix
    B0: Matrix
    alpha: float = Field(default_factory=lambda: settings.DEFAULT_ALPHA)
    beta: float = Field(default_factory=lambda: settings.DEFAULT_BETA)
    T: float
    M: int

    def to_model(self):
        """Build (ModelSpec, TimeGrid). Validation is left to ``validate_spec``."""
        spec = ModelSpec(
            dims=Dims(N=self.N, d=self.d, m=self.m, p=self.p),
            C=self.C, G=self.G, Q=self.Q, R=self.R, Pi0=self.Pi0, x0=self.x0,
            A0=self.A0, B0=self.B0, alpha=self.alpha, beta=self.beta,
        )
        return spec, make_grid(self.T, self.M)

    @classmethod
    def from_model(cls, spec: ModelSpec, grid: TimeGrid):
        return cls(
            N=spec.dims.N, d=spec.dims.d, m=spec.dims.m, p=spec.dims.p,
            C=spec.C.tolist(), G=spec.G.tolist(), Q=spec.Q.tolist(), R=spec.R.tolist(),
            Pi0=spec.Pi0.tolist(), x0=spec.x0.tolist(), A0=spec.A0.tolist(), B0=spec.B0.tolist(),
            alpha=spec.alpha, beta=spec.beta, T=grid.T, M=grid.M,
        )


class GridConfig(BaseModel):
    T: float
    M: int


class ControlConfig(BaseModel):
    kind: str = "zero"
    amp: float = 1.0
    freq: float = 1.0
    onset: float = 0.0
    components: List[List[float]] = []


class SimConfig(BaseModel):
    A_true: Matrix
    B_true: Matrix
    seed: int = 0
    noise_scale: float = Field(default=1.0, ge=0.0)


class FitOptions(BaseModel):
    max_iters: PositiveInt = Field(default_factory=lambda: settings.MAX_ITERS)
    tol_step: float = Field(default_factory=lambda: settings.TOL_STEP, ge=0.0)
    tol_stat: float = Field(default_factory=lambda: settings.TOL_STAT, ge=0.0)
    check_descent: bool = True


class PathsConfig(BaseModel):
    data: Optional[str] = None
    out: Optional[str] = None


class VerifyConfig(BaseModel):
    instances: PositiveInt = 10
    inject_fault: bool = False


class RunConfig(BaseModel):
    spec: Union[ModelSpecDocument, str]
    grid: Optional[GridConfig] = None
    control: ControlConfig = ControlConfig()
    sim: Optional[SimConfig] = None
    fit: FitOptions = Field(default_factory=FitOptions)
    paths: PathsConfig = PathsConfig()
    verify: VerifyConfig = VerifyConfig()
