import io
import logging

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field, PositiveInt, ValidationError

import services
import settings
from errors import DatasetFormatError, DescentViolation, InvalidGrid, SizeCapExceeded, SpecError, UnknownKind
from models import Dims, RunConfig
from storage import fit_report_document, read_dataset_csv

settings.configure_logging()
logger = logging.getLogger("uvicorn.error")

app = FastAPI(
    title="System Identification API",
    description="""
    # System Identification API

    Joint state estimation and identification of a linear continuous-time system
    dx/dt = A x + B v + G w observed through y = C x + noise.

    ## Quick Start
    1. **Health Check**: `GET /health` - Verify API status
    2. **Simulate**: `POST /simulate` - Draw a dataset from a run config with a `sim` block
    3. **Fit**: `POST /fit` - Upload a run config and a dataset CSV, get the fitted (A, B, x, w)
    4. **Verify**: `POST /verify` - Run the oracle suites on random instances
    """,
    version="1.0.0",
    license_info={
        "name": "MIT",
        "url": "https://opensource.org/licenses/MIT",
    },
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

CONFIG_ERRORS = (ValidationError, SpecError, InvalidGrid, UnknownKind, SizeCapExceeded)


class VerifyRequest(BaseModel):
    N: PositiveInt = 2
    d: PositiveInt = 1
    m: PositiveInt = 1
    p: PositiveInt = 1
    M: PositiveInt = 32
    seed: int = Field(default_factory=lambda: settings.VERIFY_SEED)
    instances: PositiveInt = 10
    inject_fault: bool = False


def _inline_config(config: RunConfig):
    if isinstance(config.spec, str):
        raise HTTPException(status_code=422, detail="spec must be given inline, not as a file path")
    return config


# ============================================================================
# BASIC ENDPOINTS
# ============================================================================

@app.get("/", tags=["Basic"])
def read_root():
    """Returns basic API information and status."""
    return {"message": "System Identification API is running!"}


@app.get("/health", tags=["Basic"])
def health_check():
    return {"status": "healthy"}


# ============================================================================
# SIMULATION / FIT / VERIFY
# ============================================================================

@app.post("/simulate", response_model=dict, tags=["Simulation"])
def simulate(config: RunConfig, seed: int = None):
    """
    # Simulate

    Draws one Euler-Maruyama path of the config's `sim` block.

    **Response:**
    - `seed`: seed actually used
    - `t`: left endpoints of the intervals
    - `v`, `y`: control and observation-rate rows, one per interval
    - `x_true`: true state at every node
    """
    config = _inline_config(config)
    try:
        _, grid, result = services.simulate_from_config(config, seed=seed)
        return {
            "seed": result.seed,
            "t": grid.nodes[:-1].tolist(),
            "v": result.dataset.v.tolist(),
            "y": result.dataset.y.tolist(),
            "x_true": result.x_true.tolist(),
        }
    except CONFIG_ERRORS as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.exception("simulate failed")
        raise HTTPException(status_code=500, detail=f"Error simulating: {str(e)}")


@app.post("/fit", response_model=dict, tags=["Fit"])
async def fit(config: str = Form(...), data: UploadFile = File(...)):
    """
    # Fit

    Runs the alternating minimization on an uploaded dataset CSV.

    **Form fields:**
    - `config`: run config as JSON text (inline `spec`)
    - `data`: dataset CSV with columns `t, v_1..v_d, y_1..y_p`

    **Errors:** 422 bad config, 400 malformed CSV, 409 descent violation.
    """
    try:
        run_config = _inline_config(RunConfig.model_validate_json(config))
        spec, grid = services.prepare_model(run_config)
        options = services.fit_options(run_config)
    except HTTPException:
        raise
    except CONFIG_ERRORS as e:
        raise HTTPException(status_code=422, detail=str(e))

    contents = await data.read()
    try:
        dataset = read_dataset_csv(io.BytesIO(contents), spec, grid, name=data.filename or "upload")
    except DatasetFormatError as e:
        raise HTTPException(status_code=400, detail=str(e))

    try:
        report = services.fit_dataset(dataset, spec, options)
        return fit_report_document(report)
    except DescentViolation as e:
        raise HTTPException(status_code=409, detail=str(e))
    except Exception as e:
        logger.exception("fit failed")
        raise HTTPException(status_code=500, detail=f"Error fitting: {str(e)}")


@app.post("/verify", response_model=dict, tags=["Verify"])
def verify(request: VerifyRequest):
    """Runs every oracle suite; `passed` is true only when all of them pass."""
    dims = Dims(N=request.N, d=request.d, m=request.m, p=request.p)
    try:
        services.check_size_cap(dims, request.M)
    except SizeCapExceeded as e:
        raise HTTPException(status_code=422, detail=str(e))
    try:
        results = services.verify(dims, request.M, request.seed, instances=request.instances,
                                  inject_fault=request.inject_fault)
        return {
            "seed": request.seed,
            "passed": all(r.passed for r in results),
            "suites": [r.model_dump() for r in results],
        }
    except Exception as e:
        logger.exception("verify failed")
        raise HTTPException(status_code=500, detail=f"Error verifying: {str(e)}")


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=settings.PORT)
