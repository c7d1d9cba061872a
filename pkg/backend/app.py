from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
import uvicorn
import json
import logging
import math
import sys
import os

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from backend.config import config
from backend.config.settings import settings
from backend.models.schemas import (
    DivergenceRequest, DivergenceResponse,
    ExperimentConfig, ExperimentResponse,
    StatusResponse,
)
from backend.services.errors import ConfigError, SteinLabError
from backend.services.experiment_service import experiment_service
from backend.services.file_handler import dumps, load_density
from backend.services.operator_algebra import relative_entropy, relative_entropy_variance

logger = logging.getLogger(__name__)

app = FastAPI(title="steinlab API", version=config.VERSION)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _http_error(exc: Exception) -> HTTPException:
    """ConfigError -> 422, other service errors -> 400, anything else -> 500."""
    if isinstance(exc, ConfigError):
        return HTTPException(status_code=422, detail=str(exc))
    if isinstance(exc, SteinLabError):
        return HTTPException(status_code=400, detail=str(exc))
    logger.exception("unexpected failure")
    return HTTPException(status_code=500, detail=str(exc))


def _finite(value: float):
    return value if math.isfinite(value) else None


# ============================================================================
# STATUS
# ============================================================================

@app.get("/")
async def root():
    """Root endpoint - what the lab computes."""
    return {
        "message": "steinlab is running",
        "version": config.VERSION,
        "experiments": ["exponent", "design", "schur", "ispec", "ineq", "gaussian", "selftest"],
    }


@app.get("/health")
async def health_check():
    return {"status": "healthy"}


@app.get("/status", response_model=StatusResponse)
async def system_status():
    return StatusResponse(
        version=config.VERSION,
        settings=settings.summary(),
        backend_url=f"http://{settings.backend_host}:{settings.backend_port}",
    )


# ============================================================================
# EXPERIMENTS AND QUANTITIES
# ============================================================================

@app.post("/experiments/run", response_model=ExperimentResponse)
def run_experiment(request: ExperimentConfig):
    """
    Run one experiment and return its result document.

    Artifacts are written exactly as the CLI writes them; the response lists
    their paths. Runs synchronously in FastAPI's worker thread pool.
    """
    try:
        result = experiment_service.run(request)
    except Exception as e:
        raise _http_error(e)
    # non-finite floats become strings
    return ExperimentResponse(
        experiment=result.experiment,
        seed=result.seed,
        passed=result.passed,
        result=json.loads(dumps(result.result)),
        artifacts=result.artifacts,
    )


@app.post("/quantities/divergence", response_model=DivergenceResponse)
async def divergence(request: DivergenceRequest):
    """D(ρ‖σ) and V(ρ‖σ); both null when ρ is not supported inside σ."""
    try:
        rho = load_density(request.rho)
        sigma = load_density(request.sigma)
        d = relative_entropy(rho, sigma, restrict_support=True)
        v = relative_entropy_variance(rho, sigma, restrict_support=True)
    except Exception as e:
        raise _http_error(e)
    return DivergenceResponse(
        relative_entropy=_finite(d),
        relative_entropy_variance=_finite(v),
        finite=math.isfinite(d),
    )


# ============================================================================
# APP STARTUP
# ============================================================================

if __name__ == "__main__":
    uvicorn.run(
        "backend.app:app",
        host=settings.backend_host,
        port=settings.backend_port,
        reload=True
    )
