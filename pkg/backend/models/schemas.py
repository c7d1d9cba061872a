from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Experiment = Literal["exponent", "design", "schur", "ispec", "ineq", "gaussian", "selftest"]
StrategyName = Literal["quantum_np", "designed_measurement", "naive_product_basis"]
CheckName = Literal["pinching-log", "plog2", "pinching-dominance", "negative-power"]

# Smallest n_max whose default grid has two points.
GRID_MIN_N_MAX = {"exponent": 3, "gaussian": 20}
GRID_TEXT = {"exponent": "n = 2..n_max", "gaussian": "n = 10, 20, .. n_max"}


# ============================================================================
# MATRIX EXCHANGE FORMAT
# ============================================================================

class MatrixPayload(BaseModel):
    """Square complex matrix as {"dim", "re", "im"}, rows of real and imaginary parts."""

    dim: int = Field(gt=0)
    re: List[List[float]]
    im: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def check_shape(self) -> "MatrixPayload":
        for name in ("re", "im"):
            rows = getattr(self, name)
            if rows is None:
                continue
            if len(rows) != self.dim or any(len(row) != self.dim for row in rows):
                raise ValueError(f"{name} must be a {self.dim}x{self.dim} array")
        return self

    def to_array(self) -> np.ndarray:
        matrix = np.array(self.re, dtype=complex)
        if self.im is not None:
            matrix = matrix + 1j * np.array(self.im, dtype=float)
        return matrix

    @classmethod
    def from_array(cls, matrix: np.ndarray) -> "MatrixPayload":
        matrix = np.asarray(matrix, dtype=complex)
        return cls(dim=matrix.shape[0], re=matrix.real.tolist(), im=matrix.imag.tolist())


class PairPayload(BaseModel):
    n: int = Field(default=1, gt=0)
    p: List[float]
    q: List[float]


# ============================================================================
# EXPERIMENT CONFIG
# ============================================================================

class ExperimentConfig(BaseModel):
    """
    One run of the lab: which experiment, its inputs and where artifacts go.

    States are inline matrices or paths to JSON files in the exchange format.
    Fields a given experiment does not use are ignored.
    """

    model_config = ConfigDict(extra="forbid")

    experiment: Experiment
    seed: int = 0
    rho: Optional[Union[str, MatrixPayload]] = None
    sigma: Optional[Union[str, MatrixPayload]] = None
    pairs: Optional[Union[str, List[PairPayload]]] = None

    epsilon: float = 0.05
    n_range: Optional[List[int]] = None
    n_max: Optional[int] = Field(default=None, gt=0)
    n: Optional[int] = Field(default=None, gt=0)
    k: Optional[int] = Field(default=None, ge=2)
    strategy: StrategyName = "quantum_np"
    chernoff_a: List[float] = Field(default_factory=list)

    check: CheckName = "pinching-log"
    trials: Optional[int] = Field(default=None, gt=0)

    theta0: Tuple[float, float] = (1.0, 0.0)
    theta1: Tuple[float, float] = (0.0, 0.0)
    nbar: float = Field(default=1.0, gt=0)
    eps_region: float = Field(default=0.3, gt=0)
    cutoff: Optional[int] = Field(default=None, gt=0)

    quick: bool = False
    dim_cap: Optional[int] = Field(default=None, gt=0)
    out: Optional[str] = None
    csv: Optional[str] = None
    out_dir: Optional[str] = None
    json_lines: bool = False

    @field_validator("epsilon")
    @classmethod
    def check_epsilon(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("epsilon must lie strictly between 0 and 1")
        return value

    @field_validator("n_range")
    @classmethod
    def check_n_range(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is None:
            return value
        if not value:
            raise ValueError("n_range must be nonempty")
        if any(n < 1 for n in value) or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("n_range must be positive and strictly ascending")
        return value

    @model_validator(mode="after")
    def check_inputs(self) -> "ExperimentConfig":
        needs_states = self.experiment in ("exponent", "design")
        if needs_states and (self.rho is None or self.sigma is None):
            raise ValueError(f"experiment {self.experiment!r} needs both rho and sigma")
        if self.experiment == "ispec" and self.pairs is None:
            raise ValueError("experiment 'ispec' needs pairs")
        if self.experiment == "design" and self.n is None:
            raise ValueError("experiment 'design' needs n")
        if self.experiment == "schur" and (self.n is None or self.k is None):
            raise ValueError("experiment 'schur' needs n and k")
        if self.experiment in ("exponent", "gaussian") and self.n_range is None and self.n_max is None:
            raise ValueError(f"experiment {self.experiment!r} needs n_range or n_max")
        if self.experiment in ("exponent", "gaussian"):
            if self.n_range is not None and len(self.n_range) < 2:
                raise ValueError(f"experiment {self.experiment!r} needs at least two n values to fit a slope")
            if self.n_range is None and self.n_max < GRID_MIN_N_MAX[self.experiment]:
                raise ValueError(
                    f"experiment {self.experiment!r} sweeps {GRID_TEXT[self.experiment]} and needs "
                    f"n_max >= {GRID_MIN_N_MAX[self.experiment]} for two points, got {self.n_max}; "
                    "pass n_range for other values"
                )
        return self

    def resolved_n_range(self) -> List[int]:
        """Explicit n_range, else 2..n_max for exponent and 10, 20, .. n_max for gaussian."""
        if self.n_range is not None:
            return list(self.n_range)
        if self.experiment == "gaussian":
            return list(range(10, self.n_max + 1, 10))
        return list(range(2, self.n_max + 1))

    def hashed_fields(self) -> Dict:
        """Everything that determines the artifacts; output locations excluded."""
        return self.model_dump(mode="json", exclude={"out", "csv", "out_dir", "json_lines"})


# ============================================================================
# HTTP REQUEST / RESPONSE MODELS
# ============================================================================

class DivergenceRequest(BaseModel):
    rho: MatrixPayload
    sigma: MatrixPayload


class DivergenceResponse(BaseModel):
    relative_entropy: Optional[float]
    relative_entropy_variance: Optional[float]
    finite: bool


class ExperimentResponse(BaseModel):
    experiment: str
    seed: int
    passed: bool
    result: dict
    artifacts: List[str]


class StatusResponse(BaseModel):
    version: str
    settings: dict
    backend_url: str
