"""
Displaced thermal states in a truncated Fock space and the number-detection test.

Only the single mode with amplitude √n(θ₀ − θ₁) is simulated: n copies of a
displaced thermal state are unitarily equivalent to that mode tensored with
n − 1 undisplaced copies, and the measurement touches one mode.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.linalg import expm
from scipy.special import gammaln

from backend.config import config
from backend.services.errors import CutoffError, PreconditionError
from backend.services.operator_algebra import DensityOperator, HermitianOperator, von_neumann_entropy
from backend.services.parallel import parallel_map

logger = logging.getLogger(__name__)

MODULE = "gaussian"

METHODS = ("displacement", "quadrature")


@dataclass(frozen=True)
class GaussianParams:
    theta: complex
    nbar: float
    cutoff: Optional[int] = None

    def __post_init__(self):
        if not self.nbar > 0:
            raise PreconditionError(MODULE, "GaussianParams", f"nbar must be positive, got {self.nbar}")
        if self.cutoff is not None and self.cutoff < 1:
            raise PreconditionError(MODULE, "GaussianParams", f"cutoff must be positive, got {self.cutoff}")

    @property
    def resolved_cutoff(self) -> int:
        return self.cutoff if self.cutoff is not None else suggested_cutoff(self.nbar, abs(self.theta) ** 2)


class NumberDistribution(NamedTuple):
    probs: np.ndarray
    deficit: float

    @property
    def cutoff(self) -> int:
        return len(self.probs)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.cutoff), self.probs))

    def mass(self, mask: np.ndarray) -> float:
        return float(self.probs[mask].sum())


def suggested_cutoff(nbar: float, amplitude_sq: float) -> int:
    return max(config.MIN_CUTOFF, math.ceil(config.CUTOFF_SAFETY * (nbar + amplitude_sq)))


# ============================================================================
# FOCK-SPACE BUILDING BLOCKS
# ============================================================================

def coherent_vector(alpha: complex, cutoff: int) -> np.ndarray:
    """e^{-|α|²/2} Σ_k α^k/√k! |k⟩ for k < cutoff."""
    k = np.arange(cutoff)
    out = np.zeros(cutoff, dtype=complex)
    if alpha == 0:
        out[0] = 1.0
        return out
    log_mag = -abs(alpha) ** 2 / 2 + k * math.log(abs(alpha)) - gammaln(k + 1) / 2
    return np.exp(log_mag) * np.exp(1j * k * np.angle(alpha))


def thermal_probabilities(nbar: float, cutoff: int) -> np.ndarray:
    """N̄^k / (1+N̄)^{k+1}."""
    k = np.arange(cutoff)
    return np.exp(k * math.log(nbar) - (k + 1) * math.log1p(nbar))


def annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff)), k=1).astype(complex)


def displacement(alpha: complex, cutoff: int) -> np.ndarray:
    """exp(α a† − ᾱ a) on the truncated space; exact only well below the cutoff."""
    a = annihilation(cutoff)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def _padded_dim(cutoff: int) -> int:
    return max(2 * cutoff, cutoff + config.DISPLACEMENT_PADDING)


def _displacement_build(theta: complex, nbar: float, cutoff: int) -> np.ndarray:
    if theta == 0:
        return np.diag(thermal_probabilities(nbar, cutoff)).astype(complex)
    padded = _padded_dim(cutoff)
    d = displacement(theta, padded)
    full = (d * thermal_probabilities(nbar, padded)) @ d.conj().T
    return full[:cutoff, :cutoff]


def _quadrature_build(theta: complex, nbar: float, cutoff: int) -> np.ndarray:
    """
    P-function integral by a tensor Gauss–Hermite rule.

    LOGIC:
    1. e^{-|α|²} from the coherent projectors times e^{-|α−θ|²/N̄} is a Gaussian
       centred at μ = θ/(1+N̄) with precision c = (1+N̄)/N̄
    2. Substitute α = μ + z/√c so the weight becomes e^{-|z|²}
    3. ρ_mn = e^{-|θ|²/(1+N̄)}/(π(1+N̄)) Σ w_i w_j α^m ᾱ^n/√(m! n!)
    """
    if cutoff > config.QUADRATURE_NODES:
        raise PreconditionError(
            MODULE, "gaussian_state",
            f"quadrature is exact below {config.QUADRATURE_NODES} photons, got cutoff {cutoff}",
            "quadrature order",
        )
    nodes, weights = hermgauss(config.QUADRATURE_NODES)
    c = (1.0 + nbar) / nbar
    mu = theta / (1.0 + nbar)
    alphas = (mu + (nodes[:, None] + 1j * nodes[None, :]) / math.sqrt(c)).ravel()
    w = np.outer(weights, weights).ravel()

    vectors = np.empty((cutoff, alphas.size), dtype=complex)
    vectors[0] = 1.0
    for m in range(1, cutoff):
        vectors[m] = vectors[m - 1] * alphas / math.sqrt(m)

    prefactor = math.exp(-abs(theta) ** 2 / (1.0 + nbar)) / (math.pi * (1.0 + nbar))
    return prefactor * (vectors * w) @ vectors.conj().T


def build_gaussian_state(gp: GaussianParams, method: str = "displacement") -> Tuple[np.ndarray, float]:
    """
    Truncated ρ_θ and its tail deficit 1 − Tr.

    Args:
        gp: displacement, thermal photon number and cutoff
        method: "displacement" (D ρ_thermal D† in a padded space) or "quadrature"

    Returns:
        (cutoff x cutoff matrix, tail deficit)
    """
    if method not in METHODS:
        raise PreconditionError(MODULE, "gaussian_state", f"unknown method {method!r}, expected one of {METHODS}")
    cutoff = gp.resolved_cutoff
    if method == "displacement":
        matrix = _displacement_build(complex(gp.theta), gp.nbar, cutoff)
    else:
        matrix = _quadrature_build(complex(gp.theta), gp.nbar, cutoff)
    matrix = (matrix + matrix.conj().T) / 2
    if method == "displacement" and complex(gp.theta) == 0:
        # geometric tail, exact below the round-off of 1 - Tr
        deficit = (gp.nbar / (1.0 + gp.nbar)) ** cutoff
    else:
        deficit = 1.0 - float(np.real(np.trace(matrix)))
    return matrix, deficit


def _require_deficit(operation: str, deficit: float, cutoff: int, nbar: float, amplitude_sq: float) -> None:
    if deficit > config.TAIL_DEFICIT_TOL:
        suggested = max(suggested_cutoff(nbar, amplitude_sq), 2 * cutoff)
        raise CutoffError(MODULE, operation, deficit, cutoff, suggested)


def gaussian_state(gp: GaussianParams, method: str = "displacement") -> DensityOperator:
    matrix, deficit = build_gaussian_state(gp, method)
    cutoff = matrix.shape[0]
    _require_deficit("gaussian_state", deficit, cutoff, gp.nbar, abs(gp.theta) ** 2)
    logger.debug("gaussian_state theta=%s nbar=%g cutoff=%d deficit=%.2e", gp.theta, gp.nbar, cutoff, deficit)
    return DensityOperator.from_matrix(matrix / (1.0 - deficit))


# ============================================================================
# NUMBER DETECTION
# ============================================================================

def reduced_number_distribution(theta0: complex, theta1: complex, nbar: float, n: int,
                                cutoff: Optional[int] = None) -> NumberDistribution:
    """Photon-count law of the single mode displaced by √n(θ₀ − θ₁)."""
    if n < 1:
        raise PreconditionError(MODULE, "reduced_number_distribution", f"n must be positive, got {n}")
    amplitude = math.sqrt(n) * (complex(theta0) - complex(theta1))
    gp = GaussianParams(amplitude, nbar, cutoff)
    matrix, deficit = build_gaussian_state(gp)
    _require_deficit("reduced_number_distribution", deficit, matrix.shape[0], nbar, abs(amplitude) ** 2)
    probs = np.clip(np.real(np.diag(matrix)), 0.0, None)
    return NumberDistribution(probs, max(deficit, 0.0))


def _policy_cutoff(theta0: complex, theta1: complex, nbar: float, n: int, cutoff: Optional[int]) -> int:
    return cutoff if cutoff is not None else suggested_cutoff(nbar, n * abs(complex(theta0) - complex(theta1)) ** 2)


def gaussian_test_errors(theta0: complex, theta1: complex, nbar: float, n: int, eps_region: float,
                         cutoff: Optional[int] = None) -> Tuple[float, float]:
    """
    Errors of the test accepting the null when |√(k/n) − |θ₀ − θ₁|| <= eps_region.

    α is the null mass outside the region, tail beyond the cutoff included.
    β is the alternative (amplitude 0) mass of {√(k/n) >= |θ₀ − θ₁| − eps_region};
    the tail beyond the cutoff lies in that set and is added.
    """
    if not eps_region > 0:
        raise PreconditionError(MODULE, "gaussian_test_errors", f"eps_region must be positive, got {eps_region}")
    cutoff = _policy_cutoff(theta0, theta1, nbar, n, cutoff)
    delta = abs(complex(theta0) - complex(theta1))
    statistic = np.sqrt(np.arange(cutoff) / n)

    null = reduced_number_distribution(theta0, theta1, nbar, n, cutoff)
    alpha = 1.0 - null.mass(np.abs(statistic - delta) <= eps_region)

    alt = reduced_number_distribution(theta1, theta1, nbar, n, cutoff)
    beta = alt.mass(statistic >= delta - eps_region) + alt.deficit
    return max(alpha, 0.0), min(beta, 1.0)


def threshold_beta(theta0: complex, theta1: complex, nbar: float, n: int,
                   cutoff: Optional[int] = None) -> float:
    """P_{θ₁}{√(k/n) >= |θ₀ − θ₁|}; its exponent is the relative entropy."""
    cutoff = _policy_cutoff(theta0, theta1, nbar, n, cutoff)
    delta = abs(complex(theta0) - complex(theta1))
    alt = reduced_number_distribution(theta1, theta1, nbar, n, cutoff)
    # k >= n Δ² up to rounding of the square root
    mask = np.arange(cutoff) >= math.ceil(n * delta ** 2 - 1e-9)
    return min(alt.mass(mask) + alt.deficit, 1.0)


# ============================================================================
# RELATIVE ENTROPY
# ============================================================================

def gaussian_relative_entropy(theta0: complex, theta1: complex, nbar: float) -> float:
    """|θ₀ − θ₁|² ln(1 + 1/N̄)."""
    if not nbar > 0:
        raise PreconditionError(MODULE, "gaussian_relative_entropy", f"nbar must be positive, got {nbar}")
    return abs(complex(theta0) - complex(theta1)) ** 2 * math.log1p(1.0 / nbar)


def truncated_relative_entropy(theta0: complex, theta1: complex, nbar: float, cutoff: int = 120) -> float:
    """
    D(ρ_{θ₀}‖ρ_{θ₁}) from truncated matrices.

    log ρ_{θ₁} = D(θ₁) log ρ_thermal D(θ₁)† with the thermal log taken in
    closed form, so the vanishing tail of ρ_{θ₁} never reaches a logarithm.
    """
    rho = gaussian_state(GaussianParams(theta0, nbar, cutoff))
    padded = _padded_dim(cutoff)
    k = np.arange(padded)
    log_thermal = k * math.log(nbar) - (k + 1) * math.log1p(nbar)
    if complex(theta1) == 0:
        log_sigma = np.diag(log_thermal[:cutoff]).astype(complex)
    else:
        d = displacement(complex(theta1), padded)
        log_sigma = ((d * log_thermal) @ d.conj().T)[:cutoff, :cutoff]
    cross = rho.op.expectation(HermitianOperator(log_sigma))
    return -von_neumann_entropy(rho) - cross


# ============================================================================
# EXPONENT CURVE
# ============================================================================

class GaussianPoint(NamedTuple):
    n: int
    alpha: float
    beta: float
    beta_threshold: float
    cutoff: int


@dataclass
class GaussianCurve:
    theta0: complex
    theta1: complex
    nbar: float
    eps_region: float
    points: List[GaussianPoint]
    closed_form_d: float

    @property
    def n_values(self) -> np.ndarray:
        return np.array([p.n for p in self.points], dtype=float)

    def _slope(self, betas: Sequence[float]) -> float:
        y = -np.log(np.asarray(betas, dtype=float))
        return float(np.polyfit(self.n_values, y, 1)[0])

    @property
    def threshold_slope(self) -> float:
        return self._slope([p.beta_threshold for p in self.points])

    @property
    def region_slope(self) -> float:
        return self._slope([p.beta for p in self.points])

    @property
    def region_exponent(self) -> float:
        delta = abs(complex(self.theta0) - complex(self.theta1))
        return max(delta - self.eps_region, 0.0) ** 2 * math.log1p(1.0 / self.nbar)

    def rows(self) -> List[Dict[str, float]]:
        return [
            {
                "n": p.n,
                "alpha": p.alpha,
                "beta": p.beta,
                "minus_log_beta_over_n": -math.log(p.beta) / p.n if p.beta > 0 else math.inf,
                "closed_form_D": self.closed_form_d,
                "beta_threshold": p.beta_threshold,
            }
            for p in self.points
        ]

    def summary(self) -> dict:
        return {
            "closed_form_D": self.closed_form_d,
            "threshold_slope": self.threshold_slope,
            "region_slope": self.region_slope,
            "region_exponent": self.region_exponent,
            "alpha_last": self.points[-1].alpha,
        }


def gaussian_exponent_curve(theta0: complex, theta1: complex, nbar: float, n_values: Sequence[int],
                            eps_region: float = config.GAUSSIAN_EPS_REGION, cutoff: Optional[int] = None,
                            max_workers: Optional[int] = None) -> GaussianCurve:
    """
    α, β and β_thr for each n, points computed concurrently.

    Args:
        theta0, theta1: displacements of the two hypotheses
        nbar: thermal photon number shared by both
        n_values: copy counts, ascending
        eps_region: half-width of the acceptance region
        cutoff: fixed cutoff; the policy cutoff per n when None

    Returns:
        GaussianCurve with per-n points and the closed-form exponent
    """
    n_values = [int(n) for n in n_values]
    if len(n_values) < 2 or any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise PreconditionError(MODULE, "gaussian_exponent_curve", f"n values must be ascending, got {n_values}")

    def point(n: int) -> GaussianPoint:
        c = _policy_cutoff(theta0, theta1, nbar, n, cutoff)
        alpha, beta = gaussian_test_errors(theta0, theta1, nbar, n, eps_region, c)
        return GaussianPoint(n, alpha, beta, threshold_beta(theta0, theta1, nbar, n, c), c)

    points = parallel_map(point, n_values, max_workers)
    curve = GaussianCurve(theta0, theta1, nbar, eps_region, points, gaussian_relative_entropy(theta0, theta1, nbar))
    logger.info(
        "gaussian curve: D=%.5f threshold slope=%.5f region slope=%.5f",
        curve.closed_form_d, curve.threshold_slope, curve.region_slope,
    )
    return curve
