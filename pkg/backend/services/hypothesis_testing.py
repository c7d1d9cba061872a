"""Quantum Neyman–Pearson tests, measured strategies and exponent curves."""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import brentq
from scipy.stats import norm

from backend.config import config
from backend.config.settings import settings
from backend.services.errors import ComputationError, PreconditionError, SingularStateError
from backend.services.info_spectrum import DistributionPair, classical_np, iid_pair
from backend.services.measurement_design import DesignedMeasurement, design_measurement
from backend.services.operator_algebra import (
    DensityOperator,
    HermitianOperator,
    TestOperator,
    commutator_norm,
    measure,
    relative_entropy,
    relative_entropy_variance,
    spectral,
    tensor_power,
)
from backend.services.parallel import parallel_map
from backend.services.schur_weyl import irreducible_decomposition

logger = logging.getLogger(__name__)

MODULE = "hypothesis_testing"


class Strategy(str, Enum):
    QUANTUM_NP = "quantum_np"
    DESIGNED_MEASUREMENT = "designed_measurement"
    NAIVE_PRODUCT_BASIS = "naive_product_basis"


@dataclass(frozen=True, eq=False)
class NpTest:
    """A = P_+ + γ P_0 for ρ_n − e^{nλ} σ_n."""

    projector_part: TestOperator
    boundary_weight: float
    threshold: float
    kernel: np.ndarray
    alpha: float
    beta: float

    def operator(self) -> TestOperator:
        p0 = self.kernel @ self.kernel.conj().T
        return TestOperator(HermitianOperator(self.projector_part.op.entries + self.boundary_weight * p0))


@dataclass(frozen=True, eq=False)
class ExponentCurve:
    strategy: str
    epsilon: float
    n_values: Tuple[int, ...]
    alpha_values: Tuple[float, ...]
    beta_values: Tuple[float, ...]
    slope_estimate: float
    refined_slope: float
    residuals: Tuple[float, ...] = ()
    fit_window: Tuple[int, ...] = ()
    limsup_admissible: bool = True
    liminf_admissible: bool = True

    def minus_log_beta(self) -> List[float]:
        return [-math.log(b) if b > 0 else math.inf for b in self.beta_values]

    def rows(self, seed: int) -> List[dict]:
        return [
            {
                "n": n,
                "alpha": a,
                "beta": b,
                "minus_log_beta_over_n": y / n,
                "strategy": self.strategy,
                "seed": seed,
            }
            for n, a, b, y in zip(self.n_values, self.alpha_values, self.beta_values, self.minus_log_beta())
        ]


def _check_epsilon(operation: str, epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise PreconditionError(MODULE, operation, f"epsilon must lie in (0, 1), got {epsilon}")


# ============================================================================
# QUANTUM NEYMAN-PEARSON
# ============================================================================

def _joint_eigenbasis(rho_n: DensityOperator, sigma_n: DensityOperator) -> np.ndarray:
    columns = []
    for basis in spectral(sigma_n).eigenprojectors.bases:
        restricted = basis.conj().T @ rho_n.matrix @ basis
        _, u = np.linalg.eigh((restricted + restricted.conj().T) / 2)
        columns.append(basis @ u)
    return np.hstack(columns)


def _commuting_np(rho_n: DensityOperator, sigma_n: DensityOperator, epsilon: float, n: int) -> NpTest:
    u = _joint_eigenbasis(rho_n, sigma_n)
    p = np.clip(np.real(np.sum(u.conj() * (rho_n.matrix @ u), axis=0)), 0.0, None)
    q = np.clip(np.real(np.sum(u.conj() * (sigma_n.matrix @ u), axis=0)), 0.0, None)
    pair = DistributionPair(p / p.sum(), q / q.sum(), n)
    result = classical_np(pair, epsilon)

    ratio = pair.log_ratio
    if math.isinf(result.threshold):
        boundary = ratio == result.threshold
    else:
        boundary = np.abs(ratio - result.threshold) <= config.TIE_TOL * max(1.0, abs(result.threshold))
    above = (ratio > result.threshold) & ~boundary
    plus = u[:, above]
    projector = TestOperator(HermitianOperator(plus @ plus.conj().T))
    return NpTest(projector, result.randomization, result.threshold, u[:, boundary], result.alpha, result.beta_star)


def _mass(rho: np.ndarray, basis: np.ndarray) -> float:
    """Tr ρ P for the projector onto the span of the orthonormal columns of basis."""
    if not basis.size:
        return 0.0
    return float(np.real(np.sum(basis.conj() * (rho @ basis))))


def _pencil_levels(rho: np.ndarray, sigma: np.ndarray, operation: str) -> List[Tuple[float, int]]:
    """Distinct positive roots c of det(ρ − cσ) with their multiplicities, ascending."""
    try:
        w = scipy.linalg.eigh(rho, sigma, eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ComputationError(MODULE, operation, f"generalized eigensolver failed: {exc}") from exc
    w = w[w > config.SUPPORT_TOL * float(w[-1])]
    groups: List[List[float]] = []
    for value in w:
        if groups and value - groups[-1][-1] <= settings.degeneracy_tol * value:
            groups[-1].append(float(value))
        else:
            groups.append([float(value)])
    return [(float(np.mean(g)), len(g)) for g in groups]


def _split(rho: np.ndarray, sigma: np.ndarray, c: float, above: int, kernel_dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Top ``above`` eigenvectors of ρ − cσ and the ``kernel_dim`` just below them.

    σ is faithful, so ρ − cσ has exactly as many positive eigenvalues as the
    pencil has roots above c; at a root of multiplicity m the m eigenvectors
    below the positive ones span the kernel.
    """
    _, v = np.linalg.eigh(rho - c * sigma)
    d = v.shape[1]
    return v[:, d - above:], v[:, d - above - kernel_dim:d - above]


def _general_np(rho_n: DensityOperator, sigma_n: DensityOperator, epsilon: float, n: int) -> NpTest:
    operation = "quantum_np_test"
    rho, sigma = rho_n.matrix, sigma_n.matrix
    smallest = float(sigma_n.op.eigvalsh()[0])
    if smallest <= settings.singular_floor:
        raise SingularStateError(MODULE, operation, f"sigma_n is singular (smallest eigenvalue {smallest:.3e})")
    levels = _pencil_levels(rho, sigma, operation)
    counts = [m for _, m in levels]

    # α(c) is non-decreasing: continuous between roots, jumping by Tr ρ P_0 at each root.
    lower = 0.0
    for j, (c, m) in enumerate(levels):
        above = sum(counts[j + 1:])
        plus, kernel = _split(rho, sigma, c, above, m)
        accepted, kernel_mass = _mass(rho, plus), _mass(rho, kernel)
        if epsilon < 1.0 - accepted - kernel_mass:
            count = above + m

            def gap(x: float) -> float:
                return 1.0 - _mass(rho, _split(rho, sigma, x, count, 0)[0]) - epsilon

            try:
                c = brentq(gap, lower, c, xtol=config.BRENT_XTOL * c)
            except ValueError as exc:
                raise ComputationError(MODULE, operation, f"could not bracket the Neyman-Pearson threshold: {exc}") from exc
            plus, kernel = _split(rho, sigma, c, count, 0)
            accepted, kernel_mass = _mass(rho, plus), 0.0
            break
        if epsilon <= 1.0 - accepted:
            break
        lower = c
    else:
        raise ComputationError(MODULE, operation, "could not locate the Neyman-Pearson threshold")

    gamma = 0.0
    if kernel_mass > 0:
        gamma = min(1.0, max(0.0, (1.0 - epsilon - accepted) / kernel_mass))
    projector = TestOperator(HermitianOperator(plus @ plus.conj().T))
    test = NpTest(projector, gamma, math.log(c) / n, kernel, 0.0, 0.0)
    a = test.operator().op
    alpha = 1.0 - rho_n.op.expectation(a)
    beta = sigma_n.op.expectation(a)
    return NpTest(projector, gamma, math.log(c) / n, kernel, alpha, beta)


def quantum_np_test(rho_n: DensityOperator, sigma_n: DensityOperator, epsilon: float, n: int = 1) -> NpTest:
    """
    Likelihood-ratio test with alpha = epsilon exactly and minimal beta.

    LOGIC:
    1. Commuting inputs: classical Neyman–Pearson on the joint eigenbasis
    2. Otherwise: scan the generalized eigenvalues c_j of (ρ, σ). If epsilon falls
       in the jump of α at c_j, take c = c_j and randomize on its eigenspace;
       if it falls between two of them, root-find c with the positive count fixed

    Args:
        rho_n, sigma_n: hypotheses on the n-copy space
        epsilon: level of the first error
        n: copy count, used to report the threshold per copy

    Returns:
        NpTest with its errors
    """
    _check_epsilon("quantum_np_test", epsilon)
    if commutator_norm(rho_n, sigma_n) <= config.COMMUTATOR_TOL:
        test = _commuting_np(rho_n, sigma_n, epsilon, n)
    else:
        test = _general_np(rho_n, sigma_n, epsilon, n)
    logger.debug("quantum_np_test dim=%d eps=%.3g: beta=%.6e", rho_n.dim, epsilon, test.beta)
    return test


def beta_star(rho: DensityOperator, sigma: DensityOperator, n: int, epsilon: float) -> float:
    """β*_n(ε) = min{Tr σ^{⊗n} A : 0 <= A <= I, Tr ρ^{⊗n}(I − A) <= ε}."""
    _check_epsilon("beta_star", epsilon)
    return quantum_np_test(tensor_power(rho, n), tensor_power(sigma, n), epsilon, n).beta


def measured_beta(rho: DensityOperator, sigma: DensityOperator, n: int, epsilon: float,
                  dm: DesignedMeasurement) -> float:
    """Classical randomized NP optimum on (P_ρ^M, P_σ^M)."""
    _check_epsilon("measured_beta", epsilon)
    p = measure(tensor_power(rho, n), dm.m).probabilities
    q = measure(tensor_power(sigma, n), dm.m).probabilities
    return classical_np(DistributionPair(p, q, n), epsilon).beta_star


def naive_product_pair(rho: DensityOperator, sigma: DensityOperator, n: int) -> DistributionPair:
    """Every copy measured in the single-copy eigenbasis of σ."""
    _, u = np.linalg.eigh(sigma.matrix)
    p = np.clip(np.real(np.sum(u.conj() * (rho.matrix @ u), axis=0)), 0.0, None)
    q = np.clip(np.real(np.sum(u.conj() * (sigma.matrix @ u), axis=0)), 0.0, None)
    return iid_pair(p / p.sum(), q / q.sum(), n)


# ============================================================================
# EXPONENT CURVES
# ============================================================================

def _strategy_point(strategy: Strategy, rho: DensityOperator, sigma: DensityOperator,
                    epsilon: float, seed: int) -> Callable[[int], Tuple[float, float]]:
    def quantum(n: int) -> Tuple[float, float]:
        test = quantum_np_test(tensor_power(rho, n), tensor_power(sigma, n), epsilon, n)
        return test.alpha, test.beta

    def designed(n: int) -> Tuple[float, float]:
        dm = design_measurement(rho, sigma, irreducible_decomposition(n, rho.dim, seed))
        p = measure(tensor_power(rho, n), dm.m).probabilities
        result = classical_np(DistributionPair(p, dm.sigma_probs, n), epsilon)
        return result.alpha, result.beta_star

    def naive(n: int) -> Tuple[float, float]:
        result = classical_np(naive_product_pair(rho, sigma, n), epsilon)
        return result.alpha, result.beta_star

    return {
        Strategy.QUANTUM_NP: quantum,
        Strategy.DESIGNED_MEASUREMENT: designed,
        Strategy.NAIVE_PRODUCT_BASIS: naive,
    }[strategy]


def _fit_window(n_values: Sequence[int]) -> List[int]:
    count = max(2, math.ceil(config.EXPONENT_FIT_FRACTION * len(n_values)))
    return sorted(n_values)[-count:]


def exponent_curve(rho: DensityOperator, sigma: DensityOperator, epsilon: float, n_range: Sequence[int],
                   strategy: str = Strategy.QUANTUM_NP, seed: int = 0,
                   max_workers: Optional[int] = None) -> ExponentCurve:
    """
    β_n under a strategy at level ε for every n, and the exponent fit.

    The raw slope is the least-squares slope of −log β against n over the
    largest 60% of n. The refined slope fits −log β − √(nV) Φ⁻¹(ε) − ½ log n
    (V = V(ρ‖σ)) over the same window; both corrections are skipped when V = 0.
    """
    operation = "exponent_curve"
    _check_epsilon(operation, epsilon)
    try:
        strategy = Strategy(strategy)
    except ValueError as exc:
        raise PreconditionError(MODULE, operation, f"unknown strategy {strategy!r}") from exc
    n_values = [int(n) for n in n_range]
    if not n_values or any(n < 1 for n in n_values) or n_values != sorted(set(n_values)):
        raise PreconditionError(MODULE, operation, f"n_range must be positive and strictly ascending, got {n_values}")
    if len(n_values) < 2:
        raise PreconditionError(MODULE, operation, "need at least two n values to fit a slope")

    point = _strategy_point(strategy, rho, sigma, epsilon, seed)
    results = parallel_map(point, n_values, max_workers)
    alphas = [a for a, _ in results]
    betas = [b for _, b in results]
    logger.info("exponent_curve %s eps=%.3g: %d points", strategy.value, epsilon, len(n_values))

    window = _fit_window(n_values)
    usable = [
        (n, -math.log(b))
        for n, a, b in zip(n_values, alphas, betas)
        if n in window and b > 0 and a <= epsilon + config.PROB_SUM_TOL
    ]
    if len(usable) < 2:
        raise ComputationError(MODULE, operation, "fewer than two usable points in the fit window")
    xs = np.array([n for n, _ in usable], dtype=float)
    ys = np.array([y for _, y in usable])
    slope, intercept = np.polyfit(xs, ys, 1)
    residuals = ys - (slope * xs + intercept)

    variance = relative_entropy_variance(rho, sigma, restrict_support=True)
    refined = ys
    if 0.0 < variance < math.inf:
        refined = ys - np.sqrt(xs * variance) * norm.ppf(epsilon) - 0.5 * np.log(xs)
    refined_slope = float(np.polyfit(xs, refined, 1)[0])

    window_alphas = [a for n, a in zip(n_values, alphas) if n in window]
    return ExponentCurve(
        strategy=strategy.value,
        epsilon=epsilon,
        n_values=tuple(n_values),
        alpha_values=tuple(alphas),
        beta_values=tuple(betas),
        slope_estimate=float(slope),
        refined_slope=refined_slope,
        residuals=tuple(float(r) for r in residuals),
        fit_window=tuple(window),
        limsup_admissible=max(window_alphas) < 1.0,
        liminf_admissible=min(window_alphas) < 1.0,
    )


def stein_exponent(rho: DensityOperator, sigma: DensityOperator) -> float:
    """D(ρ‖σ), the optimal exponent the curves are compared with."""
    return relative_entropy(rho, sigma, restrict_support=True)
