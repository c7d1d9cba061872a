"""The rank-one measurement M^n refining E^n × E(σ^{⊗n}) and its diagnostics."""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, xlogy

from backend.config import config
from backend.config.settings import settings
from backend.services.errors import (
    CommutativityError,
    ComputationError,
    DecompositionInvalidError,
    DimensionMismatchError,
    PreconditionError,
    SingularStateError,
)
from backend.services.operator_algebra import (
    DensityOperator,
    Pvm,
    matrix_log,
    matrix_neg_power,
    measure,
    pvm_commutator_norm,
    pvm_product,
    refines,
    relative_log_variance,
    spectral,
    tensor_power,
    von_neumann_entropy,
)
from backend.services.schur_weyl import IrreducibleDecomposition

logger = logging.getLogger(__name__)

MODULE = "measurement_design"


@dataclass(frozen=True, eq=False)
class DesignedMeasurement:
    n: int
    m: Pvm
    sigma_loglik: np.ndarray
    rho_probs: np.ndarray
    sigma_probs: np.ndarray
    joint_blocks: Pvm

    @property
    def outcome_count(self) -> int:
        return len(self.m)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "outcomes": self.outcome_count,
            "joint_blocks": len(self.joint_blocks),
            "joint_block_ranks": list(self.joint_blocks.ranks),
        }


class VarianceBound(NamedTuple):
    variance: float
    bound: float


def _require_faithful(operation: str, sigma: DensityOperator) -> None:
    smallest = float(sigma.op.eigvalsh()[0])
    if smallest <= settings.singular_floor:
        raise SingularStateError(MODULE, operation, f"sigma is not faithful (smallest eigenvalue {smallest:.3e})")


def _neg_loglik(probs: np.ndarray, n: int) -> np.ndarray:
    out = np.full(probs.shape, np.inf)
    positive = probs >= config.ZERO_MASS
    out[positive] = -np.log(probs[positive]) / n
    return out


def design_measurement(rho: DensityOperator, sigma: DensityOperator,
                       decomp: IrreducibleDecomposition) -> DesignedMeasurement:
    """
    Refine E^n by the spectral PVM of σ^{⊗n}, then to rank one inside every joint block.

    LOGIC:
    1. Joint blocks = decomp.blocks × E(σ^{⊗n}); σ^{⊗n} is scalar on each
    2. Inside each joint block take the eigenbasis of the restricted ρ^{⊗n}
    3. Check rank one, M ≥ E^n and commutation with σ^{⊗n}

    Args:
        rho: null hypothesis (single copy)
        sigma: alternative hypothesis (single copy, faithful)
        decomp: irreducible decomposition for (n, k)

    Returns:
        DesignedMeasurement with per-outcome ρ and σ masses
    """
    operation = "design_measurement"
    if rho.dim != decomp.k or sigma.dim != decomp.k:
        raise DimensionMismatchError(
            MODULE, operation, f"states have dims ({rho.dim}, {sigma.dim}), decomposition has k={decomp.k}"
        )
    _require_faithful(operation, sigma)
    n = decomp.n
    rho_n = tensor_power(rho, n)
    sigma_n = tensor_power(sigma, n)

    try:
        joint = pvm_product(decomp.blocks, spectral(sigma_n).eigenprojectors)
    except CommutativityError as exc:
        raise DecompositionInvalidError(
            MODULE, operation, f"blocks do not commute with sigma^n (max norm {exc.max_norm:.3e})"
        ) from exc

    columns, labels = [], []
    for basis, label in zip(joint.bases, joint.labels):
        restricted = basis.conj().T @ rho_n.matrix @ basis
        w, u = np.linalg.eigh((restricted + restricted.conj().T) / 2)
        refined = basis @ u[:, ::-1]
        for j in range(refined.shape[1]):
            columns.append(refined[:, j])
            labels.append((*label, j))
    m = Pvm(rho_n.dim, tuple(columns), tuple(labels))

    if not m.is_rank_one:
        raise DecompositionInvalidError(MODULE, operation, "refined measurement is not rank one")
    if not refines(m, decomp.blocks):
        raise DecompositionInvalidError(MODULE, operation, "refined measurement does not refine E^n")
    sigma_norm = pvm_commutator_norm(m, sigma_n)
    if sigma_norm > config.SIGMA_COMMUTE_TOL:
        raise DecompositionInvalidError(MODULE, operation, f"measurement does not commute with sigma^n ({sigma_norm:.3e})")

    rho_probs = measure(rho_n, m).probabilities
    sigma_probs = measure(sigma_n, m).probabilities
    logger.debug("design_measurement n=%d: %d joint blocks, %d outcomes", n, len(joint), len(m))
    return DesignedMeasurement(
        n=n,
        m=m,
        sigma_loglik=_neg_loglik(sigma_probs, n),
        rho_probs=rho_probs,
        sigma_probs=sigma_probs,
        joint_blocks=joint,
    )


@dataclass(frozen=True, eq=False)
class SpectrumSample:
    """Finite law of a normalized log-likelihood variable with its p- and q-masses."""

    values: np.ndarray
    p_mass: np.ndarray
    q_mass: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        p = np.clip(np.array(self.p_mass, dtype=float), 0.0, None)
        q = np.clip(np.array(self.q_mass, dtype=float), 0.0, None)
        if not values.shape == p.shape == q.shape:
            raise DimensionMismatchError(MODULE, "SpectrumSample", "values and masses differ in length")
        for name, mass in (("p_mass", p), ("q_mass", q)):
            if abs(float(mass.sum()) - 1.0) > config.PROB_SUM_TOL:
                raise ComputationError(MODULE, "SpectrumSample", f"{name} sums to {mass.sum()!r}")
        for arr in (values, p, q):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "p_mass", p)
        object.__setattr__(self, "q_mass", q)

    def mean(self) -> float:
        support = self.p_mass > 0
        return float(np.sum(self.p_mass[support] * self.values[support]))

    def variance(self) -> float:
        support = self.p_mass > 0
        if np.isinf(self.values[support]).any():
            return math.inf
        center = self.mean()
        return float(np.sum(self.p_mass[support] * (self.values[support] - center) ** 2))

    def tail(self, a: float) -> float:
        """p-mass of {value > a}."""
        return float(np.sum(self.p_mass[self.values > a]))


def sigma_spectrum_under_rho(dm: DesignedMeasurement, rho_n: DensityOperator,
                             sigma_n: DensityOperator, n: int) -> SpectrumSample:
    """Law of -(1/n) log P_σ(i) under P_ρ; σ-null outcomes share one +inf bucket."""
    p = measure(rho_n, dm.m).probabilities
    q = measure(sigma_n, dm.m).probabilities
    null = q < config.ZERO_MASS
    values = _neg_loglik(q[~null], n)
    p_mass, q_mass = p[~null], q[~null]
    if null.any():
        values = np.append(values, np.inf)
        p_mass = np.append(p_mass, p[null].sum())
        q_mass = np.append(q_mass, q[null].sum())
    return SpectrumSample(values, p_mass, q_mass)


def _check_identity_preconditions(dm: DesignedMeasurement, rho: DensityOperator,
                                  sigma: DensityOperator, n: int) -> DensityOperator:
    operation = "variance_identity_gap"
    if n != dm.n or rho.dim ** n != dm.m.dim or sigma.dim != rho.dim:
        raise PreconditionError(MODULE, operation, "dimensions do not match the measurement", "dimensions")
    if not dm.m.is_rank_one:
        raise PreconditionError(MODULE, operation, "measurement is not rank one", "rank one")
    if not refines(dm.m, dm.joint_blocks):
        raise PreconditionError(MODULE, operation, "measurement does not refine its joint blocks", "refinement")
    _require_faithful(operation, sigma)
    sigma_n = tensor_power(sigma, n)
    if pvm_commutator_norm(dm.m, sigma_n) > config.SIGMA_COMMUTE_TOL:
        raise PreconditionError(MODULE, operation, "measurement does not commute with sigma^n", "commutation")
    return sigma_n


def variance_identity_gap(dm: DesignedMeasurement, rho: DensityOperator,
                          sigma: DensityOperator, n: int) -> float:
    """|E_p[((1/n) log P_σ − Tr ρ log σ)²] − (1/n) Var_ρ(log σ)|, exactly zero in exact arithmetic."""
    sigma_n = _check_identity_preconditions(dm, rho, sigma, n)
    p = measure(tensor_power(rho, n), dm.m).probabilities
    q = measure(sigma_n, dm.m).probabilities
    center = float(np.real(np.sum(rho.matrix * matrix_log(sigma).entries.T)))
    lhs = float(np.sum(p * (np.log(q) / n - center) ** 2))
    rhs = relative_log_variance(rho, sigma) / n
    return abs(lhs - rhs)


def chernoff_markov_bound(dm: DesignedMeasurement, rho_n: DensityOperator, n: int, a: float,
                          width: int = 1) -> float:
    """
    sup_{0<=t<=1} a t - t log(width)/n - (1/n) log Σ_i P_ρ(i) P_σ(i)^{-t}.

    Certifies P_ρ{-(1/n) log P_σ > a} <= exp(-n · value). Evaluated in the
    log domain; t = 0 always gives 0.
    """
    p = measure(rho_n, dm.m).probabilities
    q = dm.sigma_probs
    support = p > 0
    if np.any(q[support] < config.ZERO_MASS):
        return 0.0
    log_p, log_q = np.log(p[support]), np.log(q[support])
    penalty = math.log(width) / n

    def objective(t: float) -> float:
        return a * t - t * penalty - float(logsumexp(log_p - t * log_q)) / n

    result = minimize_scalar(lambda t: -objective(t), bounds=(0.0, 1.0), method="bounded",
                             options={"xatol": config.GOLDEN_TOL})
    candidates = [0.0, objective(1.0)]
    if result.success:
        candidates.append(objective(float(result.x)))
    return max(candidates)


def tr_rho_sigma_negpower(rho: DensityOperator, sigma: DensityOperator, t: float) -> float:
    """Tr ρ σ^{-t}."""
    if not 0.0 <= t <= 1.0:
        raise PreconditionError(MODULE, "tr_rho_sigma_negpower", f"t must lie in [0, 1], got {t}")
    if rho.dim != sigma.dim:
        raise DimensionMismatchError(MODULE, "tr_rho_sigma_negpower", f"dims {rho.dim} and {sigma.dim}")
    _require_faithful("tr_rho_sigma_negpower", sigma)
    if t == 0.0:
        return 1.0
    return rho.op.expectation(matrix_neg_power(sigma, t))


def single_copy_chernoff_exponent(rho: DensityOperator, sigma: DensityOperator, a: float) -> float:
    """sup_{0<=t<=1} a t - log Tr ρ σ^{-t}."""

    def objective(t: float) -> float:
        return a * t - math.log(tr_rho_sigma_negpower(rho, sigma, t))

    result = minimize_scalar(lambda t: -objective(t), bounds=(0.0, 1.0), method="bounded",
                             options={"xatol": config.GOLDEN_TOL})
    candidates = [0.0, objective(1.0)]
    if result.success:
        candidates.append(objective(float(result.x)))
    return max(candidates)


def rho_loglik_variance_bound(dm: DesignedMeasurement, rho: DensityOperator, k: int) -> VarianceBound:
    """E_p[((1/n) log P_ρ − Tr ρ log ρ)²] against 8((k−1) log(n+1)/n)² + (2/n) Var_ρ(log ρ)."""
    n = dm.n
    p = dm.rho_probs
    support = p > 0
    center = -von_neumann_entropy(rho)
    variance = float(np.sum(p[support] * (np.log(p[support]) / n - center) ** 2))

    w, _ = np.linalg.eigh(rho.matrix)
    w = w[w > settings.singular_floor]
    spread = float(np.sum(w * (np.log(w) - center) ** 2))
    bound = 8.0 * ((k - 1) * math.log(n + 1) / n) ** 2 + 2.0 * spread / n
    return VarianceBound(variance, bound)


def rho_entropy_gap(dm: DesignedMeasurement, rho: DensityOperator) -> float:
    """H(P_ρ^M)/n − S(ρ); lies in [0, log C(n+k−1, k−1)/n]."""
    p = dm.rho_probs
    return float(-np.sum(xlogy(p, p))) / dm.n - von_neumann_entropy(rho)
