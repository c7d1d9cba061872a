"""Classical information-spectrum hypothesis testing.

Works on arbitrary finite pairs (p_n, q_n) through the normalized
log-likelihood ratio (1/n) log(p/q). Conventions: p > 0 = q gives +inf,
p = 0 gives -inf (carries no p-mass and is rejected by every finite
threshold).
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from backend.config import config
from backend.services.errors import DimensionMismatchError, PreconditionError
from backend.services.parallel import parallel_map

logger = logging.getLogger(__name__)

MODULE = "info_spectrum"


def _as_distribution(values: Sequence[float], operation: str, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise PreconditionError(MODULE, operation, f"{name} is empty")
    if arr.min() < -config.PROB_CLIP:
        raise PreconditionError(MODULE, operation, f"{name} has a negative entry {arr.min():.3e}")
    total = float(arr.sum())
    if abs(total - 1.0) > config.PROB_SUM_TOL:
        raise PreconditionError(MODULE, operation, f"{name} sums to {total!r}")
    arr = np.clip(arr, 0.0, None)
    arr.setflags(write=False)
    return arr


def _check_epsilon(operation: str, epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise PreconditionError(MODULE, operation, f"epsilon must lie in (0, 1), got {epsilon}")


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class DistributionPair:
    """Pair (p_n, q_n) on a common finite outcome set.

    ``log_ratio`` may be supplied when masses are grouped (types) and the
    per-outcome ratio is known exactly even where the masses underflow.
    """

    p: np.ndarray
    q: np.ndarray
    n: int = 1
    log_ratio: Optional[np.ndarray] = None

    def __post_init__(self):
        p = _as_distribution(self.p, "DistributionPair", "p")
        q = _as_distribution(self.q, "DistributionPair", "q")
        if p.shape != q.shape:
            raise DimensionMismatchError(MODULE, "DistributionPair", f"p has {p.size} outcomes, q has {q.size}")
        if self.n < 1:
            raise PreconditionError(MODULE, "DistributionPair", f"n must be positive, got {self.n}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if self.log_ratio is None:
            ratio = np.full(p.shape, -np.inf)
            both = (p > 0) & (q > 0)
            ratio[both] = (np.log(p[both]) - np.log(q[both])) / self.n
            ratio[(p > 0) & (q == 0)] = np.inf
        else:
            ratio = np.array(self.log_ratio, dtype=float)
            if ratio.shape != p.shape:
                raise DimensionMismatchError(MODULE, "DistributionPair", "log_ratio length differs from p")
        ratio.setflags(write=False)
        object.__setattr__(self, "log_ratio", ratio)

    def __len__(self) -> int:
        return self.p.size


@dataclass(frozen=True, eq=False)
class ThresholdTest:
    """Acceptance region S_n(lam) = {(1/n) log(p/q) >= lam}."""

    lam: float
    acceptance_mask: np.ndarray


class BoundCheck(NamedTuple):
    ok: bool
    slack: float


class NpResult(NamedTuple):
    beta_star: float
    threshold: float
    randomization: float
    alpha: float
    weights: np.ndarray


@dataclass(frozen=True)
class SpectralRecord:
    n: int
    grid: np.ndarray
    cdf: np.ndarray
    quantiles: Dict[float, float] = field(default_factory=dict)
    infinite_mass: float = 0.0


# ============================================================================
# THRESHOLD TESTS
# ============================================================================

def threshold_test(dp: DistributionPair, lam: float) -> ThresholdTest:
    """Accept where (1/n) log(p/q) >= lam; ties accepted."""
    return ThresholdTest(float(lam), dp.log_ratio >= lam)


def classical_errors(dp: DistributionPair, t: ThresholdTest) -> Tuple[float, float]:
    alpha = float(np.sum(dp.p[~t.acceptance_mask]))
    beta = float(np.sum(dp.q[t.acceptance_mask]))
    return alpha, beta


def randomized_test_errors(dp: DistributionPair, t: Sequence[float]) -> Tuple[float, float]:
    """Errors of the randomized test accepting outcome x with probability t[x]."""
    weights = np.asarray(t, dtype=float)
    if weights.shape != dp.p.shape:
        raise DimensionMismatchError(MODULE, "randomized_test_errors", "test length differs from the outcome count")
    if weights.min() < 0.0 or weights.max() > 1.0:
        raise PreconditionError(MODULE, "randomized_test_errors", "test values must lie in [0, 1]")
    return float(np.sum((1.0 - weights) * dp.p)), float(np.sum(weights * dp.q))


def verify_threshold_beta_bound(dp: DistributionPair, lam: float) -> BoundCheck:
    """beta(S_n(lam)) <= exp(-n lam), the finite-n form of the spectral bound."""
    _, beta = classical_errors(dp, threshold_test(dp, lam))
    with np.errstate(over="ignore"):
        bound = float(np.exp(-dp.n * lam))
    ok = beta <= bound * (1.0 + config.THRESHOLD_BOUND_SLACK) + config.ZERO_MASS
    return BoundCheck(bool(ok), bound - beta)


def neyman_pearson_objective(dp: DistributionPair, lam: float, t: Sequence[float]) -> float:
    """alpha(t) + e^{n lam} beta(t)."""
    alpha, beta = randomized_test_errors(dp, t)
    if beta == 0.0:
        return alpha
    with np.errstate(over="ignore"):
        return alpha + float(np.exp(dp.n * lam)) * beta


def neyman_pearson_gap(dp: DistributionPair, lam: float, t: Sequence[float]) -> float:
    """Objective of t minus the objective of S_n(lam); nonnegative for every test t."""
    threshold = threshold_test(dp, lam).acceptance_mask.astype(float)
    return neyman_pearson_objective(dp, lam, t) - neyman_pearson_objective(dp, lam, threshold)


# ============================================================================
# NEYMAN-PEARSON
# ============================================================================

def _tie_groups(sorted_ratio: np.ndarray) -> List[np.ndarray]:
    """Index runs of (numerically) equal ratios in a descending array."""
    if sorted_ratio.size == 0:
        return []
    same = np.zeros(sorted_ratio.size - 1, dtype=bool)
    a, b = sorted_ratio[:-1], sorted_ratio[1:]
    finite = np.isfinite(a) & np.isfinite(b)
    same[finite] = np.abs(a[finite] - b[finite]) <= config.TIE_TOL * np.maximum(1.0, np.abs(a[finite]))
    same[~finite] = a[~finite] == b[~finite]
    return np.split(np.arange(sorted_ratio.size), np.flatnonzero(~same) + 1)


def classical_np(dp: DistributionPair, epsilon: float) -> NpResult:
    """
    Exact randomized Neyman–Pearson optimum at level epsilon.

    LOGIC:
    1. Sort outcomes by likelihood ratio, largest first, grouping ties
    2. Accept whole groups while the accepted p-mass stays below 1 - epsilon
    3. Accept the boundary group with the probability that makes alpha = epsilon

    Returns:
        NpResult with the minimal beta, the boundary ratio (nats per copy),
        the boundary acceptance probability and the per-outcome test
    """
    _check_epsilon("classical_np", epsilon)
    order = np.argsort(-dp.log_ratio, kind="stable")
    target = 1.0 - epsilon
    weights = np.zeros(len(dp))
    accepted_p = 0.0
    beta = 0.0
    threshold, gamma = math.inf, 0.0
    for group in _tie_groups(dp.log_ratio[order]):
        idx = order[group]
        group_p = float(dp.p[idx].sum())
        group_q = float(dp.q[idx].sum())
        if accepted_p + group_p < target:
            weights[idx] = 1.0
            accepted_p += group_p
            beta += group_q
            continue
        gamma = min(1.0, max(0.0, (target - accepted_p) / group_p)) if group_p > 0 else 0.0
        weights[idx] = gamma
        accepted_p += gamma * group_p
        beta += gamma * group_q
        threshold = float(dp.log_ratio[idx[0]])
        break
    return NpResult(float(beta), threshold, float(gamma), float(1.0 - accepted_p), weights)


# ============================================================================
# SPECTRAL FUNCTIONALS
# ============================================================================

def _quantile(values: np.ndarray, mass: np.ndarray, level: float) -> float:
    """Smallest v with P{value <= v} >= level."""
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(mass[order])
    position = int(np.searchsorted(cumulative, level - config.PROB_SUM_TOL, side="left"))
    if position >= len(order):
        return math.inf
    return float(values[order][position])


def spectral_record(dp: DistributionPair) -> SpectralRecord:
    support = dp.p > 0
    ratio, mass = dp.log_ratio[support], dp.p[support]
    finite = np.isfinite(ratio)
    if finite.any():
        low, high = float(ratio[finite].min()), float(ratio[finite].max())
    else:
        low = high = 0.0
    grid = np.linspace(low - config.LAMBDA_GRID_MARGIN, high + config.LAMBDA_GRID_MARGIN, config.LAMBDA_GRID_POINTS)
    order = np.argsort(ratio, kind="stable")
    cumulative = np.concatenate([[0.0], np.cumsum(mass[order])])
    cdf = cumulative[np.searchsorted(ratio[order], grid, side="right")]
    quantiles = {level: _quantile(ratio, mass, level) for level in config.QUANTILE_LEVELS}
    infinite_mass = float(mass[np.isposinf(ratio)].sum())
    return SpectralRecord(dp.n, grid, cdf, quantiles, infinite_mass)


def spectral_functionals(seq: Sequence[DistributionPair],
                         max_workers: Optional[int] = None) -> List[SpectralRecord]:
    """Per-n p-CDF of the normalized log-likelihood ratio and its tail quantiles.

    Finite-n diagnostics only; no limit is extrapolated.
    """
    if not seq:
        raise PreconditionError(MODULE, "spectral_functionals", "need at least one distribution pair")
    return parallel_map(spectral_record, seq, max_workers)


# ============================================================================
# I.I.D. PAIRS BY TYPE
# ============================================================================

def _compositions(n: int, parts: int) -> Iterator[Tuple[int, ...]]:
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        edges = (-1, *bars, n + parts - 1)
        yield tuple(edges[i + 1] - edges[i] - 1 for i in range(parts))


def iid_pair(p: Sequence[float], q: Sequence[float], n: int) -> DistributionPair:
    """(p^n, q^n) grouped by type, with equal-ratio types merged."""
    p = _as_distribution(p, "iid_pair", "p")
    q = _as_distribution(q, "iid_pair", "q")
    if p.shape != q.shape:
        raise DimensionMismatchError(MODULE, "iid_pair", f"p has {p.size} outcomes, q has {q.size}")
    if n < 1:
        raise PreconditionError(MODULE, "iid_pair", f"n must be positive, got {n}")

    counts = np.array(list(_compositions(n, p.size)), dtype=float)
    log_multinomial = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    log_p_seq = xlogy(counts, p).sum(axis=1)
    log_q_seq = xlogy(counts, q).sum(axis=1)

    ratio = np.full(counts.shape[0], -np.inf)
    finite_p = np.isfinite(log_p_seq)
    finite_q = np.isfinite(log_q_seq)
    ratio[finite_p & finite_q] = (log_p_seq - log_q_seq)[finite_p & finite_q] / n
    ratio[finite_p & ~finite_q] = np.inf

    values, inverse = np.unique(ratio, return_inverse=True)
    inverse = inverse.reshape(-1)
    log_p = np.full(values.size, -np.inf)
    log_q = np.full(values.size, -np.inf)
    for g in range(values.size):
        members = inverse == g
        log_p[g] = logsumexp(log_multinomial[members] + log_p_seq[members])
        log_q[g] = logsumexp(log_multinomial[members] + log_q_seq[members])
    p_mass, q_mass = np.exp(log_p), np.exp(log_q)
    logger.debug("iid_pair n=%d: %d types, %d ratio classes", n, counts.shape[0], values.size)
    return DistributionPair(p_mass / p_mass.sum(), q_mass / q_mass.sum(), n, log_ratio=values)
