"""Operator inequalities behind the direct part, each with a brute-force counterpart.

* plog2_max: closed-form max of Σ p_i (log p_i)^2 over the k-simplex
* check_pinching_log_bound: Tr ρ(log ρ − log 𝓔_M(ρ))^2 <= 4 (log w(E))^2
* check_pinching_dominance: ρ <= k 𝓔_M(ρ)
* check_pinched_negative_power: w(E)^t ρ^{-t} >= 𝓔_M(ρ)^{-t}
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from backend.config import config
from backend.config.settings import settings
from backend.services.errors import PreconditionError
from backend.services.operator_algebra import (
    DensityOperator,
    Pvm,
    matrix_log,
    matrix_neg_power,
    pinch,
    pvm_commutator_norm,
    refines,
)
from backend.services.parallel import parallel_map
from backend.services.random_states import (
    block_diagonal_density,
    random_block_pvm,
    random_density,
    random_rank_one_pvm,
    random_refinement,
    rng_for,
)

logger = logging.getLogger(__name__)

MODULE = "inequalities"


class InequalityCheck(NamedTuple):
    lhs: float
    rhs: float
    ok: bool


class PlogSearch(NamedTuple):
    value: float
    support: int
    levels: Tuple[float, float]
    counts: Tuple[int, int]
    interior: bool


@dataclass
class StressReport:
    name: str
    trials: int
    tolerance: float
    extremal: float
    violations: int = 0
    witnesses: List[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def summary(self) -> dict:
        return {
            "check": self.name,
            "trials": self.trials,
            "violations": self.violations,
            "extremal": self.extremal,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


# ============================================================================
# SUM OF p (log p)^2
# ============================================================================

def _plog2(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, safe * np.log(safe) ** 2, 0.0)


def plog2_max(k: int) -> float:
    """max Σ p_i (ln p_i)^2 over probability vectors of length k."""
    if k < 2:
        raise PreconditionError(MODULE, "plog2_max", f"k must be at least 2, got {k}")
    if k >= 3:
        return math.log(k) ** 2
    root = math.sqrt(1.0 - 4.0 / math.e ** 2)
    levels = np.array([(1.0 - root) / 2.0, (1.0 + root) / 2.0])
    return float(_plog2(levels).sum())


def plog2_max_search(k: int, grid: int = 10_000) -> PlogSearch:
    """
    Brute-force maximum over two-level vectors.

    LOGIC:
    1. For each support size s <= k and split r + (s − r) = s, the stationary
       points have r entries at level a and s − r at b = (1 − r a)/(s − r)
    2. Scan a on a grid, then refine around the best grid point
    3. Keep the overall best; support < k means the optimum sits on the boundary
    """
    if k < 2:
        raise PreconditionError(MODULE, "plog2_max_search", f"k must be at least 2, got {k}")
    if grid < 1000:
        raise PreconditionError(MODULE, "plog2_max_search", f"grid must be at least 1000, got {grid}")

    best = PlogSearch(0.0, 1, (1.0, 0.0), (1, 0), False)
    for s in range(2, k + 1):
        uniform = float(_plog2(np.array([1.0 / s])) * s)
        if uniform > best.value:
            best = PlogSearch(uniform, s, (1.0 / s, 1.0 / s), (s, 0), s == k)
        for r in range(1, s):
            def value(a: float, r: int = r, s: int = s) -> float:
                b = (1.0 - r * a) / (s - r)
                return float(r * _plog2(np.array([a]))[0] + (s - r) * _plog2(np.array([b]))[0])

            upper = 1.0 / r
            points = np.linspace(0.0, upper, grid + 1)[1:-1]
            a_grid = points
            b_grid = (1.0 - r * a_grid) / (s - r)
            scanned = r * _plog2(a_grid) + (s - r) * _plog2(b_grid)
            i = int(np.argmax(scanned))
            lo = points[max(i - 1, 0)]
            hi = points[min(i + 1, len(points) - 1)]
            result = minimize_scalar(lambda a: -value(a), bounds=(lo, hi), method="bounded",
                                     options={"xatol": config.PLOG2_XTOL})
            a_star = float(result.x) if value(float(result.x)) >= scanned[i] else float(points[i])
            v = value(a_star)
            if v > best.value:
                b_star = (1.0 - r * a_star) / (s - r)
                best = PlogSearch(v, s, (a_star, b_star), (r, s - r), s == k)
    return best


def plog2_max_oracle(k: int, grid: int = 10_000) -> float:
    return plog2_max_search(k, grid).value


# ============================================================================
# OPERATOR CHECKS
# ============================================================================

def _require_refinement(operation: str, m: Pvm, e: Pvm) -> None:
    if not refines(m, e):
        raise PreconditionError(MODULE, operation, "m does not refine e", "refinement")


def _require_commuting(operation: str, rho: DensityOperator, e: Pvm) -> None:
    norm = pvm_commutator_norm(e, rho)
    if norm > config.COMMUTATOR_TOL:
        raise PreconditionError(MODULE, operation, f"rho does not commute with e (norm {norm:.3e})", "commutation")


def check_pinching_log_bound(rho: DensityOperator, e: Pvm, m: Pvm) -> InequalityCheck:
    """Tr ρ(log ρ − log 𝓔_M(ρ))^2 against 4 (log w(E))^2, logs taken on supports."""
    operation = "check_pinching_log_bound"
    _require_refinement(operation, m, e)
    _require_commuting(operation, rho, e)
    if e.width < 3:
        raise PreconditionError(MODULE, operation, f"w(e) = {e.width} < 3", "width")

    log_rho = matrix_log(rho, restrict_support=True).entries
    log_pinched = matrix_log(pinch(m, rho), restrict_support=True).entries
    x = log_rho - log_pinched
    lhs = float(np.real(np.sum(rho.matrix * (x @ x).T)))
    rhs = 4.0 * math.log(e.width) ** 2
    return InequalityCheck(lhs, rhs, lhs <= rhs + config.PINCHING_LOG_TOL)


def check_pinching_dominance(rho: DensityOperator, m: Pvm) -> float:
    """λ_min(k 𝓔_M(ρ) − ρ) with k the dimension; nonnegative."""
    gap = m.dim * pinch(m, rho).entries - rho.matrix
    return float(np.linalg.eigvalsh(gap)[0])


def check_pinched_negative_power(rho: DensityOperator, e: Pvm, m: Pvm, t: float) -> float:
    """λ_min(w(E)^t ρ^{-t} − 𝓔_M(ρ)^{-t}); nonnegative for 0 < t <= 1."""
    operation = "check_pinched_negative_power"
    if not 0.0 < t <= 1.0:
        raise PreconditionError(MODULE, operation, f"t must lie in (0, 1], got {t}", "exponent range")
    smallest = float(rho.op.eigvalsh()[0])
    if smallest <= settings.singular_floor:
        raise PreconditionError(MODULE, operation, f"rho is singular (smallest eigenvalue {smallest:.3e})", "faithful")
    _require_refinement(operation, m, e)
    _require_commuting(operation, rho, e)

    gap = e.width ** t * matrix_neg_power(rho, t).entries - matrix_neg_power(pinch(m, rho), t).entries
    return float(np.linalg.eigvalsh(gap)[0])


# ============================================================================
# STRESS SUITES
# ============================================================================

def _witness(trial: int, rho: DensityOperator, **pvms: Pvm) -> dict:
    entry = {"trial": trial, "rho": rho.matrix}
    entry.update({name: pvm.unitary for name, pvm in pvms.items()})
    return entry


def _run_trials(trials: int, run: Callable[[int], Tuple[float, bool, Optional[dict]]],
                max_workers: Optional[int]) -> List[Tuple[float, bool, Optional[dict]]]:
    return parallel_map(run, range(trials), max_workers)


def _report(name: str, trials: int, tolerance: float,
            outcomes: List[Tuple[float, bool, Optional[dict]]]) -> StressReport:
    report = StressReport(name, trials, tolerance, min(slack for slack, _, _ in outcomes))
    for _, ok, witness in outcomes:
        if not ok:
            report.violations += 1
            report.witnesses.append(witness)
    if report.violations:
        logger.warning("%s: %d of %d trials violate the inequality", name, report.violations, trials)
    else:
        logger.info("%s: %d trials, extremal slack %.3e", name, trials, report.extremal)
    return report


def pinching_log_stress(trials: int, seed: int, dims: Sequence[int] = (3, 4, 5),
                        max_workers: Optional[int] = None) -> StressReport:
    """Random (ρ, E, M) with ρ block diagonal for E, M a random rank-one refinement, w(E) >= 3."""

    def run(trial: int):
        rng = rng_for(seed, f"inequalities/pinching_log/{trial}")
        dim = dims[trial % len(dims)]
        if trial % 2 == 0 or dim < 4:
            e = Pvm.trivial(dim)
        else:
            e = random_block_pvm(dim, (3, dim - 3), rng)
        rank = 1 + trial % dim
        rho = block_diagonal_density(e, rng) if rank == dim else _low_rank_commuting(e, rank, rng)
        m = random_refinement(e, rng)
        check = check_pinching_log_bound(rho, e, m)
        return check.rhs - check.lhs, check.ok, None if check.ok else _witness(trial, rho, e=e, m=m)

    return _report("pinching-log", trials, config.PINCHING_LOG_TOL, _run_trials(trials, run, max_workers))


def _low_rank_commuting(e: Pvm, rank: int, rng: np.random.Generator) -> DensityOperator:
    """Commuting state supported on ``rank`` dimensions of the first element of e."""
    basis = e.bases[0]
    rank = min(rank, basis.shape[1])
    inner = random_density(basis.shape[1], rng, rank=rank).matrix
    return DensityOperator.from_matrix(basis @ inner @ basis.conj().T)


def pinching_dominance_stress(trials: int, seed: int, dims: Sequence[int] = (2, 3, 4, 5, 6),
                              max_workers: Optional[int] = None) -> StressReport:
    """Random (ρ, M), every third ρ pure, M rank one."""

    def run(trial: int):
        rng = rng_for(seed, f"inequalities/pinching_dominance/{trial}")
        dim = dims[trial % len(dims)]
        rho = random_density(dim, rng, rank=1 if trial % 3 == 0 else None)
        m = random_rank_one_pvm(dim, rng)
        value = check_pinching_dominance(rho, m)
        ok = value >= -config.DOMINANCE_TOL
        return value, ok, None if ok else _witness(trial, rho, m=m)

    return _report("pinching-dominance", trials, config.DOMINANCE_TOL, _run_trials(trials, run, max_workers))


def negative_power_stress(trials: int, seed: int, t_grid: Sequence[float] = (0.25, 0.5, 1.0),
                          dim: int = 3, max_workers: Optional[int] = None) -> StressReport:
    """Random faithful ρ (10% maximally mixed) on e = {I} or a two-block E, M a rank-one refinement."""

    def run(trial: int):
        rng = rng_for(seed, f"inequalities/negative_power/{trial}")
        e = Pvm.trivial(dim) if trial % 2 == 0 else random_block_pvm(dim, (dim - 1, 1), rng)
        rho = block_diagonal_density(e, rng, mix=config.NEG_POWER_MIX)
        m = random_refinement(e, rng)
        worst = min(check_pinched_negative_power(rho, e, m, t) for t in t_grid)
        ok = worst >= -config.NEG_POWER_TOL
        return worst, ok, None if ok else _witness(trial, rho, e=e, m=m)

    return _report("negative-power", trials, config.NEG_POWER_TOL, _run_trials(trials, run, max_workers))
