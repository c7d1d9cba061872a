"""Irreducible decomposition of (C^k)^{⊗n} under the tensor action of SL(k).

The decomposition is read off the joint spectrum of the Jucys–Murphy
elements X_m = Σ_{i<m} (i m): a generic real combination of them has one
eigenspace per standard Young tableau, and each such eigenspace is an
irreducible subspace for g ↦ g^{⊗n}. The subspaces are not unique, so
callers must only rely on properties (ranks, commutation, invariance).
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from backend.config import config
from backend.services.errors import (
    ClusteringAmbiguityError,
    DecompositionInvalidError,
    DegeneracyRiskError,
    PreconditionError,
)
from backend.services.operator_algebra import (
    DensityOperator,
    HermitianOperator,
    Pvm,
    check_dimension_cap,
    kron_power,
    pvm_commutator_norm,
    tensor_power,
)
from backend.services.parallel import parallel_map
from backend.services.random_states import random_density, random_invertible, rng_for

logger = logging.getLogger(__name__)

MODULE = "schur_weyl"

ContentVector = Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class IrreducibleDecomposition:
    n: int
    k: int
    blocks: Pvm
    block_dims: Tuple[int, ...]
    cluster_values: Tuple[float, ...]
    seed: int
    attempts: int

    @property
    def labels(self) -> Tuple[ContentVector, ...]:
        return self.blocks.labels

    @property
    def w(self) -> int:
        return max(self.block_dims)

    @property
    def bound(self) -> int:
        return (self.n + 1) ** (self.k - 1)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "block_dims": list(self.block_dims),
            "w": self.w,
            "bound": self.bound,
        }


# ============================================================================
# PERMUTATION OPERATORS
# ============================================================================

@lru_cache(maxsize=256)
def _swap_permutation(n: int, k: int, i: int, j: int) -> np.ndarray:
    """Basis index map of the transposition (i j); an involution."""
    index = np.arange(k ** n).reshape((k,) * n)
    perm = np.swapaxes(index, i, j).reshape(-1)
    perm.setflags(write=False)
    return perm


def _check_sites(operation: str, n: int, k: int) -> None:
    if n < 1 or k < 1:
        raise PreconditionError(MODULE, operation, f"need n >= 1 and k >= 1, got n={n}, k={k}")
    check_dimension_cap(MODULE, operation, k ** n)


def swap_unitary(n: int, k: int, i: int, j: int) -> HermitianOperator:
    """Permutation operator exchanging tensor factors i and j of (C^k)^{⊗n}."""
    _check_sites("swap_unitary", n, k)
    if not 0 <= i < j < n:
        raise PreconditionError(MODULE, "swap_unitary", f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    perm = _swap_permutation(n, k, i, j)
    dim = k ** n
    m = np.zeros((dim, dim))
    m[perm, np.arange(dim)] = 1.0
    return HermitianOperator(m)


def _jucys_murphy_permutations(n: int, k: int, m: int) -> List[np.ndarray]:
    """Transpositions (i, m-1), i < m-1, whose sum is the m-th Jucys–Murphy element (1-based m)."""
    return [_swap_permutation(n, k, i, m - 1) for i in range(m - 1)]


def _apply_jucys_murphy(n: int, k: int, m: int, v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    for perm in _jucys_murphy_permutations(n, k, m):
        out += v[perm]
    return out


def commutant_generic_element(n: int, k: int, coefficients: Sequence[float]) -> HermitianOperator:
    """A = Σ_{m=2..n} c_m X_m.

    A is real symmetric and commutes with every g^{⊗n}.
    """
    _check_sites("commutant_generic_element", n, k)
    coefficients = [float(c) for c in coefficients]
    if len(coefficients) != n - 1:
        raise PreconditionError(
            MODULE, "commutant_generic_element", f"need {n - 1} coefficients, got {len(coefficients)}"
        )
    if any(c == 0.0 for c in coefficients):
        raise DegeneracyRiskError(MODULE, "commutant_generic_element", "coefficients must be nonzero")
    if len(set(coefficients)) != len(coefficients):
        raise DegeneracyRiskError(MODULE, "commutant_generic_element", "coefficients must be pairwise distinct")

    dim = k ** n
    a = np.zeros((dim, dim))
    columns = np.arange(dim)
    for m, c in zip(range(2, n + 1), coefficients):
        for perm in _jucys_murphy_permutations(n, k, m):
            a[perm, columns] += c
    return HermitianOperator(a)


# ============================================================================
# DECOMPOSITION
# ============================================================================

def _draw_coefficients(n: int, seed: int, attempt: int) -> np.ndarray:
    rng = rng_for(seed, f"schur_weyl/coefficients/{attempt}")
    return np.exp(rng.uniform(0.0, math.log(2.0), size=n - 1))


def _content_vector(n: int, k: int, basis: np.ndarray) -> Optional[ContentVector]:
    """Integer eigenvalues of X_2..X_n on the span of ``basis``, or None if it is not a joint eigenspace."""
    contents = []
    for m in range(2, n + 1):
        restricted = basis.conj().T @ _apply_jucys_murphy(n, k, m, basis)
        value = float(np.real(np.trace(restricted))) / basis.shape[1]
        if abs(value - round(value)) > config.CONTENT_TOL:
            return None
        if np.max(np.abs(restricted - value * np.eye(basis.shape[1]))) > config.CONTENT_TOL:
            return None
        contents.append(int(round(value)))
    return tuple(contents)


def _cluster(eigenvalues: np.ndarray) -> Tuple[List[np.ndarray], bool]:
    """Split an ascending spectrum at gaps above the relative threshold.

    Returns the index groups and whether some gap sits between the noise
    floor and the threshold.
    """
    spread = float(eigenvalues[-1] - eigenvalues[0])
    if spread == 0.0:
        return [np.arange(len(eigenvalues))], False
    gaps = np.diff(eigenvalues)
    split = gaps > config.CLUSTER_REL_GAP * spread
    ambiguous = bool(np.any((gaps > config.CLUSTER_NOISE_REL * spread) & ~split))
    return np.split(np.arange(len(eigenvalues)), np.flatnonzero(split) + 1), ambiguous


def _attempt(n: int, k: int, seed: int, attempt: int):
    coefficients = _draw_coefficients(n, seed, attempt)
    a = commutant_generic_element(n, k, coefficients)
    w, v = np.linalg.eigh(a.entries)
    groups, ambiguous = _cluster(w)
    if ambiguous:
        return None, "eigenvalue gap between noise floor and clustering threshold"

    blocks = []
    for g in groups:
        basis = v[:, g]
        label = _content_vector(n, k, basis)
        if label is None:
            return None, "cluster is not a joint Jucys–Murphy eigenspace"
        blocks.append((label, basis, float(np.mean(w[g]))))
    if len({label for label, _, _ in blocks}) != len(blocks):
        return None, "two clusters share a content vector"
    blocks.sort(key=lambda item: item[0])
    return (a, blocks), None


def irreducible_decomposition(n: int, k: int, seed: int) -> IrreducibleDecomposition:
    """
    Build E^n and verify it.

    LOGIC:
    1. Draw log-uniform coefficients in [1, 2] from the seed
    2. Diagonalize the generic Jucys–Murphy combination and split at spectral gaps
    3. Label every cluster by its content vector; retry on any ambiguity
    4. Check the width bound, commutation with tensor-power states and
       invariance under g^{⊗n}

    Args:
        n: number of tensor factors
        k: local dimension
        seed: master seed

    Returns:
        IrreducibleDecomposition with blocks sorted by content vector
    """
    _check_sites("irreducible_decomposition", n, k)
    dim = k ** n
    if n == 1:
        pvm = Pvm(dim, (np.eye(dim),), ((),))
        return IrreducibleDecomposition(1, k, pvm, (dim,), (0.0,), seed, 0)

    result, reason = None, None
    for attempt in range(config.MAX_DECOMPOSITION_RETRIES):
        result, reason = _attempt(n, k, seed, attempt)
        if result is not None:
            break
        logger.warning("irreducible_decomposition n=%d k=%d attempt %d rejected: %s", n, k, attempt, reason)
    if result is None:
        raise ClusteringAmbiguityError(
            MODULE, "irreducible_decomposition",
            f"no unambiguous clustering after {config.MAX_DECOMPOSITION_RETRIES} attempts ({reason})",
        )

    a, blocks = result
    pvm = Pvm(dim, tuple(b for _, b, _ in blocks), tuple(label for label, _, _ in blocks))
    decomposition = IrreducibleDecomposition(
        n=n,
        k=k,
        blocks=pvm,
        block_dims=pvm.ranks,
        cluster_values=tuple(value for _, _, value in blocks),
        seed=seed,
        attempts=attempt + 1,
    )
    _verify(decomposition, a)
    logger.info("irreducible_decomposition n=%d k=%d: %d blocks, w=%d", n, k, len(pvm), decomposition.w)
    return decomposition


def _verify(d: IrreducibleDecomposition, a: HermitianOperator) -> None:
    operation = "irreducible_decomposition"
    if d.w > d.bound:
        raise DecompositionInvalidError(MODULE, operation, f"w = {d.w} exceeds (n+1)^(k-1) = {d.bound}")

    scale = max(1.0, float(np.max(np.abs(d.cluster_values))))
    for basis, value in zip(d.blocks.bases, d.cluster_values):
        restricted = basis.conj().T @ a.entries @ basis
        if np.max(np.abs(restricted - value * np.eye(basis.shape[1]))) > config.BLOCK_COMMUTATOR_TOL * scale:
            raise DecompositionInvalidError(MODULE, operation, "block is not an eigenspace of the generic element")

    rng = rng_for(d.seed, "schur_weyl/postcondition")
    for _ in range(5):
        rho_n = tensor_power(random_density(d.k, rng), d.n)
        norm = pvm_commutator_norm(d.blocks, rho_n)
        if norm > config.BLOCK_COMMUTATOR_TOL:
            raise DecompositionInvalidError(MODULE, operation, f"block commutator with rho^n is {norm:.3e}")

    for _ in range(3):
        g = random_invertible(d.k, rng)
        g_n = kron_power(g, d.n)
        scale = np.linalg.norm(g, 2) ** d.n
        for basis in d.blocks.bases:
            image = g_n @ basis
            residual = image - basis @ (basis.conj().T @ image)
            if np.linalg.norm(residual, 2) > config.INVARIANCE_TOL * scale:
                raise DecompositionInvalidError(MODULE, operation, "block is not invariant under g^n")


# ============================================================================
# ORACLES AND CHECKS
# ============================================================================

def repeated_combination(k: int, n: int) -> int:
    """C(n+k-1, k-1), the dimension of the symmetric subspace."""
    if k < 1 or n < 0:
        raise PreconditionError(MODULE, "repeated_combination", f"need k >= 1 and n >= 0, got k={k}, n={n}")
    return math.comb(n + k - 1, k - 1)


def coupled_spin_dims(n: int) -> List[int]:
    """Irreducible dimensions of n coupled spin-1/2 sites, largest first.

    Adds one site at a time: spin j couples to j ± 1/2.
    """
    if n < 1:
        raise PreconditionError(MODULE, "coupled_spin_dims", f"n must be positive, got {n}")
    twice_j = Counter({1: 1})
    for _ in range(n - 1):
        coupled: Counter = Counter()
        for j2, multiplicity in twice_j.items():
            coupled[j2 + 1] += multiplicity
            if j2 > 0:
                coupled[j2 - 1] += multiplicity
        twice_j = coupled
    dims = []
    for j2 in sorted(twice_j, reverse=True):
        dims.extend([j2 + 1] * twice_j[j2])
    return dims


def commutator_with_state(d: IrreducibleDecomposition, rho: DensityOperator) -> float:
    """max over blocks of ‖[P, rho^{⊗n}]‖."""
    return pvm_commutator_norm(d.blocks, tensor_power(rho, d.n))


def verify_block_commutativity(d: IrreducibleDecomposition, trials: int, seed: int,
                               max_workers: Optional[int] = None) -> float:
    """Max block commutator against random tensor-power states of varying rank."""
    if trials < 1:
        raise PreconditionError(MODULE, "verify_block_commutativity", f"trials must be positive, got {trials}")

    def run_trial(t: int) -> float:
        rng = rng_for(seed, f"schur_weyl/trial/{t}")
        rank = 1 + t % d.k
        return commutator_with_state(d, random_density(d.k, rng, rank=rank))

    norms = parallel_map(run_trial, range(trials), max_workers)
    worst = max(norms)
    logger.debug("verify_block_commutativity n=%d k=%d trials=%d: %.3e", d.n, d.k, trials, worst)
    return worst
