"""Seeded random instances: states, unitaries, PVMs and tests.

Every consumer draws from its own stream ``rng_for(seed, label)``; the label
is hashed together with the master seed, so adding a new consumer never
shifts the draws of an existing one.
"""

import hashlib
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import unitary_group

from backend.services.errors import InvalidPvmError
from backend.services.operator_algebra import (
    DensityOperator,
    HermitianOperator,
    Pvm,
    TestOperator,
)


def rng_for(seed: int, label: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(dim, random_state=rng)


def dirichlet_spectrum(dim: int, rng: np.random.Generator, rank: Optional[int] = None,
                       mix: float = 0.0) -> np.ndarray:
    """Dirichlet(1,…,1) probabilities on ``rank`` entries, optionally mixed with the uniform law."""
    rank = dim if rank is None else rank
    spectrum = np.zeros(dim)
    spectrum[:rank] = rng.dirichlet(np.ones(rank))
    return (1.0 - mix) * spectrum + mix / dim


def random_density(dim: int, rng: np.random.Generator, rank: Optional[int] = None,
                   mix: float = 0.0) -> DensityOperator:
    """Haar-rotated Dirichlet spectrum."""
    u = haar_unitary(dim, rng)
    spectrum = dirichlet_spectrum(dim, rng, rank=rank, mix=mix)
    m = (u * spectrum) @ u.conj().T
    return DensityOperator(HermitianOperator(m / np.trace(m).real))


def random_pure(dim: int, rng: np.random.Generator) -> DensityOperator:
    return random_density(dim, rng, rank=1)


def random_faithful(dim: int, rng: np.random.Generator, mix: float = 0.1) -> DensityOperator:
    return random_density(dim, rng, mix=mix)


def random_hermitian(dim: int, rng: np.random.Generator) -> HermitianOperator:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return HermitianOperator((g + g.conj().T) / 2)


def random_invertible(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian matrix rescaled to unit determinant modulus (an element of GL, generic)."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return g / abs(np.linalg.det(g)) ** (1.0 / dim)


def random_rank_one_pvm(dim: int, rng: np.random.Generator) -> Pvm:
    return Pvm.from_unitary(haar_unitary(dim, rng))


def random_block_pvm(dim: int, ranks: Sequence[int], rng: np.random.Generator) -> Pvm:
    """PVM with the given element ranks in a Haar-random basis."""
    if sum(ranks) != dim:
        raise InvalidPvmError("random_states", "random_block_pvm", f"ranks {list(ranks)} do not sum to {dim}")
    u = haar_unitary(dim, rng)
    edges = np.cumsum([0, *ranks])
    return Pvm(dim, tuple(u[:, a:b] for a, b in zip(edges[:-1], edges[1:])))


def random_refinement(e: Pvm, rng: np.random.Generator) -> Pvm:
    """Rank-one PVM refining ``e``: a Haar-random basis inside every element."""
    bases: List[np.ndarray] = []
    for b in e.bases:
        rotated = b @ haar_unitary(b.shape[1], rng)
        bases.extend(rotated[:, i] for i in range(rotated.shape[1]))
    return Pvm(e.dim, tuple(bases))


def block_diagonal_density(e: Pvm, rng: np.random.Generator, mix: float = 0.0) -> DensityOperator:
    """Random state commuting with every element of ``e``."""
    weights = rng.dirichlet(np.ones(len(e)))
    m = np.zeros((e.dim, e.dim), dtype=complex)
    for weight, b in zip(weights, e.bases):
        block = random_density(b.shape[1], rng, mix=mix).matrix
        m += weight * (b @ block @ b.conj().T)
    m = (1.0 - mix) * m + mix * np.eye(e.dim) / e.dim
    return DensityOperator(HermitianOperator(m / np.trace(m).real))


def random_test(dim: int, rng: np.random.Generator) -> TestOperator:
    """Haar-rotated operator with eigenvalues uniform in [0, 1]."""
    u = haar_unitary(dim, rng)
    return TestOperator(HermitianOperator((u * rng.random(dim)) @ u.conj().T))


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotated_diagonal(probabilities: Sequence[float], angle: float) -> DensityOperator:
    """R(angle) diag(p) R(angle)^T for a qubit."""
    r = rotation(angle)
    return DensityOperator(HermitianOperator(r @ np.diag(probabilities) @ r.T))
