"""Dense Hermitian operator algebra.

States, projection-valued measures, spectral decompositions, matrix
functions, the pinching map and the divergences built on them. Natural
logarithms throughout. All values are immutable after construction.

PVMs are stored in factored form: one orthonormal basis per element, so a
rank-one measurement on a 1024-dimensional space costs one unitary instead of
1024 dense projectors.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import xlogy

from backend.config import config
from backend.config.settings import settings
from backend.services.errors import (
    CommutativityError,
    ComputationError,
    DimensionCapError,
    DimensionMismatchError,
    InvalidPvmError,
    InvalidStateError,
    NotHermitianError,
    PreconditionError,
    SingularStateError,
)

logger = logging.getLogger(__name__)

MODULE = "operator_algebra"


def _max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense complex self-adjoint matrix.

    The input is checked against its conjugate transpose (max-abs entrywise,
    scaled by the largest entry when that exceeds one) and stored
    symmetrized and read-only.
    """

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimensionMismatchError(
                MODULE, "HermitianOperator", f"expected a non-empty square matrix, got shape {m.shape}"
            )
        deviation = _max_abs(m - m.conj().T)
        if deviation > config.HERMITIAN_TOL * max(1.0, _max_abs(m)):
            raise NotHermitianError(MODULE, "HermitianOperator", f"max |X - X^H| = {deviation:.3e}")
        m = (m + m.conj().T) / 2
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def identity(cls, dim: int) -> "HermitianOperator":
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, values: Sequence[float]) -> "HermitianOperator":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def projector_onto(cls, basis: np.ndarray) -> "HermitianOperator":
        basis = np.asarray(basis, dtype=complex).reshape(basis.shape[0], -1)
        return cls(basis @ basis.conj().T)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def norm(self) -> float:
        """Operator norm."""
        return float(np.linalg.norm(self.entries, 2))

    def expectation(self, other: "HermitianOperator") -> float:
        """Tr(self · other) for Hermitian other."""
        return float(np.real(np.sum(self.entries * other.entries.T)))

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.entries + other.entries)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.entries - other.entries)

    def __mul__(self, scalar: float) -> "HermitianOperator":
        return HermitianOperator(self.entries * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive semidefinite, unit-trace operator."""

    op: HermitianOperator

    def __post_init__(self):
        if not isinstance(self.op, HermitianOperator):
            object.__setattr__(self, "op", HermitianOperator(self.op))
        trace = self.op.trace()
        if abs(trace - 1.0) > config.TRACE_TOL:
            raise InvalidStateError(MODULE, "DensityOperator", f"trace {trace!r} differs from 1")
        smallest = float(self.op.eigvalsh()[0])
        if smallest < -config.PSD_TOL:
            raise InvalidStateError(MODULE, "DensityOperator", f"negative eigenvalue {smallest:.3e}")

    @classmethod
    def trusted(cls, op: HermitianOperator) -> "DensityOperator":
        """Wrap an operator already known to be a state (tensor powers, pinchings)."""
        state = object.__new__(cls)
        object.__setattr__(state, "op", op)
        return state

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "DensityOperator":
        return cls(HermitianOperator(matrix))

    @classmethod
    def diagonal(cls, probabilities: Sequence[float]) -> "DensityOperator":
        return cls(HermitianOperator.diagonal(probabilities))

    @classmethod
    def pure(cls, vector: Sequence[complex]) -> "DensityOperator":
        v = np.asarray(vector, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(HermitianOperator(np.outer(v, v.conj())))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(HermitianOperator(np.eye(dim) / dim))

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def matrix(self) -> np.ndarray:
        return self.op.entries


@dataclass(frozen=True, eq=False)
class Pvm:
    """Projection-valued measure stored as one orthonormal basis per element.

    The stacked bases must form a unitary; that single check covers
    idempotence, pairwise orthogonality and completeness of the projectors.
    """

    dim: int
    bases: Tuple[np.ndarray, ...]
    labels: Tuple[Hashable, ...] = ()

    def __post_init__(self):
        bases = []
        for b in self.bases:
            arr = np.array(b, dtype=complex)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2 or arr.shape[0] != self.dim or arr.shape[1] == 0:
                raise InvalidPvmError(MODULE, "Pvm", f"element basis of shape {arr.shape} on dim {self.dim}")
            arr.setflags(write=False)
            bases.append(arr)
        if not bases:
            raise InvalidPvmError(MODULE, "Pvm", "a PVM needs at least one element")
        labels = tuple(self.labels) if self.labels else tuple(range(len(bases)))
        if len(labels) != len(bases):
            raise InvalidPvmError(MODULE, "Pvm", f"{len(labels)} labels for {len(bases)} elements")
        stacked = np.hstack(bases)
        if stacked.shape[1] != self.dim:
            raise InvalidPvmError(MODULE, "Pvm", f"element ranks sum to {stacked.shape[1]}, expected {self.dim}")
        deviation = _max_abs(stacked.conj().T @ stacked - np.eye(self.dim))
        if deviation > config.PROJECTOR_TOL:
            raise InvalidPvmError(MODULE, "Pvm", f"elements are not orthogonal projectors (deviation {deviation:.3e})")
        stacked.setflags(write=False)
        object.__setattr__(self, "bases", tuple(bases))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_stacked", stacked)

    @classmethod
    def trivial(cls, dim: int) -> "Pvm":
        return cls(dim, (np.eye(dim),))

    @classmethod
    def computational(cls, dim: int) -> "Pvm":
        return cls.from_unitary(np.eye(dim))

    @classmethod
    def from_unitary(cls, unitary: np.ndarray, labels: Sequence[Hashable] = ()) -> "Pvm":
        """Rank-one PVM onto the columns of a unitary."""
        unitary = np.asarray(unitary, dtype=complex)
        return cls(unitary.shape[0], tuple(unitary[:, i] for i in range(unitary.shape[1])), tuple(labels))

    @classmethod
    def from_projectors(cls, projectors: Sequence[Union[HermitianOperator, np.ndarray]],
                        labels: Sequence[Hashable] = ()) -> "Pvm":
        bases = []
        dim = None
        for p in projectors:
            m = p.entries if isinstance(p, HermitianOperator) else np.asarray(p, dtype=complex)
            dim = m.shape[0]
            if _max_abs(m @ m - m) > config.PROJECTOR_TOL:
                raise InvalidPvmError(MODULE, "Pvm.from_projectors", "element is not idempotent")
            w, v = np.linalg.eigh((m + m.conj().T) / 2)
            bases.append(v[:, w > 0.5])
        return cls(dim, tuple(bases), tuple(labels))

    def __len__(self) -> int:
        return len(self.bases)

    @property
    def unitary(self) -> np.ndarray:
        """All element bases side by side (columns grouped by element)."""
        return self._stacked

    @property
    def ranks(self) -> Tuple[int, ...]:
        return tuple(b.shape[1] for b in self.bases)

    @property
    def width(self) -> int:
        """w(E): the largest element rank."""
        return max(self.ranks)

    @property
    def is_rank_one(self) -> bool:
        return self.width == 1

    def element_index(self) -> np.ndarray:
        """Element index of every column of ``unitary``."""
        return np.repeat(np.arange(len(self.bases)), self.ranks)

    def projector(self, i: int) -> HermitianOperator:
        return HermitianOperator.projector_onto(self.bases[i])

    @property
    def elements(self) -> List[HermitianOperator]:
        return [self.projector(i) for i in range(len(self.bases))]


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: Tuple[float, ...]
    eigenprojectors: Pvm

    def reconstruct(self) -> np.ndarray:
        out = np.zeros((self.eigenprojectors.dim,) * 2, dtype=complex)
        for value, basis in zip(self.eigenvalues, self.eigenprojectors.bases):
            out += value * (basis @ basis.conj().T)
        return out


@dataclass(frozen=True, eq=False)
class TestOperator:
    """Quantum test: 0 <= A <= I."""

    __test__ = False  # not a pytest class

    op: HermitianOperator

    def __post_init__(self):
        if not isinstance(self.op, HermitianOperator):
            object.__setattr__(self, "op", HermitianOperator(self.op))
        w = self.op.eigvalsh()
        if w[0] < -config.TEST_OPERATOR_TOL or w[-1] > 1 + config.TEST_OPERATOR_TOL:
            raise InvalidStateError(
                MODULE, "TestOperator", f"eigenvalues span [{w[0]:.3e}, {w[-1]:.3e}], outside [0, 1]"
            )

    @property
    def dim(self) -> int:
        return self.op.dim


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    probabilities: np.ndarray
    labels: Tuple[Hashable, ...] = ()

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        if p.min() < -config.PROB_CLIP or p.max() > 1 + config.PROB_SUM_TOL:
            raise ComputationError(MODULE, "OutcomeDistribution", f"probabilities outside [0, 1]: [{p.min()}, {p.max()}]")
        total = float(p.sum())
        if abs(total - 1.0) > config.PROB_SUM_TOL:
            raise ComputationError(MODULE, "OutcomeDistribution", f"probabilities sum to {total!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "labels", tuple(self.labels) if self.labels else tuple(range(len(p))))


OperatorLike = Union[HermitianOperator, DensityOperator]


def _entries(x: OperatorLike) -> np.ndarray:
    return x.matrix if isinstance(x, DensityOperator) else x.entries


def _require_same_dim(operation: str, *dims: int) -> None:
    if len(set(dims)) != 1:
        raise DimensionMismatchError(MODULE, operation, f"dimensions differ: {dims}")


def _eigh(m: np.ndarray, operation: str) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise ComputationError(MODULE, operation, f"eigensolver failed: {exc}") from exc


def apply_function(x: OperatorLike, fn: Callable[[np.ndarray], np.ndarray]) -> HermitianOperator:
    """Functional calculus f(x) on the eigenvalues of x."""
    w, v = _eigh(_entries(x), "apply_function")
    return HermitianOperator((v * fn(w)) @ v.conj().T)


# ============================================================================
# TENSOR POWERS AND SPECTRA
# ============================================================================

def kron_power(m: np.ndarray, n: int) -> np.ndarray:
    return reduce(np.kron, [m] * n)


def check_dimension_cap(module: str, operation: str, dim: int, cap: Optional[int] = None) -> int:
    cap = settings.active_dim_cap() if cap is None else cap
    if dim > cap:
        raise DimensionCapError(module, operation, dim, cap)
    return dim


def tensor_power(s: DensityOperator, n: int, cap: Optional[int] = None) -> DensityOperator:
    """s^{⊗n}, refused when dim^n exceeds the dimension cap."""
    if n < 1:
        raise PreconditionError(MODULE, "tensor_power", f"n must be positive, got {n}")
    check_dimension_cap(MODULE, "tensor_power", s.dim ** n, cap)
    if n == 1:
        return s
    return DensityOperator.trusted(HermitianOperator(kron_power(s.matrix, n)))


def spectral(x: OperatorLike, degeneracy_tol: Optional[float] = None) -> SpectralDecomposition:
    """Spectral PVM E(x); eigenvalues closer than tol * spectral range are merged."""
    tol = settings.degeneracy_tol if degeneracy_tol is None else degeneracy_tol
    if tol <= 0:
        raise PreconditionError(MODULE, "spectral", f"degeneracy_tol must be positive, got {tol}")
    m = _entries(x)
    w, v = _eigh(m, "spectral")
    w, v = w[::-1], v[:, ::-1]
    # a scalar operator has zero range; fall back to its magnitude
    scale = max(float(w[0] - w[-1]), float(np.abs(w).max()))
    threshold = tol * scale
    cuts = np.flatnonzero((w[:-1] - w[1:]) > threshold) + 1
    groups = np.split(np.arange(len(w)), cuts)

    eigenvalues = tuple(float(np.mean(w[g])) for g in groups)
    pvm = Pvm(len(w), tuple(v[:, g] for g in groups))
    decomposition = SpectralDecomposition(eigenvalues, pvm)

    error = float(np.linalg.norm(decomposition.reconstruct() - m, 2))
    if error > max(config.RECONSTRUCTION_TOL, tol) * max(1.0, scale):
        raise ComputationError(MODULE, "spectral", f"reconstruction error {error:.3e}")
    return decomposition


# ============================================================================
# MATRIX FUNCTIONS
# ============================================================================

def matrix_log(s: OperatorLike, restrict_support: bool = False,
               floor: Optional[float] = None) -> HermitianOperator:
    """Natural log by functional calculus.

    With ``restrict_support`` the log is taken on the support and set to 0 on
    the kernel; otherwise any eigenvalue at or below the floor is an error.
    """
    floor = settings.singular_floor if floor is None else floor
    w, v = _eigh(_entries(s), "matrix_log")
    support = w > floor
    if not restrict_support and not support.all():
        raise SingularStateError(
            MODULE, "matrix_log",
            f"smallest eigenvalue {w[0]:.3e} <= {floor:.1e}; pass restrict_support=True to work on the support",
        )
    logs = np.where(support, np.log(np.where(support, w, 1.0)), 0.0)
    return HermitianOperator((v * logs) @ v.conj().T)


def matrix_neg_power(s: OperatorLike, t: float, floor: Optional[float] = None) -> HermitianOperator:
    if not 0 < t <= 1:
        raise PreconditionError(MODULE, "matrix_neg_power", f"t must lie in (0, 1], got {t}")
    floor = settings.singular_floor if floor is None else floor
    w, v = _eigh(_entries(s), "matrix_neg_power")
    if w[0] <= floor:
        raise SingularStateError(MODULE, "matrix_neg_power", f"smallest eigenvalue {w[0]:.3e} <= {floor:.1e}")
    return HermitianOperator((v * w ** (-t)) @ v.conj().T)


def von_neumann_entropy(s: OperatorLike) -> float:
    """-Tr s log s with 0 log 0 = 0."""
    w = np.clip(np.linalg.eigvalsh(_entries(s)), 0.0, None)
    return float(-np.sum(xlogy(w, w)))


# ============================================================================
# PVM ALGEBRA
# ============================================================================

def pinch(e: Pvm, x: OperatorLike) -> HermitianOperator:
    """Σ_i E_i x E_i."""
    m = _entries(x)
    _require_same_dim("pinch", e.dim, m.shape[0])
    if e.is_rank_one:
        u = e.unitary
        diagonal = np.real(np.einsum("ji,jk,ki->i", u.conj(), m, u))
        return HermitianOperator((u * diagonal) @ u.conj().T)
    out = np.zeros_like(m, dtype=complex)
    for b in e.bases:
        out += b @ (b.conj().T @ m @ b) @ b.conj().T
    return HermitianOperator(out)


def pinch_state(e: Pvm, s: DensityOperator) -> DensityOperator:
    return DensityOperator.trusted(pinch(e, s))


def commutator_norm(a: OperatorLike, b: OperatorLike) -> float:
    x, y = _entries(a), _entries(b)
    return float(np.linalg.norm(x @ y - y @ x, 2))


def pvm_commutator_norm(e: Pvm, x: OperatorLike) -> float:
    """max_i ‖[E_i, x]‖, evaluated as ‖x V_i − V_i V_i^H x V_i‖."""
    m = _entries(x)
    _require_same_dim("pvm_commutator_norm", e.dim, m.shape[0])
    if e.is_rank_one:
        u = e.unitary
        image = m @ u
        residual = image - u * np.sum(u.conj() * image, axis=0)
        return float(np.linalg.norm(residual, axis=0).max())
    worst = 0.0
    for b in e.bases:
        image = m @ b
        residual = image - b @ (b.conj().T @ image)
        worst = max(worst, float(np.linalg.norm(residual, 2)))
    return worst


def refines(m: Pvm, e: Pvm, tol: float = config.REFINEMENT_TOL) -> bool:
    """True iff every E_i is a sum of elements of m (M >= E)."""
    _require_same_dim("refines", m.dim, e.dim)
    overlap = np.abs(e.unitary.conj().T @ m.unitary) ** 2
    # mass[i, j] = ‖V_i^H W_j‖_F^2
    row_mass = np.zeros((len(e), m.dim))
    np.add.at(row_mass, e.element_index(), overlap)
    mass = np.zeros((len(m), len(e)))
    np.add.at(mass, m.element_index(), row_mass.T)
    mass = mass.T
    home = np.argmax(mass, axis=0)
    stray = mass.copy()
    stray[home, np.arange(len(m))] = 0.0
    return bool(np.sqrt(stray.max(initial=0.0)) <= tol)


def pvm_product(f: Pvm, e: Pvm, tol: float = config.COMMUTATOR_TOL) -> Pvm:
    """F × E = {F_j E_i}, zero products dropped; labels are (f_label, e_label)."""
    _require_same_dim("pvm_product", f.dim, e.dim)
    bases, labels = [], []
    worst = 0.0
    for vf, lf in zip(f.bases, f.labels):
        for ve, le in zip(e.bases, e.labels):
            cross = vf.conj().T @ ve
            if _max_abs(cross) <= config.PROB_CLIP:
                continue
            image = ve @ cross.conj().T
            residual = image - vf @ (vf.conj().T @ image)
            worst = max(worst, float(np.linalg.norm(residual, 2)))
            w, u = np.linalg.eigh(cross @ cross.conj().T)
            keep = w > 0.5
            if keep.any():
                bases.append(vf @ u[:, keep])
                labels.append((lf, le))
    if worst > tol:
        raise CommutativityError(MODULE, "pvm_product", worst, tol)
    return Pvm(f.dim, tuple(bases), tuple(labels))


def measure(s: OperatorLike, m: Pvm) -> OutcomeDistribution:
    """P(i) = Tr M_i s; negatives above -1e-12 are clipped to 0."""
    rho = _entries(s)
    _require_same_dim("measure", rho.shape[0], m.dim)
    u = m.unitary
    per_column = np.real(np.sum(u.conj() * (rho @ u), axis=0))
    probabilities = np.zeros(len(m))
    np.add.at(probabilities, m.element_index(), per_column)
    if probabilities.min() < -config.PROB_CLIP:
        raise ComputationError(MODULE, "measure", f"negative outcome probability {probabilities.min():.3e}")
    return OutcomeDistribution(np.clip(probabilities, 0.0, None), m.labels)


def test_errors(a: TestOperator, r: DensityOperator, s: DensityOperator) -> Tuple[float, float]:
    """(alpha, beta) = (Tr r(I − a), Tr s a)."""
    _require_same_dim("test_errors", a.dim, r.dim, s.dim)
    alpha = 1.0 - r.op.expectation(a.op)
    beta = s.op.expectation(a.op)
    return float(alpha), float(beta)


test_errors.__test__ = False


# ============================================================================
# DIVERGENCES
# ============================================================================

def _log_on_support(s: DensityOperator, r: DensityOperator, operation: str,
                    restrict_support: bool, floor: Optional[float]) -> Optional[np.ndarray]:
    """log s on its support, or None when r puts weight on the kernel of s."""
    floor = settings.singular_floor if floor is None else floor
    w, v = _eigh(s.matrix, operation)
    support = w > floor
    if not support.all():
        kernel = v[:, ~support]
        leaked = float(np.real(np.trace(kernel.conj().T @ r.matrix @ kernel)))
        if leaked > config.SUPPORT_TOL:
            logger.warning("%s: support violation (mass %.3e outside supp(s)); divergence is infinite",
                           operation, leaked)
            return None
        if not restrict_support:
            raise SingularStateError(
                MODULE, operation,
                f"second argument is singular (smallest eigenvalue {w[0]:.3e}); pass restrict_support=True",
            )
    basis = v[:, support]
    return (basis * np.log(w[support])) @ basis.conj().T


def relative_entropy(r: DensityOperator, s: DensityOperator, restrict_support: bool = False,
                     floor: Optional[float] = None) -> float:
    """D(r‖s) = Tr r(log r − log s) in nats; math.inf on support violation."""
    _require_same_dim("relative_entropy", r.dim, s.dim)
    log_s = _log_on_support(s, r, "relative_entropy", restrict_support, floor)
    if log_s is None:
        return math.inf
    cross = float(np.real(np.sum(r.matrix * log_s.T)))
    return -von_neumann_entropy(r) - cross


def relative_log_variance(r: DensityOperator, s: DensityOperator, restrict_support: bool = False,
                          floor: Optional[float] = None) -> float:
    """Tr r(log s − Tr r log s)^2."""
    _require_same_dim("relative_log_variance", r.dim, s.dim)
    log_s = _log_on_support(s, r, "relative_log_variance", restrict_support, floor)
    if log_s is None:
        return math.inf
    center = float(np.real(np.sum(r.matrix * log_s.T)))
    shifted = log_s - center * np.eye(r.dim)
    return max(0.0, float(np.real(np.sum(r.matrix * (shifted @ shifted).T))))


def relative_entropy_variance(r: DensityOperator, s: DensityOperator, restrict_support: bool = False,
                              floor: Optional[float] = None) -> float:
    """V(r‖s) = Tr r(log r − log s − D)^2, the second-order constant of Stein's exponent."""
    _require_same_dim("relative_entropy_variance", r.dim, s.dim)
    log_s = _log_on_support(s, r, "relative_entropy_variance", restrict_support, floor)
    if log_s is None:
        return math.inf
    x = matrix_log(r, restrict_support=True, floor=floor).entries - log_s
    second = float(np.real(np.sum(r.matrix * (x @ x).T)))
    first = float(np.real(np.sum(r.matrix * x.T)))
    return max(0.0, second - first ** 2)
