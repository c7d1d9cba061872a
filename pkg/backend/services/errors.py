"""Exception hierarchy.

Every error carries the module and operation that raised it; the string form
is ``[module.operation] message``. ``exit_code`` is what the CLI returns when
the error reaches the top level.
"""

from typing import Optional, Sequence


class SteinLabError(Exception):
    """Base class for all errors raised by the services."""

    exit_code = 3

    def __init__(self, module: str, operation: str, message: str):
        self.module = module
        self.operation = operation
        self.message = message
        super().__init__(f"[{module}.{operation}] {message}")


class ConfigError(SteinLabError):
    exit_code = 2

    def __init__(self, operation: str, message: str, fields: Sequence[str] = ()):
        self.fields = tuple(fields)
        super().__init__("cli", operation, message)


class DimensionCapError(SteinLabError):
    """A k^n-dimensional object would exceed the configured cap."""

    def __init__(self, module: str, operation: str, dim: int, cap: int):
        self.dim = dim
        self.cap = cap
        super().__init__(
            module, operation,
            f"dimension {dim} exceeds the dimension cap {cap} (set STEINLAB_DIM_CAP to raise it)",
        )


class DimensionMismatchError(SteinLabError):
    pass


class NotHermitianError(SteinLabError):
    pass


class InvalidStateError(SteinLabError):
    pass


class InvalidPvmError(SteinLabError):
    pass


class SingularStateError(SteinLabError):
    pass


class CommutativityError(SteinLabError):
    def __init__(self, module: str, operation: str, max_norm: float, tolerance: float):
        self.max_norm = max_norm
        self.tolerance = tolerance
        super().__init__(
            module, operation,
            f"inputs do not commute: max commutator norm {max_norm:.3e} > {tolerance:.1e}",
        )


class ClusteringAmbiguityError(SteinLabError):
    pass


class DecompositionInvalidError(SteinLabError):
    pass


class DegeneracyRiskError(SteinLabError):
    pass


class PreconditionError(SteinLabError):
    """A named hypothesis of the operation does not hold for the inputs."""

    def __init__(self, module: str, operation: str, message: str, hypothesis: Optional[str] = None):
        self.hypothesis = hypothesis
        super().__init__(module, operation, message)


class CutoffError(SteinLabError):
    def __init__(self, module: str, operation: str, deficit: float, cutoff: int, suggested_cutoff: int):
        self.deficit = deficit
        self.cutoff = cutoff
        self.suggested_cutoff = suggested_cutoff
        super().__init__(
            module, operation,
            f"trace deficit {deficit:.3e} at cutoff {cutoff}; try cutoff >= {suggested_cutoff}",
        )


class ComputationError(SteinLabError):
    pass


class AcceptanceFailure(SteinLabError):
    exit_code = 4

    def __init__(self, failed: Sequence[str]):
        self.failed = tuple(failed)
        super().__init__("acceptance", "selftest", f"failed checks: {', '.join(self.failed)}")
