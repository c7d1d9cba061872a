import os
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator, Optional
from dotenv import load_dotenv

load_dotenv()

_dim_cap_override: ContextVar[Optional[int]] = ContextVar("dim_cap_override", default=None)


class Settings:
    """Runtime settings read from the environment (and a local .env file)."""

    def __init__(self):
        self.dim_cap: int = int(os.getenv("STEINLAB_DIM_CAP", "4096"))
        self.degeneracy_tol: float = float(os.getenv("STEINLAB_DEGENERACY_TOL", "1e-8"))
        self.singular_floor: float = float(os.getenv("STEINLAB_SINGULAR_FLOOR", "1e-14"))
        self.max_workers: int = int(os.getenv("STEINLAB_MAX_WORKERS", "4"))
        self.log_level: str = os.getenv("STEINLAB_LOG_LEVEL", "WARNING").upper()
        self.output_dir: str = os.getenv("STEINLAB_OUTPUT_DIR", "results")
        self.backend_host: str = os.getenv("BACKEND_HOST", "127.0.0.1")
        self.backend_port: int = int(os.getenv("BACKEND_PORT", "8000"))
        self.witness_dir: Optional[str] = os.getenv("STEINLAB_WITNESS_DIR")

    def active_dim_cap(self) -> int:
        override = _dim_cap_override.get()
        return self.dim_cap if override is None else override

    @contextmanager
    def dim_cap_scope(self, cap: Optional[int]) -> Iterator[None]:
        """Dimension cap for the current context only; None keeps the configured one."""
        token = _dim_cap_override.set(cap)
        try:
            yield
        finally:
            _dim_cap_override.reset(token)

    def reload(self) -> None:
        """Re-read the environment; used after the CLI adjusts variables."""
        self.__init__()

    def summary(self) -> dict:
        return {
            "dim_cap": self.dim_cap,
            "degeneracy_tol": self.degeneracy_tol,
            "singular_floor": self.singular_floor,
            "max_workers": self.max_workers,
            "log_level": self.log_level,
            "output_dir": self.output_dir,
        }


settings = Settings()
