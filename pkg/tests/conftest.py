import numpy as np
import pytest

from backend.config.settings import settings
from backend.services.operator_algebra import DensityOperator
from backend.services.random_states import rng_for, rotated_diagonal


@pytest.fixture
def rng():
    return rng_for(0, "tests")


@pytest.fixture
def commuting_qubits():
    return DensityOperator.diagonal([0.9, 0.1]), DensityOperator.diagonal([0.2, 0.8])


@pytest.fixture
def rotated_qubits():
    """Non-commuting faithful pair: diag(0.3, 0.7) rotated by 0.5 rad against diag(0.25, 0.75)."""
    return rotated_diagonal((0.3, 0.7), 0.5), DensityOperator.diagonal([0.25, 0.75])


@pytest.fixture
def plus_state():
    return DensityOperator.pure(np.array([1.0, 1.0]) / np.sqrt(2))


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Artifacts land in a temporary directory; the dimension cap is restored afterwards."""
    monkeypatch.setattr(settings, "output_dir", str(tmp_path / "results"))
    monkeypatch.setattr(settings, "witness_dir", None)
    monkeypatch.setattr(settings, "dim_cap", settings.dim_cap)
    return tmp_path / "results"
