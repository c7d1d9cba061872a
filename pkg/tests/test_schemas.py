import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from backend.models.schemas import ExperimentConfig, MatrixPayload
from backend.services.errors import ConfigError
from backend.services.experiment_service import parse_config
from backend.services.file_handler import load_density

HALF = {"dim": 2, "re": [[0.5, 0.0], [0.0, 0.5]]}


class TestMatrixPayload:
    def test_array_conversion(self):
        m = np.array([[0.5, 0.1j], [-0.1j, 0.5]])
        payload = MatrixPayload.from_array(m)
        assert payload.dim == 2
        assert_allclose(payload.to_array(), m)

    def test_real_only(self):
        assert MatrixPayload.model_validate(HALF).to_array().dtype == complex

    @pytest.mark.parametrize("raw", [
        {"dim": 2, "re": [[1.0, 0.0]]},
        {"dim": 2, "re": [[1.0, 0.0], [0.0]]},
        {"dim": 2, "re": [[1.0, 0.0], [0.0, 0.0]], "im": [[0.0]]},
        {"dim": 0, "re": []},
    ])
    def test_shape_is_checked(self, raw):
        with pytest.raises(ValidationError):
            MatrixPayload.model_validate(raw)


class TestExperimentConfig:
    def test_defaults(self):
        cfg = parse_config({"experiment": "ineq"})
        assert cfg.seed == 0
        assert cfg.check == "pinching-log"
        assert cfg.epsilon == 0.05

    def test_states_may_be_paths(self):
        cfg = parse_config({"experiment": "exponent", "rho": "rho.json", "sigma": HALF, "n_max": 4})
        assert cfg.rho == "rho.json"
        assert isinstance(cfg.sigma, MatrixPayload)

    @pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.2])
    def test_epsilon_range(self, epsilon):
        with pytest.raises(ConfigError) as info:
            parse_config({"experiment": "ineq", "epsilon": epsilon})
        assert info.value.fields == ("epsilon",)

    @pytest.mark.parametrize("n_range", [[], [3, 2], [0, 1], [2, 2]])
    def test_n_range_must_ascend(self, n_range):
        with pytest.raises(ConfigError) as info:
            parse_config({"experiment": "gaussian", "n_range": n_range})
        assert info.value.fields == ("n_range",)

    def test_unknown_field(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"experiment": "ineq", "bogus": 1})
        assert info.value.fields == ("bogus",)

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"experiment": "tomography"})
        assert info.value.exit_code == 2

    @pytest.mark.parametrize("raw", [
        {"experiment": "exponent", "rho": HALF, "n_max": 4},
        {"experiment": "exponent", "rho": HALF, "sigma": HALF},
        {"experiment": "design", "rho": HALF, "sigma": HALF},
        {"experiment": "schur", "n": 3},
        {"experiment": "ispec"},
        {"experiment": "gaussian"},
    ])
    def test_experiment_requirements(self, raw):
        with pytest.raises(ConfigError) as info:
            parse_config(raw)
        assert info.value.fields == ("<root>",)

    def test_resolved_n_range(self):
        assert parse_config({"experiment": "exponent", "rho": HALF, "sigma": HALF, "n_max": 5}) \
            .resolved_n_range() == [2, 3, 4, 5]
        assert parse_config({"experiment": "gaussian", "n_max": 35}).resolved_n_range() == [10, 20, 30]
        assert parse_config({"experiment": "gaussian", "n_range": [4, 8], "n_max": 50}).resolved_n_range() == [4, 8]

    @pytest.mark.parametrize("raw", [
        {"experiment": "exponent", "rho": HALF, "sigma": HALF, "n_max": 2},
        {"experiment": "exponent", "rho": HALF, "sigma": HALF, "n_max": 1},
        {"experiment": "exponent", "rho": HALF, "sigma": HALF, "n_range": [4]},
        {"experiment": "gaussian", "n_max": 5},
        {"experiment": "gaussian", "n_max": 15},
        {"experiment": "gaussian", "n_range": [30]},
    ])
    def test_sweep_needs_two_points(self, raw):
        with pytest.raises(ConfigError) as info:
            parse_config(raw)
        assert info.value.fields == ("<root>",)
        assert info.value.exit_code == 2

    def test_short_gaussian_grid_points_to_n_range(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"experiment": "gaussian", "n_max": 5})
        assert "n_max >= 20" in str(info.value)
        assert "n_range" in str(info.value)

    def test_hash_ignores_output_locations(self):
        a = ExperimentConfig(experiment="schur", n=3, k=2, out_dir="x", json_lines=True)
        b = ExperimentConfig(experiment="schur", n=3, k=2, out="y.json")
        assert a.hashed_fields() == b.hashed_fields()
        assert "out_dir" not in a.hashed_fields()


@pytest.mark.parametrize("path", sorted((Path(__file__).parent.parent / "configs").glob("*_example.json")),
                         ids=lambda p: p.stem)
def test_example_configs_validate(path):
    parse_config(json.loads(path.read_text()))


@pytest.mark.parametrize("path", sorted((Path(__file__).parent.parent / "configs" / "states").glob("*.json")),
                         ids=lambda p: p.stem)
def test_example_states_load(path):
    assert load_density(path).dim == 2
