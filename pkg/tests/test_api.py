import math

import pytest
from fastapi.testclient import TestClient

from backend.app import app
from backend.config import config

HALF = {"dim": 2, "re": [[0.5, 0.0], [0.0, 0.5]]}
QUARTER = {"dim": 2, "re": [[0.25, 0.0], [0.0, 0.75]]}


@pytest.fixture
def client():
    return TestClient(app)


class TestStatus:
    def test_root(self, client):
        body = client.get("/").json()
        assert body["version"] == config.VERSION
        assert "exponent" in body["experiments"]

    def test_health(self, client):
        assert client.get("/health").json() == {"status": "healthy"}

    def test_status(self, client):
        body = client.get("/status").json()
        assert body["settings"]["dim_cap"] > 0
        assert body["backend_url"].startswith("http://")


class TestDivergence:
    def test_finite(self, client):
        body = client.post("/quantities/divergence", json={"rho": HALF, "sigma": QUARTER}).json()
        assert body["finite"] is True
        assert body["relative_entropy"] == pytest.approx(0.5 * math.log(4 / 3))
        assert body["relative_entropy_variance"] >= 0

    def test_support_violation(self, client):
        pure0 = {"dim": 2, "re": [[1.0, 0.0], [0.0, 0.0]]}
        pure1 = {"dim": 2, "re": [[0.0, 0.0], [0.0, 1.0]]}
        body = client.post("/quantities/divergence", json={"rho": pure0, "sigma": pure1}).json()
        assert body == {"relative_entropy": None, "relative_entropy_variance": None, "finite": False}

    def test_invalid_state(self, client):
        bad = {"dim": 2, "re": [[1.5, 0.0], [0.0, -0.5]]}
        assert client.post("/quantities/divergence", json={"rho": bad, "sigma": HALF}).status_code == 422


class TestExperiments:
    def test_plog2(self, client, output_dir):
        response = client.post("/experiments/run", json={"experiment": "ineq", "check": "plog2"})
        assert response.status_code == 200
        body = response.json()
        assert body["passed"] is True
        assert any(path.endswith("ineq.json") for path in body["artifacts"])
        assert (output_dir / "ineq.json").exists()

    def test_invalid_config(self, client, output_dir):
        assert client.post("/experiments/run", json={"experiment": "ineq", "epsilon": 1.5}).status_code == 422

    def test_dimension_cap(self, client, output_dir):
        response = client.post("/experiments/run", json={"experiment": "schur", "n": 6, "k": 2, "dim_cap": 32})
        assert response.status_code == 400
        assert "dimension cap" in response.json()["detail"]
