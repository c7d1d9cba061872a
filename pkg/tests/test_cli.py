import json
from concurrent.futures import ThreadPoolExecutor

import pytest

from backend.config.settings import settings
from backend.main import build_config, build_parser, main
from backend.models.schemas import MatrixPayload
from backend.services.errors import DimensionCapError
from backend.services.experiment_service import experiment_service, parse_config


@pytest.fixture
def state_files(tmp_path, rotated_qubits):
    rho, sigma = rotated_qubits
    paths = []
    for name, state in (("rho", rho), ("sigma", sigma)):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(MatrixPayload.from_array(state.matrix).model_dump()))
        paths.append(str(path))
    return paths


@pytest.fixture
def pairs_file(tmp_path):
    path = tmp_path / "pairs.json"
    path.write_text(json.dumps([
        {"n": 1, "p": [0.5, 0.5], "q": [0.25, 0.75]},
        {"n": 2, "p": [0.25, 0.25, 0.25, 0.25], "q": [0.0625, 0.1875, 0.1875, 0.5625]},
    ]))
    return str(path)


class TestConfigAssembly:
    def test_flags_override_config_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"n": 3, "k": 2, "seed": 1}))
        args = build_parser().parse_args(["schur", "--config", str(path), "--seed", "5"])
        raw = build_config(args)
        assert raw == {"experiment": "schur", "n": 3, "k": 2, "seed": 5}

    def test_json_flag_only_when_given(self):
        assert "json_lines" not in build_config(build_parser().parse_args(["ineq"]))
        assert build_config(build_parser().parse_args(["ineq", "--json"]))["json_lines"] is True

    def test_complex_and_list_flags(self):
        args = build_parser().parse_args(["gaussian", "--theta0", "1,-0.5", "--n-range", "10,20", "--eps", "0.2"])
        raw = build_config(args)
        assert raw["theta0"] == (1.0, -0.5)
        assert raw["n_range"] == [10, 20]
        assert raw["eps_region"] == 0.2


class TestRuns:
    def test_plog2(self, output_dir, capsys):
        assert main(["ineq", "--check", "plog2"]) == 0
        document = json.loads(capsys.readouterr().out)
        assert document["passed"] is True
        assert [e["k"] for e in document["result"]["entries"]] == [2, 3, 4]
        manifest = json.loads((output_dir / "run-manifest.json").read_text())
        assert manifest["experiment"] == "ineq"
        assert len(manifest["config_hash"]) == 64

    def test_schur(self, output_dir):
        assert main(["schur", "--n", "3", "--k", "2"]) == 0
        result = json.loads((output_dir / "schur.json").read_text())["result"]
        assert sorted(result["block_dims"]) == [2, 2, 4]

    def test_exponent_csv(self, output_dir, state_files, capsys):
        rho, sigma = state_files
        assert main(["exponent", "--rho", rho, "--sigma", sigma, "--n-max", "4", "--eps", "0.1"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "n,alpha,beta,minus_log_beta_over_n,strategy,seed"
        assert [line.split(",")[0] for line in lines[1:]] == ["2", "3", "4"]
        assert (output_dir / "exponent.csv").read_text().strip().splitlines() == lines

    def test_exponent_json_lines(self, output_dir, state_files, capsys):
        rho, sigma = state_files
        assert main(["exponent", "--rho", rho, "--sigma", sigma, "--n-range", "1,3",
                     "--strategy", "designed_measurement", "--json"]) == 0
        rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert [r["n"] for r in rows] == [1, 3]
        assert all(r["strategy"] == "designed_measurement" for r in rows)

    def test_design(self, output_dir, state_files):
        rho, sigma = state_files
        assert main(["design", "--rho", rho, "--sigma", sigma, "--n", "2", "--a", "0.5,1.5"]) == 0
        result = json.loads((output_dir / "design.json").read_text())["result"]
        assert result["variance_identity_gap"] <= 1e-9
        assert [c["a"] for c in result["chernoff"]] == [0.5, 1.5]

    def test_ispec(self, output_dir, pairs_file, capsys):
        assert main(["ispec", "--pairs", pairs_file, "--eps", "0.1"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("n,lambda,alpha,beta,e_minus_n_lambda\n")
        result = json.loads((output_dir / "ispec.json").read_text())["result"]
        assert [p["n"] for p in result["pairs"]] == [1, 2]

    def test_gaussian(self, output_dir, capsys):
        assert main(["gaussian", "--n-range", "10,20"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        assert (output_dir / "gaussian.csv").exists()

    def test_explicit_output_paths(self, tmp_path, output_dir):
        out, csv = tmp_path / "r" / "plog.json", tmp_path / "r" / "unused.csv"
        assert main(["ineq", "--check", "plog2", "--out", str(out), "--csv", str(csv)]) == 0
        assert out.exists()
        assert not csv.exists()
        assert (out.parent / "run-manifest.json").exists()


class TestExitCodes:
    def test_missing_state_file(self, output_dir, tmp_path):
        missing = str(tmp_path / "absent.json")
        assert main(["exponent", "--rho", missing, "--sigma", missing, "--n-max", "3"]) == 2

    def test_invalid_config(self, output_dir, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"epsilon": 2.0}))
        assert main(["ineq", "--config", str(path)]) == 2

    def test_config_must_be_object(self, output_dir, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("[1, 2]")
        assert main(["ineq", "--config", str(path)]) == 2

    def test_bad_flag(self, output_dir):
        assert main(["exponent", "--strategy", "guess"]) == 2

    def test_dimension_cap(self, output_dir):
        assert main(["schur", "--n", "6", "--k", "2", "--dim-cap", "32"]) == 3

    def test_dimension_cap_override_stays_with_its_run(self, output_dir):
        configured = settings.dim_cap

        def capped(i):
            cfg = parse_config({"experiment": "schur", "n": 5, "k": 2, "dim_cap": 8, "out_dir": str(output_dir / f"a{i}")})
            with pytest.raises(DimensionCapError):
                experiment_service.run(cfg)

        def plain(i):
            cfg = parse_config({"experiment": "schur", "n": 5, "k": 2, "trials": 2, "out_dir": str(output_dir / f"b{i}")})
            return experiment_service.run(cfg)

        with ThreadPoolExecutor(max_workers=4) as pool:
            capped_runs = [pool.submit(capped, i) for i in range(4)]
            plain_runs = [pool.submit(plain, i) for i in range(4)]
            for future in capped_runs:
                future.result()
            results = [future.result() for future in plain_runs]
        assert all(r.result["n"] == 5 for r in results)
        assert settings.dim_cap == configured


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path, output_dir, state_files):
        rho, sigma = state_files
        for name in ("first", "second"):
            args = ["exponent", "--rho", rho, "--sigma", sigma, "--n-max", "4",
                    "--strategy", "designed_measurement", "--seed", "7", "--out-dir", str(tmp_path / name)]
            assert main(args) == 0
            assert main(["schur", "--n", "4", "--k", "2", "--seed", "7", "--out-dir", str(tmp_path / name)]) == 0
        for artifact in ("exponent.csv", "exponent.json", "schur.json"):
            assert (tmp_path / "first" / artifact).read_bytes() == (tmp_path / "second" / artifact).read_bytes()
