import pytest

from backend.services import acceptance
from backend.services.acceptance import CheckResult, SuiteResult
from backend.services.experiment_service import experiment_service, parse_config


class TestResults:
    def test_suite_passes_only_if_every_check_does(self):
        suite = SuiteResult([CheckResult("a", True), CheckResult("b", False, {"x": 1})])
        assert not suite.passed
        assert suite.failed == ["b"]
        assert suite.summary()["checks"][1] == {"name": "b", "passed": False, "details": {"x": 1}}

    def test_timings_stay_out_of_summary(self):
        suite = SuiteResult([CheckResult("a", True, seconds=1.23456)])
        assert suite.timings() == {"a": 1.235}
        assert "seconds" not in suite.summary()["checks"][0]

    def test_stein_thresholds(self):
        assert acceptance.QUANTUM_SLOPE_SLACK == 0.20
        assert acceptance.DESIGNED_GAP_AT_8 == 0.10

    def test_determinism_check_reports_probe(self):
        assert acceptance.check_determinism(0, lambda a, b: True).passed
        assert not acceptance.check_determinism(0, lambda a, b: False).passed


@pytest.mark.slow
class TestChecks:
    @pytest.mark.parametrize("check", [
        acceptance.check_variance_identity,
        acceptance.check_schur_weyl,
        acceptance.check_information_spectrum,
        acceptance.check_chernoff_tail,
        acceptance.check_inequalities,
        acceptance.check_gaussian,
    ])
    def test_quick_check_passes(self, check):
        result = check(0, quick=True)
        assert result.passed, result.details

    def test_stein_exponents(self):
        result = acceptance.check_stein_exponents(0, quick=True)
        assert result.passed, result.details
        assert result.details["converse_echo"]

    def test_determinism_probe(self, output_dir):
        probe = experiment_service._determinism_probe(0)
        assert acceptance.check_determinism(0, probe).passed

    def test_selftest_run(self, output_dir):
        result = experiment_service.run(parse_config({"experiment": "selftest", "quick": True}))
        assert result.passed
        assert result.exit_code == 0
        names = [c["name"] for c in result.result["checks"]]
        assert names[-1] == "determinism"
        assert len(names) == 8
