import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from backend.services.errors import PreconditionError
from backend.services.hypothesis_testing import (
    Strategy,
    beta_star,
    exponent_curve,
    measured_beta,
    naive_product_pair,
    quantum_np_test,
    stein_exponent,
)
from backend.services.info_spectrum import iid_pair
from backend.services.measurement_design import design_measurement
from backend.services.operator_algebra import DensityOperator, relative_entropy, tensor_power, test_errors
from backend.services.random_states import random_density, random_faithful, random_pure, random_test, rng_for
from backend.services.schur_weyl import irreducible_decomposition

KL_COMMUTING = 0.9 * math.log(4.5) + 0.1 * math.log(0.125)


class TestQuantumNeymanPearson:
    def test_equal_states(self):
        state = DensityOperator.diagonal([0.4, 0.6])
        test = quantum_np_test(state, state, 0.3)
        assert_allclose(test.beta, 0.7, atol=1e-12)

    def test_commuting_pair(self, commuting_qubits):
        rho, sigma = commuting_qubits
        test = quantum_np_test(rho, sigma, 0.1)
        assert_allclose(test.alpha, 0.1, atol=1e-12)
        assert_allclose(test.beta, 0.2, atol=1e-12)

    def test_plus_state_against_mixed(self, plus_state, rng):
        sigma = DensityOperator.maximally_mixed(2)
        test = quantum_np_test(plus_state, sigma, 0.5)
        assert_allclose(test.beta, 0.25, atol=1e-12)
        for _ in range(50):
            alpha, beta = test_errors(random_test(2, rng), plus_state, sigma)
            if alpha <= 0.5:
                assert test.beta <= beta + 1e-12

    def test_non_commuting_pair_hits_level(self, rotated_qubits, rng):
        rho, sigma = rotated_qubits
        test = quantum_np_test(rho, sigma, 0.1)
        assert abs(test.alpha - 0.1) <= 1e-8
        alpha, beta = test_errors(test.operator(), rho, sigma)
        assert_allclose((alpha, beta), (test.alpha, test.beta), atol=1e-12)
        for _ in range(50):
            alpha, beta = test_errors(random_test(2, rng), rho, sigma)
            if alpha <= 0.1:
                assert test.beta <= beta + 1e-9

    def test_epsilon_range(self, rotated_qubits):
        rho, sigma = rotated_qubits
        with pytest.raises(PreconditionError):
            quantum_np_test(rho, sigma, 0.0)

    @pytest.mark.parametrize("d", [2, 3, 4])
    @pytest.mark.parametrize("n", [1, 2])
    @pytest.mark.parametrize("epsilon", [0.05, 0.3, 0.7])
    def test_meets_dual_bound(self, d, n, epsilon):
        rng = rng_for(100 * d + n, "np-dual")
        for rho in (random_density(d, rng), random_pure(d, rng)):
            sigma = random_faithful(d, rng)
            rho_n, sigma_n = tensor_power(rho, n), tensor_power(sigma, n)
            test = quantum_np_test(rho_n, sigma_n, epsilon, n)
            assert abs(test.alpha - epsilon) < 1e-8
            c = math.exp(n * test.threshold)
            assert abs(test.beta - _dual_value(rho_n, sigma_n, epsilon, c)) < 1e-8
            for c in np.geomspace(1e-3, 1e3, 25):
                assert test.beta >= _dual_value(rho_n, sigma_n, epsilon, c) - 1e-10

    def test_pure_state_against_faithful(self):
        rho = DensityOperator.pure(np.array([math.cos(0.4), math.sin(0.4)]))
        sigma = DensityOperator.diagonal([0.25, 0.75])
        test = quantum_np_test(rho, sigma, 0.05)
        assert abs(test.alpha - 0.05) < 1e-8
        c = math.exp(test.threshold)
        assert abs(test.beta - _dual_value(rho, sigma, 0.05, c)) < 1e-8

    def test_dominates_random_tests(self, rng):
        for _ in range(3):
            rho, sigma = random_density(3, rng), random_faithful(3, rng)
            test = quantum_np_test(rho, sigma, 0.2)
            for _ in range(200):
                alpha, beta = test_errors(random_test(3, rng), rho, sigma)
                if alpha <= 0.2:
                    assert test.beta <= beta + 1e-9


def _dual_value(rho: DensityOperator, sigma: DensityOperator, epsilon: float, c: float) -> float:
    w = np.linalg.eigvalsh(rho.matrix - c * sigma.matrix)
    return (1.0 - epsilon - w[w > 0].sum()) / c


class TestBetaStar:
    def test_equal_states(self):
        state = DensityOperator.diagonal([0.4, 0.6])
        assert_allclose(beta_star(state, state, 1, 0.3), 0.7, atol=1e-12)

    def test_commuting_pair(self, commuting_qubits):
        rho, sigma = commuting_qubits
        assert_allclose(beta_star(rho, sigma, 1, 0.1), 0.2, atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2])
    def test_measured_equals_optimum_for_commuting_states(self, commuting_qubits, n):
        rho, sigma = commuting_qubits
        dm = design_measurement(rho, sigma, irreducible_decomposition(n, 2, seed=0))
        assert_allclose(measured_beta(rho, sigma, n, 0.1, dm), beta_star(rho, sigma, n, 0.1), atol=1e-10)

    def test_measured_equal_states(self):
        state = DensityOperator.diagonal([0.4, 0.6])
        dm = design_measurement(state, state, irreducible_decomposition(2, 2, seed=0))
        assert_allclose(measured_beta(state, state, 2, 0.2, dm), 0.8, atol=1e-12)

    def test_quantum_beats_measured(self, rotated_qubits):
        rho, sigma = rotated_qubits
        dm = design_measurement(rho, sigma, irreducible_decomposition(3, 2, seed=0))
        assert beta_star(rho, sigma, 3, 0.1) <= measured_beta(rho, sigma, 3, 0.1, dm) + 1e-9

    def test_naive_pair_of_diagonal_states(self, commuting_qubits):
        rho, sigma = commuting_qubits
        naive = naive_product_pair(rho, sigma, 3)
        reference = iid_pair([0.9, 0.1], [0.2, 0.8], 3)
        order, ref_order = np.argsort(naive.log_ratio), np.argsort(reference.log_ratio)
        assert_allclose(naive.log_ratio[order], reference.log_ratio[ref_order], rtol=1e-12)
        assert_allclose(naive.p[order], reference.p[ref_order], atol=1e-12)


class TestExponentCurve:
    def test_equal_states_have_flat_curve(self):
        state = DensityOperator.diagonal([0.4, 0.6])
        curve = exponent_curve(state, state, 0.05, [1, 2, 3, 4])
        assert abs(curve.slope_estimate) <= 1e-6
        assert_allclose(curve.beta_values, [0.95] * 4, atol=1e-12)

    def test_commuting_pair_approaches_divergence(self, commuting_qubits):
        rho, sigma = commuting_qubits
        curve = exponent_curve(rho, sigma, 0.05, list(range(1, 11)), Strategy.NAIVE_PRODUCT_BASIS)
        assert abs(curve.refined_slope - KL_COMMUTING) <= 0.15 * KL_COMMUTING
        assert curve.fit_window == tuple(range(5, 11))
        assert curve.limsup_admissible and curve.liminf_admissible

    def test_rows(self, rotated_qubits):
        rho, sigma = rotated_qubits
        curve = exponent_curve(rho, sigma, 0.1, [1, 2, 3], "designed_measurement", seed=3)
        rows = curve.rows(seed=3)
        assert [r["n"] for r in rows] == [1, 2, 3]
        assert all(r["strategy"] == "designed_measurement" and r["seed"] == 3 for r in rows)
        for r in rows:
            assert_allclose(r["minus_log_beta_over_n"], -math.log(r["beta"]) / r["n"])

    def test_strategies_are_ordered(self, rotated_qubits):
        rho, sigma = rotated_qubits
        betas = {
            s: exponent_curve(rho, sigma, 0.1, [2, 3], s).beta_values
            for s in ("quantum_np", "designed_measurement")
        }
        for quantum, designed in zip(betas["quantum_np"], betas["designed_measurement"]):
            assert quantum <= designed + 1e-9

    def test_needs_two_points(self, rotated_qubits):
        rho, sigma = rotated_qubits
        with pytest.raises(PreconditionError):
            exponent_curve(rho, sigma, 0.1, [3])
        with pytest.raises(PreconditionError):
            exponent_curve(rho, sigma, 0.1, [3, 2])

    def test_unknown_strategy(self, rotated_qubits):
        rho, sigma = rotated_qubits
        with pytest.raises(PreconditionError):
            exponent_curve(rho, sigma, 0.1, [1, 2], "guess")

    def test_stein_exponent(self, rotated_qubits):
        rho, sigma = rotated_qubits
        assert stein_exponent(rho, sigma) == relative_entropy(rho, sigma, restrict_support=True)
        assert stein_exponent(tensor_power(rho, 2), tensor_power(sigma, 2)) == pytest.approx(
            2 * stein_exponent(rho, sigma), rel=1e-10)
