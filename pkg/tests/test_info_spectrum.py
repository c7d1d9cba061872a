import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from backend.services.errors import DimensionMismatchError, PreconditionError
from backend.services.info_spectrum import (
    DistributionPair,
    classical_errors,
    classical_np,
    iid_pair,
    neyman_pearson_gap,
    randomized_test_errors,
    spectral_functionals,
    spectral_record,
    threshold_test,
    verify_threshold_beta_bound,
)

KL_HALF_QUARTER = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)


@pytest.fixture
def half_quarter():
    return DistributionPair(np.array([0.5, 0.5]), np.array([0.25, 0.75]))


@pytest.fixture
def skewed():
    return DistributionPair(np.array([0.9, 0.1]), np.array([0.2, 0.8]))


class TestDistributionPair:
    def test_rejects_mismatched_lengths(self):
        with pytest.raises(DimensionMismatchError):
            DistributionPair(np.array([0.5, 0.5]), np.array([1.0]))

    def test_rejects_unnormalized(self):
        with pytest.raises(PreconditionError):
            DistributionPair(np.array([0.5, 0.6]), np.array([0.5, 0.5]))

    def test_ratio_conventions(self):
        dp = DistributionPair(np.array([0.5, 0.5, 0.0]), np.array([0.0, 0.5, 0.5]))
        assert dp.log_ratio[0] == math.inf
        assert dp.log_ratio[1] == 0.0
        assert dp.log_ratio[2] == -math.inf


class TestThresholdTests:
    def test_minus_infinity_accepts_all(self, half_quarter):
        assert threshold_test(half_quarter, -math.inf).acceptance_mask.all()
        assert classical_errors(half_quarter, threshold_test(half_quarter, -math.inf)) == (0.0, 1.0)

    def test_plus_infinity_accepts_null_q_only(self):
        dp = DistributionPair(np.array([0.5, 0.5]), np.array([0.0, 1.0]))
        assert threshold_test(dp, math.inf).acceptance_mask.tolist() == [True, False]

    def test_zero_threshold(self, half_quarter):
        t = threshold_test(half_quarter, 0.0)
        assert t.acceptance_mask.tolist() == [True, False]
        assert_allclose(classical_errors(half_quarter, t), (0.5, 0.25))

    def test_randomized_errors(self, half_quarter):
        assert_allclose(randomized_test_errors(half_quarter, [1.0, 0.5]), (0.25, 0.625))
        with pytest.raises(PreconditionError):
            randomized_test_errors(half_quarter, [1.5, 0.0])

    def test_errors_monotone_in_threshold(self):
        dp = iid_pair([0.6, 0.3, 0.1], [0.2, 0.3, 0.5], 3)
        grid = np.linspace(-2.0, 2.0, 81)
        errors = np.array([classical_errors(dp, threshold_test(dp, lam)) for lam in grid])
        assert np.all(np.diff(errors[:, 0]) >= -1e-15)
        assert np.all(np.diff(errors[:, 1]) <= 1e-15)


class TestBetaBound:
    def test_zero_threshold_always_holds(self, skewed):
        assert verify_threshold_beta_bound(skewed, 0.0).ok

    def test_iid_bernoulli(self):
        dp = iid_pair([0.5, 0.5], [0.25, 0.75], 6)
        check = verify_threshold_beta_bound(dp, KL_HALF_QUARTER - 0.1)
        assert check.ok
        assert check.slack > 0

    def test_null_q_outcomes_add_nothing(self):
        dp = DistributionPair(np.array([0.5, 0.5]), np.array([0.0, 1.0]))
        check = verify_threshold_beta_bound(dp, 5.0)
        assert check.ok

    def test_threshold_test_minimizes_objective(self, skewed, rng):
        for _ in range(50):
            assert neyman_pearson_gap(skewed, 0.3, rng.random(2)) >= -1e-12


class TestNeymanPearson:
    def test_equal_distributions(self):
        dp = DistributionPair(np.full(4, 0.25), np.full(4, 0.25))
        assert_allclose(classical_np(dp, 0.3).beta_star, 0.7, atol=1e-12)

    def test_two_outcomes(self, skewed):
        result = classical_np(skewed, 0.1)
        assert_allclose(result.beta_star, 0.2, atol=1e-12)
        assert_allclose(result.alpha, 0.1, atol=1e-12)
        assert_allclose(result.weights, [1.0, 0.0], atol=1e-12)

    def test_level_is_met_exactly(self, rng):
        p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
        result = classical_np(DistributionPair(p, q), 0.05)
        assert_allclose(result.alpha, 0.05, atol=1e-12)
        alpha, beta = randomized_test_errors(DistributionPair(p, q), result.weights)
        assert_allclose((alpha, beta), (result.alpha, result.beta_star), atol=1e-12)

    def test_beats_random_tests(self, rng):
        dp = DistributionPair(rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5)))
        best = classical_np(dp, 0.2).beta_star
        for _ in range(200):
            alpha, beta = randomized_test_errors(dp, rng.random(5))
            if alpha <= 0.2:
                assert best <= beta + 1e-12

    @pytest.mark.parametrize("size", [2, 5, 8, 12])
    @pytest.mark.parametrize("epsilon", [0.05, 0.3, 0.7])
    def test_matches_exhaustive_search(self, rng, size, epsilon):
        dp = DistributionPair(rng.dirichlet(np.ones(size)), rng.dirichlet(np.ones(size)))
        assert_allclose(classical_np(dp, epsilon).beta_star, _exhaustive_beta(dp, epsilon), atol=1e-12)

    def test_nonincreasing_in_epsilon(self, skewed):
        betas = [classical_np(skewed, eps).beta_star for eps in np.linspace(0.05, 0.95, 19)]
        assert all(b <= a + 1e-12 for a, b in zip(betas, betas[1:]))

    def test_epsilon_range(self, skewed):
        with pytest.raises(PreconditionError):
            classical_np(skewed, 1.0)



def _exhaustive_beta(dp, epsilon):
    """Minimal beta over all tests with at most one randomized outcome (the optimum has one)."""
    masks = np.array(list(itertools.product([0.0, 1.0], repeat=len(dp))))
    alpha, beta = (1.0 - masks) @ dp.p, masks @ dp.q
    best = beta[alpha <= epsilon].min()
    for x in range(len(dp)):
        rows = masks[:, x] == 0.0
        gamma = (alpha[rows] - epsilon) / dp.p[x]
        ok = (gamma >= 0.0) & (gamma <= 1.0)
        if ok.any():
            best = min(best, float((beta[rows] + gamma * dp.q[x])[ok].min()))
    return best


class TestSpectralFunctionals:
    def test_equal_distributions_have_zero_quantiles(self):
        dp = iid_pair([0.3, 0.7], [0.3, 0.7], 5)
        record = spectral_record(dp)
        assert all(q == 0.0 for q in record.quantiles.values())

    def test_disjoint_supports(self):
        dp = DistributionPair(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert spectral_record(dp).infinite_mass == 1.0

    def test_quantile_approaches_divergence(self):
        record = spectral_record(iid_pair([0.5, 0.5], [0.25, 0.75], 512))
        assert abs(record.quantiles[0.05] - KL_HALF_QUARTER) <= 0.05

    def test_cdf_is_monotone(self):
        record = spectral_record(iid_pair([0.5, 0.5], [0.25, 0.75], 20))
        assert np.all(np.diff(record.cdf) >= 0)
        assert record.cdf[0] == 0.0
        assert_allclose(record.cdf[-1], 1.0)

    def test_records_keep_order(self):
        seq = [iid_pair([0.5, 0.5], [0.25, 0.75], n) for n in (1, 2, 3)]
        assert [r.n for r in spectral_functionals(seq, max_workers=2)] == [1, 2, 3]


class TestIidPair:
    def test_masses_match_enumeration(self):
        dp = iid_pair([0.5, 0.5], [0.25, 0.75], 3)
        assert_allclose(dp.p.sum(), 1.0)
        # ratio classes are the number of ones, 0..3
        assert len(dp) == 4
        assert_allclose(sorted(dp.q), sorted([0.75 ** 3, 3 * 0.25 * 0.75 ** 2, 3 * 0.25 ** 2 * 0.75, 0.25 ** 3]))

    def test_mean_is_divergence(self):
        dp = iid_pair([0.9, 0.1], [0.2, 0.8], 4)
        mean = float(np.sum(dp.p * dp.log_ratio))
        assert_allclose(mean, 0.9 * math.log(4.5) + 0.1 * math.log(0.125), rtol=1e-12)
