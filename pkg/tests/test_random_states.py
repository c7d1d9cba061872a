import numpy as np
import pytest
from numpy.testing import assert_allclose

from backend.services.errors import InvalidPvmError
from backend.services.operator_algebra import Pvm, pvm_commutator_norm, refines
from backend.services.random_states import (
    block_diagonal_density,
    haar_unitary,
    random_block_pvm,
    random_density,
    random_refinement,
    random_test,
    rng_for,
    rotated_diagonal,
)


class TestStreams:
    def test_same_label_same_draws(self):
        assert_allclose(rng_for(7, "a").random(5), rng_for(7, "a").random(5))

    def test_labels_are_independent(self):
        assert not np.allclose(rng_for(7, "a").random(5), rng_for(7, "b").random(5))

    def test_seeds_are_independent(self):
        assert not np.allclose(rng_for(7, "a").random(5), rng_for(8, "a").random(5))


class TestInstances:
    @pytest.mark.parametrize("dim", [1, 2, 5])
    def test_haar_unitary(self, rng, dim):
        u = haar_unitary(dim, rng)
        assert_allclose(u.conj().T @ u, np.eye(dim), atol=1e-12)

    @pytest.mark.parametrize("rank", [1, 2, 4])
    def test_density_rank(self, rng, rank):
        rho = random_density(4, rng, rank=rank)
        assert np.sum(rho.op.eigvalsh() > 1e-12) == rank

    def test_block_pvm_ranks(self, rng):
        e = random_block_pvm(5, (3, 2), rng)
        assert e.ranks == (3, 2)
        with pytest.raises(InvalidPvmError):
            random_block_pvm(5, (3, 3), rng)

    def test_refinement(self, rng):
        e = random_block_pvm(4, (2, 1, 1), rng)
        m = random_refinement(e, rng)
        assert m.is_rank_one
        assert refines(m, e)

    def test_block_diagonal_state_commutes(self, rng):
        e = random_block_pvm(5, (2, 3), rng)
        rho = block_diagonal_density(e, rng, mix=0.1)
        assert pvm_commutator_norm(e, rho) <= 1e-10
        assert rho.op.eigvalsh()[0] >= 0.1 / 5 - 1e-12

    def test_random_test(self, rng):
        a = random_test(3, rng)
        w = a.op.eigvalsh()
        assert w[0] >= -1e-12 and w[-1] <= 1 + 1e-12

    def test_rotated_diagonal(self):
        rho = rotated_diagonal((0.8, 0.2), 0.6)
        assert_allclose(sorted(rho.op.eigvalsh()), [0.2, 0.8], atol=1e-14)
        assert pvm_commutator_norm(Pvm.computational(2), rho) > 0.1
