import numpy as np

from convexauction import (
    AuctionInstance,
    DiscreteDistribution,
    TypeSpace,
    is_regular,
    make_categorical,
    make_uniform,
    symmetric_instance,
    virtual_values,
)
from conftest import random_instance, single_type_instance


def reserve_grid_instance(k: int, n: int = 1) -> AuctionInstance:
    """Uniform types {j/k : 1 <= j <= k}, the per-bidder reserve-bid grid."""
    space = TypeSpace(np.arange(1, k + 1) / k)
    dist = DiscreteDistribution(np.full(k, 1.0 / k))
    return symmetric_instance(space, dist, n)


class TestVirtualValues:
    def test_uniform_grid_closed_form(self):
        inst = reserve_grid_instance(5)
        phi = virtual_values(inst).phi[0]
        expected = 2 * np.arange(1, 6) / 5 - 1
        np.testing.assert_allclose(phi, expected, atol=1e-12)
        assert np.isclose(phi[2], 0.2)  # phi(0.6)

    def test_single_type(self):
        inst = single_type_instance(1.0, 1)
        np.testing.assert_allclose(virtual_values(inst).phi[0], [1.0])

    def test_categorical_hand_evaluation(self):
        space, dist = make_categorical(3, 10, 0.8)
        inst = AuctionInstance(((space, dist),))
        phi = virtual_values(inst).phi[0]
        # z_1 - (z_2 - z_1)(1 - F_1)/f_1 = 3 - 7 * 0.2 / 0.8
        np.testing.assert_allclose(phi, [1.25, 10.0])

    def test_top_type_is_exact(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            inst = random_instance(rng)
            table = virtual_values(inst)
            for i in range(inst.n):
                assert table.phi[i][-1] == inst.values(i)[-1]

    def test_phi_never_exceeds_value(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            inst = random_instance(rng)
            table = virtual_values(inst)
            for i in range(inst.n):
                assert np.all(table.phi[i] <= inst.values(i) + 1e-12)
                assert np.all(table.phi_plus[i] >= table.phi[i])
                assert np.all(table.phi_plus[i] >= 0)

    def test_uniform_experiment_grid_values(self):
        space, dist = make_uniform(5)
        inst = AuctionInstance(((space, dist),))
        phi = virtual_values(inst).phi[0]
        np.testing.assert_allclose(phi, [-1.0, -0.5, 0.0, 0.5, 1.0], atol=1e-12)


class TestRegularity:
    def test_uniform_and_categorical_regular(self):
        assert is_regular(virtual_values(reserve_grid_instance(5))) == (True,)
        space, dist = make_categorical(3, 10, 0.8)
        inst = AuctionInstance(((space, dist),))
        assert is_regular(virtual_values(inst)) == (True,)

    def test_crafted_pmf_consistent_with_definition(self):
        space = TypeSpace(np.array([1.0, 2.0, 10.0]))
        dist = DiscreteDistribution(np.array([0.1, 0.8, 0.1]))
        inst = AuctionInstance(((space, dist),))
        table = virtual_values(inst)
        # independent evaluation of the definition
        z, f = space.values, dist.pmf
        cdf = np.cumsum(f)
        gaps = np.array([1.0, 8.0, 0.0])
        expected = z - gaps * (1 - cdf) / f
        np.testing.assert_allclose(table.phi[0], expected, atol=1e-12)
        assert is_regular(table) == (bool(np.all(np.diff(expected) >= 0)),)

    def test_irregular_case_detected(self):
        space = TypeSpace(np.array([1.0, 2.0, 3.0]))
        dist = DiscreteDistribution(np.array([0.6, 0.05, 0.35]))
        inst = AuctionInstance(((space, dist),))
        table = virtual_values(inst)
        assert table.phi[0][1] < table.phi[0][0]
        assert is_regular(table) == (False,)
