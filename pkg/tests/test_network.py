import numpy as np
import pytest

from matnet import network as nw


class TestTopology:
    def test_depth_one(self):
        t = nw.build_topology(1)
        assert t.n_nodes == 2
        assert t.n_interactions == 1
        assert t.sublist(0, 0) == [0, 1]
        assert t.branch_sets(0) == ([0], [1])

    def test_depth_two(self):
        t = nw.build_topology(2)
        assert t.n_nodes == 4
        assert t.n_interactions == 3
        assert t.sublist(0, 0) == [0, 1, 2, 3]
        assert t.sublist(1, 0) == [0, 1]
        assert t.sublist(1, 1) == [2, 3]

    def test_depth_three_counts(self):
        t = nw.build_topology(3)
        assert t.n_nodes == 8
        assert t.n_interactions == 7

    @pytest.mark.parametrize("N", [2, 3, 4, 5])
    def test_sublist_recursion_invariant(self, N):
        t = nw.build_topology(N)
        for level in range(N - 1):
            for p in range(1 << level):
                assert t.sublist(level, p) == (t.sublist(level + 1, 2 * p)
                                               + t.sublist(level + 1, 2 * p + 1))
        for p in range(1 << (N - 1)):
            assert t.sublist(N - 1, p) == [2 * p, 2 * p + 1]
        assert t.sublist(0, 0) == list(range(1 << N))

    def test_each_node_in_exactly_one_leaf_pair(self):
        t = nw.build_topology(4)
        seen = []
        for p in range(8):
            seen += t.sublist(3, p)
        assert sorted(seen) == list(range(16))
        assert len(seen) == len(set(seen))

    def test_branch_sets_partition_sublist(self):
        t = nw.build_topology(3)
        for j in range(t.n_interactions):
            b0, b1 = t.branch_sets(j)
            level, p = t.interaction_level_position(j)
            assert not set(b0) & set(b1)
            assert sorted(b0 + b1) == sorted(t.sublist(level, p))

    def test_depth_out_of_range(self):
        with pytest.raises(ValueError):
            nw.build_topology(0)
        with pytest.raises(ValueError):
            nw.build_topology(13)

    def test_flat_interaction_indexing(self):
        assert nw.interaction_index(0, 0) == 0
        assert nw.interaction_index(1, 0) == 1
        assert nw.interaction_index(1, 1) == 2
        assert nw.interaction_index(2, 3) == 6


class TestNodeWeight:
    def test_reference_values(self):
        assert nw.node_weight(0.0) == pytest.approx(np.log(2.0), rel=1e-12)
        assert nw.node_weight(5.0) == pytest.approx(5.0067153, rel=1e-6)
        w = nw.node_weight(-50.0)
        assert w > 0
        assert w == pytest.approx(1.93e-22, rel=1e-2)

    def test_overflow_safe(self):
        assert nw.node_weight(700.0) == pytest.approx(700.0)
        assert np.isfinite(nw.node_weight(-700.0))

    def test_monotone_with_logistic_derivative(self):
        z = np.linspace(-8, 8, 41)
        w = nw.node_weight(z)
        assert np.all(np.diff(w) > 0)
        h = 1e-6
        fd = (nw.node_weight(z + h) - nw.node_weight(z - h)) / (2 * h)
        assert np.allclose(fd, 1 / (1 + np.exp(-z)), atol=1e-9)


class TestDirectionVector:
    def test_poles(self):
        assert np.allclose(nw.direction_vector(0.0, 0.37), [0, 0, 1],
                           atol=1e-15)
        assert np.allclose(nw.direction_vector(0.5, 0.0), [1, 0, 0],
                           atol=1e-15)

    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        th = rng.uniform(-3, 3, 100)
        ph = rng.uniform(-3, 3, 100)
        N = nw.direction_vector(th, ph)
        assert np.abs(np.linalg.norm(N, axis=1) - 1).max() < 1e-14


class TestBranchFractions:
    def test_symmetric(self):
        W = np.ones(4)
        f0, f1 = nw.branch_volume_fractions(W, [0, 1], [2, 3])
        assert f0 == pytest.approx(0.5)
        assert f1 == pytest.approx(0.5)

    def test_one_three(self):
        f0, f1 = nw.branch_volume_fractions(np.array([1.0, 3.0]), [0], [1])
        assert f0 == pytest.approx(0.25)
        assert f1 == pytest.approx(0.75)

    def test_sums_to_one_exactly(self):
        rng = np.random.default_rng(1)
        W = rng.uniform(0.01, 5.0, 8)
        f0, f1 = nw.branch_volume_fractions(W, [0, 1, 2, 3], [4, 5, 6, 7])
        assert f0 + f1 == 1.0


class TestInteractionCoefficients:
    def test_two_node_values(self):
        t = nw.build_topology(1)
        W = np.array([np.log(2.0), np.log(2.0)])
        table = nw.interaction_coefficients(t, W)
        assert table[0, 0] == pytest.approx(1 / np.log(2.0), rel=1e-14)
        assert table[1, 0] == pytest.approx(-1 / np.log(2.0), rel=1e-14)

    def test_weight_orthogonality(self):
        rng = np.random.default_rng(2)
        t = nw.build_topology(4)
        W = rng.uniform(0.05, 3.0, t.n_nodes)
        table = nw.interaction_coefficients(t, W)
        assert np.abs(W @ table).max() < 1e-13

    def test_zero_outside_branches(self):
        t = nw.build_topology(3)
        W = np.ones(8)
        table = nw.interaction_coefficients(t, W)
        for j in range(t.n_interactions):
            b0, b1 = t.branch_sets(j)
            outside = set(range(8)) - set(b0) - set(b1)
            for i in outside:
                assert table[i, j] == 0.0

    def test_rejects_nonpositive_weights(self):
        t = nw.build_topology(1)
        with pytest.raises(ValueError):
            nw.interaction_coefficients(t, np.array([1.0, 0.0]))


class TestParameterSet:
    def test_init_distributions(self):
        params = nw.init_parameters(3, np.random.default_rng(3))
        assert params.z.shape == (8,)
        assert params.theta.shape == (7,)
        assert np.all((params.z >= 0.2) & (params.z <= 0.8))
        assert np.all(params.weights() > 0)
        assert np.all((params.theta > 0) & (params.theta < 1))

    def test_flat_round_trip(self):
        params = nw.init_parameters(2, np.random.default_rng(4))
        clone = params.with_flat(params.flat())
        for f in nw.ParameterSet.FIELDS:
            assert np.array_equal(getattr(clone, f), getattr(params, f))

    def test_size_validation(self):
        with pytest.raises(ValueError):
            nw.ParameterSet(z=np.zeros(3), alpha=np.zeros(3),
                            beta=np.zeros(3), gamma=np.zeros(3),
                            theta=np.zeros(2), phi=np.zeros(2))
        with pytest.raises(ValueError):
            nw.ParameterSet(z=np.zeros(4), alpha=np.zeros(4),
                            beta=np.zeros(4), gamma=np.zeros(4),
                            theta=np.zeros(2), phi=np.zeros(3))

    def test_rejects_non_finite(self):
        z = np.zeros(2)
        z[0] = np.nan
        with pytest.raises(ValueError):
            nw.ParameterSet(z=z, alpha=np.zeros(2), beta=np.zeros(2),
                            gamma=np.zeros(2), theta=np.zeros(1),
                            phi=np.zeros(1))

    def test_single_node_topology(self):
        t = nw.Topology.single_node()
        assert t.n_nodes == 1
        assert t.n_interactions == 0
