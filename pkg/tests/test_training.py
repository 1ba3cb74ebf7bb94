import numpy as np
import pytest

import matnet.homogenization as hz
from matnet import network as nw
from matnet import tensors as tn
from matnet import training as tr


@pytest.fixture(scope="module")
def small_setup():
    rng = np.random.default_rng(42)
    topo = nw.build_topology(2)
    teacher = nw.init_parameters(2, rng)
    dataset = tr.synthesize_teacher_dataset(teacher, topo, 30, rng)
    return topo, teacher, dataset


class TestSampling:
    def test_cubic_constants_in_range_and_stable(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            C = tr.sample_cubic_stiffness(rng)
            c11, c12, c44 = C[0, 0], C[0, 1], C[3, 3]
            assert 1e-3 <= c11 <= 1e3 and 1e-3 <= c12 <= 1e3
            assert 1e-3 <= c44 <= 1e3
            assert c11 - c12 > 0

    def test_cubic_sparsity_pattern(self):
        rng = np.random.default_rng(1)
        C = tr.sample_cubic_stiffness(rng)
        mask = np.zeros((6, 6), dtype=bool)
        mask[:3, :3] = True
        mask[3, 3] = mask[4, 4] = mask[5, 5] = True
        assert np.all(C[~mask] == 0.0)
        assert C[0, 0] == C[1, 1] == C[2, 2]
        assert C[3, 3] == C[4, 4] == C[5, 5]
        assert C[0, 1] == C[0, 2] == C[1, 2]

    def test_positive_definite_over_many_draws(self):
        rng = np.random.default_rng(2)
        smallest = np.inf
        for _ in range(10000):
            C = tr.sample_cubic_stiffness(rng)
            smallest = min(smallest, np.linalg.eigvalsh(C).min())
        assert smallest > 0

    def test_two_phase_contrast_bounds(self):
        rng = np.random.default_rng(3)
        pairs = tr.generate_two_phase_samples(200, rng)
        assert len(pairs) == 200
        for C1, C2 in pairs:
            assert C1[0, 0] - C1[0, 1] > 0
            assert C2[0, 0] - C2[0, 1] > 0
            # the drawn constants lie in [1e-3, 1e3]; the contrast factor
            # in [0.1, 10] bounds phase 2 entries accordingly
            assert 1e-4 - 1e-12 <= C2[3, 3] <= 1e4 + 1e-8

    def test_bad_range_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            tr.sample_cubic_stiffness(rng, lo=-1.0, hi=1.0)
        with pytest.raises(ValueError):
            tr.generate_two_phase_samples(0, rng)


class TestTeacherDataset:
    def test_teacher_fit_is_exact(self, small_setup):
        topo, teacher, dataset = small_setup
        assert tr.loss(dataset.samples, teacher, topo) == pytest.approx(
            0.0, abs=1e-28)

    def test_single_orientation_teacher_rotates_samples(self):
        # one shared orientation and a single phase collapse the network
        # to a plain rotation of the sampled stiffness
        rng = np.random.default_rng(5)
        topo = nw.build_topology(2)
        teacher = nw.init_parameters(2, rng)
        angles = (0.7, -0.4, 1.9)
        teacher.alpha[:], teacher.beta[:], teacher.gamma[:] = angles
        ds = tr.synthesize_teacher_dataset(teacher, topo, 5, rng,
                                           two_phase=False)
        for s in ds.samples:
            ref = tn.rotate_stiffness(s.phase1, angles)
            assert np.allclose(s.target, ref, rtol=1e-10)

    def test_depth_mismatch_rejected(self, small_setup):
        topo, teacher, _ = small_setup
        bad = nw.init_parameters(3, np.random.default_rng(6))
        with pytest.raises(ValueError):
            tr.synthesize_teacher_dataset(bad, topo, 3,
                                          np.random.default_rng(0))


class TestLoss:
    def test_relative_mse_identities(self):
        rng = np.random.default_rng(7)
        t = rng.normal(size=(1, 6, 6))
        assert tr.relative_mse(t, t) == 0.0
        assert tr.relative_mse(np.zeros_like(t), t) == pytest.approx(1.0)
        both = np.concatenate([t, np.zeros_like(t)])
        targets = np.concatenate([t, t])
        assert tr.relative_mse(both, targets) == pytest.approx(0.5)

    def test_empty_batch_rejected(self, small_setup):
        topo, teacher, _ = small_setup
        with pytest.raises(ValueError):
            tr.loss([], teacher, topo)

    def test_joint_scaling_invariance(self, small_setup):
        topo, teacher, dataset = small_setup
        params = nw.init_parameters(2, np.random.default_rng(8))
        base = tr.loss(dataset.samples[:6], params, topo)
        lam = 12.5
        scaled = [tr.Sample(lam * s.phase1, lam * s.phase2, lam * s.target)
                  for s in dataset.samples[:6]]
        assert tr.loss(scaled, params, topo) == pytest.approx(base,
                                                              rel=1e-12)


class TestGradient:
    def test_zero_at_perfect_fit(self, small_setup):
        topo, teacher, dataset = small_setup
        value, grads = tr.gradient(teacher, dataset.samples[:8], topo)
        assert value == pytest.approx(0.0, abs=1e-28)
        for f in nw.ParameterSet.FIELDS:
            assert np.abs(grads[f]).max() < 1e-13

    def test_matches_finite_differences(self, small_setup):
        topo, _, dataset = small_setup
        params = nw.init_parameters(2, np.random.default_rng(9))
        batch = dataset.samples[:5]
        _, grads = tr.gradient(params, batch, topo)
        g_ad = np.concatenate([grads[f] for f in nw.ParameterSet.FIELDS])
        g_fd = tr.finite_difference_gradient(params, batch, topo)
        floor = 1e-8 * np.abs(g_fd).max()
        err = np.abs(g_ad - g_fd) / np.maximum(np.abs(g_fd), floor)
        assert err.max() < 1e-5

    def test_duplicated_sample_leaves_gradient_unchanged(self, small_setup):
        topo, _, dataset = small_setup
        params = nw.init_parameters(2, np.random.default_rng(10))
        batch = dataset.samples[:3]
        _, g1 = tr.gradient(params, batch, topo)
        _, g2 = tr.gradient(params, batch + batch, topo)
        for f in nw.ParameterSet.FIELDS:
            assert np.allclose(g1[f], g2[f], rtol=1e-12, atol=1e-15)


class TestTrain:
    def test_zero_learning_rate_is_a_no_op(self, small_setup):
        topo, _, dataset = small_setup
        cfg = tr.TrainConfig(epochs=3, learning_rate=0.0, batch_size=5,
                             seed=1, n_train=24, n_val=6)
        params, curves = tr.train(dataset, cfg, depth=2)
        assert np.allclose(curves[:, 0], curves[0, 0])
        assert np.allclose(curves[:, 1], curves[0, 1])

    def test_same_seed_bit_identical(self, small_setup):
        topo, _, dataset = small_setup
        cfg = tr.TrainConfig(epochs=3, learning_rate=1e-3, batch_size=5,
                             seed=5, n_train=24, n_val=6)
        p1, c1 = tr.train(dataset, cfg, depth=2)
        p2, c2 = tr.train(dataset, cfg, depth=2)
        assert np.array_equal(c1, c2)
        for f in nw.ParameterSet.FIELDS:
            assert np.array_equal(getattr(p1, f), getattr(p2, f))

    def test_curve_shape_and_progress(self, small_setup):
        topo, _, dataset = small_setup
        cfg = tr.TrainConfig(epochs=40, learning_rate=3e-3, batch_size=5,
                             seed=2, n_train=24, n_val=6)
        params, curves = tr.train(dataset, cfg, depth=2)
        assert curves.shape == (41, 2)
        assert curves[-1, 0] < 0.1 * curves[0, 0]

    def test_split_too_large_rejected(self, small_setup):
        topo, _, dataset = small_setup
        cfg = tr.TrainConfig(epochs=1, n_train=400, n_val=100)
        with pytest.raises(ValueError):
            tr.train(dataset, cfg, depth=2)


class TestVolumeFraction:
    def test_recovered_fraction_formula(self):
        params = nw.init_parameters(3, np.random.default_rng(11))
        W = params.weights()
        expected = W[0::2].sum() / W.sum()
        assert tr.recovered_phase1_fraction(params) == pytest.approx(
            expected, rel=1e-14)

    def test_small_scale_identifiability(self):
        # a depth-2 student recovers a teacher's encoded phase fraction
        rng = np.random.default_rng(12)
        topo = nw.build_topology(2)
        teacher = nw.init_parameters(2, rng)
        target_fraction = 0.3
        n = topo.n_nodes
        teacher.z[0::2] = np.log(np.expm1(2 * target_fraction / n))
        teacher.z[1::2] = np.log(np.expm1(2 * (1 - target_fraction) / n))
        dataset = tr.synthesize_teacher_dataset(teacher, topo, 150, rng)
        cfg = tr.TrainConfig(epochs=60, learning_rate=3e-3, batch_size=10,
                             seed=3, n_train=120, n_val=30)
        params, curves = tr.train(dataset, cfg, depth=2)
        got = tr.recovered_phase1_fraction(params)
        assert got == pytest.approx(target_fraction, abs=0.03)


class TestGradcheckHelper:
    def test_gradcheck_small(self):
        assert tr.gradcheck(2, n_points=2, batch_size=3, seed=0) < 1e-5
