# -*- coding: utf-8 -*-
import math
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from twr_channel import (INTERFERENCE_LIMITED, NOISE_LIMITED, NOISE_PLUS_INTERFERENCE, SPATIALLY_UNCORRELATED,
                         BcPhase, DisturbanceModel, KroneckerChannelModel, MacPhase, TwrScenario, ar1_temporal_cov,
                         bessel_spatial_cov, make_disturbance, make_rng, sample_channel, sample_disturbance)
from twr_kernels import joint_eig, kron
from twr_training import DimensionMismatch, ScenarioError


def bessel_j0_series(x, terms=40):
    total = 0.0
    for k in range(terms):
        total += (-1) ** k * (x * x / 4.0) ** k / math.factorial(k) ** 2
    return total


def vec_batch(draws):
    return draws.transpose(0, 2, 1).reshape((draws.shape[0], -1))


class TestCovarianceBuilders(unittest.TestCase):

    def test_single_antenna(self):
        np.testing.assert_allclose(bessel_spatial_cov(1, 0.7, 2.5), [[2.5]])

    def test_zero_spacing_is_rank_one(self):
        z = bessel_spatial_cov(3, 0.0, 3.0)
        np.testing.assert_allclose(z, np.ones((3, 3)), atol=1e-12)
        self.assertEqual(np.linalg.matrix_rank(z, tol=1e-9), 1)

    def test_bessel_entries(self):
        z = bessel_spatial_cov(3, 1.5, 3.0)
        np.testing.assert_allclose(np.diag(z).real, np.ones(3), atol=1e-12)
        self.assertAlmostEqual(z[0, 1].real, bessel_j0_series(1.5), places=10)
        self.assertAlmostEqual(z[0, 2].real, bessel_j0_series(3.0), places=10)
        self.assertAlmostEqual(z[0, 1].real, 0.5118, places=4)
        self.assertAlmostEqual(z[0, 2].real, -0.2601, places=4)

    @given(st.integers(1, 5), st.floats(0.0, 4.0), st.floats(0.5, 10.0))
    @settings(max_examples=60, deadline=None)
    def test_bessel_trace_and_psd(self, n, d, trace):
        z = bessel_spatial_cov(n, d, trace)
        self.assertAlmostEqual(np.trace(z).real, trace, delta=1e-9 * trace)
        self.assertGreaterEqual(np.linalg.eigvalsh(z).min(), -1e-9 * trace)

    def test_ar1(self):
        np.testing.assert_allclose(ar1_temporal_cov(1, 0.5, 2.0), [[2.0]])
        np.testing.assert_allclose(ar1_temporal_cov(4, 0.0, 3.0), 3.0 * np.eye(4))
        expected = np.array([[1.0, 0.9, 0.81], [0.9, 1.0, 0.9], [0.81, 0.9, 1.0]])
        np.testing.assert_allclose(ar1_temporal_cov(3, 0.9), expected, atol=1e-14)

    def test_ar1_rejects_unit_coefficient(self):
        with self.assertRaises(ScenarioError):
            ar1_temporal_cov(3, 1.0)


class TestDisturbance(unittest.TestCase):

    def setUp(self):
        self.z_r = bessel_spatial_cov(3, 1.3, 3.0)
        self.k_q = ar1_temporal_cov(4, 0.9)

    def test_noise_limited(self):
        model = make_disturbance(NOISE_LIMITED, self.z_r, self.k_q, mu=2.0)
        np.testing.assert_allclose(model.k_r, 2.0 * np.eye(3))

    def test_interference_limited(self):
        model = make_disturbance(INTERFERENCE_LIMITED, self.z_r, self.k_q)
        np.testing.assert_allclose(model.k_r, self.z_r)
        self.assertAlmostEqual(model.spatial_ratio(self.z_r), 1.0)

    def test_noise_plus_interference_shares_eigenvectors(self):
        model = make_disturbance(NOISE_PLUS_INTERFERENCE, self.z_r, self.k_q, mu=1.0, nu=2.0)
        np.testing.assert_allclose(model.k_r, np.eye(3) + 2.0 * self.z_r)
        _, sigma, delta = joint_eig(self.z_r, model.k_r)
        np.testing.assert_allclose(delta, 1.0 + 2.0 * sigma, atol=1e-10)
        self.assertIsNone(model.spatial_ratio(self.z_r))

    def test_spatially_uncorrelated(self):
        model = make_disturbance(SPATIALLY_UNCORRELATED, self.z_r, self.k_q)
        np.testing.assert_allclose(model.k_r, np.eye(3))

    def test_unknown_kind(self):
        with self.assertRaises(ScenarioError):
            make_disturbance('impulsive', self.z_r, self.k_q)

    def test_temporal_scalar(self):
        white = DisturbanceModel(2.0 * np.eye(3), np.eye(2))
        self.assertAlmostEqual(white.temporal_scalar(), 2.0)
        self.assertIsNone(DisturbanceModel(self.k_q, np.eye(2)).temporal_scalar())

    def test_scaled(self):
        model = DisturbanceModel(self.k_q, self.z_r).scaled(0.1)
        np.testing.assert_allclose(model.covariance(), 0.1 * kron(self.k_q, self.z_r), atol=1e-14)


class TestPhases(unittest.TestCase):

    def test_mac_dimensions_checked(self):
        z_r = np.eye(2)
        bad = DisturbanceModel(np.eye(3), np.eye(2))
        with self.assertRaises(DimensionMismatch):
            MacPhase(np.eye(1), np.eye(1), z_r, bad, 1.0, 1.0, 4)

    def test_mac_negative_budget(self):
        with self.assertRaises(ScenarioError):
            MacPhase(np.eye(1), np.eye(1), np.eye(2), DisturbanceModel(np.eye(2), np.eye(2)), -1.0, 1.0, 2)

    def test_mac_shares_receive_covariance(self):
        mac = MacPhase(np.eye(1), 2.0 * np.eye(2), np.eye(2), DisturbanceModel(np.eye(3), np.eye(2)), 1.0, 1.0, 3)
        self.assertIs(mac.h1.z_r, mac.h2.z_r)
        self.assertEqual((mac.n1, mac.n2, mac.n, mac.m), (1, 2, 3, 2))
        self.assertAlmostEqual(mac.prior_mse(), 1.0 * 2.0 + 4.0 * 2.0)

    def test_scenario_antennas_must_agree(self):
        mac = MacPhase(np.eye(1), np.eye(1), np.eye(2), DisturbanceModel(np.eye(2), np.eye(2)), 1.0, 1.0, 2)
        bc = BcPhase(np.eye(3), np.eye(1), np.eye(1), DisturbanceModel(np.eye(3), np.eye(1)),
                     DisturbanceModel(np.eye(3), np.eye(1)), 1.0, 3)
        with self.assertRaises(ScenarioError):
            TwrScenario(mac, bc)
        self.assertEqual(TwrScenario(mac=mac).coefficients, 4)

    def test_scenario_needs_a_phase(self):
        with self.assertRaises(ScenarioError):
            TwrScenario()


class TestSampling(unittest.TestCase):

    def test_zero_covariance_gives_zero_channel(self):
        model = KroneckerChannelModel(np.zeros((2, 2)), np.zeros((3, 3)))
        np.testing.assert_array_equal(sample_channel(model, make_rng(1)), np.zeros((3, 2)))

    def test_zero_disturbance(self):
        model = DisturbanceModel(np.zeros((2, 2)), np.zeros((3, 3)))
        np.testing.assert_array_equal(sample_disturbance(model, make_rng(1)), np.zeros((3, 2)))

    def test_white_channel_unit_variance(self):
        draws = sample_channel(KroneckerChannelModel(np.eye(2), np.eye(2)), make_rng(2), 50000)
        np.testing.assert_allclose(np.mean(np.abs(draws) ** 2, axis=0), np.ones((2, 2)), rtol=0.05)

    def test_channel_covariance_is_kronecker(self):
        z_t = bessel_spatial_cov(2, 1.5, 2.0)
        z_r = bessel_spatial_cov(3, 0.8, 3.0)
        draws = vec_batch(sample_channel(KroneckerChannelModel(z_t, z_r), make_rng(3), 40000))
        empirical = draws.T @ draws.conj() / draws.shape[0]
        expected = kron(z_t, z_r)
        self.assertLessEqual(np.max(np.abs(empirical - expected)), 0.05 * np.linalg.norm(expected, 2))

    def test_disturbance_covariance_is_kronecker(self):
        model = DisturbanceModel(ar1_temporal_cov(3, -0.7), np.eye(2) + bessel_spatial_cov(2, 1.0, 2.0))
        draws = vec_batch(sample_disturbance(model, make_rng(4), 40000))
        empirical = draws.T @ draws.conj() / draws.shape[0]
        expected = model.covariance()
        self.assertLessEqual(np.max(np.abs(empirical - expected)), 0.05 * np.linalg.norm(expected, 2))

    def test_streams_are_reproducible_and_distinct(self):
        first = make_rng(7, 3).standard_normal(5)
        np.testing.assert_array_equal(first, make_rng(7, 3).standard_normal(5))
        self.assertFalse(np.array_equal(first, make_rng(7, 4).standard_normal(5)))
        self.assertFalse(np.array_equal(make_rng(1, 0).standard_normal(5), make_rng(0, 1).standard_normal(5)))

    def test_stream_key_range(self):
        with self.assertRaises(ValueError):
            make_rng(-1)


if __name__ == '__main__':
    unittest.main()
