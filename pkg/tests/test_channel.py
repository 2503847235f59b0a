"""Tests for core/channel.py"""

import math

import numpy as np
import pytest

from agb_feedback.core.channel import (
    ExponentialSpec,
    TemporalSpec,
    UpaSpec,
    add_estimation_error,
    draw_channels,
    exponential_correlation,
    gauss_markov_sequence,
    jakes_eta,
    random_phase,
    upa_axis_correlation,
    upa_correlation,
    user_exponential_correlations,
)
from agb_feedback.utils.random_streams import make_stream


def _assert_hermitian_psd(r):
    np.testing.assert_allclose(r, r.conj().T, atol=1e-12)
    eigvals = np.linalg.eigvalsh(r)
    assert eigvals[0] >= -1e-10 * eigvals[-1]


@pytest.mark.unit
class TestExponential:
    def test_alpha_zero_is_identity(self):
        r = exponential_correlation(ExponentialSpec(n_t=5, alpha=0.0))
        np.testing.assert_array_equal(r, np.eye(5))

    def test_real_rho_matrix(self):
        p = 0.6
        expected = np.array(
            [
                [1, p, p**2, p**3],
                [p, 1, p, p**2],
                [p**2, p, 1, p],
                [p**3, p**2, p, 1],
            ]
        )
        r = exponential_correlation(ExponentialSpec(n_t=4, alpha=p))
        np.testing.assert_allclose(r, expected, atol=1e-14)

    def test_complex_rho_is_hermitian_psd(self):
        r = exponential_correlation(ExponentialSpec(n_t=8, alpha=0.9, theta=math.pi / 3))
        _assert_hermitian_psd(r)
        assert np.all(np.linalg.eigvalsh(r) > 0)
        assert np.all(np.diag(r) == 1.0)
        # upper triangle carries rho^(j-i)
        assert r[0, 1] == pytest.approx(0.9 * np.exp(1j * math.pi / 3))

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            ExponentialSpec(n_t=4, alpha=1.0)

    def test_user_phases_differ(self, rng):
        rs = user_exponential_correlations(4, 0.8, 3, rng)
        assert len(rs) == 3
        assert not np.allclose(rs[0], rs[1])
        assert all(abs(abs(r[0, 1]) - 0.8) < 1e-12 for r in rs)

    def test_random_phase_range(self, rng):
        phases = [random_phase(rng) for _ in range(1000)]
        assert all(-math.pi < p <= math.pi for p in phases)


@pytest.mark.unit
class TestUpa:
    def test_gamma(self):
        # (1 + (5/3)^3)^-1 = 27/152
        assert UpaSpec(n_v=2, n_h=2).gamma == pytest.approx(27 / 152, abs=1e-9)

    def test_axis_diagonal_equals_gamma(self):
        spec = UpaSpec(n_v=4, n_h=4)
        r = upa_axis_correlation(spec, "horizontal", 0.0, spec.horizontal_spread, 4)
        np.testing.assert_allclose(np.diag(r).real, spec.gamma, atol=1e-12)
        _assert_hermitian_psd(r)

    def test_axis_node_doubling(self):
        spec = UpaSpec(n_v=4, n_h=4)
        delta = math.atan(30 / 50)
        coarse = upa_axis_correlation(spec, "horizontal", 0.0, delta, 4, nodes=64)
        fine = upa_axis_correlation(spec, "horizontal", 0.0, delta, 4, nodes=128)
        np.testing.assert_allclose(coarse, fine, atol=1e-8)

    def test_kronecker_eigenvalues(self):
        spec = UpaSpec(n_v=2, n_h=4)
        phi = 0.4
        r = upa_correlation(spec, phi)
        r_v = upa_axis_correlation(spec, "vertical", spec.vertical_aoa, spec.vertical_spread, 2)
        r_h = upa_axis_correlation(spec, "horizontal", phi, spec.horizontal_spread, 4)
        products = np.sort(np.outer(np.linalg.eigvalsh(r_v), np.linalg.eigvalsh(r_h)).ravel())
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(r)), products, atol=1e-8)

    def test_entrywise_kronecker(self):
        spec = UpaSpec(n_v=2, n_h=2)
        r = upa_correlation(spec, 0.0)
        _assert_hermitian_psd(r)
        assert r.shape == (4, 4)
        assert np.trace(r).real == pytest.approx(4 * spec.gamma**2, rel=1e-12)

    def test_table_geometry(self):
        spec = UpaSpec(n_v=4, n_h=4)
        upper, lower = math.atan(80 / 60), math.atan(20 / 60)
        assert spec.vertical_spread == pytest.approx(0.5 * (upper - lower))
        assert spec.vertical_aoa == pytest.approx(0.5 * (upper + lower))
        assert spec.horizontal_spread == pytest.approx(math.atan(0.6))


@pytest.mark.unit
class TestJakes:
    def test_static_user(self):
        assert jakes_eta(0.0, 2.5e9, 5e-3) == pytest.approx(1.0)

    def test_pedestrian(self):
        assert jakes_eta(3.0 / 3.6, 2.5e9, 5e-3) == pytest.approx(0.9881, abs=1e-4)

    def test_first_zero(self):
        f_c, tau = 2.5e9, 5e-3
        v = 2.404826 / (2 * math.pi * tau) * 3e8 / f_c
        assert abs(jakes_eta(v, f_c, tau)) < 1e-5


@pytest.mark.unit
class TestGaussMarkov:
    def test_eta_one_repeats(self, rng):
        r = exponential_correlation(ExponentialSpec(n_t=4, alpha=0.5))
        seq = gauss_markov_sequence(r, 1.0, 5, rng)
        assert len(seq) == 5
        for h in seq[1:]:
            np.testing.assert_array_equal(h, seq[0])

    def test_bad_eta(self, rng):
        with pytest.raises(ValueError):
            gauss_markov_sequence(np.eye(2), 1.5, 3, rng)

    def test_draw_channels_shape(self, rng):
        rs = [np.eye(3), 2 * np.eye(3)]
        single = draw_channels(rs, rng)
        assert single.vectors.shape == (2, 1, 3)
        multi = draw_channels(rs, rng, TemporalSpec(eta=0.9, blocks=4))
        assert (multi.users, multi.blocks) == (2, 4)
        assert multi.block(2).shape == (2, 3)

    def test_reproducible(self):
        r = np.eye(3)
        a = gauss_markov_sequence(r, 0.7, 3, make_stream(5, 1))
        b = gauss_markov_sequence(r, 0.7, 3, make_stream(5, 1))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    @pytest.mark.slow
    def test_lag_one_moment_and_stationarity(self, rng):
        eta, trials = 0.9881, 100_000
        r = exponential_correlation(ExponentialSpec(n_t=4, alpha=0.9))
        first = np.empty((trials, 4), dtype=complex)
        second = np.empty((trials, 4), dtype=complex)
        last = np.empty((trials, 4), dtype=complex)
        for t in range(trials):
            seq = gauss_markov_sequence(r, eta, 3, rng)
            first[t], second[t], last[t] = seq[0], seq[1], seq[2]
        band = 5 * math.sqrt(2.0 / trials)
        lag_one = second.T @ first.conj() / trials
        np.testing.assert_allclose(lag_one, eta * r, atol=band)
        np.testing.assert_allclose(first.T @ first.conj() / trials, r, atol=band)
        np.testing.assert_allclose(last.T @ last.conj() / trials, r, atol=band)

    @pytest.mark.slow
    def test_memoryless(self, rng):
        trials = 100_000
        pairs = [gauss_markov_sequence(np.eye(2), 0.0, 2, rng) for _ in range(trials)]
        cross = sum(np.outer(b, a.conj()) for a, b in pairs) / trials
        assert np.max(np.abs(cross)) < 5 * math.sqrt(1.0 / trials)


@pytest.mark.unit
class TestEstimationError:
    def test_zero_variance_is_copy(self, rng):
        h = np.array([1 + 1j, 2.0, -1j])
        out = add_estimation_error(h, 0.0, rng)
        np.testing.assert_array_equal(out, h)
        assert out is not h

    @pytest.mark.parametrize("sigma2", [0.01, 0.05])
    def test_sample_variance(self, rng, sigma2):
        n = 100_000
        error = add_estimation_error(np.zeros(n), sigma2, rng)
        power = np.abs(error) ** 2
        stderr = power.std(ddof=1) / math.sqrt(n)
        assert abs(power.mean() - sigma2) < 5 * stderr

    def test_negative_variance(self, rng):
        with pytest.raises(ValueError):
            add_estimation_error(np.ones(2), -0.1, rng)
