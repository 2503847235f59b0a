"""Tests for utils/mathkit.py"""

import numpy as np
import pytest

from agb_feedback.exceptions import InvalidInterval, NonHermitian, NotPSD, RankDeficient
from agb_feedback.utils.mathkit import (
    as_complex_vector,
    bessel_j0,
    hermitian_sqrt,
    hermitian_sqrt_batch,
    integrate_1d,
    right_pseudo_inverse,
)


def _random_psd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T


@pytest.mark.unit
class TestHermitianSqrt:
    def test_identity(self):
        np.testing.assert_allclose(hermitian_sqrt(np.eye(4)), np.eye(4), atol=1e-12)

    def test_diagonal(self):
        np.testing.assert_allclose(hermitian_sqrt(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]), atol=1e-12)

    def test_multiply_back(self):
        r = np.array([[1.0, 0.5], [0.5, 1.0]])
        s = hermitian_sqrt(r)
        np.testing.assert_allclose(s @ s, r, atol=1e-8)
        np.testing.assert_allclose(s, s.conj().T, atol=1e-12)

    @pytest.mark.parametrize("n", [3, 16, 64])
    def test_random_psd(self, rng, n):
        r = _random_psd(rng, n)
        s = hermitian_sqrt(r)
        assert np.linalg.norm(s @ s - r) <= 1e-8 * np.linalg.norm(r)

    def test_rank_deficient_is_clamped(self):
        v = np.array([1.0, 1j, 0.5])
        r = np.outer(v, v.conj())
        s = hermitian_sqrt(r)
        np.testing.assert_allclose(s @ s, r, atol=1e-8)

    def test_non_hermitian(self):
        with pytest.raises(NonHermitian):
            hermitian_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_not_psd(self):
        with pytest.raises(NotPSD):
            hermitian_sqrt(np.diag([1.0, -1.0]))

    def test_batch_matches_single(self, rng):
        stack = np.array([_random_psd(rng, 5) for _ in range(3)])
        roots = hermitian_sqrt_batch(stack)
        for r, s in zip(stack, roots):
            np.testing.assert_allclose(s, hermitian_sqrt(r), atol=1e-9)


@pytest.mark.unit
class TestPseudoInverse:
    def test_identity(self):
        np.testing.assert_allclose(right_pseudo_inverse(np.eye(3)), np.eye(3), atol=1e-12)

    def test_orthonormal_rows(self):
        h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        np.testing.assert_allclose(right_pseudo_inverse(h), h.T, atol=1e-12)

    @pytest.mark.parametrize("k,n", [(2, 4), (4, 4), (8, 64)])
    def test_multiply_back(self, rng, k, n):
        h = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
        h /= np.linalg.norm(h, axis=1, keepdims=True)
        np.testing.assert_allclose(h @ right_pseudo_inverse(h), np.eye(k), atol=1e-8)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            right_pseudo_inverse(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_too_many_rows(self):
        with pytest.raises(RankDeficient):
            right_pseudo_inverse(np.ones((3, 2)))


@pytest.mark.unit
class TestBessel:
    def test_zero(self):
        assert bessel_j0(0.0) == pytest.approx(1.0, abs=1e-12)

    def test_small_argument(self):
        assert bessel_j0(0.21817) == pytest.approx(0.98813, abs=1e-4)

    def test_first_zero(self):
        assert abs(bessel_j0(2.404826)) < 1e-5

    def test_bounded(self):
        assert all(abs(bessel_j0(x)) <= 1.0 for x in np.linspace(-20, 20, 401))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            bessel_j0(float("inf"))


@pytest.mark.unit
class TestIntegrate:
    def test_constant(self):
        assert integrate_1d(lambda x: 1.0, 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)

    def test_full_period_exponential(self):
        assert abs(integrate_1d(lambda x: np.exp(1j * x), -np.pi, np.pi)) < 1e-9

    def test_sine(self):
        assert integrate_1d(np.sin, 0.0, np.pi, 64) == pytest.approx(2.0, abs=1e-9)

    def test_node_doubling(self):
        f = lambda a: np.exp(-2j * np.pi * 0.5 * 3 * np.sin(a))  # noqa: E731
        coarse = integrate_1d(f, -0.5, 0.7, 64)
        fine = integrate_1d(f, -0.5, 0.7, 128)
        assert abs(coarse - fine) < 1e-8

    def test_linear(self):
        f, g = np.cos, lambda x: x**2
        combined = integrate_1d(lambda x: 2.0 * f(x) - 3.0 * g(x), 0.0, 1.5)
        assert combined == pytest.approx(
            2.0 * integrate_1d(f, 0.0, 1.5) - 3.0 * integrate_1d(g, 0.0, 1.5), abs=1e-10
        )

    def test_reversed_interval(self):
        with pytest.raises(InvalidInterval):
            integrate_1d(np.sin, 1.0, 0.0)


@pytest.mark.unit
def test_vector_rejects_nan():
    with pytest.raises(ValueError):
        as_complex_vector([1.0, float("nan")])
