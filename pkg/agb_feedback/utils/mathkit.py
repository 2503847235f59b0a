"""
Numerical kernels
Hermitian matrix functions, pseudo-inverse, Bessel J0 and fixed-node quadrature
"""

import logging
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy import special

from agb_feedback.exceptions import InvalidInterval, NonHermitian, NotPSD, RankDeficient

logger = logging.getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]
ComplexVector = NDArray[np.complex128]

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
RANK_TOL = 1e-10
DEFAULT_NODES = 64


def as_complex_matrix(a: object) -> ComplexMatrix:
    """Coerce to a finite 2-D complex128 array"""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"Expected a matrix, got array with shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("Matrix has non-finite entries")
    return m


def as_complex_vector(v: object) -> ComplexVector:
    """Coerce to a finite 1-D complex128 array"""
    x = np.asarray(v, dtype=np.complex128)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"Expected a non-empty vector, got array with shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("Vector has non-finite entries")
    return x


def check_hermitian(r: ComplexMatrix, tol: float = HERMITIAN_TOL) -> None:
    """Raise NonHermitian unless r equals its conjugate transpose (relative Frobenius)"""
    if r.shape[0] != r.shape[1]:
        raise NonHermitian(f"Matrix is not square: {r.shape}")
    scale = max(np.linalg.norm(r), 1.0)
    gap = np.linalg.norm(r - r.conj().T)
    if gap > tol * scale:
        raise NonHermitian(f"Matrix asymmetry {gap:.3e} exceeds {tol:.0e} relative")


def hermitian_eigh(r: ComplexMatrix) -> tuple[NDArray[np.float64], ComplexMatrix]:
    """Eigendecomposition of a Hermitian matrix with clamped tiny negative eigenvalues"""
    r = as_complex_matrix(r)
    check_hermitian(r)
    # symmetrize away round-off before the solver sees it
    herm = 0.5 * (r + r.conj().T)
    eigvals, eigvecs = np.linalg.eigh(herm)
    lam_max = max(float(eigvals[-1]), 0.0)
    if eigvals[0] < -PSD_TOL * lam_max:
        raise NotPSD(
            f"Eigenvalue {eigvals[0]:.3e} below -{PSD_TOL:.0e} x max eigenvalue {lam_max:.3e}"
        )
    return np.clip(eigvals, 0.0, None), eigvecs


def hermitian_sqrt(r: ComplexMatrix) -> ComplexMatrix:
    """Hermitian PSD square root S with S @ S = R"""
    eigvals, eigvecs = hermitian_eigh(r)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.conj().T
    return 0.5 * (root + root.conj().T)


def hermitian_sqrt_batch(stack: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Square roots of a stack of Hermitian PSD matrices, shape (n, d, d)"""
    stack = np.asarray(stack, dtype=np.complex128)
    herm = 0.5 * (stack + np.conj(np.swapaxes(stack, -1, -2)))
    asym = np.linalg.norm(stack - herm, axis=(-2, -1))
    scale = np.maximum(np.linalg.norm(stack, axis=(-2, -1)), 1.0)
    if np.any(asym > HERMITIAN_TOL * scale):
        raise NonHermitian("Stacked matrix fails the symmetry check")
    eigvals, eigvecs = np.linalg.eigh(herm)
    lam_max = np.maximum(eigvals[..., -1], 0.0)
    if np.any(eigvals[..., 0] < -PSD_TOL * lam_max):
        raise NotPSD("Stacked matrix has a negative eigenvalue")
    roots = np.sqrt(np.clip(eigvals, 0.0, None))
    return (eigvecs * roots[..., None, :]) @ np.conj(np.swapaxes(eigvecs, -1, -2))


def right_pseudo_inverse(h: ComplexMatrix) -> ComplexMatrix:
    """H^H (H H^H)^-1 for a full-row-rank K x N matrix, K <= N"""
    h = as_complex_matrix(h)
    k, n = h.shape
    if k > n:
        raise RankDeficient(f"Right pseudo-inverse needs K <= N, got {k}x{n}")
    singular = np.linalg.svd(h, compute_uv=False)
    if singular[-1] <= RANK_TOL * singular[0]:
        raise RankDeficient(
            f"Smallest singular value {singular[-1]:.3e} vs largest {singular[0]:.3e}"
        )
    gram = h @ h.conj().T
    return np.linalg.solve(gram, h).conj().T


def bessel_j0(x: float) -> float:
    """Zeroth-order Bessel function of the first kind"""
    if not np.isfinite(x):
        raise ValueError(f"bessel_j0 needs a finite argument, got {x}")
    return float(special.j0(x))


@lru_cache(maxsize=16)
def _legendre_rule(nodes: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    return np.polynomial.legendre.leggauss(nodes)


def integrate_1d(
    f: Callable[[NDArray[np.float64]], object],
    lo: float,
    hi: float,
    nodes: int = DEFAULT_NODES,
) -> complex:
    """Gauss-Legendre estimate of the integral of f over [lo, hi]

    f is called once with the array of abscissae and may return an array of
    the same length or a scalar (broadcast).
    """
    if lo > hi:
        raise InvalidInterval(f"Lower bound {lo} exceeds upper bound {hi}")
    if nodes < 2:
        raise ValueError(f"Quadrature needs at least 2 nodes, got {nodes}")
    x, w = _legendre_rule(nodes)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    values = np.broadcast_to(np.asarray(f(mid + half * x), dtype=np.complex128), x.shape)
    return complex(half * np.dot(w, values))
