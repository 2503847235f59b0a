"""
Zero-Forcing Precoder
Beamformers from fed-back directions and equal-power sum rate
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from agb_feedback.exceptions import DimMismatch
from agb_feedback.utils.mathkit import (
    ComplexMatrix,
    ComplexVector,
    as_complex_matrix,
    right_pseudo_inverse,
)

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class BeamformerSet:
    """N_t x K beamformers with unit-norm columns"""

    w: NDArray[np.complex128]

    def __post_init__(self) -> None:
        norms = np.linalg.norm(self.w, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("Beamformer columns must have unit norm")

    @property
    def users(self) -> int:
        return self.w.shape[1]


def channel_rows(vectors: Sequence[ComplexVector]) -> ComplexMatrix:
    """K x N_t matrix whose k-th row is h_k^H"""
    return np.asarray(vectors, dtype=np.complex128).conj()


def zfbf(h_hat: ComplexMatrix) -> BeamformerSet:
    """Normalized columns of the right pseudo-inverse of H_hat (rows h_hat_k^H)"""
    w = right_pseudo_inverse(h_hat)
    return BeamformerSet(w / np.linalg.norm(w, axis=0, keepdims=True))


def sum_rate(h_true: ComplexMatrix, w: BeamformerSet, p: float) -> float:
    """sum_k log2(1 + (P/K)|h_k^H w_k|^2 / (1 + (P/K) sum_(j != k) |h_k^H w_j|^2))"""
    h_true = as_complex_matrix(h_true)
    if h_true.shape[0] != w.users or h_true.shape[1] != w.w.shape[0]:
        raise DimMismatch(f"Channel {h_true.shape} vs beamformers {w.w.shape}")
    if p <= 0:
        raise ValueError(f"Power must be positive, got {p}")
    gains = np.abs(h_true @ w.w) ** 2
    per_user = p / w.users
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    sinr = per_user * signal / (1.0 + per_user * interference)
    return float(np.log2(1.0 + sinr).sum())


def perfect_csit_rate(h_true: ComplexMatrix, p: float) -> float:
    """ZFBF on the true directions"""
    h_true = as_complex_matrix(h_true)
    directions = h_true / np.linalg.norm(h_true, axis=1, keepdims=True)
    return sum_rate(h_true, zfbf(directions), p)


def db_to_linear(p_db: float) -> float:
    return float(10.0 ** (p_db / 10.0))
