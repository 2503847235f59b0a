"""
Channel models
Transmit correlation matrices (exponential, UPA) and correlated channel draws
"""

import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from agb_feedback.utils.mathkit import (
    ComplexMatrix,
    ComplexVector,
    as_complex_vector,
    bessel_j0,
    hermitian_sqrt,
    integrate_1d,
)
from agb_feedback.utils.random_streams import complex_gaussian

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 3e8
DEFAULT_BLOCKS = 10


class ExponentialSpec(BaseModel):
    """Exponential correlation rho = alpha * exp(j theta)"""

    model_config = ConfigDict(frozen=True)

    n_t: int = Field(ge=1)
    alpha: float = Field(ge=0.0, lt=1.0)
    theta: float = Field(default=0.0, gt=-math.pi, le=math.pi)

    @property
    def rho(self) -> complex:
        return self.alpha * complex(math.cos(self.theta), math.sin(self.theta))


class UpaSpec(BaseModel):
    """Uniform planar array geometry (vertical x horizontal elements)"""

    model_config = ConfigDict(frozen=True)

    n_v: int = Field(ge=1)
    n_h: int = Field(ge=1)
    spacing: float = Field(default=0.5, gt=0)
    pathloss_exp: float = Field(default=3.0, gt=0)
    elevation: float = Field(default=60.0, gt=0)
    scatter_radius: float = Field(default=30.0, gt=0)
    distance: float = Field(default=50.0, gt=0)

    @property
    def n_t(self) -> int:
        return self.n_v * self.n_h

    @property
    def gamma(self) -> float:
        return 1.0 / (1.0 + (self.distance / self.scatter_radius) ** self.pathloss_exp)

    @property
    def vertical_spread(self) -> float:
        s, r, u = self.distance, self.scatter_radius, self.elevation
        return 0.5 * (math.atan((s + r) / u) - math.atan((s - r) / u))

    @property
    def vertical_aoa(self) -> float:
        s, r, u = self.distance, self.scatter_radius, self.elevation
        return 0.5 * (math.atan((s + r) / u) + math.atan((s - r) / u))

    @property
    def horizontal_spread(self) -> float:
        return math.atan(self.scatter_radius / self.distance)


class TemporalSpec(BaseModel):
    """Gauss-Markov temporal correlation over L fading blocks"""

    model_config = ConfigDict(frozen=True)

    eta: float = Field(ge=0.0, le=1.0)
    blocks: int = Field(default=DEFAULT_BLOCKS, ge=1)


class ChannelRealization(BaseModel):
    """Per-user, per-block channel vectors, shape (users, blocks, n_t)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vectors: np.ndarray

    @model_validator(mode="after")
    def _check_shape(self) -> "ChannelRealization":
        if self.vectors.ndim != 3:
            raise ValueError(f"Expected (users, blocks, n_t) array, got {self.vectors.shape}")
        return self

    @property
    def users(self) -> int:
        return self.vectors.shape[0]

    @property
    def blocks(self) -> int:
        return self.vectors.shape[1]

    def block(self, index: int) -> ComplexMatrix:
        """Channel vectors of all users in one block, shape (users, n_t)"""
        return self.vectors[:, index, :]


def exponential_correlation(spec: ExponentialSpec) -> ComplexMatrix:
    """R with r_ij = rho^(j-i) on and above the diagonal, conjugate below"""
    rho = spec.rho
    powers = np.array([rho**k for k in range(spec.n_t)], dtype=np.complex128)
    idx = np.arange(spec.n_t)
    lag = idx[None, :] - idx[:, None]
    upper = powers[np.abs(lag)]
    r = np.where(lag >= 0, upper, np.conj(upper))
    np.fill_diagonal(r, 1.0)
    return r.astype(np.complex128)


def upa_axis_correlation(
    spec: UpaSpec,
    axis: Literal["horizontal", "vertical"],
    phi: float,
    delta: float,
    n: int,
    nodes: int = 64,
) -> ComplexMatrix:
    """Axis correlation gamma/(2 delta) * integral of exp(-j 2 pi D (m-p) sin a)"""
    if delta <= 0:
        raise ValueError(f"Angular spread must be positive, got {delta}")
    gamma = spec.gamma
    r = np.zeros((n, n), dtype=np.complex128)
    for lag in range(n):
        value = integrate_1d(
            lambda a, lag=lag: np.exp(-2j * np.pi * spec.spacing * lag * np.sin(a)),
            phi - delta,
            phi + delta,
            nodes,
        )
        entry = gamma / (2.0 * delta) * value
        for m in range(lag, n):
            r[m, m - lag] = entry
            r[m - lag, m] = np.conj(entry)
    np.fill_diagonal(r, gamma)
    logger.debug(f"{axis} axis correlation built: n={n}, phi={phi:.4f}, delta={delta:.4f}")
    return r


def upa_correlation(spec: UpaSpec, phi_h_k: float) -> ComplexMatrix:
    """R_t = R_V kron R_H with Table-style vertical geometry and per-user horizontal AoA"""
    r_v = upa_axis_correlation(
        spec, "vertical", spec.vertical_aoa, spec.vertical_spread, spec.n_v
    )
    r_h = upa_axis_correlation(
        spec, "horizontal", phi_h_k, spec.horizontal_spread, spec.n_h
    )
    return np.kron(r_v, r_h)


def random_phase(rng: np.random.Generator) -> float:
    """Phase drawn uniformly from (-pi, pi]"""
    return math.pi - float(rng.uniform(0.0, 2.0 * math.pi))


def user_exponential_correlations(
    n_t: int, alpha: float, users: int, rng: np.random.Generator
) -> list[ComplexMatrix]:
    """Per-user exponential correlation with an independent random phase each"""
    return [
        exponential_correlation(ExponentialSpec(n_t=n_t, alpha=alpha, theta=random_phase(rng)))
        for _ in range(users)
    ]


def jakes_eta(v: float, f_c: float, tau: float) -> float:
    """Temporal coefficient J0(2 pi f_D tau) with f_D = v f_c / c"""
    f_d = v * f_c / SPEED_OF_LIGHT
    return bessel_j0(2.0 * math.pi * f_d * tau)


def gauss_markov_sequence(
    r: ComplexMatrix, eta: float, blocks: int, rng: np.random.Generator
) -> list[ComplexVector]:
    """h_0 = R^1/2 g_0, h_l = eta h_(l-1) + sqrt(1 - eta^2) R^1/2 g_l"""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    root = hermitian_sqrt(r)
    n = root.shape[0]
    innovation = math.sqrt(max(1.0 - eta * eta, 0.0))
    h = root @ complex_gaussian(rng, n)
    sequence = [h]
    for _ in range(1, blocks):
        h = eta * h + innovation * (root @ complex_gaussian(rng, n))
        sequence.append(h)
    return sequence


def draw_channels(
    correlations: list[ComplexMatrix],
    rng: np.random.Generator,
    temporal: TemporalSpec | None = None,
) -> ChannelRealization:
    """One realization per user; a single block unless a temporal spec is given"""
    eta, blocks = (0.0, 1) if temporal is None else (temporal.eta, temporal.blocks)
    vectors = [gauss_markov_sequence(r, eta, blocks, rng) for r in correlations]
    return ChannelRealization(vectors=np.asarray(vectors, dtype=np.complex128))


def add_estimation_error(
    h: ComplexVector, sigma2: float, rng: np.random.Generator
) -> ComplexVector:
    """h + e with e i.i.d. CN(0, sigma2)"""
    if sigma2 < 0:
        raise ValueError(f"Error variance must be non-negative, got {sigma2}")
    h = as_complex_vector(h)
    if sigma2 == 0:
        return h.copy()
    return h + complex_gaussian(rng, h.shape[0], sigma2)
