"""
Distortion and Rate Analysis
Closed-form bounds, bit-scaling rules and Monte Carlo estimators for the AGB scheme
"""

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from agb_feedback.core.agb import agb_encode_detail, build_context, build_layout
from agb_feedback.core.channel import (
    ExponentialSpec,
    exponential_correlation,
    random_phase,
)
from agb_feedback.core.codebook import (
    line_packing_codebook,
    quantize,
    statistic_codebook,
)
from agb_feedback.core.patterns import array_pattern_set
from agb_feedback.exceptions import InvalidTarget
from agb_feedback.utils.mathkit import hermitian_sqrt
from agb_feedback.utils.random_streams import complex_gaussian

logger = logging.getLogger(__name__)

BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 400
FLAT_TOL = 1e-12


class BoundParams(BaseModel):
    """Inputs shared by the closed-form bounds; p is linear power"""

    model_config = ConfigDict(frozen=True)

    n_t: int = Field(ge=2)
    n_g: int = Field(ge=2)
    b: float = Field(ge=0)
    b_p: float = Field(default=0, ge=0)
    rho: float = Field(ge=0, lt=1)
    xi: float = Field(default=0.0, ge=0)
    k_users: int = Field(default=1, ge=1)
    p: float = Field(default=1.0, gt=0)
    beta: float = Field(default=2.0, gt=1)

    @model_validator(mode="after")
    def _check_bits(self) -> "BoundParams":
        if self.b < self.b_p:
            raise ValueError(f"Total bits {self.b} below header bits {self.b_p}")
        return self


class ResidualEstimate(BaseModel):
    """Sample mean with its standard error"""

    mean: float
    stderr: float = Field(ge=0)
    trials: int


def qub_delta(sigma1: float, sigma2: float, bits: float, dim: int) -> float:
    """(sigma2^2 / sigma1^2) 2^(-bits/(dim-1))"""
    if not sigma1 >= sigma2 > 0:
        raise ValueError(f"Need sigma1 >= sigma2 > 0, got {sigma1}, {sigma2}")
    if dim < 2:
        raise ValueError(f"QUB needs dim >= 2, got {dim}")
    return (sigma2 / sigma1) ** 2 * 2.0 ** (-bits / (dim - 1))


def distortion_bound(n_t: int, delta: float, xi: float) -> float:
    """N_t delta + xi sqrt(2 N_t delta)"""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    if xi < 0:
        raise ValueError(f"xi must be non-negative, got {xi}")
    return n_t * delta + xi * math.sqrt(2.0 * n_t * delta)


def exp_model_singulars(rho: float, n_t: int) -> np.ndarray:
    """Circulant approximation mu_i, i = 1..N_t (not sorted)"""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    i = np.arange(1, n_t + 1)
    return (1.0 - rho**2) / (1.0 + rho**2 - 2.0 * rho * np.cos(2.0 * np.pi * i / n_t))


def exp_singular_ratio(rho: float, n_t: int) -> float:
    """sigma2 / sigma1 = mu_(N_t - 1) / mu_(N_t)"""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    numerator = 1.0 + rho**2 - 2.0 * rho
    denominator = 1.0 + rho**2 - 2.0 * rho * math.cos(2.0 * math.pi * (n_t - 1) / n_t)
    return numerator / denominator


def exp_delta(params: BoundParams) -> float:
    """delta of the exponential model at the params' payload size"""
    ratio = exp_singular_ratio(params.rho, params.n_t)
    return ratio**2 * 2.0 ** (-(params.b - params.b_p) / (params.n_g - 1))


def distortion_bound_exp(params: BoundParams) -> float:
    ratio = exp_singular_ratio(params.rho, params.n_t)
    payload = params.b - params.b_p
    first = params.n_t * ratio**2 * 2.0 ** (-payload / (params.n_g - 1))
    second = (
        params.xi
        * math.sqrt(2.0 * params.n_t)
        * ratio
        * 2.0 ** (-payload / (2.0 * (params.n_g - 1)))
    )
    return first + second


def rate_gap_bound(params: BoundParams, delta: float) -> float:
    """log2(1 + P (K-1)/K (N_t delta + xi sqrt(2 N_t delta))) per user"""
    k = params.k_users
    return math.log2(
        1.0 + params.p * (k - 1) / k * distortion_bound(params.n_t, delta, params.xi)
    )


def _target_distortion(params: BoundParams) -> float:
    if params.k_users < 2:
        raise InvalidTarget("A single user has no interference gap to target")
    return (params.beta - 1.0) * params.k_users / (params.p * (params.k_users - 1))


def required_bits(params: BoundParams) -> float:
    """Bits B whose delta(B) puts the rate-gap bound exactly at log2(beta)

    Solves N_t delta + xi sqrt(2 N_t delta) = (beta-1) K / (P (K-1)) for sqrt(delta).
    """
    target = _target_distortion(params)
    sqrt_delta = (
        -params.xi * math.sqrt(2.0) + math.sqrt(2.0 * params.xi**2 + 4.0 * target)
    ) / (2.0 * math.sqrt(params.n_t))
    ratio = exp_singular_ratio(params.rho, params.n_t)
    if sqrt_delta <= 0.0 or ratio <= 0.0:
        raise InvalidTarget("Bit-scaling logarithm has a non-positive argument")
    return params.b_p + (params.n_g - 1) * (
        math.log2(ratio**2) - 2.0 * math.log2(sqrt_delta)
    )


def _gap_at_bits(params: BoundParams, bits: float) -> float:
    ratio = exp_singular_ratio(params.rho, params.n_t)
    delta = min(ratio**2 * 2.0 ** (-(bits - params.b_p) / (params.n_g - 1)), 1.0)
    return rate_gap_bound(params, delta)


def required_bits_bisection(params: BoundParams) -> float:
    """Numerical inversion of the rate-gap bound in B"""
    target = math.log2(params.beta)
    _target_distortion(params)
    lo, hi = float(params.b_p), float(params.b_p) + 64.0
    while _gap_at_bits(params, hi) > target:
        hi += 2.0 * (hi - lo)
    while _gap_at_bits(params, lo) < target:
        lo -= 64.0
        if lo < params.b_p - 1e6:
            raise InvalidTarget("Target gap is met by every bit count")
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if _gap_at_bits(params, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < BISECTION_TOL:
            break
    return 0.5 * (lo + hi)


def pearson_or_zero(x: np.ndarray, y: np.ndarray) -> float:
    """Sample correlation; 0 when either sample is constant up to round-off"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for sample in (x, y):
        if np.ptp(sample) <= FLAT_TOL * max(float(np.max(np.abs(sample))), 1.0):
            return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def estimate_xi(
    model: ExponentialSpec,
    n_g: int,
    bits: int,
    b_p: int,
    trials: int,
    rng: np.random.Generator,
    normalize_power: bool = False,
) -> float:
    """Correlation between ||h||^2 and the AGB loss 1 - |h_bar^H h_tilde|^2

    Each trial draws a fresh user phase, a channel, the user's statistic
    codebooks and runs the full encoder.
    """
    if trials < 2:
        raise ValueError(f"estimate_xi needs at least 2 trials, got {trials}")
    if trials < 1000:
        logger.warning(f"estimate_xi with only {trials} trials is noisy")
    n_t = model.n_t
    common = exponential_correlation(ExponentialSpec(n_t=n_t, alpha=model.alpha))
    layout = build_layout(array_pattern_set(common, (1, n_t), n_g, b_p))
    base = line_packing_codebook(n_g, bits - b_p, rng)

    powers = np.empty(trials)
    losses = np.empty(trials)
    for t in range(trials):
        r = exponential_correlation(model.model_copy(update={"theta": random_phase(rng)}))
        h = hermitian_sqrt(r) @ complex_gaussian(rng, n_t)
        if normalize_power:
            h *= math.sqrt(n_t) / np.linalg.norm(h)
        _, distortion, _ = agb_encode_detail(h, build_context(r, layout, base))
        powers[t] = float(np.vdot(h, h).real)
        losses[t] = distortion / powers[t]
    xi = pearson_or_zero(powers, losses)
    logger.info(f"Estimated xi={xi:.4f} from {trials} trials (alpha={model.alpha}, n_t={n_t})")
    return xi


def appendix_a_residual(
    model: ExponentialSpec, bits: int, trials: int, rng: np.random.Generator
) -> ResidualEstimate:
    """Mean of Re((h_A^H c)^* (h_B^H c)) for the odd/even split

    h_A holds antennas 0, 2, 4, ... and is quantized with the statistic
    codebook of its own correlation; h_B holds the remaining antennas.
    """
    n_t = model.n_t
    if n_t % 2:
        raise ValueError(f"Odd/even split needs an even antenna count, got {n_t}")
    if trials < 2:
        raise ValueError(f"Need at least 2 trials, got {trials}")
    half = n_t // 2
    select_a = np.arange(0, n_t, 2)
    select_b = np.arange(1, n_t, 2)
    base = line_packing_codebook(half, bits, rng)

    samples = np.empty(trials)
    for t in range(trials):
        r = exponential_correlation(model.model_copy(update={"theta": random_phase(rng)}))
        h = hermitian_sqrt(r) @ complex_gaussian(rng, n_t)
        h_bar = h / np.linalg.norm(h)
        h_a, h_b = h_bar[select_a], h_bar[select_b]
        codebook = statistic_codebook(r[np.ix_(select_a, select_a)], base)
        _, c = quantize(h_a / np.linalg.norm(h_a), codebook)
        samples[t] = float((np.conj(np.vdot(h_a, c)) * np.vdot(h_b, c)).real)

    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(trials))
    logger.info(f"Cross-term residual {mean:.5f} +/- {stderr:.5f} over {trials} trials")
    return ResidualEstimate(mean=mean, stderr=stderr, trials=trials)
