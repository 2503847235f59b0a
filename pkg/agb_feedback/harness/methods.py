"""
Feedback Methods
AGB variants and baseline schemes evaluated on a shared trial channel draw
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from agb_feedback.core.agb import (
    agb_decode,
    agb_distortion,
    agb_encode,
    agb_encode_detail,
    build_context,
    build_layout,
    conventional_decode,
    conventional_encode,
)
from agb_feedback.core.channel import (
    ExponentialSpec,
    TemporalSpec,
    UpaSpec,
    add_estimation_error,
    draw_channels,
    exponential_correlation,
    random_phase,
    upa_correlation,
)
from agb_feedback.core.codebook import (
    Codebook,
    ProductCodebook,
    block_count,
    cached_line_packing,
    split_bits,
    statistic_codebook,
)
from agb_feedback.core.patterns import (
    GroupPattern,
    Strategy,
    array_pattern_set,
    auto_partition,
    subarray_index_maps,
)
from agb_feedback.core.precoder import channel_rows, perfect_csit_rate, sum_rate, zfbf
from agb_feedback.exceptions import ConfigInvalid, NonDivisible
from agb_feedback.harness.config import GridPoint, ModelConfig, ScenarioConfig
from agb_feedback.utils.mathkit import ComplexMatrix
from agb_feedback.utils.random_streams import make_stream, scenario_key

logger = logging.getLogger(__name__)

# extra spawn-key components for streams that are not per-trial channel draws
PATTERN_STREAM = 1
REDUCED_STREAM = 2


@dataclass(frozen=True)
class ChannelView:
    """Per-user correlations with true and estimated channels, shape (users, blocks, n_t)"""

    correlations: tuple[ComplexMatrix, ...]
    true: np.ndarray
    observed: np.ndarray

    @property
    def blocks(self) -> int:
        return self.true.shape[1]


@dataclass(frozen=True)
class TrialDraw:
    """One trial's channels plus the stream key they were drawn from"""

    view: ChannelView
    seed: int
    key: tuple[int, ...]


def model_correlation(
    model: ModelConfig, shape: tuple[int, int], alpha: float, phase: float
) -> ComplexMatrix:
    """Correlation of a (rows, cols) array; phase is theta (exponential) or phi_H (UPA)"""
    if model.kind == "upa":
        spec = UpaSpec(
            n_v=shape[0],
            n_h=shape[1],
            spacing=model.spacing,
            pathloss_exp=model.pathloss_exp,
            elevation=model.elevation,
            scatter_radius=model.scatter_radius,
            distance=model.distance,
        )
        return upa_correlation(spec, phase)
    return exponential_correlation(
        ExponentialSpec(n_t=shape[0] * shape[1], alpha=alpha, theta=phase)
    )


def draw_view(
    cfg: ScenarioConfig,
    point: GridPoint,
    rng: np.random.Generator,
    shape: tuple[int, int],
) -> ChannelView:
    """Random per-user phases, channel sequences and additive estimation error"""
    correlations = tuple(
        model_correlation(cfg.model, shape, point.alpha, random_phase(rng))
        for _ in range(cfg.k_users)
    )
    temporal = None
    if cfg.temporal is not None:
        temporal = TemporalSpec(eta=cfg.temporal.resolved_eta, blocks=cfg.temporal.blocks)
    true = draw_channels(list(correlations), rng, temporal).vectors
    observed = np.array(
        [[add_estimation_error(h, point.error_variance, rng) for h in user] for user in true],
        dtype=np.complex128,
    )
    return ChannelView(correlations=correlations, true=true, observed=observed)


class FeedbackMethod(ABC):
    """One way of turning estimated channels into fed-back unit directions"""

    name: str

    def view(self, draw: TrialDraw) -> ChannelView:
        return draw.view

    @abstractmethod
    def directions(self, view: ChannelView) -> np.ndarray:
        """Unit-norm fed-back directions, shape (users, blocks, dim)"""

    def rate(self, draw: TrialDraw, power: float) -> float:
        """ZFBF sum rate on the true channels, averaged over the fading blocks"""
        view = self.view(draw)
        fed = self.directions(view)
        rates = [
            sum_rate(channel_rows(view.true[:, block]), zfbf(channel_rows(fed[:, block])), power)
            for block in range(view.blocks)
        ]
        return float(np.mean(rates))

    def distortion(self, draw: TrialDraw) -> float:
        """||h||^2 (1 - |h_bar^H c|^2) of the first user in the first block"""
        view = self.view(draw)
        fed = self.directions(view)
        return agb_distortion(view.observed[0, 0], fed[0, 0])


class PerfectCsitMethod(FeedbackMethod):
    name = "perfect-csit"

    def directions(self, view: ChannelView) -> np.ndarray:
        return view.true / np.linalg.norm(view.true, axis=-1, keepdims=True)

    def rate(self, draw: TrialDraw, power: float) -> float:
        view = draw.view
        rates = [
            perfect_csit_rate(channel_rows(view.true[:, block]), power)
            for block in range(view.blocks)
        ]
        return float(np.mean(rates))


class ConventionalMethod(FeedbackMethod):
    """Full-dimension statistic codebook per user; a product codebook past the flat cap"""

    name = "conventional"

    def __init__(self, n_t: int, bits: int, shape: tuple[int, int], seed: int):
        blocks = block_count(bits)
        if blocks == 1:
            self.index_maps: list[tuple[int, ...]] = [tuple(range(n_t))]
            self.bases = [cached_line_packing(n_t, bits, seed)]
        else:
            self.index_maps = subarray_index_maps(shape[0], shape[1], blocks)
            self.bases = [
                cached_line_packing(len(index_map), block_bits, seed)
                for index_map, block_bits in zip(self.index_maps, split_bits(bits, blocks))
            ]
            logger.info(f"Conventional feedback uses a {blocks}-block product codebook ({bits} bits)")

    def codebook(self, r: ComplexMatrix) -> Codebook | ProductCodebook:
        if len(self.bases) == 1:
            return statistic_codebook(r, self.bases[0])
        return ProductCodebook(
            blocks=tuple(
                statistic_codebook(r[np.ix_(index_map, index_map)], base)
                for index_map, base in zip(self.index_maps, self.bases)
            ),
            index_maps=tuple(self.index_maps),
        )

    def directions(self, view: ChannelView) -> np.ndarray:
        fed = np.empty_like(view.observed)
        for user, r in enumerate(view.correlations):
            codebook = self.codebook(r)
            for block in range(view.blocks):
                index = conventional_encode(view.observed[user, block], codebook)
                fed[user, block] = conventional_decode(index, codebook)
        return fed


class AgbMethod(FeedbackMethod):
    """AGB feedback with a pattern set chosen from the common (phase-free) correlation"""

    def __init__(self, cfg: ScenarioConfig, point: GridPoint, strategy: Strategy):
        self.name = {"packing": "agb", "random": "agb-random", "adjacent": "agb-adjacent"}[strategy]
        shape = cfg.array_shape
        payload = point.payload_bits
        blocks = block_count(payload)
        if payload % blocks:
            raise NonDivisible(f"{payload} payload bits do not split over {blocks} codebook blocks")
        m = max(cfg.m or auto_partition(cfg.n_t, cfg.n_g, point.b_p), blocks)

        common = model_correlation(cfg.model, shape, point.alpha, 0.0)
        rng = None
        if strategy == "random":
            rng = make_stream(cfg.seed, scenario_key(cfg.name), point.index, PATTERN_STREAM)
        patterns = array_pattern_set(
            common, shape, cfg.n_g, point.b_p, m=m, j=cfg.pattern_j, strategy=strategy, rng=rng
        )
        index_maps = subarray_index_maps(shape[0], shape[1], blocks) if blocks > 1 else None
        self.layout = build_layout(patterns, index_maps)
        self.base = cached_line_packing(self.layout.block_dim, payload // blocks, cfg.seed)
        logger.debug(
            f"{self.name}: {len(patterns)} patterns, {blocks} block(s) of "
            f"{payload // blocks} bits at grid point {point.index}"
        )

    def directions(self, view: ChannelView) -> np.ndarray:
        fed = np.empty_like(view.observed)
        for user, r in enumerate(view.correlations):
            ctx = build_context(r, self.layout, self.base)
            for block in range(view.blocks):
                packet = agb_encode(view.observed[user, block], ctx)
                fed[user, block] = agb_decode(packet, ctx)
        return fed

    def distortion(self, draw: TrialDraw) -> float:
        view = draw.view
        ctx = build_context(view.correlations[0], self.layout, self.base)
        _, distortion, _ = agb_encode_detail(view.observed[0, 0], ctx)
        return distortion


class AntennaSelectionMethod(FeedbackMethod):
    """One antenna per adjacent group stays active; the others are switched off"""

    name = "antenna-selection"

    def __init__(self, cfg: ScenarioConfig, point: GridPoint):
        pattern = GroupPattern.adjacent(cfg.n_t, cfg.n_g)
        self.representatives = [group[0] for group in pattern.groups]
        self.inner = ConventionalMethod(cfg.n_g, point.b_total, (1, cfg.n_g), cfg.seed)

    def view(self, draw: TrialDraw) -> ChannelView:
        reps = self.representatives
        return ChannelView(
            correlations=tuple(r[np.ix_(reps, reps)] for r in draw.view.correlations),
            true=draw.view.true[..., reps],
            observed=draw.view.observed[..., reps],
        )

    def directions(self, view: ChannelView) -> np.ndarray:
        return self.inner.directions(view)


def _reduced_shape(cfg: ScenarioConfig) -> tuple[int, int]:
    rows, cols = cfg.array_shape
    kappa = cfg.n_t // cfg.n_g
    if cols % kappa == 0:
        return rows, cols // kappa
    if rows % kappa == 0:
        return rows // kappa, cols
    raise ConfigInvalid(f"reduced-antenna: cannot shrink a {rows}x{cols} array by {kappa}")


class ReducedAntennaMethod(FeedbackMethod):
    """A separate array with only N_g antennas, quantized with the full bit budget"""

    name = "reduced-antenna"

    def __init__(self, cfg: ScenarioConfig, point: GridPoint):
        self.cfg = cfg
        self.point = point
        self.shape = _reduced_shape(cfg)
        self.inner = ConventionalMethod(cfg.n_g, point.b_total, self.shape, cfg.seed)

    def view(self, draw: TrialDraw) -> ChannelView:
        rng = make_stream(draw.seed, *draw.key, REDUCED_STREAM)
        return draw_view(self.cfg, self.point, rng, self.shape)

    def directions(self, view: ChannelView) -> np.ndarray:
        return self.inner.directions(view)


def baseline_antenna_selection(cfg: ScenarioConfig, point: GridPoint) -> FeedbackMethod:
    return AntennaSelectionMethod(cfg, point)


def baseline_reduced_antenna(cfg: ScenarioConfig, point: GridPoint) -> FeedbackMethod:
    return ReducedAntennaMethod(cfg, point)


def build_method(name: str, cfg: ScenarioConfig, point: GridPoint) -> FeedbackMethod:
    """Method hook for a configured method name at one grid point"""
    if name == "agb":
        return AgbMethod(cfg, point, "packing")
    if name == "agb-random":
        return AgbMethod(cfg, point, "random")
    if name == "agb-adjacent":
        return AgbMethod(cfg, point, "adjacent")
    if name == "conventional":
        return ConventionalMethod(cfg.n_t, point.b_total, cfg.array_shape, cfg.seed)
    if name == "antenna-selection":
        return baseline_antenna_selection(cfg, point)
    if name == "reduced-antenna":
        return baseline_reduced_antenna(cfg, point)
    if name == "perfect-csit":
        return PerfectCsitMethod()
    raise ConfigInvalid(f"methods: no feedback hook named {name!r}")


def correlation_trace(cfg: ScenarioConfig, point: GridPoint) -> float:
    """E||h||^2 of the configured model, used to normalize distortion"""
    r = model_correlation(cfg.model, cfg.array_shape, point.alpha, 0.0)
    return float(np.trace(r).real)
