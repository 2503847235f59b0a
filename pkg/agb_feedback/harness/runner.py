"""
Scenario Runner
Monte Carlo sweeps over a scenario grid with per-trial seeded streams
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from agb_feedback.core.analysis import BoundParams, distortion_bound_exp, pearson_or_zero
from agb_feedback.exceptions import RankDeficient
from agb_feedback.harness.config import GridPoint, ResultRow, ScenarioConfig
from agb_feedback.harness.methods import (
    FeedbackMethod,
    TrialDraw,
    build_method,
    correlation_trace,
    draw_view,
)
from agb_feedback.utils.random_streams import make_stream, scenario_key
from agb_feedback.utils.settings_config import get_settings

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 100


@dataclass
class TrialOutcome:
    """Per-method values of one trial and how many draws were thrown away"""

    values: dict[str, float]
    discards: int = 0
    power: float = 0.0
    loss: float = 0.0


@dataclass
class PointJob:
    cfg: ScenarioConfig
    point: GridPoint
    methods: list[FeedbackMethod]
    key: int
    trace: float = field(default=1.0)

    def run_trial(self, trial: int) -> TrialOutcome:
        """One trial; rank-deficient draws are redrawn on a fresh stream"""
        for attempt in range(MAX_ATTEMPTS):
            key = (self.key, self.point.index, trial, attempt)
            rng = make_stream(self.cfg.seed, *key)
            view = draw_view(self.cfg, self.point, rng, self.cfg.array_shape)
            draw = TrialDraw(view=view, seed=self.cfg.seed, key=key)
            try:
                if self.cfg.kind == "distortion":
                    return self._distortion_outcome(draw, attempt)
                values = {m.name: m.rate(draw, self.point.power) for m in self.methods}
                return TrialOutcome(values=values, discards=attempt)
            except RankDeficient as e:
                logger.warning(
                    f"Trial {trial} at x={self.point.x} redrawn (attempt {attempt}): {str(e)}"
                )
        raise RankDeficient(f"Trial {trial} stayed rank deficient after {MAX_ATTEMPTS} draws")

    def _distortion_outcome(self, draw: TrialDraw, attempt: int) -> TrialOutcome:
        raw = {m.name: m.distortion(draw) for m in self.methods}
        h = draw.view.observed[0, 0]
        power = float(np.vdot(h, h).real)
        outcome = TrialOutcome(
            values={name: value / self.trace for name, value in raw.items()},
            discards=attempt,
            power=power,
        )
        if "agb" in raw:
            outcome.loss = raw["agb"] / power
        return outcome


def _summary(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error, summed in trial order"""
    mean = float(np.mean(values))
    if values.shape[0] < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.shape[0]))


def _bound_row(cfg: ScenarioConfig, point: GridPoint, outcomes: list[TrialOutcome]) -> ResultRow:
    """Normalized closed-form distortion bound with xi estimated from the agb trials"""
    xi = pearson_or_zero(
        np.array([o.power for o in outcomes]), np.array([o.loss for o in outcomes])
    )
    params = BoundParams(
        n_t=cfg.n_t,
        n_g=cfg.n_g,
        b=point.b_total,
        b_p=point.b_p,
        rho=point.alpha,
        xi=max(xi, 0.0),
    )
    logger.info(f"Bound at alpha={point.alpha}: xi={xi:.4f}")
    return ResultRow(
        scenario=cfg.name,
        x=point.x,
        method="bound",
        mean_rate=distortion_bound_exp(params) / cfg.n_t,
        stderr=0.0,
        trials=len(outcomes),
        seed=cfg.seed,
    )


def run_point(
    cfg: ScenarioConfig, point: GridPoint, threads: int = 1
) -> list[ResultRow]:
    """All configured methods at one grid value, on shared trial channels"""
    methods = [build_method(name, cfg, point) for name in cfg.methods if name != "bound"]
    job = PointJob(cfg=cfg, point=point, methods=methods, key=scenario_key(cfg.name))
    if cfg.kind == "distortion":
        job.trace = correlation_trace(cfg, point)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(job.run_trial, range(cfg.trials)))
    else:
        outcomes = [job.run_trial(trial) for trial in range(cfg.trials)]

    discards = sum(o.discards for o in outcomes)
    rows = []
    for method in methods:
        mean, stderr = _summary(np.array([o.values[method.name] for o in outcomes]))
        rows.append(
            ResultRow(
                scenario=cfg.name,
                x=point.x,
                method=method.name,
                mean_rate=mean,
                stderr=stderr,
                trials=len(outcomes),
                seed=cfg.seed,
                discards=discards,
            )
        )
    if "bound" in cfg.methods:
        rows.append(_bound_row(cfg, point, outcomes))
    logger.debug(f"{cfg.name}: x={point.x} done, {discards} discarded draw(s)")
    return rows


def run_scenario(cfg: ScenarioConfig, threads: int | None = None) -> list[ResultRow]:
    """Rows for every grid value and method, in grid then method order"""
    threads = get_settings().threads if threads is None else threads
    logger.info(
        f"Running scenario {cfg.name}: {len(cfg.grid)} grid point(s), "
        f"{cfg.trials} trials, methods {', '.join(cfg.methods)}"
    )
    rows: list[ResultRow] = []
    for index in range(len(cfg.grid)):
        rows.extend(run_point(cfg, cfg.point(index), threads))
    logger.info(f"Scenario {cfg.name} finished with {len(rows)} rows")
    return rows
