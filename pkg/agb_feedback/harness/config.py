"""
Scenario Configuration
Pydantic models for experiment descriptions, result rows and the scenario registry
"""

import logging
import math
from importlib import resources
from pathlib import Path
from typing import Any, Literal

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from agb_feedback.core.analysis import BoundParams, required_bits
from agb_feedback.core.channel import jakes_eta
from agb_feedback.core.codebook import block_count
from agb_feedback.exceptions import ConfigInvalid
from agb_feedback.utils.settings_config import get_settings

logger = logging.getLogger(__name__)

RATE_METHODS = (
    "agb",
    "agb-random",
    "agb-adjacent",
    "conventional",
    "reduced-antenna",
    "antenna-selection",
    "perfect-csit",
)
DISTORTION_METHODS = ("agb", "agb-random", "agb-adjacent", "conventional", "bound")

MethodName = Literal[
    "agb",
    "agb-random",
    "agb-adjacent",
    "conventional",
    "reduced-antenna",
    "antenna-selection",
    "perfect-csit",
    "bound",
]


class ModelConfig(BaseModel):
    """Spatial correlation model of the transmit array"""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["exponential", "upa"] = "exponential"
    alpha: float = Field(default=0.8, ge=0.0, lt=1.0)
    n_v: int | None = Field(default=None, ge=1)
    n_h: int | None = Field(default=None, ge=1)
    spacing: float = Field(default=0.5, gt=0)
    pathloss_exp: float = Field(default=3.0, gt=0)
    elevation: float = Field(default=60.0, gt=0)
    scatter_radius: float = Field(default=30.0, gt=0)
    distance: float = Field(default=50.0, gt=0)

    @model_validator(mode="after")
    def _check_upa(self) -> "ModelConfig":
        if self.kind == "upa" and (self.n_v is None or self.n_h is None):
            raise ValueError("UPA model needs n_v and n_h")
        return self

    def array_shape(self, n_t: int) -> tuple[int, int]:
        """(rows, cols) of the array; a linear array is one row"""
        if self.kind == "upa":
            return (self.n_v, self.n_h)  # type: ignore[return-value]
        return (1, n_t)


class TemporalConfig(BaseModel):
    """Gauss-Markov evolution over fading blocks, eta given or from Jakes' model"""

    model_config = ConfigDict(extra="forbid")

    eta: float | None = Field(default=None, ge=0.0, le=1.0)
    speed_kmh: float | None = Field(default=None, ge=0)
    carrier_hz: float | None = Field(default=None, gt=0)
    interval_s: float = Field(default=5e-3, gt=0)
    blocks: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _check_source(self) -> "TemporalConfig":
        if self.eta is None and (self.speed_kmh is None or self.carrier_hz is None):
            raise ValueError("Give eta, or speed_kmh and carrier_hz")
        return self

    @property
    def resolved_eta(self) -> float:
        if self.eta is not None:
            return self.eta
        return jakes_eta(self.speed_kmh / 3.6, self.carrier_hz, self.interval_s)  # type: ignore[operator]


class GridPoint(BaseModel):
    """Parameters in force at one value of the independent variable"""

    model_config = ConfigDict(frozen=True)

    index: int
    x: float
    snr_db: float
    alpha: float
    b_total: int
    b_p: int
    error_variance: float

    @property
    def power(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def payload_bits(self) -> int:
        return self.b_total - self.b_p


class ScenarioConfig(BaseModel):
    """One experiment: model, array, bit split, sweep and methods"""

    model_config = ConfigDict(extra="forbid")

    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    description: str = ""
    kind: Literal["rate", "distortion"] = "rate"
    sweep: Literal["snr_db", "bits", "alpha", "b_p", "error_variance"] = "snr_db"
    grid: list[float] = Field(min_length=1)
    model: ModelConfig = Field(default_factory=ModelConfig)
    n_t: int = Field(ge=1)
    n_g: int = Field(ge=1)
    k_users: int = Field(default=1, ge=1)
    b_total: int = Field(ge=0)
    b_p: int = Field(default=0, ge=0)
    bits_rule: Literal["fixed", "required"] = "fixed"
    beta: float = Field(default=2.0, gt=1.0)
    xi: float = Field(default=0.05, ge=0.0)
    m: int | None = Field(default=None, ge=1)
    pattern_j: int | None = Field(default=None, ge=1)
    snr_db: float = 10.0
    methods: list[MethodName] = Field(min_length=1)
    trials: int = Field(default_factory=lambda: get_settings().default_trials, ge=1)
    seed: int = Field(default=0, ge=0)
    error_variance: float = Field(default=0.0, ge=0.0)
    temporal: TemporalConfig | None = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "ScenarioConfig":
        if self.n_t % self.n_g:
            raise ValueError(f"n_t={self.n_t} is not divisible by n_g={self.n_g}")
        if self.b_p > self.b_total:
            raise ValueError(f"b_p={self.b_p} exceeds b_total={self.b_total}")
        if self.m is not None and self.m & (self.m - 1):
            raise ValueError(f"m={self.m} is not a power of two")
        if self.model.kind == "upa" and self.model.n_v * self.model.n_h != self.n_t:  # type: ignore[operator]
            raise ValueError(f"UPA {self.model.n_v}x{self.model.n_h} does not have n_t={self.n_t}")
        if self.k_users > self.n_t:
            raise ValueError(f"k_users={self.k_users} exceeds n_t={self.n_t}")
        if self.sweep in ("bits", "b_p") and any(x != int(x) or x < 0 for x in self.grid):
            raise ValueError(f"{self.sweep} sweep needs non-negative integer grid values")
        if self.sweep == "alpha" and any(not 0.0 <= x < 1.0 for x in self.grid):
            raise ValueError("alpha sweep values must lie in [0, 1)")

        allowed = DISTORTION_METHODS if self.kind == "distortion" else RATE_METHODS
        unknown = [m for m in self.methods if m not in allowed]
        if unknown:
            raise ValueError(f"Methods {unknown} are not available for {self.kind} scenarios")
        if self.kind == "distortion":
            if self.k_users != 1:
                raise ValueError("Distortion scenarios are single-user")
            if self.sweep == "snr_db":
                raise ValueError("Distortion does not depend on SNR; sweep another variable")
            if self.temporal is not None:
                raise ValueError("Distortion scenarios use a single fading block")
            if "bound" in self.methods:
                if self.model.kind != "exponential":
                    raise ValueError("The distortion bound is defined for the exponential model only")
                if "agb" not in self.methods or self.n_g < 2:
                    raise ValueError("The bound row needs the agb method and n_g >= 2")
        if self.bits_rule == "required":
            if self.k_users < 2 or self.n_g < 2:
                raise ValueError("The required-bits rule needs at least two users and n_g >= 2")
            if self.sweep == "bits":
                raise ValueError("The required-bits rule sets the bits; sweep another variable")
        return self

    @property
    def array_shape(self) -> tuple[int, int]:
        return self.model.array_shape(self.n_t)

    def point(self, index: int) -> GridPoint:
        """Resolve the grid value at `index` into concrete parameters"""
        x = self.grid[index]
        values: dict[str, Any] = {
            "snr_db": self.snr_db,
            "alpha": self.model.alpha,
            "b_total": self.b_total,
            "b_p": self.b_p,
            "error_variance": self.error_variance,
        }
        if self.sweep == "snr_db":
            values["snr_db"] = x
        elif self.sweep == "alpha":
            values["alpha"] = x
        elif self.sweep == "bits":
            values["b_total"] = int(x)
        elif self.sweep == "b_p":
            # payload stays fixed while the header grows
            values["b_p"] = int(x)
            values["b_total"] = self.b_total - self.b_p + int(x)
        else:
            values["error_variance"] = x
        if self.bits_rule == "required":
            values["b_total"] = values["b_p"] + self._required_payload(values)
        if values["b_p"] > values["b_total"]:
            raise ConfigInvalid(f"grid[{index}]: b_p exceeds b_total at x={x}")
        return GridPoint(index=index, x=x, **values)

    def _required_payload(self, values: dict[str, Any]) -> int:
        """Payload bits from the bit-scaling rule, rounded up to whole codebook blocks"""
        params = BoundParams(
            n_t=self.n_t,
            n_g=self.n_g,
            b=values["b_p"],
            b_p=values["b_p"],
            rho=values["alpha"],
            xi=self.xi,
            k_users=self.k_users,
            p=10.0 ** (values["snr_db"] / 10.0),
            beta=self.beta,
        )
        payload = max(0, math.ceil(required_bits(params) - values["b_p"]))
        blocks = block_count(payload)
        payload = blocks * math.ceil(payload / blocks)
        logger.debug(f"Required payload at snr={values['snr_db']} dB: {payload} bits")
        return payload


class ResultRow(BaseModel):
    """One CSV line: mean of a method at one grid value"""

    model_config = ConfigDict(frozen=True)

    scenario: str
    x: float
    method: str
    mean_rate: float
    stderr: float = Field(ge=0.0)
    trials: int = Field(ge=0)
    seed: int
    discards: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_finite(self) -> "ResultRow":
        if not (math.isfinite(self.mean_rate) and math.isfinite(self.stderr)):
            raise ValueError("Result values must be finite")
        return self


def _format_errors(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<config>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def parse_config(data: dict[str, Any], **overrides: Any) -> ScenarioConfig:
    """Validate a config mapping; non-None overrides replace file values"""
    merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return ScenarioConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigInvalid(_format_errors(e)) from e


def load_config_file(path: Path, **overrides: Any) -> ScenarioConfig:
    try:
        data = orjson.loads(Path(path).read_bytes())
    except orjson.JSONDecodeError as e:
        raise ConfigInvalid(f"{path}: not valid JSON ({str(e)})") from e
    except OSError as e:
        raise ConfigInvalid(f"{path}: cannot read config ({str(e)})") from e
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: top level must be an object")
    logger.info(f"Loaded scenario config from {path}")
    return parse_config(data, **overrides)


def _registry() -> dict[str, dict[str, Any]]:
    raw = (resources.files("agb_feedback") / "data" / "scenarios.json").read_bytes()
    return orjson.loads(raw)["scenarios"]


def registry_names() -> list[str]:
    return sorted(_registry())


def load_scenario(name: str, **overrides: Any) -> ScenarioConfig:
    """Registered scenario by name, with CLI-style overrides"""
    scenarios = _registry()
    if name not in scenarios:
        raise ConfigInvalid(f"scenario: unknown name {name!r}; known: {', '.join(sorted(scenarios))}")
    return parse_config({"name": name, **scenarios[name]}, **overrides)
