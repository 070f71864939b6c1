"""YAML experiment configuration with strict validation.

Unknown keys are rejected and every validation error is reported with the
key path and the line of the offending YAML node.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .channel import ArModel, EstimatedChannel, FrameConfig
from .inputs import InputSpec, input_from_name
from .optimize import IterationSchedule, Multipliers
from .quadrature import IntegrationEngine
from .sim import BackhaulConfig, Scenario


class ConfigError(ValueError):
    """Invalid configuration; ``messages`` holds one diagnostic per problem."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _check_input(v: str) -> str:
    input_from_name(v)
    return v


class EngineConfig(_Strict):
    method: Literal["gauss-hermite", "monte-carlo"] = "gauss-hermite"
    order: int = Field(64, ge=2, le=300)
    samples: int = Field(100_000, ge=100)
    seed: int = 0
    tol: float = Field(1e-4, gt=0)

    def build(self) -> IntegrationEngine:
        return IntegrationEngine(self.method, self.order, self.samples, self.seed, self.tol)


class ScheduleConfig(_Strict):
    alpha: float = Field(0.5, gt=0, le=1)
    max_iter: int = Field(500, ge=1)
    tol: float = Field(1e-6, gt=0)
    decaying: bool = False

    def build(self) -> IterationSchedule:
        return IterationSchedule(self.alpha, self.max_iter, self.tol, self.decaying)


class MultiplierConfig(_Strict):
    lambda1: float = Field(0.1, gt=0)
    lambda2: float = Field(0.1, gt=0)

    def build(self) -> Multipliers:
        return Multipliers(self.lambda1, self.lambda2)


class _InputsMixin(_Strict):
    inputs: tuple[str, str] = ("bpsk", "bpsk")

    @field_validator("inputs")
    @classmethod
    def _known(cls, v):
        return tuple(_check_input(x) for x in v)

    def input_specs(self) -> tuple[InputSpec, InputSpec]:
        return tuple(input_from_name(x) for x in self.inputs)


class ChannelConfig(_Strict):
    """Real 2x2 gains (row = receiver, column = terminal) or ``[re, im]`` pairs."""

    gains: list[list[float | tuple[float, float]]] = [[1.0, 1.0], [1.0, 1.0]]
    snr: float = Field(1.0, ge=0)
    sigma_sq: tuple[float, float] = (1.0, 1.0)
    horizon: int = Field(0, ge=0)

    @field_validator("gains")
    @classmethod
    def _shape(cls, v):
        if len(v) != 2 or any(len(r) != 2 for r in v):
            raise ValueError("gains must be a 2x2 array")
        return v

    def build(self) -> EstimatedChannel:
        h = [[complex(*x) if isinstance(x, tuple) else complex(x) for x in r] for r in self.gains]
        return EstimatedChannel.from_gains(h, self.snr, self.sigma_sq,
                                           self.horizon if self.horizon else None)


class SurfaceConfig(_InputsMixin):
    channel: ChannelConfig = ChannelConfig()
    p_max: float = Field(2.0, gt=0)
    step: float = Field(0.1, gt=0)
    receiver: Literal[1, 2] = 1
    engine: EngineConfig = EngineConfig()

    def grid(self) -> list[float]:
        n = int(round(self.p_max / self.step))
        if not math.isclose(n * self.step, self.p_max, rel_tol=1e-9):
            raise ValueError("p_max must be a multiple of step")
        return [round(i * self.step, 12) for i in range(n + 1)]


class PowerConfig(_InputsMixin):
    channel: ChannelConfig = ChannelConfig()
    mac: Literal[1, 2] = 1
    budgets: tuple[float, float] = (2.0, 2.0)
    multipliers: MultiplierConfig = MultiplierConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    engine: EngineConfig = EngineConfig()
    normalization: Literal["project", "budget"] = "project"


class BackhaulSection(_Strict):
    load: float = Field(0.0, ge=0)
    threshold: float = Field(1.0, gt=0)


class ScenarioConfig(_InputsMixin):
    snr_grid: list[float] = [0.1, 0.3, 1.0, 3.0, 10.0]
    rho: float = 1.0
    L: int = Field(1, ge=1)
    K: int = Field(100, ge=1)
    M: int = Field(1, ge=1)
    T: int = Field(1, ge=1)
    n_blocks: int = Field(10, ge=1)
    n_realizations: int = Field(250, ge=1)
    sign_convention: Literal["as-written", "standard"] = "as-written"
    innovation_variance: float = Field(1.0, ge=0)
    budgets: tuple[float, float] = (2.0, 2.0)
    backhaul: BackhaulSection = BackhaulSection()
    multipliers: MultiplierConfig = MultiplierConfig()
    power_policy: Literal["full", "fixed-point", "closed-form"] = "full"
    schedule: ScheduleConfig = ScheduleConfig()
    engine: EngineConfig = EngineConfig()
    refresh_every: int = Field(1, ge=1)
    sigma_ceiling: float = Field(math.inf, gt=1)
    real_only: bool = True
    seed: int | None = None

    @field_validator("snr_grid")
    @classmethod
    def _snrs(cls, v):
        if not v or any(not (s >= 0) for s in v):
            raise ValueError("snr_grid must be a non-empty list of snr >= 0")
        return v

    def build(self) -> Scenario:
        ar = ArModel(self.L, self.rho, self.sign_convention, self.innovation_variance)
        frame = FrameConfig(self.K, self.M, self.L, self.T, self.n_blocks)
        return Scenario(tuple(self.snr_grid), self.input_specs(), ar, tuple(self.budgets),
                        BackhaulConfig(self.backhaul.load, self.backhaul.threshold),
                        self.multipliers.build(), self.schedule.build(), self.engine.build(),
                        self.power_policy, self.refresh_every, self.sigma_ceiling,
                        self.real_only, frame)


class ValidateConfig(_Strict):
    criteria: list[int] = list(range(1, 11))

    @field_validator("criteria")
    @classmethod
    def _range(cls, v):
        bad = [c for c in v if not 1 <= c <= 10]
        if bad:
            raise ValueError(f"criteria must lie in 1..10, got {bad}")
        return v


class ExperimentConfig(_Strict):
    """Top-level file: one optional section per pipeline plus run settings."""

    seed: int = 0
    unit: Literal["bits", "nats"] = "bits"
    verbosity: int = Field(0, ge=0)
    out: str | None = None
    surface: SurfaceConfig = SurfaceConfig()
    mmse: SurfaceConfig = SurfaceConfig()
    power: PowerConfig = PowerConfig()
    precode: PowerConfig = PowerConfig()
    scenario: ScenarioConfig = ScenarioConfig()
    validate_: ValidateConfig = Field(ValidateConfig(), alias="validate")

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


def _node_line(root, loc) -> int | None:
    """1-based line of the YAML node at key path ``loc`` (deepest match)."""
    node, line = root, None
    if node is not None:
        line = node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt, line = v, k.start_mark.line + 1
                    break
            if nxt is None:
                break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse YAML text; raises :class:`ConfigError` with line/key diagnostics."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError([f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}"])
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([f"{source}:1: top level must be a mapping"])
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = tuple(x for x in err["loc"] if not (isinstance(x, str) and "[" in x))
            key = ".".join(str(x) for x in loc) or "<root>"
            line = _node_line(root, loc)
            where = f"{source}:{line}" if line else source
            msgs.append(f"{where}: key '{key}': {err['msg']}")
        raise ConfigError(msgs)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"{p}: cannot read config: {exc.strerror}"])
    return parse_config(text, str(p))
