"""Engine configuration: one INI-style text file covering device geometry,
tutoring, strategy thresholds, sensing, the simulated-learner lab, the link
simulator, and the realtime service.

Every key has a default equal to the corresponding dataclass default, so an
empty file (or no file) yields the stock engine. Unknown sections or keys
are errors — typos should not silently configure nothing.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

from .device import ServoGeometry
from .sensing import DEFAULT_DEBOUNCE_MS, DEFAULT_THRESHOLD
from .simlab import ExperimentPlan, LearnerConfig
from .strategy import StrategyConfig
from .tutor import TutorConfig


class ConfigError(ValueError):
    """Malformed config text, unknown names, or unparseable values."""


@dataclass(frozen=True)
class SensingConfig:
    threshold: float = DEFAULT_THRESHOLD
    debounce_ms: int = DEFAULT_DEBOUNCE_MS


@dataclass(frozen=True)
class LinkConfig:
    delay_ms: int = 10


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765


@dataclass(frozen=True)
class EngineConfig:
    geometry: ServoGeometry = field(default_factory=ServoGeometry)
    tutor: TutorConfig = field(default_factory=TutorConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    participants: int = 16
    base_seed: int = 0
    forget_minutes: float = 30.0
    max_learn_minutes: float = 60.0
    link: LinkConfig = field(default_factory=LinkConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def plan(self) -> ExperimentPlan:
        return ExperimentPlan(
            participants=self.participants,
            base_seed=self.base_seed,
            forget_minutes=self.forget_minutes,
            max_learn_minutes=self.max_learn_minutes,
            learner=self.learner,
            strategy=self.strategy,
            tutor=self.tutor,
        )


# section -> key -> converter; the converted values feed dataclass kwargs.
_SCHEMA: Mapping[str, Mapping[str, Callable[[str], object]]] = {
    "device": {
        "track_len_mm": Fraction,
        "arm_width_mm": Fraction,
        "arm_speed_mm_s": float,
    },
    "tutor": {
        "delta_t_ms": int,
        "hint_pulse_ms": int,
        "tempo_scale": Fraction,
        "hint_scope": str,
    },
    "strategy": {
        "advance_error_threshold": float,
        "regress_error_threshold": float,
        "min_passes_per_phase": int,
    },
    "sensing": {
        "threshold": float,
        "debounce_ms": int,
    },
    "simlab": {
        "gain_passive": float,
        "gain_active": float,
        "decay_rate_per_min": float,
        "motor_noise": float,
        "latency_lo_ms": int,
        "latency_hi_ms": int,
        "exam_confidence": float,
        "consolidation_scale": float,
        "participants": int,
        "base_seed": int,
        "forget_minutes": float,
        "max_learn_minutes": float,
    },
    "link": {
        "delay_ms": int,
    },
    "service": {
        "host": str,
        "port": int,
    },
}

_PLAN_KEYS = ("participants", "base_seed", "forget_minutes", "max_learn_minutes")


def _parse_section(cp: configparser.ConfigParser, name: str) -> dict[str, object]:
    if not cp.has_section(name):
        return {}
    out: dict[str, object] = {}
    schema = _SCHEMA[name]
    for key, raw in cp[name].items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in section [{name}]")
        try:
            out[key] = schema[key](raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for [{name}] {key}: {raw!r} ({exc})") from exc
    return out


def load_config(text: str) -> EngineConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    try:
        simlab_kwargs = _parse_section(cp, "simlab")
        plan_kwargs = {k: simlab_kwargs.pop(k) for k in _PLAN_KEYS if k in simlab_kwargs}
        return EngineConfig(
            geometry=ServoGeometry(**_parse_section(cp, "device")),
            tutor=TutorConfig(**_parse_section(cp, "tutor")),
            strategy=StrategyConfig(**_parse_section(cp, "strategy")),
            sensing=SensingConfig(**_parse_section(cp, "sensing")),
            learner=LearnerConfig(**simlab_kwargs),
            link=LinkConfig(**_parse_section(cp, "link")),
            service=ServiceConfig(**_parse_section(cp, "service")),
            **plan_kwargs,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config_file(path: str) -> EngineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return load_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


DEFAULT_CONFIG_TEXT = """\
# Engine configuration. All keys optional; values below are the defaults.

[device]
track_len_mm = 40
arm_width_mm = 10
arm_speed_mm_s = 200.0

[tutor]
delta_t_ms = 200
hint_pulse_ms = 60
tempo_scale = 1
hint_scope = changed

[strategy]
advance_error_threshold = 0.15
regress_error_threshold = 0.5
min_passes_per_phase = 1

[sensing]
threshold = 0.5
debounce_ms = 30

[simlab]
gain_passive = 0.15
gain_active = 0.4
decay_rate_per_min = 0.05
motor_noise = 0.05
latency_lo_ms = 0
latency_hi_ms = 150
exam_confidence = 0.9
consolidation_scale = 3.0
participants = 16
base_seed = 0
forget_minutes = 30
max_learn_minutes = 60

[link]
delay_ms = 10

[service]
host = 127.0.0.1
port = 8765
"""
