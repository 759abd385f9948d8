"""Config parsing tests: defaults, overrides, strictness, round-trip of the
documented default text."""

from __future__ import annotations

from fractions import Fraction

import pytest

from hapticflute.config import (
    DEFAULT_CONFIG_TEXT,
    ConfigError,
    EngineConfig,
    load_config,
)


def test_empty_text_yields_defaults():
    cfg = load_config("")
    assert cfg == EngineConfig()
    assert cfg.tutor.delta_t_ms == 200
    assert cfg.geometry.track_len_mm == Fraction(40)
    assert cfg.learner.gain_active == 0.4
    assert cfg.service.port == 8765


def test_documented_default_text_equals_defaults():
    assert load_config(DEFAULT_CONFIG_TEXT) == EngineConfig()


def test_overrides_parse_into_typed_fields():
    cfg = load_config(
        """
        [device]
        track_len_mm = 50
        arm_width_mm = 12.5

        [tutor]
        tempo_scale = 1/2
        delta_t_ms = 150

        [simlab]
        gain_active = 0.3
        participants = 8
        base_seed = 99

        [service]
        port = 9000
        """
    )
    assert cfg.geometry.track_len_mm == Fraction(50)
    assert cfg.geometry.arm_width_mm == Fraction(25, 2)
    assert cfg.tutor.tempo_scale == Fraction(1, 2)
    assert cfg.tutor.delta_t_ms == 150
    assert cfg.learner.gain_active == 0.3
    assert cfg.participants == 8
    assert cfg.base_seed == 99
    assert cfg.service.port == 9000


def test_plan_builder_carries_config():
    cfg = load_config("[simlab]\nparticipants = 6\nforget_minutes = 12\n")
    plan = cfg.plan()
    assert plan.participants == 6
    assert plan.forget_minutes == 12.0
    assert plan.learner == cfg.learner


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        load_config("[nonsense]\nx = 1\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        load_config("[tutor]\ndelta_t_millis = 200\n")


def test_bad_value_reports_key():
    with pytest.raises(ConfigError, match="delta_t_ms"):
        load_config("[tutor]\ndelta_t_ms = soon\n")


def test_domain_validation_still_applies():
    with pytest.raises(ConfigError):
        load_config("[device]\narm_width_mm = 40\n")  # equals track length
    with pytest.raises(ConfigError):
        load_config("[strategy]\nadvance_error_threshold = 0.9\n")  # above regress


def test_inline_comments_allowed():
    cfg = load_config("[tutor]\ndelta_t_ms = 250  # wider window\n")
    assert cfg.tutor.delta_t_ms == 250
