"""Learner-model and experiment-harness tests: exact update math, decay
laws, trace well-formedness, counterbalancing, and determinism."""

from __future__ import annotations

import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hapticflute.score import Note, Pitch, Score, default_chart
from hapticflute.simlab import (
    ExperimentPlan,
    LearnerConfig,
    LearnerModel,
    SimlabError,
    forget,
    format_report,
    run_experiment,
    run_forgetting_curve,
    sign_test_pvalue,
    simulate_exam,
    simulate_pass,
)
from hapticflute.strategy import Phase
from hapticflute.tutor import Mode, TutorConfig, TutorSession, run_to_completion


@pytest.fixture(scope="module")
def chart():
    return default_chart()


def _score(*degrees: int, step: int = 500) -> Score:
    return Score(tuple(Note(Pitch(d), i * step, step) for i, d in enumerate(degrees)))


def _learner(n: int, mastery: float = 0.0, consolidation: float = 0.0, **cfg) -> LearnerModel:
    return LearnerModel((mastery,) * n, (consolidation,) * n, LearnerConfig(**cfg))


TCFG = TutorConfig()


# ---------------------------------------------------------------------------
# simulate_pass
# ---------------------------------------------------------------------------


def test_mandatory_pass_is_passive_and_flawless(chart):
    score = _score(2, 1, 4)
    learner = _learner(3)
    events, outcome, updated = simulate_pass(learner, score, Phase.MANDATORY, TCFG, chart, seed=1)
    assert outcome.mistake_count == 0
    assert outcome.phase is Phase.MANDATORY
    assert updated.mastery == (0.15, 0.15, 0.15)
    assert updated.consolidation == (0.0, 0.0, 0.0)
    played = [e.pitch for e in events if e.pitch is not None]
    assert played == [Pitch(2), Pitch(1), Pitch(4)]


def test_certain_mastery_never_misses(chart):
    score = _score(2, 1, 4, 0, 5)
    learner = _learner(5, mastery=1.0, motor_noise=0.0)
    _, outcome, _ = simulate_pass(learner, score, Phase.ADAPTIVE, TCFG, chart, seed=3)
    assert outcome.mistake_count == 0


def test_zero_mastery_misses_every_note(chart):
    score = _score(2, 1, 4, 0)
    learner = _learner(4)
    events, outcome, updated = simulate_pass(learner, score, Phase.HINTED, TCFG, chart, seed=3)
    assert outcome.mistake_count == 4
    # Failures still teach passively.
    assert updated.mastery == (0.15, 0.15, 0.15, 0.15)
    assert updated.consolidation == (0.0, 0.0, 0.0, 0.0)
    wrong = [e.pitch for e in events if e.pitch is not None]
    assert all(w != p for w, p in zip(wrong, [Pitch(2), Pitch(1), Pitch(4), Pitch(0)]))


def test_active_success_updates_mastery_and_consolidation(chart):
    score = _score(2)
    learner = _learner(1, mastery=1.0, motor_noise=0.0)
    _, _, updated = simulate_pass(learner, score, Phase.ADAPTIVE, TCFG, chart, seed=0)
    assert updated.mastery == (1.0,)
    # consolidation rate = min(1, 3*(0.4-0.15)) = 0.75, pulled toward m=1
    assert updated.consolidation == (0.75,)


def test_equal_gains_keep_consolidation_flat(chart):
    score = _score(2, 1, 4)
    learner = _learner(3, mastery=0.9, gain_passive=0.3, gain_active=0.3)
    for seed in range(6):
        _, _, learner = simulate_pass(learner, score, Phase.ADAPTIVE, TCFG, chart, seed=seed)
    assert learner.consolidation == (0.0, 0.0, 0.0)


def test_pass_is_deterministic_per_seed(chart):
    score = _score(2, 1, 4, 0, 5, 3)
    learner = _learner(6, mastery=0.5)
    a = simulate_pass(learner, score, Phase.HINTED, TCFG, chart, seed=77)
    b = simulate_pass(learner, score, Phase.HINTED, TCFG, chart, seed=77)
    assert a == b


def test_pass_rejects_test_phase_and_size_mismatch(chart):
    score = _score(2, 1)
    with pytest.raises(SimlabError):
        simulate_pass(_learner(2), score, Phase.TEST, TCFG, chart, seed=0)
    with pytest.raises(SimlabError):
        simulate_pass(_learner(3), score, Phase.MANDATORY, TCFG, chart, seed=0)


def test_traces_are_change_compressed(chart):
    rng_scores = [_score(2, 2, 2, 2), _score(1, 1, 5, 5, 1), _score(0, 0)]
    for score in rng_scores:
        for seed in range(20):
            learner = _learner(len(score.notes), mastery=1.0, motor_noise=0.0)
            events, _, _ = simulate_pass(learner, score, Phase.ADAPTIVE, TCFG, chart, seed=seed)
            for prev, cur in zip(events, events[1:]):
                assert prev.pitch != cur.pitch
                assert prev.t_ms < cur.t_ms
            # every scheduled note still has its own sounding event
            assert sum(1 for e in events if e.pitch is not None) == len(score.notes)


def test_trace_satisfies_adaptive_tutor_exactly(chart):
    # The tutor's mistake count must equal the simulated failure count:
    # latencies stay inside the detection window by construction.
    import random as _random

    rng = _random.Random(404)
    for _ in range(30):
        degrees = [rng.randrange(0, 12) for _ in range(rng.randint(2, 10))]
        score = _score(*degrees)
        learner = _learner(len(degrees), mastery=rng.random())
        events, outcome, _ = simulate_pass(
            learner, score, Phase.ADAPTIVE, TCFG, chart, seed=rng.getrandbits(32)
        )
        session = TutorSession(score, Mode.ADAPTIVE, TCFG, chart)
        run_to_completion(session, list(events))
        assert session.mistake_count == outcome.mistake_count


# ---------------------------------------------------------------------------
# simulate_exam
# ---------------------------------------------------------------------------


def test_perfect_learner_passes_exam(chart):
    score = _score(2, 1, 4, 0)
    learner = _learner(4, mastery=1.0, motor_noise=0.0)
    _, result, outcome = simulate_exam(learner, score, TCFG, chart, seed=5)
    assert result.passed
    assert result.forgotten_notes == 0
    assert outcome.mistake_count == 0


def test_blank_learner_fails_exam(chart):
    score = _score(2, 1, 4, 0)
    learner = _learner(4)
    _, result, outcome = simulate_exam(learner, score, TCFG, chart, seed=5)
    assert not result.passed
    assert outcome.mistake_count == 4


# ---------------------------------------------------------------------------
# forget
# ---------------------------------------------------------------------------


def test_forget_zero_elapsed_is_identity():
    learner = _learner(3, mastery=0.7, consolidation=0.2)
    assert forget(learner, 0.0) == learner


def test_forget_zero_decay_is_identity():
    learner = _learner(3, mastery=0.7, consolidation=0.2, decay_rate_per_min=0.0)
    assert forget(learner, 1e6) == learner


def test_forget_closed_form():
    learner = _learner(1, mastery=1.0, consolidation=0.0, decay_rate_per_min=0.1)
    out = forget(learner, 30.0)
    assert out.mastery[0] == pytest.approx(math.exp(-3.0), abs=1e-12)


def test_forget_limits_to_consolidation():
    learner = _learner(2, mastery=0.9, consolidation=0.4, decay_rate_per_min=50.0)
    out = forget(learner, 60.0)
    assert out.mastery == pytest.approx((0.4, 0.4), abs=1e-12)


@given(
    m=st.floats(0.0, 1.0),
    c=st.floats(0.0, 1.0),
    lam=st.floats(0.0, 2.0),
    a=st.floats(0.0, 100.0),
    b=st.floats(0.0, 100.0),
)
def test_forget_is_a_semigroup(m, c, lam, a, b):
    c = min(c, m)  # floor cannot exceed the level
    learner = LearnerModel((m,), (c,), LearnerConfig(decay_rate_per_min=lam))
    two_step = forget(forget(learner, a), b)
    one_step = forget(learner, a + b)
    assert two_step.mastery[0] == pytest.approx(one_step.mastery[0], abs=1e-9)


@settings(deadline=None, max_examples=40)
@given(
    seed=st.integers(0, 2**32 - 1),
    ops=st.lists(st.sampled_from(["mandatory", "hinted", "adaptive", "forget"]), max_size=12),
)
def test_levels_stay_bounded_under_any_op_sequence(seed, ops):
    chart = default_chart()
    score = _score(2, 1, 4)
    learner = _learner(3)
    for i, op in enumerate(ops):
        if op == "forget":
            learner = forget(learner, 7.5)
        else:
            phase = {"mandatory": Phase.MANDATORY, "hinted": Phase.HINTED, "adaptive": Phase.ADAPTIVE}[op]
            _, _, learner = simulate_pass(learner, score, phase, TCFG, chart, seed=seed + i)
        for v in learner.mastery + learner.consolidation:
            assert 0.0 <= v <= 1.0


# ---------------------------------------------------------------------------
# Protocol harness
# ---------------------------------------------------------------------------


def test_sixteen_participants_cycle_four_rows():
    plan = ExperimentPlan(participants=16)
    rows = Counter(plan.assignment(i) for i in range(plan.participants))
    assert len(rows) == 4
    assert set(rows.values()) == {4}
    # every participant sees both songs and both methods
    for i in range(16):
        (s1, m1), (s2, m2) = plan.assignment(i)
        assert {s1, s2} == {"song_a", "song_b"}
        assert {m1, m2} == {"static", "dynamic"}


def test_experiment_is_deterministic_and_parallel_safe():
    plan = ExperimentPlan(participants=4, base_seed=42)
    serial_a = run_experiment(plan, reps=2)
    serial_b = run_experiment(plan, reps=2)
    parallel = run_experiment(plan, reps=2, parallel=True, max_workers=2)
    assert format_report(serial_a) == format_report(serial_b)
    assert format_report(serial_a) == format_report(parallel)


def test_zero_decay_means_zero_mastery_drop():
    cfg = LearnerConfig(decay_rate_per_min=0.0)
    plan = ExperimentPlan(participants=4, base_seed=7, learner=cfg)
    report = run_experiment(plan, reps=1)
    for rec in report.records[0]:
        assert rec.mastery_drop == 0.0


def test_cutoff_records_learning_failure():
    plan = ExperimentPlan(participants=2, base_seed=1, max_learn_minutes=0.2)
    report = run_experiment(plan, reps=1)
    for rec in report.records[0]:
        assert not rec.learned
        assert rec.fraction_learned < 1.0
        assert rec.minutes >= 0.2
        assert rec.rate_pct_per_min > 0.0


def test_report_contains_raw_pass_log():
    plan = ExperimentPlan(participants=2, base_seed=3)
    report = run_experiment(plan, reps=1)
    text = format_report(report)
    assert "per-pass log" in text
    rec = report.records[0][0]
    assert len(rec.passes) >= 2  # at least one practice pass and one exam
    assert any(p.phase is Phase.TEST for p in rec.passes)
    assert rec.exam_attempts >= 1


def test_sign_test_pvalues():
    assert sign_test_pvalue([0.0, 0.0, 0.0]) == 1.0
    assert sign_test_pvalue([1.0] * 10) == pytest.approx(2 / 1024, abs=1e-12)
    assert sign_test_pvalue([1.0, -1.0] * 5) > 0.5


def test_forgetting_curve_shape_and_determinism():
    plan = ExperimentPlan(participants=1, base_seed=11)
    a = run_forgetting_curve(plan, days=3)
    b = run_forgetting_curve(plan, days=3)
    assert a == b
    assert len(a) == 6  # 3 days x 2 conditions
    for rec in a:
        assert 0.0 <= rec.forgetting_ratio <= 1.0
        assert rec.relearn_minutes > 0.0
    assert {r.method for r in a} == {"static", "dynamic"}


def test_plan_validation():
    with pytest.raises(SimlabError):
        ExperimentPlan(participants=0)
    with pytest.raises(SimlabError):
        ExperimentPlan(max_learn_minutes=0.0)
    with pytest.raises(SimlabError):
        LearnerConfig(gain_active=1.5)
    with pytest.raises(SimlabError):
        LearnerConfig(latency_lo_ms=50, latency_hi_ms=10)
