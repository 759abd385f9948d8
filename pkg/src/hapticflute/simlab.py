"""Synthetic learners and the counterbalanced two-condition experiment
harness.

The learner keeps a per-note mastery level plus a slower consolidation
floor. Passive exposure (device-played notes, failed attempts) and active
successes raise mastery at different rates; only active successes pull the
consolidation floor up, and rest decays mastery exponentially toward that
floor. Every constant is configurable, and when the active and passive
gains are set equal the consolidation pull vanishes, so any between-
condition difference must disappear — the harness is checked against that
null.

The experiment harness cycles participants through the four
(song, method, order) assignment rows, runs a learn-until-exam-pass loop
per condition with a time cutoff, rests the learner, re-examines, and
aggregates learning rates and forgetting chances. Participants are
independent and may be simulated in parallel; each owns its own seeded rng
stream, so parallel and serial runs produce identical reports.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .score import FingeringChart, Pitch, Score, bundled_score, default_chart
from .sensing import PitchEvent
from .strategy import (
    DYNAMIC_PHASES,
    STATIC_PHASES,
    ExamResult,
    PassOutcome,
    Phase,
    StrategyConfig,
    grade_exam,
    learning_rate,
    next_phase,
)
from .tutor import TutorConfig, schedule


class SimlabError(ValueError):
    """Bad learner parameters or plan shapes."""


_PRACTICE_PHASES = (Phase.MANDATORY, Phase.HINTED, Phase.ADAPTIVE)

_METHOD_TABLES = {"static": STATIC_PHASES, "dynamic": DYNAMIC_PHASES}

# Exam timing is learner-elected (by confidence), so the in-protocol phase
# walk covers the practice modes only; the TEST entry of the full tables is
# how the interactive service models the same election.
_PRACTICE_TABLES: dict[str, tuple[Phase, ...]] = {
    "static": (Phase.MANDATORY,),
    "dynamic": (Phase.MANDATORY, Phase.HINTED, Phase.ADAPTIVE),
}


# ---------------------------------------------------------------------------
# Learner model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LearnerConfig:
    gain_passive: float = 0.15
    gain_active: float = 0.4
    decay_rate_per_min: float = 0.05
    motor_noise: float = 0.05
    latency_lo_ms: int = 0
    latency_hi_ms: int = 150
    exam_confidence: float = 0.9
    consolidation_scale: float = 3.0  # rate = min(1, scale * (active - passive))

    def __post_init__(self) -> None:
        for name in ("gain_passive", "gain_active"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise SimlabError(f"{name} must be in (0,1), got {v}")
        if self.decay_rate_per_min < 0:
            raise SimlabError(f"decay rate must be >= 0, got {self.decay_rate_per_min}")
        if not 0.0 <= self.motor_noise < 1.0:
            raise SimlabError(f"motor_noise must be in [0,1), got {self.motor_noise}")
        if not 0 <= self.latency_lo_ms <= self.latency_hi_ms:
            raise SimlabError("latency bounds must satisfy 0 <= lo <= hi")
        if not 0.0 < self.exam_confidence <= 1.0:
            raise SimlabError(f"exam_confidence must be in (0,1], got {self.exam_confidence}")
        if self.consolidation_scale < 0:
            raise SimlabError("consolidation_scale must be >= 0")

    @property
    def consolidation_rate(self) -> float:
        return min(1.0, self.consolidation_scale * max(0.0, self.gain_active - self.gain_passive))


@dataclass(frozen=True)
class LearnerModel:
    mastery: tuple[float, ...]
    consolidation: tuple[float, ...]
    cfg: LearnerConfig

    def __post_init__(self) -> None:
        if len(self.mastery) != len(self.consolidation):
            raise SimlabError("mastery and consolidation must be the same length")
        for v in self.mastery + self.consolidation:
            if not 0.0 <= v <= 1.0:
                raise SimlabError(f"learner levels must stay in [0,1], got {v}")

    @classmethod
    def fresh(cls, note_count: int, cfg: Optional[LearnerConfig] = None) -> "LearnerModel":
        cfg = cfg or LearnerConfig()
        return cls((0.0,) * note_count, (0.0,) * note_count, cfg)

    @property
    def mean_mastery(self) -> float:
        return sum(self.mastery) / len(self.mastery) if self.mastery else 0.0


def forget(learner: LearnerModel, elapsed_minutes: float) -> LearnerModel:
    """Decay mastery toward its consolidation floor over rest time."""
    if elapsed_minutes < 0:
        raise SimlabError(f"elapsed_minutes must be >= 0, got {elapsed_minutes}")
    k = math.exp(-learner.cfg.decay_rate_per_min * elapsed_minutes)
    mastery = tuple(c + (m - c) * k for m, c in zip(learner.mastery, learner.consolidation))
    return replace(learner, mastery=mastery)


def _clip01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _wrong_pitch(rng: random.Random, correct: Pitch, degrees: Sequence[Pitch]) -> Pitch:
    others = [p for p in degrees if p != correct]
    return rng.choice(others) if others else correct


def _compressed_events(raw: list[tuple[int, Pitch]]) -> tuple[PitchEvent, ...]:
    """Interleave 1 ms releases so equal consecutive pitches stay distinct events."""
    events: list[PitchEvent] = []
    for t, pitch in raw:
        if events and events[-1].pitch == pitch:
            gap = t - 1
            if gap <= events[-1].t_ms:
                gap = events[-1].t_ms + 1
            if gap < t:
                events.append(PitchEvent(gap, None))
        events.append(PitchEvent(t, pitch))
    return tuple(events)


def simulate_pass(
    learner: LearnerModel,
    score: Score,
    phase: Phase,
    tutor_cfg: TutorConfig,
    chart: FingeringChart,
    seed: int,
) -> tuple[tuple[PitchEvent, ...], PassOutcome, LearnerModel]:
    """One guided pass through the score in a practice phase.

    Mandatory passes are device-played: every note sounds correct and earns
    the passive gain. In the other phases the learner attempts each note,
    succeeding with probability mastery*(1-motor_noise); successes earn the
    active gain and pull consolidation up, failures sound a wrong pitch and
    earn only the passive gain.
    """
    if phase not in _PRACTICE_PHASES:
        raise SimlabError(f"simulate_pass covers practice phases only, got {phase.name}")
    if len(learner.mastery) != len(score.notes):
        raise SimlabError("learner size does not match the score")
    rng = random.Random(seed)
    cfg = learner.cfg
    degrees = [p for p, _ in chart.entries]
    sched = schedule(score, tutor_cfg, chart)
    mastery = list(learner.mastery)
    consolidation = list(learner.consolidation)
    raw: list[tuple[int, Pitch]] = []
    mistakes = 0
    for i, note in enumerate(sched):
        latency = rng.randint(cfg.latency_lo_ms, cfg.latency_hi_ms)
        if phase is Phase.MANDATORY:
            pitch = note.pitch
            mastery[i] = _clip01(mastery[i] + cfg.gain_passive * (1.0 - mastery[i]))
        elif rng.random() < mastery[i] * (1.0 - cfg.motor_noise):
            pitch = note.pitch
            mastery[i] = _clip01(mastery[i] + cfg.gain_active * (1.0 - mastery[i]))
            consolidation[i] = _clip01(
                consolidation[i] + cfg.consolidation_rate * (mastery[i] - consolidation[i])
            )
        else:
            pitch = _wrong_pitch(rng, note.pitch, degrees)
            mistakes += 1
            mastery[i] = _clip01(mastery[i] + cfg.gain_passive * (1.0 - mastery[i]))
        raw.append((note.onset_ms + latency, pitch))
    duration = sched[-1].end_ms if sched else 0
    outcome = PassOutcome(phase, mistakes, len(sched), duration)
    updated = replace(learner, mastery=tuple(mastery), consolidation=tuple(consolidation))
    return _compressed_events(raw), outcome, updated


def simulate_exam(
    learner: LearnerModel,
    score: Score,
    tutor_cfg: TutorConfig,
    chart: FingeringChart,
    seed: int,
) -> tuple[tuple[PitchEvent, ...], ExamResult, PassOutcome]:
    """Unaided reproduction attempt. A pure measurement: no learning update."""
    if len(learner.mastery) != len(score.notes):
        raise SimlabError("learner size does not match the score")
    rng = random.Random(seed)
    cfg = learner.cfg
    degrees = [p for p, _ in chart.entries]
    sched = schedule(score, tutor_cfg, chart)
    raw: list[tuple[int, Pitch]] = []
    wrong = 0
    for i, note in enumerate(sched):
        latency = rng.randint(cfg.latency_lo_ms, cfg.latency_hi_ms)
        if rng.random() < learner.mastery[i] * (1.0 - cfg.motor_noise):
            pitch = note.pitch
        else:
            pitch = _wrong_pitch(rng, note.pitch, degrees)
            wrong += 1
        raw.append((note.onset_ms + latency, pitch))
    events = _compressed_events(raw)
    duration = sched[-1].end_ms if sched else 0
    outcome = PassOutcome(Phase.TEST, wrong, len(sched), duration)
    return events, grade_exam(score, events), outcome


# ---------------------------------------------------------------------------
# Protocol
# ---------------------------------------------------------------------------


_ASSIGNMENT_ROWS: tuple[tuple[tuple[str, str], tuple[str, str]], ...] = (
    (("song_a", "static"), ("song_b", "dynamic")),
    (("song_a", "dynamic"), ("song_b", "static")),
    (("song_b", "static"), ("song_a", "dynamic")),
    (("song_b", "dynamic"), ("song_a", "static")),
)


@dataclass(frozen=True)
class ExperimentPlan:
    participants: int = 16
    base_seed: int = 0
    forget_minutes: float = 30.0
    max_learn_minutes: float = 60.0
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    tutor: TutorConfig = field(default_factory=TutorConfig)

    def __post_init__(self) -> None:
        if self.participants < 1:
            raise SimlabError(f"participants must be >= 1, got {self.participants}")
        if self.forget_minutes < 0 or self.max_learn_minutes <= 0:
            raise SimlabError("forget_minutes must be >= 0 and max_learn_minutes > 0")

    def assignment(self, participant: int) -> tuple[tuple[str, str], tuple[str, str]]:
        return _ASSIGNMENT_ROWS[participant % len(_ASSIGNMENT_ROWS)]


@dataclass(frozen=True)
class ConditionRecord:
    participant: int
    order: int
    song: str
    method: str
    learned: bool
    minutes: float
    fraction_learned: float
    rate_pct_per_min: float
    exam_attempts: int
    passes: tuple[PassOutcome, ...]
    mastery_drop: float
    reexam_passed: bool
    reexam_forgotten: int
    note_count: int


@dataclass(frozen=True)
class RepSummary:
    rep: int
    dynamic_rate_mean: float
    static_rate_mean: float
    dynamic_forgetting_chance: float
    static_forgetting_chance: float


@dataclass(frozen=True)
class ExperimentReport:
    plan: ExperimentPlan
    reps: tuple[RepSummary, ...]
    records: tuple[tuple[ConditionRecord, ...], ...]  # one tuple per rep

    @property
    def rate_direction_wins(self) -> int:
        return sum(1 for r in self.reps if r.dynamic_rate_mean > r.static_rate_mean)

    @property
    def forgetting_direction_wins(self) -> int:
        return sum(
            1 for r in self.reps if r.dynamic_forgetting_chance < r.static_forgetting_chance
        )


_REP_SEED_STRIDE = 1009  # prime, so participant streams never collide across reps


def _practice_until_pass(
    plan: ExperimentPlan,
    score: Score,
    chart: FingeringChart,
    rng: random.Random,
    method: str,
    learner: LearnerModel,
) -> tuple[LearnerModel, float, list[PassOutcome], int, bool]:
    """Learn-until-exam-pass loop shared by the protocol and relearn steps.

    The learner sits an exam whenever mean mastery reaches the confidence
    threshold and at least one pass has happened since the last attempt;
    the election rule is identical for both methods so exam pacing cannot
    favor a condition by construction.
    """
    practice = _PRACTICE_TABLES[method]
    phase = practice[0]
    history: list[PassOutcome] = []
    minutes = 0.0
    exam_attempts = 0
    practiced_since_exam = False
    learned = False
    while minutes < plan.max_learn_minutes:
        if practiced_since_exam and learner.mean_mastery >= plan.learner.exam_confidence:
            _, result, outcome = simulate_exam(
                learner, score, plan.tutor, chart, rng.getrandbits(64)
            )
            exam_attempts += 1
            practiced_since_exam = False
            minutes += outcome.duration_ms / 60000.0
            history.append(outcome)
            if result.passed:
                learned = True
                break
            continue
        _, outcome, learner = simulate_pass(
            learner, score, phase, plan.tutor, chart, rng.getrandbits(64)
        )
        practiced_since_exam = True
        minutes += outcome.duration_ms / 60000.0
        history.append(outcome)
        phase = next_phase(phase, outcome, history[:-1], plan.strategy, practice)
    return learner, minutes, history, exam_attempts, learned


def _run_condition(
    plan: ExperimentPlan,
    score: Score,
    chart: FingeringChart,
    rng: random.Random,
    participant: int,
    order: int,
    song: str,
    method: str,
) -> ConditionRecord:
    learner = LearnerModel.fresh(len(score.notes), plan.learner)
    learner, minutes, history, exam_attempts, learned = _practice_until_pass(
        plan, score, chart, rng, method, learner
    )
    fraction = 1.0 if learned else learner.mean_mastery
    rate = learning_rate(_clip01(fraction), max(minutes, 1e-9))
    before = learner.mean_mastery
    rested = forget(learner, plan.forget_minutes)
    _, reexam, _ = simulate_exam(rested, score, plan.tutor, chart, rng.getrandbits(64))
    return ConditionRecord(
        participant=participant,
        order=order,
        song=song,
        method=method,
        learned=learned,
        minutes=minutes,
        fraction_learned=fraction,
        rate_pct_per_min=rate,
        exam_attempts=exam_attempts,
        passes=tuple(history),
        mastery_drop=before - rested.mean_mastery,
        reexam_passed=reexam.passed,
        reexam_forgotten=reexam.forgotten_notes,
        note_count=len(score.notes),
    )


def simulate_participant(
    plan: ExperimentPlan,
    participant: int,
    seed: int,
    scores: Optional[dict[str, Score]] = None,
    chart: Optional[FingeringChart] = None,
) -> tuple[ConditionRecord, ConditionRecord]:
    """Both conditions for one participant, in assignment-row order."""
    scores = scores or _bundled_scores()
    chart = chart or default_chart()
    rng = random.Random(seed)
    out = []
    for order, (song, method) in enumerate(plan.assignment(participant)):
        out.append(
            _run_condition(plan, scores[song], chart, rng, participant, order, song, method)
        )
    return out[0], out[1]


def _bundled_scores() -> dict[str, Score]:
    return {"song_a": bundled_score("song_a"), "song_b": bundled_score("song_b")}


def _participant_args(plan: ExperimentPlan, rep: int) -> list[tuple[ExperimentPlan, int, int]]:
    rep_base = plan.base_seed + _REP_SEED_STRIDE * rep
    return [(plan, i, rep_base + i) for i in range(plan.participants)]


def _worker(args: tuple[ExperimentPlan, int, int]) -> tuple[ConditionRecord, ConditionRecord]:
    plan, participant, seed = args
    return simulate_participant(plan, participant, seed)


def _summarize_rep(rep: int, records: Sequence[ConditionRecord]) -> RepSummary:
    def mean_rate(method: str) -> float:
        rates = [r.rate_pct_per_min for r in records if r.method == method]
        return sum(rates) / len(rates)

    def chance(method: str) -> float:
        fails = [not r.reexam_passed for r in records if r.method == method]
        return sum(fails) / len(fails)

    return RepSummary(rep, mean_rate("dynamic"), mean_rate("static"),
                      chance("dynamic"), chance("static"))


def run_experiment(
    plan: ExperimentPlan,
    reps: int,
    parallel: bool = False,
    max_workers: Optional[int] = None,
) -> ExperimentReport:
    """Run the full counterbalanced protocol `reps` times."""
    if reps < 1:
        raise SimlabError(f"reps must be >= 1, got {reps}")
    all_recs: list[tuple[ConditionRecord, ...]] = []
    summaries: list[RepSummary] = []
    for rep in range(reps):
        args = _participant_args(plan, rep)
        if parallel:
            with ProcessPoolExecutor(max_workers=max_workers) as pool:
                pairs = list(pool.map(_worker, args))
        else:
            pairs = [_worker(a) for a in args]
        records = tuple(rec for pair in pairs for rec in pair)
        all_recs.append(records)
        summaries.append(_summarize_rep(rep, records))
    return ExperimentReport(plan, tuple(summaries), tuple(all_recs))


def sign_test_pvalue(diffs: Sequence[float]) -> float:
    """Two-sided exact sign test; ties dropped, no information means p=1."""
    from scipy.stats import binomtest

    pos = sum(1 for d in diffs if d > 0)
    neg = sum(1 for d in diffs if d < 0)
    if pos + neg == 0:
        return 1.0
    return float(binomtest(pos, pos + neg, 0.5).pvalue)


# ---------------------------------------------------------------------------
# Multi-day forgetting curve (single-subject design)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DayRecord:
    day: int
    method: str
    song: str
    forgetting_ratio: float
    relearn_minutes: float


def run_forgetting_curve(
    plan: ExperimentPlan,
    days: int,
    seed: Optional[int] = None,
) -> tuple[DayRecord, ...]:
    """One subject learns a song per method, then sits a daily exam and
    relearns, so the curve shows how consolidation accumulates."""
    if days < 1:
        raise SimlabError(f"days must be >= 1, got {days}")
    scores = _bundled_scores()
    chart = default_chart()
    rng = random.Random(plan.base_seed if seed is None else seed)
    out: list[DayRecord] = []
    for song, method in (("song_a", "static"), ("song_b", "dynamic")):
        learner = LearnerModel.fresh(len(scores[song].notes), plan.learner)
        learner, _ = _relearn(plan, scores[song], chart, rng, method, learner)
        for day in range(1, days + 1):
            learner = forget(learner, 24 * 60.0)
            _, exam, _ = simulate_exam(learner, scores[song], plan.tutor, chart, rng.getrandbits(64))
            ratio = exam.forgotten_notes / len(scores[song].notes)
            learner, relearn_minutes = _relearn(plan, scores[song], chart, rng, method, learner)
            out.append(DayRecord(day, method, song, ratio, relearn_minutes))
    return tuple(out)


def _relearn(
    plan: ExperimentPlan,
    score: Score,
    chart: FingeringChart,
    rng: random.Random,
    method: str,
    learner: LearnerModel,
) -> tuple[LearnerModel, float]:
    """Practice until an exam pass (or the cutoff); returns learner and minutes."""
    learner, minutes, _, _, _ = _practice_until_pass(plan, score, chart, rng, method, learner)
    return learner, minutes


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def format_report(report: ExperimentReport) -> str:
    """Stable text rendering; every aggregate is recomputable from the
    per-pass records also listed here."""
    plan = report.plan
    lines = [
        "haptic-flute experiment report",
        (
            f"participants={plan.participants} reps={len(report.reps)} "
            f"base_seed={plan.base_seed} forget_minutes={plan.forget_minutes:g} "
            f"cutoff_minutes={plan.max_learn_minutes:g}"
        ),
        (
            f"learner gain_passive={plan.learner.gain_passive:g} "
            f"gain_active={plan.learner.gain_active:g} "
            f"decay_per_min={plan.learner.decay_rate_per_min:g} "
            f"motor_noise={plan.learner.motor_noise:g} "
            f"exam_confidence={plan.learner.exam_confidence:g}"
        ),
        "",
        "rep  dyn_rate  stat_rate  dyn_forget  stat_forget",
    ]
    for s in report.reps:
        lines.append(
            f"{s.rep:>3}  {s.dynamic_rate_mean:8.4f}  {s.static_rate_mean:9.4f}  "
            f"{s.dynamic_forgetting_chance:10.4f}  {s.static_forgetting_chance:11.4f}"
        )
    n = len(report.reps)
    mean_dyn = sum(s.dynamic_rate_mean for s in report.reps) / n
    mean_stat = sum(s.static_rate_mean for s in report.reps) / n
    mean_dfc = sum(s.dynamic_forgetting_chance for s in report.reps) / n
    mean_sfc = sum(s.static_forgetting_chance for s in report.reps) / n
    lines += [
        "",
        f"mean learning rate (%/min): dynamic={mean_dyn:.4f} static={mean_stat:.4f}",
        f"mean forgetting chance:     dynamic={mean_dfc:.4f} static={mean_sfc:.4f}",
        f"direction: rate {report.rate_direction_wins}/{n}  forgetting {report.forgetting_direction_wins}/{n}",
        "",
        "raw per-condition records",
        "rep  pn  ord  song    method   learned  minutes   rate      exams  forgot  repass  drop",
    ]
    for rep_i, records in enumerate(report.records):
        for r in records:
            lines.append(
                f"{rep_i:>3}  {r.participant:>2}  {r.order:>3}  {r.song:<7} {r.method:<8} "
                f"{str(r.learned):<8} {r.minutes:7.3f}  {r.rate_pct_per_min:8.4f}  "
                f"{r.exam_attempts:>5}  {r.reexam_forgotten:>6}  {str(r.reexam_passed):<6}  "
                f"{r.mastery_drop:.4f}"
            )
    lines.append("")
    lines.append("per-pass log (rep, participant, order, phase, mistakes/notes, ms)")
    for rep_i, records in enumerate(report.records):
        for r in records:
            for p in r.passes:
                lines.append(
                    f"{rep_i} {r.participant} {r.order} {p.phase.name.lower()} "
                    f"{p.mistake_count}/{p.note_count} {p.duration_ms}"
                )
    return "\n".join(lines) + "\n"
