"""Phase progression for passive-to-active training, exam grading, and the
summary metrics used by the experiment harness.

The dynamic curriculum walks mandatory -> hinted -> adaptive -> test,
advancing after clean passes and dropping back one phase after bad ones.
The static baseline uses the same machinery with a two-entry phase table
(mandatory -> test); there is no other code path difference.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

from .score import Pitch, Score
from .sensing import PitchEvent


class StrategyError(ValueError):
    """Bad thresholds, impossible outcomes, or empty metric inputs."""


class Phase(IntEnum):
    MANDATORY = 0
    HINTED = 1
    ADAPTIVE = 2
    TEST = 3


DYNAMIC_PHASES: tuple[Phase, ...] = (Phase.MANDATORY, Phase.HINTED, Phase.ADAPTIVE, Phase.TEST)
STATIC_PHASES: tuple[Phase, ...] = (Phase.MANDATORY, Phase.TEST)


@dataclass(frozen=True)
class StrategyConfig:
    advance_error_threshold: float = 0.15
    regress_error_threshold: float = 0.5
    min_passes_per_phase: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.advance_error_threshold <= 1.0:
            raise StrategyError(f"advance threshold out of [0,1]: {self.advance_error_threshold}")
        if not 0.0 <= self.regress_error_threshold <= 1.0:
            raise StrategyError(f"regress threshold out of [0,1]: {self.regress_error_threshold}")
        if self.regress_error_threshold <= self.advance_error_threshold:
            raise StrategyError("regress threshold must exceed advance threshold")
        if self.min_passes_per_phase < 1:
            raise StrategyError(f"min_passes_per_phase must be >= 1, got {self.min_passes_per_phase}")


@dataclass(frozen=True)
class PassOutcome:
    phase: Phase
    mistake_count: int
    note_count: int
    duration_ms: int

    def __post_init__(self) -> None:
        if self.mistake_count < 0 or self.note_count < 0:
            raise StrategyError("counts must be non-negative")
        if self.mistake_count > self.note_count:
            raise StrategyError(
                f"mistake_count {self.mistake_count} exceeds note_count {self.note_count}"
            )
        if self.duration_ms < 0:
            raise StrategyError("duration_ms must be non-negative")

    @property
    def mistake_fraction(self) -> float:
        return self.mistake_count / self.note_count if self.note_count else 0.0


def next_phase(
    current: Phase,
    outcome: PassOutcome,
    history: Sequence[PassOutcome],
    cfg: StrategyConfig,
    phases: Sequence[Phase] = DYNAMIC_PHASES,
) -> Phase:
    """Decide where the next pass happens. Single-step moves only.

    The pass count gating advancement is the trailing run of outcomes in the
    current phase (history plus this one), so re-entering a phase after a
    regression starts the count over.
    """
    if outcome.phase is not current:
        raise StrategyError(f"outcome phase {outcome.phase.name} != current {current.name}")
    if current not in phases:
        raise StrategyError(f"{current.name} is not in the active phase table")
    idx = phases.index(current)
    fraction = outcome.mistake_fraction
    if fraction >= cfg.regress_error_threshold and current is not Phase.MANDATORY and idx > 0:
        return phases[idx - 1]
    run = 1
    for past in reversed(history):
        if past.phase is not current:
            break
        run += 1
    if fraction <= cfg.advance_error_threshold and run >= cfg.min_passes_per_phase:
        return phases[min(idx + 1, len(phases) - 1)]
    return current


# ---------------------------------------------------------------------------
# Exam grading
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExamResult:
    played: tuple[Pitch, ...]
    passed: bool
    forgotten_notes: int

    def __post_init__(self) -> None:
        if self.forgotten_notes < 0:
            raise StrategyError("forgotten_notes must be non-negative")
        if self.passed and self.forgotten_notes != 0:
            raise StrategyError("a passing exam cannot have forgotten notes")


def _lcs_len(a: Sequence[Pitch], b: Sequence[Pitch]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(cur[j], prev[j + 1]))
        prev = cur
    return prev[-1]


def grade_exam(score: Score, events: Sequence[PitchEvent], strictness: str = "exact") -> ExamResult:
    """Grade a free performance against the score's pitch sequence.

    forgotten_notes counts score notes missing from the best in-order
    alignment (longest common subsequence). Passing under "exact" means the
    played sequence equals the score's; "trimmed" additionally tolerates
    stray notes before the first and after the last matched note.
    """
    if strictness not in ("exact", "trimmed"):
        raise StrategyError(f"unknown strictness {strictness!r}")
    target = score.pitch_sequence()
    played = tuple(ev.pitch for ev in events if ev.pitch is not None)
    forgotten = len(target) - _lcs_len(played, target)
    if strictness == "exact":
        passed = played == target
    else:
        n = len(target)
        passed = any(played[i : i + n] == target for i in range(len(played) - n + 1)) if n else True
    if passed and forgotten:
        passed = False  # unreachable by construction; guards the result invariant
    return ExamResult(played, passed, forgotten)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def learning_rate(fraction_learned: float, minutes: float) -> float:
    """Percent of the piece acquired per minute of practice."""
    if not 0.0 <= fraction_learned <= 1.0:
        raise StrategyError(f"fraction_learned out of [0,1]: {fraction_learned}")
    if minutes <= 0:
        raise StrategyError(f"minutes must be positive, got {minutes}")
    return 100.0 * fraction_learned / minutes


def forgetting_ratio(forgotten: int, total: int) -> float:
    """Share of the piece lost at re-exam; 0.0 means fully retained."""
    if total <= 0:
        raise StrategyError(f"total must be positive, got {total}")
    if not 0 <= forgotten <= total:
        raise StrategyError(f"forgotten {forgotten} out of [0, {total}]")
    return forgotten / total


def forgetting_chance(results: Sequence[ExamResult]) -> float:
    """Share of re-exam takers who failed to reproduce the piece."""
    if not results:
        raise StrategyError("forgetting_chance needs at least one exam result")
    return sum(1 for r in results if not r.passed) / len(results)
