"""The real-time tutoring loop: constant-tempo scheduling, three guidance
modes, and adaptive mistake detection.

Modes:

* mandatory — at each onset the full finger pattern is attached (closed
  holes pressed down, open holes pinned up) and held until the next onset;
  everything is released at the end of the last note.
* hinted — at each onset, short pulses on the fingers whose state changed
  since the previous note (or the full pattern, per ``hint_scope``); the
  first note has no predecessor so all six fingers count as changed.
* adaptive — silent until a note's closed window [t, t+delta_t] passes with
  no correct-pitch event inside it; then a MistakeReport at t+delta_t plus
  a corrective hold of the note's pattern until a correct pitch event
  arrives or the note ends.

All modes log an audio cue per onset. Detection is event-timestamped: only
a PitchEvent whose t_ms lies inside the window satisfies a note, so the
event stream must be delivered promptly (every event handed to some tick
with now_ms >= its timestamp; all built-in drivers do this).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .device import ActuatorCommand, ClutchMode
from .score import FingeringChart, FingerPattern, Pitch, Score, pattern_for_pitch
from .sensing import PitchEvent


class Mode(Enum):
    MANDATORY = "mandatory"
    HINTED = "hinted"
    ADAPTIVE = "adaptive"


class TutorError(ValueError):
    """Config violations, time regressions, future-stamped events."""


@dataclass(frozen=True)
class TutorConfig:
    delta_t_ms: int = 200
    hint_pulse_ms: int = 60
    tempo_scale: Fraction = Fraction(1)
    hint_scope: str = "changed"  # or "full"

    def __post_init__(self) -> None:
        if self.delta_t_ms < 1:
            raise TutorError(f"delta_t_ms must be >= 1, got {self.delta_t_ms}")
        if self.hint_pulse_ms < 1:
            raise TutorError(f"hint_pulse_ms must be >= 1, got {self.hint_pulse_ms}")
        object.__setattr__(self, "tempo_scale", Fraction(self.tempo_scale))
        if self.tempo_scale <= 0:
            raise TutorError(f"tempo_scale must be positive, got {self.tempo_scale}")
        if self.hint_scope not in ("changed", "full"):
            raise TutorError(f"hint_scope must be 'changed' or 'full', got {self.hint_scope!r}")


@dataclass(frozen=True)
class ScheduledNote:
    index: int
    pitch: Pitch
    onset_ms: int
    end_ms: int
    pattern: FingerPattern


@dataclass(frozen=True)
class MistakeReport:
    note_index: int
    score_time_ms: int
    detected_at_ms: int


@dataclass(frozen=True)
class AudioCue:
    t_ms: int
    note_index: int
    pitch: Pitch


TimedCommand = tuple[int, ActuatorCommand]


def schedule(score: Score, config: TutorConfig, chart: FingeringChart) -> tuple[ScheduledNote, ...]:
    """Scale the score onto the session timeline (tempo_scale 0.5 = half speed)."""
    out = []
    for i, note in enumerate(score.notes):
        onset = round(Fraction(note.onset_ms) / config.tempo_scale)
        end = round(Fraction(note.end_ms) / config.tempo_scale)
        out.append(ScheduledNote(i, note.pitch, onset, end, pattern_for_pitch(chart, note.pitch)))
    for prev, cur in zip(out, out[1:]):
        if cur.onset_ms <= prev.onset_ms or cur.onset_ms < prev.end_ms:
            raise TutorError(f"tempo_scale {config.tempo_scale} collapses onsets at note {cur.index}")
    return tuple(out)


def _pattern_commands(pattern: FingerPattern, pulse_ms: Optional[int] = None) -> list[ActuatorCommand]:
    return [
        ActuatorCommand(
            finger,
            ClutchMode.ATTACHED_DOWN if closed else ClutchMode.ATTACHED_UP,
            pulse_ms,
        )
        for finger, closed in enumerate(pattern.holes)
    ]


_PENDING, _SATISFIED, _MISSED = 0, 1, 2


@dataclass
class _Hold:
    note_index: int
    start_ms: int
    end_ms: int  # release deadline (note end)


@dataclass
class TickOutput:
    commands: list[TimedCommand] = field(default_factory=list)
    reports: list[MistakeReport] = field(default_factory=list)
    cues: list[AudioCue] = field(default_factory=list)


class TutorSession:
    """One tutored pass through a score; advance with tick, all time injected."""

    def __init__(
        self,
        score: Score,
        mode: Mode,
        config: TutorConfig,
        chart: FingeringChart,
    ) -> None:
        self.score = score
        self.mode = mode
        self.config = config
        self.chart = chart
        self.sched = schedule(score, config, chart)
        self.now_ms = -1
        self.status = [_PENDING] * len(self.sched)
        self.commands: list[TimedCommand] = []
        self.reports: list[MistakeReport] = []
        self.cues: list[AudioCue] = []
        self._next_onset = 0
        self._first_pending = 0
        self._holds: dict[int, _Hold] = {}
        self._released_at_end = len(self.sched) == 0

    @property
    def end_of_piece_ms(self) -> int:
        return self.sched[-1].end_ms if self.sched else 0

    @property
    def finished(self) -> bool:
        return self.now_ms > self.end_of_piece_ms + self.config.delta_t_ms

    @property
    def mistake_count(self) -> int:
        return len(self.reports)

    # -- tick phases --------------------------------------------------------

    def tick(self, now_ms: int, events: Sequence[PitchEvent] = ()) -> TickOutput:
        if now_ms < self.now_ms:
            raise TutorError(f"time regression: tick at {now_ms} after {self.now_ms}")
        for ev in events:
            if ev.t_ms > now_ms:
                raise TutorError(f"event at {ev.t_ms} is newer than tick time {now_ms}")
        out = TickOutput()
        if self.mode is Mode.ADAPTIVE:
            self._ingest(events, out)
        self._fire_onsets(now_ms, out)
        if self.mode is Mode.ADAPTIVE:
            self._expire_windows(now_ms, out)
            self._expire_holds(now_ms, out)
        if self.mode is Mode.MANDATORY:
            self._release_at_piece_end(now_ms, out)
        self.now_ms = now_ms
        self.commands.extend(out.commands)
        self.reports.extend(out.reports)
        self.cues.extend(out.cues)
        return out

    def _ingest(self, events: Sequence[PitchEvent], out: TickOutput) -> None:
        for ev in events:
            if ev.pitch is None:
                continue
            i = self._first_pending
            while i < len(self.sched) and self.sched[i].onset_ms <= ev.t_ms:
                note = self.sched[i]
                if (
                    self.status[i] == _PENDING
                    and note.pitch == ev.pitch
                    and ev.t_ms <= note.onset_ms + self.config.delta_t_ms
                ):
                    self.status[i] = _SATISFIED
                i += 1
            self._advance_first_pending()
            for idx in list(self._holds):
                hold = self._holds[idx]
                if self.sched[idx].pitch == ev.pitch:
                    self._release_hold(idx, max(ev.t_ms, hold.start_ms), out)

    def _fire_onsets(self, now_ms: int, out: TickOutput) -> None:
        while self._next_onset < len(self.sched) and self.sched[self._next_onset].onset_ms <= now_ms:
            note = self.sched[self._next_onset]
            out.cues.append(AudioCue(note.onset_ms, note.index, note.pitch))
            if self.mode is Mode.MANDATORY:
                for cmd in _pattern_commands(note.pattern):
                    out.commands.append((note.onset_ms, cmd))
            elif self.mode is Mode.HINTED:
                prev = self.sched[note.index - 1].pattern if note.index > 0 else None
                for cmd in _pattern_commands(note.pattern, self.config.hint_pulse_ms):
                    changed = prev is None or prev.holes[cmd.finger] != note.pattern.holes[cmd.finger]
                    if self.config.hint_scope == "full" or changed:
                        out.commands.append((note.onset_ms, cmd))
            self._next_onset += 1

    def _expire_windows(self, now_ms: int, out: TickOutput) -> None:
        i = self._first_pending
        while i < len(self.sched):
            note = self.sched[i]
            deadline = note.onset_ms + self.config.delta_t_ms
            if deadline > now_ms:
                break
            if self.status[i] == _PENDING:
                self.status[i] = _MISSED
                out.reports.append(MistakeReport(note.index, note.onset_ms, deadline))
                if note.end_ms > deadline:
                    for cmd in _pattern_commands(note.pattern):
                        out.commands.append((deadline, cmd))
                    self._holds[i] = _Hold(i, deadline, note.end_ms)
            i += 1
        self._advance_first_pending()

    def _expire_holds(self, now_ms: int, out: TickOutput) -> None:
        for idx in list(self._holds):
            hold = self._holds[idx]
            if hold.end_ms <= now_ms:
                self._release_hold(idx, hold.end_ms, out)

    def _release_hold(self, idx: int, t_ms: int, out: TickOutput) -> None:
        del self._holds[idx]
        for finger in range(6):
            out.commands.append((t_ms, ActuatorCommand(finger, ClutchMode.DETACHED)))

    def _release_at_piece_end(self, now_ms: int, out: TickOutput) -> None:
        if not self._released_at_end and self._next_onset == len(self.sched):
            end = self.end_of_piece_ms
            if now_ms >= end:
                for finger in range(6):
                    out.commands.append((end, ActuatorCommand(finger, ClutchMode.DETACHED)))
                self._released_at_end = True

    def _advance_first_pending(self) -> None:
        while self._first_pending < len(self.status) and self.status[self._first_pending] != _PENDING:
            self._first_pending += 1


def run_to_completion(session: TutorSession, events: Sequence[PitchEvent] = ()) -> TutorSession:
    """Drive ticks at every decision boundary until past the last end + delta_t."""
    for prev, cur in zip(events, events[1:]):
        if cur.t_ms < prev.t_ms:
            raise TutorError(f"event trace unsorted at t={cur.t_ms}")
    delta = session.config.delta_t_ms
    bounds = {session.end_of_piece_ms + delta + 1}
    for note in session.sched:
        bounds.update((note.onset_ms, note.onset_ms + delta, note.end_ms))
    bounds.update(ev.t_ms for ev in events)
    pending = sorted(bounds)
    ev_i = 0
    for t in pending:
        if t < 0:
            continue
        batch = []
        while ev_i < len(events) and events[ev_i].t_ms <= t:
            batch.append(events[ev_i])
            ev_i += 1
        session.tick(t, batch)
    return session


def adaptive_mistakes_bruteforce(
    score: Score, config: TutorConfig, chart: FingeringChart, events: Sequence[PitchEvent]
) -> list[MistakeReport]:
    """Independent full-scan mistake detector used to cross-check the engine."""
    out = []
    for note in schedule(score, config, chart):
        t = note.onset_ms
        hit = any(
            ev.pitch == note.pitch and t <= ev.t_ms <= t + config.delta_t_ms
            for ev in events
            if ev.pitch is not None
        )
        if not hit:
            out.append(MistakeReport(note.index, t, t + config.delta_t_ms))
    return out


# ---------------------------------------------------------------------------
# Log export
# ---------------------------------------------------------------------------

_TARGET_NAMES = {
    ClutchMode.DETACHED: "detached",
    ClutchMode.ATTACHED_UP: "attached_up",
    ClutchMode.ATTACHED_DOWN: "attached_down",
}


def format_log(session: TutorSession) -> str:
    """One event per line, ms timestamp first, stable field order; diffable."""
    rows: list[tuple[int, int, int, str]] = []
    for cue in session.cues:
        rows.append((cue.t_ms, 0, cue.note_index,
                     f"{cue.t_ms} cue note={cue.note_index} pitch={cue.pitch.degree}"))
    for rep in session.reports:
        rows.append((rep.detected_at_ms, 1, rep.note_index,
                     f"{rep.detected_at_ms} mistake note={rep.note_index} "
                     f"t={rep.score_time_ms} detected={rep.detected_at_ms}"))
    for t, cmd in session.commands:
        pulse = cmd.pulse_ms if cmd.pulse_ms is not None else "-"
        rows.append((t, 2, cmd.finger,
                     f"{t} cmd finger={cmd.finger} target={_TARGET_NAMES[cmd.target]} pulse={pulse}"))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return "\n".join(r[3] for r in rows) + ("\n" if rows else "")
