"""Hole sensing: raw capacitance frames -> debounced patterns -> pitch events.

A pattern must persist for at least ``debounce_ms`` before its pitch (or
none, for unmapped patterns) is emitted; the event carries the time the
pattern first appeared, not the time it was confirmed, so the tutor's
mistake window stays aligned with physical action time. Output is
change-compressed: consecutive events always differ in pitch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .score import HOLE_COUNT, FingeringChart, FingerPattern, Pitch, pitch_for_pattern

DEFAULT_THRESHOLD = 0.5
DEFAULT_DEBOUNCE_MS = 30

_UNSET = object()  # distinct from "last pitch was None"


class SensingError(ValueError):
    """Malformed frames or out-of-order stream input."""


@dataclass(frozen=True)
class SensorFrame:
    t_ms: int
    values: tuple[float, float, float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.values) != HOLE_COUNT:
            raise SensingError(f"frame needs {HOLE_COUNT} values, got {len(self.values)}")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise SensingError(f"sensor values must be in [0,1]: {self.values}")


@dataclass(frozen=True)
class PitchEvent:
    t_ms: int
    pitch: Optional[Pitch]


def decode_pattern(frame: SensorFrame, threshold: float = DEFAULT_THRESHOLD) -> FingerPattern:
    """A hole is closed iff its value reaches the threshold (>= rule)."""
    return FingerPattern(tuple(v >= threshold for v in frame.values))


class PatternDebouncer:
    """Streaming frame->event transformer; push frames, collect events."""

    def __init__(
        self,
        chart: FingeringChart,
        threshold: float = DEFAULT_THRESHOLD,
        debounce_ms: int = DEFAULT_DEBOUNCE_MS,
    ) -> None:
        if debounce_ms < 0:
            raise SensingError(f"debounce must be >= 0, got {debounce_ms}")
        self.chart = chart
        self.threshold = threshold
        self.debounce_ms = debounce_ms
        self._last_t: Optional[int] = None
        self._candidate: Optional[FingerPattern] = None
        self._candidate_since = 0
        self._stable = False
        self._last_pitch = _UNSET

    def push(self, frame: SensorFrame) -> list[PitchEvent]:
        if self._last_t is not None and frame.t_ms < self._last_t:
            raise SensingError(
                f"out-of-order frame: {frame.t_ms} after {self._last_t}"
            )
        self._last_t = frame.t_ms
        pattern = decode_pattern(frame, self.threshold)
        if pattern != self._candidate:
            self._candidate = pattern
            self._candidate_since = frame.t_ms
            self._stable = False
        if self._stable or frame.t_ms - self._candidate_since < self.debounce_ms:
            return []
        self._stable = True
        pitch = pitch_for_pattern(self.chart, pattern)
        if self._last_pitch is not _UNSET and pitch == self._last_pitch:
            return []
        self._last_pitch = pitch
        return [PitchEvent(self._candidate_since, pitch)]


def events_from_frames(
    frames: Iterable[SensorFrame],
    chart: FingeringChart,
    threshold: float = DEFAULT_THRESHOLD,
    debounce_ms: int = DEFAULT_DEBOUNCE_MS,
) -> list[PitchEvent]:
    deb = PatternDebouncer(chart, threshold, debounce_ms)
    events: list[PitchEvent] = []
    for frame in frames:
        events.extend(deb.push(frame))
    return events


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------


def load_trace(text: str) -> list[SensorFrame]:
    """Parse a recorded-trace file: one ``t v1 v2 v3 v4 v5 v6`` line per frame."""
    frames: list[SensorFrame] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 1 + HOLE_COUNT:
            raise SensingError(f"line {lineno}: expected 't v1..v6', got {len(fields)} fields")
        try:
            t = int(fields[0])
            values = tuple(float(f) for f in fields[1:])
        except ValueError:
            raise SensingError(f"line {lineno}: non-numeric field") from None
        frames.append(SensorFrame(t, values))
    for prev, cur in zip(frames, frames[1:]):
        if cur.t_ms < prev.t_ms:
            raise SensingError(f"out-of-order trace at t={cur.t_ms}")
    return frames


def format_trace(frames: Iterable[SensorFrame]) -> str:
    lines = [
        f"{f.t_ms} " + " ".join(f"{v:g}" for v in f.values)
        for f in frames
    ]
    return "\n".join(lines) + "\n"


def frames_for_pattern(pattern: FingerPattern, t_ms: int) -> SensorFrame:
    """Synthesize a saturated frame realizing the given pattern."""
    return SensorFrame(t_ms, tuple(1.0 if closed else 0.0 for closed in pattern.holes))
