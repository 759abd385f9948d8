"""Musical material for the tutor: pitches, six-hole fingering patterns, the
pitch<->pattern chart, timed note sequences, and a difficulty-matched song
pair generator.

Timeline unit is integer milliseconds throughout. Pattern hole order is
index 0 (closest to the mouthpiece) through index 5.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import Iterable, Optional

HOLE_COUNT = 6

# Hole state characters used by the chart file format.
_CLOSED_CHAR = "X"
_OPEN_CHAR = "O"


class ScoreParseError(ValueError):
    """Malformed score or chart text; message carries the line number."""


class ScoreValidationError(ValueError):
    """Structurally valid text that violates a score invariant."""


class UnknownPitchError(LookupError):
    """Pitch degree absent from the active fingering chart."""


class PairInfeasibleError(RuntimeError):
    """generate_matched_pair gave up; ``retries`` counts abandoned attempts."""

    def __init__(self, message: str, retries: int):
        super().__init__(f"{message} (after {retries} retries)")
        self.retries = retries


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Pitch:
    """Index into the fingering chart's pitch list, ascending by height."""

    degree: int

    def __post_init__(self) -> None:
        if self.degree < 0:
            raise ScoreValidationError(f"pitch degree must be >= 0, got {self.degree}")


@dataclass(frozen=True, order=True)
class FingerPattern:
    """Six hole states; True means the hole is closed by a finger."""

    holes: tuple[bool, bool, bool, bool, bool, bool]

    def __post_init__(self) -> None:
        if len(self.holes) != HOLE_COUNT:
            raise ScoreValidationError(
                f"pattern must have exactly {HOLE_COUNT} holes, got {len(self.holes)}"
            )

    @classmethod
    def from_string(cls, text: str) -> "FingerPattern":
        if len(text) != HOLE_COUNT or any(c not in (_CLOSED_CHAR, _OPEN_CHAR) for c in text):
            raise ScoreParseError(f"pattern must be {HOLE_COUNT} chars of X/O, got {text!r}")
        return cls(tuple(c == _CLOSED_CHAR for c in text))

    def to_string(self) -> str:
        return "".join(_CLOSED_CHAR if h else _OPEN_CHAR for h in self.holes)

    def hamming(self, other: "FingerPattern") -> int:
        return sum(a != b for a, b in zip(self.holes, other.holes))


@dataclass(frozen=True)
class FingeringChart:
    """Injective pitch<->pattern mapping; both lookup directions are functions."""

    entries: tuple[tuple[Pitch, FingerPattern], ...]

    def __post_init__(self) -> None:
        pitches = [p for p, _ in self.entries]
        patterns = [fp for _, fp in self.entries]
        if len(set(pitches)) != len(pitches):
            raise ScoreValidationError("chart has duplicate pitches")
        if len(set(patterns)) != len(patterns):
            raise ScoreValidationError("chart has duplicate patterns")
        object.__setattr__(self, "_by_pitch", {p: fp for p, fp in self.entries})
        object.__setattr__(self, "_by_pattern", {fp: p for p, fp in self.entries})

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, pitch: Pitch) -> bool:
        return pitch in self._by_pitch  # type: ignore[attr-defined]


@dataclass(frozen=True)
class Note:
    pitch: Pitch
    onset_ms: int
    duration_ms: int

    def __post_init__(self) -> None:
        if self.onset_ms < 0:
            raise ScoreValidationError(f"onset must be >= 0, got {self.onset_ms}")
        if self.duration_ms < 1:
            raise ScoreValidationError(f"duration must be >= 1 ms, got {self.duration_ms}")

    @property
    def end_ms(self) -> int:
        return self.onset_ms + self.duration_ms


@dataclass(frozen=True)
class Score:
    """Sorted, non-overlapping notes on a constant-tempo timeline."""

    notes: tuple[Note, ...]
    tempo_bpm: Fraction = Fraction(120)

    def __post_init__(self) -> None:
        if self.tempo_bpm <= 0:
            raise ScoreValidationError(f"tempo must be positive, got {self.tempo_bpm}")
        for prev, cur in zip(self.notes, self.notes[1:]):
            if cur.onset_ms < prev.onset_ms:
                raise ScoreValidationError(
                    f"unsorted onsets: {cur.onset_ms} after {prev.onset_ms}"
                )
            if cur.onset_ms < prev.end_ms:
                raise ScoreValidationError(
                    f"overlapping notes at onset {cur.onset_ms} (previous ends {prev.end_ms})"
                )

    def pitch_sequence(self) -> tuple[Pitch, ...]:
        return tuple(n.pitch for n in self.notes)


# ---------------------------------------------------------------------------
# Chart and score lookups
# ---------------------------------------------------------------------------


def pattern_for_pitch(chart: FingeringChart, pitch: Pitch) -> FingerPattern:
    try:
        return chart._by_pitch[pitch]  # type: ignore[attr-defined]
    except KeyError:
        raise UnknownPitchError(f"pitch degree {pitch.degree} not in chart") from None


def pitch_for_pattern(chart: FingeringChart, pattern: FingerPattern) -> Optional[Pitch]:
    return chart._by_pattern.get(pattern)  # type: ignore[attr-defined]


def validate_against_chart(score: Score, chart: FingeringChart) -> None:
    for note in score.notes:
        if note.pitch not in chart:
            raise ScoreValidationError(
                f"pitch degree {note.pitch.degree} out of chart range (size {len(chart)})"
            )


def movement_count(score: Score, chart: FingeringChart) -> int:
    """Total finger movements: summed Hamming distance between consecutive patterns."""
    patterns = [pattern_for_pitch(chart, n.pitch) for n in score.notes]
    return sum(a.hamming(b) for a, b in zip(patterns, patterns[1:]))


def interval_count(score: Score) -> int:
    """Consecutive note pairs with nonzero pitch difference."""
    seq = score.pitch_sequence()
    return sum(a.degree != b.degree for a, b in zip(seq, seq[1:]))


def pitch_span(score: Score) -> tuple[int, int]:
    degrees = [n.pitch.degree for n in score.notes]
    return min(degrees), max(degrees)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _content_lines(text: str) -> Iterable[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_score(text: str, chart: Optional[FingeringChart] = None) -> Score:
    """Parse score-file text: a ``tempo <bpm>`` header then ``note`` lines."""
    tempo: Optional[Fraction] = None
    notes: list[Note] = []
    for lineno, line in _content_lines(text):
        fields = line.split()
        if fields[0] == "tempo":
            if tempo is not None:
                raise ScoreParseError(f"line {lineno}: duplicate tempo header")
            if len(fields) != 2:
                raise ScoreParseError(f"line {lineno}: expected 'tempo <bpm>'")
            try:
                tempo = Fraction(fields[1])
            except (ValueError, ZeroDivisionError):
                raise ScoreParseError(f"line {lineno}: bad tempo {fields[1]!r}") from None
        elif fields[0] == "note":
            if tempo is None:
                raise ScoreParseError(f"line {lineno}: note before tempo header")
            if len(fields) != 4:
                raise ScoreParseError(
                    f"line {lineno}: expected 'note <degree> <onset_ms> <duration_ms>'"
                )
            try:
                degree, onset, duration = (int(f) for f in fields[1:])
            except ValueError:
                raise ScoreParseError(f"line {lineno}: non-integer note field") from None
            notes.append(Note(Pitch(degree), onset, duration))
        else:
            raise ScoreParseError(f"line {lineno}: unknown directive {fields[0]!r}")
    if tempo is None:
        raise ScoreParseError("missing tempo header")
    score = Score(tuple(notes), tempo)
    if chart is not None:
        validate_against_chart(score, chart)
    return score


def format_score(score: Score) -> str:
    lines = [f"tempo {score.tempo_bpm}"]
    lines += [f"note {n.pitch.degree} {n.onset_ms} {n.duration_ms}" for n in score.notes]
    return "\n".join(lines) + "\n"


def load_chart(text: str) -> FingeringChart:
    """Parse chart-file text: ``pitch <degree> <XO-pattern>`` lines."""
    entries: list[tuple[Pitch, FingerPattern]] = []
    for lineno, line in _content_lines(text):
        fields = line.split()
        if fields[0] != "pitch" or len(fields) != 3:
            raise ScoreParseError(f"line {lineno}: expected 'pitch <degree> <pattern>'")
        try:
            degree = int(fields[1])
        except ValueError:
            raise ScoreParseError(f"line {lineno}: non-integer degree {fields[1]!r}") from None
        try:
            pattern = FingerPattern.from_string(fields[2])
        except ScoreParseError as exc:
            raise ScoreParseError(f"line {lineno}: {exc}") from None
        entries.append((Pitch(degree), pattern))
    return FingeringChart(tuple(entries))


def format_chart(chart: FingeringChart) -> str:
    lines = [f"pitch {p.degree} {fp.to_string()}" for p, fp in chart.entries]
    return "\n".join(lines) + "\n"


def default_chart() -> FingeringChart:
    """The bundled 12-entry six-hole chart (all code stays chart-agnostic)."""
    text = resources.files("hapticflute.data").joinpath("default_chart.txt").read_text()
    return load_chart(text)


def bundled_score(name: str) -> Score:
    """Load one of the shipped example scores ("song_a" or "song_b")."""
    text = resources.files("hapticflute.data").joinpath(f"{name}.score").read_text()
    return load_score(text, default_chart())


# ---------------------------------------------------------------------------
# Matched pair generation
# ---------------------------------------------------------------------------

# Search budgets; exceeding them raises PairInfeasibleError with the count.
_MAX_RESTARTS = 400
_MUTATIONS_PER_RESTART = 400


def _random_run_degrees(
    rng: random.Random, runs: int, lo: int, hi: int, retries_left: int
) -> tuple[list[int], int]:
    """Adjacent-distinct degree sequence covering both lo and hi; rejection sampled."""
    used = 0
    while retries_left - used > 0:
        used += 1
        seq = [rng.randint(lo, hi)]
        for _ in range(runs - 1):
            nxt = rng.randint(lo, hi - 1)
            if nxt >= seq[-1]:
                nxt += 1
            seq.append(nxt)
        if lo in seq and hi in seq:
            return seq, used
    raise PairInfeasibleError("could not place both range endpoints", used)


def _run_lengths(rng: random.Random, length: int, runs: int) -> list[int]:
    cuts = sorted(rng.sample(range(1, length), runs - 1)) if runs > 1 else []
    bounds = [0] + cuts + [length]
    return [b - a for a, b in zip(bounds, bounds[1:])]


def _notes_from_runs(
    degrees: list[int], lengths: list[int], note_ms: int
) -> tuple[Note, ...]:
    notes = []
    t = 0
    for degree, run_len in zip(degrees, lengths):
        for _ in range(run_len):
            notes.append(Note(Pitch(degree), t, note_ms))
            t += note_ms
    return tuple(notes)


def _runs_movement(degrees: list[int], chart: FingeringChart) -> int:
    pats = [pattern_for_pitch(chart, Pitch(d)) for d in degrees]
    return sum(a.hamming(b) for a, b in zip(pats, pats[1:]))


def generate_matched_pair(
    seed: int,
    *,
    length: int,
    degree_lo: int,
    degree_hi: int,
    intervals: int,
    chart: FingeringChart,
    tempo_bpm: Fraction = Fraction(120),
    note_ms: int = 500,
) -> tuple[Score, Score]:
    """Two distinct same-difficulty scores: identical pitch range (min and max
    degree), identical interval count, and identical movement_count.

    Deterministic per seed. Scores are built as ``intervals + 1`` runs of
    repeated pitch, so the interval count is exact by construction; the second
    score's movement total is matched to the first by bounded local search.
    """
    if length < 1:
        raise ScoreValidationError(f"length must be >= 1, got {length}")
    if not (0 <= degree_lo <= degree_hi):
        raise ScoreValidationError("need 0 <= degree_lo <= degree_hi")
    if Pitch(degree_hi) not in chart or Pitch(degree_lo) not in chart:
        raise PairInfeasibleError(
            f"pitch range {degree_lo}..{degree_hi} exceeds chart (size {len(chart)})", 0
        )
    if not (0 <= intervals <= length - 1):
        raise ScoreValidationError(f"intervals must be in 0..{length - 1}, got {intervals}")
    if intervals == 0 and degree_lo != degree_hi:
        raise ScoreValidationError("zero intervals requires degree_lo == degree_hi")
    if intervals >= 1 and degree_lo == degree_hi:
        raise ScoreValidationError("nonzero intervals require degree_hi > degree_lo")

    rng = random.Random(seed)
    runs = intervals + 1
    retries = 0

    if intervals == 0:
        # A zero-interval score is one repeated degree on a fixed grid, so the
        # two scores could never be distinct; reject up front.
        raise PairInfeasibleError("cannot build two distinct zero-interval scores", 0)

    degrees_a, used = _random_run_degrees(rng, runs, degree_lo, degree_hi, _MAX_RESTARTS)
    retries += used - 1
    lengths_a = _run_lengths(rng, length, runs)
    target = _runs_movement(degrees_a, chart)
    notes_a = _notes_from_runs(degrees_a, lengths_a, note_ms)

    while retries < _MAX_RESTARTS:
        degrees_b, used = _random_run_degrees(
            rng, runs, degree_lo, degree_hi, _MAX_RESTARTS - retries
        )
        retries += used - 1
        lengths_b = _run_lengths(rng, length, runs)
        current = _runs_movement(degrees_b, chart)
        for _ in range(_MUTATIONS_PER_RESTART):
            if current == target:
                break
            i = rng.randrange(runs)
            old = degrees_b[i]
            candidate = rng.randint(degree_lo, degree_hi)
            degrees_b[i] = candidate
            ok = (
                (i == 0 or degrees_b[i - 1] != candidate)
                and (i == runs - 1 or degrees_b[i + 1] != candidate)
                and degree_lo in degrees_b
                and degree_hi in degrees_b
            )
            if ok:
                mutated = _runs_movement(degrees_b, chart)
                if abs(mutated - target) <= abs(current - target):
                    current = mutated
                    continue
            degrees_b[i] = old
        notes_b = _notes_from_runs(degrees_b, lengths_b, note_ms)
        if current == target and notes_b != notes_a:
            return (
                Score(notes_a, tempo_bpm),
                Score(notes_b, tempo_bpm),
            )
        retries += 1

    raise PairInfeasibleError("could not match movement count", retries)
