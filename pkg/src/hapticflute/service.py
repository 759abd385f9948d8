"""Session orchestration and the realtime message channel.

One session = one learner working one score with one strategy method. The
engine's injected clock is authoritative: inbound sensor frames carry no
timestamps — the service stamps them at pump time — so a recorded inbound
timeline replays to a bytewise-identical outbound log.

Channel schema (version 1). Every message is a flat JSON object with
``"v": 1`` and ``"type"``; every outbound message carries the session
clock ``"t"`` in ms.

Inbound:
  {"v":1,"type":"start"}                 begin the first pass (Idle only)
  {"v":1,"type":"stop"}                  abandon the session (-> Done)
  {"v":1,"type":"frame","values":[f*6]}  sensor frame, engine-stamped
  {"v":1,"type":"exam"}                  sit the exam (Test phase only)
  {"v":1,"type":"phase","phase":name}    manual phase override (practice)
  {"v":1,"type":"ping","echo":any}       latency probe

Outbound:
  {"v":1,"type":"snapshot", ...}         full state (sent on connect)
  {"v":1,"type":"phase_change","t","phase","pass_index","state"}
  {"v":1,"type":"cue","t","note","pitch"}
  {"v":1,"type":"hint","t","fingers":[...],"pulse_ms"}
  {"v":1,"type":"clutch","t","targets":[name*6]}
  {"v":1,"type":"mistake","t","note","score_time"}
  {"v":1,"type":"metrics","t","state","phase","pass_index","mistakes",
   "notes","passed","minutes","rate"}
  {"v":1,"type":"ack","t","echo"}
  {"v":1,"type":"error","t","reason"}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Sequence

from .config import EngineConfig
from .device import DeviceSim
from .score import FingeringChart, Score, bundled_score, default_chart
from .sensing import PatternDebouncer, PitchEvent, SensorFrame
from .strategy import (
    DYNAMIC_PHASES,
    STATIC_PHASES,
    PassOutcome,
    Phase,
    grade_exam,
    learning_rate,
    next_phase,
)
from .tutor import Mode, TickOutput, TutorSession

SCHEMA_VERSION = 1


class ServiceError(ValueError):
    """Unknown scores, clock regressions, or schema violations."""


class SessionState(Enum):
    IDLE = "idle"
    RUNNING = "running"
    EXAM = "exam"
    DONE = "done"


_PHASE_MODE = {
    Phase.MANDATORY: Mode.MANDATORY,
    Phase.HINTED: Mode.HINTED,
    Phase.ADAPTIVE: Mode.ADAPTIVE,
}

def _bundled_scores() -> dict[str, Score]:
    return {"song_a": bundled_score("song_a"), "song_b": bundled_score("song_b")}


@dataclass
class SessionDescriptor:
    session_id: str
    score_id: str
    method: str
    phase: Phase
    state: SessionState
    pass_index: int = 0


@dataclass
class _AuditEntry:
    message: dict
    cause: dict


class Session:
    """Engine-side session state; drive with pump()."""

    def __init__(
        self,
        session_id: str,
        score_id: str,
        method: str,
        config: EngineConfig,
        scores: Optional[Mapping[str, Score]] = None,
        chart: Optional[FingeringChart] = None,
    ) -> None:
        scores = scores if scores is not None else _bundled_scores()
        if score_id not in scores:
            raise ServiceError(f"unknown score id {score_id!r}")
        if method not in ("static", "dynamic"):
            raise ServiceError(f"method must be 'static' or 'dynamic', got {method!r}")
        self.config = config
        self.score = scores[score_id]
        self.chart = chart if chart is not None else default_chart()
        self.table = STATIC_PHASES if method == "static" else DYNAMIC_PHASES
        self.descriptor = SessionDescriptor(session_id, score_id, method, self.table[0], SessionState.IDLE)
        self.now_ms = -1
        self.history: list[PassOutcome] = []
        self.audit: list[_AuditEntry] = []
        self.device = DeviceSim(config.geometry)
        self._debouncer = PatternDebouncer(
            self.chart, config.sensing.threshold, config.sensing.debounce_ms
        )
        self._pass_offset = 0
        self._tutor: Optional[TutorSession] = None
        self._detector: Optional[TutorSession] = None  # silent metrics detector
        self._exam_events: list[PitchEvent] = []
        self._exam_started_ms = 0

    # -- public surface ------------------------------------------------------

    @property
    def state(self) -> SessionState:
        return self.descriptor.state

    def snapshot(self, now_ms: int) -> dict:
        d = self.descriptor
        return {
            "v": SCHEMA_VERSION,
            "type": "snapshot",
            "t": now_ms,
            "session": d.session_id,
            "score": d.score_id,
            "method": d.method,
            "state": d.state.value,
            "phase": d.phase.name.lower(),
            "pass_index": d.pass_index,
            "note_count": len(self.score.notes),
            "clutch": [s.mode.value for s in self.device.states],
            "mistakes": sum(o.mistake_count for o in self.history),
        }

    def pump(self, inbound: Sequence[Mapping[str, Any]], now_ms: int) -> list[dict]:
        """Feed inbound messages and advance the clock; returns outbound."""
        if now_ms < self.now_ms:
            raise ServiceError(f"clock regression: pump at {now_ms} after {self.now_ms}")
        self.now_ms = now_ms
        out: list[dict] = []
        for i, msg in enumerate(inbound):
            cause = {"kind": "inbound", "now": now_ms, "index": i, "msg": str(msg.get("type"))}
            self._handle(msg, now_ms, out, cause)
        self._advance(now_ms, out, {"kind": "tick", "now": now_ms})
        return out

    # -- inbound handling ------------------------------------------------

    def _emit(self, msg: dict, out: list[dict], cause: dict) -> None:
        self.audit.append(_AuditEntry(msg, cause))
        out.append(msg)

    def _error(self, reason: str, now: int, out: list[dict], cause: dict) -> None:
        self._emit(
            {"v": SCHEMA_VERSION, "type": "error", "t": now, "reason": reason}, out, cause
        )

    def _handle(self, msg: Mapping[str, Any], now: int, out: list[dict], cause: dict) -> None:
        if msg.get("v") != SCHEMA_VERSION:
            self._error(f"unsupported schema version {msg.get('v')!r}", now, out, cause)
            return
        mtype = msg.get("type")
        if mtype == "ping":
            self._emit(
                {"v": SCHEMA_VERSION, "type": "ack", "t": now, "echo": msg.get("echo")},
                out,
                cause,
            )
        elif mtype == "start":
            if self.state is not SessionState.IDLE:
                self._error(f"cannot start a {self.state.value} session", now, out, cause)
                return
            self.descriptor.state = SessionState.RUNNING
            self._begin_pass(self.descriptor.phase, now, out, cause)
        elif mtype == "stop":
            if self.state is SessionState.DONE:
                self._error("session already done", now, out, cause)
                return
            self.descriptor.state = SessionState.DONE
            self._emit(self._metrics(now, passed=None), out, cause)
        elif mtype == "frame":
            if self.state not in (SessionState.RUNNING, SessionState.EXAM):
                self._error(f"frames rejected while {self.state.value}", now, out, cause)
                return
            self._ingest_frame(msg, now, out, cause)
        elif mtype == "exam":
            if self.state is not SessionState.RUNNING or self.descriptor.phase is not Phase.TEST:
                self._error("exam request outside Test phase", now, out, cause)
                return
            self.descriptor.state = SessionState.EXAM
            # The debouncer is continuous hardware state and is deliberately
            # not reset: the held resting pattern stays change-compressed
            # away, so only notes fingered after this point are collected.
            self._exam_events = []
            self._exam_started_ms = now
            self._emit(self._metrics(now, passed=None), out, cause)
        elif mtype == "phase":
            if self.state is not SessionState.RUNNING:
                self._error(f"phase override rejected while {self.state.value}", now, out, cause)
                return
            try:
                phase = Phase[str(msg.get("phase", "")).upper()]
            except KeyError:
                self._error(f"unknown phase {msg.get('phase')!r}", now, out, cause)
                return
            if phase not in self.table or phase is Phase.TEST:
                self._error(f"phase {phase.name.lower()} not selectable", now, out, cause)
                return
            self._begin_pass(phase, now, out, cause)
        else:
            self._error(f"unknown message type {mtype!r}", now, out, cause)

    def _ingest_frame(self, msg: Mapping[str, Any], now: int, out: list[dict], cause: dict) -> None:
        values = msg.get("values")
        if not isinstance(values, (list, tuple)) or len(values) != 6:
            self._error("frame needs a 6-entry values list", now, out, cause)
            return
        try:
            frame = SensorFrame(now, tuple(float(v) for v in values))
            events = self._debouncer.push(frame)
        except (TypeError, ValueError) as exc:
            self._error(f"bad frame: {exc}", now, out, cause)
            return
        if self.state is SessionState.EXAM:
            self._exam_events.extend(e for e in events if e.pitch is not None)
            if len(self._exam_events) >= len(self.score.notes):
                self._finish_exam(now, out, cause)
        else:
            self._tick_tutor(now, events, out, cause)

    # -- pass lifecycle ----------------------------------------------------

    def _begin_pass(self, phase: Phase, now: int, out: list[dict], cause: dict) -> None:
        self.descriptor.phase = phase
        self._pass_offset = now
        if phase is Phase.TEST:
            self._tutor = None
            self._detector = None
        else:
            mode = _PHASE_MODE[phase]
            self._tutor = TutorSession(self.score, mode, self.config.tutor, self.chart)
            self._detector = (
                TutorSession(self.score, Mode.ADAPTIVE, self.config.tutor, self.chart)
                if mode is Mode.HINTED
                else None
            )
        self._emit(
            {
                "v": SCHEMA_VERSION,
                "type": "phase_change",
                "t": now,
                "phase": phase.name.lower(),
                "pass_index": self.descriptor.pass_index,
                "state": self.state.value,
            },
            out,
            cause,
        )

    def _tick_tutor(self, now: int, events: Sequence[PitchEvent], out: list[dict], cause: dict) -> None:
        if self._tutor is None:
            return
        rel_now = now - self._pass_offset
        rel_events = [
            PitchEvent(e.t_ms - self._pass_offset, e.pitch)
            for e in events
            if e.t_ms >= self._pass_offset
        ]
        ticked = self._tutor.tick(rel_now, rel_events)
        if self._detector is not None:
            self._detector.tick(rel_now, rel_events)
        self._translate(ticked, out, cause)
        if self._tutor.finished:
            self._finish_pass(now, out, cause)

    def _advance(self, now: int, out: list[dict], cause: dict) -> None:
        if self.state is SessionState.RUNNING:
            self._tick_tutor(now, (), out, cause)

    def _translate(self, ticked: TickOutput, out: list[dict], cause: dict) -> None:
        offset = self._pass_offset
        mode = self._tutor.mode if self._tutor is not None else None
        for cue in ticked.cues:
            self._emit(
                {
                    "v": SCHEMA_VERSION,
                    "type": "cue",
                    "t": offset + cue.t_ms,
                    "note": cue.note_index,
                    "pitch": cue.pitch.degree,
                },
                out,
                cause,
            )
        for rep in ticked.reports:
            self._emit(
                {
                    "v": SCHEMA_VERSION,
                    "type": "mistake",
                    "t": offset + rep.detected_at_ms,
                    "note": rep.note_index,
                    "score_time": offset + rep.score_time_ms,
                },
                out,
                cause,
            )
        if not ticked.commands:
            return
        # Stamps inside one tick are not emitted in time order (event-driven
        # releases precede window expiries), so order them for the device.
        commands = sorted(ticked.commands, key=lambda tc: tc[0])
        if mode is Mode.HINTED:
            by_stamp: dict[int, list[int]] = {}
            for t, cmd in commands:
                by_stamp.setdefault(t, []).append(cmd.finger)
            for t in sorted(by_stamp):
                self._emit(
                    {
                        "v": SCHEMA_VERSION,
                        "type": "hint",
                        "t": offset + t,
                        "fingers": sorted(by_stamp[t]),
                        "pulse_ms": self.config.tutor.hint_pulse_ms,
                    },
                    out,
                    cause,
                )
        else:
            stamps: list[int] = []
            for t, cmd in commands:
                self.device.apply(cmd, offset + t)
                if not stamps or stamps[-1] != offset + t:
                    stamps.append(offset + t)
            for t in stamps:
                self._emit(
                    {
                        "v": SCHEMA_VERSION,
                        "type": "clutch",
                        "t": t,
                        "targets": [s.mode.value for s in self.device.states],
                    },
                    out,
                    cause,
                )

    def _pass_outcome(self, now: int) -> PassOutcome:
        phase = self.descriptor.phase
        n = len(self.score.notes)
        if phase is Phase.MANDATORY:
            mistakes = 0
        elif phase is Phase.HINTED:
            mistakes = self._detector.mistake_count if self._detector else 0
        else:
            mistakes = self._tutor.mistake_count if self._tutor else 0
        duration = max(now - self._pass_offset, 0)
        return PassOutcome(phase, min(mistakes, n), n, duration)

    def _metrics(self, now: int, passed: Optional[bool]) -> dict:
        minutes = max(now, 1) / 60000.0
        last = self.history[-1] if self.history else None
        return {
            "v": SCHEMA_VERSION,
            "type": "metrics",
            "t": now,
            "state": self.state.value,
            "phase": self.descriptor.phase.name.lower(),
            "pass_index": self.descriptor.pass_index,
            "mistakes": last.mistake_count if last else 0,
            "notes": len(self.score.notes),
            "passed": passed,
            "minutes": round(minutes, 6),
            "rate": round(learning_rate(1.0, minutes), 6) if passed else None,
        }

    def _finish_pass(self, now: int, out: list[dict], cause: dict) -> None:
        outcome = self._pass_outcome(now)
        self.history.append(outcome)
        self._tutor = None
        self._detector = None
        self._emit(self._metrics(now, passed=None), out, cause)
        nxt = next_phase(self.descriptor.phase, outcome, self.history[:-1], self.config.strategy, self.table)
        self.descriptor.pass_index += 1
        self._begin_pass(nxt, now, out, cause)

    def _finish_exam(self, now: int, out: list[dict], cause: dict) -> None:
        result = grade_exam(self.score, self._exam_events)
        n = len(self.score.notes)
        duration = max(now - self._exam_started_ms, 0)
        outcome = PassOutcome(Phase.TEST, min(result.forgotten_notes, n), n, duration)
        self.history.append(outcome)
        if result.passed:
            self.descriptor.state = SessionState.DONE
            self._emit(self._metrics(now, passed=True), out, cause)
            return
        self.descriptor.state = SessionState.RUNNING
        self._emit(self._metrics(now, passed=False), out, cause)
        nxt = next_phase(Phase.TEST, outcome, self.history[:-1], self.config.strategy, self.table)
        self.descriptor.pass_index += 1
        self._begin_pass(nxt, now, out, cause)


def create_session(
    score_id: str,
    method: str,
    config: Optional[EngineConfig] = None,
    session_id: str = "s0",
    scores: Optional[Mapping[str, Score]] = None,
) -> Session:
    return Session(session_id, score_id, method, config or EngineConfig(), scores=scores)


# ---------------------------------------------------------------------------
# Headless replay
# ---------------------------------------------------------------------------


def encode_message(msg: Mapping[str, Any]) -> str:
    """Canonical single-line JSON; the channel's wire form."""
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def decode_message(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ServiceError(f"bad channel line: {exc}") from exc
    if not isinstance(msg, dict):
        raise ServiceError("channel messages must be JSON objects")
    return msg


def replay_timeline(
    session: Session, timeline: Sequence[tuple[int, Sequence[Mapping[str, Any]]]]
) -> str:
    """Pump a recorded (now, inbound-batch) timeline; returns the outbound
    log as JSON Lines. Replaying the same recording is bytewise stable."""
    lines: list[str] = []
    for now, batch in timeline:
        for msg in session.pump(batch, now):
            lines.append(encode_message(msg))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Websocket app (optional extra)
# ---------------------------------------------------------------------------


def build_app(config: Optional[EngineConfig] = None, scores: Optional[Mapping[str, Score]] = None):
    """FastAPI app exposing the channel at /ws; requires the 'serve' extra."""
    from .serve_app import build_app as _build_app

    return _build_app(config or EngineConfig(), scores)


def serve(config: Optional[EngineConfig] = None) -> None:  # pragma: no cover - blocking entry point
    import uvicorn

    cfg = config or EngineConfig()
    uvicorn.run(build_app(cfg), host=cfg.service.host, port=cfg.service.port, log_level="warning")
