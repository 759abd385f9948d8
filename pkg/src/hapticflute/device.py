"""Simulated point-to-range actuator: six linear-servo clutch units on a
sliding rail, plus the two-link glove kinematics.

Rail coordinate runs from 0 mm (bottom, at the finger hole) to
``track_len_mm`` (top). A detached arm is commanded to mid-track and the
finger peg rides freely in a window around the arm; an attached arm pins
the peg at one rail end. Geometry and setpoints are exact rationals so the
range identity ``2*free_range + arm_width == track_len`` has no float slack;
only the in-flight arm trajectory is floating point.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

from .score import HOLE_COUNT

Millimeters = Union[int, float, Fraction]


class GeometryError(ValueError):
    """Servo geometry that leaves the peg no free travel."""


class CommandError(ValueError):
    """Actuator command violating the command invariants."""


class ClutchMode(Enum):
    DETACHED = "detached"
    ATTACHED_UP = "attached_up"
    ATTACHED_DOWN = "attached_down"


@dataclass(frozen=True)
class ServoGeometry:
    track_len_mm: Fraction = Fraction(40)
    arm_width_mm: Fraction = Fraction(10)
    arm_speed_mm_s: float = 200.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "track_len_mm", Fraction(self.track_len_mm))
        object.__setattr__(self, "arm_width_mm", Fraction(self.arm_width_mm))
        if self.track_len_mm <= 0 or self.arm_width_mm <= 0:
            raise GeometryError("track and arm width must be positive")
        if self.arm_width_mm >= self.track_len_mm:
            raise GeometryError(
                f"arm width {self.arm_width_mm} leaves no free range on track "
                f"{self.track_len_mm}"
            )
        if self.arm_speed_mm_s <= 0:
            raise GeometryError("arm speed must be positive")


def free_range(g: ServoGeometry) -> Fraction:
    """Free peg travel: half the track minus half the arm width. Exact."""
    return g.track_len_mm / 2 - g.arm_width_mm / 2


def setpoint_for(mode: ClutchMode, g: ServoGeometry) -> Fraction:
    if mode is ClutchMode.DETACHED:
        return g.track_len_mm / 2
    if mode is ClutchMode.ATTACHED_UP:
        return g.track_len_mm
    return Fraction(0)


@dataclass(frozen=True)
class ClutchState:
    mode: ClutchMode
    setpoint_mm: Fraction
    arm_pos_mm: float

    @classmethod
    def initial(cls, g: ServoGeometry) -> "ClutchState":
        mid = setpoint_for(ClutchMode.DETACHED, g)
        return cls(ClutchMode.DETACHED, mid, float(mid))


@dataclass(frozen=True)
class ActuatorCommand:
    finger: int
    target: ClutchMode
    pulse_ms: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0 <= self.finger < HOLE_COUNT:
            raise CommandError(f"finger must be 0..{HOLE_COUNT - 1}, got {self.finger}")
        if self.pulse_ms is not None:
            if self.target is ClutchMode.DETACHED:
                raise CommandError("pulse_ms only meaningful with an attached target")
            if self.pulse_ms < 1:
                raise CommandError(f"pulse_ms must be positive, got {self.pulse_ms}")


def step(
    state: ClutchState, cmd: ActuatorCommand, now_ms: int, g: ServoGeometry
) -> tuple[ClutchState, Optional[int]]:
    """Apply a command: retarget the clutch, returning any scheduled auto-detach."""
    new = ClutchState(cmd.target, setpoint_for(cmd.target, g), state.arm_pos_mm)
    detach_at = now_ms + cmd.pulse_ms if cmd.pulse_ms is not None else None
    return new, detach_at


def finger_free_interval(state: ClutchState, g: ServoGeometry) -> tuple[float, float]:
    """Where the peg may sit: a window around a detached arm, a point otherwise."""
    if state.mode is ClutchMode.DETACHED:
        half = float(free_range(g)) / 2
        return state.arm_pos_mm - half, state.arm_pos_mm + half
    fixed = float(state.setpoint_mm)
    return fixed, fixed


# ---------------------------------------------------------------------------
# Whole-hand simulator
# ---------------------------------------------------------------------------


@dataclass
class DeviceSim:
    """Six clutch units with arm motion and pulse auto-detach on an injected clock.

    ``transitions`` records every clutch mode change as (t_ms, finger, mode);
    replaying a command log through this gives the dwell timeline tests need.
    """

    geometry: ServoGeometry = field(default_factory=ServoGeometry)

    def __post_init__(self) -> None:
        self.now_ms = 0
        self.states: list[ClutchState] = [
            ClutchState.initial(self.geometry) for _ in range(HOLE_COUNT)
        ]
        self.transitions: list[tuple[int, int, ClutchMode]] = []
        self.auto_detach_count = 0
        self._detach_heap: list[tuple[int, int, int]] = []  # (due, episode, finger)
        self._episode = [0] * HOLE_COUNT

    def apply(self, cmd: ActuatorCommand, now_ms: int) -> None:
        self.advance(now_ms)
        self._episode[cmd.finger] += 1
        new, detach_at = step(self.states[cmd.finger], cmd, now_ms, self.geometry)
        self.states[cmd.finger] = new
        self.transitions.append((now_ms, cmd.finger, new.mode))
        if detach_at is not None:
            heapq.heappush(self._detach_heap, (detach_at, self._episode[cmd.finger], cmd.finger))

    def advance(self, now_ms: int) -> None:
        if now_ms < self.now_ms:
            raise CommandError(f"clock moved backwards: {now_ms} < {self.now_ms}")
        while self._detach_heap and self._detach_heap[0][0] <= now_ms:
            due, episode, finger = heapq.heappop(self._detach_heap)
            self._move_arms(due)
            if episode != self._episode[finger]:
                continue  # superseded by a later command; stale pulse
            state = self.states[finger]
            self.states[finger] = ClutchState(
                ClutchMode.DETACHED,
                setpoint_for(ClutchMode.DETACHED, self.geometry),
                state.arm_pos_mm,
            )
            self.transitions.append((due, finger, ClutchMode.DETACHED))
            self.auto_detach_count += 1
        self._move_arms(now_ms)

    def _move_arms(self, to_ms: int) -> None:
        dt_s = (to_ms - self.now_ms) / 1000.0
        if dt_s <= 0:
            return
        travel = self.geometry.arm_speed_mm_s * dt_s
        for i, state in enumerate(self.states):
            target = float(state.setpoint_mm)
            delta = target - state.arm_pos_mm
            if delta == 0.0:
                continue
            moved = target if abs(delta) <= travel else state.arm_pos_mm + math.copysign(travel, delta)
            self.states[i] = ClutchState(state.mode, state.setpoint_mm, moved)
        self.now_ms = to_ms


# ---------------------------------------------------------------------------
# Glove linkage kinematics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GloveLinkage:
    ac_mm: float
    bc_mm: float

    def __post_init__(self) -> None:
        if self.ac_mm <= 0 or self.bc_mm <= 0:
            raise GeometryError("link lengths must be positive")


def glove_ab(linkage: GloveLinkage, angle_acb_rad: float) -> float:
    """Distance between the two link endpoints; strictly increasing in the angle."""
    if not 0.0 < angle_acb_rad < math.pi:
        raise ValueError(f"angle must be in (0, pi), got {angle_acb_rad}")
    ac, bc = linkage.ac_mm, linkage.bc_mm
    return math.sqrt(ac * ac + bc * bc - 2.0 * ac * bc * math.cos(angle_acb_rad))
