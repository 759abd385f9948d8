"""Framed byte protocol for the device link.

Frame layout on the wire::

    0x7E  kind  seq  length  payload...  crc_hi  crc_lo

``kind`` is 0x00 Command, 0x01 Telemetry, 0x02 Heartbeat. ``seq`` is a
rolling 8-bit counter. ``length`` is the unescaped payload byte count,
at most 64. The CRC is CCITT (poly 0x1021, init 0xFFFF), big-endian,
computed over kind, seq, length, and the unescaped payload. Payload bytes
0x7E/0x7D are escaped as 0x7D followed by the byte XOR 0x20; header seq
and CRC bytes travel raw, so the decoder accepts any value in those
positions. The decoder is incremental, never raises on garbage, counts
dropped frames, and rescans from just past a failed frame's sync byte so
valid frames after arbitrary noise are always recovered.

Payload layouts (big-endian):

    Command:   finger u8, target u8 (0 detached / 1 up / 2 down), pulse_ms u16 (0 = hold)
    Telemetry: t_ms u32, six sensor bytes (0..255 maps to 0.0..1.0)
    Heartbeat: empty
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional

from .device import ActuatorCommand, ClutchMode
from .sensing import SensorFrame

SYNC = 0x7E
ESCAPE = 0x7D
ESCAPE_XOR = 0x20
MAX_PAYLOAD = 64


class FrameKind(IntEnum):
    COMMAND = 0x00
    TELEMETRY = 0x01
    HEARTBEAT = 0x02


class WireError(ValueError):
    """Frame construction errors; the decoder itself never raises."""


def crc16_ccitt(data: bytes, init: int = 0xFFFF) -> int:
    crc = init
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[((crc >> 8) ^ b) & 0xFF]
    return crc


def _build_crc_table(poly: int = 0x1021) -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ poly) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    seq: int
    payload: bytes = b""

    def __post_init__(self) -> None:
        if not 0 <= self.seq <= 0xFF:
            raise WireError(f"seq must fit a byte, got {self.seq}")
        if len(self.payload) > MAX_PAYLOAD:
            raise WireError(f"payload too long: {len(self.payload)} > {MAX_PAYLOAD}")


def encode_frame(frame: Frame) -> bytes:
    body = bytes([frame.kind, frame.seq, len(frame.payload)])
    crc = crc16_ccitt(body + frame.payload)
    out = bytearray([SYNC])
    out += body
    for b in frame.payload:
        if b in (SYNC, ESCAPE):
            out += bytes([ESCAPE, b ^ ESCAPE_XOR])
        else:
            out.append(b)
    out += struct.pack(">H", crc)
    return bytes(out)


class FrameEncoder:
    """Stateful encoder that assigns the rolling sequence number."""

    def __init__(self) -> None:
        self.seq = 0

    def encode(self, kind: FrameKind, payload: bytes = b"") -> bytes:
        frame = Frame(kind, self.seq, payload)
        self.seq = (self.seq + 1) & 0xFF
        return encode_frame(frame)


_OK, _BAD, _INCOMPLETE = 0, 1, 2


def _try_parse(buf: bytes, i: int) -> tuple[int, int, Optional[Frame]]:
    """Attempt one frame at buf[i] (which holds SYNC). Returns (status, end, frame)."""
    n = len(buf)
    if i + 4 > n:
        return _INCOMPLETE, i, None
    kind_b, seq, length = buf[i + 1], buf[i + 2], buf[i + 3]
    if kind_b > max(FrameKind) or length > MAX_PAYLOAD:
        return _BAD, i, None
    payload = bytearray()
    j = i + 4
    while len(payload) < length:
        if j >= n:
            return _INCOMPLETE, i, None
        b = buf[j]
        if b == SYNC:
            return _BAD, i, None  # conforming encoders escape payload sync bytes
        if b == ESCAPE:
            if j + 1 >= n:
                return _INCOMPLETE, i, None
            payload.append(buf[j + 1] ^ ESCAPE_XOR)
            j += 2
        else:
            payload.append(b)
            j += 1
    if j + 2 > n:
        return _INCOMPLETE, i, None
    crc = (buf[j] << 8) | buf[j + 1]
    body = bytes([kind_b, seq, length]) + bytes(payload)
    if crc != crc16_ccitt(body):
        return _BAD, i, None
    return _OK, j + 2, Frame(FrameKind(kind_b), seq, bytes(payload))


class FrameDecoder:
    """Incremental decoder; feed arbitrary chunks, collect frames and error count."""

    def __init__(self) -> None:
        self._buf = bytearray()
        self.errors = 0

    def feed(self, data: bytes) -> list[Frame]:
        self._buf += data
        frames: list[Frame] = []
        pos = 0
        buf = self._buf
        while True:
            sync = buf.find(SYNC, pos)
            if sync < 0:
                pos = len(buf)
                break
            status, end, frame = _try_parse(bytes(buf), sync)
            if status == _OK:
                frames.append(frame)  # type: ignore[arg-type]
                pos = end
            elif status == _BAD:
                self.errors += 1
                pos = sync + 1  # rescan just past the failed sync
            else:
                pos = sync  # incomplete: wait for more bytes
                break
        del self._buf[:pos]
        return frames


def decode_stream(data: bytes) -> tuple[list[Frame], int]:
    dec = FrameDecoder()
    frames = dec.feed(data)
    return frames, dec.errors


# ---------------------------------------------------------------------------
# Payload codecs
# ---------------------------------------------------------------------------

_MODE_TO_BYTE = {
    ClutchMode.DETACHED: 0,
    ClutchMode.ATTACHED_UP: 1,
    ClutchMode.ATTACHED_DOWN: 2,
}
_BYTE_TO_MODE = {v: k for k, v in _MODE_TO_BYTE.items()}


def encode_command(cmd: ActuatorCommand) -> bytes:
    pulse = cmd.pulse_ms or 0
    if pulse > 0xFFFF:
        raise WireError(f"pulse_ms too large for wire: {pulse}")
    return struct.pack(">BBH", cmd.finger, _MODE_TO_BYTE[cmd.target], pulse)


def decode_command(payload: bytes) -> ActuatorCommand:
    if len(payload) != 4:
        raise WireError(f"command payload must be 4 bytes, got {len(payload)}")
    finger, target_b, pulse = struct.unpack(">BBH", payload)
    if target_b not in _BYTE_TO_MODE:
        raise WireError(f"unknown clutch target byte {target_b}")
    return ActuatorCommand(finger, _BYTE_TO_MODE[target_b], pulse or None)


def encode_telemetry(frame: SensorFrame) -> bytes:
    if frame.t_ms < 0 or frame.t_ms > 0xFFFFFFFF:
        raise WireError(f"telemetry timestamp out of range: {frame.t_ms}")
    quantized = bytes(min(255, max(0, round(v * 255))) for v in frame.values)
    return struct.pack(">I", frame.t_ms) + quantized


def decode_telemetry(payload: bytes) -> SensorFrame:
    if len(payload) != 10:
        raise WireError(f"telemetry payload must be 10 bytes, got {len(payload)}")
    (t_ms,) = struct.unpack(">I", payload[:4])
    return SensorFrame(t_ms, tuple(b / 255 for b in payload[4:]))


def heartbeat(seq: int) -> bytes:
    return encode_frame(Frame(FrameKind.HEARTBEAT, seq))


def seq_gap(prev_seq: int, cur_seq: int) -> int:
    """Frames lost between two received sequence numbers (mod-256 rollover)."""
    return (cur_seq - prev_seq - 1) & 0xFF
