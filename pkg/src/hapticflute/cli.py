"""Command-line entry points.

Subcommands::

    experiment   run the counterbalanced learning protocol, write a report
    replay       run a recorded sensor trace through one tutoring session
    oracle       cross-check engine mistake detection against a full scan
    frames       hex-dump device-link frames (from a trace, bytes, or demo)
    serve        start the realtime practice service

All subcommands exit 0 on success and 2 with a message on stderr for bad
flags, unreadable files, or malformed inputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import random
import sys
from fractions import Fraction
from typing import Optional, Sequence

from .config import ConfigError, EngineConfig, ServiceConfig, load_config_file
from .device import ActuatorCommand, ClutchMode
from .score import Note, Pitch, Score, default_chart, load_score
from .sensing import PitchEvent, SensorFrame, events_from_frames, load_trace
from .simlab import format_report, run_experiment
from .tutor import (
    Mode,
    TutorConfig,
    TutorSession,
    adaptive_mistakes_bruteforce,
    format_log,
    run_to_completion,
)
from . import wire


# ---------------------------------------------------------------------------
# Oracle cases
# ---------------------------------------------------------------------------


def random_adaptive_case(rng: random.Random) -> tuple[Score, TutorConfig, list[PitchEvent]]:
    """One randomized (score, tutor config, event trace) triple."""
    n = rng.randint(1, 8)
    notes, t = [], rng.randrange(0, 400)
    for _ in range(n):
        dur = rng.randrange(40, 900)
        notes.append((t, dur))
        t += dur + rng.randrange(0, 300)
    degrees = [rng.randrange(0, 12) for _ in range(n)]
    score = Score(tuple(Note(Pitch(d), on, du) for d, (on, du) in zip(degrees, notes)))
    cfg = TutorConfig(
        delta_t_ms=rng.choice([50, 100, 200, 333]),
        tempo_scale=rng.choice([Fraction(1), Fraction(1, 2), Fraction(2), Fraction(3, 4)]),
    )
    horizon = notes[-1][0] + notes[-1][1] + 600
    events = []
    for _ in range(rng.randrange(0, 3 * n + 2)):
        pitch = None if rng.random() < 0.15 else Pitch(rng.randrange(0, 12))
        events.append(PitchEvent(rng.randrange(0, horizon), pitch))
    events.sort(key=lambda e: e.t_ms)
    return score, cfg, events


def oracle_agreement(cases: int, seed: int) -> tuple[int, int]:
    """Count randomized cases where the engine's mistake stream equals the
    brute-force window scan. Returns (agreeing, total)."""
    chart = default_chart()
    rng = random.Random(seed)
    agree = 0
    for _ in range(cases):
        score, cfg, events = random_adaptive_case(rng)
        session = run_to_completion(TutorSession(score, Mode.ADAPTIVE, cfg, chart), events)
        if session.reports == adaptive_mistakes_bruteforce(score, cfg, chart, events):
            agree += 1
    return agree, cases


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _load_engine_config(path: Optional[str]) -> EngineConfig:
    return load_config_file(path) if path else EngineConfig()


def _cmd_experiment(args: argparse.Namespace) -> int:
    cfg = _load_engine_config(args.config)
    plan = cfg.plan()
    overrides = {}
    if args.participants is not None:
        overrides["participants"] = args.participants
    if args.base_seed is not None:
        overrides["base_seed"] = args.base_seed
    if args.gain_active is not None or args.gain_passive is not None:
        learner = plan.learner
        if args.gain_passive is not None:
            learner = dataclasses.replace(learner, gain_passive=args.gain_passive)
        if args.gain_active is not None:
            learner = dataclasses.replace(learner, gain_active=args.gain_active)
        overrides["learner"] = learner
    if overrides:
        plan = dataclasses.replace(plan, **overrides)
    report = run_experiment(plan, args.seeds, parallel=args.parallel, max_workers=args.workers)
    text = format_report(report)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    n = len(report.reps)
    print(f"wrote {args.out} ({plan.participants} participants x {n} reps)")
    print(
        f"dynamic direction wins: rate {report.rate_direction_wins}/{n}, "
        f"forgetting {report.forgetting_direction_wins}/{n}"
    )
    return 0


_MODE_NAMES = {m.name.lower(): m for m in Mode}


def _cmd_replay(args: argparse.Namespace) -> int:
    cfg = _load_engine_config(args.config)
    chart = default_chart()
    with open(args.score, "r", encoding="utf-8") as fh:
        score = load_score(fh.read(), chart)
    with open(args.trace, "r", encoding="utf-8") as fh:
        frames = load_trace(fh.read())
    events = events_from_frames(frames, chart, cfg.sensing.threshold, cfg.sensing.debounce_ms)
    session = TutorSession(score, _MODE_NAMES[args.mode], cfg.tutor, chart)
    run_to_completion(session, events)
    log = format_log(session)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(log)
        print(f"wrote {args.out} ({len(session.reports)} mistakes)")
    else:
        sys.stdout.write(log)
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    agree, total = oracle_agreement(args.cases, args.seed)
    print(f"agreement {agree}/{total}")
    return 0 if agree == total else 1


def _dump_frames(data: bytes, out) -> None:
    frames, errors = wire.decode_stream(data)
    offset = 0
    for i, frame in enumerate(frames):
        raw = wire.encode_frame(frame)
        desc = f"kind={frame.kind.name.lower()} seq={frame.seq} payload={len(frame.payload)}B"
        if frame.kind is wire.FrameKind.TELEMETRY:
            sf = wire.decode_telemetry(frame.payload)
            values = " ".join(f"{v:.3f}" for v in sf.values)
            desc += f" t={sf.t_ms}ms values=[{values}]"
        elif frame.kind is wire.FrameKind.COMMAND:
            cmd = wire.decode_command(frame.payload)
            pulse = f" pulse={cmd.pulse_ms}ms" if cmd.pulse_ms else ""
            desc += f" finger={cmd.finger} target={cmd.target.value}{pulse}"
        print(f"frame {i}: {desc}", file=out)
        for row in range(0, len(raw), 16):
            chunk = raw[row : row + 16]
            print(f"  {offset + row:06x}  {chunk.hex(' ')}", file=out)
        offset += len(raw)
    print(f"{len(frames)} frames, {errors} parse errors", file=out)


def _cmd_frames(args: argparse.Namespace) -> int:
    if args.trace:
        with open(args.trace, "r", encoding="utf-8") as fh:
            sensor_frames = load_trace(fh.read())
        enc = wire.FrameEncoder()
        data = b"".join(
            enc.encode(wire.FrameKind.TELEMETRY, wire.encode_telemetry(f))
            for f in sensor_frames
        )
    elif args.bin:
        with open(args.bin, "rb") as fh:
            data = fh.read()
    else:
        enc = wire.FrameEncoder()
        data = enc.encode(wire.FrameKind.HEARTBEAT)
        data += enc.encode(
            wire.FrameKind.TELEMETRY,
            wire.encode_telemetry(SensorFrame(125, (0.0, 1.0, 0.5, 0.0, 1.0, 0.0))),
        )
        data += enc.encode(
            wire.FrameKind.COMMAND,
            wire.encode_command(ActuatorCommand(2, ClutchMode.ATTACHED_DOWN, 60)),
        )
    _dump_frames(data, sys.stdout)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:  # pragma: no cover - blocking entry point
    from .service import serve

    cfg = _load_engine_config(args.config)
    service = cfg.service
    if args.host is not None:
        service = dataclasses.replace(service, host=args.host)
    if args.port is not None:
        service = dataclasses.replace(service, port=args.port)
    serve(dataclasses.replace(cfg, service=service))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hapticflute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="run the learning protocol and write a report")
    p.add_argument("--participants", type=int, default=None, help="participants per rep")
    p.add_argument("--seeds", type=int, default=20, help="number of repetitions (seeds)")
    p.add_argument("--base-seed", type=int, default=None, help="base RNG seed")
    p.add_argument("--gain-active", type=float, default=None, help="override active mastery gain")
    p.add_argument("--gain-passive", type=float, default=None, help="override passive mastery gain")
    p.add_argument("--parallel", action="store_true", help="run participants in worker processes")
    p.add_argument("--workers", type=int, default=None, help="process count for --parallel")
    p.add_argument("--out", default="experiment_report.txt", help="report file path")
    p.add_argument("--config", default=None, help="engine config file")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("replay", help="run a sensor trace through one tutoring session")
    p.add_argument("--score", required=True, help="score file")
    p.add_argument("--trace", required=True, help="sensor trace file (t v1..v6 lines)")
    p.add_argument("--mode", choices=sorted(_MODE_NAMES), default="adaptive")
    p.add_argument("--out", default=None, help="log file (default: stdout)")
    p.add_argument("--config", default=None, help="engine config file")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("oracle", help="compare engine mistake detection with a full scan")
    p.add_argument("--cases", type=int, default=10000, help="randomized case count")
    p.add_argument("--seed", type=int, default=0, help="case-generator seed")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("frames", help="hex-dump device-link frames")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--trace", default=None, help="encode a sensor trace as telemetry frames")
    src.add_argument("--bin", default=None, help="decode a raw byte-stream file")
    p.set_defaults(func=_cmd_frames)

    p = sub.add_parser("serve", help="start the realtime practice service")
    p.add_argument("--host", default=None, help="bind host (default from config)")
    p.add_argument("--port", type=int, default=None, help="bind port (default from config)")
    p.add_argument("--config", default=None, help="engine config file")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError, LookupError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
