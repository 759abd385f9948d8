"""CLI tests: each subcommand's happy path, artifact determinism, and
error exits on bad flags and unreadable files."""

from __future__ import annotations

import pytest

from hapticflute import wire
from hapticflute.cli import main, oracle_agreement, random_adaptive_case
from hapticflute.score import (
    Note,
    Pitch,
    Score,
    default_chart,
    format_score,
    pattern_for_pitch,
)
from hapticflute.sensing import format_trace, frames_for_pattern

CHART = default_chart()
SONG = Score(tuple(Note(Pitch(d), i * 500, 500) for i, d in enumerate((2, 1, 4))))


def _perfect_trace(score: Score) -> str:
    frames = []
    for note in score.notes:
        pat = pattern_for_pitch(CHART, note.pitch)
        t = note.onset_ms + 5
        while t < note.end_ms:
            frames.append(frames_for_pattern(pat, t))
            t += 10
    return format_trace(frames)


@pytest.fixture()
def song_files(tmp_path):
    score_path = tmp_path / "tiny.score"
    trace_path = tmp_path / "perfect.trace"
    score_path.write_text(format_score(SONG))
    trace_path.write_text(_perfect_trace(SONG))
    return str(score_path), str(trace_path)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def test_replay_perfect_trace_logs_zero_mistakes(song_files, capsys):
    score, trace = song_files
    assert main(["replay", "--score", score, "--trace", trace, "--mode", "adaptive"]) == 0
    log = capsys.readouterr().out
    assert log.count("cue") == 3
    assert "mistake" not in log


def test_replay_empty_trace_logs_all_mistakes(song_files, tmp_path, capsys):
    score, _ = song_files
    empty = tmp_path / "empty.trace"
    empty.write_text("")
    out = tmp_path / "session.log"
    rc = main(["replay", "--score", score, "--trace", str(empty), "--out", str(out)])
    assert rc == 0
    assert "3 mistakes" in capsys.readouterr().out
    assert out.read_text().count("mistake") == 3


def test_replay_missing_file_exits_nonzero(song_files, capsys):
    score, _ = song_files
    rc = main(["replay", "--score", score, "--trace", "/nonexistent.trace"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_replay_malformed_trace_exits_nonzero(song_files, tmp_path, capsys):
    score, _ = song_files
    bad = tmp_path / "bad.trace"
    bad.write_text("10 0.1 0.2\n")
    rc = main(["replay", "--score", score, "--trace", str(bad)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def test_oracle_reports_full_agreement(capsys):
    assert main(["oracle", "--cases", "150", "--seed", "7"]) == 0
    assert capsys.readouterr().out.strip() == "agreement 150/150"


def test_oracle_helper_is_seeded():
    import random

    a = random_adaptive_case(random.Random(3))
    b = random_adaptive_case(random.Random(3))
    assert a == b
    assert oracle_agreement(25, 3) == (25, 25)


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def test_experiment_writes_deterministic_report(tmp_path, capsys):
    out1, out2 = tmp_path / "r1.txt", tmp_path / "r2.txt"
    base = ["experiment", "--participants", "4", "--seeds", "2"]
    assert main(base + ["--out", str(out1)]) == 0
    assert main(base + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    text = out1.read_text()
    assert "rep  dyn_rate  stat_rate" in text
    stdout = capsys.readouterr().out
    assert "dynamic direction wins" in stdout


def test_experiment_gain_overrides_land_in_report(tmp_path):
    out = tmp_path / "null.txt"
    rc = main(
        [
            "experiment",
            "--participants",
            "4",
            "--seeds",
            "1",
            "--gain-active",
            "0.15",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    assert "gain_active=0.15" in out.read_text()


def test_experiment_bad_participants_exits_nonzero(tmp_path, capsys):
    rc = main(["experiment", "--participants", "0", "--seeds", "1", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------


def test_frames_demo_dump(capsys):
    assert main(["frames"]) == 0
    out = capsys.readouterr().out
    assert "kind=heartbeat" in out
    assert "kind=telemetry" in out
    assert "kind=command" in out
    assert "3 frames, 0 parse errors" in out


def test_frames_from_trace(song_files, capsys):
    _, trace = song_files
    assert main(["frames", "--trace", trace]) == 0
    out = capsys.readouterr().out
    n_lines = sum(1 for line in open(trace) if line.strip())
    assert f"{n_lines} frames, 0 parse errors" in out


def test_frames_from_noisy_binary(tmp_path, capsys):
    enc = wire.FrameEncoder()
    data = enc.encode(wire.FrameKind.HEARTBEAT) + b"\x7e\x01garbage" + enc.encode(
        wire.FrameKind.HEARTBEAT
    )
    blob = tmp_path / "link.bin"
    blob.write_bytes(data)
    assert main(["frames", "--bin", str(blob)]) == 0
    out = capsys.readouterr().out
    assert "2 frames" in out
    assert "0 parse errors" not in out


# ---------------------------------------------------------------------------
# parser behavior
# ---------------------------------------------------------------------------


def test_unknown_subcommand_exits_via_argparse():
    with pytest.raises(SystemExit) as exc:
        main(["defragment"])
    assert exc.value.code == 2


def test_missing_required_flag_exits_via_argparse():
    with pytest.raises(SystemExit) as exc:
        main(["replay", "--score", "only.score"])
    assert exc.value.code == 2
