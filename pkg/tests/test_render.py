"""MIDI writing, parse-back and event streaming."""

import pytest

from ams.render import (
    RenderError,
    Score,
    ScoreNote,
    Track,
    VirtualClock,
    _vlq,
    read_midi_bytes,
    score_events,
    score_to_midi_bytes,
    stream_events,
)


def sample_score() -> Score:
    melody = Track("melody-1", 0, [
        ScoreNote(60, 0, 480, 96),
        ScoreNote(64, 480, 480, 90),
        ScoreNote(67, 960, 960, 100),
    ])
    drums = Track("percussion", 9, [
        ScoreNote(36, 0, 60, 100),
        ScoreNote(38, 480, 60, 110),
    ])
    return Score(tempo_bpm=120.0, tracks=[melody, drums])


def test_header_and_format():
    blob = score_to_midi_bytes(sample_score())
    assert blob[:4] == b"MThd"
    assert blob[8:10] == b"\x00\x01"   # SMF type 1
    assert blob[12:14] == (480).to_bytes(2, "big")


def test_round_trip():
    score = sample_score()
    parsed = read_midi_bytes(score_to_midi_bytes(score))
    assert parsed.tempo_bpm == pytest.approx(120.0)
    assert len(parsed.tracks) == 2
    for original, parsed_track in zip(score.tracks, parsed.tracks):
        assert parsed_track.name == original.name
        assert parsed_track.channel == original.channel
        assert sorted(parsed_track.notes, key=lambda n: (n.onset, n.pitch)) == \
            sorted(original.notes, key=lambda n: (n.onset, n.pitch))


def test_bytes_are_deterministic():
    assert score_to_midi_bytes(sample_score()) == score_to_midi_bytes(sample_score())


def test_note_off_before_on_at_same_tick():
    track = Track("t", 0, [ScoreNote(60, 0, 480, 96), ScoreNote(60, 480, 480, 96)])
    parsed = read_midi_bytes(score_to_midi_bytes(Score(120.0, [track])))
    assert len(parsed.tracks[0].notes) == 2


def test_vlq_encoding():
    assert _vlq(0) == b"\x00"
    assert _vlq(127) == b"\x7f"
    assert _vlq(128) == b"\x81\x00"
    assert _vlq(0x3FFF) == b"\xff\x7f"
    with pytest.raises(RenderError):
        _vlq(-1)


def test_zero_duration_rejected():
    track = Track("t", 0, [ScoreNote(60, 0, 0, 96)])
    with pytest.raises(RenderError):
        score_to_midi_bytes(Score(120.0, [track]))


def test_parse_back_detects_unmatched_note_on():
    import struct
    body = b"\x00\x90\x3c\x40" + b"\x00\xff\x2f\x00"  # note-on, no note-off
    blob = (b"MThd" + struct.pack(">IHHH", 6, 1, 1, 480)
            + b"MTrk" + struct.pack(">I", len(body)) + body)
    with pytest.raises(RenderError):
        read_midi_bytes(blob)


def test_score_events_order_and_times():
    events = score_events(sample_score())
    times = [e.time_s for e in events]
    assert times == sorted(times)
    assert events[0].time_s == 0.0 and events[0].kind == "on"
    # 480 ticks at 120 bpm = one quarter note = 0.5 s
    on_64 = next(e for e in events if e.kind == "on" and e.pitch == 64)
    assert on_64.time_s == pytest.approx(0.5)


def test_stream_events_with_virtual_clock():
    clock = VirtualClock()
    seen = []
    stream_events(score_events(sample_score()), clock,
                  lambda e, t: seen.append((e.pitch, e.kind, round(t, 6))))
    assert len(seen) == 10
    assert clock.now() == pytest.approx(2.0)  # last note-off at tick 1920
