"""Percussion phrase generation."""

import random

import pytest

from ams.percussion import (
    GM_NOTES,
    LANES,
    PercussionError,
    PercussionPhrase,
    generate_percussion,
)


def test_kick_doubles_input_onsets():
    rng = random.Random(0)
    onsets = [0, 480, 1920, 2400]
    phrase = generate_percussion(onsets, "rock", rng)
    assert [t for t, _ in phrase.lanes["kick"]] == onsets


def test_rock_template_backbeat():
    phrase = generate_percussion([], "rock", random.Random(1))
    snare = [t for t, _ in phrase.lanes["snare"]]
    assert snare == [480, 1440, 2400, 3360]


def test_jazz_ride_pattern():
    phrase = generate_percussion([], "jazz", random.Random(1))
    ride = [t for t, _ in phrase.lanes["hat"]]
    assert ride[:6] == [0, 480, 840, 960, 1440, 1800]
    assert len(ride) >= 12


def test_folk_uses_aux_lane():
    phrase = generate_percussion([], "folk", random.Random(1))
    assert [t for t, _ in phrase.lanes["aux"]] == [0, 960, 1920, 2880]
    assert phrase.lanes["snare"] == []


def test_unknown_style():
    with pytest.raises(PercussionError):
        generate_percussion([], "polka", random.Random(0))


def test_out_of_window_onset():
    with pytest.raises(PercussionError):
        generate_percussion([4000], "rock", random.Random(0))


def test_deterministic_given_seed():
    a = generate_percussion([0, 960], "pop", random.Random(5))
    b = generate_percussion([0, 960], "pop", random.Random(5))
    assert a.lanes == b.lanes


def test_ornaments_are_rare_and_on_grid():
    extra = 0
    for seed in range(200):
        phrase = generate_percussion([], "pop", random.Random(seed))
        base = generate_percussion([], "pop", random.Random(10**9))
        diff = len(phrase.lanes["hat"]) - len(base.lanes["hat"])
        if diff:
            extra += 1
            assert all(t % 120 == 0 for t, _ in phrase.lanes["hat"])
    assert 0 < extra < 60  # roughly the 10% ornament rate


def test_lane_constants():
    assert set(LANES) == set(GM_NOTES)
    assert GM_NOTES["kick"] == 36
    assert PercussionPhrase().lanes == {lane: [] for lane in LANES}
