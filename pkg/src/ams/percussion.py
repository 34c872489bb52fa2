"""Percussion agent: the lowest melodic line's rhythm is doubled on the
lowest percussion lane; the remaining kit lanes come from deterministic
style templates with seeded ornaments."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

TICKS_PER_QUARTER = 480
MEASURE_TICKS = 4 * TICKS_PER_QUARTER
PHRASE_TICKS = 2 * MEASURE_TICKS
CELL_TICKS = TICKS_PER_QUARTER // 4

LANES = ("kick", "snare", "hat", "aux")

# General MIDI channel-10 note numbers, used by the renderer
GM_NOTES = {"kick": 36, "snare": 38, "hat": 42, "aux": 46}

ORNAMENT_PROB = 0.1

_TEMPLATES = {
    # per-measure (lane, onset_ticks, velocity) hits
    "rock": [("snare", 480, 110), ("snare", 1440, 110)]
            + [("hat", t, 80) for t in range(0, MEASURE_TICKS, 240)],
    "pop": [("snare", 480, 105), ("snare", 1440, 105)]
           + [("hat", t, 75) for t in range(0, MEASURE_TICKS, 240)],
    # swung ride: beats 1..4 with pickups before 2 and 4
    "jazz": [("hat", 0, 90), ("hat", 480, 80), ("hat", 840, 70),
             ("hat", 960, 90), ("hat", 1440, 80), ("hat", 1800, 70)],
    "folk": [("aux", 0, 90), ("aux", 960, 80)],
}


class PercussionError(ValueError):
    pass


@dataclass
class PercussionPhrase:
    """Two measures of kit hits: lane -> list of (onset ticks, velocity)."""

    lanes: dict[str, list[tuple[int, int]]] = field(
        default_factory=lambda: {lane: [] for lane in LANES})


def generate_percussion(lowest_line_onsets: list[int], style: str,
                        rng: random.Random) -> PercussionPhrase:
    """Two-measure percussion phrase.

    The kick lane doubles the lowest melodic line's onsets verbatim; other
    lanes come from the style template plus rare seeded ornaments on the
    cell grid.
    """
    if style not in _TEMPLATES:
        raise PercussionError(f"unknown style {style!r}")
    phrase = PercussionPhrase()
    for onset in lowest_line_onsets:
        if not 0 <= onset < PHRASE_TICKS:
            raise PercussionError(f"onset {onset} outside the two-measure window")
        phrase.lanes["kick"].append((onset, 100))
    for measure in range(2):
        base = measure * MEASURE_TICKS
        for lane, onset, velocity in _TEMPLATES[style]:
            phrase.lanes[lane].append((base + onset, velocity))
    if rng.random() < ORNAMENT_PROB:
        cell = rng.randrange(PHRASE_TICKS // CELL_TICKS)
        phrase.lanes["hat"].append((cell * CELL_TICKS, 60))
    for lane in LANES:
        phrase.lanes[lane].sort()
    return phrase
