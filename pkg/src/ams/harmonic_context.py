"""Harmonic resource matrix: 12 pitch-class rows by time-cell columns.

Chord choices populate resources (root 1.0, chord tones 0.8, carryover
clamped to 0.5), melodic placements are scored by the mean resource value
of the cells they inhabit, and committed notes consume resources at their
own pitch class plus half of the semitone neighbors and the tritone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chord_model import ChordSymbol

CELLS_PER_BEAT = 4  # 16th-note grid at 4/4
TICKS_PER_QUARTER = 480
TICKS_PER_CELL = TICKS_PER_QUARTER // CELLS_PER_BEAT

ROOT_VALUE = 1.0
CHORD_TONE_VALUE = 0.8
INITIAL_VALUE = 0.3
CARRYOVER_CLAMP = 0.5

WINDOW_MEASURES = 4
SLIDE_MEASURES = 2


class HarmonyError(ValueError):
    pass


@dataclass(frozen=True)
class Placement:
    """A melodic fragment positioned in the current two-measure region."""

    fragment: "MelodicFragment"  # noqa: F821 - melody imports this module
    transposition: int  # semitones
    time_shift: int  # cells


class ResourceMatrix:
    """12 x T grid of harmonic resource values in [0, 1].

    The window spans four measures and slides by two on each extend; the
    last two measures (the "active region") are where new placements land.
    """

    def __init__(self, beats_per_measure: int = 4):
        self.beats_per_measure = beats_per_measure
        self.cells_per_measure = beats_per_measure * CELLS_PER_BEAT
        self.columns = WINDOW_MEASURES * self.cells_per_measure
        self.cells = np.full((12, self.columns), INITIAL_VALUE)
        self.chord_labels: list[ChordSymbol | None] = [None] * self.columns
        self.region_start = SLIDE_MEASURES * self.cells_per_measure
        self.region_cells = self.columns - self.region_start

    def copy(self) -> "ResourceMatrix":
        clone = ResourceMatrix(self.beats_per_measure)
        clone.cells = self.cells.copy()
        clone.chord_labels = list(self.chord_labels)
        return clone

    # -- extension ----------------------------------------------------------

    def extend(self, chords: list[tuple[ChordSymbol, int]]) -> None:
        """Slide the window by two measures and fill the new columns from the
        given chords (durations in measures, summing to exactly two)."""
        if not chords:
            raise HarmonyError("extend requires at least one chord")
        total = 0
        for chord, measures in chords:
            if not isinstance(chord, ChordSymbol):
                raise HarmonyError(f"not a chord symbol: {chord!r}")
            if measures <= 0:
                raise HarmonyError("chord duration must be positive")
            total += measures
        if total != SLIDE_MEASURES:
            raise HarmonyError(f"chords must cover exactly {SLIDE_MEASURES} measures, got {total}")

        slide = SLIDE_MEASURES * self.cells_per_measure
        self.cells[:, :-slide] = self.cells[:, slide:]
        self.chord_labels[:-slide] = self.chord_labels[slide:]

        col = self.columns - slide
        for chord, measures in chords:
            for _ in range(measures * self.cells_per_measure):
                previous = self.cells[:, col - 1]
                column = np.clip(previous, 0.0, CARRYOVER_CLAMP)
                for tone in chord.tones:
                    column[tone] = CHORD_TONE_VALUE
                column[chord.root] = ROOT_VALUE
                self.cells[:, col] = column
                self.chord_labels[col] = chord
                col += 1

    # -- placement geometry -------------------------------------------------

    def note_cells(self, onset_ticks: int, duration_ticks: int) -> range:
        """Cell indices (fragment-relative) a note occupies."""
        start = onset_ticks // TICKS_PER_CELL
        end = -(-(onset_ticks + duration_ticks) // TICKS_PER_CELL)
        return range(start, end)

    def placement_cells(self, placement: Placement) -> tuple[np.ndarray, np.ndarray]:
        """(pitch-class rows, absolute columns) for every inhabited cell."""
        rows: list[int] = []
        cols: list[int] = []
        for note in placement.fragment.notes:
            pc = (note.pitch + placement.transposition) % 12
            for cell in self.note_cells(note.onset, note.duration):
                col = self.region_start + placement.time_shift + cell
                if col < self.region_start or col >= self.columns:
                    raise HarmonyError(
                        f"placement cell {col} outside active region "
                        f"[{self.region_start}, {self.columns})")
                rows.append(pc)
                cols.append(col)
        if not rows:
            raise HarmonyError("placement inhabits no cells")
        return np.array(rows), np.array(cols)

    # -- scoring and consumption --------------------------------------------

    def harmonic_fitness(self, placement: Placement) -> float:
        """Mean resource value over all inhabited cells."""
        rows, cols = self.placement_cells(placement)
        return float(self.cells[rows, cols].mean())

    def fitness_by_transposition(self, placement: Placement) -> np.ndarray:
        """Harmonic fitness for the placement at each of the 12 pitch-class
        offsets added to its transposition (fitness is octave-invariant)."""
        rows, cols = self.placement_cells(placement)
        offsets = np.arange(12)[:, None]
        return self.cells[(rows[None, :] + offsets) % 12, cols[None, :]].mean(axis=1)

    def consume(self, placement: Placement) -> None:
        """Zero inhabited cells, halve semitone neighbors and the tritone."""
        rows, cols = self.placement_cells(placement)
        for pc, col in zip(rows.tolist(), cols.tolist()):
            self.cells[(pc + 1) % 12, col] *= 0.5
            self.cells[(pc - 1) % 12, col] *= 0.5
            self.cells[(pc + 6) % 12, col] *= 0.5
        self.cells[rows, cols] = 0.0

    def dump_csv(self) -> str:
        """CSV dump of the matrix, row order C..B, for golden tests."""
        lines = []
        names = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
        for row, name in enumerate(names):
            values = ",".join(f"{v:.4f}" for v in self.cells[row])
            lines.append(f"{name},{values}")
        return "\n".join(lines)
