"""Melody agents: operators, environment encoding, rewards, placement search
and theme evolution.

A melody agent owns an XCS population mapping an 18-bit context encoding
(six 2-bit affect bins plus a 6-bit theme id) to one of eight melody
operators.  The chosen operator transforms the current theme, and an
exhaustive transposition/time-shift search places the result against the
harmonic resource matrix, maximizing harmonic fitness plus style score.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

from .context_graph import AffectSnapshot
from .harmonic_context import Placement, ResourceMatrix, TICKS_PER_CELL
from .xcs import XcsPopulation

TICKS_PER_QUARTER = 480
MEASURE_TICKS = 4 * TICKS_PER_QUARTER  # 4/4

OPERATOR_NAMES = (
    "reverse", "diminish", "augment", "invert",
    "reverse-diminish", "reverse-augment", "invert-diminish", "invert-augment",
)

MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
MINOR_SCALE = (0, 2, 3, 5, 7, 8, 10)

# style range factor S_r; rock shares the pop value
STYLE_RANGE_FACTORS = {"jazz": 1.0, "pop": 0.8, "rock": 0.8, "folk": 0.7}

DEFAULT_REWARD_GATE = 0.6
DEFAULT_H_MIN = 0.5
TRANSPOSITION_LIMIT = 24


class MelodyError(ValueError):
    pass


class OperatorError(MelodyError):
    """Operator could not be applied; the fragment is rejected."""


@dataclass(frozen=True)
class Note:
    pitch: int  # MIDI note number 0..127
    onset: int  # ticks, 480/quarter
    duration: int  # ticks, > 0
    velocity: int = 96

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise MelodyError(f"pitch {self.pitch} outside 0..127")
        if self.duration <= 0:
            raise MelodyError("duration must be positive")
        if not 1 <= self.velocity <= 127:
            raise MelodyError(f"velocity {self.velocity} outside 1..127")


@dataclass(frozen=True)
class Key:
    tonic: int  # pitch class
    mode: str  # "major" | "minor"

    @property
    def scale(self) -> tuple[int, ...]:
        intervals = MAJOR_SCALE if self.mode == "major" else MINOR_SCALE
        return tuple((self.tonic + i) % 12 for i in intervals)

    def transposed(self, semitones: int) -> "Key":
        return Key((self.tonic + semitones) % 12, self.mode)

    def __str__(self) -> str:
        from .chord_model import PITCH_CLASS_NAMES
        return f"{PITCH_CLASS_NAMES[self.tonic]} {self.mode}"


@dataclass(frozen=True)
class MelodicFragment:
    notes: tuple[Note, ...]
    length_measures: int  # 1..4
    key: Key
    pitch_clamped: bool = False

    def __post_init__(self):
        if not 1 <= self.length_measures <= 4:
            raise MelodyError(f"length {self.length_measures} outside 1..4 measures")
        onsets = [n.onset for n in self.notes]
        if onsets != sorted(onsets):
            raise MelodyError("notes must be sorted by onset")

    @property
    def span_ticks(self) -> int:
        if not self.notes:
            return 0
        return max(n.onset + n.duration for n in self.notes)

    def transposed(self, semitones: int) -> "MelodicFragment":
        clamped = False
        notes = []
        for n in self.notes:
            pitch = n.pitch + semitones
            if pitch < 0 or pitch > 127:
                pitch = min(127, max(0, pitch))
                clamped = True
            notes.append(replace(n, pitch=pitch))
        return replace(self, notes=tuple(notes), key=self.key.transposed(semitones),
                       pitch_clamped=self.pitch_clamped or clamped)

    def shifted(self, ticks: int) -> "MelodicFragment":
        notes = tuple(replace(n, onset=n.onset + ticks) for n in self.notes)
        return replace(self, notes=notes)


def _length_from_span(span: int, fallback: int) -> int:
    if span <= 0:
        return fallback
    return max(1, -(-span // MEASURE_TICKS))


# ---------------------------------------------------------------------------
# operators


def _reverse(fragment: MelodicFragment) -> MelodicFragment:
    span = fragment.length_measures * MEASURE_TICKS
    notes = sorted(
        (replace(n, onset=span - (n.onset + n.duration)) for n in fragment.notes),
        key=lambda n: (n.onset, n.pitch))
    return replace(fragment, notes=tuple(notes))


def _scale_time(fragment: MelodicFragment, factor: float) -> MelodicFragment:
    notes = []
    for n in fragment.notes:
        onset = int(round(n.onset * factor))
        duration = int(round(n.duration * factor))
        if duration < 1:
            raise OperatorError("diminished note shorter than one tick")
        notes.append(replace(n, onset=onset, duration=duration))
    length = _length_from_span(max(n.onset + n.duration for n in notes),
                               fragment.length_measures)
    if length > 4:
        raise OperatorError("augmented fragment exceeds four measures")
    return replace(fragment, notes=tuple(notes), length_measures=length)


def _invert(fragment: MelodicFragment) -> MelodicFragment:
    anchor = fragment.notes[0].pitch
    clamped = False
    notes = []
    for n in fragment.notes:
        pitch = anchor - (n.pitch - anchor)
        if pitch < 0 or pitch > 127:
            pitch = min(127, max(0, pitch))
            clamped = True
        notes.append(replace(n, pitch=pitch))
    return replace(fragment, notes=tuple(notes),
                   pitch_clamped=fragment.pitch_clamped or clamped)


def apply_operator(fragment: MelodicFragment, op: int) -> MelodicFragment:
    """Apply melody operator 0..7; compound names compose right-to-left
    (reverse-diminish diminishes first, then reverses)."""
    if not fragment.notes:
        raise OperatorError("empty fragment")
    if op == 0:
        return _reverse(fragment)
    if op == 1:
        return _scale_time(fragment, 0.5)
    if op == 2:
        return _scale_time(fragment, 2.0)
    if op == 3:
        return _invert(fragment)
    if op == 4:
        return _reverse(_scale_time(fragment, 0.5))
    if op == 5:
        return _reverse(_scale_time(fragment, 2.0))
    if op == 6:
        return _invert(_scale_time(fragment, 0.5))
    if op == 7:
        return _invert(_scale_time(fragment, 2.0))
    raise MelodyError(f"unknown operator {op}")


# ---------------------------------------------------------------------------
# features, rewards, encoding


@dataclass(frozen=True)
class FragmentFeatures:
    notes_per_second: float       # n_s
    mean_interval: float          # mean absolute pitch step, semitones
    diatonic_fraction: float      # d in [0, 1]
    notes_per_beat: float         # n_b
    off_beat_start: int           # o_b: 1 if the first note starts off the beat


def compute_features(fragment: MelodicFragment, tempo_bpm: float) -> FragmentFeatures:
    if not fragment.notes:
        raise MelodyError("features undefined for an empty fragment")
    beats = fragment.length_measures * 4
    seconds = beats * 60.0 / tempo_bpm
    notes = fragment.notes
    intervals = [abs(b.pitch - a.pitch) for a, b in zip(notes, notes[1:])]
    scale = set(fragment.key.scale)
    diatonic = sum(1 for n in notes if n.pitch % 12 in scale)
    return FragmentFeatures(
        notes_per_second=len(notes) / seconds,
        mean_interval=sum(intervals) / len(intervals) if intervals else 0.0,
        diatonic_fraction=diatonic / len(notes),
        notes_per_beat=len(notes) / beats,
        off_beat_start=0 if notes[0].onset % TICKS_PER_QUARTER == 0 else 1,
    )


def reward(snapshot: AffectSnapshot, features: FragmentFeatures,
           normalize_happiness: bool = True) -> float:
    """Affect-conditioned reward over fragment features.

    Happiness is compared against the diatonic fraction; activations are
    0-100 while d is 0-1, so happiness is divided by 100 (toggleable).
    """
    h, e, s, te, th = (snapshot.happiness, snapshot.excitement,
                       snapshot.sadness, snapshot.tenderness, snapshot.threat)
    n_s = features.notes_per_second
    d = features.diatonic_fraction
    p_bar = features.mean_interval
    tempo_term = (n_s - 0.5) / 25.0
    h_term = h / 100.0 if normalize_happiness else h
    r_e = 0.2 - abs(e / 500.0 - tempo_term)
    r_h = 0.2 - abs(h_term - d)
    r_s = abs(s / 500.0 - tempo_term)
    r_te = abs(te / 500.0 - tempo_term)
    r_th = 0.2 - abs(th / 500.0 - (p_bar / 6.0) / 5.0)
    return r_e + r_h + r_s + r_te + r_th


def encode_environment(snapshot: AffectSnapshot, theme_id: int) -> str:
    """Canonical-order affect bins (2 bits each) plus a 6-bit theme id."""
    if not 0 <= theme_id < 64:
        raise MelodyError(f"theme id {theme_id} does not fit 6 bits")
    bits = []
    for level in snapshot.as_tuple():
        if level < 25:
            bits.append("00")
        elif level < 50:
            bits.append("01")
        elif level < 75:
            bits.append("10")
        else:
            bits.append("11")
    return "".join(bits) + format(theme_id, "06b")


def style_score(features: FragmentFeatures, style: str, n_agents: int) -> float:
    """Rhythmic-density style term P."""
    if n_agents < 1:
        raise MelodyError("agent count must be >= 1")
    n_b = features.notes_per_beat
    if style == "jazz":
        return abs(1.0 - n_b) + features.off_beat_start
    if style in ("rock", "pop"):
        return abs(1.0 / n_agents - n_b)
    if style == "folk":
        return abs(1.0 - n_b)
    raise MelodyError(f"unknown style {style!r}")


def max_range(n_agents: int, style: str,
              range_factors: dict[str, float] | None = None) -> int:
    """Maximum span in semitones between the first agent's highest note and
    the second agent's lowest: floor(12 * S_r * N)."""
    if n_agents < 1:
        raise MelodyError("agent count must be >= 1")
    factors = range_factors or STYLE_RANGE_FACTORS
    if style not in factors:
        raise MelodyError(f"unknown style {style!r}")
    return math.floor(12.0 * factors[style] * n_agents)


# ---------------------------------------------------------------------------
# placement search


@dataclass(frozen=True)
class RangeConstraint:
    """Inclusive pitch bounds for a voice; None means unconstrained."""
    min_pitch: int | None = None
    max_pitch: int | None = None

    def allows(self, lo: int, hi: int) -> bool:
        if self.min_pitch is not None and lo < self.min_pitch:
            return False
        if self.max_pitch is not None and hi > self.max_pitch:
            return False
        return True


@dataclass
class Proposal:
    placement: Placement
    action_set: list
    operator: int
    estimated_reward: float
    harmonic_fitness: float
    style_fit: float
    score: float  # M = H + P


@dataclass
class Abstention:
    """A declined turn.  "gate" means the agent chose not to act; "operator"
    and "search" mean it acted but the action failed, which callers should
    reinforce with zero reward."""

    reason: str  # "gate" | "operator" | "search"
    operator: int
    action_set: list
    estimated_reward: float


@dataclass
class MelodyAgent:
    """One melody voice: an XCS population plus placement search."""

    agent_id: int
    population: XcsPopulation
    reward_gate: float = DEFAULT_REWARD_GATE
    h_min: float = DEFAULT_H_MIN

    def decide(self, snapshot: AffectSnapshot, theme_id: int,
               mode: str = "exploit") -> tuple[int, float, list]:
        """Run the XCS step: returns (operator, estimated reward, action set)."""
        bits = encode_environment(snapshot, theme_id)
        match_set = self.population.match_set(bits)
        action, prediction = self.population.select_action(match_set, mode)
        return action, prediction, self.population.action_set(match_set, action)

    def search_placement(self, fragment: MelodicFragment, matrix: ResourceMatrix,
                         style: str, n_agents: int,
                         constraint: RangeConstraint) -> tuple[Placement, float, float] | None:
        """Exhaustive transposition x time-shift search maximizing M = H + P.

        Returns (placement, H, P) or None when no placement satisfies the
        range constraint and the harmonic-fitness floor.
        """
        if not fragment.notes:
            return None
        span_cells = -(-fragment.span_ticks // TICKS_PER_CELL)
        max_shift = matrix.region_cells - span_cells
        if max_shift < 0:
            return None
        lo = min(n.pitch for n in fragment.notes)
        hi = max(n.pitch for n in fragment.notes)

        best: tuple[float, Placement, float, float] | None = None
        for shift in range(max_shift + 1):
            base = Placement(fragment, 0, shift)
            fitness_by_pc = matrix.fitness_by_transposition(base)
            shifted = fragment.shifted(shift * TICKS_PER_CELL)
            p_score = style_score(
                compute_features(shifted, 120.0), style, n_agents)
            # P depends on tempo-free quantities only (n_b, o_b), so any
            # tempo works here
            for transposition in range(-TRANSPOSITION_LIMIT, TRANSPOSITION_LIMIT + 1):
                if not constraint.allows(lo + transposition, hi + transposition):
                    continue
                h_score = float(fitness_by_pc[transposition % 12])
                m_score = h_score + p_score
                if best is None or m_score > best[0]:
                    best = (m_score, Placement(fragment, transposition, shift),
                            h_score, p_score)
        if best is None or best[2] < self.h_min:
            return None
        return best[1], best[2], best[3]

    def propose(self, theme: MelodicFragment, snapshot: AffectSnapshot,
                theme_id: int, matrix: ResourceMatrix, style: str,
                n_agents: int, constraint: RangeConstraint,
                mode: str = "exploit") -> Proposal | Abstention:
        """Full agent step; an Abstention carries why the agent sat out."""
        operator, prediction, action_set = self.decide(snapshot, theme_id, mode)
        if prediction <= self.reward_gate:
            return Abstention("gate", operator, action_set, prediction)
        try:
            fragment = apply_operator(theme, operator)
        except OperatorError:
            return Abstention("operator", operator, action_set, prediction)
        found = self.search_placement(fragment, matrix, style, n_agents, constraint)
        if found is None:
            return Abstention("search", operator, action_set, prediction)
        placement, h_score, p_score = found
        return Proposal(placement, action_set, operator, prediction,
                        h_score, p_score, h_score + p_score)


def placed_fragment(placement: Placement) -> MelodicFragment:
    """The fragment with transposition and time shift applied."""
    return (placement.fragment
            .transposed(placement.transposition)
            .shifted(placement.time_shift * TICKS_PER_CELL))


def realize_reward(snapshot: AffectSnapshot, placement: Placement,
                   tempo_bpm: float,
                   normalize_happiness: bool = True) -> tuple[float, FragmentFeatures]:
    """Reward of the placed fragment at the actual tempo, for the XCS update."""
    realized = placed_fragment(placement)
    features = compute_features(realized, tempo_bpm)
    return reward(snapshot, features, normalize_happiness), features


# ---------------------------------------------------------------------------
# theme evolution


def evolve_theme(parent_a: MelodicFragment, parent_b: MelodicFragment,
                 rng: random.Random,
                 mutation_prob: float = 0.1) -> MelodicFragment:
    """Breed a theme for an unthemed concept.

    Pool = both parents plus every operator image of each; two pool members
    are spliced at a random measure boundary, then each note independently
    mutates pitch or rhythm with the given probability.
    """
    if not parent_a.notes or not parent_b.notes:
        raise MelodyError("empty parent theme")
    pool = [parent_a, parent_b]
    for parent in (parent_a, parent_b):
        for op in range(8):
            try:
                pool.append(apply_operator(parent, op))
            except OperatorError:
                continue

    first = pool[rng.randrange(len(pool))]
    second = pool[rng.randrange(len(pool))]
    boundary = rng.randrange(0, min(first.length_measures, 4)) * MEASURE_TICKS
    head = [n for n in first.notes if n.onset < boundary]
    tail = [n for n in second.notes if n.onset >= boundary]
    notes = head + tail
    if not notes:
        notes = list(first.notes)

    mutated = []
    for n in notes:
        if rng.random() < mutation_prob:
            if rng.random() < 0.5:
                delta = rng.choice([1, 2, 3, 4]) * rng.choice([-1, 1])
                pitch = min(127, max(0, n.pitch + delta))
                n = replace(n, pitch=pitch)
            else:
                factor = rng.choice([0.5, 2.0])
                n = replace(n, duration=max(1, int(round(n.duration * factor))))
        mutated.append(n)

    # trim to the four-measure cap
    mutated = [n for n in mutated if n.onset < 4 * MEASURE_TICKS]
    if not mutated:
        mutated = list(first.notes)
    mutated.sort(key=lambda n: (n.onset, n.pitch))
    length = min(4, _length_from_span(max(n.onset + n.duration for n in mutated), 1))
    return MelodicFragment(tuple(mutated), length, first.key)
