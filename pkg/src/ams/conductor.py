"""The engine loop: 30ms graph ticks, two-measure composition cycles,
harmony/melody leader election, voice ordering, XCS reward feedback and
score assembly."""

from __future__ import annotations

import dataclasses
import json
import logging
import random

from .chord_model import ChordError, ChordSequenceModel, ChordSymbol
from .config import EngineConfig
from .context_graph import AffectSnapshot, ConceptGraph, GraphError, VertexKind
from .harmonic_context import ResourceMatrix
from .melody import (
    Abstention,
    MelodyAgent,
    OPERATOR_NAMES,
    OperatorError,
    RangeConstraint,
    apply_operator,
    evolve_theme,
    max_range,
    placed_fragment,
    realize_reward,
)
from .osc_gateway import MessageQueue
from .percussion import GM_NOTES, generate_percussion
from .render import PERCUSSION_CHANNEL, Score, ScoreNote, Track
from .themes import ThemeLibrary
from .xcs import XcsPopulation

log = logging.getLogger(__name__)

BLOCK_MEASURES = 2
PERCUSSION_HIT_TICKS = 60


class ConductorError(RuntimeError):
    pass


class Engine:
    """Owns the graph, the agents and the growing score.

    Single-writer: one thread calls tick()/run(); the OSC receiver only
    appends to the message queue.
    """

    def __init__(self, config: EngineConfig, themes: ThemeLibrary,
                 chord_model: ChordSequenceModel,
                 queue: MessageQueue | None = None):
        self.config = config
        self.themes = themes
        self.chord_model = chord_model
        self.queue = queue or MessageQueue()
        self.graph = ConceptGraph(config.graph)
        self.rng = random.Random(config.seed)
        self.percussion_rng = random.Random(self.rng.randrange(2**32))
        self.evolution_rng = random.Random(self.rng.randrange(2**32))

        self.agents: list[MelodyAgent] = []
        for i in range(config.n_melody_agents):
            params = dataclasses.replace(config.xcs)
            population = XcsPopulation(params, random.Random(self.rng.randrange(2**32)))
            self.agents.append(MelodyAgent(i + 1, population,
                                           reward_gate=config.reward_gate,
                                           h_min=config.h_min))

        self.matrix = ResourceMatrix(config.beats_per_measure)
        self.chord_history: list[ChordSymbol] = []
        self.cycle_index = 0
        self.time_ms = 0
        self.cycle_log: list[dict] = []
        self._evolution_checked: set[str] = set()

        self.melody_tracks = [
            Track(name=f"melody-{i + 1}", channel=self._channel(i))
            for i in range(config.n_melody_agents)
        ]
        self.percussion_track = Track(name="percussion", channel=PERCUSSION_CHANNEL)

    @staticmethod
    def _channel(index: int) -> int:
        channel = index
        if channel >= PERCUSSION_CHANNEL:
            channel += 1  # channel 10 is reserved for percussion
        return channel % 16

    # -- timing -------------------------------------------------------------

    @property
    def block_ticks(self) -> int:
        return BLOCK_MEASURES * self.config.beats_per_measure * 480

    @property
    def block_ms(self) -> float:
        return BLOCK_MEASURES * self.config.beats_per_measure * 60_000.0 / self.config.tempo_bpm

    # -- graph maintenance --------------------------------------------------

    def ingest(self) -> None:
        """Drain the queue and apply messages; protocol errors are logged."""
        for msg in self.queue.drain():
            try:
                self.graph.apply_message(msg)
            except (GraphError, KeyError) as exc:
                log.warning("rejecting message %r: %s", msg, exc)

    def tick(self) -> None:
        self.ingest()
        self._maybe_evolve_themes()
        self.graph.tick(self.config.tick_ms)
        self.time_ms += self.config.tick_ms

    def _maybe_evolve_themes(self) -> None:
        """Evolve a theme for any unthemed object once its first edge
        appears, breeding from the nearest themed objects."""
        for vid, vertex in list(self.graph.vertices.items()):
            if (vertex.kind is not VertexKind.OBJECT or vertex.theme is not None
                    or vid in self._evolution_checked
                    or self.graph.degree(vid) == 0):
                continue
            self._evolution_checked.add(vid)
            parent_ids = self.graph.nearest_themed(vid, 2)
            parents = [self.themes.get(t) for t in parent_ids if t in self.themes]
            if not parents:
                continue
            if len(parents) == 1:
                parents.append(parents[0])
            child = evolve_theme(parents[0], parents[1], self.evolution_rng)
            new_id = self.themes.add(child)
            if new_id is not None:
                vertex.theme = new_id

    # -- composition --------------------------------------------------------

    def _predict_block_chords(self, rank: int) -> tuple[list[tuple[ChordSymbol, int]], float]:
        """Two one-measure chords; the rank applies to the first chord, the
        follow-up is always rank 1.  Confidence is the mean probability."""
        history = list(self.chord_history[-8:])
        first, conf_first = self.chord_model.next_chord(history, self.config.style, rank)
        second, conf_second = self.chord_model.next_chord(
            history + [first], self.config.style, 1)
        return [(first, 1), (second, 1)], (conf_first + conf_second) / 2.0

    def _explore_prob(self) -> float:
        return self.config.explore_prob * self.config.explore_decay ** self.cycle_index

    def composition_cycle(self, snapshot: AffectSnapshot,
                          theme_id: int) -> dict:
        """Compose one two-measure block; returns the decision log record."""
        if self.chord_model is None:
            raise ConductorError("chord model not trained")
        config = self.config
        theme = self.themes.get(theme_id)
        n_agents = len(self.agents)
        span_limit = max_range(n_agents, config.style, config.range_factors)
        block_start = self.cycle_index * self.block_ticks
        explore = self._explore_prob()
        for agent in self.agents:
            agent.population.params.explore_prob = explore

        # harmony candidates, most likely first
        candidates: list[tuple[int, list[tuple[ChordSymbol, int]], float]] = []
        for rank in range(1, config.top_chord_ranks + 1):
            try:
                chords, confidence = self._predict_block_chords(rank)
            except ChordError:
                break
            candidates.append((rank, chords, confidence))
        if not candidates:
            raise ConductorError("chord model produced no candidates")
        harmony_confidence = candidates[0][2]

        # first melody agent decides before leader election
        lead_agent = self.agents[0]
        operator1, estimate1, action_set1 = lead_agent.decide(
            snapshot, theme_id, mode="explore" if explore > 0 else "exploit")
        melody_confidence = estimate1 / config.reward_max
        gated1 = estimate1 <= config.reward_gate
        fragment1 = None
        if not gated1:
            try:
                fragment1 = apply_operator(theme, operator1)
            except OperatorError:
                fragment1 = None

        base1 = config.agent_range(1)
        constraint1 = RangeConstraint(*base1)
        chosen_rank = candidates[0][0]
        found1 = None
        if harmony_confidence >= melody_confidence or fragment1 is None:
            leader = "harmony"
            self.matrix.extend(candidates[0][1])
            chords = candidates[0][1]
            if fragment1 is not None:
                found1 = lead_agent.search_placement(
                    fragment1, self.matrix, config.style, n_agents, constraint1)
        else:
            # melody leads: walk down the chord ranking until the phrase fits
            leader = "melody"
            chords = candidates[0][1]
            committed = None
            for rank, chords_r, _conf in candidates:
                trial = self.matrix.copy()
                trial.extend(chords_r)
                found = lead_agent.search_placement(
                    fragment1, trial, config.style, n_agents, constraint1)
                if found is not None:
                    committed = (rank, chords_r, trial, found)
                    break
            if committed is not None:
                chosen_rank, chords, self.matrix, found1 = (
                    committed[0], committed[1], committed[2], committed[3])
            else:
                self.matrix.extend(candidates[0][1])
        self.chord_history.extend(chord for chord, _ in chords)

        agent_records: list[dict] = []
        committed_placements: dict[int, object] = {}

        def commit(agent: MelodyAgent, placement, action_set, operator,
                   estimate, h_score, p_score) -> dict:
            self.matrix.consume(placement)
            realized = placed_fragment(placement)
            track = self.melody_tracks[agent.agent_id - 1]
            for note in realized.notes:
                track.notes.append(ScoreNote(note.pitch, block_start + note.onset,
                                             note.duration, note.velocity))
            raw_reward, features = realize_reward(
                snapshot, placement, config.tempo_bpm, config.normalize_happiness)
            clamped = min(config.reward_max, max(0.0, raw_reward))
            agent.population.update(action_set, clamped)
            committed_placements[agent.agent_id] = placement
            return {
                "agent": agent.agent_id,
                "abstained": False,
                "operator": OPERATOR_NAMES[operator],
                "estimated_reward": round(estimate, 6),
                "reward": round(raw_reward, 6),
                "harmonic_fitness": round(h_score, 6),
                "style_fit": round(p_score, 6),
                "score": round(h_score + p_score, 6),
                "transposition": placement.transposition,
                "shift": placement.time_shift,
                "pitches": [n.pitch for n in realized.notes],
                "onsets": [n.onset for n in realized.notes],
                "notes_per_second": round(features.notes_per_second, 6),
                "mean_interval": round(features.mean_interval, 6),
            }

        def abstain(agent: MelodyAgent, operator, estimate, reason: str) -> dict:
            return {
                "agent": agent.agent_id,
                "abstained": True,
                "reason": reason,
                "operator": None if operator is None else OPERATOR_NAMES[operator],
                "estimated_reward": None if estimate is None else round(estimate, 6),
            }

        # agent 1 (highest voice); failed actions reinforce with zero reward,
        # gate abstentions leave the population untouched
        if found1 is not None:
            placement1, h1, p1 = found1
            agent_records.append(commit(lead_agent, placement1, action_set1,
                                        operator1, estimate1, h1, p1))
        else:
            reason = "gate" if gated1 else ("operator" if fragment1 is None else "search")
            if reason != "gate":
                lead_agent.population.update(action_set1, 0.0)
            agent_records.append(abstain(lead_agent, operator1, estimate1, reason))

        voice1 = committed_placements.get(1)
        voice1_notes = placed_fragment(voice1).notes if voice1 else ()
        voice1_min = min((n.pitch for n in voice1_notes), default=None)
        voice1_max = max((n.pitch for n in voice1_notes), default=None)

        # agent 2 (lowest voice), then inner voices ascending
        lower_anchor: int | None = None
        for agent in self.agents[1:]:
            base_lo, base_hi = config.agent_range(agent.agent_id)
            if agent.agent_id == 2:
                hi = base_hi if voice1_min is None else min(base_hi, voice1_min)
                lo = base_lo
                if voice1_max is not None:
                    lo = max(lo, voice1_max - span_limit)
            else:
                lo = base_lo if lower_anchor is None else max(base_lo, lower_anchor)
                hi = base_hi if voice1_min is None else min(base_hi, voice1_min)
            constraint = RangeConstraint(lo, hi)
            proposal = agent.propose(theme, snapshot, theme_id, self.matrix,
                                     config.style, n_agents, constraint,
                                     mode="explore" if explore > 0 else "exploit")
            if isinstance(proposal, Abstention):
                if proposal.reason != "gate":
                    agent.population.update(proposal.action_set, 0.0)
                agent_records.append(abstain(agent, proposal.operator,
                                             proposal.estimated_reward,
                                             proposal.reason))
                continue
            record = commit(agent, proposal.placement, proposal.action_set,
                            proposal.operator, proposal.estimated_reward,
                            proposal.harmonic_fitness, proposal.style_fit)
            agent_records.append(record)
            placed = placed_fragment(proposal.placement)
            top = max(n.pitch for n in placed.notes)
            if agent.agent_id >= 2:
                lower_anchor = top if lower_anchor is None else max(lower_anchor, top)

        # percussion doubles the lowest committed line
        lowest = committed_placements.get(2)
        lowest_onsets = sorted({n.onset for n in placed_fragment(lowest).notes}) if lowest else []
        phrase = generate_percussion(lowest_onsets, config.style, self.percussion_rng)
        percussion_hits = []
        for lane, hits in phrase.lanes.items():
            best_velocity: dict[int, int] = {}
            for onset, velocity in hits:
                best_velocity[onset] = max(best_velocity.get(onset, 0), velocity)
            for onset in sorted(best_velocity):
                self.percussion_track.notes.append(ScoreNote(
                    GM_NOTES[lane], block_start + onset,
                    PERCUSSION_HIT_TICKS, best_velocity[onset]))
                percussion_hits.append([lane, onset])

        record = {
            "cycle": self.cycle_index,
            "t_ms": self.time_ms,
            "theme_id": theme_id,
            "leader": leader,
            "chord_rank": chosen_rank,
            "chords": [str(chord) for chord, _ in chords],
            "confidence_harmony": round(harmony_confidence, 6),
            "confidence_melody": round(melody_confidence, 6),
            "span_limit": span_limit,
            "agents": agent_records,
            "percussion": percussion_hits,
        }
        self.cycle_log.append(record)
        self.cycle_index += 1
        return record

    def compose_block(self) -> dict:
        """Snapshot the graph and compose the next block."""
        snapshot = self.graph.affect_snapshot()
        dominant = self.graph.dominant_theme()
        if dominant is not None and dominant[0] in self.themes:
            theme_id = dominant[0]
        else:
            theme_id = self.config.default_theme
        return self.composition_cycle(snapshot, theme_id)

    # -- main loop ----------------------------------------------------------

    def run(self, duration_ms: int, message_feed=None, clock=None,
            on_block=None) -> Score:
        """Run ticks and composition for duration_ms of engine time.

        message_feed(t_ms) -> list of GameMessages due at or before t_ms
        (used by trace replay).  clock, when given, is slept to pace real
        time; None runs as fast as possible.  Composition happens one block
        ahead of playback.
        """
        n_blocks = -(-duration_ms // self.block_ms)
        start = clock.now() if clock is not None else 0.0
        while self.time_ms < duration_ms:
            if message_feed is not None:
                for msg in message_feed(self.time_ms):
                    self.queue.put(msg)
            # compose every block whose lead-in deadline has passed
            while (self.cycle_index < n_blocks
                   and max(0.0, (self.cycle_index - 1) * self.block_ms) <= self.time_ms):
                record = self.compose_block()
                if on_block is not None:
                    on_block(record)
            self.tick()
            if clock is not None:
                clock.sleep_until(start + self.time_ms / 1000.0)
        return self.score()

    def score(self) -> Score:
        tracks = [t for t in self.melody_tracks]
        tracks.append(self.percussion_track)
        return Score(tempo_bpm=self.config.tempo_bpm, tracks=tracks)

    def score_log_lines(self) -> list[str]:
        """One JSON object per committed note, for the line-oriented score log."""
        rows = []
        for track in self.score().tracks:
            for note in track.notes:
                rows.append({
                    "t_ticks": note.onset,
                    "instrument": track.name,
                    "pitch": note.pitch,
                    "dur": note.duration,
                    "vel": note.velocity,
                })
        rows.sort(key=lambda r: (r["t_ticks"], r["instrument"], r["pitch"]))
        return [json.dumps(r, sort_keys=True) for r in rows]
