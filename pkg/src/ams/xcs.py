"""Accuracy-based learning classifier system (XCS), single-step variant.

Ternary-condition rules over fixed-length bit strings map inputs to one of
a small set of actions.  Classifiers track prediction, absolute prediction
error and relative-accuracy fitness; a niche genetic algorithm runs on
action sets with subsumption, and deletion keeps total numerosity under a
population cap.
"""

from __future__ import annotations

import json
import random
import struct
from dataclasses import dataclass

CONDITION_LENGTH = 18
WILDCARD = "#"


class XcsError(ValueError):
    pass


@dataclass
class XcsParams:
    population_cap: int = 400           # max total numerosity
    learning_rate: float = 0.2          # beta
    error_threshold: float = 0.012      # epsilon_0, 1% of reward_max
    accuracy_power: float = 5.0         # nu
    accuracy_scale: float = 0.1         # alpha
    ga_threshold: float = 25.0          # theta_GA
    crossover_prob: float = 0.8         # chi
    mutation_prob: float = 0.04         # mu, per condition symbol
    wildcard_prob: float = 0.33         # P# during covering
    deletion_threshold: int = 20        # theta_del
    explore_prob: float = 0.1           # epsilon_explore
    min_actions: int = 8                # theta_mna: cover until this many actions
    n_actions: int = 8
    reward_max: float = 1.2
    init_prediction: float = 0.01
    init_error: float = 0.01
    init_fitness: float = 0.01
    subsumption_experience: int = 20    # theta_sub
    tournament_fraction: float = 0.4
    fitness_penalty_fraction: float = 0.1  # low-fitness deletion penalty cutoff


@dataclass
class Classifier:
    condition: str
    action: int
    prediction: float
    error: float
    fitness: float
    experience: int = 0
    numerosity: int = 1
    action_set_size: float = 1.0
    ga_timestamp: int = 0

    def matches(self, bits: str) -> bool:
        return all(c == WILDCARD or c == b for c, b in zip(self.condition, bits))

    def is_more_general(self, other: "Classifier") -> bool:
        more_wildcards = False
        for mine, theirs in zip(self.condition, other.condition):
            if mine != WILDCARD:
                if mine != theirs:
                    return False
            elif theirs != WILDCARD:
                more_wildcards = True
        return more_wildcards


class XcsPopulation:
    """One rule population; owned by a single melody agent."""

    def __init__(self, params: XcsParams | None = None,
                 rng: random.Random | None = None):
        self.params = params or XcsParams()
        self.rng = rng or random.Random(0)
        self.classifiers: list[Classifier] = []
        self.time = 0

    # -- bookkeeping --------------------------------------------------------

    @property
    def total_numerosity(self) -> int:
        return sum(cl.numerosity for cl in self.classifiers)

    def _validate_input(self, bits: str) -> None:
        if len(bits) != CONDITION_LENGTH or any(b not in "01" for b in bits):
            raise XcsError(f"input must be {CONDITION_LENGTH} bits, got {bits!r}")

    # -- match and covering -------------------------------------------------

    def match_set(self, bits: str) -> list[Classifier]:
        """All classifiers matching the input, covering missing actions until
        min_actions distinct actions are present."""
        self._validate_input(bits)
        self.time += 1
        matches = [cl for cl in self.classifiers if cl.matches(bits)]
        while len({cl.action for cl in matches}) < min(self.params.min_actions,
                                                       self.params.n_actions):
            covered = {cl.action for cl in matches}
            missing = [a for a in range(self.params.n_actions) if a not in covered]
            action = missing[0]
            condition = "".join(
                WILDCARD if self.rng.random() < self.params.wildcard_prob else b
                for b in bits)
            cl = Classifier(
                condition=condition,
                action=action,
                prediction=self.params.init_prediction,
                error=self.params.init_error,
                fitness=self.params.init_fitness,
                ga_timestamp=self.time,
            )
            self._insert(cl)
            self._enforce_cap()
            matches = [cl for cl in self.classifiers if cl.matches(bits)]
        return matches

    # -- action selection ---------------------------------------------------

    def system_predictions(self, match_set: list[Classifier]) -> dict[int, float]:
        """Fitness-weighted mean prediction per action."""
        sums: dict[int, float] = {}
        weights: dict[int, float] = {}
        for cl in match_set:
            w = cl.fitness * cl.numerosity
            sums[cl.action] = sums.get(cl.action, 0.0) + cl.prediction * w
            weights[cl.action] = weights.get(cl.action, 0.0) + w
        return {a: sums[a] / weights[a] if weights[a] > 0 else 0.0 for a in sums}

    def select_action(self, match_set: list[Classifier],
                      mode: str = "exploit") -> tuple[int, float]:
        """Pick an action and return it with its system prediction.

        exploit: argmax system prediction, ties to the lowest action id.
        explore: with probability explore_prob a uniform random action.
        """
        if not match_set:
            raise XcsError("empty match set")
        predictions = self.system_predictions(match_set)
        if mode == "explore" and self.rng.random() < self.params.explore_prob:
            action = self.rng.choice(sorted(predictions))
        else:
            action = min(predictions, key=lambda a: (-predictions[a], a))
        return action, predictions[action]

    @staticmethod
    def action_set(match_set: list[Classifier], action: int) -> list[Classifier]:
        return [cl for cl in match_set if cl.action == action]

    # -- reinforcement ------------------------------------------------------

    def update(self, action_set: list[Classifier], reward: float) -> None:
        """Single-step Widrow-Hoff updates plus fitness sharing, then the
        niche GA when the set is stale enough."""
        if not action_set:
            raise XcsError("empty action set")
        beta = self.params.learning_rate
        set_size = sum(cl.numerosity for cl in action_set)

        accuracies: list[float] = []
        for cl in action_set:
            cl.experience += 1
            cl.error += beta * (abs(reward - cl.prediction) - cl.error)
            cl.prediction += beta * (reward - cl.prediction)
            cl.action_set_size += beta * (set_size - cl.action_set_size)
            if cl.error < self.params.error_threshold:
                kappa = 1.0
            else:
                kappa = self.params.accuracy_scale * (
                    cl.error / self.params.error_threshold) ** -self.params.accuracy_power
            accuracies.append(kappa)

        total = sum(k * cl.numerosity for k, cl in zip(accuracies, action_set))
        if total > 0:
            for kappa, cl in zip(accuracies, action_set):
                cl.fitness += beta * (kappa * cl.numerosity / total - cl.fitness)

        self._maybe_run_ga(action_set)

    # -- genetic algorithm --------------------------------------------------

    def _maybe_run_ga(self, action_set: list[Classifier]) -> None:
        numerosity = sum(cl.numerosity for cl in action_set)
        mean_age = sum((self.time - cl.ga_timestamp) * cl.numerosity
                       for cl in action_set) / numerosity
        if mean_age <= self.params.ga_threshold:
            return
        for cl in action_set:
            cl.ga_timestamp = self.time

        parent_a = self._tournament(action_set)
        parent_b = self._tournament(action_set)
        child_a, child_b = list(parent_a.condition), list(parent_b.condition)

        if self.rng.random() < self.params.crossover_prob:
            x = self.rng.randrange(CONDITION_LENGTH + 1)
            y = self.rng.randrange(CONDITION_LENGTH + 1)
            lo, hi = min(x, y), max(x, y)
            child_a[lo:hi], child_b[lo:hi] = child_b[lo:hi], child_a[lo:hi]
            prediction = (parent_a.prediction + parent_b.prediction) / 2
            error = (parent_a.error + parent_b.error) / 2
            fitness = (parent_a.fitness + parent_b.fitness) / 2
            seeds = [(child_a, prediction, error, fitness),
                     (child_b, prediction, error, fitness)]
        else:
            seeds = [(child_a, parent_a.prediction, parent_a.error, parent_a.fitness),
                     (child_b, parent_b.prediction, parent_b.error, parent_b.fitness)]

        for condition, prediction, error, fitness in seeds:
            for i, symbol in enumerate(condition):
                if self.rng.random() < self.params.mutation_prob:
                    condition[i] = WILDCARD if symbol != WILDCARD else \
                        self.rng.choice("01")
            child = Classifier(
                condition="".join(condition),
                action=parent_a.action,
                prediction=prediction,
                error=error,
                fitness=fitness * 0.1,
                ga_timestamp=self.time,
            )
            self._insert_with_subsumption(child, parent_a, parent_b)
        self._enforce_cap()

    def _tournament(self, action_set: list[Classifier]) -> Classifier:
        size = max(1, round(self.params.tournament_fraction * len(action_set)))
        pool = [action_set[self.rng.randrange(len(action_set))] for _ in range(size)]
        best = pool[0]
        for cl in pool[1:]:
            if cl.fitness / cl.numerosity > best.fitness / best.numerosity:
                best = cl
        return best

    def _could_subsume(self, cl: Classifier) -> bool:
        return (cl.experience > self.params.subsumption_experience
                and cl.error < self.params.error_threshold)

    def _insert_with_subsumption(self, child: Classifier,
                                 *parents: Classifier) -> None:
        for parent in parents:
            if (parent.action == child.action and self._could_subsume(parent)
                    and (parent.is_more_general(child)
                         or parent.condition == child.condition)):
                parent.numerosity += 1
                return
        self._insert(child)

    def _insert(self, child: Classifier) -> None:
        for cl in self.classifiers:
            if cl.condition == child.condition and cl.action == child.action:
                cl.numerosity += child.numerosity
                return
        self.classifiers.append(child)

    def _enforce_cap(self) -> None:
        while self.total_numerosity > self.params.population_cap:
            self._delete_one()

    def _delete_one(self) -> None:
        total_num = self.total_numerosity
        mean_fitness = sum(cl.fitness for cl in self.classifiers) / total_num
        votes = []
        for cl in self.classifiers:
            vote = cl.action_set_size * cl.numerosity
            micro_fitness = cl.fitness / cl.numerosity
            if (cl.experience > self.params.deletion_threshold
                    and micro_fitness < self.params.fitness_penalty_fraction * mean_fitness
                    and micro_fitness > 0):
                vote *= mean_fitness / micro_fitness
            votes.append(vote)
        point = self.rng.random() * sum(votes)
        acc = 0.0
        for cl, vote in zip(self.classifiers, votes):
            acc += vote
            if acc >= point:
                cl.numerosity -= 1
                if cl.numerosity == 0:
                    self.classifiers.remove(cl)
                return

    # -- persistence --------------------------------------------------------

    MAGIC = b"AMSX"
    VERSION = 1

    def save(self, path) -> None:
        payload = {
            "time": self.time,
            "classifiers": [
                [cl.condition, cl.action, cl.prediction, cl.error, cl.fitness,
                 cl.experience, cl.numerosity, cl.action_set_size, cl.ga_timestamp]
                for cl in self.classifiers
            ],
        }
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(self.MAGIC + struct.pack(">BI", self.VERSION, len(body)) + body)

    @classmethod
    def load(cls, path, params: XcsParams | None = None,
             rng: random.Random | None = None) -> "XcsPopulation":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != cls.MAGIC:
            raise XcsError(f"{path}: not an XCS population file")
        version, size = struct.unpack_from(">BI", blob, 4)
        if version != cls.VERSION:
            raise XcsError(f"{path}: unsupported population version {version}")
        payload = json.loads(blob[9 : 9 + size].decode("utf-8"))
        population = cls(params, rng)
        population.time = payload["time"]
        for row in payload["classifiers"]:
            population.classifiers.append(Classifier(*row))
        return population

    def dump_text(self) -> str:
        """One macro-classifier per line, for inspection."""
        lines = []
        for cl in sorted(self.classifiers, key=lambda c: (c.action, c.condition)):
            lines.append(
                f"{cl.condition} -> {cl.action}  p={cl.prediction:.4f} "
                f"eps={cl.error:.4f} F={cl.fitness:.4f} exp={cl.experience} "
                f"num={cl.numerosity}")
        return "\n".join(lines)
