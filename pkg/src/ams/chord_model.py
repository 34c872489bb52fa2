"""Style-conditioned next-chord prediction.

Chord charts are tokenized with barlines replaced by style tokens, an
order-k count model with stupid backoff ranks candidate next chords, and
the (normalized) probability of the returned chord doubles as the harmony
agent's confidence.  The predictor is a small interface so a learned model
can be dropped in without touching callers.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field

STYLES = ("pop", "rock", "jazz", "folk")

BACKOFF_FACTOR = 0.4

PITCH_CLASS_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")

_ROOTS = {
    "C": 0, "C#": 1, "Db": 1, "D": 2, "D#": 3, "Eb": 3, "E": 4, "Fb": 4,
    "E#": 5, "F": 5, "F#": 6, "Gb": 6, "G": 7, "G#": 8, "Ab": 8, "A": 9,
    "A#": 10, "Bb": 10, "B": 11, "Cb": 11, "B#": 0,
}

# quality -> chord tone intervals from the root
QUALITIES = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dom7": (0, 4, 7, 10),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "sus4": (0, 5, 7),
}
_QUALITY_ORDER = tuple(QUALITIES)

_SUFFIXES = {
    "": "maj", "maj": "maj", "M": "maj",
    "m": "min", "min": "min", "-": "min",
    "7": "dom7", "dom7": "dom7",
    "maj7": "maj7", "M7": "maj7",
    "m7": "min7", "min7": "min7", "-7": "min7",
    "dim": "dim", "o": "dim",
    "aug": "aug", "+": "aug",
    "sus4": "sus4", "sus": "sus4",
}

_CHORD_RE = re.compile(r"^([A-G][#b]?)(.*)$")


class ChordError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ChordSymbol:
    root: int  # pitch class 0..11
    quality: str

    def __post_init__(self):
        if not 0 <= self.root < 12:
            raise ChordError(f"root {self.root} is not a pitch class")
        if self.quality not in QUALITIES:
            raise ChordError(f"unknown chord quality {self.quality!r}")

    @property
    def tones(self) -> tuple[int, ...]:
        return tuple((self.root + i) % 12 for i in QUALITIES[self.quality])

    def __str__(self) -> str:
        name = PITCH_CLASS_NAMES[self.root]
        suffix = {"maj": "", "min": "m", "dom7": "7", "maj7": "maj7",
                  "min7": "m7", "dim": "dim", "aug": "aug", "sus4": "sus4"}[self.quality]
        return name + suffix


def parse_chord(token: str) -> ChordSymbol:
    match = _CHORD_RE.match(token)
    if not match:
        raise ChordError(f"unrecognized chord {token!r}")
    root_name, suffix = match.groups()
    quality = _SUFFIXES.get(suffix)
    if quality is None:
        raise ChordError(f"unrecognized chord {token!r}")
    return ChordSymbol(_ROOTS[root_name], quality)


Token = ChordSymbol | str  # style tokens ride along as plain strings


def ingest_corpus(text: str, style: str) -> list[Token]:
    """Tokenize line-oriented chord charts, replacing barlines (and line
    breaks) with the style token."""
    if style not in STYLES:
        raise ChordError(f"unknown style {style!r}")
    tokens: list[Token] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if tokens:
            tokens.append(style)  # line break acts as a barline
        bars = line.split("|")
        for bi, bar in enumerate(bars):
            if bi > 0:
                tokens.append(style)
            for word in bar.split():
                try:
                    tokens.append(parse_chord(word))
                except ChordError:
                    raise ChordError(
                        f"unrecognized chord {word!r} at line {lineno}") from None
    # strip style tokens left dangling at either end
    while tokens and isinstance(tokens[0], str):
        tokens.pop(0)
    while tokens and isinstance(tokens[-1], str):
        tokens.pop()
    return tokens


def _token_key(token: Token) -> str:
    if isinstance(token, ChordSymbol):
        return f"c/{token.root}/{token.quality}"
    return f"s/{token}"


def _token_from_key(key: str) -> Token:
    kind, _, rest = key.partition("/")
    if kind == "c":
        root, _, quality = rest.partition("/")
        return ChordSymbol(int(root), quality)
    return rest


@dataclass
class ChordSequenceModel:
    """Order-k count model with stupid backoff over chords and style tokens."""

    order: int
    counts: dict[tuple[Token, ...], dict[Token, int]] = field(default_factory=dict)
    vocabulary: list[Token] = field(default_factory=list)

    @property
    def chord_vocabulary(self) -> list[ChordSymbol]:
        return sorted(t for t in self.vocabulary if isinstance(t, ChordSymbol))

    # -- scoring ------------------------------------------------------------

    def _chord_counts(self, context: tuple[Token, ...]) -> dict[ChordSymbol, int] | None:
        table = self.counts.get(context)
        if not table:
            return None
        chords = {t: n for t, n in table.items() if isinstance(t, ChordSymbol)}
        return chords or None

    def _score(self, token: Token, context: tuple[Token, ...]) -> float:
        """Stupid-backoff score, used to order the zero-probability tail."""
        chords = self._chord_counts(context)
        if chords:
            count = chords.get(token, 0)
            if count > 0:
                return count / sum(chords.values())
        if not context:
            return 0.0
        return BACKOFF_FACTOR * self._score(token, context[1:])

    def distribution(self, context: tuple[Token, ...]) -> list[tuple[ChordSymbol, float]]:
        """Probabilities over the chord vocabulary for a context.

        Probability mass comes from the longest context suffix with observed
        chord successors; fully unseen contexts back off to shorter ones,
        ultimately the unigram table.  Chords unseen at that context get
        probability 0 and are ordered among themselves by stupid-backoff
        score, then dictionary order.
        """
        context = tuple(context)[-self.order:]
        chords = None
        ctx = context
        while True:
            chords = self._chord_counts(ctx)
            if chords is not None or not ctx:
                break
            ctx = ctx[1:]
        symbols = self.chord_vocabulary
        if chords:
            total = sum(chords.values())
            probs = {sym: chords.get(sym, 0) / total for sym in symbols}
        else:
            probs = {sym: 1.0 / len(symbols) for sym in symbols}
        ranked = sorted(
            symbols,
            key=lambda sym: (-probs[sym], -self._score(sym, context), sym),
        )
        return [(sym, probs[sym]) for sym in ranked]

    def next_chord(self, history: list[Token], style: str,
                   rank: int = 1) -> tuple[ChordSymbol, float]:
        """The rank-th most probable next chord for a style-conditioned
        context, with its probability as confidence."""
        if style not in STYLES:
            raise ChordError(f"unknown style {style!r}")
        if rank < 1:
            raise ChordError("rank must be >= 1")
        context = self._style_context(history, style)
        ranked = self.distribution(context)
        if rank > len(ranked):
            raise ChordError(f"rank {rank} exceeds chord vocabulary ({len(ranked)})")
        return ranked[rank - 1]

    def _style_context(self, history: list[Token], style: str) -> tuple[Token, ...]:
        """Interleave the style token after each history chord, mirroring how
        barlines appear in the training stream."""
        context: list[Token] = []
        for token in history:
            context.append(token)
            if isinstance(token, ChordSymbol):
                context.append(style)
        if not context:
            context.append(style)
        return tuple(context)

    # -- persistence --------------------------------------------------------

    MAGIC = b"AMSC"
    VERSION = 1

    def save(self, path) -> None:
        payload = {
            "order": self.order,
            "vocabulary": [_token_key(t) for t in self.vocabulary],
            "counts": [
                [[_token_key(t) for t in ctx],
                 {_token_key(tok): n for tok, n in sorted(table.items(), key=lambda kv: _token_key(kv[0]))}]
                for ctx, table in sorted(self.counts.items(), key=lambda kv: [_token_key(t) for t in kv[0]])
            ],
        }
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(self.MAGIC + struct.pack(">BI", self.VERSION, len(body)) + body)

    @classmethod
    def load(cls, path) -> "ChordSequenceModel":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != cls.MAGIC:
            raise ChordError(f"{path}: not a chord model file")
        version, size = struct.unpack_from(">BI", blob, 4)
        if version != cls.VERSION:
            raise ChordError(f"{path}: unsupported model version {version}")
        payload = json.loads(blob[9 : 9 + size].decode("utf-8"))
        model = cls(order=payload["order"])
        model.vocabulary = [_token_from_key(k) for k in payload["vocabulary"]]
        for ctx_keys, table in payload["counts"]:
            ctx = tuple(_token_from_key(k) for k in ctx_keys)
            model.counts[ctx] = {_token_from_key(k): n for k, n in table.items()}
        return model


def train(tokens: list[Token], order: int = 3) -> ChordSequenceModel:
    """Count contexts of length 0..order over a token stream."""
    if order < 1:
        raise ChordError("order must be >= 1")
    if not tokens:
        raise ChordError("empty token stream")
    model = ChordSequenceModel(order=order)
    seen: set[str] = set()
    for token in tokens:
        key = _token_key(token)
        if key not in seen:
            seen.add(key)
            model.vocabulary.append(token)
    for i, token in enumerate(tokens):
        for length in range(0, order + 1):
            if i - length < 0:
                break
            context = tuple(tokens[i - length : i])
            model.counts.setdefault(context, {})
            model.counts[context][token] = model.counts[context].get(token, 0) + 1
    return model


def perplexity(model: ChordSequenceModel, tokens: list[Token]) -> float:
    """Held-out perplexity over chord positions (style tokens are context
    only), with a small floor so unseen chords stay finite."""
    import math

    log_sum = 0.0
    count = 0
    history: list[Token] = []
    for token in tokens:
        if isinstance(token, ChordSymbol):
            context = tuple(history)[-model.order:]
            probs = dict(model.distribution(context))
            p = max(probs.get(token, 0.0), 1e-9)
            log_sum += math.log(p)
            count += 1
        history.append(token)
    if count == 0:
        raise ChordError("no chord positions in held-out stream")
    return math.exp(-log_sum / count)
