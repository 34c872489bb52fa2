"""Next-chord model: tokenization, ranking, confidence, persistence."""

import math

import pytest

from ams.chord_model import (
    ChordError,
    ChordSequenceModel,
    ChordSymbol,
    ingest_corpus,
    parse_chord,
    perplexity,
    train,
)


def test_parse_chord_symbols():
    assert parse_chord("C") == ChordSymbol(0, "maj")
    assert parse_chord("Am") == ChordSymbol(9, "min")
    assert parse_chord("G7") == ChordSymbol(7, "dom7")
    assert parse_chord("Bbmaj7") == ChordSymbol(10, "maj7")
    assert parse_chord("F#m7") == ChordSymbol(6, "min7")
    assert parse_chord("Ddim") == ChordSymbol(2, "dim")
    assert parse_chord("Eaug") == ChordSymbol(4, "aug")
    assert parse_chord("Gsus4") == ChordSymbol(7, "sus4")


def test_parse_chord_rejects_garbage():
    with pytest.raises(ChordError):
        parse_chord("H7")
    with pytest.raises(ChordError):
        parse_chord("Cmaj9")


def test_chord_tones():
    assert parse_chord("C").tones == (0, 4, 7)
    assert parse_chord("C7").tones == (0, 4, 7, 10)
    assert parse_chord("Am").tones == (9, 0, 4)


def test_ingest_inserts_style_tokens_at_barlines():
    tokens = ingest_corpus("C | G\nAm F", "pop")
    assert tokens == [parse_chord("C"), "pop", parse_chord("G"), "pop",
                      parse_chord("Am"), parse_chord("F")]


def test_ingest_reports_line_numbers():
    with pytest.raises(ChordError, match="line 2"):
        ingest_corpus("C | G\nC | X9", "pop")


def test_deterministic_continuation_has_full_confidence():
    tokens = ingest_corpus("\n".join(["C | G"] * 8), "pop")
    model = train(tokens, order=3)
    chord, confidence = model.next_chord([parse_chord("C")], "pop", 1)
    assert chord == parse_chord("G")
    assert confidence == 1.0


def test_ranked_alternatives():
    text = "\n".join(["C | G"] * 6 + ["C | F"] * 2)
    model = train(ingest_corpus(text, "pop"), order=3)
    first, p1 = model.next_chord([parse_chord("C")], "pop", 1)
    second, p2 = model.next_chord([parse_chord("C")], "pop", 2)
    assert (first, second) == (parse_chord("G"), parse_chord("F"))
    assert p1 == pytest.approx(0.75)
    assert p2 == pytest.approx(0.25)


def test_distribution_sums_to_one_and_is_sorted():
    model = train(ingest_corpus("C | G | Am | F\nC | F | G | C", "rock"), order=3)
    dist = model.distribution((parse_chord("C"), "rock"))
    assert sum(p for _, p in dist) == pytest.approx(1.0)
    probs = [p for _, p in dist]
    assert probs == sorted(probs, reverse=True)


def test_unseen_context_backs_off():
    model = train(ingest_corpus("C | G\nC | G", "jazz"), order=3)
    chord, confidence = model.next_chord(
        [parse_chord("Ddim"), parse_chord("Eaug")], "jazz", 1)
    assert isinstance(chord, ChordSymbol)
    assert 0.0 < confidence <= 1.0


def test_rank_beyond_vocabulary_raises():
    model = train(ingest_corpus("C | G", "folk"), order=2)
    with pytest.raises(ChordError):
        model.next_chord([], "folk", 99)


def test_style_conditioning_differs():
    text_pop = "\n".join(["C | G"] * 8)
    text_jazz = "\n".join(["C | Am"] * 8)
    tokens = ingest_corpus(text_pop, "pop") + ["jazz"] + ingest_corpus(text_jazz, "jazz")
    model = train(tokens, order=3)
    pop_next, _ = model.next_chord([parse_chord("C")], "pop", 1)
    jazz_next, _ = model.next_chord([parse_chord("C")], "jazz", 1)
    assert pop_next == parse_chord("G")
    assert jazz_next == parse_chord("Am")


def test_save_load_round_trip(tmp_path):
    model = train(ingest_corpus("Dm7 | G7 | Cmaj7", "jazz"), order=2)
    path = tmp_path / "model.bin"
    model.save(path)
    loaded = ChordSequenceModel.load(path)
    assert loaded.order == model.order
    assert loaded.counts == model.counts
    assert loaded.vocabulary == model.vocabulary
    assert path.read_bytes()[:4] == b"AMSC"


def test_load_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ChordError):
        ChordSequenceModel.load(path)


def test_perplexity_lower_on_training_data():
    train_tokens = ingest_corpus("\n".join(["Dm7 | G7 | Cmaj7 | Cmaj7"] * 10), "jazz")
    model = train(train_tokens, order=3)
    on_train = perplexity(model, train_tokens)
    shuffled = ingest_corpus("\n".join(["Cmaj7 | Dm7 | G7 | Dm7"] * 10), "jazz")
    assert on_train < perplexity(model, shuffled)
    assert math.isfinite(on_train)
