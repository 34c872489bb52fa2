"""Command line entry point.

Subcommands: serve (live OSC), replay (deterministic trace playback),
train-chords, repl (interactive console) and validate-config.  Exit codes:
0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .chord_model import (
    ChordError,
    ChordSequenceModel,
    STYLES,
    ingest_corpus,
    perplexity,
    train,
)
from .conductor import ConductorError, Engine
from .config import ASSET_ROOT, ConfigError, EngineConfig, load_config
from .context_graph import GraphError
from .melody import MelodyError
from .osc_gateway import (
    ActivateConcept,
    AssignTheme,
    GameMessage,
    MessageQueue,
    OscServer,
    SetAffect,
    SetEdge,
)
from .render import RealClock, VirtualClock, score_events, stream_events, write_midi
from .themes import ThemeError, ThemeLibrary

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class TraceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# trace files: one JSON object per line, non-decreasing t_ms


def parse_trace_line(obj: dict) -> GameMessage:
    kind = obj.get("type")
    if kind == "activate":
        return ActivateConcept(obj["name"], obj.get("kind", "object"),
                               float(obj["level"]), obj.get("mode", "set"))
    if kind == "affect":
        return SetAffect(obj["category"], float(obj["level"]),
                         obj.get("mode", "set"))
    if kind == "edge":
        return SetEdge(obj["a"], obj["b"], float(obj["weight"]))
    if kind == "theme":
        return AssignTheme(obj["concept"], int(obj["theme_id"]))
    raise TraceError(f"unknown event type {kind!r}")


def parse_trace(text: str, source: str = "<trace>") -> list[tuple[int, GameMessage]]:
    events: list[tuple[int, GameMessage]] = []
    last_t = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
            t_ms = int(obj["t_ms"])
            msg = parse_trace_line(obj)
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise TraceError(f"{source}:{lineno}: {exc}") from None
        if t_ms < last_t:
            raise TraceError(
                f"{source}:{lineno}: t_ms {t_ms} goes backwards (after {last_t})")
        last_t = t_ms
        events.append((t_ms, msg))
    if not events:
        raise TraceError(f"{source}: empty trace")
    return events


def trace_feed(events: list[tuple[int, GameMessage]]):
    """message_feed callable for Engine.run, consuming events in order."""
    index = 0

    def feed(t_ms: int) -> list[GameMessage]:
        nonlocal index
        due: list[GameMessage] = []
        while index < len(events) and events[index][0] <= t_ms:
            due.append(events[index][1])
            index += 1
        return due

    return feed


# ---------------------------------------------------------------------------
# engine bootstrap


def load_chord_model(config: EngineConfig) -> ChordSequenceModel:
    if config.chord_model_path is not None:
        return ChordSequenceModel.load(config.chord_model_path)
    tokens = []
    for style in STYLES:
        path = ASSET_ROOT / "corpora" / f"{style}.chords"
        tokens.extend(ingest_corpus(path.read_text(), style))
    return train(tokens, order=config.chord_order)


def build_engine(config: EngineConfig) -> Engine:
    themes = ThemeLibrary.load_dir(config.theme_path)
    model = load_chord_model(config)
    return Engine(config, themes, model)


def write_outputs(engine: Engine, args) -> None:
    if args.out:
        write_midi(engine.score(), args.out)
    if getattr(args, "cycle_log", None):
        with open(args.cycle_log, "w") as fh:
            for record in engine.cycle_log:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    if getattr(args, "score_log", None):
        with open(args.score_log, "w") as fh:
            for line in engine.score_log_lines():
                fh.write(line + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_serve(args) -> int:
    config = load_config(args.config) if args.config else EngineConfig()
    engine = build_engine(config)
    server = OscServer(engine.queue, port=args.port or config.osc_port,
                       host=config.osc_host)
    server.start()
    print(f"listening on udp {config.osc_host}:{server.port}", flush=True)
    clock = RealClock()
    try:
        engine.run(int(args.duration_s * 1000), clock=clock,
                   on_block=lambda rec: print(
                       f"cycle {rec['cycle']}: leader={rec['leader']} "
                       f"chords={' '.join(rec['chords'])}", flush=True))
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    write_outputs(engine, args)
    if args.play:
        events = score_events(engine.score())
        stream_events(events, RealClock(),
                      lambda e, t: print(f"{t:8.3f}s {e.kind:3} ch{e.channel} "
                                         f"pitch={e.pitch} vel={e.velocity}"))
    return EXIT_OK


def cmd_replay(args) -> int:
    config = load_config(args.config) if args.config else EngineConfig()
    if args.seed is not None:
        config.seed = args.seed
    engine = build_engine(config)
    events = parse_trace(Path(args.trace).read_text(), str(args.trace))
    duration = args.duration_ms or events[-1][0] + int(2 * engine.block_ms)
    engine.run(duration, message_feed=trace_feed(events), clock=None)
    write_outputs(engine, args)
    print(f"replayed {len(events)} events over {duration} ms: "
          f"{engine.cycle_index} cycles, "
          f"{sum(len(t.notes) for t in engine.score().tracks)} notes")
    return EXIT_OK


def cmd_train_chords(args) -> int:
    tokens = []
    if args.corpus:
        for spec in args.corpus:
            style, sep, path = spec.partition(":")
            if not sep or style not in STYLES:
                raise ChordError(
                    f"corpus must be style:path with style in {STYLES}, got {spec!r}")
            tokens.extend(ingest_corpus(Path(path).read_text(), style))
    else:
        for style in STYLES:
            path = ASSET_ROOT / "corpora" / f"{style}.chords"
            tokens.extend(ingest_corpus(path.read_text(), style))
    model = train(tokens, order=args.order)
    model.save(args.out)
    held_out = perplexity(model, tokens)
    print(f"trained order-{args.order} model on {len(tokens)} tokens, "
          f"{len(model.chord_vocabulary)} chords, "
          f"training perplexity {held_out:.3f}")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"ok: style={config.style} tempo={config.tempo_bpm} "
          f"agents={config.n_melody_agents} seed={config.seed}")
    return EXIT_OK


REPL_HELP = """commands:
  affect <category> <level>        set an affect activation (0-100)
  activate <name> <level> [env]    activate an object (or environment) concept
  edge <a> <b> <weight>            add an explicit edge (0-1)
  theme <concept> <id>             assign a theme to an object
  tick [n]                         advance n engine ticks (default 1)
  compose                          compose the next two-measure block
  graph                            dump the context graph
  save <path.mid>                  write the score so far
  quit                             exit
"""


def cmd_repl(args) -> int:
    config = load_config(args.config) if args.config else EngineConfig()
    engine = build_engine(config)
    print(REPL_HELP, end="", flush=True)
    while True:
        try:
            line = input("ams> ")
        except EOFError:
            break
        words = line.split()
        if not words:
            continue
        cmd = words[0].lower()
        try:
            if cmd in ("quit", "exit"):
                break
            elif cmd == "help":
                print(REPL_HELP, end="")
            elif cmd == "affect" and len(words) == 3:
                engine.queue.put(SetAffect(words[1], float(words[2]), "set"))
                engine.ingest()
            elif cmd == "activate" and len(words) in (3, 4):
                kind = "environment" if len(words) == 4 and words[3] == "env" else "object"
                engine.queue.put(ActivateConcept(words[1], kind, float(words[2]), "set"))
                engine.ingest()
            elif cmd == "edge" and len(words) == 4:
                engine.queue.put(SetEdge(words[1], words[2], float(words[3])))
                engine.ingest()
            elif cmd == "theme" and len(words) == 3:
                engine.queue.put(AssignTheme(words[1], int(words[2])))
                engine.ingest()
            elif cmd == "tick":
                n = int(words[1]) if len(words) > 1 else 1
                for _ in range(n):
                    engine.tick()
                print(f"t={engine.time_ms} ms")
            elif cmd == "compose":
                record = engine.compose_block()
                print(json.dumps(record, indent=2, sort_keys=True))
            elif cmd == "graph":
                print(engine.graph.dump())
            elif cmd == "save" and len(words) == 2:
                write_midi(engine.score(), words[1])
                print(f"wrote {words[1]}")
            else:
                print(f"unrecognized: {line!r} (try 'help')")
        except (ValueError, GraphError, ThemeError, ConductorError) as exc:
            print(f"error: {exc}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ams", description="adaptive music system")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run live with an OSC listener")
    p.add_argument("--config", help="config file path")
    p.add_argument("--port", type=int, help="override the OSC UDP port")
    p.add_argument("--duration-s", type=float, default=60.0)
    p.add_argument("--out", help="write the final score as a MIDI file")
    p.add_argument("--cycle-log", help="write per-cycle JSON lines")
    p.add_argument("--score-log", help="write per-note JSON lines")
    p.add_argument("--play", action="store_true",
                   help="print timed note events after the run")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="deterministically replay a trace file")
    p.add_argument("trace", help="JSONL trace of game events")
    p.add_argument("--config", help="config file path")
    p.add_argument("--seed", type=int, help="override the engine seed")
    p.add_argument("--duration-ms", type=int,
                   help="engine time to simulate (default: trace end + 2 blocks)")
    p.add_argument("--out", help="write the final score as a MIDI file")
    p.add_argument("--cycle-log", help="write per-cycle JSON lines")
    p.add_argument("--score-log", help="write per-note JSON lines")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("train-chords", help="train the next-chord model")
    p.add_argument("corpus", nargs="*",
                   help="style:path chord chart files (default: bundled corpora)")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--out", required=True, help="model output path")
    p.set_defaults(func=cmd_train_chords)

    p = sub.add_parser("repl", help="interactive console")
    p.add_argument("--config", help="config file path")
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("validate-config", help="check a config file")
    p.add_argument("config", help="config file path")
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceError, ChordError, ThemeError, MelodyError,
            ConductorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
