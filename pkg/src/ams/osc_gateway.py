"""OSC 1.0 ingestion: wire codec, typed game messages, receive queue and UDP server.

Address schema:
    /ams/activate  (s name, s kind, f level, s mode)
    /ams/affect    (s category, f level, s mode)
    /ams/edge      (s a, s b, f weight)
    /ams/theme     (s concept, s theme_id)

Numerics are big-endian per OSC; strings are NUL-terminated and padded to
4-byte boundaries.  Unknown addresses are skipped with a warning, out-of-range
values reject the single message, structural damage aborts the whole packet.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass

log = logging.getLogger(__name__)

AFFECT_CATEGORIES = ("happiness", "excitement", "anger", "sadness", "tenderness", "threat")

DEFAULT_PORT = 5005
QUEUE_CAPACITY = 65536


class OscDecodeError(ValueError):
    """Structurally broken datagram (truncation, bad padding, bad type tags)."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ActivateConcept:
    name: str
    kind: str  # "object" | "environment"
    level: float  # 0..100
    mode: str  # "set" | "add"


@dataclass(frozen=True)
class SetAffect:
    category: str
    level: float
    mode: str


@dataclass(frozen=True)
class SetEdge:
    a: str
    b: str
    weight: float  # 0..1


@dataclass(frozen=True)
class AssignTheme:
    concept: str
    theme_id: int


GameMessage = ActivateConcept | SetAffect | SetEdge | AssignTheme


# ---------------------------------------------------------------------------
# wire format


def _read_string(data: bytes, offset: int) -> tuple[str, int]:
    end = data.find(b"\x00", offset)
    if end < 0:
        raise OscDecodeError("unterminated OSC string", offset)
    raw = data[offset:end]
    new_offset = offset + ((end - offset) // 4 + 1) * 4
    if new_offset > len(data):
        raise OscDecodeError("string padding runs past end of datagram", end)
    try:
        return raw.decode("utf-8"), new_offset
    except UnicodeDecodeError:
        raise OscDecodeError("non-UTF8 OSC string", offset) from None


def _pad_string(s: str) -> bytes:
    raw = s.encode("utf-8") + b"\x00"
    return raw + b"\x00" * (-len(raw) % 4)


def _parse_message(data: bytes) -> tuple[str, list]:
    """Parse a single OSC message into (address, args)."""
    address, offset = _read_string(data, 0)
    tags, offset = _read_string(data, offset)
    if not tags.startswith(","):
        raise OscDecodeError("type tag string must start with ','", offset)
    args = []
    for tag in tags[1:]:
        if tag == "s":
            value, offset = _read_string(data, offset)
        elif tag == "f":
            if offset + 4 > len(data):
                raise OscDecodeError("truncated float argument", offset)
            (value,) = struct.unpack_from(">f", data, offset)
            offset += 4
        elif tag == "i":
            if offset + 4 > len(data):
                raise OscDecodeError("truncated int argument", offset)
            (value,) = struct.unpack_from(">i", data, offset)
            offset += 4
        else:
            raise OscDecodeError(f"unsupported type tag {tag!r}", offset)
        args.append(value)
    return address, args


def encode_message(address: str, args: list) -> bytes:
    """Encode one OSC message; argument types map str->s, float->f, int->i."""
    tags = ","
    body = b""
    for arg in args:
        if isinstance(arg, str):
            tags += "s"
            body += _pad_string(arg)
        elif isinstance(arg, bool):
            raise TypeError("bool is not an OSC argument type")
        elif isinstance(arg, int):
            tags += "i"
            body += struct.pack(">i", arg)
        elif isinstance(arg, float):
            tags += "f"
            body += struct.pack(">f", arg)
        else:
            raise TypeError(f"unsupported OSC argument {arg!r}")
    return _pad_string(address) + _pad_string(tags) + body


def encode_bundle(elements: list[bytes], timetag: int = 1) -> bytes:
    out = _pad_string("#bundle") + struct.pack(">Q", timetag)
    for element in elements:
        out += struct.pack(">i", len(element)) + element
    return out


# ---------------------------------------------------------------------------
# schema


def _as_number(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    raise ValueError(f"expected numeric argument, got {value!r}")


def _build_activate(args: list) -> ActivateConcept:
    if len(args) != 4:
        raise ValueError("/ams/activate expects (name, kind, level, mode)")
    name, kind, level, mode = args[0], args[1], _as_number(args[2]), args[3]
    if not isinstance(name, str) or not name:
        raise ValueError("concept name must be a non-empty string")
    if kind not in ("object", "environment"):
        raise ValueError(f"unknown concept kind {kind!r}")
    if mode not in ("set", "add"):
        raise ValueError(f"unknown activation mode {mode!r}")
    if not 0.0 <= level <= 100.0:
        raise ValueError(f"activation level {level} outside [0, 100]")
    return ActivateConcept(name, kind, level, mode)


def _build_affect(args: list) -> SetAffect:
    if len(args) != 3:
        raise ValueError("/ams/affect expects (category, level, mode)")
    category, level, mode = args[0], _as_number(args[1]), args[2]
    if not isinstance(category, str) or category.lower() not in AFFECT_CATEGORIES:
        raise ValueError(f"unknown affect category {category!r}")
    if mode not in ("set", "add"):
        raise ValueError(f"unknown activation mode {mode!r}")
    if not 0.0 <= level <= 100.0:
        raise ValueError(f"affect level {level} outside [0, 100]")
    return SetAffect(category.lower(), level, mode)


def _build_edge(args: list) -> SetEdge:
    if len(args) != 3:
        raise ValueError("/ams/edge expects (a, b, weight)")
    a, b, weight = args[0], args[1], _as_number(args[2])
    if not isinstance(a, str) or not isinstance(b, str) or not a or not b:
        raise ValueError("edge endpoints must be non-empty strings")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"edge weight {weight} outside [0, 1]")
    return SetEdge(a, b, weight)


def _build_theme(args: list) -> AssignTheme:
    if len(args) != 2:
        raise ValueError("/ams/theme expects (concept, theme_id)")
    concept, raw_id = args
    if not isinstance(concept, str) or not concept:
        raise ValueError("concept name must be a non-empty string")
    if isinstance(raw_id, str):
        try:
            theme_id = int(raw_id)
        except ValueError:
            raise ValueError(f"theme id {raw_id!r} is not an integer") from None
    elif isinstance(raw_id, int):
        theme_id = raw_id
    else:
        raise ValueError(f"theme id {raw_id!r} is not an integer")
    if not 0 <= theme_id < 64:
        raise ValueError(f"theme id {theme_id} outside [0, 63]")
    return AssignTheme(concept, theme_id)


_BUILDERS = {
    "/ams/activate": _build_activate,
    "/ams/affect": _build_affect,
    "/ams/edge": _build_edge,
    "/ams/theme": _build_theme,
}


def message_to_osc(msg: GameMessage) -> bytes:
    """Encode a typed GameMessage back to its wire form."""
    if isinstance(msg, ActivateConcept):
        return encode_message("/ams/activate", [msg.name, msg.kind, float(msg.level), msg.mode])
    if isinstance(msg, SetAffect):
        return encode_message("/ams/affect", [msg.category, float(msg.level), msg.mode])
    if isinstance(msg, SetEdge):
        return encode_message("/ams/edge", [msg.a, msg.b, float(msg.weight)])
    if isinstance(msg, AssignTheme):
        return encode_message("/ams/theme", [msg.concept, str(msg.theme_id)])
    raise TypeError(f"not a GameMessage: {msg!r}")


def decode_packet(data: bytes) -> list[GameMessage]:
    """Decode one UDP datagram (message or bundle) into GameMessages.

    Per-message schema violations are logged and skipped; structural damage
    raises OscDecodeError.
    """
    if not data:
        return []
    if data.startswith(b"#bundle\x00"):
        if len(data) < 16:
            raise OscDecodeError("truncated bundle header", len(data))
        offset = 16  # "#bundle\0" + 64-bit timetag
        messages: list[GameMessage] = []
        while offset < len(data):
            if offset + 4 > len(data):
                raise OscDecodeError("truncated bundle element size", offset)
            (size,) = struct.unpack_from(">i", data, offset)
            offset += 4
            if size < 0 or offset + size > len(data):
                raise OscDecodeError("bundle element overruns datagram", offset)
            messages.extend(decode_packet(data[offset : offset + size]))
            offset += size
        return messages

    address, args = _parse_message(data)
    builder = _BUILDERS.get(address)
    if builder is None:
        log.warning("skipping message with unknown OSC address %r", address)
        return []
    try:
        return [builder(args)]
    except ValueError as exc:
        log.warning("rejecting %s message: %s", address, exc)
        return []


# ---------------------------------------------------------------------------
# receive queue and server


class MessageQueue:
    """Bounded FIFO between the OSC receiver and the engine thread.

    One producer, one consumer.  Overflow drops the oldest messages and
    counts them.
    """

    def __init__(self, capacity: int = QUEUE_CAPACITY):
        self.capacity = capacity
        self._items: deque[GameMessage] = deque()
        self._lock = threading.Lock()
        self.dropped = 0

    def put(self, msg: GameMessage) -> None:
        with self._lock:
            if len(self._items) >= self.capacity:
                self._items.popleft()
                self.dropped += 1
            self._items.append(msg)

    def put_many(self, msgs: list[GameMessage]) -> None:
        for msg in msgs:
            self.put(msg)

    def drain(self) -> list[GameMessage]:
        """Atomically remove and return all queued messages in arrival order."""
        with self._lock:
            items = list(self._items)
            self._items.clear()
        return items

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


class OscServer:
    """UDP receiver decoding datagrams into a MessageQueue on its own thread."""

    def __init__(self, queue: MessageQueue, port: int = DEFAULT_PORT, host: str = "127.0.0.1"):
        self.queue = queue
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, port))
        self._sock.settimeout(0.1)
        self.port = self._sock.getsockname()[1]
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, name="ams-osc", daemon=True)

    def start(self) -> None:
        self._thread.start()

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                data, _addr = self._sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                self.queue.put_many(decode_packet(data))
            except OscDecodeError as exc:
                log.warning("dropping malformed datagram: %s", exc)

    def close(self) -> None:
        self._stop.set()
        self._thread.join(timeout=1.0)
        self._sock.close()
