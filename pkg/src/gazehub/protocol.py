"""Wire protocol: newline-delimited JSON envelopes, version 1.

Client -> hub: hello, gaze, detection, heartbeat.
Hub -> client: grant, reject, broadcast.

The same schema runs over plain TCP (one line per message) and over the
browser-facing WebSocket endpoint (one line per text frame).  Floats are
serialized with Python's shortest round-trip repr, so decode(encode(m))
is exact.  Unknown message kinds are skipped and counted, never fatal;
malformed lines are skipped per line; a bad protocol version kills the
connection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .geometry import MarkerDetection
from .objects import OrientedBox

PROTOCOL_VERSION = 1

ROLE_GAZE_SOURCE = "gaze-source"
ROLE_DETECTOR = "detector"
ROLE_RENDERER = "renderer"
ROLES = (ROLE_GAZE_SOURCE, ROLE_DETECTOR, ROLE_RENDERER)

DEFAULT_TELEMETRY_PORT = 9470
DEFAULT_RENDERER_PORT = 9471


class MalformedLine(ValueError):
    """Undecodable line; skippable, the stream resumes at the next newline."""


class VersionUnsupported(ValueError):
    """Protocol version mismatch; fatal for the connection."""


class DuplicateParticipant(ValueError):
    """A second concurrent hello for an already-active participant id."""


@dataclass(frozen=True)
class Hello:
    KIND = "hello"
    role: str
    participant_id: str | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == ROLE_GAZE_SOURCE and not self.participant_id:
            raise ValueError("gaze sources must declare a participant id")

    def to_payload(self) -> dict:
        return {"role": self.role, "participant_id": self.participant_id}

    @classmethod
    def from_payload(cls, p: dict) -> "Hello":
        return cls(role=p["role"], participant_id=p.get("participant_id"))


@dataclass(frozen=True)
class Grant:
    KIND = "grant"
    session_token: str
    tick_hz: int
    layout_hash: str

    def to_payload(self) -> dict:
        return {
            "session_token": self.session_token,
            "tick_hz": self.tick_hz,
            "layout_hash": self.layout_hash,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "Grant":
        return cls(
            session_token=str(p["session_token"]),
            tick_hz=int(p["tick_hz"]),
            layout_hash=str(p["layout_hash"]),
        )


@dataclass(frozen=True)
class Reject:
    KIND = "reject"
    reason: str
    detail: str = ""

    def to_payload(self) -> dict:
        return {"reason": self.reason, "detail": self.detail}

    @classmethod
    def from_payload(cls, p: dict) -> "Reject":
        return cls(reason=str(p["reason"]), detail=str(p.get("detail", "")))


@dataclass(frozen=True)
class GazeSampleMsg:
    """One gaze point in scene-camera pixels with that frame's marker
    detections.  Markers may be empty; the quorum rule is enforced
    downstream, not by the codec."""

    KIND = "gaze"
    participant_id: str
    gaze_px: tuple[float, float]
    confidence: float
    markers: tuple[MarkerDetection, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")
        if not all(math.isfinite(v) for v in self.gaze_px):
            raise ValueError("gaze point must be finite")

    def to_payload(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "gaze_px": list(self.gaze_px),
            "confidence": self.confidence,
            "markers": [
                {"id": m.marker_id, "corners_px": [list(c) for c in m.corners_px]}
                for m in self.markers
            ],
        }

    @classmethod
    def from_payload(cls, p: dict) -> "GazeSampleMsg":
        markers = tuple(
            MarkerDetection(
                marker_id=int(m["id"]),
                corners_px=tuple((float(x), float(y)) for x, y in m["corners_px"]),
            )
            for m in p.get("markers", [])
        )
        gx, gy = p["gaze_px"]
        return cls(
            participant_id=str(p["participant_id"]),
            gaze_px=(float(gx), float(gy)),
            confidence=float(p["confidence"]),
            markers=markers,
        )


@dataclass(frozen=True)
class DetectionMsg:
    """Oriented-box detection from an external detector.  The hub stamps
    it with receipt time; sender clocks are not trusted."""

    KIND = "detection"
    object_id: str
    obb: OrientedBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")

    def to_payload(self) -> dict:
        return {
            "object_id": self.object_id,
            "obb": {
                "center_mm": list(self.obb.center_mm),
                "half_extents_mm": list(self.obb.half_extents_mm),
                "rotation_rad": self.obb.rotation_rad,
            },
            "confidence": self.confidence,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "DetectionMsg":
        o = p["obb"]
        return cls(
            object_id=str(p["object_id"]),
            obb=OrientedBox(
                center_mm=(float(o["center_mm"][0]), float(o["center_mm"][1])),
                half_extents_mm=(
                    float(o["half_extents_mm"][0]),
                    float(o["half_extents_mm"][1]),
                ),
                rotation_rad=float(o["rotation_rad"]),
            ),
            confidence=float(p["confidence"]),
        )


@dataclass(frozen=True)
class Heartbeat:
    KIND = "heartbeat"

    def to_payload(self) -> dict:
        return {}

    @classmethod
    def from_payload(cls, p: dict) -> "Heartbeat":
        return cls()


@dataclass(frozen=True)
class StateBroadcast:
    """Self-contained world snapshot; a renderer joining mid-session can
    draw from any single broadcast.  Sections for disabled modes are None."""

    KIND = "broadcast"
    tick: int
    server_t_s: float
    participants: tuple[str, ...]
    grid: dict | None = None
    trails: tuple[dict, ...] | None = None
    highlights: tuple[dict, ...] | None = None
    hints: tuple[dict, ...] | None = None

    def to_payload(self) -> dict:
        return {
            "tick": self.tick,
            "server_t_s": self.server_t_s,
            "participants": list(self.participants),
            "grid": self.grid,
            "trails": list(self.trails) if self.trails is not None else None,
            "highlights": (
                list(self.highlights) if self.highlights is not None else None
            ),
            "hints": list(self.hints) if self.hints is not None else None,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "StateBroadcast":
        def tup(key: str) -> tuple | None:
            return tuple(p[key]) if p.get(key) is not None else None

        return cls(
            tick=int(p["tick"]),
            server_t_s=float(p["server_t_s"]),
            participants=tuple(str(x) for x in p.get("participants", [])),
            grid=p.get("grid"),
            trails=tup("trails"),
            highlights=tup("highlights"),
            hints=tup("hints"),
        )


MESSAGE_KINDS = {
    cls.KIND: cls
    for cls in (Hello, Grant, Reject, GazeSampleMsg, DetectionMsg, Heartbeat,
                StateBroadcast)
}


@dataclass(frozen=True)
class Envelope:
    """Versioned frame around one message; seq increases per sender."""

    kind: str
    seq: int
    t_mono_s: float
    payload: Any
    v: int = PROTOCOL_VERSION


def encode(env: Envelope) -> bytes:
    payload = (
        env.payload.to_payload()
        if hasattr(env.payload, "to_payload")
        else env.payload
    )
    line = json.dumps(
        {
            "v": env.v,
            "type": env.kind,
            "seq": env.seq,
            "t_mono_s": env.t_mono_s,
            "payload": payload,
        },
        separators=(",", ":"),
        allow_nan=False,
    )
    return line.encode("utf-8") + b"\n"


def decode_line(line: bytes | str) -> Envelope:
    """Parse one line into an Envelope.

    Unknown kinds decode with their raw dict payload so stream handling
    can skip them.  Raises MalformedLine for anything unparseable and
    VersionUnsupported for a version mismatch.
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedLine(f"undecodable bytes: {exc}") from exc
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"bad json: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedLine("envelope must be a json object")
    try:
        v = int(obj["v"])
        kind = str(obj["type"])
        seq = int(obj["seq"])
        t_mono_s = float(obj["t_mono_s"])
        payload_dict = obj["payload"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedLine(f"bad envelope fields: {exc}") from exc
    if v != PROTOCOL_VERSION:
        raise VersionUnsupported(f"protocol v{v} not supported (hub is v{PROTOCOL_VERSION})")

    cls = MESSAGE_KINDS.get(kind)
    if cls is None:
        return Envelope(kind=kind, seq=seq, t_mono_s=t_mono_s, payload=payload_dict)
    try:
        payload = cls.from_payload(payload_dict)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise MalformedLine(f"bad {kind} payload: {exc}") from exc
    return Envelope(kind=kind, seq=seq, t_mono_s=t_mono_s, payload=payload)


class StreamDecoder:
    """Incremental line framing with skip-and-count error handling.

    Feed arbitrary byte chunks; complete known-kind envelopes come out in
    order.  Malformed lines and unknown kinds increment counters; sequence
    gaps are tallied from the per-sender seq field.  VersionUnsupported
    propagates (connection-fatal).
    """

    def __init__(self) -> None:
        self._buffer = b""
        self.malformed_lines = 0
        self.unknown_kinds = 0
        self.seq_gaps = 0
        self._last_seq: int | None = None

    def feed(self, data: bytes) -> list[Envelope]:
        self._buffer += data
        out: list[Envelope] = []
        while True:
            newline = self._buffer.find(b"\n")
            if newline < 0:
                break
            line = self._buffer[:newline]
            self._buffer = self._buffer[newline + 1 :]
            if not line.strip():
                continue
            try:
                env = decode_line(line)
            except MalformedLine:
                self.malformed_lines += 1
                continue
            if env.kind not in MESSAGE_KINDS:
                self.unknown_kinds += 1
                continue
            if self._last_seq is not None and env.seq > self._last_seq + 1:
                self.seq_gaps += env.seq - self._last_seq - 1
            self._last_seq = env.seq
            out.append(env)
        return out


class EnvelopeWriter:
    """Stamps outgoing messages with a monotone per-sender sequence."""

    def __init__(self, clock: Callable[[], float]):
        self._seq = 0
        self._clock = clock

    def wrap(self, msg: Any, t_mono_s: float | None = None) -> Envelope:
        self._seq += 1
        t = self._clock() if t_mono_s is None else t_mono_s
        return Envelope(kind=msg.KIND, seq=self._seq, t_mono_s=t, payload=msg)


def evaluate_hello(
    hello: Hello,
    active_participants: Iterable[str],
    tick_hz: int,
    layout_hash: str,
    token_factory: Callable[[], str],
) -> Grant:
    """Handshake decision for one decoded hello.

    Version checking already happened at decode time; this enforces the
    duplicate-participant rule for gaze sources.
    """
    if (
        hello.role == ROLE_GAZE_SOURCE
        and hello.participant_id in set(active_participants)
    ):
        raise DuplicateParticipant(
            f"participant {hello.participant_id!r} already connected"
        )
    return Grant(
        session_token=token_factory(),
        tick_hz=tick_hz,
        layout_hash=layout_hash,
    )
