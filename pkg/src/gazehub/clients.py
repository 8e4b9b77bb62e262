"""Async TCP clients: synthetic gaze sources and the simulated detector.

These pace pre-generated message streams onto a live hub in real time;
all randomness happens up front in evalkit, so a seed fixes the payloads.
"""

from __future__ import annotations

import asyncio
import logging

from .evalkit import (
    SimulatedObject,
    SyntheticParticipant,
    generate_detections,
    generate_stream,
)
from .geometry import TableLayout
from .protocol import (
    Envelope,
    EnvelopeWriter,
    Grant,
    Hello,
    Reject,
    decode_line,
    encode,
)

log = logging.getLogger(__name__)


class HandshakeRejected(RuntimeError):
    def __init__(self, reject: Reject):
        super().__init__(f"{reject.reason}: {reject.detail}")
        self.reject = reject


async def open_session(
    host: str, port: int, hello: Hello
) -> tuple[asyncio.StreamReader, asyncio.StreamWriter, Grant]:
    reader, writer = await asyncio.open_connection(host, port)
    wr = EnvelopeWriter(clock=asyncio.get_running_loop().time)
    writer.write(encode(wr.wrap(hello)))
    await writer.drain()
    response = decode_line(await reader.readline())
    if response.kind == Reject.KIND:
        writer.close()
        raise HandshakeRejected(response.payload)
    if response.kind != Grant.KIND:
        writer.close()
        raise RuntimeError(f"unexpected handshake response {response.kind!r}")
    return reader, writer, response.payload


async def _pace(writer: asyncio.StreamWriter, lines: list[tuple[float, bytes]]) -> None:
    """Send (t_offset, line) pairs on schedule relative to now."""
    loop = asyncio.get_running_loop()
    start = loop.time()
    for t, line in lines:
        delay = start + t - loop.time()
        if delay > 0:
            await asyncio.sleep(delay)
        writer.write(line)
        await writer.drain()


async def run_gaze_source(
    host: str,
    port: int,
    participant: SyntheticParticipant,
    duration_s: float,
    layout: TableLayout,
    seed: int = 0,
) -> None:
    samples = generate_stream(participant, duration_s, layout, seed=seed)
    reader, writer, _ = await open_session(
        host, port, Hello("gaze-source", participant.participant_id)
    )
    try:
        seq = 0
        lines = []
        for t, msg in samples:
            seq += 1
            lines.append((t, encode(Envelope(msg.KIND, seq, t, msg))))
        await _pace(writer, lines)
    finally:
        writer.close()


async def run_detector(
    host: str,
    port: int,
    objects: list[SimulatedObject],
    duration_s: float,
    rate_hz: float = 20.0,
    seed: int = 0,
) -> None:
    detections = generate_detections(objects, duration_s, rate_hz=rate_hz, seed=seed)
    reader, writer, _ = await open_session(host, port, Hello("detector"))
    try:
        lines = []
        for seq, (t, msg) in enumerate(detections, start=1):
            lines.append((t, encode(Envelope(msg.KIND, seq, t, msg))))
        await _pace(writer, lines)
    finally:
        writer.close()


async def collect_broadcasts(
    host: str, port: int, duration_s: float
) -> list[Envelope]:
    """Attach as a TCP renderer and gather broadcasts for a while."""
    reader, writer, _ = await open_session(host, port, Hello("renderer"))
    out: list[Envelope] = []
    loop = asyncio.get_running_loop()
    deadline = loop.time() + duration_s
    try:
        while True:
            remaining = deadline - loop.time()
            if remaining <= 0:
                break
            try:
                raw = await asyncio.wait_for(reader.readline(), timeout=remaining)
            except asyncio.TimeoutError:
                break
            if not raw:
                break
            out.append(decode_line(raw))
    finally:
        writer.close()
    return out
