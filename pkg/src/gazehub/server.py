"""Network front end: TCP telemetry endpoint, WebSocket endpoint for
browsers, fixed-rate tick loop, and optional session recording.

Everything runs on one asyncio event loop, so the hub core sees a single
writer.  Ingestion handlers only queue messages; the tick loop is the one
place world state changes.  Broadcast fan-out never blocks the tick.
"""

from __future__ import annotations

import asyncio
import logging
import uuid
from dataclasses import dataclass

import websockets

from .hub import GazeHub, HubConfig, format_log_line
from .protocol import (
    DuplicateParticipant,
    Envelope,
    EnvelopeWriter,
    DetectionMsg,
    GazeSampleMsg,
    Heartbeat,
    Hello,
    MalformedLine,
    Reject,
    StateBroadcast,
    VersionUnsupported,
    decode_line,
    encode,
    evaluate_hello,
    DEFAULT_RENDERER_PORT,
    DEFAULT_TELEMETRY_PORT,
    ROLE_GAZE_SOURCE,
    ROLE_RENDERER,
)

log = logging.getLogger(__name__)

READ_LIMIT = 1 << 20


@dataclass
class TickStats:
    ticks: int = 0
    worst_lag_s: float = 0.0
    missed_deadlines: int = 0


@dataclass
class ConnStats:
    """Per-connection ingest accounting (gaps counted, never reordered)."""

    malformed_lines: int = 0
    seq_gaps: int = 0
    last_seq: int | None = None

    def track(self, seq: int) -> None:
        if self.last_seq is not None and seq > self.last_seq + 1:
            self.seq_gaps += seq - self.last_seq - 1
        self.last_seq = seq


class HubServer:
    """Binds the telemetry and renderer endpoints around one GazeHub."""

    def __init__(
        self,
        config: HubConfig | None = None,
        host: str = "127.0.0.1",
        telemetry_port: int = DEFAULT_TELEMETRY_PORT,
        renderer_port: int = DEFAULT_RENDERER_PORT,
        record_path: str | None = None,
    ):
        self.config = config or HubConfig()
        self.host = host
        self.telemetry_port = telemetry_port
        self.renderer_port = renderer_port
        self.record_path = record_path
        self.hub: GazeHub | None = None
        self.stats = TickStats()
        self.conn_stats: list[ConnStats] = []
        self._tcp_renderers: set[asyncio.StreamWriter] = set()
        self._ws_renderers: set = set()
        self._record_file = None
        self._tcp_server: asyncio.Server | None = None
        self._ws_server = None
        self._tick_task: asyncio.Task | None = None
        self._started = asyncio.Event()

    # -- lifecycle ---------------------------------------------------------

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        self.hub = GazeHub(self.config, start_time=loop.time())
        if self.record_path:
            self._record_file = open(self.record_path, "ab")
        self._tcp_server = await asyncio.start_server(
            self._handle_tcp, self.host, self.telemetry_port, limit=READ_LIMIT
        )
        self._ws_server = await websockets.serve(
            self._handle_ws, self.host, self.renderer_port, max_size=READ_LIMIT
        )
        self.telemetry_port = self._tcp_server.sockets[0].getsockname()[1]
        for sock in self._ws_server.sockets:
            self.renderer_port = sock.getsockname()[1]
            break
        self._tick_task = asyncio.create_task(self._tick_loop())
        self._started.set()
        log.info(
            "hub listening: telemetry tcp/%d, renderer ws/%d, tick %d Hz",
            self.telemetry_port,
            self.renderer_port,
            self.config.tick_hz,
        )

    async def stop(self) -> None:
        if self._tick_task:
            self._tick_task.cancel()
            try:
                await self._tick_task
            except asyncio.CancelledError:
                pass
        if self._tcp_server:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._ws_server:
            self._ws_server.close()
            await self._ws_server.wait_closed()
        if self._record_file:
            self._record_file.close()
            self._record_file = None

    async def serve_forever(self) -> None:
        await self.start()
        try:
            await asyncio.Future()
        finally:
            await self.stop()

    # -- tick loop -----------------------------------------------------------

    async def _tick_loop(self) -> None:
        loop = asyncio.get_running_loop()
        interval = self.config.tick_interval_s
        deadline = loop.time() + interval
        while True:
            delay = deadline - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            now = loop.time()
            lag = now - deadline
            self.stats.ticks += 1
            self.stats.worst_lag_s = max(self.stats.worst_lag_s, lag)
            if lag > 0.1 * interval:
                self.stats.missed_deadlines += 1
            broadcast = self.hub.tick(now)
            line = encode(
                Envelope(
                    kind=StateBroadcast.KIND,
                    seq=broadcast.tick,
                    t_mono_s=now,
                    payload=broadcast,
                )
            )
            self._fan_out(line)
            deadline += interval

    def _fan_out(self, line: bytes) -> None:
        for writer in list(self._tcp_renderers):
            if writer.is_closing():
                self._tcp_renderers.discard(writer)
                continue
            writer.write(line)
        for ws in list(self._ws_renderers):
            asyncio.create_task(self._ws_send(ws, line))

    async def _ws_send(self, ws, line: bytes) -> None:
        try:
            await ws.send(line.decode("utf-8"))
        except Exception:
            self._ws_renderers.discard(ws)

    # -- shared dispatch -------------------------------------------------------

    def _record(self, recv_t: float, raw: bytes) -> None:
        if self._record_file:
            self._record_file.write(format_log_line(recv_t, raw))

    def _handshake(self, env: Envelope) -> tuple[Hello, Envelope]:
        if env.kind != Hello.KIND:
            raise MalformedLine(f"expected hello, got {env.kind!r}")
        hello: Hello = env.payload
        grant = evaluate_hello(
            hello,
            self.hub.active_participants(),
            tick_hz=self.config.tick_hz,
            layout_hash=self.config.layout.layout_hash(),
            token_factory=lambda: uuid.uuid4().hex,
        )
        if hello.role == ROLE_GAZE_SOURCE:
            self.hub.register_participant(hello.participant_id)
        writer = EnvelopeWriter(clock=asyncio.get_running_loop().time)
        return hello, writer.wrap(grant)

    def _dispatch(self, env: Envelope, hello: Hello, recv_t: float) -> None:
        if env.kind == GazeSampleMsg.KIND and hello.role == ROLE_GAZE_SOURCE:
            msg: GazeSampleMsg = env.payload
            if msg.participant_id == hello.participant_id:
                self.hub.submit_gaze(msg, recv_t)
        elif env.kind == DetectionMsg.KIND and hello.role == "detector":
            self.hub.submit_detection(env.payload, recv_t)
        elif env.kind == Heartbeat.KIND:
            pass
        # Anything else from this role is ignored (forward compatibility).

    @staticmethod
    def _reject_line(reason: str, detail: str) -> bytes:
        return encode(
            Envelope(
                kind=Reject.KIND,
                seq=1,
                t_mono_s=0.0,
                payload=Reject(reason=reason, detail=detail),
            )
        )

    # -- TCP ---------------------------------------------------------------------

    async def _handle_tcp(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        loop = asyncio.get_running_loop()
        hello: Hello | None = None
        stats = ConnStats()
        self.conn_stats.append(stats)
        try:
            while hello is None:
                raw = await reader.readline()
                if not raw:
                    return
                recv_t = loop.time()
                self._record(recv_t, raw)
                try:
                    env = decode_line(raw)
                except MalformedLine:
                    stats.malformed_lines += 1
                    continue
                except VersionUnsupported as exc:
                    writer.write(self._reject_line("version_unsupported", str(exc)))
                    await writer.drain()
                    return
                stats.track(env.seq)
                try:
                    hello, grant_env = self._handshake(env)
                except MalformedLine:
                    continue
                except DuplicateParticipant as exc:
                    writer.write(self._reject_line("duplicate_participant", str(exc)))
                    await writer.drain()
                    return
            writer.write(encode(grant_env))
            await writer.drain()

            if hello.role == ROLE_RENDERER:
                self._tcp_renderers.add(writer)
                await reader.read()  # hold until the peer closes
                return

            while True:
                raw = await reader.readline()
                if not raw:
                    break
                recv_t = loop.time()
                self._record(recv_t, raw)
                try:
                    env = decode_line(raw)
                except MalformedLine:
                    stats.malformed_lines += 1
                    continue
                except VersionUnsupported:
                    break
                stats.track(env.seq)
                self._dispatch(env, hello, recv_t)
        except (ConnectionResetError, asyncio.IncompleteReadError):
            pass
        finally:
            if hello is not None and hello.role == ROLE_GAZE_SOURCE:
                self.hub.mark_disconnected(hello.participant_id)
            self._tcp_renderers.discard(writer)
            writer.close()

    # -- WebSocket ------------------------------------------------------------------

    async def _handle_ws(self, ws) -> None:
        loop = asyncio.get_running_loop()
        hello: Hello | None = None
        stats = ConnStats()
        self.conn_stats.append(stats)
        try:
            async for message in ws:
                raw = message if isinstance(message, bytes) else message.encode()
                recv_t = loop.time()
                self._record(recv_t, raw)
                try:
                    env = decode_line(raw)
                except MalformedLine:
                    stats.malformed_lines += 1
                    continue
                except VersionUnsupported as exc:
                    await ws.send(
                        self._reject_line("version_unsupported", str(exc)).decode()
                    )
                    break
                stats.track(env.seq)
                if hello is None:
                    try:
                        hello, grant_env = self._handshake(env)
                    except MalformedLine:
                        continue
                    except DuplicateParticipant as exc:
                        await ws.send(
                            self._reject_line(
                                "duplicate_participant", str(exc)
                            ).decode()
                        )
                        break
                    await ws.send(encode(grant_env).decode())
                    if hello.role == ROLE_RENDERER:
                        self._ws_renderers.add(ws)
                    continue
                self._dispatch(env, hello, recv_t)
        except websockets.ConnectionClosed:
            pass
        finally:
            if hello is not None and hello.role == ROLE_GAZE_SOURCE:
                self.hub.mark_disconnected(hello.participant_id)
            self._ws_renderers.discard(ws)
