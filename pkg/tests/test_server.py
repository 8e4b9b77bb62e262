import asyncio
import json

import pytest
import websockets

from gazehub.clients import (
    HandshakeRejected,
    collect_broadcasts,
    open_session,
    run_detector,
    run_gaze_source,
)
from gazehub.evalkit import (
    Fixate,
    SimulatedObject,
    SyntheticParticipant,
)
from gazehub.geometry import default_layout
from gazehub.hub import HubConfig, parse_log_line
from gazehub.objects import OrientedBox
from gazehub.protocol import (
    Envelope,
    EnvelopeWriter,
    GazeSampleMsg,
    Grant,
    Heartbeat,
    Hello,
    Reject,
    StateBroadcast,
    decode_line,
    encode,
)
from gazehub.server import HubServer

LAYOUT = default_layout()


def run(coro):
    return asyncio.run(asyncio.wait_for(coro, timeout=30))


async def started_server(**kwargs) -> HubServer:
    server = HubServer(
        kwargs.pop("config", HubConfig(layout=LAYOUT)),
        telemetry_port=0,
        renderer_port=0,
        **kwargs,
    )
    await server.start()
    return server


def fixating_participant(pid="p1", target=(385.0, 275.0)):
    return SyntheticParticipant(
        participant_id=pid, scanpath=(Fixate(target, 60.0),)
    )


class TestHandshake:
    def test_tcp_grant_carries_tick_rate_and_layout_hash(self):
        async def body():
            server = await started_server()
            try:
                reader, writer, grant = await open_session(
                    "127.0.0.1", server.telemetry_port, Hello("gaze-source", "p1")
                )
                assert isinstance(grant, Grant)
                assert grant.tick_hz == 30
                assert grant.layout_hash == LAYOUT.layout_hash()
                assert grant.session_token
                writer.close()
            finally:
                await server.stop()

        run(body())

    def test_duplicate_participant_rejected(self):
        async def body():
            server = await started_server()
            try:
                _, writer, _ = await open_session(
                    "127.0.0.1", server.telemetry_port, Hello("gaze-source", "p1")
                )
                with pytest.raises(HandshakeRejected) as exc_info:
                    await open_session(
                        "127.0.0.1", server.telemetry_port, Hello("gaze-source", "p1")
                    )
                assert exc_info.value.reject.reason == "duplicate_participant"
                writer.close()
            finally:
                await server.stop()

        run(body())

    def test_version_mismatch_rejected(self):
        async def body():
            server = await started_server()
            try:
                reader, writer = await asyncio.open_connection(
                    "127.0.0.1", server.telemetry_port
                )
                bad = json.dumps(
                    {
                        "v": 2,
                        "type": "hello",
                        "seq": 1,
                        "t_mono_s": 0.0,
                        "payload": {"role": "renderer"},
                    }
                ).encode() + b"\n"
                writer.write(bad)
                await writer.drain()
                response = decode_line(await reader.readline())
                assert isinstance(response.payload, Reject)
                assert response.payload.reason == "version_unsupported"
                writer.close()
            finally:
                await server.stop()

        run(body())

    def test_disconnect_frees_participant_id(self):
        async def body():
            server = await started_server()
            try:
                _, writer, _ = await open_session(
                    "127.0.0.1", server.telemetry_port, Hello("gaze-source", "p1")
                )
                writer.close()
                await writer.wait_closed()
                await asyncio.sleep(0.1)
                _, writer2, grant = await open_session(
                    "127.0.0.1", server.telemetry_port, Hello("gaze-source", "p1")
                )
                assert isinstance(grant, Grant)
                writer2.close()
            finally:
                await server.stop()

        run(body())


class TestEndToEnd:
    def test_gaze_reaches_renderer_broadcast_over_tcp(self):
        async def body():
            server = await started_server()
            try:
                source = asyncio.create_task(
                    run_gaze_source(
                        "127.0.0.1",
                        server.telemetry_port,
                        fixating_participant(),
                        1.2,
                        LAYOUT,
                    )
                )
                broadcasts = await collect_broadcasts(
                    "127.0.0.1", server.telemetry_port, 1.0
                )
                await source
                assert broadcasts
                last = broadcasts[-1].payload
                assert isinstance(last, StateBroadcast)
                assert last.participants == ("p1",)
                assert max(last.grid["intensity"]) > 0
                assert len(last.trails) == 1
            finally:
                await server.stop()

        run(body())

    def test_websocket_endpoint_speaks_same_schema(self):
        async def body():
            server = await started_server()
            try:
                source = asyncio.create_task(
                    run_gaze_source(
                        "127.0.0.1",
                        server.telemetry_port,
                        fixating_participant(),
                        1.0,
                        LAYOUT,
                    )
                )
                uri = f"ws://127.0.0.1:{server.renderer_port}"
                async with websockets.connect(uri) as ws:
                    writer = EnvelopeWriter(
                        clock=asyncio.get_running_loop().time
                    )
                    await ws.send(encode(writer.wrap(Hello("renderer"))).decode())
                    grant = decode_line(await ws.recv())
                    assert isinstance(grant.payload, Grant)
                    payload = None
                    for _ in range(20):
                        env = decode_line(await ws.recv())
                        assert env.kind == StateBroadcast.KIND
                        payload = env.payload
                        if max(payload.grid["intensity"]) > 0:
                            break
                    assert payload.participants == ("p1",)
                await source
            finally:
                await server.stop()

        run(body())

    def test_gaze_source_over_websocket(self):
        async def body():
            server = await started_server()
            try:
                uri = f"ws://127.0.0.1:{server.renderer_port}"
                async with websockets.connect(uri) as ws:
                    writer = EnvelopeWriter(clock=asyncio.get_running_loop().time)
                    await ws.send(
                        encode(writer.wrap(Hello("gaze-source", "web-1"))).decode()
                    )
                    grant = decode_line(await ws.recv())
                    assert isinstance(grant.payload, Grant)
                    # Markerless sample: discarded by quorum downstream,
                    # but the participant must still appear in broadcasts.
                    msg = GazeSampleMsg("web-1", (385.0, 275.0), 1.0, ())
                    await ws.send(encode(writer.wrap(msg)).decode())
                    await asyncio.sleep(0.2)
                broadcasts = await collect_broadcasts(
                    "127.0.0.1", server.telemetry_port, 0.3
                )
                assert broadcasts
            finally:
                await server.stop()

        run(body())

    def test_detector_feeds_highlights(self):
        async def body():
            server = await started_server()
            try:
                target = (150.0, 275.0)
                objects = [
                    SimulatedObject(
                        "piece-1", OrientedBox(target, (45.0, 30.0), 0.0)
                    )
                ]
                det = asyncio.create_task(
                    run_detector(
                        "127.0.0.1", server.telemetry_port, objects, 2.0, seed=3
                    )
                )
                source = asyncio.create_task(
                    run_gaze_source(
                        "127.0.0.1",
                        server.telemetry_port,
                        fixating_participant(target=target),
                        2.0,
                        LAYOUT,
                    )
                )
                await asyncio.sleep(1.5)
                broadcasts = await collect_broadcasts(
                    "127.0.0.1", server.telemetry_port, 0.4
                )
                await asyncio.gather(det, source)
                highlighted = [
                    b
                    for b in broadcasts
                    if b.payload.highlights
                ]
                assert highlighted
                state = highlighted[-1].payload.highlights[0]
                assert state["object_id"] == "piece-1"
                assert state["arcs"][0]["participant_id"] == "p1"
                assert 0 < state["arcs"][0]["fraction"] <= 1.0
            finally:
                await server.stop()

        run(body())

    def test_seq_gaps_counted_per_connection(self):
        async def body():
            server = await started_server()
            try:
                reader, writer, _ = await open_session(
                    "127.0.0.1", server.telemetry_port, Hello("gaze-source", "p1")
                )
                for seq in (2, 3, 7, 10):
                    writer.write(encode(Envelope("heartbeat", seq, 0.0, Heartbeat())))
                await writer.drain()
                await asyncio.sleep(0.2)
                # hello was seq 1; gaps: 3->7 (3 missing), 7->10 (2 missing).
                assert server.conn_stats[0].seq_gaps == 5
                writer.close()
            finally:
                await server.stop()

        run(body())

    def test_recording_written_and_replayable(self, tmp_path):
        record_path = tmp_path / "session.log"

        async def body():
            server = await started_server(record_path=str(record_path))
            try:
                await run_gaze_source(
                    "127.0.0.1",
                    server.telemetry_port,
                    fixating_participant(),
                    0.6,
                    LAYOUT,
                )
                await asyncio.sleep(0.1)
            finally:
                await server.stop()

        run(body())
        lines = record_path.read_bytes().splitlines(keepends=True)
        assert len(lines) > 10
        kinds = set()
        for line in lines:
            recv_t, raw = parse_log_line(line)
            kinds.add(decode_line(raw).kind)
        assert kinds == {"hello", "gaze"}

        from gazehub.hub import replay_session

        out = list(replay_session(lines, HubConfig(layout=LAYOUT)))
        assert out
        final = decode_line(out[-1])
        assert max(final.payload.grid["intensity"]) > 0
