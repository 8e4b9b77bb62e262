"""Command-line entry point: serve, simulate, evaluate, replay, record."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import signal
import sys

import numpy as np

from . import evalkit
from .clients import HandshakeRejected, run_detector, run_gaze_source
from .evalkit import (
    CalibrationSchedule,
    CameraPose,
    SimulatedObject,
    SyntheticParticipant,
    TimedSample,
    generate_stream,
    run_evaluation,
    scanpath_from_schedule,
    view_preset,
    write_report,
)
from .geometry import TableLayout, default_layout, load_layout
from .hub import HubConfig, parse_log_line, replay_session
from .objects import OrientedBox, load_task_definitions
from .protocol import (
    DEFAULT_RENDERER_PORT,
    DEFAULT_TELEMETRY_PORT,
    GazeSampleMsg,
    decode_line,
)
from .server import HubServer

log = logging.getLogger(__name__)


def _add_common_hub_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layout", help="table layout file (JSON)")
    p.add_argument("--tick-hz", type=int, default=30)
    p.add_argument("--grid-rows", type=int, default=14)
    p.add_argument("--grid-cols", type=int, default=20)
    p.add_argument("--half-life", type=float, default=10.0,
                   help="dwell decay half-life in seconds")
    p.add_argument("--dwell-cap", type=float, default=3.0)
    p.add_argument("--reveal-threshold", type=float, default=0.3)
    p.add_argument("--trail-speed", type=float, default=120.0)
    p.add_argument("--hint-threshold", type=float, default=3.0)
    p.add_argument("--modes", default="heatmap,trails,objects",
                   help="comma-separated subset of heatmap,trails,objects")
    p.add_argument("--task", help="task definition file (object ids + neighbors)")


def _layout_from_args(args) -> TableLayout:
    return load_layout(args.layout) if args.layout else default_layout()


def _hub_config(args) -> HubConfig:
    task_specs = ()
    if getattr(args, "task", None):
        task_specs = tuple(load_task_definitions(args.task))
    return HubConfig(
        layout=_layout_from_args(args),
        tick_hz=args.tick_hz,
        grid_rows=args.grid_rows,
        grid_cols=args.grid_cols,
        dwell_cap_s=args.dwell_cap,
        reveal_threshold_s=args.reveal_threshold,
        half_life_s=args.half_life,
        trail_speed_mm_s=args.trail_speed,
        hint_threshold_s=args.hint_threshold,
        modes=frozenset(m.strip() for m in args.modes.split(",") if m.strip()),
        task_specs=task_specs,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazehub",
        description="Group gaze-sharing hub for projected tabletops",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the hub")
    _add_common_hub_flags(serve)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--telemetry-port", type=int, default=DEFAULT_TELEMETRY_PORT)
    serve.add_argument("--renderer-port", type=int, default=DEFAULT_RENDERER_PORT)
    serve.add_argument("--record", help="append all received telemetry to this log")
    serve.add_argument("--run-for", type=float, default=None,
                       help="exit after N seconds (mainly for testing)")

    sim = sub.add_parser("simulate",
                         help="attach synthetic participants to a hub")
    sim.add_argument("--participants", type=int, default=4)
    sim.add_argument("--duration", type=float, default=10.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--host", default="127.0.0.1")
    sim.add_argument("--port", type=int, default=DEFAULT_TELEMETRY_PORT)
    sim.add_argument("--rate", type=float, default=60.0, help="samples per second")
    sim.add_argument("--noise-px", type=float, default=2.0)
    sim.add_argument("--detector", action="store_true",
                     help="also attach a simulated object detector")
    sim.add_argument("--objects", help="object pose file for the detector (JSON)")
    sim.add_argument("--scanpath",
                     help="scanpath program file for all participants "
                          "(default: random per participant)")
    sim.add_argument("--layout", help="table layout file (JSON)")

    ev = sub.add_parser("evaluate",
                        help="run the 9-point accuracy routine and write a report")
    ev.add_argument("--schedule", default="9pt", choices=["9pt"])
    ev.add_argument("--view", default="horizontal",
                    choices=["horizontal", "vertical", "identity"])
    ev.add_argument("--out", required=True, help="report output directory")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--noise-px", type=float, default=10.0,
                    help="synthetic gaze noise (ignored with --replay)")
    ev.add_argument("--replay", help="evaluate a recorded log instead of synthesizing")
    ev.add_argument("--participant", help="with --replay: only this participant")
    ev.add_argument("--layout", help="table layout file (JSON)")

    rp = sub.add_parser("replay", help="deterministically replay a recorded log")
    rp.add_argument("log", help="session recording file")
    rp.add_argument("--out", help="write broadcast lines here (default: stdout)")
    _add_common_hub_flags(rp)

    rec = sub.add_parser("record", help="listen and tee telemetry to a log file")
    rec.add_argument("--listen-port", type=int, default=DEFAULT_TELEMETRY_PORT)
    rec.add_argument("--host", default="127.0.0.1")
    rec.add_argument("--out", required=True)
    rec.add_argument("--forward", help="host:port of an upstream hub to relay to")
    rec.add_argument("--run-for", type=float, default=None)

    return parser


# -- serve -----------------------------------------------------------------


def cmd_serve(args) -> int:
    config = _hub_config(args)
    server = HubServer(
        config,
        host=args.host,
        telemetry_port=args.telemetry_port,
        renderer_port=args.renderer_port,
        record_path=args.record,
    )

    async def main() -> None:
        await server.start()
        print(
            f"gazehub: telemetry tcp/{server.telemetry_port} "
            f"renderer ws/{server.renderer_port} tick {config.tick_hz} Hz",
            file=sys.stderr,
        )
        stop = asyncio.get_running_loop().create_future()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                asyncio.get_running_loop().add_signal_handler(
                    sig, lambda: stop.done() or stop.set_result(None)
                )
            except NotImplementedError:
                pass
        if args.run_for is not None:
            try:
                await asyncio.wait_for(asyncio.shield(stop), timeout=args.run_for)
            except asyncio.TimeoutError:
                pass
        else:
            await stop
        await server.stop()

    asyncio.run(main())
    return 0


# -- simulate -----------------------------------------------------------------


def _load_objects(path: str | None) -> list[SimulatedObject]:
    if path is None:
        return [
            SimulatedObject(
                f"piece-{i}",
                OrientedBox((150.0 + 180.0 * i, 275.0), (45.0, 30.0), 0.3 * i),
            )
            for i in range(3)
        ]
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return [
        SimulatedObject(
            str(o["id"]),
            OrientedBox(
                (float(o["center_mm"][0]), float(o["center_mm"][1])),
                (float(o["half_extents_mm"][0]), float(o["half_extents_mm"][1])),
                float(o.get("rotation_rad", 0.0)),
            ),
        )
        for o in data["objects"]
    ]


def cmd_simulate(args) -> int:
    layout = _layout_from_args(args)
    rng = np.random.default_rng(args.seed)
    shared_scanpath = (
        evalkit.load_scanpath(args.scanpath) if args.scanpath else None
    )
    participants = []
    for i in range(args.participants):
        scanpath = shared_scanpath or evalkit.random_scanpath(
            layout, args.duration, rng
        )
        participants.append(
            SyntheticParticipant(
                participant_id=f"sim-{i + 1}",
                scanpath=scanpath,
                sample_rate_hz=args.rate,
                noise_sigma_px=args.noise_px,
            )
        )

    async def main() -> int:
        tasks = [
            asyncio.create_task(
                run_gaze_source(
                    args.host,
                    args.port,
                    p,
                    args.duration,
                    layout,
                    seed=args.seed + 1000 + i,
                )
            )
            for i, p in enumerate(participants)
        ]
        if args.detector:
            tasks.append(
                asyncio.create_task(
                    run_detector(
                        args.host,
                        args.port,
                        _load_objects(args.objects),
                        args.duration,
                        seed=args.seed + 99,
                    )
                )
            )
        results = await asyncio.gather(*tasks, return_exceptions=True)
        failures = [r for r in results if isinstance(r, BaseException)]
        for failure in failures:
            print(f"gazehub simulate: {failure}", file=sys.stderr)
        return 1 if failures else 0

    try:
        return asyncio.run(main())
    except (ConnectionRefusedError, HandshakeRejected) as exc:
        print(f"gazehub simulate: {exc}", file=sys.stderr)
        return 1


# -- evaluate ------------------------------------------------------------------


def _samples_from_log(
    path: str, participant: str | None
) -> list[TimedSample]:
    samples: list[TimedSample] = []
    t0: float | None = None
    with open(path, "rb") as f:
        for line in f:
            if not line.strip():
                continue
            recv_t, raw = parse_log_line(line)
            env = decode_line(raw)
            if env.kind != GazeSampleMsg.KIND:
                continue
            msg: GazeSampleMsg = env.payload
            if participant is not None and msg.participant_id != participant:
                continue
            if t0 is None:
                t0 = recv_t
            samples.append(TimedSample(recv_t - t0, msg))
    return samples


def cmd_evaluate(args) -> int:
    layout = _layout_from_args(args)
    sched = CalibrationSchedule.nine_point(layout, view_label=args.view)

    if args.replay:
        samples = _samples_from_log(args.replay, args.participant)
        if not samples:
            print("gazehub evaluate: no gaze samples in log", file=sys.stderr)
            return 1
        note = f"replayed log {args.replay}"
    else:
        if args.view == "identity":
            pose, dropout = CameraPose(), 0.0
        else:
            pose, dropout = view_preset(args.view, layout)
        participant = SyntheticParticipant(
            participant_id="calib",
            scanpath=scanpath_from_schedule(sched, layout),
            pose=pose,
            noise_sigma_px=args.noise_px,
            dropout=dropout,
        )
        samples = generate_stream(
            participant, sched.total_duration_s, layout, seed=args.seed
        )
        note = (
            f"synthetic {args.view} pose, noise {args.noise_px} px, "
            f"seed {args.seed}"
        )

    filtered, report = run_evaluation(samples, sched, layout, eye_to_screen_note=note)
    json_path, text_path = write_report(report, args.out)
    print(report.to_text())
    print(
        f"received {filtered.received}, retained {len(filtered.retained)}, "
        f"onset-discarded {len(filtered.discarded_onset)}, "
        f"quorum-discarded {len(filtered.discarded_quorum)}"
    )
    print(f"wrote {json_path} and {text_path}")
    return 0


# -- replay ---------------------------------------------------------------------


def cmd_replay(args) -> int:
    config = _hub_config(args)
    with open(args.log, "rb") as f:
        lines = f.readlines()
    if not lines:
        print("gazehub replay: empty log", file=sys.stderr)
        return 1
    costs: list[float] = []
    out = open(args.out, "wb") if args.out else sys.stdout.buffer
    try:
        for line in replay_session(
            lines, config, on_tick_cost=lambda n, c: costs.append(c)
        ):
            out.write(line)
    finally:
        if args.out:
            out.close()
    interval = config.tick_interval_s
    print(
        f"replayed {len(costs)} ticks; worst tick cost "
        f"{max(costs) * 1e3:.2f} ms (budget {interval * 1e3:.2f} ms)",
        file=sys.stderr,
    )
    return 0


# -- record -----------------------------------------------------------------------


def cmd_record(args) -> int:
    forward = None
    if args.forward:
        host, _, port = args.forward.rpartition(":")
        forward = (host or "127.0.0.1", int(port))

    async def main() -> int:
        log_file = open(args.out, "ab")
        loop = asyncio.get_running_loop()

        async def handle(reader, writer):
            upstream_reader = upstream_writer = None
            if forward:
                upstream_reader, upstream_writer = await asyncio.open_connection(
                    *forward
                )

            async def pump_back():
                while True:
                    raw = await upstream_reader.readline()
                    if not raw:
                        break
                    writer.write(raw)
                    await writer.drain()

            back_task = (
                asyncio.create_task(pump_back()) if upstream_reader else None
            )
            try:
                while True:
                    raw = await reader.readline()
                    if not raw:
                        break
                    from .hub import format_log_line

                    log_file.write(format_log_line(loop.time(), raw))
                    log_file.flush()
                    if upstream_writer:
                        upstream_writer.write(raw)
                        await upstream_writer.drain()
            finally:
                if back_task:
                    back_task.cancel()
                if upstream_writer:
                    upstream_writer.close()
                writer.close()

        server = await asyncio.start_server(
            handle, args.host, args.listen_port, limit=1 << 20
        )
        port = server.sockets[0].getsockname()[1]
        print(f"gazehub record: listening tcp/{port} -> {args.out}", file=sys.stderr)
        try:
            if args.run_for is not None:
                await asyncio.sleep(args.run_for)
            else:
                await asyncio.Future()
        finally:
            server.close()
            await server.wait_closed()
            log_file.close()
        return 0

    return asyncio.run(main())


COMMANDS = {
    "serve": cmd_serve,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "replay": cmd_replay,
    "record": cmd_record,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"gazehub {args.command}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"gazehub {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
