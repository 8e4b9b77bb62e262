"""Session orchestration: per-participant mapping pipelines, world state,
and the fixed-rate tick that turns queued telemetry into broadcasts.

The hub core is deterministic and I/O-free: messages go in with explicit
receipt timestamps, ticks run at explicit times, broadcasts come out.
Exactly one thread may call tick()/submit handlers concurrently with
itself; the network layer funnels everything through one event loop.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from . import attention, objects as objects_mod, trails as trails_mod
from .attention import AttentionGrid, GridGeometry, MappedGazeEvent
from .geometry import (
    AtInfinity,
    DegenerateConfiguration,
    Homography,
    QuorumNotMet,
    TableLayout,
    default_layout,
    estimate_homography,
    map_gaze_to_table,
)
from .objects import ObjectRegistry, RawDetection, TaskObjectSpec
from .protocol import (
    DetectionMsg,
    Envelope,
    GazeSampleMsg,
    Hello,
    StateBroadcast,
    decode_line,
    encode,
)
from .trails import TrailEntity

MIN_TICK_HZ = 20

MODE_HEATMAP = "heatmap"
MODE_TRAILS = "trails"
MODE_OBJECTS = "objects"
ALL_MODES = frozenset({MODE_HEATMAP, MODE_TRAILS, MODE_OBJECTS})


class UnknownParticipant(KeyError):
    """Gaze sample for a participant that never said hello."""


@dataclass(frozen=True)
class HubConfig:
    layout: TableLayout = field(default_factory=default_layout)
    tick_hz: int = 30
    grid_rows: int = attention.DEFAULT_ROWS
    grid_cols: int = attention.DEFAULT_COLS
    dwell_cap_s: float = attention.DEFAULT_DWELL_CAP_S
    reveal_threshold_s: float = attention.DEFAULT_REVEAL_THRESHOLD_S
    half_life_s: float = attention.DEFAULT_HALF_LIFE_S
    max_gap_s: float = attention.DEFAULT_MAX_GAP_S
    trail_speed_mm_s: float = trails_mod.DEFAULT_SPEED_MM_S
    attend_threshold_s: float = objects_mod.DEFAULT_ATTEND_THRESHOLD_S
    hint_threshold_s: float = objects_mod.DEFAULT_HINT_THRESHOLD_S
    stale_homography_s: float = 0.5
    history_points: int = 16
    modes: frozenset[str] = ALL_MODES
    task_specs: tuple[TaskObjectSpec, ...] = ()

    def __post_init__(self) -> None:
        if self.tick_hz < MIN_TICK_HZ:
            raise ValueError(
                f"tick_hz must be >= {MIN_TICK_HZ} for real-time feedback"
            )
        unknown = self.modes - ALL_MODES
        if unknown:
            raise ValueError(f"unknown modes: {sorted(unknown)}")

    @property
    def tick_interval_s(self) -> float:
        return 1.0 / self.tick_hz

    def geometry(self) -> GridGeometry:
        return GridGeometry(
            rows=self.grid_rows,
            cols=self.grid_cols,
            width_mm=self.layout.width_mm,
            height_mm=self.layout.height_mm,
        )


class ParticipantState:
    """Mapping pipeline state for one gaze source."""

    def __init__(self, participant_id: str, hub: "GazeHub", start_time: float):
        self.participant_id = participant_id
        self.connected = True
        self.homography: Homography | None = None
        self.homography_t = float("-inf")
        self.last_event_t: float | None = None
        self.discarded_quorum = 0
        self.stale_mapped = 0
        self.out_of_view = 0
        self.unmappable = 0
        cfg = hub.config
        self.grid = AttentionGrid(
            hub.geometry,
            dwell_cap_s=cfg.dwell_cap_s,
            reveal_threshold_s=cfg.reveal_threshold_s,
            half_life_s=cfg.half_life_s,
            max_gap_s=cfg.max_gap_s,
            start_time=start_time,
        )
        self.trail = TrailEntity(
            participant_id=participant_id,
            pos_mm=(cfg.layout.width_mm / 2.0, cfg.layout.height_mm / 2.0),
            speed_mm_s=cfg.trail_speed_mm_s,
        )


class GazeHub:
    """Deterministic world-state engine behind the network layer."""

    def __init__(self, config: HubConfig | None = None, start_time: float = 0.0):
        self.config = config or HubConfig()
        self.geometry = self.config.geometry()
        self.tick_count = 0
        self.last_tick_time = start_time
        self.participants: dict[str, ParticipantState] = {}
        self.shared_grid = AttentionGrid(
            self.geometry,
            dwell_cap_s=self.config.dwell_cap_s,
            reveal_threshold_s=self.config.reveal_threshold_s,
            half_life_s=self.config.half_life_s,
            max_gap_s=self.config.max_gap_s,
            start_time=start_time,
        )
        self.objects = ObjectRegistry(
            task_specs=list(self.config.task_specs),
            half_life_s=self.config.half_life_s,
            hint_threshold_s=self.config.hint_threshold_s,
            attend_threshold_s=self.config.attend_threshold_s,
            dwell_cap_s=self.config.dwell_cap_s,
            max_gap_s=self.config.max_gap_s,
            start_time=start_time,
        )
        self._gaze_queue: deque[tuple[float, GazeSampleMsg]] = deque()
        self._detection_queue: deque[tuple[float, DetectionMsg]] = deque()
        self.on_mapped: Callable[[MappedGazeEvent], None] | None = None

    # -- participant lifecycle -------------------------------------------

    def register_participant(self, participant_id: str) -> ParticipantState:
        """Create pipeline state, or reconnect a participant whose grids
        survived a disconnect."""
        state = self.participants.get(participant_id)
        if state is None:
            state = ParticipantState(participant_id, self, self.last_tick_time)
            self.participants[participant_id] = state
        else:
            state.connected = True
        return state

    def mark_disconnected(self, participant_id: str) -> None:
        state = self.participants.get(participant_id)
        if state is not None:
            state.connected = False

    def active_participants(self) -> list[str]:
        return sorted(
            pid for pid, st in self.participants.items() if st.connected
        )

    # -- ingestion ---------------------------------------------------------

    def submit_gaze(self, msg: GazeSampleMsg, recv_t: float) -> None:
        if msg.participant_id not in self.participants:
            raise UnknownParticipant(msg.participant_id)
        self._gaze_queue.append((recv_t, msg))

    def submit_detection(self, msg: DetectionMsg, recv_t: float) -> None:
        self._detection_queue.append((recv_t, msg))

    # -- mapping pipeline --------------------------------------------------

    def handle_gaze(self, msg: GazeSampleMsg, recv_t: float) -> MappedGazeEvent | None:
        """Re-estimate the homography from this sample's markers and map
        the gaze point into the world.

        Below quorum the previous homography bridges gaps shorter than the
        staleness window; otherwise the sample is discarded.  Returns the
        applied in-view event, or None for discarded/out-of-view samples.
        """
        state = self.participants.get(msg.participant_id)
        if state is None:
            raise UnknownParticipant(msg.participant_id)

        distinct = len({m.marker_id for m in msg.markers})
        homography = None
        if distinct >= 3:
            try:
                homography, _ = estimate_homography(msg.markers, self.config.layout)
                state.homography = homography
                state.homography_t = recv_t
            except (QuorumNotMet, DegenerateConfiguration):
                homography = None
        if homography is None:
            if (
                state.homography is not None
                and recv_t - state.homography_t < self.config.stale_homography_s
            ):
                homography = state.homography
                state.stale_mapped += 1
            else:
                state.discarded_quorum += 1
                return None

        try:
            mapped = map_gaze_to_table(homography, msg.gaze_px, self.config.layout)
        except AtInfinity:
            state.unmappable += 1
            return None
        if mapped.out_of_view:
            state.out_of_view += 1
            return None

        if state.last_event_t is None:
            dt = 0.0
        else:
            dt = min(max(recv_t - state.last_event_t, 0.0), self.config.max_gap_s)
        state.last_event_t = recv_t
        event = MappedGazeEvent(
            participant_id=msg.participant_id,
            t=recv_t,
            p_mm=(mapped.x_mm, mapped.y_mm),
            dt_s=dt,
        )
        self._apply_mapped(event, state)
        if self.on_mapped is not None:
            self.on_mapped(event)
        return event

    def _apply_mapped(self, event: MappedGazeEvent, state: ParticipantState) -> None:
        self.shared_grid.ingest(event)
        state.grid.ingest(event)
        self.objects.apply_gaze(event)

    # -- tick --------------------------------------------------------------

    def tick(self, now: float) -> StateBroadcast:
        """Advance the world one step and emit a self-contained snapshot.

        Fixed order: detections, decay, gaze events (oldest first), trail
        motion, highlights and hints.  No gaze event is ever applied ahead
        of this tick's decay.
        """
        if now < self.last_tick_time:
            raise ValueError(f"tick time went backwards: {now}")

        while self._detection_queue:
            recv_t, det_msg = self._detection_queue.popleft()
            self.objects.ingest_detection(
                RawDetection(
                    object_id=det_msg.object_id,
                    t=recv_t,
                    obb=det_msg.obb,
                    confidence=det_msg.confidence,
                )
            )

        self.shared_grid.decay(now)
        for state in self.participants.values():
            state.grid.decay(now)
        self.objects.decay(now)

        while self._gaze_queue:
            recv_t, gaze_msg = self._gaze_queue.popleft()
            self.handle_gaze(gaze_msg, recv_t)

        dt = self.config.tick_interval_s
        for state in self.participants.values():
            state.trail.retarget(state.grid)
            state.trail.advance(dt, self.geometry)

        self.objects.update_hints()

        self.tick_count += 1
        self.last_tick_time = now
        return self._make_broadcast(now)

    def _make_broadcast(self, now: float) -> StateBroadcast:
        modes = self.config.modes
        grid = self.shared_grid.snapshot() if MODE_HEATMAP in modes else None
        trail_snaps = None
        if MODE_TRAILS in modes:
            trail_snaps = tuple(
                st.trail.snapshot(self.config.history_points)
                for pid, st in sorted(self.participants.items())
                if st.connected
            )
        highlights = None
        hints = None
        if MODE_OBJECTS in modes:
            highlights = tuple(h.snapshot() for h in self.objects.highlights())
            hints = tuple(self.objects.hint_snapshot())
        return StateBroadcast(
            tick=self.tick_count,
            server_t_s=now,
            participants=tuple(self.active_participants()),
            grid=grid,
            trails=trail_snaps,
            highlights=highlights,
            hints=hints,
        )


# -- recording / replay ------------------------------------------------------


def format_log_line(recv_t: float, raw_line: bytes) -> bytes:
    """Recording format: receipt time prepended to the raw message line."""
    return repr(recv_t).encode("ascii") + b" " + raw_line.rstrip(b"\n") + b"\n"


def parse_log_line(line: bytes) -> tuple[float, bytes]:
    stamp, _, raw = line.rstrip(b"\n").partition(b" ")
    return float(stamp), raw


def replay_session(
    log_lines: Iterable[bytes],
    config: HubConfig | None = None,
    on_tick_cost: Callable[[int, float], None] | None = None,
) -> Iterator[bytes]:
    """Feed a recorded message log through a fresh hub, deterministically.

    Ticks run at the configured rate starting from the first receipt
    timestamp; each message lands in the first tick at or after its
    receipt time.  Returns an iterator of encoded broadcast lines.

    Log parsing and hub construction happen eagerly here, so iteration
    cost is per-tick work only; on_tick_cost, when given, receives
    (tick_number, processing_seconds) per tick for liveness measurement.
    """
    cfg = config or HubConfig()
    entries = [parse_log_line(line) for line in log_lines if line.strip()]
    if not entries:
        return iter(())
    hub = GazeHub(cfg, start_time=entries[0][0])
    return _replay_ticks(hub, entries, cfg, on_tick_cost)


def _replay_ticks(
    hub: GazeHub,
    entries: list[tuple[float, bytes]],
    cfg: HubConfig,
    on_tick_cost: Callable[[int, float], None] | None,
) -> Iterator[bytes]:
    import time as _time

    t0 = entries[0][0]
    interval = cfg.tick_interval_s
    idx = 0
    tick_no = 0
    last_t = entries[-1][0]

    while True:
        tick_no += 1
        tick_time = t0 + tick_no * interval
        started = _time.perf_counter()
        while idx < len(entries) and entries[idx][0] <= tick_time:
            recv_t, raw = entries[idx]
            idx += 1
            env = decode_line(raw)
            if env.kind == Hello.KIND:
                hello: Hello = env.payload
                if hello.role == "gaze-source" and hello.participant_id:
                    hub.register_participant(hello.participant_id)
            elif env.kind == GazeSampleMsg.KIND:
                hub.submit_gaze(env.payload, recv_t)
            elif env.kind == DetectionMsg.KIND:
                hub.submit_detection(env.payload, recv_t)
        broadcast = hub.tick(tick_time)
        cost = _time.perf_counter() - started
        if on_tick_cost is not None:
            on_tick_cost(tick_no, cost)
        yield encode(
            Envelope(
                kind=StateBroadcast.KIND,
                seq=broadcast.tick,
                t_mono_s=tick_time,
                payload=broadcast,
            )
        )
        if idx >= len(entries) and tick_time >= last_t:
            break
