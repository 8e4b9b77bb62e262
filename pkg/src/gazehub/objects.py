"""Physical-object tracking: detection smoothing, gaze-on-object dwell,
circular highlights with per-viewer arcs, and neighbor hints.

Detections arrive over the protocol from an external detector (or the
simulator); this module only smooths and interprets them.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

from .attention import MappedGazeEvent

DETECTION_BUFFER_SIZE = 20
DEFAULT_HIGHLIGHT_MARGIN_MM = 8.0
DEFAULT_ATTEND_THRESHOLD_S = 0.3
DEFAULT_DROP_THRESHOLD_S = 0.05
DEFAULT_HINT_THRESHOLD_S = 3.0


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle with arbitrary rotation about its center, in table mm."""

    center_mm: tuple[float, float]
    half_extents_mm: tuple[float, float]
    rotation_rad: float = 0.0

    def __post_init__(self) -> None:
        if self.half_extents_mm[0] <= 0 or self.half_extents_mm[1] <= 0:
            raise ValueError("half extents must be positive")

    def contains(self, p_mm: tuple[float, float]) -> bool:
        """Point-in-box test in the box frame; the boundary counts as a hit."""
        dx = p_mm[0] - self.center_mm[0]
        dy = p_mm[1] - self.center_mm[1]
        c = math.cos(-self.rotation_rad)
        s = math.sin(-self.rotation_rad)
        local_x = c * dx - s * dy
        local_y = s * dx + c * dy
        return (
            abs(local_x) <= self.half_extents_mm[0]
            and abs(local_y) <= self.half_extents_mm[1]
        )

    def circumscribed_radius_mm(self) -> float:
        return math.hypot(*self.half_extents_mm)


@dataclass(frozen=True)
class RawDetection:
    object_id: str
    t: float
    obb: OrientedBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")


def gaze_hit_test(obb: OrientedBox, p_mm: tuple[float, float]) -> bool:
    return obb.contains(p_mm)


@dataclass
class HighlightState:
    """Circle around an attended object plus one arc per qualifying viewer;
    arc fraction is dwell/cap clamped to (0, 1]."""

    object_id: str
    center_mm: tuple[float, float]
    radius_mm: float
    arcs: list[tuple[str, float]]

    def snapshot(self) -> dict:
        return {
            "object_id": self.object_id,
            "center_mm": [self.center_mm[0], self.center_mm[1]],
            "radius_mm": self.radius_mm,
            "arcs": [
                {"participant_id": pid, "fraction": frac} for pid, frac in self.arcs
            ],
        }


class TrackedObject:
    """One physical object with a 20-slot detection ring.

    The smoothed pose is always the maximum-confidence buffered detection
    (most recent on ties), trading reaction time when the object moves for
    pose stability.
    """

    def __init__(self, object_id: str, hint_neighbors: list[str] | None = None,
                 label: str | None = None):
        self.object_id = object_id
        self.label = label if label is not None else object_id
        self.buffer: deque[RawDetection] = deque(maxlen=DETECTION_BUFFER_SIZE)
        self.smoothed_obb: OrientedBox | None = None
        self.viewers: dict[str, float] = {}
        self.hint_neighbors: list[str] = list(hint_neighbors or [])
        self.hint_active = False
        self._credited_since_decay: set[str] = set()

    def ingest_detection(self, d: RawDetection) -> None:
        if d.object_id != self.object_id:
            raise ValueError(
                f"detection for {d.object_id!r} fed to object {self.object_id!r}"
            )
        self.buffer.append(d)
        best = None
        for det in self.buffer:
            if best is None or det.confidence >= best.confidence:
                best = det
        self.smoothed_obb = best.obb if best else None

    def last_detection_t(self) -> float:
        return self.buffer[-1].t if self.buffer else float("-inf")

    def decay_viewers(self, now: float, last_update: float, half_life_s: float,
                      drop_threshold_s: float = DEFAULT_DROP_THRESHOLD_S) -> None:
        """Decay all viewer dwells; sub-threshold viewers are pruned, but
        only stale ones, so a fresh viewer can still climb from zero."""
        elapsed = now - last_update
        if elapsed < 0:
            raise ValueError("viewer decay time went backwards")
        factor = 0.5 ** (elapsed / half_life_s) if elapsed > 0 else 1.0
        for pid in list(self.viewers):
            dwell = self.viewers[pid] * factor
            if dwell < drop_threshold_s and pid not in self._credited_since_decay:
                del self.viewers[pid]
            else:
                self.viewers[pid] = dwell
        self._credited_since_decay.clear()

    def update_hint(self, hint_threshold_s: float = DEFAULT_HINT_THRESHOLD_S) -> None:
        """Hysteresis: on at threshold, off only once every dwell falls
        below half of it."""
        dwells = self.viewers.values()
        if any(d >= hint_threshold_s for d in dwells):
            self.hint_active = True
        elif all(d < hint_threshold_s / 2.0 for d in dwells):
            self.hint_active = False


def update_attention(objects: list[TrackedObject], e: MappedGazeEvent,
                     max_gap_s: float) -> TrackedObject | None:
    """Credit the event's dwell to the one object it hits.

    Overlaps resolve to the most recently detected object (highest z).
    Returns the hit object, if any; decay is applied separately by the
    tick loop before events land.
    """
    hit: TrackedObject | None = None
    for obj in objects:
        if obj.smoothed_obb is None:
            continue
        if obj.smoothed_obb.contains(e.p_mm):
            if hit is None or obj.last_detection_t() > hit.last_detection_t():
                hit = obj
    if hit is not None:
        gained = min(e.dt_s, max_gap_s)
        hit.viewers[e.participant_id] = hit.viewers.get(e.participant_id, 0.0) + gained
        hit._credited_since_decay.add(e.participant_id)
    return hit


def highlight_states(
    objects: list[TrackedObject],
    attend_threshold_s: float = DEFAULT_ATTEND_THRESHOLD_S,
    dwell_cap_s: float = 3.0,
    margin_mm: float = DEFAULT_HIGHLIGHT_MARGIN_MM,
) -> list[HighlightState]:
    """One highlight per object that somebody is attending to.

    The arc count is the number of qualifying viewers; the renderer
    distributes the arcs around the circle.
    """
    states = []
    for obj in objects:
        if obj.smoothed_obb is None:
            continue
        arcs = sorted(
            (pid, min(dwell / dwell_cap_s, 1.0))
            for pid, dwell in obj.viewers.items()
            if dwell >= attend_threshold_s
        )
        if not arcs:
            continue
        states.append(
            HighlightState(
                object_id=obj.object_id,
                center_mm=obj.smoothed_obb.center_mm,
                radius_mm=obj.smoothed_obb.circumscribed_radius_mm() + margin_mm,
                arcs=arcs,
            )
        )
    return states


@dataclass(frozen=True)
class TaskObjectSpec:
    object_id: str
    label: str
    neighbors: tuple[str, ...]


def load_task_definitions(path: str) -> list[TaskObjectSpec]:
    """Task definition file: object ids, labels, and puzzle adjacency."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    specs = []
    for entry in data.get("objects", []):
        specs.append(
            TaskObjectSpec(
                object_id=str(entry["id"]),
                label=str(entry.get("label", entry["id"])),
                neighbors=tuple(str(n) for n in entry.get("neighbors", [])),
            )
        )
    return specs


class ObjectRegistry:
    """All tracked objects of a session, keyed by id.

    Detections for unknown ids create objects on the fly; task definitions
    seed labels and neighbor lists.
    """

    def __init__(self, task_specs: list[TaskObjectSpec] | None = None,
                 half_life_s: float = 10.0,
                 hint_threshold_s: float = DEFAULT_HINT_THRESHOLD_S,
                 attend_threshold_s: float = DEFAULT_ATTEND_THRESHOLD_S,
                 dwell_cap_s: float = 3.0,
                 max_gap_s: float = 0.2,
                 start_time: float = 0.0):
        self.objects: dict[str, TrackedObject] = {}
        self.half_life_s = half_life_s
        self.hint_threshold_s = hint_threshold_s
        self.attend_threshold_s = attend_threshold_s
        self.dwell_cap_s = dwell_cap_s
        self.max_gap_s = max_gap_s
        self.last_update = start_time
        for spec in task_specs or []:
            self.objects[spec.object_id] = TrackedObject(
                spec.object_id, list(spec.neighbors), spec.label
            )

    def ingest_detection(self, d: RawDetection) -> None:
        obj = self.objects.get(d.object_id)
        if obj is None:
            obj = TrackedObject(d.object_id)
            self.objects[d.object_id] = obj
        obj.ingest_detection(d)

    def decay(self, now: float) -> None:
        for obj in self.objects.values():
            obj.decay_viewers(now, self.last_update, self.half_life_s)
        self.last_update = now

    def apply_gaze(self, e: MappedGazeEvent) -> None:
        update_attention(list(self.objects.values()), e, self.max_gap_s)

    def update_hints(self) -> None:
        for obj in self.objects.values():
            obj.update_hint(self.hint_threshold_s)

    def highlights(self) -> list[HighlightState]:
        return highlight_states(
            sorted(self.objects.values(), key=lambda o: o.object_id),
            self.attend_threshold_s,
            self.dwell_cap_s,
        )

    def hint_snapshot(self) -> list[dict]:
        return [
            {
                "object_id": obj.object_id,
                "active": obj.hint_active,
                "neighbors": list(obj.hint_neighbors),
            }
            for obj in sorted(self.objects.values(), key=lambda o: o.object_id)
            if obj.hint_neighbors
        ]
