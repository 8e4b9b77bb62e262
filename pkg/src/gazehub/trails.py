"""Per-participant trail entities that chase the hottest cell of that
participant's private grid, and joint-attention detection by co-location."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .attention import AttentionGrid, GridGeometry

DEFAULT_SPEED_MM_S = 120.0
DEFAULT_HISTORY_BOUND = 64


@dataclass
class TrailEntity:
    """Animated marker pursuing the target cell center in a straight line
    at constant speed.  path_history keeps recent positions for renderers
    that draw trailing waves."""

    participant_id: str
    pos_mm: tuple[float, float]
    speed_mm_s: float = DEFAULT_SPEED_MM_S
    target_cell: tuple[int, int] | None = None
    heading_rad: float = 0.0
    path_history: deque = field(
        default_factory=lambda: deque(maxlen=DEFAULT_HISTORY_BOUND)
    )

    def retarget(self, grid: AttentionGrid) -> None:
        """Acquire the grid's argmax cell; none halts the entity in place."""
        self.target_cell = grid.argmax_cell()

    def advance(self, dt_s: float, geometry: GridGeometry) -> None:
        """Move toward the target cell center by at most speed * dt, never
        overshooting.  Heading tracks the motion vector and is left alone
        while stationary."""
        if dt_s < 0:
            raise ValueError(f"dt_s must be non-negative, got {dt_s}")
        if self.target_cell is None or dt_s == 0:
            return
        tx, ty = geometry.cell_center_mm(self.target_cell)
        dx = tx - self.pos_mm[0]
        dy = ty - self.pos_mm[1]
        dist = math.hypot(dx, dy)
        if dist == 0:
            return
        step = self.speed_mm_s * dt_s
        self.heading_rad = math.atan2(dy, dx)
        if step >= dist:
            # Clamp lands exactly on the target; adding dx/dy would leave
            # a float-rounding sliver.
            self.pos_mm = (tx, ty)
        else:
            self.pos_mm = (
                self.pos_mm[0] + dx / dist * step,
                self.pos_mm[1] + dy / dist * step,
            )
        self.path_history.append(self.pos_mm)

    def snapshot(self, history_points: int = 16) -> dict:
        history = list(self.path_history)[-history_points:]
        return {
            "participant_id": self.participant_id,
            "pos_mm": [self.pos_mm[0], self.pos_mm[1]],
            "heading_rad": self.heading_rad,
            "target_cell": list(self.target_cell) if self.target_cell else None,
            "history": [[x, y] for x, y in history],
        }


def joint_attention_cells(
    trails: list[TrailEntity], geometry: GridGeometry
) -> list[tuple[tuple[int, int], set[str]]]:
    """Cells occupied by two or more trail entities, with their occupant
    sets.  Cell membership uses the same boundary rule as grid ingestion.
    Results are sorted by cell for determinism."""
    occupants: dict[tuple[int, int], set[str]] = {}
    for trail in trails:
        cell = geometry.cell_of(trail.pos_mm)
        occupants.setdefault(cell, set()).add(trail.participant_id)
    return sorted(
        (cell, ids) for cell, ids in occupants.items() if len(ids) >= 2
    )
