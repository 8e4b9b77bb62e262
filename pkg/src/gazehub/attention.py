"""Attention grids: dwell accumulation with saturation, decay, colorization.

One shared grid aggregates dwell across everyone (the heatmap); each
participant additionally gets a private grid of the same shape that drives
their trail entity.  Grids are single-writer: only the hub tick thread
mutates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_ROWS = 14
DEFAULT_COLS = 20
DEFAULT_DWELL_CAP_S = 3.0
DEFAULT_REVEAL_THRESHOLD_S = 0.3
DEFAULT_HALF_LIFE_S = 10.0
DEFAULT_MAX_GAP_S = 0.2


@dataclass(frozen=True)
class MappedGazeEvent:
    """One gaze sample already mapped into table millimeters.

    dt_s is the time since this participant's previous in-view sample
    (0 for the first); the producer clamps it to the configured gap so a
    stream stall cannot dump phantom dwell.
    """

    participant_id: str
    t: float
    p_mm: tuple[float, float]
    dt_s: float

    def __post_init__(self) -> None:
        if self.dt_s < 0:
            raise ValueError(f"dt_s must be non-negative, got {self.dt_s}")


@dataclass(frozen=True)
class GridGeometry:
    """Cell lattice over the table extent, shared by grids and trails."""

    rows: int
    cols: int
    width_mm: float
    height_mm: float

    def __post_init__(self) -> None:
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("grid must have positive dimensions")
        if self.width_mm <= 0 or self.height_mm <= 0:
            raise ValueError("table extent must be positive")

    @property
    def cell_width_mm(self) -> float:
        return self.width_mm / self.cols

    @property
    def cell_height_mm(self) -> float:
        return self.height_mm / self.rows

    def cell_of(self, p_mm: tuple[float, float]) -> tuple[int, int]:
        """Cell containing a point; a point exactly on a boundary belongs
        to the larger-index cell, clamped at the far edges."""
        col = min(int(math.floor(p_mm[0] / self.cell_width_mm)), self.cols - 1)
        row = min(int(math.floor(p_mm[1] / self.cell_height_mm)), self.rows - 1)
        return (max(row, 0), max(col, 0))

    def cell_center_mm(self, cell: tuple[int, int]) -> tuple[float, float]:
        row, col = cell
        return ((col + 0.5) * self.cell_width_mm, (row + 0.5) * self.cell_height_mm)


class AttentionGrid:
    """Per-cell dwell seconds with an upper bound, reveal threshold, and
    exponential half-life decay."""

    def __init__(
        self,
        geometry: GridGeometry,
        dwell_cap_s: float = DEFAULT_DWELL_CAP_S,
        reveal_threshold_s: float = DEFAULT_REVEAL_THRESHOLD_S,
        half_life_s: float = DEFAULT_HALF_LIFE_S,
        max_gap_s: float = DEFAULT_MAX_GAP_S,
        start_time: float = 0.0,
    ):
        if dwell_cap_s <= 0:
            raise ValueError("dwell cap must be positive")
        if not 0 <= reveal_threshold_s < dwell_cap_s:
            raise ValueError("reveal threshold must be in [0, dwell_cap)")
        if half_life_s <= 0:
            raise ValueError("half-life must be positive")
        self.geometry = geometry
        self.dwell_cap_s = dwell_cap_s
        self.reveal_threshold_s = reveal_threshold_s
        self.half_life_s = half_life_s
        self.max_gap_s = max_gap_s
        self.cell_dwell_s = np.zeros((geometry.rows, geometry.cols))
        self.last_update = start_time
        self._last_argmax: tuple[int, int] | None = None

    @property
    def rows(self) -> int:
        return self.geometry.rows

    @property
    def cols(self) -> int:
        return self.geometry.cols

    def ingest(self, event: MappedGazeEvent) -> None:
        """Add the event's dwell to its cell, clamped to the cap.

        The caller must have dropped out-of-view events already.
        """
        row, col = self.geometry.cell_of(event.p_mm)
        gained = min(event.dt_s, self.max_gap_s)
        self.cell_dwell_s[row, col] = min(
            self.cell_dwell_s[row, col] + gained, self.dwell_cap_s
        )

    def decay(self, now: float) -> None:
        """Halve every cell once per half-life of elapsed time.

        Within a tick, decay runs before any ingest (fixed order; the hub
        enforces it)."""
        if now < self.last_update:
            raise ValueError(
                f"decay time went backwards: {now} < {self.last_update}"
            )
        elapsed = now - self.last_update
        if elapsed > 0:
            self.cell_dwell_s *= 0.5 ** (elapsed / self.half_life_s)
        self.last_update = now

    def colorize(self) -> np.ndarray:
        """Unit-interval intensity per cell: 0 below the reveal threshold,
        linear up to 1 at the cap.  Hue is the renderer's concern."""
        span = self.dwell_cap_s - self.reveal_threshold_s
        intensity = (self.cell_dwell_s - self.reveal_threshold_s) / span
        intensity = np.clip(intensity, 0.0, 1.0)
        intensity[self.cell_dwell_s < self.reveal_threshold_s] = 0.0
        return intensity

    def argmax_cell(self) -> tuple[int, int] | None:
        """Highest-dwell cell if it exceeds the reveal threshold.

        Ties keep the previously returned cell when it is among the maxima
        (hysteresis), otherwise the lexicographically smallest wins.
        """
        peak = self.cell_dwell_s.max()
        if peak <= self.reveal_threshold_s:
            self._last_argmax = None
            return None
        if (
            self._last_argmax is not None
            and self.cell_dwell_s[self._last_argmax] == peak
        ):
            return self._last_argmax
        rows, cols = np.nonzero(self.cell_dwell_s == peak)
        self._last_argmax = (int(rows[0]), int(cols[0]))
        return self._last_argmax

    def snapshot(self) -> dict:
        """Self-contained state for broadcasting, intensities row-major."""
        return {
            "rows": self.rows,
            "cols": self.cols,
            "reveal_threshold_s": self.reveal_threshold_s,
            "dwell_cap_s": self.dwell_cap_s,
            "intensity": [float(v) for v in self.colorize().ravel()],
        }
