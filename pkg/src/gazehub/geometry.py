"""Table-plane geometry: marker layout, homography estimation, gaze mapping.

Everything here is pure and stateless.  Scene-camera coordinates are pixels
as reported by the glasses; table coordinates are millimeters with the
origin at the projection view's top-left corner, x right, y down.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

DET_EPSILON = 1e-12
W_EPSILON = 1e-12

MARKER_QUORUM = 3


class QuorumNotMet(ValueError):
    """Fewer than MARKER_QUORUM distinct markers in a sample."""


class DegenerateConfiguration(ValueError):
    """Correspondences are collinear or otherwise rank-deficient."""


class AtInfinity(ValueError):
    """Mapped point lies on (or numerically at) the line at infinity."""


@dataclass(frozen=True)
class MarkerSpec:
    """One fiducial marker at a known table-plane position.

    Corners are an axis-aligned square around the center, ordered
    top-left, top-right, bottom-right, bottom-left.
    """

    id: int
    center_mm: tuple[float, float]
    side_mm: float = 85.0

    def __post_init__(self) -> None:
        if self.side_mm <= 0:
            raise ValueError(f"marker side must be positive, got {self.side_mm}")

    def corners_mm(self) -> np.ndarray:
        cx, cy = self.center_mm
        h = self.side_mm / 2.0
        return np.array(
            [
                [cx - h, cy - h],
                [cx + h, cy - h],
                [cx + h, cy + h],
                [cx - h, cy + h],
            ]
        )


@dataclass(frozen=True)
class TableLayout:
    """Projection view extent plus the marker arrangement around it."""

    width_mm: float = 770.0
    height_mm: float = 550.0
    proj_width_px: int = 1900
    proj_height_px: int = 1080
    markers: tuple[MarkerSpec, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.width_mm <= 0 or self.height_mm <= 0:
            raise ValueError("table extent must be positive")
        if self.proj_width_px <= 0 or self.proj_height_px <= 0:
            raise ValueError("projection resolution must be positive")
        ids = [m.id for m in self.markers]
        if len(ids) != len(set(ids)):
            raise ValueError("marker ids must be unique")

    @property
    def pixel_pitch_mm(self) -> tuple[float, float]:
        return (self.width_mm / self.proj_width_px, self.height_mm / self.proj_height_px)

    def marker_by_id(self, marker_id: int) -> MarkerSpec:
        for m in self.markers:
            if m.id == marker_id:
                return m
        raise KeyError(f"marker id {marker_id} not in layout")

    def contains_mm(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width_mm and 0.0 <= y <= self.height_mm

    def layout_hash(self) -> str:
        import hashlib

        blob = json.dumps(layout_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_layout() -> TableLayout:
    """Six 85 mm tags: four 60 mm outside the view corners, two at the
    midpoints of the long edges."""
    w, h, off = 770.0, 550.0, 60.0
    markers = (
        MarkerSpec(0, (-off, -off)),
        MarkerSpec(1, (w + off, -off)),
        MarkerSpec(2, (w + off, h + off)),
        MarkerSpec(3, (-off, h + off)),
        MarkerSpec(4, (w / 2.0, -off)),
        MarkerSpec(5, (w / 2.0, h + off)),
    )
    return TableLayout(markers=markers)


def layout_to_dict(layout: TableLayout) -> dict:
    return {
        "width_mm": layout.width_mm,
        "height_mm": layout.height_mm,
        "proj_width_px": layout.proj_width_px,
        "proj_height_px": layout.proj_height_px,
        "markers": [
            {
                "id": m.id,
                "center_x_mm": m.center_mm[0],
                "center_y_mm": m.center_mm[1],
                "side_mm": m.side_mm,
            }
            for m in layout.markers
        ],
    }


def layout_from_dict(data: dict) -> TableLayout:
    markers = tuple(
        MarkerSpec(
            id=int(m["id"]),
            center_mm=(float(m["center_x_mm"]), float(m["center_y_mm"])),
            side_mm=float(m.get("side_mm", 85.0)),
        )
        for m in data.get("markers", [])
    )
    return TableLayout(
        width_mm=float(data.get("width_mm", 770.0)),
        height_mm=float(data.get("height_mm", 550.0)),
        proj_width_px=int(data.get("proj_width_px", 1900)),
        proj_height_px=int(data.get("proj_height_px", 1080)),
        markers=markers,
    )


def load_layout(path: str) -> TableLayout:
    with open(path, "r", encoding="utf-8") as f:
        return layout_from_dict(json.load(f))


def save_layout(layout: TableLayout, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(layout_to_dict(layout), f, indent=2)
        f.write("\n")


@dataclass(frozen=True)
class MarkerDetection:
    """Pre-extracted marker corners in scene-camera pixels, same corner
    order as MarkerSpec.corners_mm()."""

    marker_id: int
    corners_px: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.corners_px) != 4:
            raise ValueError("a marker detection needs exactly 4 corners")
        for x, y in self.corners_px:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError("marker corners must be finite")


class MappedPoint(NamedTuple):
    x_mm: float
    y_mm: float
    out_of_view: bool


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, scene-camera pixels -> table millimeters.

    Stored normalized so m[2][2] == 1 whenever that entry is nonzero.
    """

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if abs(m[2, 2]) > W_EPSILON:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) < DET_EPSILON:
            raise DegenerateConfiguration("homography is not invertible")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def apply(self, x: float, y: float) -> tuple[float, float]:
        """Raw projective transform without bounds checking."""
        v = self.m @ np.array([x, y, 1.0])
        if abs(v[2]) < W_EPSILON:
            raise AtInfinity(f"point ({x}, {y}) maps to infinity")
        return (float(v[0] / v[2]), float(v[1] / v[2]))


def _hartley_normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform moving the centroid to the origin and the mean
    distance from it to sqrt(2)."""
    centroid = points.mean(axis=0)
    dist = np.linalg.norm(points - centroid, axis=1).mean()
    if dist < 1e-12:
        raise DegenerateConfiguration("correspondence points are coincident")
    s = math.sqrt(2.0) / dist
    return np.array(
        [
            [s, 0.0, -s * centroid[0]],
            [0.0, s, -s * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def estimate_homography(
    detections: Sequence[MarkerDetection], layout: TableLayout
) -> tuple[Homography, float]:
    """Least-squares projective map from marker corner correspondences.

    Uses all 4 corners of every detected marker (duplicate detections of
    one id collapse to the latest).  Normalized DLT: both point sets are
    Hartley-conditioned before the SVD solve.

    Returns the homography and the reprojection residual RMS in mm.

    Raises QuorumNotMet below 3 distinct markers and
    DegenerateConfiguration for rank-deficient correspondences.
    """
    by_id: dict[int, MarkerDetection] = {d.marker_id: d for d in detections}
    if len(by_id) < MARKER_QUORUM:
        raise QuorumNotMet(
            f"need at least {MARKER_QUORUM} distinct markers, got {len(by_id)}"
        )

    src_pts = []
    dst_pts = []
    for marker_id, det in sorted(by_id.items()):
        spec = layout.marker_by_id(marker_id)
        src_pts.extend(det.corners_px)
        dst_pts.extend(spec.corners_mm())
    src = np.asarray(src_pts, dtype=float)
    dst = np.asarray(dst_pts, dtype=float)

    t_src = _hartley_normalization(src)
    t_dst = _hartley_normalization(dst)
    src_n = (t_src @ np.column_stack([src, np.ones(len(src))]).T).T[:, :2]
    dst_n = (t_dst @ np.column_stack([dst, np.ones(len(dst))]).T).T[:, :2]

    n = len(src_n)
    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = src_n[i]
        u, v = dst_n[i]
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y, -v]

    _, s, vt = np.linalg.svd(a)
    # A one-dimensional null space needs 8 independent constraints.
    if s[7] < 1e-9 * s[0]:
        raise DegenerateConfiguration("correspondences are rank-deficient")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src

    homography = Homography(h)
    proj = (homography.m @ np.column_stack([src, np.ones(n)]).T).T
    proj = proj[:, :2] / proj[:, 2:3]
    rms = float(np.sqrt(np.mean(np.sum((proj - dst) ** 2, axis=1))))
    return homography, rms


def map_gaze_to_table(h: Homography, gaze_px: tuple[float, float],
                      layout: TableLayout) -> MappedPoint:
    """Map a scene-camera gaze point to table millimeters.

    out_of_view flags points outside the projection extent; callers decide
    whether to drop them.  Raises AtInfinity for degenerate points.
    """
    x, y = gaze_px
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"gaze point must be finite, got ({x}, {y})")
    tx, ty = h.apply(x, y)
    return MappedPoint(tx, ty, not layout.contains_mm(tx, ty))


def table_to_projection_px(
    p_mm: tuple[float, float], layout: TableLayout
) -> tuple[float, float]:
    """Table millimeters to continuous projector pixels."""
    pitch_x, pitch_y = layout.pixel_pitch_mm
    return (p_mm[0] / pitch_x, p_mm[1] / pitch_y)


def projection_px_to_table(
    p_px: tuple[float, float], layout: TableLayout
) -> tuple[float, float]:
    pitch_x, pitch_y = layout.pixel_pitch_mm
    return (p_px[0] * pitch_x, p_px[1] * pitch_y)
