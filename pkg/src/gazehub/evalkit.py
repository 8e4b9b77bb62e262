"""Calibration-style accuracy evaluation and synthetic load generation.

The evaluation half reproduces a 9-point accuracy routine: show targets on
a schedule, filter the incoming gaze stream (onset delay, marker quorum),
map what survives, and report per-target Euclidean pixel error.

The synthetic half fabricates participants with scripted scanpaths seen
through a configurable camera pose, plus a jittery oriented-box detector,
so the whole pipeline can be exercised on a desk with no hardware.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from .geometry import (
    Homography,
    MarkerDetection,
    TableLayout,
    estimate_homography,
    map_gaze_to_table,
    projection_px_to_table,
    table_to_projection_px,
)
from .objects import OrientedBox
from .protocol import DetectionMsg, GazeSampleMsg

CALIBRATION_POINTS = 9
DEFAULT_PER_POINT_DURATION_S = 2.0
DEFAULT_ONSET_DELAY_S = 0.1
DEFAULT_MARGIN_FRACTION = 0.1


class TimedSample(NamedTuple):
    """A gaze message with its hub receipt time, relative to schedule start."""

    t: float
    msg: GazeSampleMsg


@dataclass(frozen=True)
class CalibrationSchedule:
    """3x3 target lattice shown one point at a time, row-major."""

    points_px: tuple[tuple[float, float], ...]
    per_point_duration_s: float = DEFAULT_PER_POINT_DURATION_S
    onset_delay_s: float = DEFAULT_ONSET_DELAY_S
    view_label: str = "horizontal"

    def __post_init__(self) -> None:
        if len(self.points_px) != CALIBRATION_POINTS:
            raise ValueError(
                f"standard routine uses {CALIBRATION_POINTS} points, "
                f"got {len(self.points_px)}"
            )
        if not 0 <= self.onset_delay_s < self.per_point_duration_s:
            raise ValueError("onset delay must be shorter than the point duration")

    @classmethod
    def nine_point(
        cls,
        layout: TableLayout,
        margin_fraction: float = DEFAULT_MARGIN_FRACTION,
        per_point_duration_s: float = DEFAULT_PER_POINT_DURATION_S,
        onset_delay_s: float = DEFAULT_ONSET_DELAY_S,
        view_label: str = "horizontal",
    ) -> "CalibrationSchedule":
        w, h = layout.proj_width_px, layout.proj_height_px
        xs = [margin_fraction * w, 0.5 * w, (1 - margin_fraction) * w]
        ys = [margin_fraction * h, 0.5 * h, (1 - margin_fraction) * h]
        points = tuple((x, y) for y in ys for x in xs)
        return cls(points, per_point_duration_s, onset_delay_s, view_label)

    @property
    def total_duration_s(self) -> float:
        return len(self.points_px) * self.per_point_duration_s

    def point_index_at(self, t: float) -> int | None:
        if t < 0 or t >= self.total_duration_s:
            return None
        return int(t // self.per_point_duration_s)

    def onset_of(self, index: int) -> float:
        return index * self.per_point_duration_s


class RetainedSample(NamedTuple):
    t: float
    msg: GazeSampleMsg
    point_index: int


@dataclass
class FilterResult:
    """Partition of a calibration stream by discard reason.

    received == len(retained) + len(discarded_onset) + len(discarded_quorum).
    """

    retained: list[RetainedSample]
    discarded_onset: list[RetainedSample]
    discarded_quorum: list[RetainedSample]

    @property
    def received(self) -> int:
        return (
            len(self.retained)
            + len(self.discarded_onset)
            + len(self.discarded_quorum)
        )

    def per_point_counts(self, reason: str) -> list[int]:
        bucket = getattr(self, reason)
        counts = [0] * CALIBRATION_POINTS
        for sample in bucket:
            counts[sample.point_index] += 1
        return counts


def filter_samples(
    samples: Iterable[TimedSample], sched: CalibrationSchedule
) -> FilterResult:
    """Apply the two discard rules: samples within the onset delay of
    their point go first, then samples below the 3-marker quorum.

    Samples outside the schedule window are ignored entirely (they were
    never part of the routine).
    """
    result = FilterResult([], [], [])
    for t, msg in samples:
        index = sched.point_index_at(t)
        if index is None:
            continue
        tagged = RetainedSample(t, msg, index)
        if t - sched.onset_of(index) < sched.onset_delay_s:
            result.discarded_onset.append(tagged)
        elif len({m.marker_id for m in msg.markers}) < 3:
            result.discarded_quorum.append(tagged)
        else:
            result.retained.append(tagged)
    return result


@dataclass(frozen=True)
class PointAccuracy:
    index: int
    target_px: tuple[float, float]
    sample_count: int
    discarded_onset: int
    discarded_quorum: int
    mean_error_px: float | None
    std_error_px: float | None


@dataclass(frozen=True)
class AccuracyReport:
    """Per-target Euclidean error statistics over retained samples only."""

    view_label: str
    points: tuple[PointAccuracy, ...]
    min_mean_error_px: float | None
    max_mean_error_px: float | None
    eye_to_screen_note: str = "desk-scale synthetic run; no physical viewing distance"

    def to_dict(self) -> dict:
        return {
            "view_label": self.view_label,
            "eye_to_screen_note": self.eye_to_screen_note,
            "min_mean_error_px": self.min_mean_error_px,
            "max_mean_error_px": self.max_mean_error_px,
            "points": [
                {
                    "index": p.index,
                    "target_px": list(p.target_px),
                    "sample_count": p.sample_count,
                    "discarded_onset": p.discarded_onset,
                    "discarded_quorum": p.discarded_quorum,
                    "mean_error_px": p.mean_error_px,
                    "std_error_px": p.std_error_px,
                }
                for p in self.points
            ],
        }

    def to_text(self) -> str:
        lines = [
            f"Gaze mapping accuracy - {self.view_label} view",
            f"note: {self.eye_to_screen_note}",
            "",
            f"{'pt':>2}  {'target px':>18}  {'n':>6}  {'onset':>5}  "
            f"{'quorum':>6}  {'mean px':>9}  {'std px':>9}",
        ]
        for p in self.points:
            target = f"({p.target_px[0]:.1f}, {p.target_px[1]:.1f})"
            mean = f"{p.mean_error_px:.3f}" if p.mean_error_px is not None else "-"
            std = f"{p.std_error_px:.3f}" if p.std_error_px is not None else "-"
            lines.append(
                f"{p.index:>2}  {target:>18}  {p.sample_count:>6}  "
                f"{p.discarded_onset:>5}  {p.discarded_quorum:>6}  "
                f"{mean:>9}  {std:>9}"
            )
        if self.min_mean_error_px is not None:
            lines.append("")
            lines.append(
                f"mean error across points: {self.min_mean_error_px:.3f} px "
                f"(min) to {self.max_mean_error_px:.3f} px (max)"
            )
        return "\n".join(lines) + "\n"


class EmptyPoint(Warning):
    """A calibration target retained zero samples (reported, not fatal)."""


def accuracy_report(
    mapped_by_point: dict[int, list[tuple[float, float]]],
    sched: CalibrationSchedule,
    filter_result: FilterResult | None = None,
    eye_to_screen_note: str | None = None,
) -> AccuracyReport:
    """Per-point mean and standard deviation of the Euclidean pixel
    distance between mapped gaze points and their calibration target."""
    onset_counts = (
        filter_result.per_point_counts("discarded_onset")
        if filter_result
        else [0] * CALIBRATION_POINTS
    )
    quorum_counts = (
        filter_result.per_point_counts("discarded_quorum")
        if filter_result
        else [0] * CALIBRATION_POINTS
    )

    points: list[PointAccuracy] = []
    means: list[float] = []
    for index, target in enumerate(sched.points_px):
        mapped = mapped_by_point.get(index, [])
        if mapped:
            errors = [math.hypot(x - target[0], y - target[1]) for x, y in mapped]
            # fsum keeps the statistics exactly order-invariant.
            mean = math.fsum(errors) / len(errors)
            std = math.sqrt(math.fsum((e - mean) ** 2 for e in errors) / len(errors))
            means.append(mean)
        else:
            mean = std = None
        points.append(
            PointAccuracy(
                index=index,
                target_px=target,
                sample_count=len(mapped),
                discarded_onset=onset_counts[index],
                discarded_quorum=quorum_counts[index],
                mean_error_px=mean,
                std_error_px=std,
            )
        )
    kwargs = {}
    if eye_to_screen_note is not None:
        kwargs["eye_to_screen_note"] = eye_to_screen_note
    return AccuracyReport(
        view_label=sched.view_label,
        points=tuple(points),
        min_mean_error_px=min(means) if means else None,
        max_mean_error_px=max(means) if means else None,
        **kwargs,
    )


def map_retained_samples(
    retained: Sequence[RetainedSample], layout: TableLayout
) -> dict[int, list[tuple[float, float]]]:
    """Run the mapping pipeline over retained samples: fresh homography
    from each sample's own markers, gaze to table mm, then to projector
    pixels, grouped by calibration point."""
    grouped: dict[int, list[tuple[float, float]]] = {}
    for sample in retained:
        homography, _ = estimate_homography(sample.msg.markers, layout)
        mapped = map_gaze_to_table(homography, sample.msg.gaze_px, layout)
        px = table_to_projection_px((mapped.x_mm, mapped.y_mm), layout)
        grouped.setdefault(sample.point_index, []).append(px)
    return grouped


def run_evaluation(
    samples: Iterable[TimedSample],
    sched: CalibrationSchedule,
    layout: TableLayout,
    eye_to_screen_note: str | None = None,
) -> tuple[FilterResult, AccuracyReport]:
    filtered = filter_samples(samples, sched)
    mapped = map_retained_samples(filtered.retained, layout)
    return filtered, accuracy_report(mapped, sched, filtered, eye_to_screen_note)


def write_report(report: AccuracyReport, out_dir: str) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, f"accuracy_{report.view_label}")
    json_path, text_path = base + ".json", base + ".txt"
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(text_path, "w", encoding="utf-8") as f:
        f.write(report.to_text())
    return json_path, text_path


# -- synthetic participants ----------------------------------------------------


@dataclass(frozen=True)
class CameraPose:
    """Ground-truth table->scene map of a simulated head-worn camera.

    Built from a similarity transform plus small projective terms; the
    corresponding scene->table homography is exactly what the estimator
    should recover.
    """

    scale_px_per_mm: float = 1.0
    rotation_rad: float = 0.0
    translate_px: tuple[float, float] = (0.0, 0.0)
    perspective: tuple[float, float] = (0.0, 0.0)

    def table_to_scene(self) -> Homography:
        c = math.cos(self.rotation_rad) * self.scale_px_per_mm
        s = math.sin(self.rotation_rad) * self.scale_px_per_mm
        m = np.array(
            [
                [c, -s, self.translate_px[0]],
                [s, c, self.translate_px[1]],
                [self.perspective[0], self.perspective[1], 1.0],
            ]
        )
        return Homography(m)

    def ground_truth(self) -> Homography:
        """Scene->table map (the estimator's target)."""
        return self.table_to_scene().inverse()


@dataclass(frozen=True)
class Fixate:
    target_mm: tuple[float, float]
    duration_s: float


@dataclass(frozen=True)
class Saccade:
    """Constant-velocity flight from the previous position to the target;
    in-flight samples land off-target on purpose."""

    target_mm: tuple[float, float]
    duration_s: float


Instruction = Union[Fixate, Saccade]


def scanpath_position(
    program: Sequence[Instruction], t: float, start_mm: tuple[float, float]
) -> tuple[float, float]:
    """Table-space position at time t; holds the final target afterwards."""
    if not program:
        raise ValueError("scanpath program must be nonempty")
    pos = start_mm
    elapsed = 0.0
    for instr in program:
        end = elapsed + instr.duration_s
        if t < end:
            if isinstance(instr, Fixate):
                return instr.target_mm
            frac = (t - elapsed) / instr.duration_s
            return (
                pos[0] + (instr.target_mm[0] - pos[0]) * frac,
                pos[1] + (instr.target_mm[1] - pos[1]) * frac,
            )
        pos = instr.target_mm
        elapsed = end
    return pos


def scanpath_from_schedule(
    sched: CalibrationSchedule, layout: TableLayout, saccade_s: float = 0.05
) -> tuple[Instruction, ...]:
    """Calibration routine as a scanpath: fly to each target, then hold it
    for the rest of the point's slot."""
    if saccade_s >= sched.per_point_duration_s:
        raise ValueError("saccade must be shorter than the point duration")
    program: list[Instruction] = []
    for target_px in sched.points_px:
        target_mm = projection_px_to_table(target_px, layout)
        program.append(Saccade(target_mm, saccade_s))
        program.append(Fixate(target_mm, sched.per_point_duration_s - saccade_s))
    return tuple(program)


@dataclass(frozen=True)
class SyntheticParticipant:
    """Deterministic fake gaze source: scripted scanpath seen through a
    camera pose, with optional gaze noise and per-marker dropout."""

    participant_id: str
    scanpath: tuple[Instruction, ...]
    pose: CameraPose = field(default_factory=CameraPose)
    sample_rate_hz: float = 60.0
    noise_sigma_px: float = 0.0
    dropout: Union[float, dict[int, float]] = 0.0
    start_mm: tuple[float, float] = (385.0, 275.0)

    def __post_init__(self) -> None:
        if not self.scanpath:
            raise ValueError("scanpath program must be nonempty")
        if self.noise_sigma_px < 0:
            raise ValueError("noise sigma must be non-negative")
        probs = (
            self.dropout.values()
            if isinstance(self.dropout, dict)
            else [self.dropout]
        )
        if any(not 0.0 <= p < 1.0 for p in probs):
            raise ValueError("dropout probabilities must be in [0, 1)")

    def dropout_for(self, marker_id: int) -> float:
        if isinstance(self.dropout, dict):
            return self.dropout.get(marker_id, 0.0)
        return self.dropout


def generate_stream(
    participant: SyntheticParticipant,
    duration_s: float,
    layout: TableLayout,
    seed: int = 0,
) -> list[TimedSample]:
    """Samples at the participant's rate: scanpath position pushed through
    the inverse ground truth into scene pixels, markers forward-projected
    with per-sample dropout.  Bit-identical for a fixed seed."""
    rng = np.random.default_rng(seed)
    table_to_scene = participant.pose.table_to_scene()
    marker_corners_px: dict[int, tuple[tuple[float, float], ...]] = {}
    for spec in layout.markers:
        marker_corners_px[spec.id] = tuple(
            table_to_scene.apply(x, y) for x, y in spec.corners_mm()
        )

    n = int(round(duration_s * participant.sample_rate_hz))
    out: list[TimedSample] = []
    for k in range(n):
        t = k / participant.sample_rate_hz
        pos = scanpath_position(participant.scanpath, t, participant.start_mm)
        gx, gy = table_to_scene.apply(*pos)
        if participant.noise_sigma_px > 0:
            gx += rng.normal(0.0, participant.noise_sigma_px)
            gy += rng.normal(0.0, participant.noise_sigma_px)
        markers = tuple(
            MarkerDetection(marker_id=mid, corners_px=corners)
            for mid, corners in sorted(marker_corners_px.items())
            if rng.random() >= participant.dropout_for(mid)
        )
        out.append(
            TimedSample(
                t,
                GazeSampleMsg(
                    participant_id=participant.participant_id,
                    gaze_px=(float(gx), float(gy)),
                    confidence=1.0,
                    markers=markers,
                ),
            )
        )
    return out


def load_scanpath(path: str) -> tuple[Instruction, ...]:
    """Scanpath program file: a JSON list of fixate/saccade instructions.

    Example of each instruction kind:
        [{"op": "fixate", "target_mm": [385.0, 275.0], "duration_s": 1.5},
         {"op": "saccade", "target_mm": [100.0, 100.0], "duration_s": 0.08}]
    """
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    program: list[Instruction] = []
    for entry in data:
        op = entry["op"]
        target = (float(entry["target_mm"][0]), float(entry["target_mm"][1]))
        duration = float(entry["duration_s"])
        if op == "fixate":
            program.append(Fixate(target, duration))
        elif op == "saccade":
            program.append(Saccade(target, duration))
        else:
            raise ValueError(f"unknown scanpath op {op!r}")
    return tuple(program)


def random_scanpath(
    layout: TableLayout,
    duration_s: float,
    rng: np.random.Generator,
    margin_mm: float = 30.0,
) -> tuple[Instruction, ...]:
    """Aimless but plausible gaze behavior: saccade to a random in-view
    target, dwell there a while, repeat until the duration is covered."""
    program: list[Instruction] = []
    covered = 0.0
    while covered < duration_s:
        target = (
            float(rng.uniform(margin_mm, layout.width_mm - margin_mm)),
            float(rng.uniform(margin_mm, layout.height_mm - margin_mm)),
        )
        flight = float(rng.uniform(0.05, 0.15))
        dwell = float(rng.uniform(0.4, 1.5))
        program.append(Saccade(target, flight))
        program.append(Fixate(target, dwell))
        covered += flight + dwell
    return tuple(program)


VIEW_PRESETS = ("horizontal", "vertical")


def view_preset(
    view: str, layout: TableLayout
) -> tuple[CameraPose, dict[int, float]]:
    """Two stand-in viewing positions: the vertical pose sits at the short
    edge and loses the far markers more often, mirroring how viewpoint
    changes the number of detected markers."""
    if view == "horizontal":
        pose = CameraPose(
            scale_px_per_mm=1.4,
            rotation_rad=0.04,
            translate_px=(110.0, 60.0),
            perspective=(3e-5, 8e-5),
        )
        far_edge = [m.id for m in layout.markers if m.center_mm[1] < 0]
        dropout = {m.id: 0.05 for m in layout.markers}
        dropout.update({mid: 0.25 for mid in far_edge})
        return pose, dropout
    if view == "vertical":
        pose = CameraPose(
            scale_px_per_mm=1.3,
            rotation_rad=math.pi / 2 + 0.03,
            translate_px=(700.0, 40.0),
            perspective=(8e-5, 4e-5),
        )
        far_edge = [
            m.id for m in layout.markers if m.center_mm[0] > layout.width_mm / 2
        ]
        dropout = {m.id: 0.08 for m in layout.markers}
        dropout.update({mid: 0.45 for mid in far_edge})
        return pose, dropout
    raise ValueError(f"unknown view {view!r}; expected one of {VIEW_PRESETS}")


# -- simulated detector --------------------------------------------------------


@dataclass(frozen=True)
class SimulatedObject:
    object_id: str
    true_obb: OrientedBox


def generate_detections(
    objects: Sequence[SimulatedObject],
    duration_s: float,
    rate_hz: float = 20.0,
    center_noise_mm: float = 2.0,
    rotation_noise_rad: float = 0.04,
    confidence_range: tuple[float, float] = (0.4, 0.95),
    seed: int = 0,
) -> list[tuple[float, DetectionMsg]]:
    """Noisy detections of static objects at the detector frame rate.

    Confidence is uniform over the configured range, standing in for a
    real model's score distribution.
    """
    rng = np.random.default_rng(seed)
    lo, hi = confidence_range
    out: list[tuple[float, DetectionMsg]] = []
    n = int(round(duration_s * rate_hz))
    for k in range(n):
        t = k / rate_hz
        for obj in objects:
            box = obj.true_obb
            jittered = OrientedBox(
                center_mm=(
                    box.center_mm[0] + rng.normal(0.0, center_noise_mm),
                    box.center_mm[1] + rng.normal(0.0, center_noise_mm),
                ),
                half_extents_mm=box.half_extents_mm,
                rotation_rad=box.rotation_rad + rng.normal(0.0, rotation_noise_rad),
            )
            out.append(
                (
                    t,
                    DetectionMsg(
                        object_id=obj.object_id,
                        obb=jittered,
                        confidence=float(rng.uniform(lo, hi)),
                    ),
                )
            )
    return out
