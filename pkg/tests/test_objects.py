import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazehub.attention import MappedGazeEvent
from gazehub.objects import (
    ObjectRegistry,
    OrientedBox,
    RawDetection,
    TaskObjectSpec,
    TrackedObject,
    gaze_hit_test,
    highlight_states,
    load_task_definitions,
    update_attention,
)


def det(object_id="p1", t=0.0, center=(100.0, 100.0), half=(20.0, 10.0),
        rot=0.0, conf=0.5):
    return RawDetection(object_id, t, OrientedBox(center, half, rot), conf)


def gaze(pid="a", t=0.0, p=(100.0, 100.0), dt=0.1):
    return MappedGazeEvent(pid, t, p, dt)


class TestSmoothing:
    def test_max_confidence_wins(self):
        obj = TrackedObject("p1")
        for i, conf in enumerate([0.5, 0.9, 0.7]):
            obj.ingest_detection(det(t=float(i), center=(i * 10.0, 0.0 + 1), conf=conf))
        assert obj.smoothed_obb.center_mm == (10.0, 1.0)

    def test_eviction_recomputes_max(self):
        obj = TrackedObject("p1")
        obj.ingest_detection(det(t=0.0, center=(999.0, 1.0), conf=0.9))
        for i in range(20):
            obj.ingest_detection(det(t=1.0 + i, center=(float(i), 1.0), conf=0.5))
        # The 0.9 detection fell out of the 20-ring; max is now the most
        # recent of the tied 0.5s.
        assert len(obj.buffer) == 20
        assert obj.smoothed_obb.center_mm == (19.0, 1.0)

    def test_empty_buffer_has_no_pose(self):
        assert TrackedObject("p1").smoothed_obb is None

    def test_tie_prefers_most_recent(self):
        obj = TrackedObject("p1")
        obj.ingest_detection(det(t=0.0, center=(1.0, 1.0), conf=0.8))
        obj.ingest_detection(det(t=1.0, center=(2.0, 1.0), conf=0.8))
        assert obj.smoothed_obb.center_mm == (2.0, 1.0)

    def test_wrong_object_id_rejected(self):
        obj = TrackedObject("p1")
        with pytest.raises(ValueError):
            obj.ingest_detection(det(object_id="p2"))

    def test_twenty_fresh_pushes_flush_stale_pose(self):
        obj = TrackedObject("p1")
        obj.ingest_detection(det(t=0.0, center=(0.0, 1.0), conf=0.99))
        for i in range(20):
            obj.ingest_detection(det(t=1.0 + i, center=(50.0, 50.0), conf=0.3))
        assert obj.smoothed_obb.center_mm == (50.0, 50.0)

    @given(
        confs=st.lists(
            st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=60
        )
    )
    @settings(max_examples=200)
    def test_smoothed_equals_bruteforce_argmax(self, confs):
        obj = TrackedObject("p1")
        window = []
        for i, conf in enumerate(confs):
            d = det(t=float(i), center=(float(i), 1.0), conf=conf)
            obj.ingest_detection(d)
            window.append(d)
            window = window[-20:]
            best = max(window, key=lambda d: (d.confidence, d.t))
            assert obj.smoothed_obb == best.obb


class TestHitTest:
    def test_center_is_hit(self):
        box = OrientedBox((10.0, 20.0), (5.0, 3.0), 0.7)
        assert gaze_hit_test(box, (10.0, 20.0))

    def test_just_outside_axis_aligned_boundary(self):
        box = OrientedBox((0.0, 0.0), (10.0, 5.0), 0.0)
        assert not gaze_hit_test(box, (10.01, 0.0))
        assert gaze_hit_test(box, (10.0, 0.0))  # boundary counts

    def test_rotated_box_hand_checked(self):
        # 45 deg, half extents (10, 10): point (14.1, 0) lands at
        # rotated-frame x = 14.1*cos45 = 9.97 <= 10 (hit); (14.2, 0) at
        # 10.04 (miss).
        box = OrientedBox((0.0, 0.0), (10.0, 10.0), math.pi / 4)
        assert gaze_hit_test(box, (14.1, 0.0))
        assert not gaze_hit_test(box, (14.2, 0.0))

    @given(
        angle=st.floats(min_value=-math.pi, max_value=math.pi),
        px=st.floats(min_value=-30.0, max_value=30.0),
        py=st.floats(min_value=-30.0, max_value=30.0),
        rot=st.floats(min_value=-math.pi, max_value=math.pi),
    )
    @settings(max_examples=200)
    def test_rotation_consistency(self, angle, px, py, rot):
        # Rotating box and point together about the box center must not
        # change the answer.
        center = (50.0, 60.0)
        box = OrientedBox(center, (10.0, 5.0), rot)
        p = (center[0] + px, center[1] + py)
        c, s = math.cos(angle), math.sin(angle)
        p_rot = (
            center[0] + c * px - s * py,
            center[1] + s * px + c * py,
        )
        box_rot = OrientedBox(center, (10.0, 5.0), rot + angle)
        before = gaze_hit_test(box, p)
        after = gaze_hit_test(box_rot, p_rot)
        # Guard against boundary-knife-edge disagreements.
        dx, dy = px, py
        cc, ss = math.cos(-rot), math.sin(-rot)
        lx, ly = cc * dx - ss * dy, ss * dx + cc * dy
        on_edge = abs(abs(lx) - 10.0) < 1e-9 or abs(abs(ly) - 5.0) < 1e-9
        if not on_edge:
            assert before == after


class TestUpdateAttention:
    def test_dwell_accrues_on_hit(self):
        obj = TrackedObject("p1")
        obj.ingest_detection(det())
        for i in range(10):
            update_attention([obj], gaze(t=i * 0.1, dt=0.1), max_gap_s=0.2)
        assert obj.viewers["a"] == pytest.approx(1.0)

    def test_miss_changes_nothing(self):
        obj = TrackedObject("p1")
        obj.ingest_detection(det())
        update_attention([obj], gaze(p=(500.0, 500.0), dt=0.1), max_gap_s=0.2)
        assert obj.viewers == {}

    def test_overlap_goes_to_most_recent_detection(self):
        old = TrackedObject("old")
        new = TrackedObject("new")
        old.ingest_detection(det(object_id="old", t=0.0))
        new.ingest_detection(det(object_id="new", t=1.0))
        update_attention([old, new], gaze(dt=0.1), max_gap_s=0.2)
        assert old.viewers == {}
        assert new.viewers["a"] == pytest.approx(0.1)

    def test_decay_halves_per_half_life(self):
        obj = TrackedObject("p1")
        obj.viewers["a"] = 2.0
        obj.decay_viewers(now=10.0, last_update=0.0, half_life_s=10.0)
        assert obj.viewers["a"] == pytest.approx(1.0)

    def test_decayed_below_drop_threshold_removes_viewer(self):
        obj = TrackedObject("p1")
        obj.viewers["a"] = 0.08
        obj.decay_viewers(now=10.0, last_update=0.0, half_life_s=10.0,
                          drop_threshold_s=0.05)
        assert "a" not in obj.viewers  # 0.08 * 0.5 = 0.04 < 0.05

    def test_scalar_resimulation_of_dwell(self):
        # Same decay-then-accumulate oracle as the grids, on one object.
        obj = TrackedObject("p1")
        obj.ingest_detection(det())
        ts = [0.0, 0.1, 0.25, 0.4, 0.8, 1.0]
        dts = [0.0, 0.1, 0.15, 0.15, 0.2, 0.2]
        half_life = 5.0
        expected = 0.0
        last = 0.0
        for t, dt in zip(ts, dts):
            expected *= 0.5 ** ((t - last) / half_life)
            expected = expected + min(dt, 0.2)
            obj.decay_viewers(t, last, half_life, drop_threshold_s=0.0)
            update_attention([obj], gaze(t=t, dt=dt), max_gap_s=0.2)
            last = t
        assert obj.viewers["a"] == pytest.approx(expected, abs=1e-12)


class TestHighlights:
    def test_one_viewer_at_cap(self):
        obj = TrackedObject("p1")
        obj.ingest_detection(det(half=(20.0, 10.0)))
        obj.viewers["a"] = 3.0
        states = highlight_states([obj], attend_threshold_s=0.3, dwell_cap_s=3.0)
        assert len(states) == 1
        assert states[0].arcs == [("a", 1.0)]
        assert states[0].radius_mm == pytest.approx(math.hypot(20, 10) + 8.0)

    def test_two_viewers_two_arcs(self):
        obj = TrackedObject("p1")
        obj.ingest_detection(det())
        obj.viewers.update({"b": 3.5, "a": 1.5})
        states = highlight_states([obj], attend_threshold_s=0.3, dwell_cap_s=3.0)
        assert states[0].arcs == [("a", 0.5), ("b", 1.0)]

    def test_no_qualifying_viewer_no_state(self):
        obj = TrackedObject("p1")
        obj.ingest_detection(det())
        obj.viewers["a"] = 0.2
        assert highlight_states([obj], attend_threshold_s=0.3, dwell_cap_s=3.0) == []

    @given(dwell=st.floats(min_value=0.3, max_value=10.0))
    @settings(max_examples=50)
    def test_arc_fraction_in_unit_interval_and_monotone(self, dwell):
        obj = TrackedObject("p1")
        obj.ingest_detection(det())
        obj.viewers["a"] = dwell
        states = highlight_states([obj], attend_threshold_s=0.3, dwell_cap_s=3.0)
        frac = states[0].arcs[0][1]
        assert 0.0 < frac <= 1.0
        assert frac == min(dwell / 3.0, 1.0)


class TestHints:
    def test_threshold_activates(self):
        obj = TrackedObject("p1", hint_neighbors=["p2"])
        obj.viewers["a"] = 3.0
        obj.update_hint(hint_threshold_s=3.0)
        assert obj.hint_active

    def test_release_below_half_threshold(self):
        obj = TrackedObject("p1", hint_neighbors=["p2"])
        obj.viewers["a"] = 3.0
        obj.update_hint(3.0)
        obj.viewers["a"] = 1.4
        obj.update_hint(3.0)
        assert not obj.hint_active

    def test_hysteresis_band_holds(self):
        obj = TrackedObject("p1", hint_neighbors=["p2"])
        obj.viewers["a"] = 3.0
        obj.update_hint(3.0)
        for dwell in [1.6, 2.9, 1.7, 2.2]:
            obj.viewers["a"] = dwell
            obj.update_hint(3.0)
            assert obj.hint_active

    def test_no_viewers_deactivates(self):
        obj = TrackedObject("p1", hint_neighbors=["p2"])
        obj.viewers["a"] = 3.0
        obj.update_hint(3.0)
        obj.viewers.clear()
        obj.update_hint(3.0)
        assert not obj.hint_active


class TestRegistry:
    def test_detections_create_objects(self):
        reg = ObjectRegistry()
        reg.ingest_detection(det(object_id="fresh"))
        assert "fresh" in reg.objects

    def test_task_definitions_seed_neighbors(self, tmp_path):
        path = tmp_path / "task.json"
        path.write_text(
            '{"objects": [{"id": "p1", "label": "edge piece", '
            '"neighbors": ["p2", "p3"]}, {"id": "p2", "neighbors": []}]}'
        )
        specs = load_task_definitions(str(path))
        assert specs[0] == TaskObjectSpec("p1", "edge piece", ("p2", "p3"))
        reg = ObjectRegistry(task_specs=specs)
        assert reg.objects["p1"].hint_neighbors == ["p2", "p3"]

    def test_hint_snapshot_only_lists_objects_with_neighbors(self):
        reg = ObjectRegistry(
            task_specs=[TaskObjectSpec("p1", "p1", ("p2",)),
                        TaskObjectSpec("p2", "p2", ())]
        )
        snap = reg.hint_snapshot()
        assert [s["object_id"] for s in snap] == ["p1"]
