import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazehub.geometry import (
    AtInfinity,
    DegenerateConfiguration,
    Homography,
    MarkerDetection,
    MarkerSpec,
    QuorumNotMet,
    TableLayout,
    default_layout,
    estimate_homography,
    layout_from_dict,
    layout_to_dict,
    load_layout,
    map_gaze_to_table,
    projection_px_to_table,
    save_layout,
    table_to_projection_px,
)

# Hand-chosen ground truth with mild perspective; well conditioned over
# the marker region.
GROUND_TRUTH = np.array(
    [
        [1.2, 0.1, 30.0],
        [-0.05, 0.9, 17.0],
        [1e-4, -2e-4, 1.0],
    ]
)


def project(m, pts):
    pts = np.asarray(pts, dtype=float)
    h = (m @ np.column_stack([pts, np.ones(len(pts))]).T).T
    return h[:, :2] / h[:, 2:3]


def detections_from_matrix(m, layout, marker_ids):
    """Forward-project marker corners through the INVERSE of m, so that m
    itself is the scene->table map the estimator should recover."""
    m_inv = np.linalg.inv(m)
    dets = []
    for mid in marker_ids:
        spec = layout.marker_by_id(mid)
        corners = project(m_inv, spec.corners_mm())
        dets.append(
            MarkerDetection(mid, tuple((float(x), float(y)) for x, y in corners))
        )
    return dets


@pytest.fixture
def layout():
    return default_layout()


class TestLayout:
    def test_default_pixel_pitch_matches_published_setup(self, layout):
        pitch_x, pitch_y = layout.pixel_pitch_mm
        assert pitch_x == pytest.approx(0.405, abs=1e-3)
        assert pitch_y == pytest.approx(0.509, abs=1e-3)

    def test_default_layout_has_six_unique_markers(self, layout):
        assert len(layout.markers) == 6
        assert len({m.id for m in layout.markers}) == 6
        assert all(m.side_mm == 85.0 for m in layout.markers)

    def test_marker_corners_are_axis_aligned_square(self):
        spec = MarkerSpec(0, (100.0, 200.0), side_mm=85.0)
        corners = spec.corners_mm()
        assert corners[0] == pytest.approx([57.5, 157.5])
        assert corners[1] == pytest.approx([142.5, 157.5])
        assert corners[2] == pytest.approx([142.5, 242.5])
        assert corners[3] == pytest.approx([57.5, 242.5])

    def test_duplicate_marker_ids_rejected(self):
        with pytest.raises(ValueError):
            TableLayout(markers=(MarkerSpec(1, (0, 0)), MarkerSpec(1, (9, 9))))

    def test_layout_roundtrip_through_file(self, layout, tmp_path):
        path = tmp_path / "table.json"
        save_layout(layout, str(path))
        loaded = load_layout(str(path))
        assert loaded == layout
        assert layout_from_dict(layout_to_dict(layout)) == layout

    def test_layout_hash_stable_and_sensitive(self, layout):
        assert layout.layout_hash() == default_layout().layout_hash()
        other = TableLayout(width_mm=771.0, markers=layout.markers)
        assert other.layout_hash() != layout.layout_hash()


class TestEstimateHomography:
    def test_identity_correspondences_give_identity(self, layout):
        dets = detections_from_matrix(np.eye(3), layout, [0, 1, 2])
        h, rms = estimate_homography(dets, layout)
        assert np.allclose(h.m, np.eye(3), atol=1e-9)
        assert rms < 1e-8

    def test_recovers_known_ground_truth(self, layout):
        dets = detections_from_matrix(GROUND_TRUTH, layout, [0, 1, 2])
        assert sum(len(d.corners_px) for d in dets) == 12
        h, rms = estimate_homography(dets, layout)
        expected = GROUND_TRUTH / GROUND_TRUTH[2, 2]
        assert np.allclose(h.m, expected, atol=1e-6)
        assert rms < 1e-8

    def test_all_six_markers_are_used(self, layout):
        dets = detections_from_matrix(GROUND_TRUTH, layout, [0, 1, 2, 3, 4, 5])
        h, rms = estimate_homography(dets, layout)
        assert np.allclose(h.m, GROUND_TRUTH / GROUND_TRUTH[2, 2], atol=1e-6)

    def test_two_markers_fail_quorum(self, layout):
        dets = detections_from_matrix(np.eye(3), layout, [0, 1])
        with pytest.raises(QuorumNotMet):
            estimate_homography(dets, layout)

    def test_duplicate_ids_do_not_satisfy_quorum(self, layout):
        dets = detections_from_matrix(np.eye(3), layout, [0, 1])
        with pytest.raises(QuorumNotMet):
            estimate_homography(dets + dets, layout)

    def test_collinear_correspondences_degenerate(self, layout):
        # All observed corners on one line cannot pin a projective map.
        dets = [
            MarkerDetection(mid, tuple((float(4 * i + j), 0.0) for j in range(4)))
            for i, mid in enumerate([0, 1, 2])
        ]
        with pytest.raises(DegenerateConfiguration):
            estimate_homography(dets, layout)

    def test_coincident_corners_degenerate(self, layout):
        dets = [
            MarkerDetection(mid, ((5.0, 5.0),) * 4) for mid in (0, 1, 2)
        ]
        with pytest.raises(DegenerateConfiguration):
            estimate_homography(dets, layout)

    def test_unknown_marker_id_rejected(self, layout):
        dets = detections_from_matrix(np.eye(3), layout, [0, 1, 2])
        bad = MarkerDetection(77, dets[0].corners_px)
        with pytest.raises(KeyError):
            estimate_homography([dets[0], dets[1], bad], layout)


class TestMapGaze:
    def test_identity_maps_point_to_itself(self, layout):
        mapped = map_gaze_to_table(Homography.identity(), (385.0, 275.0), layout)
        assert mapped.x_mm == pytest.approx(385.0)
        assert mapped.y_mm == pytest.approx(275.0)
        assert not mapped.out_of_view

    def test_identity_flags_out_of_view(self, layout):
        mapped = map_gaze_to_table(Homography.identity(), (-10.0, 20.0), layout)
        assert (mapped.x_mm, mapped.y_mm) == pytest.approx((-10.0, 20.0))
        assert mapped.out_of_view

    def test_pure_scale_doubles_coordinates(self, layout):
        h = Homography(np.diag([2.0, 2.0, 1.0]))
        mapped = map_gaze_to_table(h, (100.0, 50.0), layout)
        assert (mapped.x_mm, mapped.y_mm) == pytest.approx((200.0, 100.0))

    def test_point_at_infinity_raises(self, layout):
        # Third row maps x=1, y=0 to w=0.
        h = Homography(np.array([[1, 0, 0], [0, 1, 0], [-1.0, 0, 1.0]]))
        with pytest.raises(AtInfinity):
            map_gaze_to_table(h, (1.0, 0.0), layout)

    def test_nonfinite_gaze_rejected(self, layout):
        with pytest.raises(ValueError):
            map_gaze_to_table(Homography.identity(), (math.nan, 0.0), layout)


class TestProjectionScaling:
    def test_full_extent_maps_to_full_resolution(self, layout):
        assert table_to_projection_px((770.0, 550.0), layout) == pytest.approx(
            (1900.0, 1080.0)
        )

    def test_origin_maps_to_origin(self, layout):
        assert table_to_projection_px((0.0, 0.0), layout) == (0.0, 0.0)

    def test_one_pixel_pitch_maps_to_one_pixel(self, layout):
        # 0.405 * 1900 / 770 = 0.999350..., 0.509 * 1080 / 550 = 0.999490...
        x, y = table_to_projection_px((0.405, 0.509), layout)
        assert x == pytest.approx(0.405 * 1900 / 770, rel=1e-12)
        assert y == pytest.approx(0.509 * 1080 / 550, rel=1e-12)
        assert x == pytest.approx(1.0, abs=7e-4)
        assert y == pytest.approx(1.0, abs=6e-4)

    def test_projection_inverse_roundtrip(self, layout):
        p = (123.4, 456.7)
        assert projection_px_to_table(
            table_to_projection_px(p, layout), layout
        ) == pytest.approx(p)

    def test_linearity_midpoint(self, layout):
        a, b = (10.0, 20.0), (500.0, 400.0)
        mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        pa = table_to_projection_px(a, layout)
        pb = table_to_projection_px(b, layout)
        pm = table_to_projection_px(mid, layout)
        assert pm[0] == pytest.approx((pa[0] + pb[0]) / 2)
        assert pm[1] == pytest.approx((pa[1] + pb[1]) / 2)


finite_coord = st.floats(
    min_value=-500.0, max_value=1500.0, allow_nan=False, allow_infinity=False
)


class TestProperties:
    @given(x=finite_coord, y=finite_coord)
    @settings(max_examples=100)
    def test_roundtrip_through_inverse(self, x, y):
        h = Homography(GROUND_TRUTH)
        fwd = h.apply(x, y)
        back = h.inverse().apply(*fwd)
        scale = max(1.0, abs(x), abs(y))
        assert abs(back[0] - x) / scale < 1e-9
        assert abs(back[1] - y) / scale < 1e-9

    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_dlt_exact_on_noise_free_synthetic_truth(self, seed):
        rng = np.random.default_rng(seed)
        angle = rng.uniform(-math.pi, math.pi)
        scale = rng.uniform(0.5, 2.0)
        c, s = scale * math.cos(angle), scale * math.sin(angle)
        m = np.array(
            [
                [c, -s, rng.uniform(-200, 200)],
                [s, c, rng.uniform(-200, 200)],
                [rng.uniform(-2e-4, 2e-4), rng.uniform(-2e-4, 2e-4), 1.0],
            ]
        )
        layout = default_layout()
        dets = detections_from_matrix(m, layout, [0, 1, 2, 3, 4, 5])
        h, rms = estimate_homography(dets, layout)
        assert rms < 1e-8
        assert np.allclose(h.m, m / m[2, 2], atol=1e-6)
