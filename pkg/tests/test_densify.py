import math

import numpy as np
import pytest

from pedcross.densify import (
    DenseTrack,
    TrackRangeError,
    adjust_boxes,
    densify_bundle,
    interpolate_track,
    iou,
    load_dense_tracks,
    match_detections,
    project_box,
    save_dense_tracks,
)
from pedcross.scene import Box2D, Box3D, CameraCalib, PedestrianTrack, normalize_angle

from conftest import make_bundle, simple_calib


def track_from_boxes(boxes, n_frames=None):
    if n_frames is None:
        n_frames = int(round(boxes[-1].timestamp * 10)) + 1
    return PedestrianTrack(track_id="t", keyframe_boxes=boxes,
                           visibility=[True] * n_frames, behavior=None)


def box_at(t, center, yaw=0.0, size=(0.6, 0.6, 1.8)):
    return Box3D(center=center, size=size, yaw=yaw, timestamp=t)


class TestInterpolateTrack:
    def test_linear_center(self):
        track = track_from_boxes([box_at(0.0, (0.0, 0.0, 0.0)),
                                  box_at(0.5, (1.0, 0.0, 0.0))])
        dense = interpolate_track(track, [0.1, 0.2, 0.3, 0.4])
        xs = [f.box3d.center[0] for f in dense.frames]
        assert xs == pytest.approx([0.2, 0.4, 0.6, 0.8])

    def test_yaw_crosses_seam_via_shortest_arc(self):
        y0 = math.radians(170.0)
        y1 = math.radians(-170.0)
        track = track_from_boxes([box_at(0.0, (0.0, 0.0, 0.0), yaw=y0),
                                  box_at(0.5, (0.0, 0.0, 0.0), yaw=y1)])
        dense = interpolate_track(track, [0.25])
        assert dense.frames[0].box3d.yaw == pytest.approx(math.pi)

    def test_single_keyframe_identity(self):
        box = box_at(0.3, (1.0, 0.9, 2.0), yaw=0.4)
        track = track_from_boxes([box], n_frames=4)
        dense = interpolate_track(track, [0.3])
        assert len(dense.frames) == 1
        assert dense.frames[0].box3d == box
        assert dense.frames[0].is_keyframe

    def test_out_of_span_raises(self):
        track = track_from_boxes([box_at(0.0, (0.0, 0.0, 0.0)),
                                  box_at(0.5, (1.0, 0.0, 0.0))])
        with pytest.raises(TrackRangeError, match="outside keyframe span"):
            interpolate_track(track, [0.6])

    def test_keyframes_preserved_exactly(self):
        boxes = [box_at(0.0, (0.0, 0.9, 1.0)), box_at(0.5, (1.0, 0.9, 2.0), yaw=0.3)]
        track = track_from_boxes(boxes)
        dense = interpolate_track(track, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
        assert dense.frames[0].box3d is boxes[0]
        assert dense.frames[5].box3d is boxes[1]
        assert [f.is_keyframe for f in dense.frames] == [True] + [False] * 4 + [True]

    def test_center_linearity_property(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            boxes = [box_at(0.5 * i, tuple(rng.uniform(-20, 20, 3)),
                            yaw=rng.uniform(-math.pi, math.pi))
                     for i in range(3)]
            track = track_from_boxes(boxes)
            grid = [i / 10.0 for i in range(11)]
            dense = interpolate_track(track, grid)
            # any midpoint between neighbors in the same segment is collinear
            for i in (1, 2, 3, 6, 7, 8):
                a = np.array(dense.frames[i - 1].box3d.center)
                b = np.array(dense.frames[i].box3d.center)
                c = np.array(dense.frames[i + 1].box3d.center)
                assert np.abs((a + c) / 2.0 - b).max() < 1e-9

    def test_yaw_step_bounded_by_arc_fraction(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            y0 = rng.uniform(-math.pi, math.pi)
            y1 = rng.uniform(-math.pi, math.pi)
            track = track_from_boxes([box_at(0.0, (0.0, 0.0, 0.0), yaw=y0),
                                      box_at(0.5, (0.0, 0.0, 0.0), yaw=y1)])
            grid = [i / 10.0 for i in range(6)]
            dense = interpolate_track(track, grid)
            arc = abs(normalize_angle(y1 - y0))
            for prev, cur in zip(dense.frames, dense.frames[1:]):
                step = abs(normalize_angle(cur.box3d.yaw - prev.box3d.yaw))
                assert step <= arc / 5 + 1e-9


def oracle_project(box, calib):
    """Independent per-corner pinhole projection (scalar math)."""
    w, l, h = box.size
    cx, cy, cz = box.center
    cos_y, sin_y = math.cos(box.yaw), math.sin(box.yaw)
    corners = []
    for sl in (-0.5, 0.5):
        for sw in (-0.5, 0.5):
            for sh in (-0.5, 0.5):
                px = cx + sl * l * cos_y - sw * w * sin_y
                py = cy + sh * h
                pz = cz + sl * l * sin_y + sw * w * cos_y
                corners.append((px, py, pz))
    k = calib.intrinsics
    r = calib.rotation
    t = calib.translation
    us, vs = [], []
    for p in corners:
        cam = [sum(r[i][j] * p[j] for j in range(3)) + t[i] for i in range(3)]
        if cam[2] > 1e-6:
            us.append(k[0][0] * cam[0] / cam[2] + k[0][2])
            vs.append(k[1][1] * cam[1] / cam[2] + k[1][2])
    if not us:
        return None
    iw, ih = calib.image_size
    x0 = min(max(min(us), 0.0), float(iw))
    x1 = min(max(max(us), 0.0), float(iw))
    y0 = min(max(min(vs), 0.0), float(ih))
    y1 = min(max(max(vs), 0.0), float(ih))
    if x0 >= x1 or y0 >= y1:
        return None
    return (x0, y0, x1, y1)


def random_projection_case(rng, aimed: bool):
    """Random calibration and box; ``aimed`` places the box near the axis."""
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    rotation = q.T
    cam_pos = rng.uniform(-5, 5, 3)
    calib = CameraCalib(
        intrinsics=np.array([[rng.uniform(200, 800), 0.0, 320.0],
                             [0.0, rng.uniform(200, 800), 240.0],
                             [0.0, 0.0, 1.0]]),
        rotation=rotation,
        translation=-rotation @ cam_pos,
        image_size=(640, 480),
    )
    if aimed:
        in_cam = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2),
                           rng.uniform(3, 20)])
        center = tuple(cam_pos + rotation.T @ in_cam)
    else:
        center = tuple(rng.uniform(-15, 15, 3))
    box = Box3D(center=center, size=tuple(rng.uniform(0.2, 3.0, 3)),
                yaw=rng.uniform(-math.pi, math.pi), timestamp=0.0)
    return calib, box


def camera_straight_ahead(focal=500.0, width=640, height=480) -> CameraCalib:
    return CameraCalib(
        intrinsics=np.array([[focal, 0.0, width / 2.0],
                             [0.0, focal, height / 2.0],
                             [0.0, 0.0, 1.0]]),
        rotation=np.eye(3),
        translation=np.zeros(3),
        image_size=(width, height),
    )


class TestProjectBox:
    def test_unit_cube_on_axis_matches_oracle(self):
        # camera frame == global frame: box 10 m ahead on the optical axis
        calib = camera_straight_ahead()
        box = Box3D(center=(0.0, 0.0, 10.0), size=(1.0, 1.0, 1.0), yaw=0.0,
                    timestamp=0.0)
        got = project_box(box, calib)
        half = 500.0 * 0.5 / 9.5  # near-face corners dominate the hull
        assert got.x_min == pytest.approx(320.0 - half, abs=1e-9)
        assert got.x_max == pytest.approx(320.0 + half, abs=1e-9)
        assert got.y_min == pytest.approx(240.0 - half, abs=1e-9)
        assert got.y_max == pytest.approx(240.0 + half, abs=1e-9)
        expected = oracle_project(box, calib)
        assert (got.x_min, got.y_min, got.x_max, got.y_max) == pytest.approx(expected)

    def test_behind_camera_is_absent(self):
        calib = camera_straight_ahead()
        box = Box3D(center=(0.0, 0.0, -10.0), size=(1.0, 1.0, 1.0), yaw=0.0,
                    timestamp=0.0)
        assert project_box(box, calib) is None

    def test_straddling_edge_is_clipped(self):
        calib = camera_straight_ahead()
        box = Box3D(center=(6.5, 0.0, 10.0), size=(1.0, 1.0, 1.0), yaw=0.0,
                    timestamp=0.0)
        got = project_box(box, calib)
        # unclipped hull intersected with the image rectangle
        unclipped_min = 320.0 + 500.0 * 6.0 / 10.5
        assert got.x_max == 640.0
        assert got.x_min == pytest.approx(unclipped_min, abs=1e-9)

    def test_fully_outside_image_is_absent(self):
        calib = camera_straight_ahead()
        box = Box3D(center=(50.0, 0.0, 5.0), size=(1.0, 1.0, 1.0), yaw=0.0,
                    timestamp=0.0)
        assert project_box(box, calib) is None

    def test_random_cases_match_oracle(self):
        rng = np.random.default_rng(2)
        present = 0
        for trial in range(300):
            calib, box = random_projection_case(rng, aimed=trial % 2 == 0)
            got = project_box(box, calib)
            expected = oracle_project(box, calib)
            if expected is None:
                assert got is None
            else:
                assert got is not None
                present += 1
                assert (got.x_min, got.y_min, got.x_max, got.y_max) == pytest.approx(
                    expected, abs=1e-6)
        assert present > 100  # the sweep must actually exercise projections


class TestMatchDetections:
    def test_identical_sets_match_one_to_one(self):
        boxes = [Box2D(0, 0, 10, 10), Box2D(20, 20, 30, 30)]
        assert match_detections(boxes, list(boxes), 0.3) == [0, 1]

    def test_no_overlap_matches_nothing(self):
        a = [Box2D(0, 0, 10, 10)]
        b = [Box2D(50, 50, 60, 60)]
        assert match_detections(a, b, 0.3) == [None]

    def test_greedy_agrees_with_exhaustive_assignment(self):
        # Two projections competing for three detections. 10-wide boxes
        # shifted horizontally by s have IoU (10-s)/(10+s), so the IoU
        # matrix is approximately {(.8, .4, 0), (.7, .75, .1)}.
        def strip(x):
            return Box2D(x, 0.0, x + 10.0, 10.0)

        def shift_for(target_iou):
            return 10.0 * (1.0 - target_iou) / (1.0 + target_iou)

        p0 = strip(0.0)
        p1 = strip(shift_for(0.8) + shift_for(0.7))
        dets = [strip(shift_for(0.8)),
                strip(p1.x_min + shift_for(0.75)),
                strip(p1.x_min + shift_for(0.1))]
        ious = [[iou(p, d) for d in dets] for p in (p0, p1)]
        assert ious[0][0] == pytest.approx(0.8)
        assert ious[1][1] == pytest.approx(0.75)
        assert ious[1][0] == pytest.approx(0.7)
        assert ious[0][2] == 0.0

        got = match_detections([p0, p1], dets, 0.3)
        assert got == [0, 1]

        # brute force over all one-to-one assignments, maximizing total IoU
        best_total = -1.0
        options = [None, 0, 1, 2]
        for m0 in options:
            for m1 in options:
                if m0 is not None and m0 == m1:
                    continue
                total = sum(
                    ious[i][m] for i, m in enumerate((m0, m1))
                    if m is not None and ious[i][m] >= 0.3
                )
                best_total = max(best_total, total)
        greedy_total = sum(ious[i][m] for i, m in enumerate(got) if m is not None)
        assert greedy_total == pytest.approx(best_total)

    def test_partial_injection_property(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            def rand_boxes(n):
                out = []
                for _ in range(n):
                    x, y = rng.uniform(0, 80, 2)
                    w, h = rng.uniform(5, 30, 2)
                    out.append(Box2D(x, y, x + w, y + h))
                return out

            matches = match_detections(rand_boxes(rng.integers(1, 8)),
                                       rand_boxes(rng.integers(0, 8)), 0.3)
            used = [m for m in matches if m is not None]
            assert len(used) == len(set(used))

    def test_threshold_bounds_validated(self):
        with pytest.raises(ValueError):
            match_detections([], [], 0.0)


class TestAdjustBoxes:
    def make_dense(self, projected):
        frames = []
        from pedcross.densify import DenseFrame
        for i, p in enumerate(projected):
            frames.append(DenseFrame(i, box_at(i / 10.0, (0.0, 0.9, 5.0)), p, None,
                                     is_keyframe=(i % 5 == 0)))
        return DenseTrack(track_id="t", frames=frames)

    def test_zero_blend_is_identity(self):
        proj = [Box2D(10, 10, 30, 30)] * 3
        dense = self.make_dense(proj)
        dets = [[Box2D(14, 10, 34, 30)] for _ in range(3)]
        out = adjust_boxes(dense, dets, 0.3, blend=0.0)
        for f in out.frames:
            assert f.adjusted == f.projected

    def test_full_blend_equals_detection(self):
        proj = [Box2D(10, 10, 30, 30)] * 2
        dense = self.make_dense(proj)
        det = Box2D(14, 10, 34, 30)
        out = adjust_boxes(dense, [[det], [det]], 0.3, blend=1.0)
        assert out.frames[0].adjusted == proj[0]  # keyframe never adjusted
        assert out.frames[1].adjusted == Box2D(14.0, 10.0, 34.0, 30.0)

    def test_half_blend_worked_example(self):
        proj = [Box2D(10, 10, 30, 30)] * 2
        dense = self.make_dense(proj)
        out = adjust_boxes(dense, [[], [Box2D(14, 10, 34, 30)]], 0.3, blend=0.5)
        got = out.frames[1].adjusted
        assert (got.x_min, got.y_min, got.x_max, got.y_max) == (12.0, 10.0, 32.0, 30.0)

    def test_unmatched_carries_projected(self):
        proj = [Box2D(10, 10, 30, 30)] * 2
        dense = self.make_dense(proj)
        out = adjust_boxes(dense, [[], []], 0.3, blend=0.5)
        assert all(f.adjusted == f.projected for f in out.frames)


class TestDensifyBundle:
    def test_static_pedestrian_constant_boxes(self):
        center = (12.0, 0.9, 2.0)
        bundle = make_bundle(n_frames=6, keyframe_centers=[center, center])
        dense = densify_bundle(bundle)[0]
        assert len(dense.frames) == 6
        for f in dense.frames:
            assert f.box3d.center == pytest.approx(center)
            assert f.box3d.size == bundle.tracks[0].keyframe_boxes[0].size

    def test_two_keyframes_give_six_frames(self):
        bundle = make_bundle(n_frames=6)
        dense = densify_bundle(bundle)[0]
        assert dense.frame_indices() == [0, 1, 2, 3, 4, 5]

    def test_perfect_detections_leave_projection_unchanged(self, synthetic_corpus):
        bundles, _ = synthetic_corpus
        bundle = bundles[0]
        plain = densify_bundle(bundle, blend=0.5)
        # replace detections with the exact interpolated projections
        perfect = [[] for _ in range(bundle.frame_count)]
        for track in plain:
            for f in track.frames:
                if f.projected is not None:
                    perfect[f.frame_index].append(f.projected)
        bundle_perfect = type(bundle)(
            bundle_id=bundle.bundle_id,
            tracks=bundle.tracks,
            ego_states=bundle.ego_states,
            calib_per_frame=bundle.calib_per_frame,
            map_layers=bundle.map_layers,
            image_paths=bundle.image_paths,
            detections=perfect,
            root=bundle.root,
        )
        adjusted = densify_bundle(bundle_perfect, blend=0.5)
        for track in adjusted:
            for f in track.frames:
                if f.projected is None:
                    assert f.adjusted is None
                else:
                    assert f.adjusted.x_min == pytest.approx(f.projected.x_min)
                    assert f.adjusted.x_max == pytest.approx(f.projected.x_max)
                    assert f.adjusted.y_min == pytest.approx(f.projected.y_min)
                    assert f.adjusted.y_max == pytest.approx(f.projected.y_max)

    def test_deterministic(self, synthetic_corpus):
        bundles, _ = synthetic_corpus
        a = densify_bundle(bundles[0])
        b = densify_bundle(bundles[0])
        for ta, tb in zip(a, b):
            assert ta.frames == tb.frames

    def test_round_trip_serialization(self, tmp_path, synthetic_corpus):
        bundles, _ = synthetic_corpus
        dense = densify_bundle(bundles[0])
        path = tmp_path / "dense_tracks.json"
        save_dense_tracks(dense, path)
        loaded = load_dense_tracks(path)
        assert [t.track_id for t in loaded] == [t.track_id for t in dense]
        for ta, tb in zip(dense, loaded):
            for fa, fb in zip(ta.frames, tb.frames):
                assert fa.frame_index == fb.frame_index
                assert fa.is_keyframe == fb.is_keyframe
                assert fa.box3d.center == pytest.approx(fb.box3d.center, abs=1e-7)
