import math

import numpy as np
import pytest

from pedcross.densify import densify_bundle
from pedcross.model import CorpusContext
from pedcross.sampling import collect_samples
from pedcross.scene import (
    BehaviorRecord,
    Box3D,
    CameraCalib,
    EgoState,
    MapLayer,
    PedestrianTrack,
    SceneBundle,
)
from pedcross.synthetic import SyntheticSpec, gen_synthetic


def simple_calib(ego_pos=(0.0, 0.0, 0.0), heading=0.0, image_side=64,
                 focal=None) -> CameraCalib:
    """Forward-center pinhole camera mounted 1.6 m above the ego position."""
    fwd = np.array([math.cos(heading), 0.0, math.sin(heading)])
    right = np.array([-math.sin(heading), 0.0, math.cos(heading)])
    down = np.cross(fwd, right)
    rotation = np.stack([right, down, fwd])
    cam_pos = np.array(ego_pos) + np.array([0.0, 1.6, 0.0])
    f = focal if focal is not None else 0.9 * image_side
    intrinsics = np.array(
        [[f, 0.0, image_side / 2.0], [0.0, f, image_side / 2.0], [0.0, 0.0, 1.0]]
    )
    return CameraCalib(intrinsics=intrinsics, rotation=rotation,
                       translation=-rotation @ cam_pos,
                       image_size=(image_side, image_side))


def make_bundle(n_frames=6, bundle_id="test_bundle", keyframe_centers=None,
                will_cross=False, critical_frame=None, intervals=(),
                visibility=None, image_side=64):
    """Minimal in-memory bundle: one track, keyframes every 5th frame."""
    timestamps = [i / 10.0 for i in range(n_frames)]
    ego = [EgoState(position=(0.0, 0.0, 0.0), velocity=(0.0, 0.0, 0.0),
                    heading=0.0, timestamp=t) for t in timestamps]
    calibs = [simple_calib(image_side=image_side) for _ in range(n_frames)]
    last_kf = 5 * ((n_frames - 1) // 5)
    kf_frames = list(range(0, last_kf + 1, 5))
    if keyframe_centers is None:
        keyframe_centers = [(10.0 + 0.1 * i, 0.9, 1.0) for i in kf_frames]
    boxes = [
        Box3D(center=c, size=(0.6, 0.6, 1.8), yaw=0.0, timestamp=i / 10.0)
        for c, i in zip(keyframe_centers, kf_frames)
    ]
    if visibility is None:
        visibility = [True] * n_frames
    behavior = BehaviorRecord(
        track_id="ped_000",
        will_cross=will_cross,
        crossing_intervals=list(intervals),
        critical_frame=critical_frame,
    )
    track = PedestrianTrack(track_id="ped_000", keyframe_boxes=boxes,
                            visibility=visibility, behavior=behavior)
    layers = [MapLayer("drivable_area",
                       [[(-50.0, -3.5), (200.0, -3.5), (200.0, 3.5), (-50.0, 3.5)]])]
    return SceneBundle(
        bundle_id=bundle_id,
        tracks=[track],
        ego_states=ego,
        calib_per_frame=calibs,
        map_layers=layers,
        image_paths=[f"images/frame_{i:05d}.ppm" for i in range(n_frames)],
        detections=[[] for _ in range(n_frames)],
    )


def blank_images(n_frames, image_side=64):
    return [np.full((image_side, image_side, 3), 12, dtype=np.uint8)
            for _ in range(n_frames)]


DEFAULT_SPEC = SyntheticSpec(
    n_bundles=3,
    frames_per_bundle=60,
    peds_per_bundle=4,
    crossing_fraction=0.5,
    image_side=64,
    map_extent=120.0,
    seed=7,
)


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    bundles = gen_synthetic(DEFAULT_SPEC, root)
    return bundles, root


@pytest.fixture(scope="session")
def corpus_ctx(synthetic_corpus):
    bundles, _ = synthetic_corpus
    return CorpusContext.from_corpus(bundles)


@pytest.fixture(scope="session")
def all_samples(synthetic_corpus):
    bundles, _ = synthetic_corpus
    stubs = []
    for b in bundles:
        stubs.extend(collect_samples(b, densify_bundle(b)))
    return stubs


@pytest.fixture(scope="session")
def overfit_samples(all_samples):
    pos = [s for s in all_samples if s.label][:8]
    neg = [s for s in all_samples if not s.label][:8]
    assert len(pos) == 8 and len(neg) == 8
    return pos + neg
