"""Synthetic scene-bundle generator.

Builds a deterministic desk-scale corpus: a straight road with sidewalks
and periodic crosswalks, an ego vehicle driving at constant speed, and
pedestrians walking along the sidewalks. Crossing pedestrians angle
toward the curb from the start, step into the roadway partway through the
bundle (their crossing interval and critical frame are derived from the
simulated positions, so the labels are consistent by construction), and
keep crossing; the rest walk parallel to the road.

Scene frames are grayscale replicated to 3 channels: flat background with
each visible pedestrian drawn as a bright rectangle at its projected 2D
box, so the crossing signal is learnable from images as well as from
trajectories. Detections are the projected true boxes plus seeded
Gaussian pixel jitter (sigma 2 px).
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .densify import project_box
from .scene import (
    BehaviorRecord,
    Box2D,
    Box3D,
    CameraCalib,
    EgoState,
    MapLayer,
    PedestrianTrack,
    SceneBundle,
    load_corpus,
    normalize_angle,
    save_bundle,
)

ROAD_HALF_WIDTH = 3.5
SIDEWALK_OUTER = 7.0
DETECTION_NOISE_PX = 2.0
CAMERA_HEIGHT = 1.6


@dataclass(frozen=True)
class SyntheticSpec:
    n_bundles: int = 4
    frames_per_bundle: int = 60
    peds_per_bundle: int = 4
    crossing_fraction: float = 0.4
    image_side: int = 64
    map_extent: float = 120.0  # generated road length, meters
    seed: int = 0

    def __post_init__(self):
        if min(self.n_bundles, self.frames_per_bundle, self.peds_per_bundle,
               self.image_side) < 1:
            raise ValueError("all synthetic counts must be >= 1")
        if not 0.0 <= self.crossing_fraction <= 1.0:
            raise ValueError("crossing_fraction must be in [0, 1]")


@dataclass
class _Walker:
    track_id: str
    crosses: bool
    x0: float
    z0: float
    vx: float
    vz_approach: float
    turn_time: float  # reaches the curb here; crossing legs start after
    size: tuple

    def position(self, t: float) -> tuple[float, float]:
        if not self.crosses or t <= self.turn_time:
            return (self.x0 + self.vx * t, self.z0 + self.vz_approach * t)
        x = self.x0 + self.vx * t
        z_turn = self.z0 + self.vz_approach * self.turn_time
        cross_speed = 1.4 * (-1.0 if self.z0 > 0 else 1.0)
        return (x, z_turn + cross_speed * (t - self.turn_time))

    def yaw(self, t: float) -> float:
        if not self.crosses or t <= self.turn_time:
            vz = self.vz_approach
        else:
            vz = 1.4 * (-1.0 if self.z0 > 0 else 1.0)
        return normalize_angle(math.atan2(vz, self.vx))


def _camera_calib(ego_pos, heading: float, image_side: int) -> CameraCalib:
    fwd = np.array([math.cos(heading), 0.0, math.sin(heading)])
    right = np.array([-math.sin(heading), 0.0, math.cos(heading)])
    down = np.cross(fwd, right)  # (0, -1, 0) for heading 0
    rotation = np.stack([right, down, fwd])
    cam_pos = np.array(ego_pos) + np.array([0.0, CAMERA_HEIGHT, 0.0])
    translation = -rotation @ cam_pos
    f = 0.9 * image_side
    intrinsics = np.array(
        [[f, 0.0, image_side / 2.0], [0.0, f, image_side / 2.0], [0.0, 0.0, 1.0]]
    )
    return CameraCalib(
        intrinsics=intrinsics,
        rotation=rotation,
        translation=translation,
        image_size=(image_side, image_side),
    )


def _map_layers(extent: float) -> list[MapLayer]:
    x0, x1 = -20.0, extent + 40.0

    def rect(xa, xb, za, zb):
        return [(xa, za), (xb, za), (xb, zb), (xa, zb)]

    drivable = MapLayer(
        "drivable_area", [rect(x0, x1, -ROAD_HALF_WIDTH, ROAD_HALF_WIDTH)]
    )
    sidewalks = MapLayer(
        "sidewalk",
        [
            rect(x0, x1, ROAD_HALF_WIDTH, SIDEWALK_OUTER),
            rect(x0, x1, -SIDEWALK_OUTER, -ROAD_HALF_WIDTH),
        ],
    )
    crosswalks = MapLayer(
        "crosswalk",
        [
            rect(x - 1.5, x + 1.5, -ROAD_HALF_WIDTH, ROAD_HALF_WIDTH)
            for x in np.arange(30.0, extent + 1e-9, 30.0)
        ],
    )
    return [drivable, crosswalks, sidewalks]


def _true_box(walker: _Walker, t: float) -> Box3D:
    x, z = walker.position(t)
    w, l, h = walker.size
    return Box3D(center=(x, h / 2.0, z), size=walker.size,
                 yaw=walker.yaw(t), timestamp=t)


def _render_frame(walkers, boxes_2d, image_side: int) -> np.ndarray:
    gray = np.full((image_side, image_side), 12, dtype=np.uint8)
    order = sorted(range(len(walkers)), key=lambda i: -boxes_2d[i].area()
                   if boxes_2d[i] is not None else 0.0)
    for i in order:
        box = boxes_2d[i]
        if box is None:
            continue
        x0 = max(0, int(math.floor(box.x_min)))
        x1 = min(image_side, int(math.ceil(box.x_max)))
        y0 = max(0, int(math.floor(box.y_min)))
        y1 = min(image_side, int(math.ceil(box.y_max)))
        if x1 > x0 and y1 > y0:
            gray[y0:y1, x0:x1] = 150 + 18 * (i % 6)
    return np.repeat(gray[:, :, None], 3, axis=2)


def _gen_bundle(bundle_id: str, spec: SyntheticSpec, rng: np.random.Generator):
    frames = spec.frames_per_bundle
    ego_speed = rng.uniform(5.0, 7.0)
    timestamps = [i / 10.0 for i in range(frames)]

    ego_states = [
        EgoState(
            position=(ego_speed * t, 0.0, 0.0),
            velocity=(ego_speed, 0.0, 0.0),
            heading=0.0,
            timestamp=t,
        )
        for t in timestamps
    ]
    calibs = [
        _camera_calib(e.position, e.heading, spec.image_side) for e in ego_states
    ]
    layers = _map_layers(spec.map_extent)

    n_cross = int(math.floor(spec.crossing_fraction * spec.peds_per_bundle + 0.5))
    max_turn = max(2.8, min(4.2, (frames - 12) / 10.0))
    walkers = []
    for p in range(spec.peds_per_bundle):
        crosses = p < n_cross
        side = 1.0 if p % 2 == 0 else -1.0
        z0 = side * rng.uniform(5.5, 6.5)
        turn_time = rng.uniform(2.8, max_turn) if crosses else 0.0
        x0 = rng.uniform(30.0, 48.0) if crosses else rng.uniform(20.0, 55.0)
        vx = rng.uniform(0.8, 1.4)
        vz_approach = (
            side * (ROAD_HALF_WIDTH + 0.05 - abs(z0)) / turn_time if crosses else 0.0
        )
        walkers.append(
            _Walker(
                track_id=f"ped_{p:03d}",
                crosses=crosses,
                x0=x0,
                z0=z0,
                vx=vx,
                vz_approach=vz_approach,
                turn_time=turn_time,
                size=(rng.uniform(0.5, 0.7), rng.uniform(0.5, 0.7),
                      rng.uniform(1.6, 1.9)),
            )
        )

    last_keyframe = 5 * ((frames - 1) // 5)
    tracks = []
    all_true_boxes = []  # [ped][frame] -> Box3D
    all_projected = []  # [ped][frame] -> Box2D | None
    for walker in walkers:
        true_boxes = [_true_box(walker, t) for t in timestamps]
        projected = [
            project_box(true_boxes[i], calibs[i]) for i in range(frames)
        ]
        visibility = [
            p is not None and p.area() >= 4.0 for p in projected
        ]
        keyframes = [true_boxes[i] for i in range(0, last_keyframe + 1, 5)]
        in_road = [abs(b.center[2]) <= ROAD_HALF_WIDTH for b in true_boxes]
        intervals = []
        start = None
        for i, inside in enumerate(in_road):
            if inside and start is None:
                start = i
            elif not inside and start is not None:
                intervals.append((start, i - 1))
                start = None
        if start is not None:
            intervals.append((start, frames - 1))
        will_cross = bool(intervals)
        behavior = BehaviorRecord(
            track_id=walker.track_id,
            will_cross=will_cross,
            crossing_intervals=intervals,
            critical_frame=intervals[0][0] if will_cross else None,
        )
        tracks.append(
            PedestrianTrack(
                track_id=walker.track_id,
                keyframe_boxes=keyframes,
                visibility=visibility,
                behavior=behavior,
            )
        )
        all_true_boxes.append(true_boxes)
        all_projected.append(projected)

    detections = []
    images = []
    for i in range(frames):
        frame_boxes = [all_projected[p][i] for p in range(len(walkers))]
        row = []
        for p, box in enumerate(frame_boxes):
            if box is None or not tracks[p].visibility[i]:
                continue
            jitter = rng.normal(0.0, DETECTION_NOISE_PX, size=4)
            w, h = calibs[i].image_size
            x_min = min(max(box.x_min + jitter[0], 0.0), float(w))
            y_min = min(max(box.y_min + jitter[1], 0.0), float(h))
            x_max = min(max(box.x_max + jitter[2], 0.0), float(w))
            y_max = min(max(box.y_max + jitter[3], 0.0), float(h))
            if x_max - x_min < 1.0 or y_max - y_min < 1.0:
                continue
            row.append(Box2D(x_min, y_min, x_max, y_max,
                             confidence=float(rng.uniform(0.5, 0.99))))
        detections.append(row)
        images.append(_render_frame(walkers, frame_boxes, spec.image_side))

    bundle = SceneBundle(
        bundle_id=bundle_id,
        tracks=tracks,
        ego_states=ego_states,
        calib_per_frame=calibs,
        map_layers=layers,
        image_paths=[f"images/frame_{i:05d}.ppm" for i in range(frames)],
        detections=detections,
    )
    return bundle, images


def gen_synthetic(spec: SyntheticSpec, out_dir) -> list[SceneBundle]:
    """Write a synthetic corpus under ``out_dir`` and return it loaded.

    Returning the loaded corpus (rather than the in-memory construction)
    guarantees the caller sees exactly the 9-significant-digit values the
    files hold.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_bundles)
    for k in range(spec.n_bundles):
        rng = np.random.default_rng(seeds[k])
        bundle_id = f"bundle_{k:04d}"
        bundle, images = _gen_bundle(bundle_id, spec, rng)
        save_bundle(bundle, out / bundle_id, images=images)
    return load_corpus(out)
