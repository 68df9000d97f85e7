"""Scene-bundle data model: domain types, on-disk format, validation, stats.

Coordinate conventions used throughout the package:

* Global frame: ``x`` and ``z`` span the ground plane, ``y`` points up.
  Yaw is the rotation about the vertical (y) axis, measured from +x
  toward +z and normalized to ``(-pi, pi]``.
* Camera frame: ``z`` forward (depth), ``x`` right, ``y`` down; the
  per-frame extrinsics map global to camera, ``p_cam = R @ p + t``.
* Distances in meters, angles in radians, timestamps in seconds. Frames
  live on a 10 Hz grid (0.1 s spacing); keyframes carry the original
  human annotations at 2 Hz (0.5 s spacing).

A bundle directory holds UTF-8 JSON metadata plus binary P6 PPM frames:

    meta.json        bundle_id, frame_count
    tracks.json      pedestrian tracks (keyframe 3D boxes, visibility)
    ego.json         per-frame ego states
    calib.json       per-frame camera calibration
    map.json         semantic map polygon layers
    detections.json  per-frame external 2D detections
    behavior.json    crossing labels per track
    images/frame_%05d.ppm

All float fields on disk use 9-significant-digit decimal text (see
:mod:`pedcross.jsonio`), so save-then-load is bit-exact for every bundle
the loader has produced.

Structural invariants (grids, shapes, geometry) are enforced at load and
raise :class:`BundleValidationError`. Behavioral-label consistency is
checked by :func:`validate_labels`, which collects violations as data so
a dirty corpus can be reported in full rather than failing on the first
bad record.
"""

import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import jsonio

GRID_DT = 0.1
KEYFRAME_DT = 0.5
TIME_TOL = 1e-6

LAYER_KINDS = ("drivable_area", "crosswalk", "sidewalk")

_BUNDLE_FILES = (
    "meta.json",
    "tracks.json",
    "ego.json",
    "calib.json",
    "map.json",
    "detections.json",
    "behavior.json",
)


class BundleLoadError(RuntimeError):
    """A bundle directory is missing or unreadable."""


class BundleValidationError(ValueError):
    """A loaded field violates a structural invariant."""


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = a % (2.0 * math.pi)
    if r > math.pi:
        r -= 2.0 * math.pi
    return r


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box in the global frame.

    ``size`` is (width, length, height): width spans the lateral axis,
    length the heading axis, height the vertical.
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float
    timestamp: float

    def corners(self) -> np.ndarray:
        """The 8 box corners, shape (8, 3)."""
        w, l, h = self.size
        fwd = np.array([math.cos(self.yaw), 0.0, math.sin(self.yaw)])
        lat = np.array([-math.sin(self.yaw), 0.0, math.cos(self.yaw)])
        up = np.array([0.0, 1.0, 0.0])
        c = np.array(self.center)
        out = np.empty((8, 3))
        i = 0
        for sl in (-0.5, 0.5):
            for sw in (-0.5, 0.5):
                for sh in (-0.5, 0.5):
                    out[i] = c + sl * l * fwd + sw * w * lat + sh * h * up
                    i += 1
        return out


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned image-plane box, pixel coordinates.

    Ground-truth and derived boxes carry confidence 1.0; detector boxes
    keep the detector's score.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    confidence: float = 1.0

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height


@dataclass
class CameraCalib:
    """Zero-skew pinhole camera with per-frame global-to-camera extrinsics."""

    intrinsics: np.ndarray  # 3x3
    rotation: np.ndarray  # 3x3, global -> camera
    translation: np.ndarray  # 3-vector, meters
    image_size: tuple[int, int]  # (width, height), pixels


@dataclass(frozen=True)
class EgoState:
    position: tuple[float, float, float]
    velocity: tuple[float, float, float]
    heading: float
    timestamp: float


@dataclass
class BehaviorRecord:
    track_id: str
    will_cross: bool
    crossing_intervals: list[tuple[int, int]]
    critical_frame: Optional[int]


@dataclass
class PedestrianTrack:
    track_id: str
    keyframe_boxes: list[Box3D]
    visibility: list[bool]  # per 10 Hz bundle frame, forward-center camera
    behavior: Optional[BehaviorRecord] = None

    def keyframe_timestamps(self) -> list[float]:
        return [b.timestamp for b in self.keyframe_boxes]

    def span_frame_count(self) -> int:
        """Number of 10 Hz grid frames between first and last keyframe."""
        t0 = self.keyframe_boxes[0].timestamp
        t1 = self.keyframe_boxes[-1].timestamp
        return int(round((t1 - t0) / GRID_DT)) + 1


@dataclass
class MapLayer:
    layer_kind: str
    polygons: list[list[tuple[float, float]]]  # closed (x, z) rings, global meters


@dataclass
class SceneBundle:
    bundle_id: str
    tracks: list[PedestrianTrack]
    ego_states: list[EgoState]
    calib_per_frame: list[CameraCalib]
    map_layers: list[MapLayer]
    image_paths: list[str]  # relative to root
    detections: list[list[Box2D]]
    root: Optional[Path] = None

    @property
    def frame_count(self) -> int:
        return len(self.ego_states)

    def timestamps(self) -> list[float]:
        return [e.timestamp for e in self.ego_states]

    def image_path(self, frame: int) -> Path:
        if self.root is None:
            raise BundleLoadError(f"bundle {self.bundle_id} has no on-disk root")
        return self.root / self.image_paths[frame]


# ---------------------------------------------------------------------------
# geometric validation helpers


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper intersection of open segments (shared endpoints excluded)."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _polygon_self_intersects(poly) -> bool:
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = poly[j], poly[(j + 1) % n]
            if _segments_intersect(a1, a2, b1, b2):
                return True
    return False


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise BundleValidationError(message)


def _validate_box3d(box: Box3D, where: str) -> None:
    _check(all(s > 0 for s in box.size), f"{where}: size components must be > 0")
    _check(-math.pi < box.yaw <= math.pi, f"{where}: yaw outside (-pi, pi]")


def _validate_calib(calib: CameraCalib, where: str) -> None:
    k = calib.intrinsics
    _check(k.shape == (3, 3), f"{where}: intrinsics must be 3x3")
    _check(k[0, 0] > 0 and k[1, 1] > 0, f"{where}: focal entries must be positive")
    _check(k[0, 1] == 0.0, f"{where}: nonzero skew not supported")
    r = calib.rotation
    _check(r.shape == (3, 3), f"{where}: rotation must be 3x3")
    _check(
        np.allclose(r @ r.T, np.eye(3), atol=1e-6),
        f"{where}: rotation not orthonormal within 1e-6",
    )
    _check(
        abs(float(np.linalg.det(r)) - 1.0) <= 1e-6,
        f"{where}: rotation determinant not 1 within 1e-6",
    )
    w, h = calib.image_size
    _check(w >= 1 and h >= 1, f"{where}: image size must be positive")


def _clip_box2d(b: Box2D, image_size, where: str) -> Box2D:
    w, h = image_size
    clipped = Box2D(
        x_min=min(max(b.x_min, 0.0), float(w)),
        y_min=min(max(b.y_min, 0.0), float(h)),
        x_max=min(max(b.x_max, 0.0), float(w)),
        y_max=min(max(b.y_max, 0.0), float(h)),
        confidence=b.confidence,
    )
    _check(
        clipped.x_min < clipped.x_max and clipped.y_min < clipped.y_max,
        f"{where}: degenerate box after clipping to image bounds",
    )
    _check(0.0 <= b.confidence <= 1.0, f"{where}: confidence outside [0, 1]")
    return clipped


# ---------------------------------------------------------------------------
# JSON codecs


def _box3d_to_json(b: Box3D) -> dict:
    return {
        "center": list(b.center),
        "size": list(b.size),
        "yaw": b.yaw,
        "timestamp": b.timestamp,
    }


def _box3d_from_json(d: dict) -> Box3D:
    return Box3D(
        center=tuple(float(v) for v in d["center"]),
        size=tuple(float(v) for v in d["size"]),
        yaw=normalize_angle(float(d["yaw"])),
        timestamp=float(d["timestamp"]),
    )


def _box2d_to_json(b: Box2D) -> dict:
    return {
        "x_min": b.x_min,
        "y_min": b.y_min,
        "x_max": b.x_max,
        "y_max": b.y_max,
        "confidence": b.confidence,
    }


def _box2d_from_json(d: dict) -> Box2D:
    return Box2D(
        x_min=float(d["x_min"]),
        y_min=float(d["y_min"]),
        x_max=float(d["x_max"]),
        y_max=float(d["y_max"]),
        confidence=float(d["confidence"]),
    )


# ---------------------------------------------------------------------------
# load / save


def load_bundle(path) -> SceneBundle:
    """Load and structurally validate one bundle directory."""
    root = Path(path)
    if not root.is_dir():
        raise BundleLoadError(f"not a bundle directory: {root}")
    for name in _BUNDLE_FILES:
        if not (root / name).is_file():
            raise BundleLoadError(f"{root}: missing file: {name}")

    meta = jsonio.load(root / "meta.json")
    bundle_id = str(meta["bundle_id"])
    frame_count = int(meta["frame_count"])
    _check(frame_count >= 1, f"{bundle_id}: frame_count must be >= 1")

    ego_states = []
    raw_ego = jsonio.load(root / "ego.json")
    for i, d in enumerate(raw_ego):
        ego_states.append(
            EgoState(
                position=tuple(float(v) for v in d["position"]),
                velocity=tuple(float(v) for v in d["velocity"]),
                heading=float(d["heading"]),
                timestamp=float(d["timestamp"]),
            )
        )
    _check(
        len(ego_states) == frame_count,
        f"{bundle_id}: ego.json has {len(ego_states)} frames, meta says {frame_count}",
    )
    for i in range(1, frame_count):
        dt = ego_states[i].timestamp - ego_states[i - 1].timestamp
        _check(dt > 0, f"{bundle_id}: ego timestamps not strictly increasing at {i}")
        _check(
            abs(dt - GRID_DT) <= TIME_TOL,
            f"{bundle_id}: ego[{i}] not a 10Hz grid (step {dt:.6f} s)",
        )

    calib_per_frame = []
    for i, d in enumerate(jsonio.load(root / "calib.json")):
        calib = CameraCalib(
            intrinsics=np.array(d["intrinsics"], dtype=float),
            rotation=np.array(d["rotation"], dtype=float),
            translation=np.array(d["translation"], dtype=float),
            image_size=(int(d["image_size"][0]), int(d["image_size"][1])),
        )
        _validate_calib(calib, f"{bundle_id}: calib[{i}]")
        calib_per_frame.append(calib)
    _check(
        len(calib_per_frame) == frame_count,
        f"{bundle_id}: calib.json frame count mismatch",
    )

    behavior_by_track = {}
    for i, d in enumerate(jsonio.load(root / "behavior.json")):
        rec = BehaviorRecord(
            track_id=str(d["track_id"]),
            will_cross=bool(d["will_cross"]),
            crossing_intervals=[(int(a), int(b)) for a, b in d["crossing_intervals"]],
            critical_frame=None
            if d.get("critical_frame") is None
            else int(d["critical_frame"]),
        )
        _check(
            rec.track_id not in behavior_by_track,
            f"{bundle_id}: behavior[{i}]: duplicate track_id {rec.track_id}",
        )
        behavior_by_track[rec.track_id] = rec

    tracks = []
    for i, d in enumerate(jsonio.load(root / "tracks.json")):
        track_id = str(d["track_id"])
        boxes = [_box3d_from_json(b) for b in d["keyframes"]]
        where = f"{bundle_id}: tracks[{i}] ({track_id})"
        _check(len(boxes) >= 1, f"{where}: at least 1 keyframe required")
        for j, b in enumerate(boxes):
            _validate_box3d(b, f"{where}: keyframes[{j}]")
        for j in range(1, len(boxes)):
            dt = boxes[j].timestamp - boxes[j - 1].timestamp
            _check(
                abs(dt - KEYFRAME_DT) <= TIME_TOL,
                f"{where}: keyframe spacing {dt:.6f} s, expected {KEYFRAME_DT}",
            )
        visibility = [bool(v) for v in d["visibility"]]
        _check(
            len(visibility) == frame_count,
            f"{where}: visibility length {len(visibility)} != frame_count {frame_count}",
        )
        tracks.append(
            PedestrianTrack(
                track_id=track_id,
                keyframe_boxes=boxes,
                visibility=visibility,
                behavior=behavior_by_track.get(track_id),
            )
        )

    map_layers = []
    for i, d in enumerate(jsonio.load(root / "map.json")):
        kind = str(d["layer_kind"])
        _check(
            kind in LAYER_KINDS,
            f"{bundle_id}: map[{i}]: unknown layer_kind {kind!r}",
        )
        polygons = []
        for j, poly in enumerate(d["polygons"]):
            ring = [(float(p[0]), float(p[1])) for p in poly]
            where = f"{bundle_id}: map[{i}].polygons[{j}]"
            _check(len(ring) >= 3, f"{where}: fewer than 3 vertices")
            _check(not _polygon_self_intersects(ring), f"{where}: self-intersecting")
            polygons.append(ring)
        map_layers.append(MapLayer(layer_kind=kind, polygons=polygons))

    detections = []
    for i, frame_dets in enumerate(jsonio.load(root / "detections.json")):
        row = []
        for j, d in enumerate(frame_dets):
            box = _box2d_from_json(d)
            row.append(
                _clip_box2d(
                    box,
                    calib_per_frame[i].image_size,
                    f"{bundle_id}: detections[{i}][{j}]",
                )
            )
        detections.append(row)
    _check(
        len(detections) == frame_count,
        f"{bundle_id}: detections.json frame count mismatch",
    )

    image_paths = [f"images/frame_{i:05d}.ppm" for i in range(frame_count)]
    for rel in image_paths:
        if not (root / rel).is_file():
            raise BundleLoadError(f"{root}: missing file: {rel}")

    return SceneBundle(
        bundle_id=bundle_id,
        tracks=tracks,
        ego_states=ego_states,
        calib_per_frame=calib_per_frame,
        map_layers=map_layers,
        image_paths=image_paths,
        detections=detections,
        root=root,
    )


def save_bundle(bundle: SceneBundle, out_dir, images=None) -> Path:
    """Write a bundle directory.

    ``images`` may supply per-frame uint8 HxWx3 arrays; otherwise frames
    are copied from ``bundle.root``.
    """
    from . import ppm

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    jsonio.dump(
        {"bundle_id": bundle.bundle_id, "frame_count": bundle.frame_count},
        out / "meta.json",
    )
    jsonio.dump(
        [
            {
                "track_id": t.track_id,
                "keyframes": [_box3d_to_json(b) for b in t.keyframe_boxes],
                "visibility": list(t.visibility),
            }
            for t in bundle.tracks
        ],
        out / "tracks.json",
    )
    jsonio.dump(
        [
            {
                "position": list(e.position),
                "velocity": list(e.velocity),
                "heading": e.heading,
                "timestamp": e.timestamp,
            }
            for e in bundle.ego_states
        ],
        out / "ego.json",
    )
    jsonio.dump(
        [
            {
                "intrinsics": c.intrinsics.tolist(),
                "rotation": c.rotation.tolist(),
                "translation": c.translation.tolist(),
                "image_size": [c.image_size[0], c.image_size[1]],
            }
            for c in bundle.calib_per_frame
        ],
        out / "calib.json",
    )
    jsonio.dump(
        [
            {"layer_kind": m.layer_kind, "polygons": [[list(p) for p in ring] for ring in m.polygons]}
            for m in bundle.map_layers
        ],
        out / "map.json",
    )
    jsonio.dump(
        [[_box2d_to_json(b) for b in row] for row in bundle.detections],
        out / "detections.json",
    )
    records = []
    for t in bundle.tracks:
        if t.behavior is None:
            continue
        records.append(
            {
                "track_id": t.behavior.track_id,
                "will_cross": t.behavior.will_cross,
                "crossing_intervals": [list(iv) for iv in t.behavior.crossing_intervals],
                "critical_frame": t.behavior.critical_frame,
            }
        )
    jsonio.dump(records, out / "behavior.json")

    for i, rel in enumerate(bundle.image_paths):
        dst = out / f"images/frame_{i:05d}.ppm"
        if images is not None:
            ppm.write_ppm(dst, images[i])
        else:
            shutil.copyfile(bundle.image_path(i), dst)
    return out


def load_corpus(root) -> list[SceneBundle]:
    """Load every bundle directory under ``root``, sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise BundleLoadError(f"not a corpus directory: {root}")
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "meta.json").is_file())
    if not dirs:
        raise BundleLoadError(f"no bundles found under {root}")
    return [load_bundle(p) for p in dirs]


# ---------------------------------------------------------------------------
# behavioral-label validation (collect-all, violations are data)


def validate_labels(bundle: SceneBundle) -> list[str]:
    """Check every behavior record; returns all violations found."""
    violations = []
    for track in bundle.tracks:
        rec = track.behavior
        if rec is None:
            continue
        where = f"{bundle.bundle_id}/{track.track_id}"
        if rec.will_cross and not rec.crossing_intervals:
            violations.append(f"{where}: will_cross without crossing interval")
        if not rec.will_cross and rec.crossing_intervals:
            violations.append(f"{where}: crossing intervals on a non-crosser")
        for a, b in rec.crossing_intervals:
            if a > b:
                violations.append(f"{where}: interval ({a}, {b}) has start > end")
        ordered = sorted(rec.crossing_intervals)
        for (a1, b1), (a2, b2) in zip(ordered, ordered[1:]):
            if a2 <= b1:
                violations.append(f"{where}: overlapping crossing intervals")
                break
        if rec.will_cross and rec.critical_frame is None:
            violations.append(f"{where}: crosser without critical_frame")
        if not rec.will_cross and rec.critical_frame is not None:
            violations.append(f"{where}: critical_frame on a non-crosser")
        if rec.will_cross and rec.critical_frame is not None and rec.crossing_intervals:
            earliest = min(a for a, _ in rec.crossing_intervals)
            if rec.critical_frame != earliest:
                violations.append(
                    f"{where}: critical_frame {rec.critical_frame} != earliest "
                    f"interval start {earliest}"
                )
        if rec.critical_frame is not None and any(track.visibility):
            first = track.visibility.index(True)
            last = len(track.visibility) - 1 - track.visibility[::-1].index(True)
            if not first <= rec.critical_frame <= last:
                violations.append(
                    f"{where}: critical_frame {rec.critical_frame} outside visibility "
                    f"span [{first}, {last}]"
                )
        elif rec.critical_frame is not None:
            violations.append(f"{where}: critical_frame but track never visible")
    return violations


# ---------------------------------------------------------------------------
# corpus statistics


@dataclass(frozen=True)
class CorpusStats:
    """Annotation counts; crossing + non_crossing must equal with_behavior."""

    peds_with_behavior: int = 0
    crossing: int = 0
    non_crossing: int = 0
    frame_behavior_annotations: int = 0
    ped_box_annotations: int = 0
    other_box_annotations: int = 0

    def __post_init__(self):
        if self.crossing + self.non_crossing != self.peds_with_behavior:
            raise ValueError(
                f"inconsistent stats: crossing {self.crossing} + non_crossing "
                f"{self.non_crossing} != with_behavior {self.peds_with_behavior}"
            )

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        return CorpusStats(
            self.peds_with_behavior + other.peds_with_behavior,
            self.crossing + other.crossing,
            self.non_crossing + other.non_crossing,
            self.frame_behavior_annotations + other.frame_behavior_annotations,
            self.ped_box_annotations + other.ped_box_annotations,
            self.other_box_annotations + other.other_box_annotations,
        )

    def to_json(self) -> dict:
        return {
            "peds_with_behavior": self.peds_with_behavior,
            "crossing": self.crossing,
            "non_crossing": self.non_crossing,
            "frame_behavior_annotations": self.frame_behavior_annotations,
            "ped_box_annotations": self.ped_box_annotations,
            "other_box_annotations": self.other_box_annotations,
        }


def corpus_stats(bundles) -> CorpusStats:
    """Aggregate annotation counts over a corpus.

    Per-frame behavioral annotations count one crossing-state flag per
    10 Hz frame in each labelled track's keyframe span; box annotations
    count the densified per-frame boxes the same way. Bundles carry
    pedestrian tracks only, so the other-object box count is zero.
    """
    total = CorpusStats()
    for bundle in bundles:
        with_behavior = sum(1 for t in bundle.tracks if t.behavior is not None)
        crossing = sum(
            1 for t in bundle.tracks if t.behavior is not None and t.behavior.will_cross
        )
        frame_beh = sum(
            t.span_frame_count() for t in bundle.tracks if t.behavior is not None
        )
        ped_boxes = sum(t.span_frame_count() for t in bundle.tracks)
        total = total + CorpusStats(
            peds_with_behavior=with_behavior,
            crossing=crossing,
            non_crossing=with_behavior - crossing,
            frame_behavior_annotations=frame_beh,
            ped_box_annotations=ped_boxes,
            other_box_annotations=0,
        )
    return total
