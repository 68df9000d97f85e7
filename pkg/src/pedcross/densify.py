"""2 Hz -> 10 Hz track densification.

Keyframe 3D boxes are linearly interpolated in global coordinates onto
the 10 Hz grid (yaw along the shortest arc of the circle, so the +/-pi
seam never produces a 2*pi jump), projected into the image plane through
the per-frame pinhole calibration, and the interpolated 2D boxes are then
refined against external detections by IoU matching and blending.

Keyframes are preserved exactly: a dense frame whose timestamp matches a
keyframe reuses the source box object. 3D boxes are never adjusted; the
detector only refines image-plane locations, and lifting a 2D shift back
to 3D would be under-determined.
"""

import bisect
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import jsonio
from .scene import (
    Box2D,
    Box3D,
    CameraCalib,
    PedestrianTrack,
    SceneBundle,
    TIME_TOL,
    normalize_angle,
)

MIN_DEPTH = 1e-6  # meters; corners closer than this to the image plane are dropped

DEFAULT_IOU_THRESHOLD = 0.3
DEFAULT_BLEND = 0.5


class TrackRangeError(ValueError):
    """A grid timestamp falls outside the keyframe span."""


@dataclass(frozen=True)
class DenseFrame:
    frame_index: int
    box3d: Box3D
    projected: Optional[Box2D]
    adjusted: Optional[Box2D]
    is_keyframe: bool


@dataclass
class DenseTrack:
    track_id: str
    frames: list[DenseFrame]

    def frame_indices(self) -> list[int]:
        return [f.frame_index for f in self.frames]

    def first_frame(self) -> int:
        return self.frames[0].frame_index

    def last_frame(self) -> int:
        return self.frames[-1].frame_index

    def by_index(self) -> dict[int, DenseFrame]:
        return {f.frame_index: f for f in self.frames}


# ---------------------------------------------------------------------------
# interpolation


def _lerp3(a, b, alpha):
    # a + alpha*(b - a): exact when both endpoints coincide
    return tuple(x + alpha * (y - x) for x, y in zip(a, b))


def interpolate_track(
    track: PedestrianTrack,
    grid: Sequence[float],
    frame_indices: Optional[Sequence[int]] = None,
) -> DenseTrack:
    """Interpolate keyframe boxes onto grid timestamps.

    Every grid timestamp must lie within the keyframe span; there is no
    extrapolation. Center and size interpolate linearly, yaw along the
    shortest arc.
    """
    keys = track.keyframe_boxes
    times = [b.timestamp for b in keys]
    if frame_indices is None:
        frame_indices = list(range(len(grid)))
    if len(frame_indices) != len(grid):
        raise ValueError("frame_indices and grid must have equal length")

    frames = []
    for idx, t in zip(frame_indices, grid):
        if t < times[0] - TIME_TOL or t > times[-1] + TIME_TOL:
            raise TrackRangeError(
                f"track {track.track_id}: grid timestamp {t:.6f} outside keyframe "
                f"span [{times[0]:.6f}, {times[-1]:.6f}]"
            )
        k = bisect.bisect_left(times, t - TIME_TOL)
        if k < len(times) and abs(times[k] - t) <= TIME_TOL:
            frames.append(DenseFrame(idx, keys[k], None, None, True))
            continue
        i = k - 1
        a, b = keys[i], keys[i + 1]
        alpha = (t - a.timestamp) / (b.timestamp - a.timestamp)
        yaw = normalize_angle(a.yaw + alpha * normalize_angle(b.yaw - a.yaw))
        box = Box3D(
            center=_lerp3(a.center, b.center, alpha),
            size=_lerp3(a.size, b.size, alpha),
            yaw=yaw,
            timestamp=t,
        )
        frames.append(DenseFrame(idx, box, None, None, False))
    return DenseTrack(track_id=track.track_id, frames=frames)


# ---------------------------------------------------------------------------
# projection


def project_box(box: Box3D, calib: CameraCalib) -> Optional[Box2D]:
    """Project a 3D box to the axis-aligned hull of its corners.

    Corners at non-positive depth cannot be projected and are dropped;
    returns None when no corner is in front of the camera or the hull is
    degenerate after clipping to the image rectangle.
    """
    cam = box.corners() @ calib.rotation.T + calib.translation
    depths = cam[:, 2]
    front = depths > MIN_DEPTH
    if not front.any():
        return None
    cam = cam[front]
    k = calib.intrinsics
    u = k[0, 0] * cam[:, 0] / cam[:, 2] + k[0, 2]
    v = k[1, 1] * cam[:, 1] / cam[:, 2] + k[1, 2]
    w, h = calib.image_size
    x_min = min(max(float(u.min()), 0.0), float(w))
    x_max = min(max(float(u.max()), 0.0), float(w))
    y_min = min(max(float(v.min()), 0.0), float(h))
    y_max = min(max(float(v.max()), 0.0), float(h))
    if x_min >= x_max or y_min >= y_max:
        return None
    return Box2D(x_min, y_min, x_max, y_max, confidence=1.0)


# ---------------------------------------------------------------------------
# detection association


def iou(a: Box2D, b: Box2D) -> float:
    xi = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    yi = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if xi <= 0.0 or yi <= 0.0:
        return 0.0
    inter = xi * yi
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def match_detections(
    projected: Sequence[Box2D],
    detections: Sequence[Box2D],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> list[Optional[int]]:
    """Greedy one-to-one association in descending IoU order.

    Returns, per projected box, the matched detection index or None.
    Ties break on (projected index, detection index) so the result is
    deterministic.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    candidates = []
    for i, p in enumerate(projected):
        for j, d in enumerate(detections):
            score = iou(p, d)
            if score >= iou_threshold:
                candidates.append((-score, i, j))
    candidates.sort()
    matches: list[Optional[int]] = [None] * len(projected)
    used = set()
    for _, i, j in candidates:
        if matches[i] is not None or j in used:
            continue
        matches[i] = j
        used.add(j)
    return matches


def _blend_boxes(projected: Box2D, detection: Box2D, alpha: float) -> Box2D:
    cx = alpha * detection.center[0] + (1.0 - alpha) * projected.center[0]
    cy = alpha * detection.center[1] + (1.0 - alpha) * projected.center[1]
    bw = alpha * detection.width + (1.0 - alpha) * projected.width
    bh = alpha * detection.height + (1.0 - alpha) * projected.height
    return Box2D(cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0, 1.0)


def adjust_boxes(
    dense: DenseTrack,
    detections_per_frame: Sequence[Sequence[Box2D]],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    blend: float = DEFAULT_BLEND,
) -> DenseTrack:
    """Refine interpolated 2D boxes against per-frame detections.

    Matched non-keyframe boxes blend center and size toward the detection
    by ``blend``; keyframes and unmatched frames carry the projected box
    through unchanged.
    """
    if not 0.0 <= blend <= 1.0:
        raise ValueError(f"blend must be in [0, 1], got {blend}")
    out = []
    for frame in dense.frames:
        if frame.projected is None:
            out.append(replace(frame, adjusted=None))
            continue
        if frame.is_keyframe:
            out.append(replace(frame, adjusted=frame.projected))
            continue
        dets = detections_per_frame[frame.frame_index]
        match = match_detections([frame.projected], dets, iou_threshold)[0]
        if match is None:
            out.append(replace(frame, adjusted=frame.projected))
        else:
            out.append(
                replace(frame, adjusted=_blend_boxes(frame.projected, dets[match], blend))
            )
    return DenseTrack(track_id=dense.track_id, frames=out)


# ---------------------------------------------------------------------------
# whole-bundle densification


def densify_bundle(
    bundle: SceneBundle,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    blend: float = DEFAULT_BLEND,
) -> list[DenseTrack]:
    """Interpolate, project, and adjust every track of a bundle."""
    timestamps = bundle.timestamps()
    out = []
    for track in bundle.tracks:
        t0 = track.keyframe_boxes[0].timestamp
        t1 = track.keyframe_boxes[-1].timestamp
        indices = [
            i for i, t in enumerate(timestamps) if t0 - TIME_TOL <= t <= t1 + TIME_TOL
        ]
        if not indices:
            continue
        grid = [timestamps[i] for i in indices]
        dense = interpolate_track(track, grid, indices)
        projected = [
            replace(
                f,
                projected=project_box(f.box3d, bundle.calib_per_frame[f.frame_index]),
            )
            for f in dense.frames
        ]
        dense = DenseTrack(track_id=dense.track_id, frames=projected)
        out.append(adjust_boxes(dense, bundle.detections, iou_threshold, blend))
    return out


# ---------------------------------------------------------------------------
# serialization (dense_tracks.json per bundle)


def _frame_to_json(f: DenseFrame) -> dict:
    def box2d(b):
        if b is None:
            return None
        return {
            "x_min": b.x_min,
            "y_min": b.y_min,
            "x_max": b.x_max,
            "y_max": b.y_max,
            "confidence": b.confidence,
        }

    return {
        "frame_index": f.frame_index,
        "box3d": {
            "center": list(f.box3d.center),
            "size": list(f.box3d.size),
            "yaw": f.box3d.yaw,
            "timestamp": f.box3d.timestamp,
        },
        "projected": box2d(f.projected),
        "adjusted": box2d(f.adjusted),
        "is_keyframe": f.is_keyframe,
    }


def _frame_from_json(d: dict) -> DenseFrame:
    def box2d(v):
        if v is None:
            return None
        return Box2D(
            float(v["x_min"]),
            float(v["y_min"]),
            float(v["x_max"]),
            float(v["y_max"]),
            float(v["confidence"]),
        )

    b = d["box3d"]
    return DenseFrame(
        frame_index=int(d["frame_index"]),
        box3d=Box3D(
            center=tuple(float(v) for v in b["center"]),
            size=tuple(float(v) for v in b["size"]),
            yaw=float(b["yaw"]),
            timestamp=float(b["timestamp"]),
        ),
        projected=box2d(d["projected"]),
        adjusted=box2d(d["adjusted"]),
        is_keyframe=bool(d["is_keyframe"]),
    )


def save_dense_tracks(tracks: Sequence[DenseTrack], path) -> None:
    jsonio.dump(
        [
            {"track_id": t.track_id, "frames": [_frame_to_json(f) for f in t.frames]}
            for t in tracks
        ],
        path,
    )


def load_dense_tracks(path) -> list[DenseTrack]:
    return [
        DenseTrack(
            track_id=str(d["track_id"]),
            frames=[_frame_from_json(f) for f in d["frames"]],
        )
        for d in jsonio.load(path)
    ]
