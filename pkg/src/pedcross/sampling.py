"""Evaluation-protocol sampling: clipping, observation windows, splits.

Tracks are clipped at the first crossing frame (crossers) or the last
visible frame (non-crossers); observation windows of 5 consecutive frames
are drawn so the window end falls 10-20 frames (1-2 s at 10 Hz) before
the event frame, enumerated latest-first with a stride of 2 frames; the
train/test split is stratified per class at track level with a 70/30
ratio.

The split shuffle uses an explicitly specified PRNG (xorshift64* seeded
through one splitmix64 scramble; see README) so manifests reproduce
across implementations, not just across runs of this one.
"""

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from . import jsonio
from .densify import DenseTrack
from .scene import PedestrianTrack, SceneBundle

OBS_LEN = 5
TTE_MIN = 10
TTE_MAX = 20
STRIDE = 2
TRAIN_RATIO = 0.7

_MASK64 = (1 << 64) - 1


class SplitError(ValueError):
    """The corpus cannot be split as requested."""


class WeightError(ValueError):
    """Class weights are undefined for the sample set."""


class XorShift64Star:
    """xorshift64* with a splitmix64-scrambled seed.

    next_u64: x ^= x >> 12; x ^= x << 25; x ^= x >> 27 (64-bit wrap),
    output (x * 0x2545F4914F6CDD1D) mod 2^64. The scramble makes seed 0
    usable. ``shuffle`` is a descending Fisher-Yates using
    ``next_u64() % (i + 1)`` (modulo bias is accepted and documented).
    """

    MULT = 0x2545F4914F6CDD1D

    def __init__(self, seed: int):
        z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        self._state = z if z != 0 else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * self.MULT) & _MASK64

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]


# ---------------------------------------------------------------------------
# clipping and window extraction


def clip_track(
    track: PedestrianTrack, dense: DenseTrack
) -> Optional[tuple[int, int]]:
    """Usable frame range of a track, inclusive on both ends.

    Crossers end at the critical frame, non-crossers at the last frame
    visible in the forward-center camera. Returns None when the range is
    empty (e.g. a non-crosser never visible inside the dense span).
    """
    start = dense.first_frame()
    last = dense.last_frame()
    rec = track.behavior
    if rec is None:
        return None
    if rec.will_cross:
        if rec.critical_frame is None:
            raise ValueError(
                f"track {track.track_id}: crosser without critical_frame"
            )
        end = min(rec.critical_frame, last)
    else:
        end = None
        for i in range(min(last, len(track.visibility) - 1), start - 1, -1):
            if track.visibility[i]:
                end = i
                break
        if end is None:
            return None
    if end < start:
        return None
    return start, end


def sample_windows(
    clip_range: tuple[int, int],
    event_frame: int,
    obs_len: int = OBS_LEN,
    tte_min: int = TTE_MIN,
    tte_max: int = TTE_MAX,
    stride: int = STRIDE,
) -> list[tuple[int, ...]]:
    """Observation windows whose end frame is tte_min..tte_max before the event.

    Windows are enumerated from latest to earliest in steps of ``stride``
    and must lie entirely inside the clipped range. Returns the list of
    frame-index tuples (each of length ``obs_len``).
    """
    if obs_len < 1:
        raise ValueError("obs_len must be >= 1")
    if tte_min > tte_max:
        raise ValueError("tte_min must be <= tte_max")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    start, end = clip_range
    windows = []
    f = event_frame - tte_min
    while f >= event_frame - tte_max:
        first = f - obs_len + 1
        if first >= start and f <= end:
            windows.append(tuple(range(first, f + 1)))
        f -= stride
    return windows


@dataclass(frozen=True)
class ObservationStub:
    """A sample before tensor materialization: indices, label, horizon."""

    sample_id: str
    bundle_id: str
    track_id: str
    frame_indices: tuple[int, ...]
    label: int  # 1 = will cross
    time_to_event: int  # frames from window end to the event frame

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "bundle_id": self.bundle_id,
            "track_id": self.track_id,
            "frame_indices": list(self.frame_indices),
            "label": self.label,
            "time_to_event": self.time_to_event,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ObservationStub":
        return cls(
            sample_id=str(d["sample_id"]),
            bundle_id=str(d["bundle_id"]),
            track_id=str(d["track_id"]),
            frame_indices=tuple(int(v) for v in d["frame_indices"]),
            label=int(d["label"]),
            time_to_event=int(d["time_to_event"]),
        )


def collect_samples(
    bundle: SceneBundle,
    dense_tracks: Sequence[DenseTrack],
    obs_len: int = OBS_LEN,
    tte_min: int = TTE_MIN,
    tte_max: int = TTE_MAX,
    stride: int = STRIDE,
) -> list[ObservationStub]:
    """All observation samples of one bundle, labelled tracks only."""
    dense_by_id = {d.track_id: d for d in dense_tracks}
    stubs = []
    for track in bundle.tracks:
        if track.behavior is None or track.track_id not in dense_by_id:
            continue
        clip = clip_track(track, dense_by_id[track.track_id])
        if clip is None:
            continue
        event = clip[1]
        windows = sample_windows(clip, event, obs_len, tte_min, tte_max, stride)
        for k, frames in enumerate(windows):
            stubs.append(
                ObservationStub(
                    sample_id=f"{bundle.bundle_id}/{track.track_id}/{k}",
                    bundle_id=bundle.bundle_id,
                    track_id=track.track_id,
                    frame_indices=frames,
                    label=int(track.behavior.will_cross),
                    time_to_event=event - frames[-1],
                )
            )
    return stubs


# ---------------------------------------------------------------------------
# stratified track-level split


@dataclass
class SplitManifest:
    train_track_ids: list[str]
    test_track_ids: list[str]
    seed: int
    counts: dict = field(default_factory=dict)  # per side, per class track counts

    def side_of(self, track_key: str) -> Optional[str]:
        if track_key in self._train_set():
            return "train"
        if track_key in self._test_set():
            return "test"
        return None

    def _train_set(self):
        return set(self.train_track_ids)

    def _test_set(self):
        return set(self.test_track_ids)

    def to_json(self) -> dict:
        return {
            "train_track_ids": list(self.train_track_ids),
            "test_track_ids": list(self.test_track_ids),
            "seed": self.seed,
            "counts": self.counts,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SplitManifest":
        return cls(
            train_track_ids=[str(v) for v in d["train_track_ids"]],
            test_track_ids=[str(v) for v in d["test_track_ids"]],
            seed=int(d["seed"]),
            counts=dict(d["counts"]),
        )


def split_dataset(
    track_labels: Mapping[str, bool],
    ratio: float = TRAIN_RATIO,
    seed: int = 0,
) -> SplitManifest:
    """Track-level stratified split.

    Within each class, track keys are sorted, shuffled by the seeded
    xorshift64* generator, and the first ``floor(ratio * n + 0.5)`` go to
    train. Track keys are expected to be globally unique
    (``bundle_id/track_id``).
    """
    if not 0.0 <= ratio <= 1.0:
        raise SplitError(f"ratio must be in [0, 1], got {ratio}")
    pos = sorted(k for k, v in track_labels.items() if v)
    neg = sorted(k for k, v in track_labels.items() if not v)
    if not pos or not neg:
        raise SplitError(
            f"both classes required for a stratified split "
            f"(crossers {len(pos)}, non-crossers {len(neg)})"
        )
    rng = XorShift64Star(seed)
    train, test = [], []
    counts = {"train": {"pos": 0, "neg": 0}, "test": {"pos": 0, "neg": 0}}
    for name, keys in (("pos", pos), ("neg", neg)):
        keys = list(keys)
        rng.shuffle(keys)
        n_train = int(math.floor(ratio * len(keys) + 0.5))
        train.extend(keys[:n_train])
        test.extend(keys[n_train:])
        counts["train"][name] = n_train
        counts["test"][name] = len(keys) - n_train
    return SplitManifest(
        train_track_ids=sorted(train),
        test_track_ids=sorted(test),
        seed=seed,
        counts=counts,
    )


def class_weights(labels: Sequence[int]) -> tuple[float, float]:
    """Balanced-frequency weights (w_pos, w_neg) = N / (2 * N_c)."""
    n_pos = sum(1 for y in labels if y)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise WeightError(
            f"both classes required for class weights (pos {n_pos}, neg {n_neg})"
        )
    total = n_pos + n_neg
    return total / (2.0 * n_pos), total / (2.0 * n_neg)


def save_split(manifest: SplitManifest, path) -> None:
    jsonio.dump(manifest.to_json(), path)


def load_split(path) -> SplitManifest:
    return SplitManifest.from_json(jsonio.load(path))
