"""Hybrid crossing-action classifier: assembly, training, evaluation, ablation.

Architecture (all layer sizes configurable, defaults below): map and
scene image sequences are stacked channel-wise (3 channels x observed
frames) and encoded by two separate conv stacks, map
[32,3,3],[64,3,2],[128,3,2] and scene [64,3,3],[128,3,2],[256,3,2]
([filters, kernel, stride], same padding, ReLU). Their outputs
concatenate channel-wise into a fusion conv [512,3,1] + ReLU + global
average pooling. Pedestrian trajectories (ground-plane (x, z), shifted so
the first observed point is the origin) and ego velocity triples run
through two 128-cell LSTMs whose final hidden states join the visual
vector. The shared representation feeds dense(256) + ReLU, dropout(0.5),
dense(1) + logistic.

Training: class-weighted binary cross-entropy, RMSProp (lr 5e-5, batch 8,
50 epochs by default), seeded shuffling; fixed seeds give bit-identical
runs on one machine.

Parameter counts close over the config:
  conv:  F * (C_in * k^2 + 1)
  dense: D * U + U
  lstm:  4 * U * (D + U + 1)
"""

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import metrics as metrics_mod
from . import nn
from .densify import DenseTrack, densify_bundle, load_dense_tracks
from .nn import ops
from .ppm import read_ppm
from .raster import RasterConfig, rasterize_frame
from .sampling import ObservationStub
from .scene import SceneBundle

MODALITIES = ("scene", "map", "trajectory", "ego")

DEFAULT_MAP_CONV = ((32, 3, 3), (64, 3, 2), (128, 3, 2))
DEFAULT_SCENE_CONV = ((64, 3, 3), (128, 3, 2), (256, 3, 2))
DEFAULT_FUSION = (512, 3, 1)

ABLATION_GRID = (
    ("Traj", ("trajectory",)),
    ("Scene", ("scene",)),
    ("Map", ("map",)),
    ("Map+Scene", ("map", "scene")),
    ("Map+Scene+Traj", ("map", "scene", "trajectory")),
    ("All", ("scene", "map", "trajectory", "ego")),
)


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    modalities: tuple = MODALITIES
    image_side: int = 300
    obs_len: int = 5
    map_conv_specs: tuple = DEFAULT_MAP_CONV
    scene_conv_specs: tuple = DEFAULT_SCENE_CONV
    fusion_spec: tuple = DEFAULT_FUSION
    lstm_units: int = 128
    dense_hidden: int = 256
    dropout_p: float = 0.5
    lr: float = 5e-5
    batch_size: int = 8
    epochs: int = 50
    seed: int = 0
    map_extent: float = 30.0
    stop_at_train_accuracy: Optional[float] = None

    def __post_init__(self):
        if not self.modalities:
            raise ConfigError("at least one modality must be enabled")
        unknown = set(self.modalities) - set(MODALITIES)
        if unknown:
            raise ConfigError(f"unknown modalities {sorted(unknown)}")
        if self.image_side < 1 or self.obs_len < 1:
            raise ConfigError("image_side and obs_len must be >= 1")
        extents = {}
        for name, specs in (("map", self.map_conv_specs), ("scene", self.scene_conv_specs)):
            if name in self.modalities:
                extents[name] = _stream_extent(self.image_side, specs)
        if len(extents) == 2 and extents["map"] != extents["scene"]:
            raise ConfigError(
                f"fusion requires equal stream extents, got map "
                f"{self.image_side}->{extents['map']} vs scene "
                f"{self.image_side}->{extents['scene']} under stride schedules "
                f"{[s[2] for s in self.map_conv_specs]} and "
                f"{[s[2] for s in self.scene_conv_specs]}"
            )

    @property
    def visual_enabled(self) -> bool:
        return "scene" in self.modalities or "map" in self.modalities

    def shared_width(self) -> int:
        width = self.fusion_spec[0] if self.visual_enabled else 0
        if "trajectory" in self.modalities:
            width += self.lstm_units
        if "ego" in self.modalities:
            width += self.lstm_units
        return width

    def to_json(self) -> dict:
        return {
            "modalities": list(self.modalities),
            "image_side": self.image_side,
            "obs_len": self.obs_len,
            "map_conv_specs": [list(s) for s in self.map_conv_specs],
            "scene_conv_specs": [list(s) for s in self.scene_conv_specs],
            "fusion_spec": list(self.fusion_spec),
            "lstm_units": self.lstm_units,
            "dense_hidden": self.dense_hidden,
            "dropout_p": self.dropout_p,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "map_extent": self.map_extent,
        }


def _stream_extent(side: int, specs) -> int:
    extent = side
    for _, _, stride in specs:
        extent = -(-extent // stride)
    return extent


def count_parameters(config: ModelConfig) -> int:
    """Closed-form learnable parameter count for a config."""

    def conv(c_in, filters, k):
        return filters * (c_in * k * k + 1)

    def dense(d, u):
        return d * u + u

    def lstm(d, u):
        return 4 * u * (d + u + 1)

    total = 0
    in_channels = 3 * config.obs_len
    fusion_in = 0
    if "map" in config.modalities:
        c = in_channels
        for f, k, _ in config.map_conv_specs:
            total += conv(c, f, k)
            c = f
        fusion_in += c
    if "scene" in config.modalities:
        c = in_channels
        for f, k, _ in config.scene_conv_specs:
            total += conv(c, f, k)
            c = f
        fusion_in += c
    if config.visual_enabled:
        f, k, _ = config.fusion_spec
        total += conv(fusion_in, f, k)
    if "trajectory" in config.modalities:
        total += lstm(2, config.lstm_units)
    if "ego" in config.modalities:
        total += lstm(3, config.lstm_units)
    total += dense(config.shared_width(), config.dense_hidden)
    total += dense(config.dense_hidden, 1)
    return total


# ---------------------------------------------------------------------------
# the network


class HybridModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
        in_channels = 3 * config.obs_len

        self.map_stack = []
        self.scene_stack = []
        self.fusion = None
        self.traj_lstm = None
        self.ego_lstm = None

        fusion_in = 0
        if "map" in config.modalities:
            c = in_channels
            for i, (f, k, s) in enumerate(config.map_conv_specs):
                self.map_stack.append(nn.Conv2D(c, f, k, s, rng, name=f"map{i}"))
                c = f
            fusion_in += c
        if "scene" in config.modalities:
            c = in_channels
            for i, (f, k, s) in enumerate(config.scene_conv_specs):
                self.scene_stack.append(nn.Conv2D(c, f, k, s, rng, name=f"scene{i}"))
                c = f
            fusion_in += c
        if config.visual_enabled:
            f, k, s = config.fusion_spec
            self.fusion = nn.Conv2D(fusion_in, f, k, s, rng, name="fusion")
        if "trajectory" in config.modalities:
            self.traj_lstm = nn.LSTM(2, config.lstm_units, rng, name="traj")
        if "ego" in config.modalities:
            self.ego_lstm = nn.LSTM(3, config.lstm_units, rng, name="ego")

        self.head_hidden = nn.Dense(config.shared_width(), config.dense_hidden, rng,
                                    name="head_hidden")
        self.head_out = nn.Dense(config.dense_hidden, 1, rng, name="head_out")

    # -- plumbing

    def layers(self):
        out = list(self.map_stack) + list(self.scene_stack)
        if self.fusion is not None:
            out.append(self.fusion)
        if self.traj_lstm is not None:
            out.append(self.traj_lstm)
        if self.ego_lstm is not None:
            out.append(self.ego_lstm)
        out.extend([self.head_hidden, self.head_out])
        return out

    def parameters(self):
        params = []
        for layer in self.layers():
            params.extend(layer.parameters())
        return params

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def layer_specs(self):
        return [layer.spec() for layer in self.layers()]

    def save_checkpoint(self, path) -> None:
        nn.save_checkpoint(path, self.layer_specs(), [p.data for p in self.parameters()])

    def load_checkpoint(self, path) -> None:
        _, arrays = nn.load_checkpoint(path)
        params = self.parameters()
        if len(arrays) != len(params):
            raise ValueError(
                f"checkpoint has {len(arrays)} tensors, model expects {len(params)}"
            )
        for p, a in zip(params, arrays):
            if p.data.shape != a.shape:
                raise ValueError(
                    f"checkpoint tensor {a.shape} does not fit parameter "
                    f"{p.name} {p.data.shape}"
                )
            p.data = a

    # -- forward

    def _visual_features(self, batch):
        streams = []
        for stack, key in ((self.map_stack, "map"), (self.scene_stack, "scene")):
            if not stack:
                continue
            x = ops.constant(batch[key])
            for conv in stack:
                x = ops.relu(conv(x))
            streams.append(x)
        fused = streams[0] if len(streams) == 1 else ops.concat(streams, axis=1)
        fused = ops.relu(self.fusion(fused))
        return ops.global_avg_pool(fused)

    def forward(self, batch: dict, mode: str = "eval", rng=None) -> nn.Tensor:
        """Probabilities [N] in (0, 1). ``batch`` maps enabled modality
        names to arrays: map/scene [N,3*T,S,S], trajectory [N,T,2],
        ego [N,T,3]."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be train or eval, got {mode!r}")
        features = []
        if self.config.visual_enabled:
            features.append(self._visual_features(batch))
        if self.traj_lstm is not None:
            features.append(self.traj_lstm(batch["trajectory"]))
        if self.ego_lstm is not None:
            features.append(self.ego_lstm(batch["ego"]))
        shared = features[0] if len(features) == 1 else ops.concat(features, axis=1)
        hidden = ops.relu(self.head_hidden(shared))
        hidden = ops.dropout(hidden, self.config.dropout_p, mode, rng=rng)
        logits = self.head_out(hidden)
        probs = ops.sigmoid(logits)
        return ops.reshape(probs, (probs.shape[0],))


def build_model(config: ModelConfig) -> HybridModel:
    return HybridModel(config)


# ---------------------------------------------------------------------------
# sample materialization


def _resize_nearest(img: np.ndarray, side: int) -> np.ndarray:
    h, w = img.shape[:2]
    rows = np.minimum((((np.arange(side) + 0.5) * h) / side).astype(int), h - 1)
    cols = np.minimum((((np.arange(side) + 0.5) * w) / side).astype(int), w - 1)
    return img[rows][:, cols]


class CorpusContext:
    """Loaded bundles plus caches for images, rasters, and dense tracks."""

    def __init__(self, bundles: Sequence[SceneBundle],
                 dense: Optional[dict] = None):
        self.bundles = {b.bundle_id: b for b in bundles}
        self._dense = dense or {}
        self._image_cache: dict = {}
        self._raster_cache: dict = {}

    @classmethod
    def from_corpus(cls, bundles: Sequence[SceneBundle],
                    iou_threshold: float = 0.3, blend: float = 0.5):
        """Use per-bundle dense_tracks.json when present, else densify."""
        dense = {}
        for b in bundles:
            path = None if b.root is None else b.root / "dense_tracks.json"
            if path is not None and path.is_file():
                tracks = load_dense_tracks(path)
            else:
                tracks = densify_bundle(b, iou_threshold, blend)
            for t in tracks:
                dense[(b.bundle_id, t.track_id)] = t
        return cls(bundles, dense)

    def dense_track(self, bundle_id: str, track_id: str) -> DenseTrack:
        return self._dense[(bundle_id, track_id)]

    def image(self, bundle_id: str, frame: int, side: int) -> np.ndarray:
        key = (bundle_id, frame, side)
        if key not in self._image_cache:
            raw = read_ppm(self.bundles[bundle_id].image_path(frame))
            self._image_cache[key] = (
                _resize_nearest(raw, side).astype(np.float64) / 255.0
            )
        return self._image_cache[key]

    def map_raster(self, bundle_id: str, frame: int, side: int,
                   extent: float) -> np.ndarray:
        key = (bundle_id, frame, side, extent)
        if key not in self._raster_cache:
            bundle = self.bundles[bundle_id]
            config = RasterConfig(extent=extent, resolution=extent / side)
            raster = rasterize_frame(
                bundle.map_layers, bundle.ego_states[frame], config, frame_index=frame
            )
            self._raster_cache[key] = raster.pixels.astype(np.float64) / 255.0
        return self._raster_cache[key]


def materialize(samples: Sequence[ObservationStub], ctx: CorpusContext,
                config: ModelConfig) -> dict:
    """Build the tensor dict for the enabled modalities plus labels.

    Image-like streams stack frames channel-wise (frame-major RGB);
    trajectories subtract their first observed point.
    """
    n = len(samples)
    t = config.obs_len
    side = config.image_side
    out: dict = {"labels": np.array([s.label for s in samples], dtype=np.float64)}

    if "scene" in config.modalities:
        scene = np.empty((n, 3 * t, side, side))
        for i, s in enumerate(samples):
            for j, frame in enumerate(s.frame_indices):
                img = ctx.image(s.bundle_id, frame, side)
                scene[i, 3 * j : 3 * j + 3] = img.transpose(2, 0, 1)
        out["scene"] = scene
    if "map" in config.modalities:
        maps = np.empty((n, 3 * t, side, side))
        for i, s in enumerate(samples):
            for j, frame in enumerate(s.frame_indices):
                ras = ctx.map_raster(s.bundle_id, frame, side, config.map_extent)
                maps[i, 3 * j : 3 * j + 3] = ras.transpose(2, 0, 1)
        out["map"] = maps
    if "trajectory" in config.modalities:
        traj = np.empty((n, t, 2))
        for i, s in enumerate(samples):
            dense = ctx.dense_track(s.bundle_id, s.track_id).by_index()
            for j, frame in enumerate(s.frame_indices):
                center = dense[frame].box3d.center
                traj[i, j, 0] = center[0]
                traj[i, j, 1] = center[2]
            traj[i] -= traj[i, 0].copy()
        out["trajectory"] = traj
    if "ego" in config.modalities:
        ego = np.empty((n, t, 3))
        for i, s in enumerate(samples):
            states = ctx.bundles[s.bundle_id].ego_states
            for j, frame in enumerate(s.frame_indices):
                ego[i, j] = states[frame].velocity
        out["ego"] = ego
    return out


def _slice_batch(data: dict, idx: np.ndarray) -> dict:
    return {k: v[idx] for k, v in data.items() if k != "labels"}


# ---------------------------------------------------------------------------
# training and evaluation


@dataclass
class TrainReport:
    config: dict
    seed: int
    epoch_losses: list = field(default_factory=list)
    epoch_train_accuracy: list = field(default_factory=list)
    epochs_run: int = 0
    final_metrics: Optional[dict] = None
    wall_clock_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "epoch_losses": self.epoch_losses,
            "epoch_train_accuracy": self.epoch_train_accuracy,
            "epochs_run": self.epochs_run,
            "final_metrics": self.final_metrics,
            "wall_clock_s": self.wall_clock_s,
        }


def predict(model: HybridModel, data: dict, batch_size: int = 64) -> np.ndarray:
    n = data["labels"].shape[0]
    probs = np.empty(n)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        probs[idx] = model.forward(_slice_batch(data, idx), mode="eval").data
    return probs


def train(model: HybridModel, data: dict, weights: tuple[float, float],
          config: ModelConfig, log=None) -> TrainReport:
    """Mini-batch training with class-weighted BCE and RMSProp."""
    n = data["labels"].shape[0]
    if n == 0:
        raise TrainingError("empty training set")
    w_pos, w_neg = weights
    seq = np.random.SeedSequence(config.seed).spawn(3)
    shuffle_rng = np.random.default_rng(seq[1])
    dropout_rng = np.random.default_rng(seq[2])

    report = TrainReport(config=config.to_json(), seed=config.seed)
    started = time.perf_counter()
    params = model.parameters()
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            batch = _slice_batch(data, idx)
            labels = data["labels"][idx]
            probs = model.forward(batch, mode="train", rng=dropout_rng)
            loss = nn.weighted_bce(probs, labels, w_pos, w_neg)
            model.zero_grad()
            nn.backward(loss)
            nn.rmsprop_step(params, config.lr)
            total += float(loss.data) * len(idx)
        report.epoch_losses.append(total / n)
        report.epochs_run = epoch + 1
        if config.stop_at_train_accuracy is not None:
            acc = metrics_mod.accuracy(data["labels"], predict(model, data))
            report.epoch_train_accuracy.append(acc)
            if log is not None:
                log(f"epoch {epoch + 1}: loss {report.epoch_losses[-1]:.4f} "
                    f"train_acc {acc:.3f}")
            if acc >= config.stop_at_train_accuracy:
                break
        elif log is not None:
            log(f"epoch {epoch + 1}: loss {report.epoch_losses[-1]:.4f}")
    report.wall_clock_s = time.perf_counter() - started
    return report


def evaluate(model: HybridModel, data: dict) -> dict:
    if data["labels"].size == 0:
        raise ValueError("empty evaluation set")
    probs = predict(model, data)
    return metrics_mod.classification_metrics(data["labels"], probs)


def full_model_grad_check(image_side: int = 16, obs_len: int = 2, seed: int = 0,
                          batch: int = 2, max_coords: int = 6) -> float:
    """Finite-difference check of the whole hybrid model at desk scale.

    Dropout runs in eval mode so the forward pass is deterministic; a
    seeded coordinate subset of every parameter tensor is probed.
    """
    config = ModelConfig(image_side=image_side, obs_len=obs_len, seed=seed)
    model = build_model(config)
    rng = np.random.default_rng(seed + 1)
    side = config.image_side
    data = {
        "scene": rng.random((batch, 3 * obs_len, side, side)),
        "map": rng.random((batch, 3 * obs_len, side, side)),
        "trajectory": rng.normal(size=(batch, obs_len, 2)),
        "ego": rng.normal(size=(batch, obs_len, 3)),
    }
    labels = rng.integers(0, 2, size=batch).astype(np.float64)

    def build_loss():
        probs = model.forward(data, mode="eval")
        return nn.weighted_bce(probs, labels, 1.3, 0.8)

    return nn.grad_check(build_loss, model.parameters(), max_coords=max_coords,
                         seed=seed)


# ---------------------------------------------------------------------------
# ablation grid


def run_ablation(ctx: CorpusContext, train_samples, test_samples,
                 base_config: ModelConfig, grid=ABLATION_GRID, log=None):
    """Train and evaluate one model per modality subset; shared data and seed."""
    from .sampling import class_weights

    weights = class_weights([s.label for s in train_samples])
    rows = []
    for name, modalities in grid:
        config = replace(base_config, modalities=tuple(modalities))
        if log is not None:
            log(f"[{name}] training on {len(train_samples)} samples")
        model = build_model(config)
        train_data = materialize(train_samples, ctx, config)
        report = train(model, train_data, weights, config, log=log)
        test_data = materialize(test_samples, ctx, config)
        report.final_metrics = evaluate(model, test_data)
        rows.append({"name": name, "metrics": report.final_metrics, "report": report})
    return rows


def format_ablation_table(rows) -> str:
    """Aligned text table: one row per config, columns Acc/AUC/F1/Prec."""
    name_width = max(len("Modalities"), max(len(r["name"]) for r in rows))
    header = f"{'Modalities':<{name_width}}  {'Acc':>6}  {'AUC':>6}  {'F1':>6}  {'Prec':>6}"
    lines = [header, "-" * len(header)]
    for r in rows:
        m = r["metrics"]
        lines.append(
            f"{r['name']:<{name_width}}  {m['accuracy']:>6.4f}  {m['auc']:>6.4f}  "
            f"{m['f1']:>6.4f}  {m['precision']:>6.4f}"
        )
    return "\n".join(lines)


def ablation_table_json(rows, seed: int) -> dict:
    return {
        "seed": seed,
        "rows": [
            {
                "name": r["name"],
                "accuracy": r["metrics"]["accuracy"],
                "auc": r["metrics"]["auc"],
                "f1": r["metrics"]["f1"],
                "precision": r["metrics"]["precision"],
            }
            for r in rows
        ],
    }
