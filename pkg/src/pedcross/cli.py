"""Command-line surface for the full pipeline.

Subcommands: gen, validate, densify, rasterize, sample, train, ablate,
gradcheck. Progress goes to stderr, data to stdout or files. Exit codes:
0 success, 1 runtime/validation failure, 2 usage error. The corpus
positional argument falls back to the PEDCROSS_CORPUS_ROOT environment
variable. ``--config FILE`` loads defaults from a JSON object whose keys
are flag names (underscored); explicit flags win on conflict.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import jsonio
from .densify import densify_bundle, save_dense_tracks
from .model import (
    ABLATION_GRID,
    CorpusContext,
    ModelConfig,
    TrainingError,
    ablation_table_json,
    build_model,
    evaluate,
    format_ablation_table,
    full_model_grad_check,
    materialize,
    run_ablation,
    train,
)
from .nn.suite import layer_suite
from .ppm import write_ppm
from .raster import RasterConfig, rasterize_frame
from .sampling import (
    ObservationStub,
    class_weights,
    collect_samples,
    load_split,
    save_split,
    split_dataset,
)
from .scene import corpus_stats, load_corpus, validate_labels
from .synthetic import SyntheticSpec, gen_synthetic

GRAD_TOLERANCE = 1e-4


class CliError(RuntimeError):
    pass


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _corpus_root(args) -> Path:
    if args.corpus is not None:
        return Path(args.corpus)
    env = os.environ.get("PEDCROSS_CORPUS_ROOT")
    if env:
        return Path(env)
    raise CliError("no corpus given and PEDCROSS_CORPUS_ROOT is not set")


def _load_config_file(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise CliError(f"{args.config}: config file must hold a JSON object")
    return data


def _resolve(args, file_config: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return file_config.get(name, default)


def _add_corpus_arg(parser) -> None:
    parser.add_argument(
        "corpus", nargs="?", default=None,
        help="corpus directory (default: $PEDCROSS_CORPUS_ROOT)",
    )


def _add_config_arg(parser) -> None:
    parser.add_argument("--config", default=None,
                        help="JSON file with flag defaults; explicit flags win")


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_gen(args) -> int:
    cfg = _load_config_file(args)
    spec = SyntheticSpec(
        n_bundles=_resolve(args, cfg, "bundles", 4),
        frames_per_bundle=_resolve(args, cfg, "frames", 60),
        peds_per_bundle=_resolve(args, cfg, "peds", 4),
        crossing_fraction=_resolve(args, cfg, "crossing_fraction", 0.4),
        image_side=_resolve(args, cfg, "image_side", 64),
        map_extent=_resolve(args, cfg, "map_extent", 120.0),
        seed=_resolve(args, cfg, "seed", 0),
    )
    bundles = gen_synthetic(spec, args.out)
    _log(f"wrote {len(bundles)} bundles to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    bundles = load_corpus(_corpus_root(args))
    violations = []
    for bundle in bundles:
        violations.extend(validate_labels(bundle))
    stats = corpus_stats(bundles)
    print(jsonio.dumps(stats.to_json()))
    if violations:
        for v in violations:
            _log(f"violation: {v}")
        _log(f"{len(violations)} label violations in {len(bundles)} bundles")
        return 1
    _log(f"{len(bundles)} bundles valid")
    return 0


def _cmd_densify(args) -> int:
    root = _corpus_root(args)
    bundles = load_corpus(root)
    out_root = Path(args.out) if args.out else None
    for bundle in bundles:
        dense = densify_bundle(bundle, args.iou_threshold, args.blend)
        if out_root is None:
            path = bundle.root / "dense_tracks.json"
        else:
            (out_root / bundle.bundle_id).mkdir(parents=True, exist_ok=True)
            path = out_root / bundle.bundle_id / "dense_tracks.json"
        save_dense_tracks(dense, path)
        _log(f"{bundle.bundle_id}: {len(dense)} dense tracks -> {path}")
    return 0


def _cmd_rasterize(args) -> int:
    bundles = load_corpus(_corpus_root(args))
    config = RasterConfig(extent=args.extent, resolution=args.resolution)
    out_root = Path(args.out)
    for bundle in bundles:
        out_dir = out_root / bundle.bundle_id
        out_dir.mkdir(parents=True, exist_ok=True)
        limit = bundle.frame_count if args.max_frames is None else min(
            args.max_frames, bundle.frame_count)
        for i in range(limit):
            raster = rasterize_frame(
                bundle.map_layers, bundle.ego_states[i], config, frame_index=i)
            write_ppm(out_dir / f"raster_{i:05d}.ppm", raster.pixels)
        _log(f"{bundle.bundle_id}: {limit} rasters -> {out_dir}")
    return 0


def _cmd_sample(args) -> int:
    cfg = _load_config_file(args)
    root = _corpus_root(args)
    bundles = load_corpus(root)
    obs_len = _resolve(args, cfg, "obs_len", 5)
    tte_min = _resolve(args, cfg, "tte_min", 10)
    tte_max = _resolve(args, cfg, "tte_max", 20)
    stride = _resolve(args, cfg, "stride", 2)
    ratio = _resolve(args, cfg, "ratio", 0.7)
    seed = _resolve(args, cfg, "seed", 0)

    ctx = CorpusContext.from_corpus(bundles)
    stubs = []
    labels_by_track = {}
    for bundle in bundles:
        dense = [ctx.dense_track(bundle.bundle_id, t.track_id)
                 for t in bundle.tracks if t.behavior is not None]
        stubs.extend(collect_samples(bundle, dense, obs_len, tte_min, tte_max, stride))
        for t in bundle.tracks:
            if t.behavior is not None:
                labels_by_track[f"{bundle.bundle_id}/{t.track_id}"] = t.behavior.will_cross
    manifest = split_dataset(labels_by_track, ratio=ratio, seed=seed)

    out = Path(args.out)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    save_split(manifest, out / "split.json")
    for i, stub in enumerate(stubs):
        jsonio.dump(stub.to_json(), out / "samples" / f"sample_{i:06d}.json")
    n_pos = sum(s.label for s in stubs)
    _log(f"{len(stubs)} samples ({n_pos} positive) from {len(labels_by_track)} tracks"
         f" -> {out}")
    return 0


def _load_work_dir(work) -> tuple:
    work = Path(work)
    manifest = load_split(work / "split.json")
    files = sorted((work / "samples").glob("sample_*.json"))
    stubs = [ObservationStub.from_json(jsonio.load(f)) for f in files]
    if not stubs:
        raise CliError(f"{work}: no samples found (run `sample` first)")
    train_keys = set(manifest.train_track_ids)
    test_keys = set(manifest.test_track_ids)
    train_stubs = [s for s in stubs if f"{s.bundle_id}/{s.track_id}" in train_keys]
    test_stubs = [s for s in stubs if f"{s.bundle_id}/{s.track_id}" in test_keys]
    return manifest, train_stubs, test_stubs


def _model_config(args, cfg: dict, obs_len: int) -> ModelConfig:
    modalities = _resolve(args, cfg, "modalities", "scene,map,trajectory,ego")
    if isinstance(modalities, str):
        modalities = tuple(m.strip() for m in modalities.split(",") if m.strip())
    kwargs = dict(
        modalities=tuple(modalities),
        image_side=_resolve(args, cfg, "image_side", 300),
        obs_len=obs_len,
        lstm_units=_resolve(args, cfg, "lstm_units", 128),
        dense_hidden=_resolve(args, cfg, "dense_hidden", 256),
        dropout_p=_resolve(args, cfg, "dropout_p", 0.5),
        lr=_resolve(args, cfg, "lr", 5e-5),
        batch_size=_resolve(args, cfg, "batch_size", 8),
        epochs=_resolve(args, cfg, "epochs", 50),
        seed=_resolve(args, cfg, "seed", 0),
        map_extent=_resolve(args, cfg, "map_extent", 30.0),
    )
    for key in ("map_conv_specs", "scene_conv_specs", "fusion_spec"):
        if key in cfg:
            value = cfg[key]
            kwargs[key] = tuple(tuple(s) for s in value) if key != "fusion_spec" \
                else tuple(value)
    return ModelConfig(**kwargs)


def _cmd_train(args) -> int:
    cfg = _load_config_file(args)
    bundles = load_corpus(_corpus_root(args))
    ctx = CorpusContext.from_corpus(bundles)
    _, train_stubs, test_stubs = _load_work_dir(args.work)
    if not train_stubs:
        raise TrainingError("empty training split")
    config = _model_config(args, cfg, obs_len=len(train_stubs[0].frame_indices))
    weights = class_weights([s.label for s in train_stubs])
    _log(f"training on {len(train_stubs)} samples, testing on {len(test_stubs)}, "
         f"modalities {','.join(config.modalities)}")
    model = build_model(config)
    data = materialize(train_stubs, ctx, config)
    report = train(model, data, weights, config, log=_log)
    if test_stubs:
        report.final_metrics = evaluate(model, materialize(test_stubs, ctx, config))
    if args.save_model:
        model.save_checkpoint(args.save_model)
        _log(f"checkpoint -> {args.save_model}")
    payload = report.to_json()
    print(jsonio.dumps(payload))
    if args.out:
        jsonio.dump(payload, args.out)
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_config_file(args)
    bundles = load_corpus(_corpus_root(args))
    ctx = CorpusContext.from_corpus(bundles)
    _, train_stubs, test_stubs = _load_work_dir(args.work)
    if not train_stubs or not test_stubs:
        raise TrainingError("ablation needs nonempty train and test splits")
    base = _model_config(args, cfg, obs_len=len(train_stubs[0].frame_indices))
    rows = run_ablation(ctx, train_stubs, test_stubs, base, grid=ABLATION_GRID,
                        log=_log)
    print(format_ablation_table(rows))
    if args.out:
        jsonio.dump(ablation_table_json(rows, base.seed), args.out)
    return 0


def _cmd_gradcheck(args) -> int:
    worst = 0.0
    for kind, err in layer_suite(seed=args.seed,
                                 configs_per_kind=args.configs_per_kind).items():
        _log(f"layer {kind}: max relative error {err:.3e}")
        worst = max(worst, err)
    full = full_model_grad_check(seed=args.seed)
    _log(f"full model (side 16, 2 frames): max relative error {full:.3e}")
    worst = max(worst, full)
    print(f"max_relative_error {worst:.6e}")
    if worst >= GRAD_TOLERANCE:
        _log(f"FAIL: {worst:.3e} >= {GRAD_TOLERANCE}")
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pedcross",
        description="Pedestrian crossing-action prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--bundles", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--peds", type=int, default=None)
    p.add_argument("--crossing-fraction", dest="crossing_fraction", type=float,
                   default=None)
    p.add_argument("--image-side", dest="image_side", type=int, default=None)
    p.add_argument("--map-extent", dest="map_extent", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    _add_config_arg(p)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("validate", help="structural + label validation and stats")
    _add_corpus_arg(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("densify", help="interpolate/project/adjust all bundles")
    _add_corpus_arg(p)
    p.add_argument("--iou-threshold", dest="iou_threshold", type=float, default=0.3)
    p.add_argument("--blend", type=float, default=0.5)
    p.add_argument("--out", default=None,
                   help="mirror tree for dense_tracks.json (default: in bundle dirs)")
    p.set_defaults(func=_cmd_densify)

    p = sub.add_parser("rasterize", help="export BEV map rasters as PPM")
    _add_corpus_arg(p)
    p.add_argument("--out", required=True)
    p.add_argument("--extent", type=float, default=30.0)
    p.add_argument("--resolution", type=float, default=0.1)
    p.add_argument("--max-frames", dest="max_frames", type=int, default=None)
    p.set_defaults(func=_cmd_rasterize)

    p = sub.add_parser("sample", help="clip tracks, extract windows, split")
    _add_corpus_arg(p)
    p.add_argument("--out", required=True)
    p.add_argument("--obs-len", dest="obs_len", type=int, default=None)
    p.add_argument("--tte-min", dest="tte_min", type=int, default=None)
    p.add_argument("--tte-max", dest="tte_max", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    _add_config_arg(p)
    p.set_defaults(func=_cmd_sample)

    def add_model_flags(p):
        p.add_argument("--work", required=True,
                       help="directory written by `sample`")
        p.add_argument("--image-side", dest="image_side", type=int, default=None)
        p.add_argument("--lstm-units", dest="lstm_units", type=int, default=None)
        p.add_argument("--dense-hidden", dest="dense_hidden", type=int, default=None)
        p.add_argument("--dropout", dest="dropout_p", type=float, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--map-extent", dest="map_extent", type=float, default=None)
        p.add_argument("--out", default=None)
        _add_config_arg(p)

    p = sub.add_parser("train", help="train one configuration and evaluate")
    _add_corpus_arg(p)
    add_model_flags(p)
    p.add_argument("--modalities", default=None,
                   help="comma list from scene,map,trajectory,ego")
    p.add_argument("--save-model", dest="save_model", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("ablate", help="run the 6-config modality grid")
    _add_corpus_arg(p)
    add_model_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient harness")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--configs-per-kind", dest="configs_per_kind", type=int, default=5)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, TrainingError, ValueError, RuntimeError, OSError) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
