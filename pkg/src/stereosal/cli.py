"""Command-line front end: extract, train, predict, importance, evaluate, compare-fusion.

Every command reads a JSON run manifest (``--manifest``).  Outputs go to the
manifest's ``output_dir`` unless the ``STEREOSAL_OUTPUT_DIR`` environment
variable is set.  Exit status is 0 on success, 1 if any per-video unit
failed and 2 for usage errors or missing prerequisites.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import store
from .evaluation import evaluate, histogram_match, load_fixations, postprocess, tune_postprocess
from .evaluation.fixations import display_view, fixation_density
from .evaluation.metrics import METRICS
from .forest import ForestModel, ForestParams, ModelVersionError, oob_importance, train_forest
from .fusion import (FEATURE_KEYS, FEATURE_LABELS, SCHEMES, TrainingSet, fit_lmswa, fuse_baseline, predict_map,
                     resolve_features, sample_training)
from .geometry import ViewingGeometry
from .highlevel import ingest_detections
from .imaging import is_normalized
from .io import read_disparity, read_flo, read_frame, read_raw, write_map_image, write_raw
from .manifest import ManifestError, RunManifest
from .motion import FlowField
from .pipeline import FeatureExtractor, PipelineConfig

log = logging.getLogger("stereosal")

FUSION_CHOICES = ("forest",) + SCHEMES
EXIT_OK, EXIT_UNIT_FAILED, EXIT_USAGE = 0, 1, 2


class PrerequisiteError(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers

def _seed(args, manifest: RunManifest) -> int:
    return manifest.seed if args.seed is None else args.seed


def _features(args):
    if not args.features:
        return FEATURE_KEYS
    names = [n for chunk in args.features for n in chunk.split(",") if n.strip()]
    return resolve_features(names)


def _stack_dir(out: Path, video: str) -> Path:
    return out / "stacks" / video


def _pred_dir(out: Path, scheme: str, video: str) -> Path:
    return out / "predictions" / scheme / video


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _eval_videos(manifest: RunManifest) -> list[str]:
    return list(manifest.validation) or sorted(manifest.videos)


# ---------------------------------------------------------------- extract

def extract_video(manifest: RunManifest, name: str, pipe_cfg: dict, geometry: dict, features, out: Path) -> dict:
    """Extract and store every frame of one video; returns summed timings."""
    missing = manifest.missing_inputs(name)
    if missing:
        raise FileNotFoundError(f"missing input(s): {', '.join(missing)}")
    v = manifest.videos[name]
    frames = v.frame_files()
    disps = v.disparity_files()
    if not frames:
        raise FileNotFoundError(f"no frames in {v.frames}")
    if len(disps) != len(frames):
        raise ValueError(f"{len(frames)} frames but {len(disps)} disparity maps")
    flows = v.flow_files()
    if flows is not None and len(flows) < len(frames) - 1:
        raise ValueError(f"{len(frames)} frames need {len(frames) - 1} flow files, found {len(flows)}")
    first = read_frame(frames[0])
    h, w = first.shape[:2]
    dets = ingest_detections(v.detections, frame_size=(w, h)) if v.detections else {}
    cfg = PipelineConfig.from_dict(pipe_cfg)
    ex = FeatureExtractor(ViewingGeometry.from_dict(geometry), (h, w), cfg, features)
    vdir = _stack_dir(out, name)
    vdir.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    prev = None
    ids = []
    for i, (fp, dp) in enumerate(zip(frames, disps)):
        frame = first if i == 0 else read_frame(fp)
        disparity = read_disparity(dp, v.disparity_scale, v.disparity_offset)
        flow = None
        if flows is not None and i > 0:
            flow = FlowField(*read_flo(flows[i - 1]), source="external")
        fid = f"{i:04d}"
        res = ex.extract(frame, disparity, prev, flow, dets.get(i, ()), fid)
        store.write_stack(vdir / f"{fid}.f32", res.stack)
        prev = res.memory
        ids.append(fid)
        for k, t in res.timings.items():
            timings[k] = timings.get(k, 0.0) + t
    store.write_index(vdir, features, (h, w), ids, store.config_hash({"pipeline": cfg.to_dict(), "geometry": geometry}),
                      timings)
    return {"frames": len(ids), "timings": timings}


def _extract_job(job):
    manifest_path, out, name, pipe_cfg, geometry, features = job
    manifest = RunManifest.load(manifest_path)
    try:
        return name, True, extract_video(manifest, name, pipe_cfg, geometry, features, Path(out))
    except Exception as exc:  # isolate per-video failures
        return name, False, f"{type(exc).__name__}: {exc}"


def cmd_extract(args, manifest: RunManifest, config: dict) -> int:
    out = manifest.output_dir
    features = _features(args)
    pipe_cfg = dict(config.get("pipeline", {}))
    PipelineConfig.from_dict(pipe_cfg)  # fail fast on bad keys
    geometry = {**config.get("geometry", {}), **manifest.geometry}
    ViewingGeometry.from_dict(geometry)
    chash = store.config_hash({"pipeline": PipelineConfig.from_dict(pipe_cfg).to_dict(), "geometry": geometry})
    todo = []
    for name in sorted(manifest.videos):
        if store.is_complete(_stack_dir(out, name), features, chash):
            log.info("%s: stacks up to date, skipped", name)
            continue
        todo.append((str(manifest.path), str(out), name, pipe_cfg, geometry, features))
    t0 = time.perf_counter()
    if args.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_extract_job, todo))
    else:
        results = [_extract_job(j) for j in todo]
    failed = 0
    totals: dict[str, float] = {}
    n_frames = 0
    for name, ok, info in results:
        if ok:
            n_frames += info["frames"]
            for k, t in info["timings"].items():
                totals[k] = totals.get(k, 0.0) + t
            log.info("%s: %d frame(s) extracted", name, info["frames"])
        else:
            failed += 1
            log.error("%s: extraction failed: %s", name, info)
    if todo:
        _write_json(out / "timings.json", {
            "frames": n_frames,
            "wall_seconds": time.perf_counter() - t0,
            "seconds_per_frame": {k: t / max(n_frames, 1) for k, t in sorted(totals.items())},
            "features": list(features),
        })
        for k, t in sorted(totals.items()):
            print(f"timing {k:<14} {1000 * t / max(n_frames, 1):9.1f} ms/frame")
    print(f"extract: {len(results) - failed} video(s) done, {len(manifest.videos) - len(todo)} up to date, "
          f"{failed} failed")
    return EXIT_UNIT_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------- train

def _load_stacks(out: Path, video: str):
    vdir = _stack_dir(out, video)
    if not (vdir / store.INDEX_NAME).exists():
        raise PrerequisiteError(f"no feature stacks for video {video!r} in {vdir}; run extract first")
    return list(store.load_video_stacks(vdir))


def _training_items(manifest: RunManifest, out: Path, video: str, g: ViewingGeometry):
    v = manifest.videos[video]
    if v.fixations is None:
        raise PrerequisiteError(f"training video {video!r} has no fixations")
    fx = load_fixations(v.fixations)
    items = []
    for i, stack in _load_stacks(out, video):
        pts = fx.points(i)
        if len(pts) == 0:
            continue
        items.append((stack, display_view(fixation_density(fx, i, g, stack.shape))))
    return items


def _training_set_path(out: Path) -> Path:
    return out / "training_set.npz"


def cmd_train(args, manifest: RunManifest, config: dict) -> int:
    out = manifest.output_dir
    seed = _seed(args, manifest)
    tcfg = dict(config.get("training", {}))
    g = manifest.viewing_geometry(config)
    videos = list(manifest.train) or sorted(manifest.videos)
    data = {v: _training_items(manifest, out, v, g) for v in videos}
    features = _features(args)
    first = next((items[0] for items in data.values() if items), None)
    stack_names = first[0].names if first else ()
    absent = [f for f in features if f not in stack_names]
    if absent:
        raise PrerequisiteError(f"stacks lack requested features {absent}; re-run extract")
    ts = sample_training(data, int(tcfg.get("frames_per_video", 10**9)), int(tcfg.get("pixels_per_frame", 1000)),
                         seed, features)
    if len(ts) == 0:
        raise PrerequisiteError("training set is empty (no frames with fixations)")
    params = ForestParams(
        n_trees=int(tcfg.get("n_trees", 40)),
        min_leaf=int(tcfg.get("min_leaf", 10)),
        bootstrap_ratio=float(tcfg.get("bootstrap_ratio", 1 / 3)),
        seed=seed,
    )
    t0 = time.perf_counter()
    model = train_forest(ts.X, ts.y, list(features), params, workers=args.workers)
    elapsed = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.json")
    np.savez(_training_set_path(out), X=ts.X, y=ts.y, names=np.array(ts.names), provenance=ts.provenance)
    _write_json(out / "train_log.json", {
        "n_trees": params.n_trees,
        "min_leaf": params.min_leaf,
        "bootstrap_ratio": params.bootstrap_ratio,
        "features_per_split": params.features_per_split(len(features)),
        "seed": seed,
        "videos": videos,
        "frames": int(len(np.unique(ts.provenance[:, :2], axis=0))),
        "samples": len(ts),
        "features": list(features),
        "oob_mse": model.oob_mse,
        "train_seconds": elapsed,
    })
    print(f"train: {params.n_trees} trees on {len(ts)} samples x {len(features)} features "
          f"(OOB MSE {model.oob_mse:.5f}, {elapsed:.1f} s) -> {out / 'model.json'}")
    return EXIT_OK


def _load_model(out: Path) -> ForestModel:
    p = out / "model.json"
    if not p.exists():
        raise PrerequisiteError(f"no model at {p}; run train first")
    return ForestModel.load(p)


def _load_training_set(out: Path) -> TrainingSet:
    p = _training_set_path(out)
    if not p.exists():
        raise PrerequisiteError(f"no training set at {p}; run train first")
    with np.load(p) as z:
        return TrainingSet(z["X"], z["y"], tuple(str(n) for n in z["names"]), z["provenance"])


# ---------------------------------------------------------------- predict

def _fuse(scheme, stack, features, model=None, lmswa_weights=None):
    if scheme == "forest":
        return predict_map(model, stack)
    maps = [stack[f] for f in features]
    if scheme == "lmswa":
        return fuse_baseline(maps, scheme, weights=lmswa_weights)
    return fuse_baseline(maps, scheme)


def _scheme_inputs(schemes, out: Path, args):
    model = _load_model(out) if "forest" in schemes else None
    features = tuple(model.feature_names) if model is not None and not args.features else _features(args)
    weights = None
    if "lmswa" in schemes:
        ts = _load_training_set(out)
        cols = [ts.names.index(f) for f in features if f in ts.names]
        if len(cols) != len(features):
            raise PrerequisiteError("training set lacks some requested features; re-run train with them")
        weights = fit_lmswa(ts.X[:, cols], ts.y)
    return model, features, weights


def _schemes(args) -> list[str]:
    return list(dict.fromkeys(args.fusion or ["forest"]))


def cmd_predict(args, manifest: RunManifest, config: dict) -> int:
    out = manifest.output_dir
    schemes = _schemes(args)
    model, features, weights = _scheme_inputs(schemes, out, args)
    failed = 0
    for video in sorted(manifest.videos):
        try:
            stacks = _load_stacks(out, video)
            for scheme in schemes:
                pdir = _pred_dir(out, scheme, video)
                pdir.mkdir(parents=True, exist_ok=True)
                for _, stack in stacks:
                    sal = _fuse(scheme, stack, features, model, weights)
                    if not is_normalized(sal):
                        raise ValueError(f"{scheme} produced a map outside [0, 1]")
                    write_raw(pdir / f"{stack.frame_id}.f32", sal)
                    write_map_image(pdir / f"{stack.frame_id}.png", sal)
            log.info("%s: %d frame(s) predicted", video, len(stacks))
        except store.StackVersionError:
            raise
        except (PrerequisiteError, OSError, ValueError) as exc:
            failed += 1
            log.error("%s: prediction failed: %s", video, exc)
    print(f"predict: {len(manifest.videos) - failed} video(s) x {len(schemes)} scheme(s) -> {out / 'predictions'}")
    return EXIT_UNIT_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------- importance

def cmd_importance(args, manifest: RunManifest, config: dict) -> int:
    out = manifest.output_dir
    model = _load_model(out)
    ts = _load_training_set(out)
    if tuple(ts.names) != tuple(model.feature_names) or len(ts) != model.n_train:
        raise PrerequisiteError("training set on disk does not match the model; re-run train")
    imp = oob_importance(model, ts.X, ts.y, seed=_seed(args, manifest))
    order = np.argsort(-imp, kind="stable")
    path = out / "importance.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "key", "importance"])
        for i in order:
            key = model.feature_names[i]
            w.writerow([FEATURE_LABELS.get(key, key), key, f"{imp[i]:.6f}"])
    for i in order:
        key = model.feature_names[i]
        print(f"{FEATURE_LABELS.get(key, key):<28} {imp[i]:.4f}")
    print(f"importance -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------- evaluate

def _load_predictions(out: Path, scheme: str, videos):
    preds = {}
    for video in videos:
        pdir = _pred_dir(out, scheme, video)
        files = sorted(pdir.glob("*.f32")) if pdir.exists() else []
        if not files:
            raise PrerequisiteError(f"no {scheme} predictions for {video!r}; run predict --fusion {scheme}")
        preds[video] = {int(p.stem): read_raw(p) for p in files}
    return preds


def _fixations_and_shapes(manifest: RunManifest, out: Path, videos):
    fixations, shapes = {}, {}
    for video in videos:
        v = manifest.videos[video]
        if v.fixations is None or not v.fixations.exists():
            raise PrerequisiteError(f"video {video!r} has no fixation file")
        fixations[video] = load_fixations(v.fixations)
        idx = store.read_index(_stack_dir(out, video))
        shapes[video] = (idx["height"], idx["width"])
    return fixations, shapes


def _apply_postprocess(preds, manifest, out, scheme):
    """Tune center weight / blur on the training split and apply them."""
    train = list(manifest.train)
    if not train:
        return preds, None
    tp = _load_predictions(out, scheme, train)
    fx, shapes = _fixations_and_shapes(manifest, out, train)
    maps, pts = [], []
    for v in train:
        for i, m in tp[v].items():
            p = fx[v].points(i)
            if len(p):
                maps.append(m)
                pts.append(p)
    h = next(iter(shapes.values()))[0]
    scale = h / 1080.0  # the sigma grid is stated for 1080-line frames
    sigmas = tuple(s * scale for s in (0.0, 15.0, 30.0, 60.0, 90.0))
    w, s, auc = tune_postprocess(maps, pts, sigmas=sigmas)
    log.info("%s: post-processing tuned to center weight %.1f, blur sigma %.2f px (train AUC %.4f)", scheme, w, s, auc)
    return {v: {i: postprocess(m, w, s) for i, m in fr.items()} for v, fr in preds.items()}, (w, s)


def _match_histograms(preds, fixations, g, shapes):
    """Remap every prediction onto the value distribution of its frame's fixation map."""
    out = {}
    for v, frames in preds.items():
        out[v] = {}
        for i, m in frames.items():
            fx = fixations[v].select(frame=i)
            out[v][i] = histogram_match(m, display_view(fixation_density(fx, i, g, shapes[v]))) if len(fx) else m
    return out


def _write_report(rep, out: Path, stem: str) -> None:
    rep.to_csv(out / f"{stem}.csv")
    with open(out / f"{stem}_pvalues.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["metric", "model_a", "model_b", "p_value"])
        w.writeheader()
        for row in rep.pvalue_rows():
            w.writerow(row)
    (out / f"{stem}.txt").write_text(rep.format_table() + "\n")


def cmd_evaluate(args, manifest: RunManifest, config: dict) -> int:
    out = manifest.output_dir
    videos = _eval_videos(manifest)
    if len(videos) < 2:
        log.warning("fewer than two evaluation videos: confidence intervals and sAUC will be missing")
    g = manifest.viewing_geometry(config)
    fixations, shapes = _fixations_and_shapes(manifest, out, videos)
    preds = {}
    for scheme in _schemes(args):
        p = _load_predictions(out, scheme, videos)
        if args.postprocess:
            p, _ = _apply_postprocess(p, manifest, out, scheme)
        if args.histogram_match:
            p = _match_histograms(p, fixations, g, shapes)
        preds[scheme] = p
    rep = evaluate(preds, fixations, g, shapes, seed=_seed(args, manifest), baselines=True)
    _write_report(rep, out, "report")
    print(rep.format_table())
    if "split_half_pcc" in rep.extras:
        print(f"split-half PCC (Spearman-Brown): {rep.extras['split_half_pcc']:.4f}")
    print(f"evaluate -> {out / 'report.csv'}")
    return EXIT_OK


def cmd_compare_fusion(args, manifest: RunManifest, config: dict) -> int:
    out = manifest.output_dir
    schemes = list(FUSION_CHOICES)
    model, features, weights = _scheme_inputs(schemes, out, args)
    videos = _eval_videos(manifest)
    g = manifest.viewing_geometry(config)
    fixations, shapes = _fixations_and_shapes(manifest, out, videos)
    preds = {s: {} for s in schemes}
    for video in videos:
        for i, stack in _load_stacks(out, video):
            for s in schemes:
                preds[s].setdefault(video, {})[i] = _fuse(s, stack, features, model, weights)
    rep = evaluate(preds, fixations, g, shapes, seed=_seed(args, manifest), baselines=False)
    path = out / "fusion_comparison.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fusion"] + list(METRICS))
        for s in schemes:
            w.writerow([s] + [f"{rep.means[s][m]:.6g}" for m in METRICS])
        w.writerow(["svr"] + ["unavailable"] * len(METRICS))
    lines = [f"{'Fusion':<16}" + "".join(f"{m:>9}" for m in METRICS)]
    for s in schemes:
        lines.append(f"{s:<16}" + "".join(f"{rep.means[s][m]:>9.4f}" for m in METRICS))
    lines.append(f"{'svr':<16}" + "".join(f"{'n/a':>9}" for _ in METRICS))
    (out / "fusion_comparison.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"compare-fusion -> {path}")
    return EXIT_OK


def cmd_make_demo(args) -> int:
    from .synthetic import make_demo

    path = make_demo(args.directory, n_videos=args.videos, n_frames=args.frames, seed=args.seed or 0)
    print(f"demo manifest -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

COMMANDS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "predict": cmd_predict,
    "importance": cmd_importance,
    "evaluate": cmd_evaluate,
    "compare-fusion": cmd_compare_fusion,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stereosal", description="Saliency prediction for stereoscopic video")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--manifest", required=True, help="run manifest (JSON)")
        sp.add_argument("--config", help="config file (JSON); overrides the manifest's")
        sp.add_argument("--seed", type=int, help="overrides the manifest seed")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--features", action="append",
                        help="feature subset by key or table name (comma separated, repeatable)")
        sp.add_argument("--fusion", action="append", choices=FUSION_CHOICES,
                        help="fusion scheme (repeatable; default forest)")
        if name == "evaluate":
            sp.add_argument("--postprocess", action="store_true",
                            help="tune center bias and blur on the training split and apply them")
            sp.add_argument("--histogram-match", action="store_true",
                            help="match each map's histogram to its frame's fixation map (after --postprocess)")
    demo = sub.add_parser("make-demo", help="write the synthetic demo clips and manifest")
    demo.add_argument("directory")
    demo.add_argument("--videos", type=int, default=3)
    demo.add_argument("--frames", type=int, default=10)
    demo.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "make-demo":
        return cmd_make_demo(args)
    try:
        manifest = RunManifest.load(args.manifest)
        config = manifest.load_config(args.config)
        return COMMANDS[args.command](args, manifest, config)
    except (ManifestError, PrerequisiteError, ModelVersionError, store.StackVersionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
