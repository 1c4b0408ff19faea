"""Batch command line: ``treedecay [--seed N] [--jobs N] <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 unreadable or
malformed input, 3 failure inside a pipeline stage.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .cloud import NORMALIZED
from .errors import FormatError, InputError, StageError, TreeDecayError
from .evaluation import crossval_run
from .features import global_feature_vector, pca_2d
from .fusion import colorize, normalize_channels
from .forest import (block_importance, fit_forest, grid_search, grid_table_csv, importance_csv,
                     ranked_importance)
from .io import (read_geo_raster, read_las, read_ppm, read_text_cloud, write_las, write_ppm,
                 write_text_cloud, write_world_file)
from .pipeline import (FeatureTable, augmented_features, feature_table_csv, process_plot,
                       read_feature_table, tree_features)
from .projection import CanvasSpec, image_sidecar_csv, project_views, to_ppm_pixels
from .segmentation import TreeSegment, segment_manifest_csv, segment_trees
from .synthetic import (DEFAULT_COUNTS, PlotSpec, generate_dataset, generate_plot, manifest_csv,
                        read_manifest)
from .terrain import build_dtm, filter_ground, normalize_heights, read_dtm_text, write_dtm_text

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_STAGE = 0, 1, 2, 3
DEFAULT_GRID = {"n_estimators": [200, 400, 800], "max_depth": [16, 32, 64]}


class UsageError(TreeDecayError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- file helpers -------------------------------------------------------------

def _read_bytes(path, stage) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(stage, f"cannot read {path}: {exc.strerror}") from None


def _read_text(path, stage) -> str:
    return _read_bytes(path, stage).decode("utf-8")


def _tagged(stage, fn, *args):
    try:
        return fn(*args)
    except FormatError as exc:
        raise InputError(stage, str(exc)) from None


def load_cloud(path, stage="input"):
    data = _read_bytes(path, stage)
    if str(path).lower().endswith(".las"):
        return _tagged(stage, read_las, data)
    return _tagged(stage, read_text_cloud, data.decode("utf-8"))


def load_raster(path, world=None, stage="fusion"):
    world = world or _world_path(path)
    return _tagged(stage, read_geo_raster, _read_bytes(path, stage), _read_text(world, stage))


def _world_path(raster_path):
    p = Path(raster_path)
    return p.with_suffix(".pgw")


def _write(path, content):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(content, str):
        path.write_text(content, encoding="utf-8", newline="")
    else:
        path.write_bytes(content)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- configuration ------------------------------------------------------------

def _config(args, named=()) -> dict:
    """Defaults < --config file < --set and named flags."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = cfgmod.parse_config_text(_read_text(args.config, "config"), str(args.config))
    flags = cfgmod.parse_assignments(getattr(args, "set", []))
    for attr, key in named:
        value = getattr(args, attr, None)
        if value is not None:
            flags[key] = value
    return cfgmod.resolve(file_values, flags)


def _seed(args) -> int:
    return getattr(args, "seed", 0)


def _jobs(args) -> int:
    return getattr(args, "jobs", 1)


def _canvas_json(canvas: CanvasSpec) -> dict:
    return {"world_width": canvas.world_width, "world_height": canvas.world_height,
            "px_per_m": canvas.px_per_m, "downscale": canvas.downscale,
            "final_width": canvas.final_width, "final_height": canvas.final_height}


# -- synth --------------------------------------------------------------------

def _parse_counts(text):
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--counts expects five integers, got {text!r}") from None
    if len(values) != 5 or min(values) < 0:
        raise UsageError("--counts expects five nonnegative integers")
    return dict(zip(range(1, 6), values))


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    spec = cfgmod.synthetic_spec(cfg, _seed(args))
    counts = _parse_counts(args.counts) if args.counts else dict(DEFAULT_COUNTS)
    samples = generate_dataset(spec, counts)
    files = [f"clouds/tree_{s.tree.id:05d}.txt" for s in samples]
    for s, name in zip(samples, files):
        _write(out / name, write_text_cloud(s.tree.points))
    _write(out / "manifest.csv", manifest_csv(samples, files))
    if args.plot:
        cloud, raster, truth = generate_plot(PlotSpec(size=args.plot_size, seed=_seed(args)), spec)
        _write(out / "plot.las", write_las(cloud))
        _write(out / "plot.ppm", write_ppm(np.transpose(raster.planes, (1, 2, 0))))
        _write(out / "plot.pgw", write_world_file(raster.transform))
        _write(out / "plot_truth.csv", "x,y,level\n" + "".join(
            f"{float(x)!r},{float(y)!r},{lv}\n" for x, y, lv in truth))
    print(f"wrote {len(samples)} synthetic trees to {out}")
    return EXIT_OK


# -- pipeline -----------------------------------------------------------------

def _load_dataset(manifest_path):
    base = Path(manifest_path).parent
    try:
        rows = read_manifest(_read_text(manifest_path, "input"))
    except ValueError as exc:
        raise InputError("input", f"{manifest_path}: {exc}") from None
    trees = []
    for row in rows:
        cloud = load_cloud(base / row["file"], "input")
        if row.get("source") == "synthetic":
            cloud = cloud.replace(channel_state=NORMALIZED)
        trees.append(TreeSegment(cloud, row["sample_id"]))
    return rows, trees


def _write_views(out, trees, labels, views):
    sidecar = []
    for tree, label, tree_views in zip(trees, labels, views):
        for view in tree_views:
            name = f"images/tree_{tree.id:05d}_az{int(view.azimuth):03d}.ppm"
            _write(out / name, write_ppm(to_ppm_pixels(view)))
            sidecar.append((name, tree.id, view.azimuth, int(label) if label else None))
    _write(out / "images.csv", image_sidecar_csv(sidecar))


def cmd_pipeline(args) -> int:
    cfg = _config(args, [("threshold", "seg.threshold")])
    out = Path(args.out)
    if bool(args.manifest) == bool(args.cloud):
        raise UsageError("give either --manifest or --cloud with --raster")
    summary = {"seed": _seed(args)}
    if args.manifest:
        rows, trees = _load_dataset(args.manifest)
        if not trees:
            raise StageError("features", "the manifest lists no trees")
        labels = [r["label"] for r in rows]
        groups = [r["group"] for r in rows]
        files = [os.path.relpath(Path(args.manifest).parent / r["file"], out) for r in rows]
        records = [(r["sample_id"], r["label"], r.get("source", ""), r["group"], len(t), f)
                   for r, t, f in zip(rows, trees, files)]
        summary["mode"] = "dataset"
    else:
        if not args.raster:
            raise UsageError("--cloud needs --raster")
        cloud = load_cloud(args.cloud, "input")
        raster = load_raster(args.raster, args.world, "fusion")
        result = process_plot(cloud, raster, cfgmod.ptd_params(cfg), cfgmod.seg_params(cfg),
                              cfg["terrain.dtm_cell"])
        trees = result.kept
        labels = [0] * len(trees)
        groups = [t.id for t in trees]
        _write(out / "dtm.txt", write_dtm_text(result.dtm))
        _write(out / "segments.csv", segment_manifest_csv(trees))
        records = []
        for t in trees:
            name = f"segments/seg_{t.id:05d}.txt"
            _write(out / name, write_text_cloud(t.points))
            records.append((t.id, "", "field", t.id, len(t), name))
        summary.update(mode="plot", ground_points=int(result.ground.sum()),
                       points_outside_raster=int(result.outside.sum()),
                       segments_total=len(result.segments), segments_kept=len(trees))
    canvas = CanvasSpec.for_trees(trees, margin=cfg["proj.margin"], **cfgmod.canvas_options(cfg))
    table, views = tree_features(trees, canvas, labels, groups, cfgmod.feature_options(cfg),
                                 _jobs(args), keep_views=not args.no_images)
    if views is not None:
        _write_views(out, trees, labels, views)
    _write(out / "features.csv", feature_table_csv(table))
    _write(out / "manifest.csv", "sample_id,label,source,group,point_count,file\n" + "".join(
        ",".join(str(v) for v in rec) + "\n" for rec in records))
    summary.update(canvas=_canvas_json(canvas), trees=len(trees), feature_rows=len(table),
                   config=cfg)
    _write(out / "pipeline.json", _json(summary))
    print(f"{len(trees)} trees, {len(table)} feature rows written to {out}")
    return EXIT_OK


# -- crossval -----------------------------------------------------------------

def _shuffle_by_group(labels, groups, seed):
    uniq, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
    perm = np.random.default_rng((seed, 1)).permutation(len(uniq))
    return labels[first][perm][inverse]


def _augmentation(args, cfg, table, features_path):
    manifest = args.manifest or Path(features_path).parent / "manifest.csv"
    if not cfg["eval.augment"] or not Path(manifest).exists():
        return None, "off"
    rows, trees = _load_dataset(manifest)
    by_group = {r["group"]: t for r, t in zip(rows, trees)}
    groups = [g for g in dict.fromkeys(table.groups.tolist())]
    missing = [g for g in groups if g not in by_group]
    if missing:
        raise InputError("input", f"manifest {manifest} lacks tree group {missing[0]}")
    pipeline_json = Path(features_path).parent / "pipeline.json"
    if pipeline_json.exists():
        canvas = CanvasSpec(**json.loads(_read_text(pipeline_json, "input"))["canvas"])
    else:
        canvas = CanvasSpec.for_trees([by_group[g] for g in groups], margin=cfg["proj.margin"],
                                      **cfgmod.canvas_options(cfg))
    label_of = dict(zip(table.groups.tolist(), table.labels.tolist()))
    aug = augmented_features([by_group[g] for g in groups], [label_of[g] for g in groups], groups,
                             canvas, cfgmod.augment_config(cfg, _seed(args)),
                             cfg["eval.augment_copies"], cfgmod.feature_options(cfg), _jobs(args))
    return aug, str(manifest)


def cmd_crossval(args) -> int:
    cfg = _config(args, [("k", "eval.k"), ("n_estimators", "rf.n_estimators"),
                         ("max_depth", "rf.max_depth")])
    if args.no_augment:
        cfg["eval.augment"] = False
    out = Path(args.out)
    table = _tagged("input", read_feature_table, _read_text(args.features, "input"))
    if (table.labels == 0).any():
        raise InputError("input", "every feature row needs a label for cross-validation")
    labels = table.labels
    if args.shuffle_labels:
        labels = _shuffle_by_group(labels, table.groups, _seed(args))
    aug, aug_source = _augmentation(args, cfg, table, args.features)
    augmented = None
    if aug is not None:
        aug_labels = aug.labels
        if args.shuffle_labels:
            label_of = dict(zip(table.groups.tolist(), labels.tolist()))
            aug_labels = np.array([label_of[g] for g in aug.groups.tolist()])
        augmented = (aug.X, aug_labels, aug.groups)
    rf = cfgmod.rf_config(cfg)
    try:
        result = crossval_run(table.X, labels, table.groups, k=cfg["eval.k"], seed=_seed(args),
                              config=rf, augmented=augmented, n_jobs=_jobs(args),
                              group_atomic=cfg["eval.group_atomic"])
    except ValueError as exc:
        raise StageError("crossval", str(exc)) from exc
    _write(out / "metrics.csv", result.to_csv())
    _, projected, variances = pca_2d(table.X)
    _write(out / "pca.csv", "sample_id,tree_id,label,pc1,pc2\n" + "".join(
        f"{sid},{t},{lab},{p[0]!r},{p[1]!r}\n"
        for sid, t, lab, p in zip(table.sample_ids(), table.tree_ids, labels, projected)))
    summary = {"mean_oa": result.mean_oa, "mean_kappa": result.mean_kappa,
               "folds": int(cfg["eval.k"]), "augmentation": aug_source,
               "shuffled_labels": bool(args.shuffle_labels), "seed": _seed(args),
               "pca_variance": [float(v) for v in variances], "config": cfg}
    if args.grid:
        best, grid_table = grid_search(table.X, labels, DEFAULT_GRID, k=cfg["eval.k"],
                                       seed=_seed(args), base=rf, groups=table.groups,
                                       n_jobs=_jobs(args))
        _write(out / "grid.csv", grid_table_csv(grid_table))
        summary["grid_best"] = {"n_estimators": best.n_estimators, "max_depth": best.max_depth}
    if args.importance:
        model = fit_forest(table.X, labels, rf, n_jobs=_jobs(args), feature_names=table.names)
        ranked = ranked_importance(model)
        _write(out / "importance.csv", importance_csv(ranked))
        blocks = block_importance([v for _, v in ranked], [n for n, _ in ranked])
        _write(out / "importance_blocks.csv", importance_csv(blocks))
    _write(out / "crossval.json", _json(summary))
    print(f"mean OA {result.mean_oa:.4f}, mean kappa {result.mean_kappa:.4f}")
    return EXIT_OK


# -- single stages ------------------------------------------------------------

def cmd_fuse(args) -> int:
    cloud = load_cloud(args.cloud, "input")
    raster = load_raster(args.raster, args.world, "fusion")
    colored, outside = colorize(cloud, raster)
    _write(args.out, write_text_cloud(normalize_channels(colored)))
    print(f"{int(outside.sum())} of {len(cloud)} points fell outside the raster")
    return EXIT_OK


def cmd_ground(args) -> int:
    cfg = _config(args)
    cloud = load_cloud(args.cloud, "input")
    out = Path(args.out)
    try:
        mask = filter_ground(cloud, cfgmod.ptd_params(cfg))
        dtm = build_dtm(cloud, mask, cfg["terrain.dtm_cell"])
    except ValueError as exc:
        raise StageError("terrain", str(exc)) from exc
    _write(out / "ground.txt", "".join("1\n" if m else "0\n" for m in mask))
    _write(out / "dtm.txt", write_dtm_text(dtm))
    _write(out / "normalized.txt", write_text_cloud(normalize_heights(cloud, dtm)))
    print(f"{int(mask.sum())} ground points of {len(cloud)}")
    return EXIT_OK


def cmd_normalize(args) -> int:
    cloud = load_cloud(args.cloud, "input")
    dtm = _tagged("normalize", read_dtm_text, _read_text(args.dtm, "normalize"))
    _write(args.out, write_text_cloud(normalize_heights(cloud, dtm)))
    return EXIT_OK


def cmd_segment(args) -> int:
    cfg = _config(args, [("threshold", "seg.threshold")])
    cloud = load_cloud(args.cloud, "input")
    out = Path(args.out)
    try:
        segments = segment_trees(cloud, cfgmod.seg_params(cfg))
    except ValueError as exc:
        raise StageError("segmentation", str(exc)) from exc
    for seg in segments:
        _write(out / f"segments/seg_{seg.id:05d}.txt", write_text_cloud(seg.points))
    _write(out / "segments.csv", segment_manifest_csv(segments))
    print(f"{len(segments)} segments")
    return EXIT_OK


def cmd_project(args) -> int:
    cfg = _config(args)
    tree = TreeSegment(load_cloud(args.cloud, "input"), args.tree_id)
    if args.world_width and args.world_height:
        canvas = CanvasSpec(args.world_width, args.world_height, **cfgmod.canvas_options(cfg))
    else:
        canvas = CanvasSpec.for_trees([tree], margin=cfg["proj.margin"],
                                      **cfgmod.canvas_options(cfg))
    _write_views(Path(args.out), [tree], [0], [project_views(tree, canvas)])
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _config(args)
    opts = cfgmod.feature_options(cfg)
    base = Path(args.images)
    rows = list(csv.DictReader(_read_text(base / "images.csv", "input").splitlines()))
    X, tree_ids, azimuths, labels, names = [], [], [], [], None
    for row in rows:
        pixels = _tagged("features", read_ppm, _read_bytes(base / row["file"], "features"))
        vec = global_feature_vector(pixels / 255.0, opts.levels, opts.hsv_bins,
                                    opts.include_optional)
        X.append(vec.values)
        names = vec.names
        tree_ids.append(int(row["tree_id"]))
        azimuths.append(int(row["azimuth"]))
        labels.append(int(row["label"]) if row["label"] else 0)
    if not X:
        raise StageError("features", "no images listed")
    table = FeatureTable(np.array(X), np.array(labels), np.array(tree_ids), np.array(tree_ids),
                         np.array(azimuths), names)
    _write(args.out, feature_table_csv(table))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _common(parser):
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for every random stream (default 0)")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="worker count; results do not depend on it (default 1)")
    parser.add_argument("--config", default=argparse.SUPPRESS, help="key = value config file")
    parser.add_argument("--set", action="append", default=argparse.SUPPRESS,
                        metavar="KEY=VALUE", help="override one config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treedecay", description=__doc__.split("\n")[0])
    _common(parser)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic labeled dataset")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--counts", help="trees per level 1-5, e.g. 233,167,236,239,155")
    p.add_argument("--plot", action="store_true", help="also write a synthetic survey plot")
    p.add_argument("--plot-size", type=float, default=60.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run all stages on a plot or a tree dataset")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="dataset manifest (pre-segmented trees)")
    p.add_argument("--cloud", help="plot point cloud (.las or text)")
    p.add_argument("--raster", help="CIR raster (.ppm)")
    p.add_argument("--world", help="world file (default: raster path with .pgw)")
    p.add_argument("--threshold", type=float, help="segmentation distance threshold (m)")
    p.add_argument("--no-images", action="store_true", help="skip writing the view images")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("crossval", help="k-fold evaluation of the random forest")
    _common(p)
    p.add_argument("features", help="feature CSV written by 'pipeline'")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="tree manifest used for augmentation")
    p.add_argument("--k", type=int)
    p.add_argument("--n-estimators", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--grid", action="store_true", help="also run the hyperparameter grid search")
    p.add_argument("--shuffle-labels", action="store_true", help="permutation control run")
    p.add_argument("--importance", action="store_true", help="write feature importances")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("fuse", help="colorize a cloud from a CIR raster")
    _common(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--raster", required=True)
    p.add_argument("--world")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("ground", help="ground filter, DTM and normalized heights")
    _common(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("normalize", help="heights above a DTM")
    _common(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--dtm", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("segment", help="segment a height-normalized cloud into trees")
    _common(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("project", help="render the four views of one tree")
    _common(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tree-id", type=int, default=0)
    p.add_argument("--world-width", type=float)
    p.add_argument("--world-height", type=float)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("features", help="feature CSV from rendered view images")
    _common(p)
    p.add_argument("--images", required=True, help="directory holding images.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, cfgmod.ConfigError) as exc:
        print(f"treedecay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, FormatError) as exc:
        print(f"treedecay: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"treedecay: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StageError, TreeDecayError, ValueError) as exc:
        msg = str(exc) if isinstance(exc, StageError) else f"[{args.command}] {exc}"
        print(f"treedecay: error: {msg}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
