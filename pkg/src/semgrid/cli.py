"""``semgrid`` command line: build grids, dense ground truth, evaluation, statistics.

Exit codes: 0 success, 1 at least one scan (or check) failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import storage, taxonomy
from .dense import AggregationParams, build_dense_gt, select_neighbor_scans
from .encoding import encode_grid, label_distribution
from .evaluation import ConfusionMatrix, EvaluationError, accumulate, format_table, results, to_json
from .grid import GridSpec
from .kitti_io import KittiFormatError, open_sequence, write_scan, write_sequence_meta
from .polar import PolarSpec, build_grid, check_coverage

log = logging.getLogger("semgrid")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- argument helpers ----------------------------------------------------


def parse_scan_range(text: str) -> tuple[int, int | None]:
    """``"A..B"`` (inclusive), ``"A.."`` (to the end) or a single index ``"A"``."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a) if a else 0, int(b) if b else None
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad scan range {text!r}; expected A..B") from None
    if lo < 0 or (hi is not None and hi < lo):
        raise argparse.ArgumentTypeError(f"bad scan range {text!r}")
    return lo, hi


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--root", default=os.environ.get("SEMGRID_ROOT"), help="dataset root (default: $SEMGRID_ROOT)")
    p.add_argument("--sequence", required=True, help="sequence id, e.g. 08")
    p.add_argument("--scans", type=parse_scan_range, default=(0, None), help="scan range A..B, inclusive")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1)
    p.add_argument("--label-map", type=Path, help="YAML/JSON raw-id -> class override")


def _add_polar_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--azimuth-bins", type=_positive_int, default=2048)
    p.add_argument("--max-range", type=float, default=56.0, help="polar grid range [m]")
    p.add_argument("--min-range", type=float, default=1.0, help="self-return cutoff [m]")
    p.add_argument("--all-polar", action="store_true", help="bin endpoint layers in polar space too")


def _polar_spec(args) -> PolarSpec:
    try:
        spec = PolarSpec(azimuth_bins=args.azimuth_bins, max_range=args.max_range, min_range=args.min_range)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not check_coverage(spec, GridSpec()):
        log.warning("polar max range %.1f m does not reach the grid corners; corner cells stay unobserved", spec.max_range)
    return spec


def _open(args):
    if not args.root:
        raise UsageError("no dataset root: pass --root or set SEMGRID_ROOT")
    try:
        seq = open_sequence(args.root, args.sequence)
    except (OSError, KittiFormatError) as exc:
        raise UsageError(f"cannot open sequence {args.sequence}: {exc}") from None
    if not len(seq):
        raise UsageError(f"sequence {args.sequence} has no scans under {args.root}")
    lo, hi = args.scans
    hi = len(seq) - 1 if hi is None else min(hi, len(seq) - 1)
    if lo > hi:
        raise UsageError(f"scan range starts at {lo}, sequence has {len(seq)} scans")
    return seq, range(lo, hi + 1)


def _label_table(args):
    if args.label_map is None:
        return None
    try:
        return taxonomy.load_override(args.label_map)
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad label map: {exc}") from None


def _run_scans(indices, work, threads: int):
    """Run ``work(i)`` over scans; per-scan errors become records, not crashes."""

    def guarded(i):
        try:
            return i, work(i), None
        except (OSError, KittiFormatError, ValueError) as exc:
            return i, None, f"{type(exc).__name__}: {exc}"

    if threads == 1:
        return [guarded(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, indices))


def _write_summary(out_dir: Path, summary: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def _finish(command: str, seq, outcomes, out_dir: Path, extra=None) -> int:
    errors = [{"scan": seq.scan_id(i), "error": err} for i, _, err in outcomes if err]
    for e in errors:
        log.error("scan %s: %s", e["scan"], e["error"])
    summary = {
        "command": command,
        "sequence": seq.sequence,
        "written": sum(1 for _, _, err in outcomes if not err),
        "errors": errors,
    }
    if extra:
        summary.update(extra)
    _write_summary(out_dir, summary)
    print(f"{command}: {summary['written']} written, {len(errors)} failed -> {out_dir}")
    return EXIT_FAILURE if errors else EXIT_OK


# --- commands ----------------------------------------------------------------


def cmd_build(args) -> int:
    polar = _polar_spec(args)
    table = _label_table(args)
    seq, indices = _open(args)
    spec = GridSpec()
    out_dir = args.out / seq.sequence

    def work(i):
        cloud = seq.scan(i)
        grid = build_grid(cloud, polar, spec, all_polar=args.all_polar, label_table=table)
        labels = encode_grid(grid) if cloud.labeled else np.full(spec.shape, taxonomy.UNLABELED, np.uint8)
        storage.write_grid_file(out_dir / f"{seq.scan_id(i)}.sgrd", storage.from_grid(grid, labels))

    t0 = time.perf_counter()
    outcomes = _run_scans(indices, work, args.threads)
    log.info("built %d scans in %.1f s", len(outcomes), time.perf_counter() - t0)
    return _finish("build", seq, outcomes, out_dir)


def cmd_dense_gt(args) -> int:
    polar = _polar_spec(args)
    table = _label_table(args)
    try:
        params = AggregationParams(max_scan_range=args.r, distance=args.distance, min_range=args.min_range)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seq, indices = _open(args)
    spec = GridSpec()
    out_dir = args.out / seq.sequence

    def work(i):
        neighbors = select_neighbor_scans(seq.poses, i, params)
        log.info("scan %s: %d neighbor scans", seq.scan_id(i), len(neighbors))
        labels = build_dense_gt(seq, i, params, spec, table, neighbors)
        grid = build_grid(seq.scan(i), polar, spec, label_table=table)
        f = storage.from_grid(grid, labels, dense=True, layers=("observability",))
        storage.write_grid_file(out_dir / f"{seq.scan_id(i)}.sgrd", f)
        return len(neighbors)

    outcomes = _run_scans(indices, work, args.threads)
    counts = {seq.scan_id(i): n for i, n, err in outcomes if not err}
    return _finish("dense-gt", seq, outcomes, out_dir, {"neighbor_counts": counts})


def _grid_files(directory: Path) -> dict[str, Path]:
    return {str(p.relative_to(directory)): p for p in sorted(directory.rglob("*.sgrd"))}


def cmd_eval(args) -> int:
    gt_files = _grid_files(args.gt)
    if not gt_files:
        raise UsageError(f"no .sgrd files under {args.gt}")
    pred_files = _grid_files(args.pred)
    cm = ConfusionMatrix()
    missing = []
    for rel, gt_path in gt_files.items():
        if rel not in pred_files:
            missing.append(rel)
            continue
        gt = storage.read_grid_file(gt_path)
        pred = storage.read_grid_file(pred_files[rel])
        obs = None
        if args.mode == "dense":
            source = gt if "observability" in gt else pred
            if "observability" not in source:
                raise EvaluationError(f"{rel}: dense evaluation needs an observability layer in the GT or prediction file")
            obs = source["observability"]
        if storage.LABEL_LAYER not in pred or storage.LABEL_LAYER not in gt:
            raise EvaluationError(f"{rel}: missing label layer")
        try:
            accumulate(pred[storage.LABEL_LAYER], gt[storage.LABEL_LAYER], args.mode, obs, into=cm)
        except EvaluationError as exc:
            raise EvaluationError(f"{rel}: {exc}") from None
    for rel in missing:
        log.error("no prediction for %s", rel)
    res = results(cm, args.mode)
    res["scans"] = len(gt_files) - len(missing)
    res["missing"] = missing
    table = format_table(res)
    print(table)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "eval.json").write_text(to_json(res) + "\n")
        (args.out / "eval.txt").write_text(table + "\n")
        from .plotting import plot_iou

        plot_iou(res, args.out / "iou.png")
    else:
        print(to_json(res))
    return EXIT_FAILURE if missing else EXIT_OK


def _named_dirs(entries: list[str]) -> dict[str, Path]:
    out = {}
    for entry in entries:
        name, sep, path = entry.partition("=")
        if not sep:
            name, path = Path(entry).name or entry, entry
        out[name] = Path(path)
    return out


def format_distribution(dists: dict[str, dict[str, float]], sep: str = "\t") -> str:
    """Class-by-input table of percentages, one row per class plus unlabeled."""
    names = [*taxonomy.CLASS_NAMES, "unlabeled"]
    lines = [sep.join(["label", *dists])]
    for n in names:
        lines.append(sep.join([n, *(f"{d[n] * 100:.3f}" for d in dists.values())]))
    return "\n".join(lines)


def cmd_stats(args) -> int:
    dists = {}
    for name, directory in _named_dirs(args.dirs).items():
        files = list(_grid_files(directory).values())
        if not files:
            log.error("%s: no .sgrd files", directory)
            return EXIT_FAILURE
        dists[name] = label_distribution(storage.read_layer(f, storage.LABEL_LAYER) for f in files)
        log.info("%s: %d files", name, len(files))
    text = format_distribution(dists)
    print(text)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "distribution.tsv").write_text(text + "\n")
        from .plotting import plot_distribution

        plot_distribution(dists, args.out / "distribution.png")
    return EXIT_OK


def cmd_export_png(args) -> int:
    from .plotting import render_layer, save_image

    f = storage.read_grid_file(args.file)
    if args.layer not in f:
        log.error("%s has no layer %r; layers: %s", args.file, args.layer, ", ".join(f.layers))
        return EXIT_FAILURE
    name = storage.FILE_NAMES.get(args.layer, args.layer)
    save_image(args.out, render_layer(f[name], is_label=name == storage.LABEL_LAYER))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_synth_check(args) -> int:
    from .oracles import axis_ray_check, check_encoder, exhaustive_histograms, random_histograms, raycast_check

    ok = True
    enc = check_encoder(exhaustive_histograms())
    rnd = check_encoder(random_histograms(args.histograms, seed=0))
    for label, res in (("exhaustive", enc), ("random", rnd)):
        print(f"encoder {label}: {res.checked} histograms, {res.mismatches} mismatches")
        ok &= res.passed
    polar = _polar_spec(args)
    axis = axis_ray_check(polar)
    print(
        f"axis rays: observability equal={axis.observability_equal}, "
        f"height error {axis.max_height_error:.3f} m"
    )
    ok &= axis.passed(args.max_height_error)
    worst_agree, worst_err, failed = 1.0, 0.0, []
    for seed in range(args.seeds):
        cmp = raycast_check(seed, polar)
        worst_agree = min(worst_agree, cmp.agreement)
        worst_err = max(worst_err, cmp.max_height_error)
        if not cmp.passed(args.min_agreement, args.max_height_error):
            failed.append(seed)
        log.info("seed %d: agreement %.5f, height error %.3f m", seed, cmp.agreement, cmp.max_height_error)
    print(
        f"ray cast: {args.seeds} scenes, min agreement {worst_agree:.5f} (>= {args.min_agreement}), "
        f"max height error {worst_err:.3f} m (<= {args.max_height_error}), failed seeds {failed}"
    )
    ok &= not failed
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_synth_export(args) -> int:
    from .synth import street_sequence

    scenes, poses = street_sequence(args.seed, n_scans=args.count, spacing=args.spacing)
    seq_dir = args.out / "sequences" / f"{int(args.sequence):02d}"
    for k, scene in enumerate(scenes):
        write_scan(seq_dir / "velodyne" / f"{k:06d}.bin", scene.cloud, seq_dir / "labels" / f"{k:06d}.label")
    write_sequence_meta(seq_dir, poses)
    print(f"wrote {len(scenes)} scans to {seq_dir}")
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semgrid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)


    p = add("build", help="multi-layer grids plus sparse ground truth per scan")
    _add_dataset_args(p)
    _add_polar_args(p)
    p.set_defaults(func=cmd_build)

    p = add("dense-gt", help="dense ground truth from neighboring scans")
    _add_dataset_args(p)
    _add_polar_args(p)
    p.add_argument("--r", type=float, default=50.0, help="sensor range r; scans within 2r are fused")
    p.add_argument("--distance", choices=("euclidean", "x"), default="euclidean")
    p.set_defaults(func=cmd_dense_gt)

    p = add("eval", help="IoU/mIoU of predicted against ground-truth grids")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--mode", choices=("sparse", "dense"), default="sparse")
    p.add_argument("--out", type=Path, help="report directory (eval.json, eval.txt, iou.png)")
    p.set_defaults(func=cmd_eval)

    p = add("stats", help="label distribution of ground-truth grids")
    p.add_argument("dirs", nargs="+", help="directories, optionally NAME=DIR")
    p.add_argument("--out", type=Path, help="report directory (distribution.tsv, distribution.png)")
    p.set_defaults(func=cmd_stats)

    p = add("export-png", help="render one layer of a grid file")
    p.add_argument("file", type=Path)
    p.add_argument("--layer", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export_png)

    p = add("synth-check", help="fast paths against reference implementations")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--histograms", type=int, default=1_000_000, help="random histograms for the encoder check")
    p.add_argument("--min-agreement", type=float, default=0.95)
    p.add_argument("--max-height-error", type=float, default=0.15)
    _add_polar_args(p)
    p.set_defaults(func=cmd_synth_check)

    p = add("synth-export", help="write a synthetic sequence in the dataset layout")
    p.add_argument("--out", type=Path, required=True, help="dataset root to create")
    p.add_argument("--sequence", default="00")
    p.add_argument("--count", type=_positive_int, default=5, help="number of scans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spacing", type=float, default=1.0, help="sensor travel per scan [m]")
    p.set_defaults(func=cmd_synth_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "synth-check" and args.seeds <= 0:
        parser.error("--seeds must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"semgrid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvaluationError, storage.GridFileError) as exc:
        print(f"semgrid: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
