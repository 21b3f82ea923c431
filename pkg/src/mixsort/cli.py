"""Command-line front end: ``mixsort {track,eval,analyze,synth,interp}``.

Exit codes: 0 success, 1 configuration error, 2 I/O or file-format error,
3 contract violation. Every relative path is resolved against ``--root``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

import jsonschema

from . import __version__
from .appearance import HistogramProvider, ImageSource, NullProvider, OracleProvider
from .dataset_io import (
    _stats,
    adjacent_iou_stats,
    category_stats,
    find_sequences,
    format_results,
    kf_adjacent_iou_stats,
    read_detections,
    read_gt,
    read_results,
    read_seqinfo,
)
from .exceptions import ConfigError, ContractViolation, DatasetFormatError
from .metrics import aggregate, evaluate, report_to_json, reports_to_csv
from .synth import SynthConfig, crossing_scenario, generate, write_corpus
from .tracker import TrackerConfig, linear_interpolation, run_sequence

logger = logging.getLogger("mixsort")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CONTRACT = 0, 1, 2, 3
WORKERS_ENV = "MIXSORT_WORKERS"

# key -> (json type, description). Defaults come from TrackerConfig.
TRACKER_KEYS = {
    "alpha": ("number", "weight of IoU in the fused similarity alpha*IoU + (1-alpha)*V; 1 = IoU only, 0 = visual only"),
    "tau_high": ("number", "detections scoring >= tau_high enter the first association stage"),
    "tau_low": ("number", "detections in [tau_low, tau_high) enter the second, IoU-only stage; lower scores are discarded"),
    "init_score": ("number", "minimum score for an unmatched detection to start a new track"),
    "max_lost_age": ("integer", "frames a lost track is kept before removal"),
    "search_factor": ("number", "search region side as a multiple of sqrt(w*h) of the predicted box"),
    "grid": ("integer", "heatmap resolution (cells per side) of the search region"),
    "template_threshold": ("number", "template refresh when the matched box is uncovered by other detections above this ratio"),
    "motion_mode": ("string", "none | kalman | kalman_oc"),
    "base_mode": ("string", "byte | oc (oc upgrades kalman to kalman_oc)"),
    "interp_max_gap": ("integer", "longest run of missing frames filled by linear interpolation"),
    "min_box_w": ("number", "detections narrower than this are dropped"),
    "min_box_h": ("number", "detections shorter than this are dropped"),
    "first_gate": ("number", "minimum fused similarity for a first-stage match"),
    "second_gate": ("number", "minimum IoU for a second-stage match"),
    "min_hits": ("integer", "matches needed before a track is reported"),
    "use_iou": ("boolean", "include the IoU term; false scores on visual similarity alone"),
    "visual_in_second_stage": ("boolean", "fuse visual similarity in the second stage too"),
    "fuse_lost_tracks": ("boolean", "use visual similarity for lost tracks"),
    "oc_direction_weight": ("number", "weight of the direction-consistency cost (kalman_oc only)"),
    "oc_delta": ("integer", "frame offset used to estimate a track's heading (kalman_oc only)"),
    "invert_template_rule": ("boolean", "refresh the template when the box is mostly covered instead (ablation)"),
}

RUN_KEYS = {
    "provider": ("string", "null | oracle | histogram; oracle reads <seq>/gt/gt.txt, histogram reads <seq>/img1"),
    "interpolate": ("boolean", "apply linear interpolation to the output (default true)"),
    "oracle_corruption": ("number", "probability that the oracle points at a wrong identity"),
    "seed": ("integer", "seed for the oracle corruption draws"),
    "histogram_bins": ("integer", "bins per colour channel for the histogram provider"),
}

RUN_DEFAULTS = {"provider": "null", "interpolate": True, "oracle_corruption": 0.0, "seed": 0, "histogram_bins": 8}

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        **{k: {"type": t} for k, (t, _) in {**TRACKER_KEYS, **RUN_KEYS}.items()},
        "provider": {"enum": ["null", "oracle", "histogram"]},
        "motion_mode": {"enum": ["none", "kalman", "kalman_oc"]},
        "base_mode": {"enum": ["byte", "oc"]},
        "oracle_corruption": {"type": "number", "minimum": 0, "maximum": 1},
        "histogram_bins": {"type": "integer", "minimum": 1},
    },
}


# Where each default comes from: the published MixSort setup, the ByteTrack or
# OC-SORT baseline it plugs into, or a choice made in this implementation.
ORIGIN = {
    "alpha": "MixSort fusion weight",
    "interp_max_gap": "MixSort post-processing",
    "min_box_w": "annotation rule for tiny boxes",
    "min_box_h": "annotation rule for tiny boxes",
    "template_threshold": "MixSort template rule; value chosen here",
    "search_factor": "MixFormer-style search region",
    "grid": "MixFormer-style search region",
    "tau_high": "ByteTrack",
    "tau_low": "ByteTrack",
    "init_score": "ByteTrack",
    "max_lost_age": "ByteTrack",
    "first_gate": "ByteTrack",
    "second_gate": "ByteTrack",
    "oc_direction_weight": "OC-SORT",
    "oc_delta": "OC-SORT",
}


def _config_help() -> str:
    defaults = TrackerConfig().to_dict()
    lines = ["config keys (JSON object; unknown keys are rejected, flags override):"]
    for k, (t, desc) in TRACKER_KEYS.items():
        origin = ORIGIN.get(k, "implementation choice")
        lines.append(f"  {k} ({t}, default {json.dumps(defaults[k])}; {origin}): {desc}")
    for k, (t, desc) in RUN_KEYS.items():
        lines.append(f"  {k} ({t}, default {json.dumps(RUN_DEFAULTS[k])}): {desc}")
    return "\n".join(lines)


# -- helpers -------------------------------------------------------------------


def _resolve(root: Path, p) -> Optional[Path]:
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else root / p


def load_run_config(path: Optional[Path], overrides: dict) -> dict:
    """Merge defaults, the JSON file and flag overrides; validate before use."""
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    try:
        jsonschema.validate(doc, RUN_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from None
    merged = {**RUN_DEFAULTS, **doc, **{k: v for k, v in overrides.items() if v is not None}}
    tracker = {k: merged[k] for k in TRACKER_KEYS if k in merged}
    merged["tracker"] = TrackerConfig(**tracker)
    return merged


def _workers(arg: Optional[int]) -> int:
    if arg is not None:
        n = arg
    else:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError(f"worker count must be >= 1, got {n}")
    return n


def _map(fn, jobs: Sequence, workers: int) -> list:
    """Run jobs in order; with several workers each job goes to one process."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _make_provider(run: dict, seq_dir: Optional[Path]):
    kind = run["provider"]
    if kind == "null":
        return NullProvider(), None
    if kind == "oracle":
        if seq_dir is None:
            raise ConfigError("the oracle provider needs a sequence directory with gt/gt.txt")
        gt = read_gt(seq_dir / "gt" / "gt.txt")
        return OracleProvider(gt.frames, corruption=run["oracle_corruption"], seed=run["seed"]), None
    if seq_dir is None:
        raise ConfigError("the histogram provider needs a sequence directory with images")
    im_dir = "img1"
    if (seq_dir / "seqinfo.ini").exists():
        im_dir = read_seqinfo(seq_dir / "seqinfo.ini").im_dir
    images = ImageSource(seq_dir / im_dir)
    return HistogramProvider(images, bins=run["histogram_bins"]), images


def track_one(seq_dir: Optional[Path], det_path: Path, run: dict) -> tuple[str, int, int]:
    """Track one sequence; returns (MOT text, number of tracks, number of boxes)."""
    detections = read_detections(det_path)
    num_frames = None
    if seq_dir is not None and (seq_dir / "seqinfo.ini").exists():
        num_frames = read_seqinfo(seq_dir / "seqinfo.ini").length
    provider, images = _make_provider(run, seq_dir)
    result = run_sequence(detections, provider, run["tracker"], num_frames=num_frames,
                          images=images, interpolate=run["interpolate"])
    return format_results(result), len(result.track_ids()), len(result)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# -- commands ------------------------------------------------------------------


def cmd_track(args) -> int:
    root = Path(args.root)
    seq = _resolve(root, args.seq)
    det = _resolve(root, args.det)
    out = _resolve(root, args.out)
    overrides = {"alpha": args.alpha, "provider": args.provider, "motion_mode": args.motion_mode,
                 "base_mode": args.base_mode}
    if args.no_interp:
        overrides["interpolate"] = False
    run = load_run_config(_resolve(root, args.config), overrides)
    workers = _workers(args.workers)

    alphas = [None]
    if args.alpha_sweep:
        try:
            alphas = [float(a) for a in args.alpha_sweep.split(",") if a.strip()]
        except ValueError:
            raise ConfigError(f"--alpha-sweep expects a comma list of numbers, got {args.alpha_sweep!r}") from None
        if not alphas:
            raise ConfigError("--alpha-sweep is empty")

    if seq is not None and not seq.exists():
        raise FileNotFoundError(seq)
    multi = seq is not None and not (seq / "seqinfo.ini").exists() and det is None
    if multi:
        seqs = find_sequences(seq)
        if not seqs:
            raise FileNotFoundError(f"{seq}: no sequence directories (seqinfo.ini) found")
        targets = [(s, s / "det" / "det.txt", s.name + ".txt") for s in seqs]
    else:
        if det is None:
            if seq is None:
                raise ConfigError("give --seq, --det or both")
            det = seq / "det" / "det.txt"
        targets = [(seq, det, None)]

    jobs, dests = [], []
    for a in alphas:
        cfg = run if a is None else {**run, "tracker": TrackerConfig(**{**run["tracker"].to_dict(), "alpha": a})}
        for s, d, fname in targets:
            jobs.append((s, d, cfg))
            if a is not None:
                dests.append(out / f"alpha_{a:g}" / (fname or "") if multi else out / f"alpha_{a:g}.txt")
            else:
                dests.append(out / fname if multi else out)

    t0 = time.perf_counter()
    results = _map(track_one, jobs, workers)
    elapsed = time.perf_counter() - t0
    for dest, (text, _, _) in zip(dests, results):
        _write(dest, text)
    n_tracks = sum(r[1] for r in results)
    n_boxes = sum(r[2] for r in results)
    print(f"tracked {len(jobs)} run(s): {n_tracks} tracks, {n_boxes} boxes in {elapsed:.2f}s")
    return EXIT_OK


def eval_one(name: str, gt_path: Path, res_path: Optional[Path], iou_thr: float):
    gt = read_gt(gt_path)
    pred = read_results(res_path).frames() if res_path is not None else {}
    return evaluate(gt.frames, pred, iou_thr, name=name)


def cmd_eval(args) -> int:
    root = Path(args.root)
    gt_root = _resolve(root, args.gt)
    res_root = _resolve(root, args.res)
    if not 0.0 < args.iou <= 1.0:
        raise ConfigError(f"--iou must lie in (0, 1], got {args.iou}")
    if not gt_root.exists():
        raise FileNotFoundError(gt_root)
    if not res_root.exists():
        raise FileNotFoundError(res_root)
    seqs = find_sequences(gt_root)
    if not seqs:
        raise FileNotFoundError(f"{gt_root}: no sequence directories (seqinfo.ini) found")
    jobs = []
    for s in seqs:
        res = res_root / f"{s.name}.txt" if res_root.is_dir() else res_root
        if not res.exists():
            logger.warning("no result for sequence %s (%s); scored as all misses", s.name, res)
            res = None
        jobs.append((s.name, s / "gt" / "gt.txt", res, args.iou))
    reports = _map(eval_one, jobs, _workers(args.workers))
    combined = aggregate(reports)
    out = _resolve(root, args.out) if args.out else (res_root if res_root.is_dir() else res_root.parent)
    _write(out / "metrics.json", report_to_json(reports, combined))
    _write(out / "metrics.csv", reports_to_csv(reports, combined))
    print(f"{len(reports)} sequence(s): HOTA {combined.hota:.4f} IDF1 {combined.idf1:.4f} "
          f"MOTA {combined.mota:.4f} IDs {combined.id_switches}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    root = Path(args.root)
    gt_root = _resolve(root, args.gt)
    if not gt_root.exists():
        raise FileNotFoundError(gt_root)
    seqs = find_sequences(gt_root)
    if not seqs:
        raise FileNotFoundError(f"{gt_root}: no sequence directories (seqinfo.ini) found")
    metas = [read_seqinfo(s / "seqinfo.ini") for s in seqs]
    gts = [read_gt(s / "gt" / "gt.txt") for s in seqs]
    doc = {"sequences": {}, "overall": {}}
    all_adj, all_kf = [], []
    for m, gt in zip(metas, gts):
        adj, kf = adjacent_iou_stats(gt), kf_adjacent_iou_stats(gt)
        all_adj.extend(adj.samples.tolist())
        all_kf.extend(kf.samples.tolist())
        doc["sequences"][m.name] = {"adjacent_iou": adj.to_dict(), "kf_iou": kf.to_dict()}
    doc["overall"] = {"adjacent_iou": _stats(all_adj).to_dict(), "kf_iou": _stats(all_kf).to_dict()}
    doc["category_stats"] = category_stats(gts, metas)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _write(_resolve(root, args.out), text)
    print(f"analyzed {len(seqs)} sequence(s): mean adjacent IoU {doc['overall']['adjacent_iou']['mean']:.4f}, "
          f"mean KF IoU {doc['overall']['kf_iou']['mean']:.4f}")
    return EXIT_OK


_SYNTH_FIELDS = {f.name for f in fields(SynthConfig)}
_CROSSING_FIELDS = {"seed", "profile", "num_frames", "speed", "size", "dip_iou", "score_high",
                    "score_dip", "bounce_gap", "hold"}


def _synth_one(entry: dict):
    entry = dict(entry)
    scenario = entry.pop("scenario", "random")
    if scenario == "crossing":
        unknown = set(entry) - _CROSSING_FIELDS
        if unknown:
            raise ConfigError(f"unknown crossing keys: {sorted(unknown)}")
        if "size" in entry:
            entry["size"] = tuple(entry["size"])
        return crossing_scenario(**entry)
    if scenario != "random":
        raise ConfigError(f"unknown scenario {scenario!r} (random | crossing)")
    unknown = set(entry) - _SYNTH_FIELDS
    if unknown:
        raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
    for k in ("arena", "width_range", "height_range", "score_high", "score_low"):
        if k in entry:
            entry[k] = tuple(entry[k])
    if isinstance(entry.get("profile"), dict) and "speed_range" in entry["profile"]:
        entry["profile"] = {**entry["profile"], "speed_range": tuple(entry["profile"]["speed_range"])}
    try:
        return generate(SynthConfig(**entry))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_synth(args) -> int:
    root = Path(args.root)
    path = _resolve(root, args.config)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    entries = doc["sequences"] if isinstance(doc, dict) and "sequences" in doc else [doc]
    if not isinstance(entries, list) or not all(isinstance(s, dict) for s in entries):
        raise ConfigError(f"{path}: expected an object or {{\"sequences\": [objects]}}")
    corpora = [_synth_one(s) for s in entries]
    names = [c.meta.name for c in corpora]
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: duplicate sequence names {names}")
    out = _resolve(root, args.out)
    for c in corpora:
        write_corpus(c, out)
    print(f"wrote {len(corpora)} sequence(s) to {out}")
    return EXIT_OK


def cmd_interp(args) -> int:
    root = Path(args.root)
    if args.max_gap < 0:
        raise ConfigError(f"--max-gap must be >= 0, got {args.max_gap}")
    result = read_results(_resolve(root, args.res))
    filled = linear_interpolation(result, args.max_gap)
    _write(_resolve(root, args.out), format_results(filled))
    print(f"interpolated {len(filled) - len(result)} box(es) across {len(filled.track_ids())} track(s)")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="mixsort", description=__doc__, formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--root", default=".", help="base directory for relative paths (default: cwd)")
    common.add_argument("--workers", type=int, default=None,
                        help=f"process pool width (default: ${WORKERS_ENV} or 1)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", parents=[common], formatter_class=fmt, epilog=_config_help(),
                       help="run the tracker on one sequence or a directory of sequences")
    p.add_argument("--seq", help="sequence directory, or a directory of sequences")
    p.add_argument("--det", help="detection file (default: <seq>/det/det.txt)")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--provider", choices=["null", "oracle", "histogram"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--motion-mode", choices=["none", "kalman", "kalman_oc"])
    p.add_argument("--base-mode", choices=["byte", "oc"])
    p.add_argument("--no-interp", action="store_true", help="skip interpolation")
    p.add_argument("--alpha-sweep", help="comma list of alpha values; writes <out>/alpha_<v>.txt per value")
    p.add_argument("--out", required=True,
                   help="result file (a directory when --seq holds several sequences or with --alpha-sweep)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt,
                       help="score results against ground truth (metrics.json, metrics.csv)")
    p.add_argument("--gt", required=True, help="sequence directory or directory of sequences")
    p.add_argument("--res", required=True, help="directory of <sequence>.txt results (or one file)")
    p.add_argument("--iou", type=float, default=0.5, help="IoU threshold for CLEAR and identity metrics")
    p.add_argument("--out", help="output directory (default: the results directory)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", parents=[common], formatter_class=fmt,
                       help="adjacent-frame IoU, Kalman-predicted IoU and corpus statistics as JSON")
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    synth_epilog = (
        "config: one object or {\"sequences\": [...]}. Each object is either a random corpus\n"
        f"  ({', '.join(sorted(_SYNTH_FIELDS))})\n"
        "or {\"scenario\": \"crossing\", ...} with\n"
        f"  ({', '.join(sorted(_CROSSING_FIELDS))})"
    )
    p = sub.add_parser("synth", parents=[common], formatter_class=fmt, epilog=synth_epilog,
                       help="generate synthetic sequences")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("interp", parents=[common], formatter_class=fmt,
                       help="fill short gaps in a result file by linear interpolation")
    p.add_argument("--res", required=True)
    p.add_argument("--max-gap", type=int, default=20, help="longest run of missing frames to fill (default 20)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interp)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
