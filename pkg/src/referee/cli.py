"""Command-line front end.

Subcommands cover the whole pipeline: `describe` turns scans into
descriptor directories, `index` validates and normalizes one, `query`
matches one directory against another, `eval` produces PR curves and
summaries against ground truth, `bench` times the stages, and `synth gen`
fabricates test sessions.

Exit codes are a stable contract: 0 success, 1 runtime failure,
2 configuration error.
"""

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import kernels
from .config import (AXES, FORMATS, Config, parse_duration, read_config_file,
                     resolve_config)
from .descriptor import RFRD_VERSION, make_referee, payload_bytes
from .errors import ConfigError, IndivisibleAlpha, InsufficientSamples, RefereeError
from .evaluation import (DescriptorPipeline, QueryRecord, bench,
                         export_matching_graph, label_from_positions, pr_curve,
                         write_pr_csv, write_summary_json)
from .features import FeatureParams, extract_features
from .retrieval import (RetrievalParams, build_index, load_entries, make_entry,
                        query, save_entries, write_matches_csv)
from .scan_io import RFMX_VERSION, load_polar_scan, load_trajectory, pose_at
from .synth import SensorModel, generate_session, generate_world, make_line, \
    make_out_and_back

__version__ = "0.1.0"

_D = Config()


def _add_feature_flags(p):
    p.add_argument("--config", metavar="FILE",
                   help="flat key = value config file; flags override it")
    p.add_argument("--sigma", type=float,
                   help=f"smoothing width in range bins (default {_D.sigma})")
    p.add_argument("--z-thresh", dest="z_threshold", type=float,
                   help=f"feature cutoff on the standardized residual (default {_D.z_threshold})")
    p.add_argument("--min-range-bin", dest="min_range_bin", type=int,
                   help=f"ignore bins closer than this (default {_D.min_range_bin})")
    p.add_argument("--log-intensity", dest="log_intensity", action="store_const",
                   const=True, help="log-compress intensities before the split (default off)")
    p.add_argument("--alpha", type=int,
                   help="descriptor sectors; 0 = rows along the partition axis // 8 "
                        f"(default {_D.alpha})")
    p.add_argument("--partition-axis", dest="partition_axis", choices=AXES,
                   help=f"group azimuth rows or range bins (default {_D.partition_axis})")
    p.add_argument("--meta-cols", dest="meta_cols", type=int,
                   help=f"leading metadata columns in PNG scans (default {_D.meta_cols})")
    p.add_argument("--range-resolution", dest="range_resolution", type=float,
                   help=f"meters per range bin for PNG scans (default {_D.range_resolution})")
    p.add_argument("--format", choices=FORMATS,
                   help=f"scan file format (default {_D.format})")
    p.add_argument("--jobs", type=int,
                   help=f"parallel workers for per-scan stages (default {_D.jobs})")


def _add_retrieval_flags(p):
    p.add_argument("--tau-s", dest="tau_s", type=float,
                   help=f"descriptor distance acceptance threshold (default {_D.tau_s})")
    p.add_argument("--tau-t", dest="tau_t", type=float,
                   help=f"metric distance acceptance threshold, m (default {_D.tau_t})")
    p.add_argument("--exclusion", type=parse_duration,
                   help=f"temporal exclusion window, e.g. 30s or 500ms (default {_D.exclusion}s)")


_CONFIG_KEYS = ("sigma", "z_threshold", "min_range_bin", "log_intensity", "alpha",
                "partition_axis", "tau_s", "tau_t", "exclusion", "loop_radius",
                "meta_cols", "range_resolution", "format", "jobs")


def _cfg(args):
    file_values = read_config_file(args.config) if getattr(args, "config", None) else None
    overrides = {k: getattr(args, k) for k in _CONFIG_KEYS if hasattr(args, k)}
    return resolve_config(file_values, overrides)


def _feature_params(cfg):
    return FeatureParams(sigma_gauss=cfg.sigma, z_threshold=cfg.z_threshold,
                         min_range_bin=cfg.min_range_bin,
                         log_intensity=cfg.log_intensity)


def _discover_scans(input_dir, fmt):
    d = Path(input_dir)
    patterns = {"raw_matrix": ("*.rfmx",), "polar_png": ("*.png",),
                "auto": ("*.rfmx", "*.png")}[fmt]
    paths = []
    for pat in patterns:
        paths.extend(d.glob(pat))
    return sorted(paths)


def _load_scan(path, cfg):
    if path.suffix.lower() == ".rfmx":
        return load_polar_scan(path, fmt="raw_matrix",
                               range_resolution=cfg.range_resolution)
    return load_polar_scan(path, fmt="polar_png", meta_cols=cfg.meta_cols,
                           range_resolution=cfg.range_resolution)


def _resolve_alpha(cfg, scan):
    rows = scan.azimuth_count if cfg.partition_axis == "azimuth" else scan.range_bins
    alpha = cfg.alpha if cfg.alpha else rows // 8
    if alpha < 1 or rows % alpha != 0:
        raise ConfigError([str(IndivisibleAlpha(
            f"alpha {alpha} does not divide the {rows} rows along axis "
            f"{cfg.partition_axis!r}"))])
    return alpha


def cmd_describe(args):
    cfg = _cfg(args)
    out = Path(args.out)
    paths = _discover_scans(args.input, cfg.format)
    if not paths:
        save_entries([], out)
        print(f"warning: no scans found in {args.input}; wrote empty manifest",
              file=sys.stderr)
        return 0

    trajectory = load_trajectory(args.gt) if args.gt else None
    first = _load_scan(paths[0], cfg)
    alpha = _resolve_alpha(cfg, first)
    fparams = _feature_params(cfg)

    def process(path):
        scan = _load_scan(path, cfg)
        mask = extract_features(scan, fparams)
        desc = make_referee(mask, alpha, cfg.partition_axis)
        position = None
        if trajectory is not None:
            p = pose_at(trajectory, scan.timestamp)
            position = (p.x, p.y)
        return make_entry(desc, position=position)

    def attempt(path):
        try:
            return path, process(path), None
        except RefereeError as exc:
            return path, None, exc

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(attempt, paths))
    else:
        results = [attempt(p) for p in paths]

    entries = [entry for _, entry, exc in results if exc is None]
    failures = [(path, exc) for path, _, exc in results if exc is not None]
    save_entries(entries, out)
    print(f"wrote {len(entries)} descriptors (alpha={alpha}) to {out}")
    for path, exc in failures:
        print(f"error: {path}: {exc}", file=sys.stderr)
    return 1 if failures else 0


def cmd_index(args):
    entries = load_entries(args.dir)
    index = build_index(entries)
    save_entries(entries, args.dir)
    if entries:
        t0 = min(e.timestamp for e in entries)
        t1 = max(e.timestamp for e in entries)
        span = (t1 - t0) / 1e9
        print(f"{len(entries)} entries, alpha={index.alpha}, "
              f"time span {span:.1f}s, manifest rewritten")
    else:
        print("0 entries, manifest rewritten")
    return 0


def cmd_query(args):
    cfg = _cfg(args)
    db = load_entries(args.db)
    queries = sorted(load_entries(args.queries),
                     key=lambda e: (e.timestamp, e.scan_id))
    index = build_index(db)
    params = RetrievalParams(tau_s=cfg.tau_s, tau_t=cfg.tau_t,
                             exclusion_window=cfg.exclusion_ns)
    results = [(e.scan_id, query(index, e.descriptor, params,
                                  timestamp=e.timestamp, position=e.position,
                                  sequential=args.sequential))
               for e in queries]
    write_matches_csv(results, args.out)
    accepted = sum(1 for _, r in results if r is not None and r.accepted)
    print(f"{len(results)} queries, {accepted} accepted -> {args.out}")
    return 0


def cmd_eval(args):
    cfg = _cfg(args)
    single = Path(args.db).resolve() == Path(args.queries).resolve()
    trajectory = load_trajectory(args.gt)
    db = load_entries(args.db)
    queries = sorted(load_entries(args.queries),
                     key=lambda e: (e.timestamp, e.scan_id))
    if not queries or not db:
        raise ConfigError(["both --db and --queries must contain descriptors"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def gt_position(ts):
        p = pose_at(trajectory, ts)
        return (p.x, p.y)

    q_items = [(e.scan_id, e.timestamp, gt_position(e.timestamp)) for e in queries]

    if single:
        exclusion = cfg.exclusion_ns
        db = [replace(e, position=gt_position(e.timestamp)) for e in db]
        gt = label_from_positions(q_items, q_items, cfg.loop_radius,
                                  exclusion, sequential=True)
    else:
        exclusion = 0
        missing = [e.scan_id for e in db if e.position is None]
        if missing:
            raise ConfigError(
                [f"multi-session eval needs positions for every db entry; "
                 f"{len(missing)} missing (regenerate with describe --gt)"])
        db_items = [(e.scan_id, e.timestamp, e.position) for e in db]
        gt = label_from_positions(q_items, db_items, cfg.loop_radius,
                                  exclusion_window=0, sequential=False)

    params = RetrievalParams(tau_s=cfg.tau_s, tau_t=cfg.tau_t,
                             exclusion_window=exclusion)
    index = build_index(db)
    records = []
    search_times = []
    for e, (_, _, pos) in zip(queries, q_items):
        t0 = time.perf_counter()
        res = query(index, e.descriptor, params, timestamp=e.timestamp,
                    position=pos, sequential=single)
        search_times.append(time.perf_counter() - t0)
        if res is None:
            records.append(QueryRecord(e.scan_id, None, None, None))
        else:
            records.append(QueryRecord(e.scan_id, res.matched_scan_id,
                                       res.d_s, res.d_t))

    curve = pr_curve(records, gt)
    write_pr_csv(curve, out / "pr.csv")
    tau_star, n_matches = export_matching_graph(records, gt, out / "matches.csv",
                                                curve=curve)
    recall_at_p1 = max((p.recall for p in curve.points if p.precision == 1.0),
                       default=0.0)
    extra = {
        "mode": "single" if single else "multi",
        "n_queries": len(queries),
        "n_db": len(db),
        "loop_radius_m": cfg.loop_radius,
        "exclusion_s": exclusion / 1e9,
        "descriptor_bytes": payload_bytes(queries[0].descriptor),
        "search_time_s": float(sum(search_times) / len(search_times)),
        "recall_at_precision_1": recall_at_p1,
        "operating_tau_s": None if math.isinf(tau_star) else tau_star,
        "matches_exported": n_matches,
        "backend": kernels.BACKEND,
    }
    summary = write_summary_json(curve, out / "summary.json", extra)
    print(f"auc_pr={summary['auc_pr']:.4f} auc_roc={summary['auc_roc']}"
          f" max_f1={summary['max_f1']:.4f} recall@P=1 {recall_at_p1:.4f}")
    print(f"wrote pr.csv, matches.csv ({n_matches} rows), summary.json to {out}")
    return 0


def cmd_bench(args):
    cfg = _cfg(args)
    paths = _discover_scans(args.input, cfg.format)
    if len(paths) < 10:
        raise InsufficientSamples(
            f"need at least 10 scans for stable timing, got {len(paths)}")
    scans = [_load_scan(p, cfg) for p in paths]
    alpha = _resolve_alpha(cfg, scans[0])
    pipeline = DescriptorPipeline(
        _feature_params(cfg), alpha, cfg.partition_axis,
        RetrievalParams(tau_s=cfg.tau_s, tau_t=cfg.tau_t,
                        exclusion_window=cfg.exclusion_ns))
    report = bench(pipeline, scans, input_paths=paths)
    payload = report.as_dict()
    payload.update({
        "alpha": alpha,
        "azimuths": scans[0].azimuth_count,
        "range_bins": scans[0].range_bins,
        "backend": kernels.BACKEND,
    })
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"gen {report.gen_time_s * 1e3:.2f} ms + search "
          f"{report.search_time_s * 1e3:.2f} ms = "
          f"{report.processing_time_s * 1e3:.2f} ms per scan; "
          f"descriptor {report.descriptor_bytes} B, "
          f"compression x{report.compression_ratio:.0f} -> {args.out}")
    return 0


def cmd_synth_gen(args):
    try:
        sensor = SensorModel(max_range=args.max_range, range_bins=args.range_bins,
                             azimuths=args.azimuths, beam_width=args.beam_width,
                             noise_floor_mean=args.noise_mean,
                             noise_floor_std=args.noise_std,
                             return_sigma=args.return_sigma)
        if args.poses < 2:
            raise ValueError(f"--poses must be >= 2, got {args.poses}")
        if args.landmarks < 0:
            raise ValueError(f"--landmarks must be >= 0, got {args.landmarks}")
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc
    world = generate_world(args.seed, args.landmarks, args.bounds)
    if args.revisit:
        trajectory = make_out_and_back(args.poses, spacing=args.spacing)
    else:
        trajectory = make_line(args.poses, spacing=args.spacing)
    paths, traj_path = generate_session(world, trajectory, sensor, args.seed,
                                        args.out)
    print(f"{len(paths)} scans -> {args.out} (trajectory: {traj_path})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="referee",
        description="Radar place recognition via free-space descriptors.")
    parser.add_argument(
        "--version", action="version",
        version=f"referee {__version__} (formats: RFMX {RFMX_VERSION}, "
                f"RFRD {RFRD_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="turn a directory of scans into descriptors")
    p.add_argument("input", help="directory of .rfmx or .png scans")
    p.add_argument("--out", required=True, help="output descriptor directory")
    p.add_argument("--gt", help="trajectory CSV to attach positions to entries")
    _add_feature_flags(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("index", help="validate a descriptor directory, rewrite its manifest")
    p.add_argument("dir", help="descriptor directory")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="match query descriptors against a database")
    p.add_argument("--db", required=True, help="database descriptor directory")
    p.add_argument("--queries", required=True, help="query descriptor directory")
    p.add_argument("--out", required=True, help="output CSV of per-query matches")
    p.add_argument("--sequential", action="store_true",
                   help="only match against strictly earlier entries")
    p.add_argument("--config", metavar="FILE", help="flat key = value config file")
    _add_retrieval_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="PR curve and summary against ground truth")
    p.add_argument("--db", required=True, help="database descriptor directory")
    p.add_argument("--queries", required=True,
                   help="query descriptor directory (same as --db = single-session)")
    p.add_argument("--gt", required=True, help="query-session trajectory CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--loop-radius", dest="loop_radius", type=float,
                   help=f"true-loop distance in meters (default {_D.loop_radius})")
    p.add_argument("--config", metavar="FILE", help="flat key = value config file")
    _add_retrieval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time descriptor generation and search")
    p.add_argument("--input", required=True, help="directory of scans")
    p.add_argument("--out", required=True, help="output bench JSON path")
    _add_feature_flags(p)
    _add_retrieval_flags(p)
    p.set_defaults(func=cmd_bench)

    synth = sub.add_parser("synth", help="synthetic data utilities")
    ssub = synth.add_subparsers(dest="synth_command", required=True)
    p = ssub.add_parser("gen", help="generate a synthetic session")
    p.add_argument("--seed", type=int, default=0, help="session seed (default 0)")
    p.add_argument("--landmarks", type=int, default=2400,
                   help="number of world landmarks (default 2400)")
    p.add_argument("--poses", type=int, default=200,
                   help="trajectory length (default 200)")
    p.add_argument("--revisit", action="store_true",
                   help="out-and-back course instead of a straight line")
    p.add_argument("--out", required=True, help="output session directory")
    p.add_argument("--bounds", type=float, default=300.0,
                   help="half-width of the landmark field, m (default 300)")
    p.add_argument("--spacing", type=float, default=5.0,
                   help="distance between poses, m (default 5)")
    p.add_argument("--max-range", dest="max_range", type=float, default=100.0,
                   help="sensor range, m (default 100)")
    p.add_argument("--range-bins", dest="range_bins", type=int, default=256,
                   help="range bins per row (default 256)")
    p.add_argument("--azimuths", type=int, default=128,
                   help="azimuth rows per scan (default 128)")
    p.add_argument("--beam-width", dest="beam_width", type=float, default=0.1,
                   help="beam width, rad (default 0.1)")
    p.add_argument("--noise-mean", dest="noise_mean", type=float, default=40.0,
                   help="noise floor mean (default 40)")
    p.add_argument("--noise-std", dest="noise_std", type=float, default=8.0,
                   help="noise floor std (default 8)")
    p.add_argument("--return-sigma", dest="return_sigma", type=float, default=2.0,
                   help="radial spread of a return, bins (default 2)")
    p.set_defaults(func=cmd_synth_gen)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return 2
    except RefereeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
