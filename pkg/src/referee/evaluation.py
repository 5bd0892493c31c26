"""Loop-closure evaluation: ground-truth labeling, PR sweeps, benchmarks.

The protocol is per-query nearest-candidate: each query contributes exactly
one record (its nearest eligible place, or no candidate), and the similarity
threshold tau_s is swept over all observed distances. A detection is correct
when the matched place lies within loop_radius of the query (closed ball).

AUC conventions, chosen so the degenerate matchers come out right:
the PR curve integrates step-wise (sum of recall increments times the
precision reached), which makes a constant-distance matcher score exactly
the positive rate and a separable matcher exactly 1.0; the ROC curve uses
the trapezoid rule, which gives the constant matcher the expected 0.5.
"""

import csv
import json
import math
import time
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .descriptor import HEADER_BYTES, Descriptor, make_referee, serialize
from .errors import DiskWriteFailure, InsufficientSamples, NoPositives
from .features import extract_features
from .retrieval import RetrievalParams, build_index, make_entry, query
from .scan_io import pose_at

SECOND_NS = 1_000_000_000

# one line per query: its nearest candidate, or Nones when there was none
QueryRecord = namedtuple("QueryRecord", ["query_id", "match_id", "d_s", "d_t"])

PR_HEADER = ["tau_s", "precision", "recall", "tp", "fp", "fn"]
GRAPH_HEADER = ["query_id", "match_id", "d_s", "d_t", "is_true"]

# published figures for other radar/sonar place-recognition descriptors,
# carried verbatim for report context; nothing here recomputes them
REFERENCE_METHODS = {
    "raplace": {"descriptor_bytes": 3008, "processing_time_s": 0.605},
    "scan_context": {"descriptor_bytes": 4928, "processing_time_s": 0.159},
    "sonar_context": {"descriptor_bytes": 33728, "processing_time_s": 0.125},
}


@dataclass(frozen=True)
class LoopGroundTruth:
    loop_radius: float
    candidates: dict  # query scan_id -> frozenset of true candidate scan_ids

    def has_true_loop(self, query_id):
        return bool(self.candidates.get(query_id))

    def true_candidates(self, query_id):
        return self.candidates.get(query_id, frozenset())


def label_from_positions(query_items, cand_items, loop_radius=20.0,
                         exclusion_window=30 * SECOND_NS, sequential=True):
    """Label true loops from explicit (scan_id, timestamp, (x, y)) triples.

    sequential=True treats cand_items as the same stream the queries come
    from: a candidate counts only if it appears before the query and at
    least exclusion_window away in time. sequential=False compares every
    query against every candidate (cross-session).
    """
    cand = [(cid, int(ct), (float(cx), float(cy)))
            for cid, ct, (cx, cy) in cand_items]
    out = {}
    for iq, (qid, qt, (qx, qy)) in enumerate(query_items):
        hits = []
        for ic, (cid, ct, (cx, cy)) in enumerate(cand):
            if sequential:
                if ic >= iq or abs(int(qt) - ct) < exclusion_window:
                    continue
            if math.hypot(float(qx) - cx, float(qy) - cy) <= loop_radius:
                hits.append(cid)
        if hits:
            out[int(qid)] = frozenset(hits)
    return LoopGroundTruth(loop_radius=float(loop_radius), candidates=out)


def label_true_loops(trajectory, scan_times, loop_radius=20.0,
                     exclusion_window=30 * SECOND_NS,
                     ref_trajectory=None, ref_scan_times=None):
    """LoopGroundTruth for scans positioned by trajectory interpolation.

    scan_times is an ordered list of (scan_id, timestamp); order defines
    which scans were indexed before which. When ref_trajectory/ref_scan_times
    are given the labeling is cross-session: every reference scan within
    loop_radius is a true candidate, with no temporal exclusion.
    """
    def locate(traj, pairs):
        items = []
        for sid, ts in pairs:
            p = pose_at(traj, int(ts))
            items.append((int(sid), int(ts), (p.x, p.y)))
        return items

    queries = locate(trajectory, scan_times)
    if ref_trajectory is None:
        return label_from_positions(queries, queries, loop_radius,
                                    exclusion_window, sequential=True)
    refs = locate(ref_trajectory, ref_scan_times or [])
    return label_from_positions(queries, refs, loop_radius,
                                exclusion_window=0, sequential=False)


@dataclass(frozen=True)
class PrPoint:
    tau: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class PrCurve:
    points: tuple
    auc_pr: float
    auc_roc: float
    max_f1: float
    n_positive: int
    n_negative: int


def pr_curve(records, gt):
    """Sweep tau_s over one-record-per-query matches against ground truth.

    Detection at tau: d_s < tau (strict; queries with no candidate never
    detect). A detection is a TP when d_t <= loop_radius, an FP otherwise,
    including the rare case of a detection whose d_t is unknown. FN counts
    the positive queries not covered by a TP, so TP + FN = P at every point.
    Precision at zero detections is 1 by convention.
    """
    records = list(records)
    seen = set()
    for r in records:
        if r.query_id in seen:
            raise ValueError(f"duplicate record for query {r.query_id}")
        seen.add(r.query_id)

    is_pos = np.array([gt.has_true_loop(r.query_id) for r in records], dtype=bool)
    n_pos = int(is_pos.sum())
    n_neg = len(records) - n_pos
    if n_pos == 0:
        raise NoPositives("ground truth labels no query as a true loop")

    d_s = np.array([math.inf if r.d_s is None else float(r.d_s) for r in records])
    correct = np.array([r.d_t is not None and r.d_t <= gt.loop_radius
                        for r in records], dtype=bool)

    finite = sorted({float(v) for v in d_s if math.isfinite(v)})
    taus = [-math.inf] + finite + [math.inf]

    points = []
    for tau in taus:
        det = d_s < tau
        tp = int(np.count_nonzero(det & correct))
        fp = int(np.count_nonzero(det & ~correct))
        fn = n_pos - tp
        precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
        recall = tp / n_pos
        points.append(PrPoint(tau=tau, precision=precision, recall=recall,
                              tp=tp, fp=fp, fn=fn))

    # step integration: each recall increment earns the precision it reaches
    auc_pr = 0.0
    for prev, cur in zip(points, points[1:]):
        auc_pr += (cur.recall - prev.recall) * cur.precision

    if n_neg > 0:
        fpr = [np.count_nonzero((d_s < p.tau) & ~is_pos) / n_neg for p in points]
        tpr = [p.recall for p in points]
        auc_roc = 0.0
        for i in range(1, len(points)):
            auc_roc += (fpr[i] - fpr[i - 1]) * (tpr[i] + tpr[i - 1]) / 2.0
    else:
        auc_roc = math.nan

    max_f1 = 0.0
    for p in points:
        if p.precision + p.recall > 0:
            max_f1 = max(max_f1, 2 * p.precision * p.recall / (p.precision + p.recall))

    return PrCurve(points=tuple(points), auc_pr=auc_pr, auc_roc=auc_roc,
                   max_f1=max_f1, n_positive=n_pos, n_negative=n_neg)


def max_precision_operating_point(curve):
    """The sweep threshold with the highest precision, ties toward recall."""
    best = max(curve.points, key=lambda p: (p.precision, p.recall))
    return best.tau


def export_matching_graph(records, gt, path, at="max_precision_recall_point",
                          threshold=None, curve=None):
    """Write the accepted query->match pairs at an operating point.

    at="max_precision_recall_point" picks the sweep threshold of maximum
    precision (ties resolved toward higher recall); at="fixed_threshold"
    uses the given threshold. Rows carry is_true = 1 iff d_t <= loop_radius.
    """
    if at == "max_precision_recall_point":
        if curve is None:
            curve = pr_curve(records, gt)
        tau = max_precision_operating_point(curve)
    elif at == "fixed_threshold":
        if threshold is None:
            raise ValueError("fixed_threshold requires a threshold value")
        tau = float(threshold)
    else:
        raise ValueError(f"unknown operating point selector {at!r}")

    rows = []
    for r in records:
        if r.d_s is None or not r.d_s < tau:
            continue
        is_true = int(r.d_t is not None and r.d_t <= gt.loop_radius)
        rows.append([r.query_id, r.match_id, repr(float(r.d_s)),
                     "" if r.d_t is None else repr(float(r.d_t)), is_true])
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(GRAPH_HEADER)
            writer.writerows(rows)
    except OSError as exc:
        raise DiskWriteFailure(f"cannot write {path}: {exc}") from exc
    return tau, len(rows)


def write_pr_csv(curve, path):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(PR_HEADER)
            for p in curve.points:
                writer.writerow([repr(p.tau), repr(p.precision), repr(p.recall),
                                 p.tp, p.fp, p.fn])
    except OSError as exc:
        raise DiskWriteFailure(f"cannot write {path}: {exc}") from exc


def write_summary_json(curve, path, extra=None):
    payload = {
        "auc_pr": curve.auc_pr,
        "auc_roc": None if math.isnan(curve.auc_roc) else curve.auc_roc,
        "max_f1": curve.max_f1,
        "n_positive": curve.n_positive,
        "n_negative": curve.n_negative,
    }
    if extra:
        payload.update(extra)
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DiskWriteFailure(f"cannot write {path}: {exc}") from exc
    return payload


@dataclass(frozen=True)
class BenchReport:
    n_scans: int
    descriptor_bytes: int
    gen_time_s: float
    search_time_s: float
    processing_time_s: float
    input_bytes: float
    compression_ratio: float

    def as_dict(self):
        return {
            "n_scans": self.n_scans,
            "descriptor_bytes": self.descriptor_bytes,
            "gen_time_s": self.gen_time_s,
            "search_time_s": self.search_time_s,
            "processing_time_s": self.processing_time_s,
            "input_bytes": self.input_bytes,
            "compression_ratio": self.compression_ratio,
            "reference_methods": REFERENCE_METHODS,
        }


class DescriptorPipeline:
    """The real generate/search stages, wired for bench and the CLI.

    generate() turns a scan into a descriptor; prepare() indexes all
    generated descriptors; search() then runs nearest-place lookup against
    that index, so searching the generating session itself exercises the
    exclusion window exactly as online use would.
    """

    def __init__(self, feature_params, alpha, axis="azimuth",
                 retrieval_params=None, sequential=False):
        self.feature_params = feature_params
        self.alpha = alpha
        self.axis = axis
        self.retrieval_params = retrieval_params or RetrievalParams()
        self.sequential = sequential
        self.index = None

    def generate(self, scan):
        mask = extract_features(scan, self.feature_params)
        return make_referee(mask, self.alpha, self.axis)

    def prepare(self, descriptors):
        self.index = build_index([make_entry(d) for d in descriptors])

    def search(self, descriptor):
        return query(self.index, descriptor, self.retrieval_params,
                     sequential=self.sequential)


def bench(pipeline, scans, input_paths=None, warmup=3, min_scans=10):
    """Time the generate and search stages of a pipeline over real scans.

    pipeline must provide generate(scan) -> descriptor and
    search(descriptor) -> anything; an optional prepare(descriptors) hook
    runs untimed between the stages (index building lives there). The first
    `warmup` measurements of each stage are dropped from the means.
    descriptor_bytes is measured off the serialized form, header excluded.
    """
    scans = list(scans)
    if len(scans) < min_scans:
        raise InsufficientSamples(
            f"need at least {min_scans} scans for stable timing, got {len(scans)}")
    if len(scans) <= warmup:
        raise InsufficientSamples(
            f"warmup {warmup} leaves no measured scans out of {len(scans)}")

    gen_times = []
    descriptors = []
    for scan in scans:
        t0 = time.perf_counter()
        d = pipeline.generate(scan)
        gen_times.append(time.perf_counter() - t0)
        descriptors.append(d)

    prepare = getattr(pipeline, "prepare", None)
    if prepare is not None:
        prepare(descriptors)

    search_times = []
    for d in descriptors:
        t0 = time.perf_counter()
        pipeline.search(d)
        search_times.append(time.perf_counter() - t0)

    gen_mean = float(np.mean(gen_times[warmup:]))
    search_mean = float(np.mean(search_times[warmup:]))

    first = descriptors[0]
    desc_bytes = (len(serialize(first)) - HEADER_BYTES
                  if isinstance(first, Descriptor) else 0)
    if input_paths:
        import os
        input_bytes = float(np.mean([os.path.getsize(p) for p in input_paths]))
    else:
        input_bytes = 0.0
    ratio = input_bytes / desc_bytes if desc_bytes > 0 else 0.0

    return BenchReport(n_scans=len(scans), descriptor_bytes=desc_bytes,
                       gen_time_s=gen_mean, search_time_s=search_mean,
                       processing_time_s=gen_mean + search_mean,
                       input_bytes=input_bytes, compression_ratio=ratio)
