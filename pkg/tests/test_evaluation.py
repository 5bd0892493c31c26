import csv
import json
import math
import time

import numpy as np
import pytest

from oracles import brute_confusion, brute_label
from referee.errors import InsufficientSamples, NoPositives
from referee.evaluation import (QueryRecord, bench, export_matching_graph,
                                label_from_positions, label_true_loops,
                                max_precision_operating_point, pr_curve,
                                write_pr_csv, write_summary_json)
from referee.scan_io import Pose, Trajectory

SECOND = 10**9


def _line_items(n, spacing, dt=SECOND):
    return [(i, i * dt, (i * spacing, 0.0)) for i in range(n)]


def _loop_items(n_out, dt=SECOND):
    # out along x and straight back over the same ground
    items = _line_items(n_out, 5.0, dt)
    for k in range(n_out):
        i = n_out + k
        items.append((i, i * dt, ((n_out - 1 - k) * 5.0, 0.0)))
    return items


def test_straight_line_has_no_loops():
    items = _line_items(50, 5.0)
    gt = label_from_positions(items, items, loop_radius=20.0,
                              exclusion_window=30 * SECOND)
    assert gt.candidates == {}
    assert not gt.has_true_loop(10)


def test_revisit_after_exclusion_is_labeled():
    items = _loop_items(40)
    gt = label_from_positions(items, items, loop_radius=20.0,
                              exclusion_window=30 * SECOND)
    # late return-pass scans revisit early outbound ground
    assert gt.has_true_loop(79)
    assert 0 in gt.true_candidates(79)
    # outbound scans have nothing behind them outside the window
    assert not gt.has_true_loop(5)


def test_labels_match_brute_oracle(rng):
    for _ in range(10):
        n = int(rng.integers(5, 120))
        items = [(i, int(rng.integers(0, 200)) * SECOND,
                  (float(rng.uniform(-60, 60)), float(rng.uniform(-60, 60))))
                 for i in range(n)]
        radius = float(rng.uniform(5, 30))
        window = int(rng.integers(0, 40)) * SECOND
        seq = bool(rng.integers(0, 2))
        gt = label_from_positions(items, items, radius, window, sequential=seq)
        assert gt.candidates == brute_label(items, radius, window, seq)


def test_label_true_loops_interpolates():
    traj = Trajectory(poses=(Pose(timestamp=0, x=0.0, y=0.0, yaw=0.0),
                             Pose(timestamp=100 * SECOND, x=100.0, y=0.0, yaw=0.0)))
    times = [(0, 0), (1, 50 * SECOND), (2, 51 * SECOND)]
    gt = label_true_loops(traj, times, loop_radius=20.0, exclusion_window=0)
    # scan 2 sits 1 m from scan 1 and 51 m from scan 0
    assert gt.true_candidates(2) == frozenset({1})


def _gt_and_records(rng, n=60, pos_rate=0.4):
    """Random per-query records with known positive ids, no geometry."""
    positives = set()
    records = []
    candidates = {}
    for i in range(n):
        is_pos = rng.random() < pos_rate
        d_s = float(rng.uniform(0.01, 1.0))
        if is_pos:
            positives.add(i)
            candidates[i] = frozenset({10**6 + i})
            d_t = float(rng.uniform(0.0, 20.0)) if rng.random() < 0.8 \
                else float(rng.uniform(20.1, 80.0))
        else:
            d_t = float(rng.uniform(20.1, 80.0))
        if rng.random() < 0.1:
            records.append(QueryRecord(i, None, None, None))
        else:
            records.append(QueryRecord(i, 10**6 + i, d_s, d_t))
    from referee.evaluation import LoopGroundTruth
    return LoopGroundTruth(loop_radius=20.0, candidates=candidates), records, positives


def test_pr_sweep_matches_recount_oracle(rng):
    for _ in range(5):
        gt, records, positives = _gt_and_records(rng)
        curve = pr_curve(records, gt)
        tuples = [(r.query_id, r.match_id, r.d_s, r.d_t) for r in records]
        n_det_prev = -1
        for p in curve.points:
            tp, fp, fn = brute_confusion(tuples, positives, 20.0, p.tau)
            assert (p.tp, p.fp, p.fn) == (tp, fp, fn)
            assert p.tp + p.fn == curve.n_positive
            if p.tp + p.fp > 0:
                assert p.precision == pytest.approx(p.tp / (p.tp + p.fp))
            else:
                assert p.precision == 1.0
            assert p.tp + p.fp >= n_det_prev
            n_det_prev = p.tp + p.fp
        assert curve.points[0].tau == -math.inf
        assert curve.points[-1].tau == math.inf


def test_perfect_matcher():
    candidates = {i: frozenset({100 + i}) for i in range(20)}
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0, candidates=candidates)
    records = [QueryRecord(i, 100 + i, 0.1, 1.0) for i in range(20)]
    records += [QueryRecord(50 + i, 300 + i, 0.9, 90.0) for i in range(20)]
    curve = pr_curve(records, gt)
    assert curve.auc_pr == pytest.approx(1.0, abs=1e-9)
    assert curve.max_f1 == pytest.approx(1.0, abs=1e-9)
    assert curve.auc_roc == pytest.approx(1.0, abs=1e-9)


def test_false_only_matcher():
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0,
                         candidates={i: frozenset({99}) for i in range(10)})
    records = [QueryRecord(i, 99, 0.2 + 0.01 * i, 50.0) for i in range(10)]
    curve = pr_curve(records, gt)
    for p in curve.points:
        assert p.recall == 0.0
        if p.tp + p.fp > 0:
            assert p.precision == 0.0
    assert curve.auc_pr == 0.0
    assert curve.max_f1 == 0.0


def test_constant_distance_matcher(rng):
    n, n_pos = 80, 30
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0,
                         candidates={i: frozenset({500}) for i in range(n_pos)})
    records = [QueryRecord(i, 500, 0.5, 5.0 if i < n_pos else 60.0)
               for i in range(n)]
    curve = pr_curve(records, gt)
    assert curve.auc_pr == pytest.approx(n_pos / n, abs=1e-9)
    assert curve.auc_roc == pytest.approx(0.5, abs=1e-9)


def test_no_negatives_roc_is_nan():
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0,
                         candidates={i: frozenset({9}) for i in range(5)})
    records = [QueryRecord(i, 9, 0.3, 1.0) for i in range(5)]
    curve = pr_curve(records, gt)
    assert math.isnan(curve.auc_roc)
    assert curve.auc_pr == pytest.approx(1.0)


def test_no_positives_raises():
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0, candidates={})
    records = [QueryRecord(0, 1, 0.2, 30.0)]
    with pytest.raises(NoPositives):
        pr_curve(records, gt)


def test_duplicate_query_rejected():
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0, candidates={0: frozenset({1})})
    records = [QueryRecord(0, 1, 0.2, 3.0), QueryRecord(0, 2, 0.4, 3.0)]
    with pytest.raises(ValueError):
        pr_curve(records, gt)


def test_operating_point_prefers_recall_on_ties():
    # separable records: every threshold between the groups has precision 1,
    # so the tie must resolve to the highest-recall (largest tau) point
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0,
                         candidates={i: frozenset({7}) for i in range(4)})
    records = [QueryRecord(i, 7, 0.1 + 0.05 * i, 2.0) for i in range(4)]
    records.append(QueryRecord(10, 8, 0.9, 70.0))
    curve = pr_curve(records, gt)
    tau = max_precision_operating_point(curve)
    assert tau == pytest.approx(0.9)
    at_tau = [p for p in curve.points if p.tau == tau][0]
    assert at_tau.recall == 1.0 and at_tau.precision == 1.0


def test_export_matching_graph(tmp_path, rng):
    gt, records, _ = _gt_and_records(rng)
    curve = pr_curve(records, gt)
    path = tmp_path / "graph.csv"
    tau, n_rows = export_matching_graph(records, gt, path, curve=curve)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["query_id", "match_id", "d_s", "d_t", "is_true"]
    assert len(rows) - 1 == n_rows
    expected = [r for r in records if r.d_s is not None and r.d_s < tau]
    assert n_rows == len(expected)
    for row, rec in zip(rows[1:], expected):
        assert int(row[0]) == rec.query_id
        assert float(row[2]) == rec.d_s
        assert row[4] == ("1" if rec.d_t is not None and rec.d_t <= 20.0 else "0")


def test_export_graph_perfect_all_true(tmp_path):
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0,
                         candidates={i: frozenset({100 + i}) for i in range(6)})
    records = [QueryRecord(i, 100 + i, 0.1, 1.0) for i in range(6)]
    tau, n_rows = export_matching_graph(records, gt, tmp_path / "g.csv")
    with open(tmp_path / "g.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    assert n_rows == len(rows) == 6
    assert all(r[4] == "1" for r in rows)


def test_export_graph_fixed_threshold_none_match(tmp_path):
    from referee.evaluation import LoopGroundTruth
    gt = LoopGroundTruth(loop_radius=20.0, candidates={0: frozenset({1})})
    records = [QueryRecord(0, 1, 0.5, 1.0)]
    tau, n_rows = export_matching_graph(records, gt, tmp_path / "g.csv",
                                        at="fixed_threshold", threshold=0.1)
    assert tau == 0.1 and n_rows == 0
    with open(tmp_path / "g.csv") as fh:
        assert len(list(csv.reader(fh))) == 1  # header only


def test_pr_csv_and_summary_round_trip(tmp_path, rng):
    gt, records, _ = _gt_and_records(rng)
    curve = pr_curve(records, gt)
    write_pr_csv(curve, tmp_path / "pr.csv")
    with open(tmp_path / "pr.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == len(curve.points) + 1
    mid = len(rows) // 2
    p = curve.points[mid - 1]
    assert float(rows[mid][1]) == p.precision
    assert float(rows[mid][2]) == p.recall

    payload = write_summary_json(curve, tmp_path / "summary.json",
                                 extra={"backend": "numpy"})
    with open(tmp_path / "summary.json") as fh:
        loaded = json.load(fh)
    assert loaded == payload
    assert loaded["auc_pr"] == curve.auc_pr
    assert loaded["max_f1"] == curve.max_f1
    assert loaded["backend"] == "numpy"


class _SleepPipeline:
    """Stub stages with known durations, for timing-path tests."""

    def generate(self, scan):
        time.sleep(0.015)
        return scan

    def search(self, descriptor):
        time.sleep(0.005)
        return None


def test_bench_times_sleep_stub():
    report = bench(_SleepPipeline(), list(range(12)), warmup=3)
    assert report.n_scans == 12
    assert 0.014 <= report.gen_time_s <= 0.045
    assert 0.004 <= report.search_time_s <= 0.030
    assert report.processing_time_s == pytest.approx(
        report.gen_time_s + report.search_time_s)
    assert 0.018 <= report.processing_time_s <= 0.075
    assert report.descriptor_bytes == 0
    d = report.as_dict()
    assert d["reference_methods"]["scan_context"]["descriptor_bytes"] == 4928


def test_bench_insufficient_samples():
    with pytest.raises(InsufficientSamples):
        bench(_SleepPipeline(), [1, 2, 3])
    with pytest.raises(InsufficientSamples):
        bench(_SleepPipeline(), list(range(10)), warmup=10, min_scans=5)


def test_bench_real_pipeline_reports_payload(tmp_path, rng):
    from referee.evaluation import DescriptorPipeline
    from referee.features import FeatureParams
    from referee.scan_io import PolarScan

    scans = []
    paths = []
    for i in range(11):
        m = rng.random((64, 128)).astype(np.float32) * 255
        scans.append(PolarScan(scan_id=i, timestamp=i * SECOND,
                               intensities=m, range_resolution=0.5))
        p = tmp_path / f"{i}.bin"
        p.write_bytes(m.tobytes())
        paths.append(p)
    pipe = DescriptorPipeline(FeatureParams(), alpha=16)
    report = bench(pipe, scans, input_paths=paths, warmup=2)
    assert report.descriptor_bytes == 16 * 8
    assert report.input_bytes == pytest.approx(64 * 128 * 4)
    assert report.compression_ratio == pytest.approx(64 * 128 * 4 / 128.0)
    assert report.gen_time_s > 0 and report.search_time_s > 0
