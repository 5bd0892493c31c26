import math

import numpy as np
import pytest

from referee.descriptor import Descriptor
from referee.errors import MixedAlpha, ParseError
from referee.retrieval import (MatchResult, PlaceEntry, RetrievalParams,
                               build_index, linear_scan_query, load_entries,
                               make_entry, query, read_matches_csv,
                               save_entries, write_matches_csv)


def _desc(rng, alpha=16, scan_id=0, timestamp=0, values=None):
    if values is None:
        values = rng.random(alpha) * 0.999
    return Descriptor(values=np.asarray(values, dtype=np.float64), alpha=alpha,
                      source_scan_id=scan_id, timestamp=timestamp)


def _db(rng, n, alpha=16, dt=10**9, with_pos=False):
    entries = []
    for i in range(n):
        pos = (float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50))) \
            if with_pos else None
        entries.append(make_entry(_desc(rng, alpha, scan_id=i, timestamp=i * dt),
                                  position=pos))
    return entries


def test_empty_index_returns_none(rng):
    index = build_index([])
    assert query(index, _desc(rng)) is None
    assert linear_scan_query([], _desc(rng)) is None


def test_mixed_alpha_rejected(rng):
    entries = [make_entry(_desc(rng, 56, scan_id=0)),
               make_entry(_desc(rng, 50, scan_id=1))]
    with pytest.raises(MixedAlpha):
        build_index(entries)
    index = build_index(entries[:1])
    with pytest.raises(MixedAlpha):
        query(index, _desc(rng, 50))
    with pytest.raises(MixedAlpha):
        linear_scan_query(entries[:1], _desc(rng, 50))


def test_self_retrieval_zero_distance(rng):
    entries = _db(rng, 20)
    index = build_index(entries)
    params = RetrievalParams(tau_s=0.5, tau_t=20.0, exclusion_window=0)
    q = entries[7].descriptor
    res = query(index, q, params)
    assert res.matched_scan_id == 7
    assert res.d_s == 0.0
    assert res.accepted
    assert res.d_t is None


def test_threshold_semantics(rng):
    base = np.full(16, 0.4)
    stored = _desc(rng, scan_id=0, values=base)
    offset = base.copy()
    offset[0] += 0.3  # exactly d_s = 0.3
    q = _desc(rng, scan_id=1, timestamp=999, values=offset)
    entries = [make_entry(stored)]
    index = build_index(entries)
    res = query(index, q, RetrievalParams(tau_s=0.2, tau_t=20.0, exclusion_window=0))
    assert res.matched_scan_id == 0
    assert res.d_s == pytest.approx(0.3, abs=1e-12)
    assert not res.accepted
    res = query(index, q, RetrievalParams(tau_s=0.301, tau_t=20.0, exclusion_window=0))
    assert res.accepted


def test_exclusion_window(rng):
    entries = _db(rng, 10, dt=10**9)  # one entry per second
    index = build_index(entries)
    params = RetrievalParams(tau_s=10.0, tau_t=20.0, exclusion_window=3 * 10**9)
    q = _desc(rng, scan_id=99, timestamp=5 * 10**9)
    res = query(index, q, params)
    assert abs(res_timestamp(entries, res) - q.timestamp) >= 3 * 10**9
    # all entries inside the window: no candidate
    tight = RetrievalParams(tau_s=10.0, tau_t=20.0, exclusion_window=10**15)
    assert query(index, q, tight) is None
    assert linear_scan_query(entries, q, tight) is None


def res_timestamp(entries, res):
    return next(e.timestamp for e in entries if e.scan_id == res.matched_scan_id)


def test_sequential_only_looks_backwards(rng):
    entries = _db(rng, 10, dt=10**9)
    index = build_index(entries)
    params = RetrievalParams(tau_s=10.0, tau_t=20.0, exclusion_window=2 * 10**9)
    q = entries[4].descriptor
    res = query(index, q, params, sequential=True)
    assert res_timestamp(entries, res) <= 2 * 10**9
    # earliest query has nothing before it
    assert query(index, entries[0].descriptor, params, sequential=True) is None


def test_dt_gate_when_positions_known(rng):
    stored = make_entry(_desc(rng, scan_id=0), position=(0.0, 0.0))
    index = build_index([stored])
    q = stored.descriptor
    params = RetrievalParams(tau_s=1.0, tau_t=5.0, exclusion_window=0)
    near = query(index, q, params, position=(3.0, 4.0))
    assert near.d_t == pytest.approx(5.0)
    assert not near.accepted          # strict <
    closer = query(index, q, params, position=(3.0, 3.9))
    assert closer.accepted
    skipped = query(index, q, params, position=None)
    assert skipped.d_t is None and skipped.accepted


def test_metric_sanity(rng):
    from referee.retrieval import _l2
    for _ in range(50):
        a, b, c = (rng.random(16) for _ in range(3))
        assert _l2(a, a) == 0.0
        assert _l2(a, b) == _l2(b, a)
        assert _l2(a, c) <= _l2(a, b) + _l2(b, c) + 1e-12


def test_monotone_acceptance(rng):
    entries = _db(rng, 50)
    index = build_index(entries)
    q = _desc(rng, scan_id=99, timestamp=10**12)
    last = None
    for tau in (0.01, 0.05, 0.1, 0.5, 1.0, 2.0):
        res = query(index, q, RetrievalParams(tau_s=tau, tau_t=20.0,
                                              exclusion_window=0))
        if last is not None:
            assert not (last.accepted and not res.accepted)
        assert res.matched_scan_id == query(
            index, q, RetrievalParams(tau_s=0.01, tau_t=20.0,
                                      exclusion_window=0)).matched_scan_id
        last = res


def test_tie_break_smaller_scan_id(rng):
    values = np.full(16, 0.25)
    twin_a = make_entry(_desc(rng, scan_id=5, values=values))
    twin_b = make_entry(_desc(rng, scan_id=2, values=values))
    index = build_index([twin_a, twin_b])
    q = _desc(rng, scan_id=9, timestamp=10**12, values=values + 0.01)
    res = query(index, q, RetrievalParams(tau_s=1.0, tau_t=1.0, exclusion_window=0))
    lin = linear_scan_query([twin_a, twin_b], q,
                            RetrievalParams(tau_s=1.0, tau_t=1.0, exclusion_window=0))
    assert res.matched_scan_id == lin.matched_scan_id == 2


def test_oracle_equivalence_random(rng):
    for trial in range(8):
        alpha = int(rng.choice([8, 16, 56]))
        n = int(rng.integers(1, 300))
        with_pos = bool(trial % 2)
        entries = _db(rng, n, alpha=alpha, with_pos=with_pos)
        index = build_index(entries)
        params = RetrievalParams(tau_s=float(rng.uniform(0.05, 1.0)),
                                 tau_t=float(rng.uniform(5, 50)),
                                 exclusion_window=int(rng.integers(0, 5)) * 10**9)
        for _ in range(25):
            sequential = bool(rng.integers(0, 2))
            q = _desc(rng, alpha, scan_id=int(rng.integers(0, 10**6)),
                      timestamp=int(rng.integers(0, n + 3)) * 10**9)
            pos = (float(rng.uniform(-50, 50)), float(rng.uniform(-50, 50))) \
                if with_pos else None
            a = query(index, q, params, position=pos, sequential=sequential)
            b = linear_scan_query(entries, q, params, position=pos,
                                  sequential=sequential)
            if a is None or b is None:
                assert a is None and b is None
            else:
                assert a.matched_scan_id == b.matched_scan_id
                assert a.d_s == b.d_s
                assert a.accepted == b.accepted
                assert a.d_t == b.d_t


def test_save_load_entries_round_trip(tmp_path, rng):
    entries = _db(rng, 7, with_pos=True)
    entries[3] = PlaceEntry(descriptor=entries[3].descriptor, scan_id=3,
                            timestamp=entries[3].timestamp, position=None)
    save_entries(entries, tmp_path)
    assert (tmp_path / "manifest.csv").exists()
    back = load_entries(tmp_path)
    assert len(back) == 7
    for orig, got in zip(entries, back):
        assert got.scan_id == orig.scan_id
        assert got.timestamp == orig.timestamp
        assert got.position == orig.position
        assert got.descriptor.values.tolist() == orig.descriptor.values.tolist()


def test_load_entries_without_manifest(tmp_path, rng):
    entries = _db(rng, 3)
    save_entries(entries, tmp_path)
    (tmp_path / "manifest.csv").unlink()
    back = load_entries(tmp_path)
    assert [e.scan_id for e in back] == [0, 1, 2]
    assert all(e.position is None for e in back)


def test_load_entries_bad_manifest(tmp_path, rng):
    save_entries(_db(rng, 2), tmp_path)
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("bogus,header\n1,2\n")
    with pytest.raises(ParseError):
        load_entries(tmp_path)


def test_matches_csv_round_trip(tmp_path):
    results = [
        (0, None),
        (1, MatchResult(query_scan_id=1, matched_scan_id=7, d_s=0.25,
                        d_t=3.5, accepted=True)),
        (2, MatchResult(query_scan_id=2, matched_scan_id=9, d_s=0.5,
                        d_t=None, accepted=False)),
    ]
    p = tmp_path / "matches.csv"
    write_matches_csv(results, p)
    rows = read_matches_csv(p)
    assert rows[0] == (0, None, None, None, False)
    assert rows[1] == (1, 7, 0.25, 3.5, True)
    assert rows[2] == (2, 9, 0.5, None, False)
