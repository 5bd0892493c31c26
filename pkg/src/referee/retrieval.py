"""Place database and revisit retrieval.

Entries are descriptors with a timestamp and, when known, a 2D position.
Lookup returns the eligible entry with the smallest Euclidean descriptor
distance and flags it accepted only when that distance beats tau_s and,
if both positions are known, the metric distance beats tau_t. Entries
whose timestamp is within the exclusion window of the query are never
candidates; with sequential=True only strictly earlier entries are.

query() goes through a KD-tree; linear_scan_query() is the exhaustive
reference with the same contract. Both compute distances with the same
routine on the same float64 vectors, so on identical inputs they agree
exactly, which the test suite pins down.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .descriptor import read_descriptor, write_descriptor
from .errors import DiskWriteFailure, MixedAlpha, ParseError, UnreadableFile

SECOND_NS = 1_000_000_000
MANIFEST_HEADER = ["scan_id", "timestamp", "x", "y", "file"]
MATCHES_HEADER = ["query_id", "match_id", "d_s", "d_t", "accepted"]


@dataclass(frozen=True)
class RetrievalParams:
    tau_s: float = 0.1                      # descriptor distance gate
    tau_t: float = 20.0                     # metric distance gate, meters
    exclusion_window: int = 30 * SECOND_NS  # nanoseconds

    def __post_init__(self):
        if not (math.isfinite(self.tau_s) and self.tau_s > 0):
            raise ValueError(f"tau_s must be finite and > 0, got {self.tau_s}")
        if not (math.isfinite(self.tau_t) and self.tau_t > 0):
            raise ValueError(f"tau_t must be finite and > 0, got {self.tau_t}")
        if self.exclusion_window < 0:
            raise ValueError("exclusion_window must be >= 0")


@dataclass(frozen=True)
class PlaceEntry:
    descriptor: "Descriptor"
    scan_id: int
    timestamp: int
    position: tuple | None = None  # (x, y) if known

    def __post_init__(self):
        if self.position is not None:
            x, y = self.position
            object.__setattr__(self, "position", (float(x), float(y)))


@dataclass(frozen=True)
class MatchResult:
    query_scan_id: int
    matched_scan_id: int
    d_s: float
    d_t: float | None
    accepted: bool


def make_entry(descriptor, position=None):
    """PlaceEntry carrying the descriptor's own id and timestamp."""
    return PlaceEntry(descriptor=descriptor, scan_id=descriptor.source_scan_id,
                      timestamp=descriptor.timestamp, position=position)


class PlaceIndex:
    """Immutable search structure over a list of PlaceEntries."""

    def __init__(self, entries, alpha, matrix, tree):
        self.entries = entries
        self.alpha = alpha
        self._matrix = matrix
        self._times = np.array([e.timestamp for e in entries], dtype=np.int64)
        self._tree = tree

    def __len__(self):
        return len(self.entries)


def build_index(entries):
    entries = list(entries)
    if not entries:
        return PlaceIndex(entries, alpha=0, matrix=np.empty((0, 0)), tree=None)
    alpha = entries[0].descriptor.alpha
    for e in entries[1:]:
        if e.descriptor.alpha != alpha:
            raise MixedAlpha(
                f"entry {e.scan_id} has alpha {e.descriptor.alpha}, index has {alpha}")
    matrix = np.stack([e.descriptor.values for e in entries])
    return PlaceIndex(entries, alpha=alpha, matrix=matrix, tree=cKDTree(matrix))


def _l2(a, b):
    # single distance routine shared by the tree path and the oracle
    diff = a - b
    return float(math.sqrt(float(np.dot(diff, diff))))


def _eligible(entry_ts, query_ts, window, sequential):
    if query_ts is None:
        return True
    if sequential:
        return entry_ts < query_ts and query_ts - entry_ts >= window
    return abs(query_ts - entry_ts) >= window


def _finish(query_desc, entry, d_s, params, position):
    d_t = None
    if position is not None and entry.position is not None:
        d_t = math.dist(position, entry.position)
    accepted = d_s < params.tau_s and (d_t is None or d_t < params.tau_t)
    return MatchResult(query_scan_id=query_desc.source_scan_id,
                       matched_scan_id=entry.scan_id,
                       d_s=d_s, d_t=d_t, accepted=accepted)


def query(index, query_desc, params=RetrievalParams(), *, timestamp=None,
          position=None, sequential=False):
    """Nearest eligible entry via the KD-tree, or None when nothing is eligible.

    timestamp defaults to the descriptor's own stamp. The tree gives a
    first eligible hit; candidates within a whisker of that distance are
    refetched and re-ranked with exact arithmetic, ties broken toward the
    smaller scan_id, so the result never depends on tree internals.
    """
    n = len(index)
    if n == 0:
        return None
    if index.alpha and query_desc.alpha != index.alpha:
        raise MixedAlpha(
            f"query alpha {query_desc.alpha} does not match index alpha {index.alpha}")
    if timestamp is None:
        timestamp = query_desc.timestamp

    elig = np.array([_eligible(int(t), timestamp, params.exclusion_window, sequential)
                     for t in index._times], dtype=bool)
    if not elig.any():
        return None

    qv = query_desc.values
    k = 1
    found = -1
    d0 = math.inf
    while True:
        kk = min(k, n)
        dists, idxs = index._tree.query(qv, k=kk)
        dists = np.atleast_1d(dists)
        idxs = np.atleast_1d(idxs)
        for dist, i in zip(dists, idxs):
            if i >= n:
                break
            if elig[i]:
                found, d0 = int(i), float(dist)
                break
        if found >= 0 or kk == n:
            break
        k *= 2
    if found < 0:
        return None

    # revisit everything at essentially the winning radius with exact math
    radius = d0 * (1.0 + 1e-9) + 1e-12
    best_i, best_key = found, (_l2(qv, index._matrix[found]), index.entries[found].scan_id)
    for i in index._tree.query_ball_point(qv, radius):
        if not elig[i]:
            continue
        key = (_l2(qv, index._matrix[i]), index.entries[i].scan_id)
        if key < best_key:
            best_i, best_key = int(i), key
    return _finish(query_desc, index.entries[best_i], best_key[0], params, position)


def linear_scan_query(entries, query_desc, params=RetrievalParams(), *,
                      timestamp=None, position=None, sequential=False):
    """Exhaustive-scan reference for query(); same inputs, same answer."""
    if timestamp is None:
        timestamp = query_desc.timestamp
    best = None
    best_key = None
    for entry in entries:
        if entry.descriptor.alpha != query_desc.alpha:
            raise MixedAlpha(
                f"entry {entry.scan_id} alpha {entry.descriptor.alpha} "
                f"!= query alpha {query_desc.alpha}")
        if not _eligible(entry.timestamp, timestamp, params.exclusion_window,
                         sequential):
            continue
        key = (_l2(query_desc.values, entry.descriptor.values), entry.scan_id)
        if best_key is None or key < best_key:
            best, best_key = entry, key
    if best is None:
        return None
    return _finish(query_desc, best, best_key[0], params, position)


def save_entries(entries, out_dir):
    """Write one .rfrd per entry plus manifest.csv into out_dir."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "manifest.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MANIFEST_HEADER)
            for e in entries:
                name = f"{e.scan_id:06d}.rfrd"
                write_descriptor(e.descriptor, out / name)
                x, y = ("", "") if e.position is None else e.position
                writer.writerow([e.scan_id, e.timestamp, x, y, name])
    except OSError as exc:
        raise DiskWriteFailure(f"cannot write index to {out}: {exc}") from exc


def load_entries(dir_path):
    """Read entries back; uses manifest.csv when present, else bare .rfrd files."""
    d = Path(dir_path)
    manifest = d / "manifest.csv"
    entries = []
    if manifest.exists():
        try:
            with open(manifest, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header != MANIFEST_HEADER:
                    raise ParseError(f"manifest header {header} != {MANIFEST_HEADER}")
                for i, row in enumerate(reader, start=2):
                    if len(row) != len(MANIFEST_HEADER):
                        raise ParseError("wrong column count", row=i)
                    try:
                        scan_id, ts = int(row[0]), int(row[1])
                        pos = None
                        if row[2] != "" and row[3] != "":
                            pos = (float(row[2]), float(row[3]))
                    except ValueError as exc:
                        raise ParseError(str(exc), row=i) from exc
                    desc = read_descriptor(d / row[4])
                    entries.append(PlaceEntry(descriptor=desc, scan_id=scan_id,
                                              timestamp=ts, position=pos))
        except OSError as exc:
            raise UnreadableFile(f"cannot read {manifest}: {exc}") from exc
    else:
        for path in sorted(d.glob("*.rfrd")):
            desc = read_descriptor(path)
            entries.append(make_entry(desc))
    return entries


def write_matches_csv(results, path):
    """Persist (query_id, MatchResult-or-None) pairs; empty fields mean no candidate."""
    try:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MATCHES_HEADER)
            for query_id, res in results:
                if res is None:
                    writer.writerow([query_id, "", "", "", 0])
                else:
                    d_t = "" if res.d_t is None else repr(res.d_t)
                    writer.writerow([query_id, res.matched_scan_id, repr(res.d_s),
                                     d_t, int(res.accepted)])
    except OSError as exc:
        raise DiskWriteFailure(f"cannot write {path}: {exc}") from exc


def read_matches_csv(path):
    """Inverse of write_matches_csv; yields (query_id, match_id, d_s, d_t, accepted)."""
    rows = []
    try:
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != MATCHES_HEADER:
                raise ParseError(f"header {header} != {MATCHES_HEADER}")
            for i, row in enumerate(reader, start=2):
                if len(row) != len(MATCHES_HEADER):
                    raise ParseError("wrong column count", row=i)
                try:
                    query_id = int(row[0])
                    match_id = int(row[1]) if row[1] != "" else None
                    d_s = float(row[2]) if row[2] != "" else None
                    d_t = float(row[3]) if row[3] != "" else None
                    accepted = bool(int(row[4]))
                except ValueError as exc:
                    raise ParseError(str(exc), row=i) from exc
                rows.append((query_id, match_id, d_s, d_t, accepted))
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    return rows
