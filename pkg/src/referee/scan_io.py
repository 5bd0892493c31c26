"""Polar radar scan and trajectory loading.

Scans arrive either as RFMX raw-matrix files (this package's own container,
see write_raw_matrix) or as 8-bit grayscale polar PNGs with a configurable
number of leading per-azimuth metadata columns, as shipped by the common
spinning-radar datasets. Trajectories are CSV with nanosecond timestamps.

All loaders are pure functions and the returned values are immutable, so
they are safe to call concurrently.
"""

import csv
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DuplicateTimestamp,
    EmptyTrajectory,
    MalformedHeader,
    NonGrayscaleImage,
    ParseError,
    UnreadableFile,
)

RFMX_MAGIC = b"RFMX"
RFMX_VERSION = 1
# magic, version u16, H u32, W u32, timestamp i64, range_resolution f64
_RFMX_HEADER = struct.Struct("<4sHIIqd")

DEFAULT_META_COLS = 11  # 8-byte timestamp + 2-byte azimuth + 1-byte flag

TRAJECTORY_HEADER = ["timestamp", "x", "y", "yaw"]


@dataclass(frozen=True)
class PolarScan:
    """One polar radar scan: rows are azimuths, columns are range bins."""

    scan_id: int
    timestamp: int  # nanoseconds
    intensities: np.ndarray  # H x W float64, non-negative
    range_resolution: float  # meters per range bin

    def __post_init__(self):
        arr = np.ascontiguousarray(self.intensities, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"intensities must be a non-empty 2D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0:
            raise ValueError("intensities must be finite and non-negative")
        arr.flags.writeable = False
        object.__setattr__(self, "intensities", arr)

    @property
    def azimuth_count(self):
        return self.intensities.shape[0]

    @property
    def range_bins(self):
        return self.intensities.shape[1]


@dataclass(frozen=True)
class Pose:
    timestamp: int  # nanoseconds
    x: float
    y: float
    yaw: float  # radians


@dataclass(frozen=True)
class Trajectory:
    poses: tuple
    _times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise EmptyTrajectory("trajectory has no poses")
        times = np.array([p.timestamp for p in poses], dtype=np.int64)
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory poses must be strictly increasing in timestamp")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "_times", times)

    def __len__(self):
        return len(self.poses)


def _numeric_stem(path):
    """Integer filename stem (the usual timestamp naming), else 0."""
    stem = Path(path).stem
    return int(stem) if re.fullmatch(r"\d+", stem) else 0


def load_polar_scan(path, fmt="raw_matrix", meta_cols=DEFAULT_META_COLS,
                    scan_id=None, range_resolution=1.0):
    """Load one scan from disk as a PolarScan.

    fmt is "raw_matrix" (RFMX container) or "polar_png". For PNGs the first
    meta_cols columns are per-azimuth metadata and are stripped; scan_id and
    timestamp fall back to the numeric filename stem. RFMX carries its own
    timestamp and range resolution.
    """
    path = Path(path)
    if fmt == "raw_matrix":
        return _load_rfmx(path, scan_id)
    if fmt == "polar_png":
        return _load_polar_png(path, meta_cols, scan_id, range_resolution)
    raise ValueError(f"unknown scan format {fmt!r}")


def _load_rfmx(path, scan_id):
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise UnreadableFile(f"cannot read {path}: {e}") from e
    if len(blob) < _RFMX_HEADER.size:
        raise MalformedHeader(f"{path}: {len(blob)} bytes is shorter than the RFMX header")
    magic, version, h, w, timestamp, resolution = _RFMX_HEADER.unpack_from(blob)
    if magic != RFMX_MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    if version != RFMX_VERSION:
        raise MalformedHeader(f"{path}: unsupported RFMX version {version}")
    if h < 1 or w < 1:
        raise MalformedHeader(f"{path}: header claims empty matrix {h}x{w}")
    payload = blob[_RFMX_HEADER.size:]
    if len(payload) != h * w * 4:
        raise MalformedHeader(
            f"{path}: header claims {h}x{w} ({h * w * 4} payload bytes) but "
            f"payload holds {len(payload)} bytes")
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float64)
    if not np.all(np.isfinite(values)) or values.min() < 0:
        raise MalformedHeader(f"{path}: payload contains non-finite or negative intensities")
    if not (math.isfinite(resolution) and resolution > 0):
        raise MalformedHeader(f"{path}: bad range_resolution {resolution}")
    if scan_id is None:
        scan_id = _numeric_stem(path)
    return PolarScan(scan_id=scan_id, timestamp=timestamp,
                     intensities=values, range_resolution=resolution)


def _load_polar_png(path, meta_cols, scan_id, range_resolution):
    if meta_cols < 0:
        raise ValueError("meta_cols must be >= 0")
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise NonGrayscaleImage(f"{path}: mode {img.mode!r}, need 8-bit grayscale (L)")
            arr = np.asarray(img)
    except (FileNotFoundError, UnidentifiedImageError, OSError) as e:
        raise UnreadableFile(f"cannot read {path}: {e}") from e
    if arr.ndim != 2:
        raise NonGrayscaleImage(f"{path}: expected a single-channel image")
    if arr.shape[1] - meta_cols < 1:
        raise MalformedHeader(
            f"{path}: {meta_cols} metadata columns leave no range bins "
            f"(image width {arr.shape[1]})")
    values = arr[:, meta_cols:].astype(np.float64)
    if scan_id is None:
        scan_id = _numeric_stem(path)
    return PolarScan(scan_id=scan_id, timestamp=_numeric_stem(path),
                     intensities=values, range_resolution=float(range_resolution))


def write_raw_matrix(scan, path):
    """Write a PolarScan as an RFMX file (f32 payload, little-endian)."""
    header = _RFMX_HEADER.pack(RFMX_MAGIC, RFMX_VERSION,
                               scan.azimuth_count, scan.range_bins,
                               scan.timestamp, scan.range_resolution)
    payload = scan.intensities.astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_trajectory(path):
    """Load a timestamp,x,y,yaw CSV as a Trajectory sorted by timestamp."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise UnreadableFile(f"cannot read {path}: {e}") from e
    rows = list(csv.reader(lines))
    if not rows:
        raise EmptyTrajectory(f"{path}: empty file")
    header = [c.strip().lower() for c in rows[0]]
    if header != TRAJECTORY_HEADER:
        raise ParseError(f"expected header {','.join(TRAJECTORY_HEADER)!r}, got {rows[0]!r}", row=1)
    poses = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", row=i)
        try:
            t = int(row[0])
        except ValueError:
            raise ParseError(f"timestamp {row[0]!r} is not an integer", row=i) from None
        try:
            x, y, yaw = (float(v) for v in row[1:])
        except ValueError:
            raise ParseError(f"non-numeric pose fields {row[1:]!r}", row=i) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError(f"non-finite position ({x}, {y})", row=i)
        poses.append(Pose(timestamp=t, x=x, y=y, yaw=yaw))
    if not poses:
        raise EmptyTrajectory(f"{path}: no pose rows")
    poses.sort(key=lambda p: p.timestamp)
    for a, b in zip(poses, poses[1:]):
        if a.timestamp == b.timestamp:
            raise DuplicateTimestamp(f"{path}: timestamp {a.timestamp} appears twice")
    return Trajectory(poses=tuple(poses))


def _wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return a - 2.0 * math.pi * math.floor((a + math.pi) / (2.0 * math.pi))


def pose_at(trajectory, t):
    """Pose at time t: linear x,y and shortest-arc yaw interpolation.

    Clamps to the first/last pose outside the covered time range; a t that
    hits a pose timestamp exactly returns that pose verbatim.
    """
    times = trajectory._times
    poses = trajectory.poses
    i = int(np.searchsorted(times, t))
    if i < len(poses) and times[i] == t:
        return poses[i]
    if i == 0:
        return poses[0]
    if i == len(poses):
        return poses[-1]
    a, b = poses[i - 1], poses[i]
    f = (t - a.timestamp) / (b.timestamp - a.timestamp)
    dyaw = _wrap_angle(b.yaw - a.yaw)
    return Pose(timestamp=t,
                x=a.x + f * (b.x - a.x),
                y=a.y + f * (b.y - a.y),
                yaw=_wrap_angle(a.yaw + f * dyaw))


def write_trajectory(trajectory, path):
    """Write a Trajectory back to the timestamp,x,y,yaw CSV format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for p in trajectory.poses:
            writer.writerow([p.timestamp, repr(p.x), repr(p.y), repr(p.yaw)])
