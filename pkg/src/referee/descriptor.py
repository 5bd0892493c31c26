"""Free-space descriptors and their binary form.

A feature mask is cut into alpha sector blocks of H_beta consecutive rows.
Within each row only the cells up to the farthest feature are trusted
(beyond it nothing returned an echo, so emptiness there is unobserved), and
the descriptor entry for a sector is its trusted free-cell count normalized
by H_beta * W. Entries therefore live in [0, (W-1)/W]: a row can never be
all free up to its farthest feature, because that farthest cell is a feature.

The serialized form frames the float64 payload with a fixed 32-byte header
so files stay self-describing and cheap to validate.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    BadMagic,
    DiskWriteFailure,
    IndivisibleAlpha,
    TruncatedPayload,
    UnreadableFile,
    VersionUnsupported,
)

RFRD_MAGIC = b"RFRD"
RFRD_VERSION = 1

# magic, version, reserved, alpha, scan_id, timestamp; padded to 32 bytes
_HEADER = struct.Struct("<4sHHIQq")
_PAD = 32 - _HEADER.size
HEADER_BYTES = 32


@dataclass(frozen=True)
class Descriptor:
    values: np.ndarray  # alpha float64 entries in [0, 1)
    alpha: int
    source_scan_id: int
    timestamp: int

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError(f"values must be 1D, got shape {vals.shape}")
        if self.alpha < 1 or vals.size != self.alpha:
            raise ValueError(f"expected {self.alpha} values, got {vals.size}")
        if not np.isfinite(vals).all():
            raise ValueError("descriptor values must be finite")
        if (vals < 0).any() or (vals >= 1).any():
            raise ValueError("descriptor values must lie in [0, 1)")
        if not 0 <= self.source_scan_id < 2**64:
            raise ValueError(f"scan id out of range: {self.source_scan_id}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SectorView:
    """The H_beta consecutive mask rows belonging to one sector."""

    rows: np.ndarray
    sector_index: int  # 1-based


@dataclass(frozen=True)
class FarthestIndexVector:
    """Per-row 1-based index of the last feature; 0 for featureless rows."""

    r: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.r, dtype=np.int64)
        if arr.ndim != 1 or (arr < 0).any():
            raise ValueError("r must be a 1D vector of non-negative indices")
        arr.flags.writeable = False
        object.__setattr__(self, "r", arr)


def sectors(feature_mask, alpha, axis="azimuth"):
    """Split a mask into alpha SectorViews of equal consecutive-row blocks.

    axis="range" transposes first, so sectors group range bins instead of
    azimuth rows.
    """
    m = _oriented(feature_mask.mask, axis)
    rows = m.shape[0]
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if rows % alpha != 0:
        raise IndivisibleAlpha(
            f"alpha {alpha} does not divide the {rows} rows along axis {axis!r}")
    h_beta = rows // alpha
    return [SectorView(rows=m[i * h_beta:(i + 1) * h_beta], sector_index=i + 1)
            for i in range(alpha)]


def farthest_feature_indices(sector):
    """1-based farthest feature index per row of a sector (0 if none)."""
    rows = np.ascontiguousarray(sector.rows, dtype=np.uint8)
    last, _ = kernels.farthest_and_free(rows)
    return FarthestIndexVector(r=last)


def free_space_count(row, r_j):
    """Number of free cells among the first r_j cells of a mask row."""
    r_j = int(r_j)
    row = np.asarray(row)
    if not 0 <= r_j <= row.shape[0]:
        raise ValueError(f"r_j {r_j} outside [0, {row.shape[0]}]")
    return r_j - int(np.count_nonzero(row[:r_j]))


def _oriented(mask, axis):
    if axis == "azimuth":
        return mask
    if axis == "range":
        return mask.T
    raise ValueError(f"axis must be 'azimuth' or 'range', got {axis!r}")


def make_referee(feature_mask, alpha, axis="azimuth"):
    """Build the alpha-entry free-space descriptor of a feature mask.

    Entry i sums, over the rows of sector i, the free cells up to each
    row's farthest feature, normalized by H_beta * W. Counting is integer
    until the final division, so results are exact and reproducible.
    """
    m = _oriented(feature_mask.mask, axis)
    rows, width = m.shape
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if rows % alpha != 0:
        raise IndivisibleAlpha(
            f"alpha {alpha} does not divide the {rows} rows along axis {axis!r}")
    h_beta = rows // alpha

    _, free = kernels.farthest_and_free(np.ascontiguousarray(m))
    sums = free.reshape(alpha, h_beta).sum(axis=1)
    values = sums.astype(np.float64) / float(h_beta * width)
    return Descriptor(values=values, alpha=alpha,
                      source_scan_id=feature_mask.source_scan_id,
                      timestamp=feature_mask.timestamp)


def serialize(descriptor):
    """Encode a Descriptor to its framed little-endian byte form."""
    head = _HEADER.pack(RFRD_MAGIC, RFRD_VERSION, 0, descriptor.alpha,
                        descriptor.source_scan_id, descriptor.timestamp)
    return head + b"\x00" * _PAD + descriptor.values.astype("<f8").tobytes()


def deserialize(data):
    """Decode bytes produced by serialize back into an equal Descriptor."""
    if len(data) < HEADER_BYTES:
        raise TruncatedPayload(f"need at least {HEADER_BYTES} bytes, got {len(data)}")
    magic, version, _, alpha, scan_id, timestamp = _HEADER.unpack_from(data)
    if magic != RFRD_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != RFRD_VERSION:
        raise VersionUnsupported(f"descriptor version {version} not supported")
    expected = HEADER_BYTES + 8 * alpha
    if len(data) != expected:
        raise TruncatedPayload(
            f"expected {expected} bytes for alpha={alpha}, got {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=alpha, offset=HEADER_BYTES)
    return Descriptor(values=values.astype(np.float64), alpha=alpha,
                      source_scan_id=scan_id, timestamp=timestamp)


def payload_bytes(descriptor):
    """Size of the value payload on disk, header excluded."""
    return 8 * descriptor.alpha


def write_descriptor(descriptor, path):
    try:
        Path(path).write_bytes(serialize(descriptor))
    except OSError as exc:
        raise DiskWriteFailure(f"cannot write {path}: {exc}") from exc


def read_descriptor(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    return deserialize(data)
