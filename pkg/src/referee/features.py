"""Feature extraction from polar scans.

Each azimuth row is split into a low-frequency component (truncated Gaussian
smoothing) and a high-frequency residual; the residual is standardized per
row and thresholded. A cell is a feature when its standardized residual
exceeds z_threshold and its raw intensity exceeds the row mean, which makes
the mask invariant to affine intensity changes (a*s + c, a > 0).

Rows whose residual has zero variance are declared featureless; blank
azimuths do occur in real data and are not an error.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DimensionMismatch


@dataclass(frozen=True)
class FeatureParams:
    """Tunables for the high/low-frequency split and thresholding."""

    sigma_gauss: float = 17.0   # low-pass Gaussian width, range bins
    z_threshold: float = 3.0    # cutoff on the standardized residual
    min_range_bin: int = 0      # near-field bins ignored
    log_intensity: bool = False  # apply log1p before the split

    def __post_init__(self):
        if not self.sigma_gauss > 0:
            raise ValueError(f"sigma_gauss must be > 0, got {self.sigma_gauss}")
        if self.min_range_bin < 0:
            raise ValueError(f"min_range_bin must be >= 0, got {self.min_range_bin}")


@dataclass(frozen=True)
class FeatureMask:
    """Binary feature support of a scan; same H x W as its source."""

    mask: np.ndarray  # H x W uint8, 1 = feature
    source_scan_id: int
    timestamp: int = 0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.mask, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2D, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask cells must be 0 or 1")
        arr.flags.writeable = False
        object.__setattr__(self, "mask", arr)


def gaussian_smooth_row(signal, sigma):
    """Smooth one row with the truncated, boundary-renormalized Gaussian.

    The kernel is cut at +-ceil(3*sigma) bins and rescaled to unit sum over
    whatever part overlaps the signal, so constants pass through unchanged
    and no energy is fabricated at the range extremes.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or signal.size < 1:
        raise ValueError("signal must be a non-empty 1D vector")
    return kernels.smooth_rows(signal[np.newaxis, :], sigma)[0]


def extract_features(scan, params=FeatureParams()):
    """Threshold a PolarScan into a FeatureMask.

    Per row: residual h = s - smooth(s), z = (h - mean(h)) / std(h), and
    mask = (z > z_threshold) & (s > mean(s)). Cells before min_range_bin
    never become features.
    """
    intens = scan.intensities
    h_rows, width = intens.shape
    if params.min_range_bin >= width:
        raise ValueError(
            f"min_range_bin {params.min_range_bin} leaves no usable bins (W={width})")

    s = intens[:, params.min_range_bin:]
    if params.log_intensity:
        s = np.log1p(s)
    g = kernels.smooth_rows(s, params.sigma_gauss)
    if g.shape != s.shape:
        raise DimensionMismatch(f"smoothed shape {g.shape} != signal shape {s.shape}")
    h = s - g

    mu = h.mean(axis=1, keepdims=True)
    sd = h.std(axis=1, keepdims=True)
    live = sd[:, 0] > 0.0
    z = np.zeros_like(h)
    np.divide(h - mu, sd, out=z, where=sd > 0.0)

    hits = (z > params.z_threshold) & (s > s.mean(axis=1, keepdims=True)) & live[:, np.newaxis]

    mask = np.zeros((h_rows, width), dtype=np.uint8)
    mask[:, params.min_range_bin:] = hits
    return FeatureMask(mask=mask, source_scan_id=scan.scan_id, timestamp=scan.timestamp)


def write_pgm(feature_mask, path):
    """Debug export of a FeatureMask as a binary PGM (0/255)."""
    arr = feature_mask.mask
    h, w = arr.shape
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((arr * 255).astype(np.uint8).tobytes())
