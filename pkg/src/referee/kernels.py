"""Hot numeric kernels with two interchangeable backends.

The per-row Gaussian smoothing and the per-row free-space counting dominate
runtime on real scan sizes (hundreds of azimuths times thousands of range
bins), so both are provided as numba @njit loops with a pure-numpy fallback.

Backend selection is read once at import from the REFEREE_BACKEND environment
variable:

    auto   (default) use numba when importable, else numpy
    numba  require numba, fail if it cannot be imported
    numpy  force the vectorized fallback

``benchmarks/backend_bench.py`` compares the two paths on realistic shapes.
The integer kernel (farthest_and_free) is bit-identical across backends; the
smoothing kernel agrees to floating-point roundoff.
"""

import math
import os

import numpy as np

from .errors import ConfigError

_ENV_VAR = "REFEREE_BACKEND"

try:
    from numba import njit, prange
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _HAVE_NUMBA = False


def _resolve_backend():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if choice == "auto":
        return "numba" if _HAVE_NUMBA else "numpy"
    if choice == "numba":
        if not _HAVE_NUMBA:
            raise ConfigError(f"{_ENV_VAR}=numba but numba is not importable")
        return "numba"
    if choice == "numpy":
        return "numpy"
    raise ConfigError(f"{_ENV_VAR}={choice!r} not one of auto, numba, numpy")


BACKEND = _resolve_backend()


def gaussian_kernel(sigma):
    """Unit-sum Gaussian weights truncated at +-ceil(3*sigma) bins.

    Returns (weights, radius); len(weights) == 2*radius + 1. Both backends
    consume this exact array, so the truncation and normalization policy is
    defined in one place.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * float(sigma)))
    m = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(m * m) / (2.0 * float(sigma) ** 2))
    return w / w.sum(), radius


# ---------------------------------------------------------------------------
# numpy fallback implementations
# ---------------------------------------------------------------------------

def boundary_weight_sums(w, radius, width):
    """den[k] = sum of the kernel weights that overlap the signal at k.

    Dividing by this renormalizes the truncated window at the row edges
    without fabricating energy. Shared by both backends so the policy has
    one definition.
    """
    c = np.cumsum(w)
    k = np.arange(width)
    hi = np.minimum(width - 1 - k, radius) + radius
    lo = np.maximum(radius - k, 0)
    return c[hi] - np.where(lo > 0, c[lo - 1], 0.0)


def smooth_rows_numpy(x, sigma):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("smooth_rows expects a 2D array")
    w, radius = gaussian_kernel(sigma)
    width = x.shape[1]
    den = boundary_weight_sums(w, radius, width)
    out = np.empty_like(x)
    for j in range(x.shape[0]):
        # slice the full convolution by hand; mode="same" realigns when the
        # kernel outgrows the row
        out[j] = np.convolve(x[j], w)[radius:radius + width] / den
    return out


def farthest_and_free_numpy(mask):
    mask = np.ascontiguousarray(mask)
    if mask.ndim != 2:
        raise ValueError("farthest_and_free expects a 2D mask")
    nz = mask != 0
    h, width = nz.shape
    any_feat = nz.any(axis=1)
    # 1-based index of the last feature cell; argmax on the reversed row
    # finds the first hit from the right.
    last = np.where(any_feat, width - np.argmax(nz[:, ::-1], axis=1), 0)
    count = nz.sum(axis=1)
    return last.astype(np.int64), (last - count).astype(np.int64)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _smooth_rows_jit(x, w, radius, den):
        # den is the column-wise clipped weight sum; it does not depend on
        # the row, so it arrives precomputed instead of burning a second
        # multiply-add per cell.
        h, width = x.shape
        out = np.empty_like(x)
        for j in prange(h):
            for k in range(width):
                lo = k - radius
                if lo < 0:
                    lo = 0
                hi = k + radius
                if hi > width - 1:
                    hi = width - 1
                num = 0.0
                for m in range(lo, hi + 1):
                    num += w[m - k + radius] * x[j, m]
                out[j, k] = num / den[k]
        return out

    @njit(cache=True)
    def _farthest_and_free_jit(mask):
        h, width = mask.shape
        last = np.zeros(h, dtype=np.int64)
        free = np.zeros(h, dtype=np.int64)
        for j in range(h):
            r = 0
            count = 0
            for k in range(width):
                if mask[j, k] != 0:
                    r = k + 1
                    count += 1
            last[j] = r
            free[j] = r - count
        return last, free

    def smooth_rows_numba(x, sigma):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("smooth_rows expects a 2D array")
        w, radius = gaussian_kernel(sigma)
        den = boundary_weight_sums(w, radius, x.shape[1])
        return _smooth_rows_jit(x, w, radius, den)

    def farthest_and_free_numba(mask):
        mask = np.ascontiguousarray(mask, dtype=np.uint8)
        if mask.ndim != 2:
            raise ValueError("farthest_and_free expects a 2D mask")
        return _farthest_and_free_jit(mask)

else:  # pragma: no cover
    smooth_rows_numba = None
    farthest_and_free_numba = None


if BACKEND == "numba":
    smooth_rows = smooth_rows_numba
    farthest_and_free = farthest_and_free_numba
else:
    smooth_rows = smooth_rows_numpy
    farthest_and_free = farthest_and_free_numpy
