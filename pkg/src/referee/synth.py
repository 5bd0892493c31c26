"""Synthetic radar sessions with exact ground truth.

A World is a bag of point landmarks; a scan is rendered by dropping a
Gaussian intensity bump at each landmark's (bearing, range) cell, with
amplitude falling off across nearby azimuth rows, over a seeded Gaussian
noise floor. Deliberately crude as radar goes, but it produces exactly the
structure the descriptor pipeline consumes: sparse bright returns over
noise, repeatable revisits, and a trajectory to label loops from.

Every generator is a pure function of its seeds. Session scans draw their
noise from a stream seeded by (session_seed, scan_id), so rendering order
or parallelism cannot change a single pixel.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DiskWriteFailure
from .scan_io import PolarScan, Pose, Trajectory, write_raw_matrix, write_trajectory

SECOND_NS = 1_000_000_000
PEAK_INTENSITY = 200.0  # bump peak at reflectivity 1, before noise and clipping


@dataclass(frozen=True)
class World:
    landmarks: np.ndarray  # (n, 3) rows of x, y, reflectivity
    bounds: float
    seed: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.landmarks, dtype=np.float64).reshape(-1, 3)
        arr.flags.writeable = False
        object.__setattr__(self, "landmarks", arr)


@dataclass(frozen=True)
class SensorModel:
    max_range: float = 100.0
    range_bins: int = 256
    azimuths: int = 64
    beam_width: float = 0.1       # radians
    noise_floor_mean: float = 40.0
    noise_floor_std: float = 8.0
    return_sigma: float = 2.0     # range bins

    def __post_init__(self):
        if self.max_range <= 0:
            raise ValueError(f"max_range must be > 0, got {self.max_range}")
        if self.range_bins < 1 or self.azimuths < 1:
            raise ValueError("range_bins and azimuths must be >= 1")
        if self.beam_width <= 0 or self.return_sigma <= 0:
            raise ValueError("beam_width and return_sigma must be > 0")
        if self.noise_floor_std < 0:
            raise ValueError("noise_floor_std must be >= 0")

    @property
    def range_resolution(self):
        return self.max_range / self.range_bins


def generate_world(seed, n_landmarks, bounds=100.0):
    """Uniformly scattered landmarks, reproducible bit-exactly per seed."""
    if n_landmarks < 0:
        raise ValueError(f"n_landmarks must be >= 0, got {n_landmarks}")
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-bounds, bounds, size=(n_landmarks, 2))
    refl = rng.uniform(0.2, 1.0, size=(n_landmarks, 1))
    return World(landmarks=np.hstack([xy, refl]), bounds=float(bounds), seed=int(seed))


def render_scan(world, pose, sensor=SensorModel(), seed=0, scan_id=0):
    """Render the polar scan seen from pose.

    Each landmark within range paints exp-falloff bumps centered at its
    fractional range bin across the azimuth rows inside half a beam width
    of its bearing, so the brightest cell for an on-ray landmark at range
    rho sits at bin round(rho / range_resolution). Noise is additive
    N(noise_floor_mean, noise_floor_std); the result is clipped to [0, 255].
    """
    h, w = sensor.azimuths, sensor.range_bins
    res = sensor.range_resolution
    rng = np.random.default_rng(seed)
    img = rng.normal(sensor.noise_floor_mean, sensor.noise_floor_std, size=(h, w))

    row_pitch = 2.0 * math.pi / h
    half_beam = sensor.beam_width / 2.0
    sigma_th = sensor.beam_width / 4.0
    sigma_r = sensor.return_sigma

    for lx, ly, refl in world.landmarks:
        dx, dy = lx - pose.x, ly - pose.y
        rho = math.hypot(dx, dy)
        if rho <= 0.0 or rho >= sensor.max_range:
            continue
        bearing = (math.atan2(dy, dx) - pose.yaw) % (2.0 * math.pi)
        center_bin = rho / res

        k0 = max(0, int(math.floor(center_bin - 4.0 * sigma_r)))
        k1 = min(w - 1, int(math.ceil(center_bin + 4.0 * sigma_r)))
        if k1 < k0:
            continue
        ks = np.arange(k0, k1 + 1)
        radial = np.exp(-((ks - center_bin) ** 2) / (2.0 * sigma_r ** 2))

        j_lo = int(math.floor((bearing - half_beam) / row_pitch))
        j_hi = int(math.ceil((bearing + half_beam) / row_pitch))
        for j in range(j_lo, j_hi + 1):
            dth = bearing - j * row_pitch
            dth = (dth + math.pi) % (2.0 * math.pi) - math.pi
            if abs(dth) > half_beam:
                continue
            amp = PEAK_INTENSITY * refl * math.exp(-(dth ** 2) / (2.0 * sigma_th ** 2))
            img[j % h, k0:k1 + 1] += amp * radial

    np.clip(img, 0.0, 255.0, out=img)
    return PolarScan(scan_id=int(scan_id), timestamp=int(pose.timestamp),
                     intensities=img, range_resolution=res)


def _curved_course(n, spacing, turn_total):
    # open arc: compact footprint, and non-adjacent poses never come close
    xs, ys, yaws = [0.0], [0.0], []
    for i in range(n):
        yaw = turn_total * i / max(n - 1, 1)
        yaws.append(yaw)
        xs.append(xs[-1] + spacing * math.cos(yaw))
        ys.append(ys[-1] + spacing * math.sin(yaw))
    return xs[:n], ys[:n], yaws


def make_line(n_poses, spacing=5.0, dt_ns=SECOND_NS, start=(0.0, 0.0), heading=0.0):
    """Straight constant-speed path; no revisits by construction."""
    poses = [Pose(timestamp=i * dt_ns,
                  x=start[0] + i * spacing * math.cos(heading),
                  y=start[1] + i * spacing * math.sin(heading),
                  yaw=heading)
             for i in range(n_poses)]
    return Trajectory(poses=tuple(poses))


def make_out_and_back(n_poses, spacing=5.0, dt_ns=SECOND_NS,
                      turn_total=0.8 * 2.0 * math.pi):
    """Out along an open arc, then back over the same ground.

    The return pass reuses the outbound poses verbatim (position and yaw),
    so pose k >= ceil(n/2) revisits pose n-1-k and differs only by time.
    Keeping the yaw is intentional: the descriptor reads azimuth structure,
    and a revisit should look like the same place, not a rotated one.
    """
    if n_poses < 2:
        raise ValueError(f"need at least 2 poses, got {n_poses}")
    n_out = (n_poses + 1) // 2
    xs, ys, yaws = _curved_course(n_out, spacing, turn_total)
    poses = []
    for k in range(n_poses):
        src = k if k < n_out else n_poses - 1 - k
        poses.append(Pose(timestamp=k * dt_ns, x=xs[src], y=ys[src], yaw=yaws[src]))
    return Trajectory(poses=tuple(poses))


def generate_session(world, trajectory, sensor, seed, out_dir):
    """Render one RFMX file per pose plus trajectory.csv into out_dir.

    Scan i gets id i, the pose's timestamp, and noise seeded by (seed, i).
    Returns (scan paths, trajectory path).
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, pose in enumerate(trajectory.poses):
            scan = render_scan(world, pose, sensor, seed=[seed, i], scan_id=i)
            p = out / f"{i:06d}.rfmx"
            write_raw_matrix(scan, p)
            paths.append(p)
        traj_path = out / "trajectory.csv"
        write_trajectory(trajectory, traj_path)
    except OSError as exc:
        raise DiskWriteFailure(f"cannot write session to {out}: {exc}") from exc
    return paths, traj_path
