"""Flat key=value configuration shared by the CLI subcommands.

One namespace holds every tunable, read from an INI-style file (no
sections; # and ; start comments) and overridden by CLI flags. Validation
is all-at-once: every problem in a bad config is reported in a single
aggregated error rather than one per run.
"""

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError, UnreadableFile

SECOND_NS = 1_000_000_000

AXES = ("azimuth", "range")
FORMATS = ("auto", "raw_matrix", "polar_png")


@dataclass
class Config:
    sigma: float = 17.0           # feature smoothing width, range bins
    z_threshold: float = 3.0
    min_range_bin: int = 0
    log_intensity: bool = False
    alpha: int = 0                # 0 = auto: rows along partition axis // 8
    partition_axis: str = "azimuth"
    tau_s: float = 0.1
    tau_t: float = 20.0
    exclusion: float = 30.0       # seconds
    loop_radius: float = 20.0
    meta_cols: int = 11           # leading PNG columns of per-row metadata
    range_resolution: float = 1.0  # meters per bin for raw inputs
    format: str = "auto"
    jobs: int = 1

    @property
    def exclusion_ns(self):
        return int(round(self.exclusion * SECOND_NS))


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def parse_bool(text):
    try:
        return _BOOL_WORDS[str(text).strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {text!r}") from None


def parse_duration(text):
    """Seconds from '30', '30s', or '500ms'."""
    t = str(text).strip().lower()
    scale = 1.0
    if t.endswith("ms"):
        t, scale = t[:-2], 1e-3
    elif t.endswith("s"):
        t = t[:-1]
    value = float(t) * scale
    if not math.isfinite(value):
        raise ValueError(f"not a finite duration: {text!r}")
    return value


_PARSERS = {
    "sigma": float,
    "z_threshold": float,
    "min_range_bin": int,
    "log_intensity": parse_bool,
    "alpha": int,
    "partition_axis": str,
    "tau_s": float,
    "tau_t": float,
    "exclusion": parse_duration,
    "loop_radius": float,
    "meta_cols": int,
    "range_resolution": float,
    "format": str,
    "jobs": int,
}


def read_config_file(path):
    """Raw key -> string mapping from a flat INI file."""
    problems = []
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UnreadableFile(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key = value, got {raw.strip()!r}")
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    if problems:
        raise ConfigError(problems)
    return values


def resolve_config(file_values=None, overrides=None):
    """Defaults <- config file <- CLI overrides, validated in one pass.

    file_values are raw strings and get parsed per key; overrides are
    already-typed values (argparse output) applied when not None.
    """
    problems = []
    cfg = Config()
    known = {f.name for f in fields(Config)}

    for key, raw in (file_values or {}).items():
        if key not in known:
            problems.append(f"unknown config key {key!r}")
            continue
        try:
            setattr(cfg, key, _PARSERS[key](raw))
        except ValueError as exc:
            problems.append(f"{key}: {exc}")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise AssertionError(f"internal: unknown override {key!r}")
        setattr(cfg, key, value)

    problems.extend(validate_config(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate_config(cfg):
    problems = []
    if not (math.isfinite(cfg.sigma) and cfg.sigma > 0):
        problems.append(f"sigma must be finite and > 0, got {cfg.sigma}")
    if not math.isfinite(cfg.z_threshold):
        problems.append(f"z_threshold must be finite, got {cfg.z_threshold}")
    if cfg.min_range_bin < 0:
        problems.append(f"min_range_bin must be >= 0, got {cfg.min_range_bin}")
    if cfg.alpha < 0:
        problems.append(f"alpha must be >= 1 (or 0 for auto), got {cfg.alpha}")
    if cfg.partition_axis not in AXES:
        problems.append(f"partition_axis must be one of {AXES}, got {cfg.partition_axis!r}")
    if not (math.isfinite(cfg.tau_s) and cfg.tau_s > 0):
        problems.append(f"tau_s must be finite and > 0, got {cfg.tau_s}")
    if not (math.isfinite(cfg.tau_t) and cfg.tau_t > 0):
        problems.append(f"tau_t must be finite and > 0, got {cfg.tau_t}")
    if not (math.isfinite(cfg.exclusion) and cfg.exclusion >= 0):
        problems.append(f"exclusion must be finite and >= 0, got {cfg.exclusion}")
    if not (math.isfinite(cfg.loop_radius) and cfg.loop_radius > 0):
        problems.append(f"loop_radius must be finite and > 0, got {cfg.loop_radius}")
    if cfg.meta_cols < 0:
        problems.append(f"meta_cols must be >= 0, got {cfg.meta_cols}")
    if not (math.isfinite(cfg.range_resolution) and cfg.range_resolution > 0):
        problems.append(
            f"range_resolution must be finite and > 0, got {cfg.range_resolution}")
    if cfg.format not in FORMATS:
        problems.append(f"format must be one of {FORMATS}, got {cfg.format!r}")
    if cfg.jobs < 1:
        problems.append(f"jobs must be >= 1, got {cfg.jobs}")
    return problems
