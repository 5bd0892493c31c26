"""Radar place recognition from free-space descriptors.

Pipeline in one breath: load a polar scan, extract its feature mask,
compress the mask into an alpha-entry free-space descriptor, index
descriptors in a KD-tree, and retrieve revisited places under dual
similarity/distance thresholds. Evaluation and synthetic-data tooling
reproduce the usual PR-curve protocol end to end.
"""

from .config import Config, resolve_config
from .descriptor import (Descriptor, deserialize, farthest_feature_indices,
                         free_space_count, make_referee, payload_bytes,
                         read_descriptor, sectors, serialize, write_descriptor)
from .errors import RefereeError
from .evaluation import (BenchReport, DescriptorPipeline, LoopGroundTruth,
                         PrCurve, QueryRecord, bench, export_matching_graph,
                         label_from_positions, label_true_loops, pr_curve)
from .features import FeatureMask, FeatureParams, extract_features, gaussian_smooth_row
from .kernels import BACKEND
from .retrieval import (MatchResult, PlaceEntry, RetrievalParams, build_index,
                        linear_scan_query, load_entries, make_entry, query,
                        save_entries)
from .scan_io import (PolarScan, Pose, Trajectory, load_polar_scan,
                      load_trajectory, pose_at, write_raw_matrix,
                      write_trajectory)
from .synth import (SensorModel, World, generate_session, generate_world,
                    make_line, make_out_and_back, render_scan)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BenchReport", "Config", "Descriptor", "DescriptorPipeline",
    "FeatureMask", "FeatureParams", "LoopGroundTruth", "MatchResult",
    "PlaceEntry", "PolarScan", "Pose", "PrCurve", "QueryRecord", "RefereeError",
    "RetrievalParams", "SensorModel", "Trajectory", "World", "bench",
    "build_index", "deserialize", "export_matching_graph",
    "extract_features", "farthest_feature_indices", "free_space_count",
    "gaussian_smooth_row", "generate_session", "generate_world",
    "label_from_positions", "label_true_loops", "linear_scan_query",
    "load_entries", "load_polar_scan", "load_trajectory", "make_entry",
    "make_line", "make_out_and_back", "make_referee", "payload_bytes",
    "pose_at", "pr_curve", "query", "read_descriptor", "render_scan",
    "resolve_config", "save_entries", "sectors", "serialize",
    "write_descriptor", "write_raw_matrix", "write_trajectory",
]
