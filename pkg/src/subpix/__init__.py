"""Sub-pixel landmark codecs and quantization-error benchmarks.

The package measures how much localization accuracy each heatmap target
representation gives away before any model is trained: encode ground-truth
coordinates, decode them straight back, and score the residual.
"""

from __future__ import annotations

from .bench import (BenchConfig, BenchReport, SchemeStats, analytic_direct_error,
                    build_samples, emit_report, run_ideal, run_montecarlo)
from .codec import (SCHEME_ORDER, CodecConfig, DecimalOverflow, DecodeResult,
                    EncodedSample, OobPolicy, SampleEval, Scheme, decimal_center,
                    decode, encode, encode_points, evaluate_sample,
                    ideal_roundtrip, relative_offset, roundtrip_error)
from .datasets import (ATTRIBUTE_NAMES, AnnotationRecord, Attributes, DatasetSpec,
                       load_canonical, load_dataset, load_pts_dir, load_pts_file,
                       load_wflw, parse_pts, parse_wflw_line, subset_counts,
                       write_canonical)
from .errors import ConfigError, ParseError, SchemaError
from .geometry import (AffineTransform, FaceSample, LandmarkSet, Space,
                       apply_transform, compose, crop_from_bbox,
                       crop_from_landmarks, downsample_factor, heatmap_transform)
from .heatmap import (DEFAULT_TIE_EPS, GaussianSpec, Heatmap, argmax, clamp_cell,
                      render_gaussian, top2)
from .metrics import (DEFAULT_NORM_INDICES, DEFAULT_THRESHOLD, MetricsConfig,
                      PerImageError, ced_auc, ced_csv, ced_points, failure_rate,
                      format_ced_csv, nme, point_errors, resolve_norm_indices)

__version__ = "0.1.0"

__all__ = [
    "ATTRIBUTE_NAMES",
    "AffineTransform",
    "AnnotationRecord",
    "Attributes",
    "BenchConfig",
    "BenchReport",
    "CodecConfig",
    "ConfigError",
    "DEFAULT_NORM_INDICES",
    "DEFAULT_THRESHOLD",
    "DEFAULT_TIE_EPS",
    "DatasetSpec",
    "DecimalOverflow",
    "DecodeResult",
    "EncodedSample",
    "FaceSample",
    "GaussianSpec",
    "Heatmap",
    "LandmarkSet",
    "MetricsConfig",
    "OobPolicy",
    "ParseError",
    "PerImageError",
    "SCHEME_ORDER",
    "SampleEval",
    "SchemaError",
    "Scheme",
    "SchemeStats",
    "Space",
    "analytic_direct_error",
    "apply_transform",
    "argmax",
    "build_samples",
    "ced_auc",
    "ced_csv",
    "ced_points",
    "clamp_cell",
    "compose",
    "crop_from_bbox",
    "crop_from_landmarks",
    "decimal_center",
    "decode",
    "downsample_factor",
    "emit_report",
    "encode",
    "encode_points",
    "evaluate_sample",
    "failure_rate",
    "format_ced_csv",
    "heatmap_transform",
    "ideal_roundtrip",
    "load_canonical",
    "load_dataset",
    "load_pts_dir",
    "load_pts_file",
    "load_wflw",
    "nme",
    "parse_pts",
    "parse_wflw_line",
    "point_errors",
    "relative_offset",
    "render_gaussian",
    "resolve_norm_indices",
    "roundtrip_error",
    "run_ideal",
    "run_montecarlo",
    "subset_counts",
    "top2",
    "write_canonical",
    "__version__",
]
