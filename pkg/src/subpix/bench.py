"""Quantization-error benchmarks: ideal-condition runs and Monte-Carlo draws.

The ideal-condition benchmark answers "how much error does the coordinate
representation itself cost?": each sample's ground truth is encoded with a
scheme, decoded straight back, mapped to raw space, and scored. No model
is involved, so whatever error remains is the floor the representation
imposes on any model trained against it.

The Monte-Carlo mode is the desk-scale stand-in: landmarks with uniformly
distributed sub-pixel fractions are pushed through the same quantization
arithmetic and the empirical mean pixel error is reported next to the
closed-form expectation for the nearest-cell scheme.

Randomness comes from numpy's PCG64 generator seeded from the config, so
every run with the same config is byte-identical. Worker threads only
ever process disjoint samples and results are reduced in input order,
which keeps multi-threaded runs identical to single-threaded ones.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codec import (SCHEME_ORDER, CodecConfig, Scheme, evaluate_sample,
                    ideal_roundtrip)
from .datasets import AnnotationRecord
from .errors import ConfigError
from .geometry import FaceSample, crop_from_bbox, crop_from_landmarks
from .metrics import (MetricsConfig, PerImageError, ced_auc, ced_points,
                      failure_rate, resolve_norm_indices)

__all__ = [
    "BenchConfig",
    "SchemeStats",
    "BenchReport",
    "analytic_direct_error",
    "build_samples",
    "run_ideal",
    "run_montecarlo",
    "emit_report",
]


@dataclass(frozen=True)
class BenchConfig:
    """Everything a benchmark run needs besides the data itself."""

    schemes: tuple[Scheme, ...] = SCHEME_ORDER
    codec: CodecConfig = field(default_factory=lambda: CodecConfig(scheme=Scheme.DIRECT))
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    crop_margin: float = 0.25
    crop_source: str = "landmarks"   # or "bbox": use the annotation box
    bbox_inclusive: bool = True      # box max edge counts as the last pixel
    input_size: tuple[int, int] = (256, 256)
    seed: int = 1
    mc_samples: int = 100_000
    mc_landmarks: int = 1
    mc_n: float = 4.0
    threads: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigError(f"duplicate schemes in {self.schemes}")
        if self.crop_margin < 0:
            raise ConfigError(f"crop margin must be non-negative, got {self.crop_margin}")
        if self.crop_source not in ("landmarks", "bbox"):
            raise ConfigError(f"crop source must be 'landmarks' or 'bbox', "
                              f"got {self.crop_source!r}")
        if self.mc_samples < 1 or self.mc_landmarks < 1:
            raise ConfigError("Monte-Carlo sample and landmark counts must be positive")
        if not (np.isfinite(self.mc_n) and self.mc_n > 0):
            raise ConfigError(f"Monte-Carlo scale factor must be positive, got {self.mc_n}")
        if self.threads < 1:
            raise ConfigError(f"thread count must be positive, got {self.threads}")


@dataclass(eq=False)
class SchemeStats:
    """Aggregates for one scheme over one run."""

    scheme: Scheme
    n_images: int
    nme: float                     # fraction; multiply by 100 for display
    auc: float
    fr: float                      # fraction of images over the threshold
    conflicts: int
    clamped_points: int
    ced: list[tuple[float, float]]
    per_image: list[PerImageError]
    mean_px_error: float | None = None
    px_error_se: float | None = None
    analytic_px_error: float | None = None


@dataclass(eq=False)
class BenchReport:
    mode: str                      # "ideal" or "montecarlo"
    dataset: str
    n_images: int
    skipped: int
    threshold: float
    config: dict
    rows: list[SchemeStats]


def analytic_direct_error(n: float) -> float:
    """Expected 2-D round-off distance, in raw pixels, at scale factor ``n``.

    With both fractional coordinates uniform on [0, 1), the distance from
    a point to its nearest grid cell has expectation
    ``(sqrt(2) + asinh(1)) / 6`` cells; multiplying by the raw-pixels-per-
    cell factor ``n`` gives the raw-space value. ``n = 0`` is allowed as a
    degenerate limit.
    """
    if not (np.isfinite(n) and n >= 0):
        raise ConfigError(f"scale factor must be non-negative, got {n}")
    return n * (math.sqrt(2.0) + math.asinh(1.0)) / 6.0


def build_samples(records: list[AnnotationRecord], cfg: BenchConfig,
                  ) -> tuple[list[FaceSample], int]:
    """Turn annotation records into croppable samples; count the rejects.

    A record is skipped (not failed) when its normalization distance is
    not positive or its crop is degenerate.
    """
    if not records:
        raise ConfigError("no records to benchmark")
    n_landmarks = len(records[0].landmarks)
    i, j = resolve_norm_indices(n_landmarks, cfg.metrics)
    samples = []
    skipped = 0
    for rec in records:
        pts = rec.landmarks.points
        d = float(np.linalg.norm(pts[i] - pts[j]))
        if not (np.isfinite(d) and d > 0):
            skipped += 1
            continue
        try:
            if cfg.crop_source == "bbox":
                if rec.bbox is None:
                    skipped += 1
                    continue
                crop = crop_from_bbox(rec.bbox, cfg.crop_margin, cfg.input_size,
                                      inclusive=cfg.bbox_inclusive)
            else:
                crop = crop_from_landmarks(rec.landmarks, cfg.crop_margin, cfg.input_size)
            samples.append(FaceSample(id=rec.id, landmarks_raw=rec.landmarks, crop=crop,
                                      norm_distance_raw=d, image_size_input=cfg.input_size))
        except ConfigError:
            skipped += 1
    return samples, skipped


def _eval_one(sample: FaceSample, codec_cfgs: list[CodecConfig]) -> list[tuple]:
    out = []
    for ccfg in codec_cfgs:
        ev = evaluate_sample(sample, ccfg)
        keep = np.isfinite(ev.errors_raw)
        if not np.any(keep):
            out.append(None)
            continue
        per_point = ev.errors_raw / sample.norm_distance_raw
        img_nme = float(np.mean(ev.errors_raw[keep]) / sample.norm_distance_raw)
        out.append((PerImageError(id=sample.id, nme=img_nme, per_point=per_point),
                    ev.clamped_count, ev.conflict_count))
    return out


def run_ideal(records: list[AnnotationRecord], cfg: BenchConfig,
              dataset_name: str = "dataset") -> BenchReport:
    """Encode-decode every record under every scheme and aggregate."""
    samples, skipped = build_samples(records, cfg)
    if not samples:
        raise ConfigError("every record was skipped; nothing to benchmark")
    codec_cfgs = [cfg.codec.for_scheme(s) for s in cfg.schemes]

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda s: _eval_one(s, codec_cfgs), samples))
    else:
        results = [_eval_one(s, codec_cfgs) for s in samples]

    rows = []
    threshold = cfg.metrics.threshold
    for k, scheme in enumerate(cfg.schemes):
        per_image = [r[k][0] for r in results if r[k] is not None]
        clamped = sum(r[k][1] for r in results if r[k] is not None)
        conflicts = sum(r[k][2] for r in results if r[k] is not None)
        if not per_image:
            raise ConfigError(f"scheme '{scheme.value}' produced no scorable images")
        # canonical sample order: record order must not affect any aggregate,
        # including the last ulp of the mean
        per_image.sort(key=lambda p: p.id)
        nmes = [p.nme for p in per_image]
        rows.append(SchemeStats(
            scheme=scheme,
            n_images=len(per_image),
            nme=float(np.mean(nmes)),
            auc=ced_auc(nmes, threshold),
            fr=failure_rate(nmes, threshold),
            conflicts=int(conflicts),
            clamped_points=int(clamped),
            ced=ced_points(nmes, threshold),
            per_image=per_image,
        ))
    rows.sort(key=lambda r: SCHEME_ORDER.index(r.scheme))
    return BenchReport(mode="ideal", dataset=dataset_name, n_images=len(samples),
                       skipped=skipped, threshold=threshold,
                       config=_config_echo(cfg), rows=rows)


def run_montecarlo(cfg: BenchConfig) -> BenchReport:
    """Uniform-fraction draws through the quantization arithmetic.

    Positions are drawn as ``interior cell + uniform fraction`` so border
    clamping cannot bias the statistics being compared against the
    analytic expectation. Pixel errors are heatmap-space distances scaled
    by ``cfg.mc_n``.
    """
    w, h = cfg.codec.heatmap_shape
    total = cfg.mc_samples * cfg.mc_landmarks
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    # cells up to w-2 keep nearest-cell rounding of any fraction in-grid
    cells = np.stack([rng.integers(0, w - 1, size=total),
                      rng.integers(0, h - 1, size=total)], axis=1).astype(np.float64)
    fracs = rng.random((total, 2))
    points = cells + fracs
    groups = np.repeat(np.arange(cfg.mc_samples), cfg.mc_landmarks)

    rows = []
    for scheme in cfg.schemes:
        ccfg = cfg.codec.for_scheme(scheme)
        coords, _clamped, conflicts = ideal_roundtrip(points, ccfg, groups=groups)
        err = cfg.mc_n * np.linalg.norm(coords - points, axis=1)
        mean = float(np.mean(err))
        se = float(np.std(err, ddof=1) / math.sqrt(err.size)) if err.size > 1 else 0.0
        analytic = (analytic_direct_error(cfg.mc_n)
                    if scheme in (Scheme.DIRECT, Scheme.WSM) else None)
        rows.append(SchemeStats(
            scheme=scheme, n_images=cfg.mc_samples, nme=float("nan"), auc=float("nan"),
            fr=float("nan"), conflicts=int(conflicts), clamped_points=0, ced=[],
            per_image=[], mean_px_error=mean, px_error_se=se,
            analytic_px_error=analytic,
        ))
    rows.sort(key=lambda r: SCHEME_ORDER.index(r.scheme))
    return BenchReport(mode="montecarlo", dataset="synthetic-uniform",
                       n_images=cfg.mc_samples, skipped=0,
                       threshold=cfg.metrics.threshold,
                       config=_config_echo(cfg), rows=rows)


def _config_echo(cfg: BenchConfig) -> dict:
    c = cfg.codec
    return {
        "schemes": [s.value for s in cfg.schemes],
        "heatmap_shape": list(c.heatmap_shape),
        "decimal_shape": list(c.decimal_shape),
        "sigma_integer": c.sigma_integer,
        "sigma_decimal": c.sigma_decimal,
        "oob_policy": c.oob_policy.value,
        "decimal_overflow": c.decimal_overflow.value,
        "crop_margin": cfg.crop_margin,
        "crop_source": cfg.crop_source,
        "bbox_inclusive": cfg.bbox_inclusive,
        "input_size": list(cfg.input_size),
        "threshold": cfg.metrics.threshold,
        "seed": cfg.seed,
        "mc_samples": cfg.mc_samples,
        "mc_landmarks": cfg.mc_landmarks,
        "mc_n": cfg.mc_n,
    }


# -- report formatting ----------------------------------------------------------


def _threshold_tag(threshold: float) -> str:
    return f"{round(threshold * 100):d}"


def emit_report(report: BenchReport, fmt: str = "table") -> str:
    """Render a report as an aligned table, CSV, or JSON; all deterministic."""
    if fmt == "table":
        return _emit_table(report)
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "json":
        return _emit_json(report)
    raise ConfigError(f"unknown report format {fmt!r} (expected table, csv, or json)")


def _emit_table(report: BenchReport) -> str:
    tag = _threshold_tag(report.threshold)
    lines = [
        f"mode={report.mode} dataset={report.dataset} "
        f"images={report.n_images} skipped={report.skipped}"
    ]
    if report.mode == "ideal":
        lines.append(f"{'scheme':<8}{'nme%':>10}{'auc' + tag:>10}"
                     f"{'fr%@' + tag:>10}{'conflicts':>11}{'clamped':>9}{'images':>8}")
        for r in report.rows:
            lines.append(f"{r.scheme.value:<8}{100 * r.nme:>10.3f}{r.auc:>10.3f}"
                         f"{100 * r.fr:>10.3f}{r.conflicts:>11d}"
                         f"{r.clamped_points:>9d}{r.n_images:>8d}")
    else:
        lines.append(f"{'scheme':<8}{'mean_px_err':>13}{'std_err':>11}"
                     f"{'analytic':>11}{'conflicts':>11}{'samples':>10}")
        for r in report.rows:
            analytic = f"{r.analytic_px_error:>11.6f}" if r.analytic_px_error is not None \
                else f"{'-':>11}"
            lines.append(f"{r.scheme.value:<8}{r.mean_px_error:>13.6f}"
                         f"{r.px_error_se:>11.6f}{analytic}"
                         f"{r.conflicts:>11d}{r.n_images:>10d}")
    return "\n".join(lines) + "\n"


def _emit_csv(report: BenchReport) -> str:
    tag = _threshold_tag(report.threshold)
    if report.mode == "ideal":
        lines = [f"scheme,nme_percent,auc{tag},fr{tag}_percent,conflicts,"
                 f"clamped_points,n_images"]
        for r in report.rows:
            lines.append(f"{r.scheme.value},{100 * r.nme:.3f},{r.auc:.3f},"
                         f"{100 * r.fr:.3f},{r.conflicts},{r.clamped_points},{r.n_images}")
    else:
        lines = ["scheme,mean_px_error,px_error_se,analytic_px_error,conflicts,n_samples"]
        for r in report.rows:
            analytic = f"{r.analytic_px_error:.6f}" if r.analytic_px_error is not None else ""
            lines.append(f"{r.scheme.value},{r.mean_px_error:.6f},{r.px_error_se:.6f},"
                         f"{analytic},{r.conflicts},{r.n_images}")
    return "\n".join(lines) + "\n"


def _emit_json(report: BenchReport) -> str:
    import json

    doc = {
        "mode": report.mode,
        "dataset": report.dataset,
        "n_images": report.n_images,
        "skipped": report.skipped,
        "threshold": report.threshold,
        "config": report.config,
        "rows": [],
    }
    for r in report.rows:
        row = {
            "scheme": r.scheme.value,
            "n_images": r.n_images,
            "conflicts": r.conflicts,
            "clamped_points": r.clamped_points,
        }
        if report.mode == "ideal":
            row.update({
                "nme_percent": 100 * r.nme,
                "auc": r.auc,
                "failure_rate_percent": 100 * r.fr,
                "ced": [[x, f] for x, f in r.ced],
            })
        else:
            row.update({
                "mean_px_error": r.mean_px_error,
                "px_error_se": r.px_error_se,
                "analytic_px_error": r.analytic_px_error,
            })
        doc["rows"].append(row)
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
