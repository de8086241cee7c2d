"""Normalized mean error, cumulative error curves, and derived statistics.

The per-image error is the mean euclidean landmark error divided by a
per-image normalization distance (commonly the outer-eye-corner
distance), kept as a plain fraction internally. Multiplying by 100 is a
presentation concern and happens only at the reporting boundary.

The cumulative error distribution (CED) over a set of images is an exact
right-continuous step function of the per-image errors, and its area
under the curve is integrated exactly from the step representation; no
plotting-grid approximation is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import LandmarkSet

__all__ = [
    "MetricsConfig",
    "PerImageError",
    "point_errors",
    "nme",
    "ced_auc",
    "failure_rate",
    "ced_points",
    "ced_csv",
]

DEFAULT_THRESHOLD = 0.10

#: Outer-eye-corner index pairs by landmark count for the common face layouts.
DEFAULT_NORM_INDICES: dict[int, tuple[int, int]] = {
    98: (60, 72),
    68: (36, 45),
}


@dataclass(frozen=True)
class MetricsConfig:
    """How to normalize and threshold errors.

    ``norm_indices`` picks the two landmarks whose distance normalizes the
    per-image error; when None, the defaults for 98- and 68-point layouts
    apply and any other layout must specify the pair explicitly.
    ``include_invalid`` forces invalid points into the per-image mean
    instead of reducing the point count (only meaningful when predictions
    exist for those points).
    """

    norm_indices: tuple[int, int] | None = None
    threshold: float = DEFAULT_THRESHOLD
    include_invalid: bool = False

    def __post_init__(self) -> None:
        if not (np.isfinite(self.threshold) and self.threshold > 0):
            raise ConfigError(f"threshold must be positive, got {self.threshold}")
        if self.norm_indices is not None:
            i, j = (int(v) for v in self.norm_indices)
            if i == j or i < 0 or j < 0:
                raise ConfigError(f"norm indices must be two distinct non-negative "
                                  f"indices, got {self.norm_indices}")
            object.__setattr__(self, "norm_indices", (i, j))


def resolve_norm_indices(n_landmarks: int, cfg: MetricsConfig) -> tuple[int, int]:
    """The normalization pair for a layout, from config or built-in defaults."""
    pair = cfg.norm_indices or DEFAULT_NORM_INDICES.get(n_landmarks)
    if pair is None:
        raise ConfigError(
            f"no default normalization indices for {n_landmarks}-point layouts; "
            f"set norm_indices explicitly")
    if max(pair) >= n_landmarks:
        raise ConfigError(f"norm indices {pair} out of range for {n_landmarks} landmarks")
    return pair


@dataclass(frozen=True, eq=False)
class PerImageError:
    """One image's normalized error and its per-point breakdown."""

    id: str
    nme: float
    per_point: np.ndarray  # (N,) normalized per-point errors, NaN where invalid


def point_errors(gt: LandmarkSet, pred: LandmarkSet) -> np.ndarray:
    """Euclidean per-point distances; NaN where either side is invalid."""
    if len(gt) != len(pred):
        raise ConfigError(f"landmark counts differ: {len(gt)} vs {len(pred)}")
    if gt.space != pred.space:
        raise ConfigError(
            f"landmark spaces differ: '{gt.space.value}' vs '{pred.space.value}'")
    both = gt.valid & pred.valid
    err = np.linalg.norm(gt.points - pred.points, axis=1)
    return np.where(both, err, np.nan)


def nme(gt: LandmarkSet, pred: LandmarkSet, norm_distance: float,
        include_invalid: bool = False) -> float:
    """Mean per-point error divided by the normalization distance.

    Returned as a fraction. Invalid points reduce the point count unless
    ``include_invalid`` is set, in which case they must carry finite
    predictions.
    """
    if not (np.isfinite(norm_distance) and norm_distance > 0):
        raise ConfigError(f"normalization distance must be positive, got {norm_distance}")
    err = point_errors(gt, pred)
    if include_invalid:
        err = np.linalg.norm(gt.points - pred.points, axis=1)
    keep = np.isfinite(err)
    if not np.any(keep):
        raise ConfigError("no valid points to average")
    if include_invalid and not np.all(keep):
        raise ConfigError("include_invalid requires finite coordinates everywhere")
    return float(np.mean(err[keep]) / norm_distance)


def _check_errors(errors) -> np.ndarray:
    arr = np.asarray([e.nme if isinstance(e, PerImageError) else e for e in errors],
                     dtype=np.float64)
    if arr.size == 0:
        raise ConfigError("need at least one per-image error")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ConfigError("per-image errors must be finite and non-negative")
    return arr


def ced_auc(errors, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Area under the cumulative error curve on [0, threshold], over threshold.

    The curve is the exact step function ``F(e) = fraction(error <= e)``;
    the integral walks its breakpoints, so the result is exact up to
    floating point.
    """
    if threshold <= 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    vals = np.sort(_check_errors(errors))
    m = vals.size
    bps = np.unique(vals[vals <= threshold])
    fracs = np.searchsorted(vals, bps, side="right") / m
    integral = 0.0
    prev = 0.0
    frac = 0.0
    for b, f in zip(bps, fracs):
        integral += frac * (b - prev)
        prev, frac = b, f
    integral += frac * (threshold - prev)
    return float(integral / threshold)


def failure_rate(errors, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Fraction of images with error strictly above the threshold."""
    if threshold <= 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    vals = _check_errors(errors)
    return float(np.count_nonzero(vals > threshold) / vals.size)


def ced_points(errors, threshold: float = DEFAULT_THRESHOLD) -> list[tuple[float, float]]:
    """The step curve as (threshold, cumulative fraction) pairs.

    One row per distinct error value within the range, plus rows at 0 and
    at the threshold so the curve is plottable without extrapolation.
    """
    if threshold <= 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    vals = np.sort(_check_errors(errors))
    m = vals.size
    xs = np.unique(np.concatenate([[0.0, threshold], vals[vals <= threshold]]))
    xs = xs[xs <= threshold]
    fracs = np.searchsorted(vals, xs, side="right") / m
    return [(float(x), float(f)) for x, f in zip(xs, fracs)]


def format_ced_csv(points: list[tuple[float, float]]) -> str:
    """Format (threshold, fraction) pairs as CSV with full-precision values."""
    lines = ["nme_threshold,fraction"]
    lines += [f"{x!r},{f!r}" for x, f in points]
    return "\n".join(lines) + "\n"


def ced_csv(errors, threshold: float = DEFAULT_THRESHOLD) -> str:
    """CED curve as CSV with full-precision values."""
    return format_ced_csv(ced_points(errors, threshold))
