"""Coordinate spaces, landmark containers, and the crop transform chain.

Landmark pipelines juggle three pixel coordinate spaces: the raw space of
the annotated source image, the fixed-resolution input crop, and the
downsampled heatmap grid. This module provides the value types that pin a
set of points to one of those spaces and the similarity transforms that
move between them.

Convention used everywhere: pixel centers sit on integer coordinates with
(0, 0) at the top-left pixel center, and grid cell (i, j) covers the
half-open square [i - 0.5, i + 0.5) x [j - 0.5, j + 0.5). Points are
(x, y) pairs; arrays of points have shape (N, 2) with x in column 0.

Instances are treated as immutable after construction and are safe to
share across threads; all operations here are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError

__all__ = [
    "Space",
    "LandmarkSet",
    "AffineTransform",
    "FaceSample",
    "apply_transform",
    "compose",
    "downsample_factor",
    "crop_from_landmarks",
    "crop_from_bbox",
    "heatmap_transform",
]

# Tolerances for transform validation, in units of the matrix entries.
_DET_EPS = 1e-12
_ORTHO_EPS = 1e-9


class Space(str, Enum):
    """Which pixel coordinate frame a point set lives in."""

    RAW = "raw"              # source-image pixels as annotated
    INPUT = "input"          # fixed-size crop pixels (e.g. 256 x 256)
    HEATMAP = "heatmap"      # low-resolution grid cells (e.g. 64 x 64)
    NORMALIZED = "normalized"  # heatmap coordinates divided by grid size


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """An ordered set of 2-D points tagged with their coordinate space.

    Attributes:
        points: (N, 2) float64 array of (x, y) coordinates.
        space: coordinate frame the points are expressed in.
        valid: (N,) boolean mask; invalid points are carried along but
            excluded from encoding and error statistics. Coordinates of
            invalid points may be NaN; valid points must be finite.
    """

    points: np.ndarray
    space: Space = Space.RAW
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise ConfigError(f"landmark array must have shape (N, 2), got {pts.shape}")
        object.__setattr__(self, "points", pts)
        if self.valid is None:
            mask = np.ones(len(pts), dtype=bool)
        else:
            mask = np.asarray(self.valid, dtype=bool)
            if mask.shape != (len(pts),):
                raise ConfigError(
                    f"valid mask shape {mask.shape} does not match {len(pts)} points"
                )
        object.__setattr__(self, "valid", mask)
        object.__setattr__(self, "space", Space(self.space))
        if not np.all(np.isfinite(pts[mask])):
            raise ConfigError("valid landmarks must have finite coordinates")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """An invertible 2-D affine map ``p -> linear @ p + offset``.

    ``similarity`` asserts that ``linear`` is a positive scalar times an
    orthonormal matrix, which is what the crop pipeline produces and what
    :func:`downsample_factor` requires. The optional ``src``/``dst`` tags
    let :func:`apply_transform` update the space of a landmark set and
    catch accidental misuse.
    """

    linear: np.ndarray
    offset: np.ndarray
    similarity: bool = False
    src: Space | None = None
    dst: Space | None = None

    def __post_init__(self) -> None:
        lin = np.asarray(self.linear, dtype=np.float64).reshape(2, 2)
        off = np.asarray(self.offset, dtype=np.float64).reshape(2)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(off))):
            raise ConfigError("transform entries must be finite")
        det = float(np.linalg.det(lin))
        if abs(det) <= _DET_EPS:
            raise ConfigError(f"transform is not invertible (det={det:.3e})")
        if self.similarity:
            s = float(np.sqrt(abs(det)))
            rot = lin / s
            if not np.allclose(rot.T @ rot, np.eye(2), atol=_ORTHO_EPS):
                raise ConfigError("similarity transform must be scale times rotation")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "offset", off)

    @classmethod
    def identity(cls, *, src: Space | None = None, dst: Space | None = None) -> AffineTransform:
        return cls(np.eye(2), np.zeros(2), similarity=True, src=src, dst=dst)

    @classmethod
    def scale_offset(cls, scale: float, offset: tuple[float, float] = (0.0, 0.0), *,
                     src: Space | None = None, dst: Space | None = None) -> AffineTransform:
        """Axis-aligned similarity: ``p -> scale * p + offset``."""
        return cls(np.eye(2) * float(scale), np.asarray(offset, dtype=np.float64),
                   similarity=True, src=src, dst=dst)

    @property
    def scale(self) -> float:
        """Isotropic scale factor; only meaningful for similarity transforms."""
        if not self.similarity:
            raise ConfigError("scale is only defined for similarity transforms")
        return float(np.sqrt(abs(np.linalg.det(self.linear))))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        squeeze = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = pts @ self.linear.T + self.offset
        return out[0] if squeeze else out

    def inverse(self) -> AffineTransform:
        inv = np.linalg.inv(self.linear)
        return AffineTransform(inv, -inv @ self.offset, similarity=self.similarity,
                               src=self.dst, dst=self.src)


def compose(outer: AffineTransform, inner: AffineTransform) -> AffineTransform:
    """The transform equivalent to applying ``inner`` first, then ``outer``."""
    return AffineTransform(
        outer.linear @ inner.linear,
        outer.linear @ inner.offset + outer.offset,
        similarity=outer.similarity and inner.similarity,
        src=inner.src,
        dst=outer.dst,
    )


def apply_transform(t: AffineTransform, landmarks: LandmarkSet) -> LandmarkSet:
    """Map a landmark set through ``t``, updating its space tag.

    Raises ConfigError if both the transform and the landmarks declare a
    source space and they disagree.
    """
    if t.src is not None and landmarks.space != t.src:
        raise ConfigError(
            f"transform expects points in '{t.src.value}' space, got '{landmarks.space.value}'"
        )
    pts = t.apply(landmarks.points)
    return LandmarkSet(pts, space=t.dst or landmarks.space, valid=landmarks.valid.copy())


def downsample_factor(t_preproc: AffineTransform, model_factor: float = 4.0) -> float:
    """Raw-to-heatmap scale denominator for a preprocessing transform.

    A raw-space coordinate divided by the returned value lands in heatmap
    space (up to the transform's translation). ``model_factor`` is the
    input-to-heatmap downsampling of the model itself, e.g. 4 for a
    256 -> 64 head.
    """
    if model_factor <= 0:
        raise ConfigError(f"model_factor must be positive, got {model_factor}")
    if not t_preproc.similarity:
        raise ConfigError("downsample factor requires a similarity preprocessing transform")
    return model_factor / t_preproc.scale


def _square_crop(center: np.ndarray, side: float,
                 target: tuple[int, int]) -> AffineTransform:
    tw, th = int(target[0]), int(target[1])
    if tw != th or tw <= 0:
        raise ConfigError(f"crop target must be square and positive, got {target}")
    if not (np.isfinite(side) and side > 0):
        raise ConfigError("degenerate crop: box has no extent")
    scale = tw / side
    offset = -scale * (np.asarray(center, dtype=np.float64) - side / 2.0)
    return AffineTransform(np.eye(2) * scale, offset, similarity=True,
                           src=Space.RAW, dst=Space.INPUT)


def crop_from_landmarks(landmarks: LandmarkSet, margin: float = 0.25,
                        target: tuple[int, int] = (256, 256)) -> AffineTransform:
    """Build the raw -> input similarity for a square landmark-driven crop.

    The crop box is the tight bounding box of the valid landmarks, grown to
    a square of side ``max(width, height) * (1 + margin)`` about the box
    center, then mapped to the target resolution. Deterministic: the same
    landmarks always produce the same transform.
    """
    if margin < 0:
        raise ConfigError(f"crop margin must be non-negative, got {margin}")
    pts = landmarks.points[landmarks.valid]
    if len(pts) < 2:
        raise ConfigError("crop needs at least two valid landmarks")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    side = float(max(hi[0] - lo[0], hi[1] - lo[1])) * (1.0 + margin)
    return _square_crop((lo + hi) / 2.0, side, target)


def crop_from_bbox(bbox, margin: float = 0.25,
                   target: tuple[int, int] = (256, 256), *,
                   inclusive: bool = True) -> AffineTransform:
    """Square crop from an annotation box instead of the landmarks.

    ``inclusive`` treats the box max edge as the last covered pixel, adding
    one pixel to each span; exclusive uses the raw coordinate span.
    """
    if margin < 0:
        raise ConfigError(f"crop margin must be non-negative, got {margin}")
    x0, y0, x1, y1 = (float(v) for v in bbox)
    if not all(np.isfinite(v) for v in (x0, y0, x1, y1)) or x0 >= x1 or y0 >= y1:
        raise ConfigError(f"crop box must be finite and well-ordered, got {bbox}")
    extra = 1.0 if inclusive else 0.0
    side = max(x1 - x0 + extra, y1 - y0 + extra) * (1.0 + margin)
    center = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
    return _square_crop(center, side, target)


@dataclass(frozen=True, eq=False)
class FaceSample:
    """One annotated image prepared for encoding.

    Attributes:
        id: stable identifier, unique within a dataset run.
        landmarks_raw: ground-truth points in raw space.
        crop: raw -> input similarity transform.
        norm_distance_raw: normalization distance in raw pixels (commonly
            the outer-eye-corner distance); must be positive.
        image_size_input: crop resolution in pixels, (width, height).
    """

    id: str
    landmarks_raw: LandmarkSet
    crop: AffineTransform
    norm_distance_raw: float
    image_size_input: tuple[int, int] = (256, 256)

    def __post_init__(self) -> None:
        if self.landmarks_raw.space != Space.RAW:
            raise ConfigError("FaceSample landmarks must be in raw space")
        if not (np.isfinite(self.norm_distance_raw) and self.norm_distance_raw > 0):
            raise ConfigError(
                f"normalization distance must be positive, got {self.norm_distance_raw}"
            )


def heatmap_transform(sample: FaceSample, heatmap_shape: tuple[int, int]) -> AffineTransform:
    """Compose the full raw -> heatmap transform for a sample.

    The input-to-heatmap step is a pure isotropic rescale, so the crop
    resolution must be the same multiple of the heatmap grid on both axes.
    """
    w, h = int(heatmap_shape[0]), int(heatmap_shape[1])
    wi, hi = sample.image_size_input
    if w <= 0 or h <= 0:
        raise ConfigError(f"heatmap shape must be positive, got {heatmap_shape}")
    if wi * h != hi * w:
        raise ConfigError(
            f"input size {sample.image_size_input} is not an isotropic multiple "
            f"of heatmap shape {heatmap_shape}"
        )
    model_factor = wi / w
    down = AffineTransform.scale_offset(1.0 / model_factor, src=Space.INPUT, dst=Space.HEATMAP)
    return compose(down, sample.crop)
