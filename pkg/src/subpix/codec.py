"""Sub-pixel coordinate codecs over low-resolution heatmap grids.

Quantizing a continuous landmark onto a coarse grid loses the fractional
part of its position; the five schemes here differ only in how much of
that fraction they keep and where they stash it:

* ``direct``: the landmark is represented by its nearest grid cell and the
  fraction is discarded entirely. This is the quantization-error floor.
* ``wsm`` (weighted shift toward the second maximum): decoding starts from
  the peak cell and moves a quarter cell toward the unique second-largest
  response. Self-encoded maps are symmetric around the peak, so the
  second place is tied and the shift is suppressed; the scheme then
  degenerates to ``direct`` by construction.
* ``wov`` (offset as value): the exact fractional offset is stored as a
  float alongside each landmark's cell map, so decoding is lossless.
* ``wom`` (offset maps): fractional offsets are written into two shared
  x/y grids at each landmark's cell. Two landmarks that land on the same
  cell collide; the last writer wins and the collision is counted.
* ``hih`` (integer cell map plus a small fractional map): the fraction is
  itself quantized onto a second, tiny grid, cutting the error roughly by
  that grid's resolution.

Cell conventions follow from what each decoder can recover. ``direct``
and ``wsm`` decode nothing but a cell, so they encode at the nearest cell
(round half up). The offset-bearing schemes must reconstruct ``cell +
fraction``, so they encode at ``floor`` with the fraction in [0, 1).

For ``hih`` the fraction quantizer rounds to the nearest step of the
fractional grid. A fraction close to 1 rounds past the last step; by
default that rounding carries into the next integer cell (exact nearest-
step behavior, ``DecimalOverflow.CARRY``). The alternative
``DecimalOverflow.CLAMP`` pins the step index to the grid instead, which
inflates the error of near-1 fractions and reproduces the slightly
pessimistic fractional-map statistics seen in typical published runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, SchemaError
from .geometry import FaceSample, LandmarkSet, Space, apply_transform, heatmap_transform
from .heatmap import DEFAULT_TIE_EPS, GaussianSpec, Heatmap

__all__ = [
    "Scheme",
    "SCHEME_ORDER",
    "OobPolicy",
    "DecimalOverflow",
    "CodecConfig",
    "EncodedSample",
    "DecodeResult",
    "SampleEval",
    "relative_offset",
    "decimal_center",
    "encode_points",
    "encode",
    "decode",
    "ideal_roundtrip",
    "roundtrip_error",
    "evaluate_sample",
]

# largest double strictly below 1.0; keeps clamped offsets inside [0, 1)
_ONE_BELOW = float(np.nextafter(1.0, 0.0))


class Scheme(str, Enum):
    DIRECT = "direct"
    WSM = "wsm"
    WOV = "wov"
    WOM = "wom"
    HIH = "hih"


#: Canonical presentation order for reports.
SCHEME_ORDER: tuple[Scheme, ...] = (
    Scheme.DIRECT, Scheme.WSM, Scheme.WOV, Scheme.WOM, Scheme.HIH,
)


class OobPolicy(str, Enum):
    """What to do with landmarks outside the heatmap domain."""

    CLAMP = "clamp"  # pull onto the nearest representable position, flag it
    DROP = "drop"    # mark invalid; excluded from encoding and metrics


class DecimalOverflow(str, Enum):
    """How the fractional quantizer treats fractions that round to 1."""

    CARRY = "carry"  # carry into the next integer cell (exact rounding)
    CLAMP = "clamp"  # pin to the last fractional step


@dataclass(frozen=True)
class CodecConfig:
    scheme: Scheme
    heatmap_shape: tuple[int, int] = (64, 64)
    decimal_shape: tuple[int, int] = (8, 8)
    sigma_integer: float = 1.5
    sigma_decimal: float = 1.0
    oob_policy: OobPolicy = OobPolicy.CLAMP
    decimal_overflow: DecimalOverflow = DecimalOverflow.CARRY

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "oob_policy", OobPolicy(self.oob_policy))
        object.__setattr__(self, "decimal_overflow", DecimalOverflow(self.decimal_overflow))
        hm = (int(self.heatmap_shape[0]), int(self.heatmap_shape[1]))
        dm = (int(self.decimal_shape[0]), int(self.decimal_shape[1]))
        if hm[0] < 2 or hm[1] < 2:
            raise ConfigError(f"heatmap shape must be at least 2x2, got {self.heatmap_shape}")
        if dm[0] < 1 or dm[1] < 1:
            raise ConfigError(f"decimal shape must be at least 1x1, got {self.decimal_shape}")
        object.__setattr__(self, "heatmap_shape", hm)
        object.__setattr__(self, "decimal_shape", dm)
        if not (np.isfinite(self.sigma_integer) and self.sigma_integer > 0):
            raise ConfigError(f"sigma_integer must be positive, got {self.sigma_integer}")
        if not (np.isfinite(self.sigma_decimal) and self.sigma_decimal > 0):
            raise ConfigError(f"sigma_decimal must be positive, got {self.sigma_decimal}")

    def for_scheme(self, scheme: Scheme) -> CodecConfig:
        return replace(self, scheme=Scheme(scheme))


@dataclass(eq=False)
class EncodedSample:
    """The grids and side payloads one scheme produces for one sample.

    ``integer_maps`` has shape (N, height, width): one cell-level response
    grid per landmark. The remaining payloads depend on the scheme and are
    validated against it. ``valid``/``clamped`` are per-landmark flags from
    the encoding step.
    """

    scheme: Scheme
    heatmap_shape: tuple[int, int]
    integer_maps: np.ndarray
    valid: np.ndarray
    clamped: np.ndarray
    offsets: np.ndarray | None = None            # wov: (N, 2) exact fractions
    offset_map_x: np.ndarray | None = None       # wom: (h, w) shared grid
    offset_map_y: np.ndarray | None = None
    conflict_count: int = 0                      # wom: overwritten landmarks
    decimal_shape: tuple[int, int] | None = None  # hih
    decimal_maps: np.ndarray | None = None       # hih: (N, h_o, w_o)

    def __post_init__(self) -> None:
        self.scheme = Scheme(self.scheme)
        w, h = self.heatmap_shape
        self.heatmap_shape = (int(w), int(h))
        maps = np.asarray(self.integer_maps, dtype=np.float64)
        if maps.ndim != 3 or maps.shape[1:] != (self.heatmap_shape[1], self.heatmap_shape[0]):
            raise ConfigError(
                f"integer maps shape {maps.shape} does not match grid {self.heatmap_shape}"
            )
        self.integer_maps = maps
        n = maps.shape[0]
        self.valid = np.asarray(self.valid, dtype=bool).reshape(n)
        self.clamped = np.asarray(self.clamped, dtype=bool).reshape(n)
        if self.scheme is Scheme.WOV:
            if self.offsets is None:
                raise ConfigError("wov payload requires per-landmark offsets")
            self.offsets = np.asarray(self.offsets, dtype=np.float64).reshape(n, 2)
        elif self.offsets is not None:
            raise ConfigError(f"offsets payload is not valid for scheme '{self.scheme.value}'")
        if self.scheme is Scheme.WOM:
            if self.offset_map_x is None or self.offset_map_y is None:
                raise ConfigError("wom payload requires offset_map_x and offset_map_y")
            shape_yx = (self.heatmap_shape[1], self.heatmap_shape[0])
            self.offset_map_x = np.asarray(self.offset_map_x, dtype=np.float64).reshape(shape_yx)
            self.offset_map_y = np.asarray(self.offset_map_y, dtype=np.float64).reshape(shape_yx)
        elif self.offset_map_x is not None or self.offset_map_y is not None:
            raise ConfigError(f"offset maps are not valid for scheme '{self.scheme.value}'")
        if self.scheme is Scheme.HIH:
            if self.decimal_maps is None or self.decimal_shape is None:
                raise ConfigError("hih payload requires decimal maps and their shape")
            self.decimal_shape = (int(self.decimal_shape[0]), int(self.decimal_shape[1]))
            dm = np.asarray(self.decimal_maps, dtype=np.float64)
            want = (n, self.decimal_shape[1], self.decimal_shape[0])
            if dm.shape != want:
                raise ConfigError(f"decimal maps shape {dm.shape} does not match {want}")
            self.decimal_maps = dm
        elif self.decimal_maps is not None:
            raise ConfigError(f"decimal maps are not valid for scheme '{self.scheme.value}'")

    @property
    def n_landmarks(self) -> int:
        return self.integer_maps.shape[0]

    def integer_map(self, k: int) -> Heatmap:
        return Heatmap(self.integer_maps[k])

    def decimal_map(self, k: int) -> Heatmap:
        if self.decimal_maps is None:
            raise ConfigError(f"scheme '{self.scheme.value}' has no decimal maps")
        return Heatmap(self.decimal_maps[k])

    # -- JSON debug round-trip ------------------------------------------------

    def to_json_dict(self) -> dict:
        """Sparse, full-precision JSON form; see :meth:`from_json_dict`."""
        d: dict = {
            "scheme": self.scheme.value,
            "n_landmarks": self.n_landmarks,
            "heatmap_shape": list(self.heatmap_shape),
            "integer_cells": _sparse_stack(self.integer_maps),
            "valid": [bool(v) for v in self.valid],
            "clamped": [bool(c) for c in self.clamped],
        }
        if self.scheme is Scheme.WOV:
            d["offsets"] = [[float(x), float(y)] for x, y in self.offsets]
        if self.scheme is Scheme.WOM:
            d["offset_x_cells"] = _sparse_grid(self.offset_map_x)
            d["offset_y_cells"] = _sparse_grid(self.offset_map_y)
            d["conflict_count"] = int(self.conflict_count)
        if self.scheme is Scheme.HIH:
            d["decimal_shape"] = list(self.decimal_shape)
            d["decimal_cells"] = _sparse_stack(self.decimal_maps)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, d: dict) -> EncodedSample:
        try:
            scheme = Scheme(d["scheme"])
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"unknown or missing scheme: {exc}", field="scheme") from exc
        try:
            n = int(d["n_landmarks"])
            w, h = (int(v) for v in d["heatmap_shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(str(exc), field="heatmap_shape") from exc
        if n <= 0 or w <= 0 or h <= 0:
            raise SchemaError("dimensions must be positive", field="heatmap_shape")
        maps = _unsparse_stack(d.get("integer_cells"), n, (w, h), field="integer_cells")
        try:
            valid = [bool(v) for v in d["valid"]]
            clamped = [bool(v) for v in d["clamped"]]
        except (KeyError, TypeError) as exc:
            raise SchemaError(str(exc), field="valid") from exc
        if len(valid) != n or len(clamped) != n:
            raise SchemaError("flag arrays must have one entry per landmark", field="valid")
        kwargs: dict = {}
        if scheme is Scheme.WOV:
            offs = d.get("offsets")
            if not isinstance(offs, list) or len(offs) != n:
                raise SchemaError("wov requires one [x, y] offset per landmark", field="offsets")
            try:
                kwargs["offsets"] = np.array(offs, dtype=np.float64).reshape(n, 2)
            except (TypeError, ValueError) as exc:
                raise SchemaError(str(exc), field="offsets") from exc
        if scheme is Scheme.WOM:
            kwargs["offset_map_x"] = _unsparse_grid(d.get("offset_x_cells"), (w, h),
                                                    field="offset_x_cells")
            kwargs["offset_map_y"] = _unsparse_grid(d.get("offset_y_cells"), (w, h),
                                                    field="offset_y_cells")
            kwargs["conflict_count"] = int(d.get("conflict_count", 0))
        if scheme is Scheme.HIH:
            try:
                wo, ho = (int(v) for v in d["decimal_shape"])
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(str(exc), field="decimal_shape") from exc
            kwargs["decimal_shape"] = (wo, ho)
            kwargs["decimal_maps"] = _unsparse_stack(d.get("decimal_cells"), n, (wo, ho),
                                                     field="decimal_cells")
        try:
            return cls(scheme=scheme, heatmap_shape=(w, h), integer_maps=maps,
                       valid=valid, clamped=clamped, **kwargs)
        except ConfigError as exc:
            raise SchemaError(str(exc), field="scheme") from exc

    @classmethod
    def from_json(cls, text: str) -> EncodedSample:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", field=None) from exc
        if not isinstance(d, dict):
            raise SchemaError("top-level JSON value must be an object", field=None)
        return cls.from_json_dict(d)


def _sparse_stack(maps: np.ndarray) -> list[str]:
    k, rows, cols = np.nonzero(maps)
    return [f"{int(a)},{int(r)},{int(c)},{float(maps[a, r, c])!r}"
            for a, r, c in zip(k, rows, cols)]


def _sparse_grid(grid: np.ndarray) -> list[str]:
    rows, cols = np.nonzero(grid)
    return [f"{int(r)},{int(c)},{float(grid[r, c])!r}" for r, c in zip(rows, cols)]


def _unsparse_stack(entries, n: int, shape: tuple[int, int], *, field: str) -> np.ndarray:
    w, h = shape
    out = np.zeros((n, h, w), dtype=np.float64)
    if entries is None:
        raise SchemaError("missing sparse cell list", field=field)
    for i, entry in enumerate(entries):
        parts = str(entry).split(",")
        if len(parts) != 4:
            raise SchemaError(f"entry {i} must be 'k,row,col,value'", field=field)
        try:
            k, r, c = int(parts[0]), int(parts[1]), int(parts[2])
            v = float(parts[3])
        except ValueError as exc:
            raise SchemaError(f"entry {i}: {exc}", field=field) from exc
        if not (0 <= k < n and 0 <= r < h and 0 <= c < w):
            raise SchemaError(f"entry {i} indices out of range", field=field)
        out[k, r, c] = v
    return out


def _unsparse_grid(entries, shape: tuple[int, int], *, field: str) -> np.ndarray:
    w, h = shape
    out = np.zeros((h, w), dtype=np.float64)
    if entries is None:
        raise SchemaError("missing sparse cell list", field=field)
    for i, entry in enumerate(entries):
        parts = str(entry).split(",")
        if len(parts) != 3:
            raise SchemaError(f"entry {i} must be 'row,col,value'", field=field)
        try:
            r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise SchemaError(f"entry {i}: {exc}", field=field) from exc
        if not (0 <= r < h and 0 <= c < w):
            raise SchemaError(f"entry {i} indices out of range", field=field)
        out[r, c] = v
    return out


@dataclass(eq=False)
class DecodeResult:
    """Decoded landmarks in normalized space plus per-point flags.

    ``landmarks.points`` holds heatmap coordinates divided by the grid
    size, so every decodable coordinate lies in [0, 1]. ``tie_encountered``
    marks points whose peak lookup hit a tie (for ``wsm``: a tied second
    place, which suppresses the shift). ``clamped`` is propagated from the
    encoding step.
    """

    landmarks: LandmarkSet
    tie_encountered: np.ndarray
    clamped: np.ndarray


@dataclass(eq=False)
class SampleEval:
    """Round-trip outcome for one sample under one scheme."""

    errors_raw: np.ndarray   # (N,) raw-space pixel error, NaN where invalid
    valid: np.ndarray        # (N,)
    clamped_count: int
    conflict_count: int
    tie_count: int


# -- quantization kernels -----------------------------------------------------


def _check_points(points, valid) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise ConfigError(f"points must have shape (N, 2), got {pts.shape}")
    if valid is None:
        mask = np.ones(len(pts), dtype=bool)
    else:
        mask = np.asarray(valid, dtype=bool).reshape(len(pts))
    if not np.all(np.isfinite(pts[mask])):
        raise ConfigError("landmark coordinates must be finite")
    return pts, mask.copy()


def _domain_mask(pts: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    w, h = shape
    return ((pts[:, 0] >= 0) & (pts[:, 0] < w)
            & (pts[:, 1] >= 0) & (pts[:, 1] < h))


def _floor_cells(pts: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """floor/fraction decomposition with boundary clamping.

    Out-of-grid cells are pulled to the border and the fraction is clipped
    so that ``cell + fraction`` stays the nearest representable position;
    fractions always land in [0, 1).
    """
    dims = np.array(shape, dtype=np.float64)
    raw = np.floor(pts)
    cells = np.clip(raw, 0.0, dims - 1.0)
    clamped = np.any(raw != cells, axis=1)
    offsets = np.clip(pts - cells, 0.0, _ONE_BELOW)
    return cells.astype(np.int64), offsets, clamped


def _round_cells(pts: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-cell quantization (round half up) with boundary clamping."""
    dims = np.array(shape, dtype=np.float64)
    raw = np.floor(pts + 0.5)
    cells = np.clip(raw, 0.0, dims - 1.0)
    clamped = np.any(raw != cells, axis=1)
    return cells.astype(np.int64), clamped


def _decimal_quantize(cells: np.ndarray, offsets: np.ndarray, cfg: CodecConfig,
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quantize fractions onto the decimal grid, resolving overflow.

    Returns possibly cell-shifted integer cells, decimal indices, and a
    per-landmark flag for positions that had to be clamped after all.
    """
    dims = np.array(cfg.heatmap_shape, dtype=np.int64)
    dims_o = np.array(cfg.decimal_shape, dtype=np.int64)
    q = np.floor(offsets * dims_o + 0.5).astype(np.int64)
    if cfg.decimal_overflow is DecimalOverflow.CARRY:
        carry = q >= dims_o
        q = np.where(carry, 0, q)
        cells = cells + carry.astype(np.int64)
        over = cells >= dims
        cells = np.where(over, dims - 1, cells)
        q = np.where(over, dims_o - 1, q)
        flagged = np.any(over, axis=1)
    else:
        over = q >= dims_o
        q = np.where(over, dims_o - 1, q)
        cells = cells.copy()
        flagged = np.any(over, axis=1)
    return cells, q, flagged


def _last_writer_offsets(cells: np.ndarray, offsets: np.ndarray, valid: np.ndarray,
                         shape: tuple[int, int],
                         groups: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Resolve shared-map collisions: the highest landmark index wins a cell.

    Returns, for every valid landmark, the offset that a reader of its cell
    would observe, plus the number of overwritten landmarks. ``groups``
    partitions the landmarks into independent samples that do not share
    maps with each other.
    """
    w, h = shape
    decoded = offsets.copy()
    idx = np.nonzero(valid)[0]
    if len(idx) == 0:
        return decoded, 0
    keys = cells[idx, 1].astype(np.int64) * w + cells[idx, 0]
    if groups is not None:
        keys = keys + groups[idx].astype(np.int64) * (w * h)
    uniq, inverse = np.unique(keys, return_inverse=True)
    winner = np.full(len(uniq), -1, dtype=np.int64)
    np.maximum.at(winner, inverse, idx)
    decoded[idx] = offsets[winner[inverse]]
    conflicts = int(len(idx) - len(uniq))
    return decoded, conflicts


# -- public single-point helpers ----------------------------------------------


def relative_offset(point: tuple[float, float], grid_shape: tuple[int, int] | None = None,
                    oob_policy: OobPolicy = OobPolicy.CLAMP,
                    ) -> tuple[tuple[int, int], tuple[float, float], bool]:
    """Split a heatmap-space position into integer cell and fraction in [0, 1).

    With a ``grid_shape``, out-of-grid positions are handled per the
    policy: clamped onto the border cell (flag returned True) or rejected.
    Without a shape the pure floor/fraction decomposition is returned.
    """
    pts = np.asarray([point], dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise ConfigError(f"point must be finite, got {point}")
    if grid_shape is None:
        cell = np.floor(pts[0])
        off = pts[0] - cell
        return (int(cell[0]), int(cell[1])), (float(off[0]), float(off[1])), False
    if OobPolicy(oob_policy) is OobPolicy.DROP and not _domain_mask(pts, grid_shape)[0]:
        raise ConfigError(f"point {point} lies outside grid {grid_shape}")
    cells, offs, clamped = _floor_cells(pts, grid_shape)
    return ((int(cells[0, 0]), int(cells[0, 1])),
            (float(offs[0, 0]), float(offs[0, 1])),
            bool(clamped[0]))


def decimal_center(offset: tuple[float, float], decimal_shape: tuple[int, int],
                   ) -> tuple[tuple[int, int], bool]:
    """Nearest decimal-grid index for a fraction, pinned into the grid.

    Rounds half up; fractions close enough to 1 round one past the last
    index and are clamped back onto it, with the flag reporting that.
    """
    wo, ho = int(decimal_shape[0]), int(decimal_shape[1])
    if wo < 1 or ho < 1:
        raise ConfigError(f"decimal shape must be at least 1x1, got {decimal_shape}")
    off = np.asarray(offset, dtype=np.float64)
    if not np.all(np.isfinite(off)) or np.any(off < 0) or np.any(off >= 1):
        raise ConfigError(f"offset must lie in [0, 1) per axis, got {offset}")
    q = np.floor(off * np.array([wo, ho]) + 0.5).astype(np.int64)
    over = q >= np.array([wo, ho])
    q = np.where(over, np.array([wo, ho]) - 1, q)
    return (int(q[0]), int(q[1])), bool(np.any(over))


# -- encode / decode ----------------------------------------------------------


def _quantize(pts: np.ndarray, valid: np.ndarray, cfg: CodecConfig):
    """Shared quantization arithmetic for every scheme.

    Returns ``(cells, payload, clamped, valid)`` where payload is scheme
    specific: None (direct/wsm), fractions (wov/wom), or decimal indices
    (hih).
    """
    if cfg.oob_policy is OobPolicy.DROP:
        valid = valid & _domain_mask(
            np.where(valid[:, None], pts, 0.0), cfg.heatmap_shape)
    safe = np.where(valid[:, None], pts, 0.0)
    if cfg.scheme in (Scheme.DIRECT, Scheme.WSM):
        cells, clamped = _round_cells(safe, cfg.heatmap_shape)
        payload = None
    elif cfg.scheme in (Scheme.WOV, Scheme.WOM):
        cells, payload, clamped = _floor_cells(safe, cfg.heatmap_shape)
    elif cfg.scheme is Scheme.HIH:
        cells, offs, clamped = _floor_cells(safe, cfg.heatmap_shape)
        cells, payload, over = _decimal_quantize(cells, offs, cfg)
        clamped = clamped | over
    else:  # pragma: no cover - enum is closed
        raise ConfigError(f"unknown scheme {cfg.scheme!r}")
    clamped = clamped & valid
    return cells, payload, clamped, valid


def _render_batch(cells: np.ndarray, valid: np.ndarray, sigma: float,
                  shape: tuple[int, int]) -> np.ndarray:
    """One truncated-Gaussian grid per landmark, stacked (N, h, w).

    Matches :func:`subpix.heatmap.render_gaussian` cell for cell; the
    stencil is hoisted out of the loop because the exponential is the same
    for every landmark.
    """
    w, h = shape
    n = len(cells)
    out = np.zeros((n, h, w), dtype=np.float64)
    r = int(np.floor(3.0 * sigma))
    d = np.arange(-r, r + 1, dtype=np.float64)
    stencil = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2.0 * sigma ** 2))
    for k in np.nonzero(valid)[0]:
        cx, cy = int(cells[k, 0]), int(cells[k, 1])
        x0, x1 = max(cx - r, 0), min(cx + r, w - 1)
        y0, y1 = max(cy - r, 0), min(cy + r, h - 1)
        out[k, y0:y1 + 1, x0:x1 + 1] = stencil[y0 - cy + r:y1 - cy + r + 1,
                                               x0 - cx + r:x1 - cx + r + 1]
    return out


def encode_points(points: np.ndarray, cfg: CodecConfig,
                  valid: np.ndarray | None = None) -> EncodedSample:
    """Encode heatmap-space positions into one scheme's grid representation.

    ``points`` is (N, 2) in heatmap coordinates. Positions outside the
    grid are clamped or dropped per ``cfg.oob_policy``; dropped landmarks
    get all-zero grids and ``valid=False``.
    """
    pts, mask = _check_points(points, valid)
    cells, payload, clamped, mask = _quantize(pts, mask, cfg)
    integer_maps = _render_batch(cells, mask, cfg.sigma_integer, cfg.heatmap_shape)
    kwargs: dict = {}
    if cfg.scheme is Scheme.WOV:
        offs = np.where(mask[:, None], payload, 0.0)
        kwargs["offsets"] = offs
    elif cfg.scheme is Scheme.WOM:
        w, h = cfg.heatmap_shape
        map_x = np.zeros((h, w), dtype=np.float64)
        map_y = np.zeros((h, w), dtype=np.float64)
        conflicts = 0
        occupied = np.zeros((h, w), dtype=bool)
        for k in np.nonzero(mask)[0]:
            x, y = int(cells[k, 0]), int(cells[k, 1])
            if occupied[y, x]:
                conflicts += 1
            occupied[y, x] = True
            map_x[y, x] = payload[k, 0]
            map_y[y, x] = payload[k, 1]
        kwargs.update(offset_map_x=map_x, offset_map_y=map_y, conflict_count=conflicts)
    elif cfg.scheme is Scheme.HIH:
        kwargs["decimal_shape"] = cfg.decimal_shape
        kwargs["decimal_maps"] = _render_batch(payload, mask, cfg.sigma_decimal,
                                               cfg.decimal_shape)
    return EncodedSample(scheme=cfg.scheme, heatmap_shape=cfg.heatmap_shape,
                         integer_maps=integer_maps, valid=mask, clamped=clamped, **kwargs)


def encode(sample: FaceSample, cfg: CodecConfig) -> EncodedSample:
    """Encode a raw-space sample: crop, downscale, then :func:`encode_points`."""
    t = heatmap_transform(sample, cfg.heatmap_shape)
    hm = apply_transform(t, sample.landmarks_raw)
    return encode_points(hm.points, cfg, valid=hm.valid)


def _argmax_flat(maps: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = maps.shape[0]
    flat = maps.reshape(n, -1)
    best = flat.argmax(axis=1)
    maxval = flat[np.arange(n), best]
    return flat, best, maxval


def decode(enc: EncodedSample, cfg: CodecConfig,
           tie_eps: float = DEFAULT_TIE_EPS) -> DecodeResult:
    """Decode an encoded sample back to normalized coordinates.

    The scheme and grid shapes of ``enc`` and ``cfg`` must agree. Invalid
    (dropped) landmarks come back as NaN with ``valid=False``.
    """
    if Scheme(cfg.scheme) is not enc.scheme:
        raise ConfigError(
            f"config scheme '{cfg.scheme.value}' does not match payload '{enc.scheme.value}'")
    if tuple(cfg.heatmap_shape) != tuple(enc.heatmap_shape):
        raise ConfigError(
            f"config grid {cfg.heatmap_shape} does not match payload {enc.heatmap_shape}")
    if enc.scheme is Scheme.HIH and tuple(cfg.decimal_shape) != tuple(enc.decimal_shape):
        raise ConfigError(
            f"config decimal grid {cfg.decimal_shape} does not match payload {enc.decimal_shape}")
    w, h = enc.heatmap_shape
    n = enc.n_landmarks
    rows = np.arange(n)
    flat, best, maxval = _argmax_flat(enc.integer_maps)
    m = np.stack([best % w, best // w], axis=1).astype(np.float64)

    ties = np.zeros(n, dtype=bool)
    if enc.scheme is Scheme.WSM:
        flat2 = flat.copy()
        flat2[rows, best] = -np.inf
        second = flat2.max(axis=1)
        mask = np.abs(flat - second[:, None]) <= tie_eps
        mask[rows, best] = False
        counts = mask.sum(axis=1)
        ties = counts != 1
        coords = m.copy()
        unique = counts == 1
        if np.any(unique):
            sec_flat = mask[unique].argmax(axis=1)
            s = np.stack([sec_flat % w, sec_flat // w], axis=1).astype(np.float64)
            delta = s - m[unique]
            norm = np.linalg.norm(delta, axis=1, keepdims=True)
            coords[unique] = m[unique] + 0.25 * delta / norm
    else:
        # a duplicated maximum means the row-major tie break picked the cell
        ties = (flat == maxval[:, None]).sum(axis=1) > 1
        if enc.scheme is Scheme.DIRECT:
            coords = m
        elif enc.scheme is Scheme.WOV:
            coords = m + enc.offsets
        elif enc.scheme is Scheme.WOM:
            my = m[:, 1].astype(np.int64)
            mx = m[:, 0].astype(np.int64)
            coords = m + np.stack([enc.offset_map_x[my, mx],
                                   enc.offset_map_y[my, mx]], axis=1)
        else:  # hih
            wo, ho = enc.decimal_shape
            _, dbest, _ = _argmax_flat(enc.decimal_maps)
            q = np.stack([dbest % wo, dbest // wo], axis=1).astype(np.float64)
            coords = m + q / np.array([wo, ho], dtype=np.float64)

    normalized = coords / np.array([w, h], dtype=np.float64)
    normalized = np.where(enc.valid[:, None], normalized, np.nan)
    ties = ties & enc.valid
    lms = LandmarkSet(normalized, space=Space.NORMALIZED, valid=enc.valid.copy())
    return DecodeResult(landmarks=lms, tie_encountered=ties, clamped=enc.clamped.copy())


def ideal_roundtrip(points: np.ndarray, cfg: CodecConfig,
                    valid: np.ndarray | None = None,
                    groups: np.ndarray | None = None,
                    ) -> tuple[np.ndarray, np.ndarray, int]:
    """Grid-free equivalent of ``decode(encode_points(...))`` on ideal maps.

    Self-encoded grids peak exactly at the encoded cell and a tied second
    place suppresses the wsm shift, so the round trip reduces to the
    quantization arithmetic alone. Returns heatmap-space coordinates (NaN
    for dropped landmarks), the per-landmark clamp flags, and the wom
    conflict count. Bit-identical to the full grid path.

    ``groups`` optionally partitions the points into independent samples:
    wom collisions are then resolved within each group only, which is how
    the Monte-Carlo benchmark batches many samples into one call.
    """
    pts, mask = _check_points(points, valid)
    if groups is not None:
        groups = np.asarray(groups, dtype=np.int64).reshape(len(pts))
    cells, payload, clamped, mask = _quantize(pts, mask, cfg)
    fcells = cells.astype(np.float64)
    if cfg.scheme in (Scheme.DIRECT, Scheme.WSM):
        coords = fcells
        conflicts = 0
    elif cfg.scheme is Scheme.WOV:
        coords = fcells + payload
        conflicts = 0
    elif cfg.scheme is Scheme.WOM:
        decoded, conflicts = _last_writer_offsets(cells, payload, mask,
                                                  cfg.heatmap_shape, groups)
        coords = fcells + decoded
    else:  # hih
        wo, ho = cfg.decimal_shape
        coords = fcells + payload.astype(np.float64) / np.array([wo, ho], dtype=np.float64)
        conflicts = 0
    coords = np.where(mask[:, None], coords, np.nan)
    return coords, clamped, conflicts


def evaluate_sample(sample: FaceSample, cfg: CodecConfig) -> SampleEval:
    """Full round trip for one sample: encode, decode, map back, measure.

    Error is the euclidean distance in raw-space pixels between each
    ground-truth landmark and its decoded position.
    """
    t = heatmap_transform(sample, cfg.heatmap_shape)
    hm = apply_transform(t, sample.landmarks_raw)
    enc = encode_points(hm.points, cfg, valid=hm.valid)
    dec = decode(enc, cfg)
    dims = np.array(cfg.heatmap_shape, dtype=np.float64)
    back_raw = t.inverse().apply(dec.landmarks.points * dims)
    err = np.linalg.norm(back_raw - sample.landmarks_raw.points, axis=1)
    err = np.where(dec.landmarks.valid, err, np.nan)
    return SampleEval(
        errors_raw=err,
        valid=dec.landmarks.valid.copy(),
        clamped_count=int(np.count_nonzero(dec.clamped)),
        conflict_count=int(enc.conflict_count),
        tie_count=int(np.count_nonzero(dec.tie_encountered)),
    )


def roundtrip_error(sample: FaceSample, cfg: CodecConfig) -> np.ndarray:
    """Per-landmark raw-space pixel error of ``decode(encode(sample))``.

    Dropped landmarks yield NaN entries.
    """
    return evaluate_sample(sample, cfg).errors_raw
