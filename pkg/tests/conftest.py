"""Shared fixtures: synthetic annotation corpora with realistic geometry.

The synthetic faces are built from fixed landmark templates whose
normalization pair sits at a realistic fraction of the bounding-box side
(0.58 for the 98-point layout, 0.673 for the 68-point one), so ideal-
condition error levels land in the same range as real face datasets. A
few template points are placed close enough together that shared-offset-
map collisions occur on some images.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from subpix.datasets import ATTRIBUTE_NAMES, AnnotationRecord, Attributes
from subpix.geometry import LandmarkSet, Space

# Landmark indices whose distance normalizes the per-image error.
NORM_PAIR_98 = (60, 72)
NORM_PAIR_68 = (36, 45)

# Template points that form near-coincident pairs (sub-heatmap-cell apart).
TIGHT_PAIRS_98 = ((88, 89), (92, 93))
TIGHT_PAIRS_68 = ((61, 62),)


def _template(n_landmarks: int, norm_pair: tuple[int, int], norm_frac: float,
              tight_pairs, seed: int) -> np.ndarray:
    """Unit-square landmark layout with a pinned normalization distance."""
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = rng.uniform(0.04, 0.96, size=(n_landmarks, 2))
    # the first four points pin the tight bounding box to the unit square
    pts[0] = (0.0, 0.05)
    pts[1] = (1.0, 0.93)
    pts[2] = (0.06, 1.0)
    pts[3] = (0.95, 0.0)
    i, j = norm_pair
    pts[i] = (0.5 - norm_frac / 2.0, 0.40)
    pts[j] = (0.5 + norm_frac / 2.0, 0.40)
    for a, b in tight_pairs:
        base = rng.uniform(0.25, 0.75, size=2)
        pts[a] = base
        pts[b] = base + rng.uniform(0.001, 0.004, size=2)
    return pts


TEMPLATE_98 = _template(98, NORM_PAIR_98, 0.58, TIGHT_PAIRS_98, seed=2024)
TEMPLATE_68 = _template(68, NORM_PAIR_68, 0.673, TIGHT_PAIRS_68, seed=2025)


def make_records(n_images: int, n_landmarks: int = 98, seed: int = 11,
                 jitter: float = 0.004, with_attributes: bool | None = None,
                 ) -> list[AnnotationRecord]:
    """Synthetic annotation records in raw space.

    Each record is the layout template placed at a random scale and offset
    with small per-point jitter. Deterministic per seed.
    """
    if n_landmarks not in (98, 68):
        raise ValueError(f"no template for {n_landmarks} landmarks")
    template = TEMPLATE_98 if n_landmarks == 98 else TEMPLATE_68
    if with_attributes is None:
        with_attributes = n_landmarks == 98
    rng = np.random.Generator(np.random.PCG64(seed))
    records = []
    for k in range(n_images):
        side = rng.uniform(120.0, 420.0)
        origin = rng.uniform(20.0, 90.0, size=2)
        pts = origin + side * template + rng.normal(0.0, jitter * side,
                                                    size=template.shape)
        lms = LandmarkSet(points=pts, space=Space.RAW)
        lo = np.floor(pts.min(axis=0)) - 2
        hi = np.ceil(pts.max(axis=0)) + 2
        bbox = (int(lo[0]), int(lo[1]), int(hi[0]), int(hi[1]))
        attrs = None
        if with_attributes:
            flags = {name: bool(rng.integers(0, 2)) for name in ATTRIBUTE_NAMES}
            attrs = Attributes(**flags)
        records.append(AnnotationRecord(
            id=f"synth_{k:04d}", image_path=f"images/synth_{k:04d}.png",
            landmarks=lms, bbox=bbox, attributes=attrs))
    return records


def write_wflw_file(records: list[AnnotationRecord], path: Path) -> None:
    """Serialize records in the 207-token-per-line list format."""
    lines = []
    for rec in records:
        coords = [repr(float(v)) for v in rec.landmarks.points.reshape(-1)]
        bbox = [str(int(v)) for v in rec.bbox]
        attrs = rec.attributes or Attributes()
        flags = [str(int(getattr(attrs, name))) for name in ATTRIBUTE_NAMES]
        lines.append(" ".join(coords + bbox + flags + [rec.image_path]))
    path.write_text("\n".join(lines) + "\n")


def write_pts_file(points: np.ndarray, path: Path) -> None:
    """Serialize one point set in the brace-delimited pts format (1-based)."""
    lines = ["version: 1", f"n_points: {len(points)}", "{"]
    lines += [f"{float(x) + 1.0!r} {float(y) + 1.0!r}" for x, y in points]
    lines.append("}")
    path.write_text("\n".join(lines) + "\n")


def write_pts_tree(records: list[AnnotationRecord], root: Path) -> None:
    for rec in records:
        target = root / f"{rec.id}.pts"
        target.parent.mkdir(parents=True, exist_ok=True)
        write_pts_file(rec.landmarks.points, target)


@pytest.fixture(scope="session")
def corpus98() -> list[AnnotationRecord]:
    return make_records(24, n_landmarks=98, seed=11)


@pytest.fixture(scope="session")
def corpus68() -> list[AnnotationRecord]:
    return make_records(20, n_landmarks=68, seed=12)


# -- malformed-input corpora, shared with the acceptance suite -------------------

MALFORMED_PTS: list[tuple[str, str]] = [
    ("empty", ""),
    ("missing_version", "n_points: 1\n{\n1.0 2.0\n}\n"),
    ("wrong_version", "version: 2\nn_points: 1\n{\n1.0 2.0\n}\n"),
    ("bad_n_points", "version: 1\nn_points: three\n{\n1.0 2.0\n}\n"),
    ("zero_points", "version: 1\nn_points: 0\n{\n}\n"),
    ("missing_open_brace", "version: 1\nn_points: 1\n1.0 2.0\n}\n"),
    ("one_token_point", "version: 1\nn_points: 1\n{\n1.0\n}\n"),
    ("three_token_point", "version: 1\nn_points: 1\n{\n1.0 2.0 3.0\n}\n"),
    ("non_numeric_coord", "version: 1\nn_points: 1\n{\nabc 2.0\n}\n"),
    ("non_finite_coord", "version: 1\nn_points: 1\n{\nnan 2.0\n}\n"),
    ("truncated_points", "version: 1\nn_points: 3\n{\n1.0 2.0\n"),
    ("missing_close_brace", "version: 1\nn_points: 1\n{\n1.0 2.0\nhm\n"),
    ("content_after_close", "version: 1\nn_points: 1\n{\n1.0 2.0\n}\nextra\n"),
]


def make_wflw_line(seed: int = 5) -> str:
    rec = make_records(1, seed=seed)[0]
    coords = [repr(float(v)) for v in rec.landmarks.points.reshape(-1)]
    bbox = [str(int(v)) for v in rec.bbox]
    attrs = rec.attributes or Attributes()
    flags = [str(int(getattr(attrs, name))) for name in ATTRIBUTE_NAMES]
    return " ".join(coords + bbox + flags + [rec.image_path])


def malformed_wflw_lines() -> list[tuple[str, str]]:
    base = make_wflw_line().split()

    def swap(i: int, token: str) -> str:
        bad = list(base)
        bad[i] = token
        return " ".join(bad)

    inverted = list(base)
    inverted[196], inverted[198] = inverted[198], inverted[196]
    return [
        ("too_few_tokens", " ".join(base[:205] + base[206:])),
        ("too_many_tokens", " ".join(base + ["extra"])),
        ("non_numeric_coord", swap(0, "abc")),
        ("non_finite_coord", swap(3, "inf")),
        ("float_bbox", swap(196, "12.5")),
        ("inverted_bbox", " ".join(inverted)),
        ("numeric_flag_out_of_range", swap(200, "2")),
        ("word_flag", swap(205, "yes")),
    ]


def malformed_canonical_docs() -> list[tuple[str, str]]:
    import copy
    import json

    from subpix.datasets import canonical_dict

    doc = canonical_dict(make_records(2, seed=6), dataset="synthetic")

    def mutate(name, fn):
        d = copy.deepcopy(doc)
        fn(d)
        return name, json.dumps(d)

    def set_attr(d, value):
        d["records"][0]["attributes"] = value

    cases = [
        ("invalid_json", "{not json"),
        ("top_level_array", "[1,2]"),
        mutate("missing_records", lambda d: d.pop("records")),
        mutate("string_n_landmarks", lambda d: d.update(n_landmarks="98")),
        mutate("empty_records", lambda d: d.update(records=[])),
        mutate("record_not_object", lambda d: d["records"].__setitem__(0, 7)),
        mutate("missing_id", lambda d: d["records"][0].pop("id")),
        mutate("empty_id", lambda d: d["records"][0].update(id="")),
        mutate("duplicate_id",
               lambda d: d["records"][1].update(id=d["records"][0]["id"])),
        mutate("missing_image_path", lambda d: d["records"][0].pop("image_path")),
        mutate("short_points",
               lambda d: d["records"][0].update(points=d["records"][0]["points"][:-1])),
        mutate("non_numeric_points",
               lambda d: d["records"][0]["points"].__setitem__(3, ["a", "b"])),
        mutate("non_finite_points",
               lambda d: d["records"][0]["points"].__setitem__(3, [float("inf"), 0.0])),
        mutate("short_bbox", lambda d: d["records"][0].update(bbox=[1, 2, 3])),
        mutate("unknown_attribute", lambda d: set_attr(d, {"grin": True})),
        mutate("attributes_not_object", lambda d: set_attr(d, 5)),
    ]
    return cases


# -- acceptance verdict plumbing --------------------------------------------------
# The acceptance tests record one verdict line per criterion here; the hook
# replays them after the test summary, outside pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
