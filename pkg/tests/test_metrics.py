"""Metrics tests: per-point errors, NME, exact step-function CED statistics.

Primary oracle for the AUC is the closed form

    auc(errors, t) = 1 - mean(min(e, t)) / t

which follows from integrating the indicator of each error over [0, t].
A rectangle-rule quadrature of the empirical CDF backs it up at coarse
tolerance.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subpix.errors import ConfigError
from subpix.geometry import LandmarkSet, Space
from subpix.metrics import (DEFAULT_NORM_INDICES, MetricsConfig, PerImageError,
                            ced_auc, ced_csv, ced_points, failure_rate,
                            format_ced_csv, nme, point_errors,
                            resolve_norm_indices)


def closed_form_auc(errors, t: float) -> float:
    e = np.asarray(errors, dtype=np.float64)
    return 1.0 - float(np.mean(np.minimum(e, t))) / t


def rectangle_auc(errors, t: float, steps: int = 200_000) -> float:
    e = np.sort(np.asarray(errors, dtype=np.float64))
    xs = (np.arange(steps) + 0.5) * (t / steps)
    cdf = np.searchsorted(e, xs, side="right") / e.size
    return float(cdf.mean())


def lset(points, valid=None, space=Space.RAW) -> LandmarkSet:
    return LandmarkSet(points=np.asarray(points, dtype=np.float64),
                       space=space, valid=valid)


class TestPointErrors:
    def test_euclidean_distances(self):
        gt = lset([[0.0, 0.0], [10.0, 10.0]])
        pred = lset([[3.0, 4.0], [10.0, 10.0]])
        np.testing.assert_allclose(point_errors(gt, pred), [5.0, 0.0])

    def test_invalid_on_either_side_is_nan(self):
        gt = lset([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]],
                  valid=np.array([True, False, True]))
        pred = lset([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]],
                    valid=np.array([True, True, False]))
        err = point_errors(gt, pred)
        assert err[0] == 0.0
        assert np.isnan(err[1]) and np.isnan(err[2])

    def test_count_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            point_errors(lset([[0, 0], [1, 1]]), lset([[0, 0]]))

    def test_space_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            point_errors(lset([[0, 0]], space=Space.RAW),
                         lset([[0, 0]], space=Space.INPUT))


class TestNme:
    def test_two_pixel_error_over_fifty(self):
        gt = lset([[100.0, 100.0]])
        pred = lset([[102.0, 100.0]])
        assert nme(gt, pred, 50.0) == pytest.approx(0.04, abs=1e-15)

    def test_mean_over_points(self):
        gt = lset([[0.0, 0.0], [10.0, 0.0]])
        pred = lset([[3.0, 4.0], [10.0, 0.0]])
        assert nme(gt, pred, 10.0) == pytest.approx(0.25, abs=1e-15)

    def test_invalid_points_reduce_count(self):
        gt = lset([[0.0, 0.0], [10.0, 0.0]], valid=np.array([True, False]))
        pred = lset([[3.0, 4.0], [99.0, 99.0]])
        assert nme(gt, pred, 10.0) == pytest.approx(0.5, abs=1e-15)

    def test_include_invalid_forces_full_mean(self):
        gt = lset([[0.0, 0.0], [10.0, 0.0]], valid=np.array([True, False]))
        pred = lset([[3.0, 4.0], [10.0, 0.0]])
        got = nme(gt, pred, 10.0, include_invalid=True)
        assert got == pytest.approx(0.25, abs=1e-15)

    def test_include_invalid_requires_finite_coords(self):
        gt = lset([[0.0, 0.0], [np.nan, np.nan]], valid=np.array([True, False]))
        pred = lset([[3.0, 4.0], [10.0, 0.0]])
        with pytest.raises(ConfigError):
            nme(gt, pred, 10.0, include_invalid=True)

    def test_no_valid_points_rejected(self):
        gt = lset([[0.0, 0.0]], valid=np.array([False]))
        with pytest.raises(ConfigError):
            nme(gt, lset([[0.0, 0.0]]), 10.0)

    def test_bad_norm_distance_rejected(self):
        gt = lset([[0.0, 0.0]])
        for d in (0.0, -1.0, np.nan, np.inf):
            with pytest.raises(ConfigError):
                nme(gt, gt, d)


class TestNormIndices:
    def test_defaults_by_layout(self):
        cfg = MetricsConfig()
        assert resolve_norm_indices(98, cfg) == (60, 72)
        assert resolve_norm_indices(68, cfg) == (36, 45)
        assert DEFAULT_NORM_INDICES == {98: (60, 72), 68: (36, 45)}

    def test_unknown_layout_needs_explicit_pair(self):
        with pytest.raises(ConfigError):
            resolve_norm_indices(51, MetricsConfig())
        cfg = MetricsConfig(norm_indices=(0, 50))
        assert resolve_norm_indices(51, cfg) == (0, 50)

    def test_explicit_pair_overrides_default(self):
        cfg = MetricsConfig(norm_indices=(1, 2))
        assert resolve_norm_indices(98, cfg) == (1, 2)

    def test_out_of_range_pair_rejected(self):
        with pytest.raises(ConfigError):
            resolve_norm_indices(68, MetricsConfig(norm_indices=(36, 70)))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            MetricsConfig(norm_indices=(5, 5))
        with pytest.raises(ConfigError):
            MetricsConfig(norm_indices=(-1, 5))
        with pytest.raises(ConfigError):
            MetricsConfig(threshold=0.0)


class TestCedAuc:
    def test_two_image_example(self):
        assert ced_auc([0.05, 0.20], 0.1) == pytest.approx(0.25, abs=1e-15)

    def test_all_zero_errors(self):
        assert ced_auc([0.0, 0.0, 0.0], 0.1) == 1.0

    def test_all_above_threshold(self):
        assert ced_auc([0.2, 0.3], 0.1) == 0.0

    def test_error_at_threshold_contributes_nothing(self):
        assert ced_auc([0.1], 0.1) == 0.0

    def test_accepts_per_image_error_objects(self):
        rows = [PerImageError(id="a", nme=0.05, per_point=np.array([0.05])),
                PerImageError(id="b", nme=0.20, per_point=np.array([0.20]))]
        assert ced_auc(rows, 0.1) == pytest.approx(0.25, abs=1e-15)

    def test_matches_closed_form_random_sets(self):
        rng = np.random.Generator(np.random.PCG64(101))
        for _ in range(300):
            m = int(rng.integers(1, 40))
            errs = rng.uniform(0.0, 0.3, size=m)
            t = float(rng.uniform(0.01, 0.2))
            assert abs(ced_auc(errs, t) - closed_form_auc(errs, t)) < 1e-12

    def test_matches_quadrature(self):
        rng = np.random.Generator(np.random.PCG64(103))
        errs = rng.uniform(0.0, 0.2, size=57)
        got = ced_auc(errs, 0.1)
        assert got == pytest.approx(rectangle_auc(errs, 0.1), abs=1e-4)

    def test_duplicate_errors(self):
        errs = [0.05, 0.05, 0.05, 0.2]
        assert ced_auc(errs, 0.1) == pytest.approx(closed_form_auc(errs, 0.1),
                                                   abs=1e-15)

    def test_validation(self):
        with pytest.raises(ConfigError):
            ced_auc([], 0.1)
        with pytest.raises(ConfigError):
            ced_auc([0.1], 0.0)
        with pytest.raises(ConfigError):
            ced_auc([-0.1], 0.1)
        with pytest.raises(ConfigError):
            ced_auc([np.nan], 0.1)

    @given(st.lists(st.floats(0.0, 0.5), min_size=1, max_size=30),
           st.floats(0.01, 0.3))
    @settings(max_examples=200, deadline=None)
    def test_closed_form_property(self, errs, t):
        assert abs(ced_auc(errs, t) - closed_form_auc(errs, t)) < 1e-12

    @given(st.lists(st.floats(0.0, 0.5), min_size=1, max_size=30),
           st.integers(0, 29), st.floats(0.001, 0.3))
    @settings(max_examples=200, deadline=None)
    def test_increasing_an_error_never_raises_auc(self, errs, k, bump):
        worse = list(errs)
        worse[k % len(errs)] += bump
        assert ced_auc(worse, 0.1) <= ced_auc(errs, 0.1) + 1e-12

    @given(st.permutations(list(range(8))))
    @settings(max_examples=50, deadline=None)
    def test_order_invariance(self, perm):
        errs = np.array([0.01, 0.02, 0.05, 0.07, 0.11, 0.0, 0.03, 0.09])
        assert ced_auc(errs[list(perm)], 0.1) == ced_auc(errs, 0.1)

    def test_scale_invariance(self):
        rng = np.random.Generator(np.random.PCG64(107))
        errs = rng.uniform(0.0, 0.2, size=33)
        a = ced_auc(errs, 0.1)
        b = ced_auc(errs * 4.0, 0.4)
        assert a == pytest.approx(b, abs=1e-12)


class TestFailureRate:
    def test_strictly_above(self):
        assert failure_rate([0.05, 0.20], 0.1) == 0.5
        assert failure_rate([0.1], 0.1) == 0.0
        assert failure_rate([0.10000001], 0.1) == 1.0

    def test_bounds(self):
        assert failure_rate([0.0, 0.01], 0.1) == 0.0
        assert failure_rate([0.2, 0.3], 0.1) == 1.0

    @given(st.lists(st.floats(0.0, 0.5), min_size=1, max_size=30),
           st.floats(0.01, 0.2), st.floats(0.0, 0.2))
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_threshold(self, errs, t, dt):
        assert failure_rate(errs, t + dt) <= failure_rate(errs, t)

    def test_validation(self):
        with pytest.raises(ConfigError):
            failure_rate([], 0.1)
        with pytest.raises(ConfigError):
            failure_rate([0.05], -0.1)


class TestCedPoints:
    def test_small_example_rows(self):
        pts = ced_points([0.02, 0.05, 0.05, 0.2], 0.1)
        assert pts == [(0.0, 0.0), (0.02, 0.25), (0.05, 0.75), (0.1, 0.75)]

    def test_endpoints_always_present(self):
        pts = ced_points([0.5], 0.1)
        assert pts[0] == (0.0, 0.0)
        assert pts[-1] == (0.1, 0.0)

    def test_zero_error_row_merges_with_origin(self):
        pts = ced_points([0.0, 0.05], 0.1)
        assert pts == [(0.0, 0.5), (0.05, 1.0), (0.1, 1.0)]

    def test_fractions_nondecreasing(self):
        rng = np.random.Generator(np.random.PCG64(109))
        errs = rng.uniform(0.0, 0.2, size=40)
        pts = ced_points(errs, 0.1)
        fr = [f for _, f in pts]
        assert fr == sorted(fr)
        assert all(0.0 <= f <= 1.0 for f in fr)

    def test_curve_reproduces_auc(self):
        # trapezoid over the step rows with right-continuous steps
        rng = np.random.Generator(np.random.PCG64(113))
        errs = rng.uniform(0.0, 0.2, size=25)
        pts = ced_points(errs, 0.1)
        area = 0.0
        for (x0, f0), (x1, _) in zip(pts, pts[1:]):
            area += f0 * (x1 - x0)
        assert ced_auc(errs, 0.1) == pytest.approx(area / 0.1, abs=1e-12)


class TestCedCsv:
    def test_golden_output(self):
        got = ced_csv([0.02, 0.05, 0.05, 0.2], 0.1)
        assert got == ("nme_threshold,fraction\n"
                       "0.0,0.0\n"
                       "0.02,0.25\n"
                       "0.05,0.75\n"
                       "0.1,0.75\n")

    def test_format_round_trips_full_precision(self):
        pts = [(0.1 / 3.0, 1.0 / 7.0), (0.05, 0.3)]
        text = format_ced_csv(pts)
        rows = [tuple(float(v) for v in line.split(","))
                for line in text.strip().splitlines()[1:]]
        assert rows == pts
