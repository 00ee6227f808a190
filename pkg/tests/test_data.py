"""Tests for CSV loading, cleaning, normalization, windowing, and splits."""

from datetime import datetime, timedelta

import numpy as np
import pytest

import gridcast.data as gd
from gridcast.errors import (
    DataError,
    InsufficientDataError,
    MissingDataError,
    ParameterError,
)

from oracles import oracle_mean_std, oracle_quantile


def hourly(n, start="2024-01-01T00:00:00"):
    t0 = datetime.fromisoformat(start)
    return tuple(t0 + timedelta(hours=i) for i in range(n))


def series(values, name="load", **extra):
    values = np.asarray(values, dtype=np.float64)
    cols = {name: values}
    for k, v in extra.items():
        cols[k] = np.asarray(v, dtype=np.float64)
    return gd.RawSeries(timestamps=hourly(len(values)), columns=cols, target=name)


def write_csv(path, rows, header="ts,load"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


class TestLoadCsv:
    def test_well_formed(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2024-01-01T00:00:00,1.5",
            "2024-01-01T01:00:00,2.5",
            "2024-01-01T02:00:00,3.5",
        ])
        s = gd.load_csv(p)
        assert s.n_rows == 3
        assert s.target == "load"
        np.testing.assert_array_equal(s.columns["load"], [1.5, 2.5, 3.5])

    def test_empty_field_becomes_missing(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2024-01-01T00:00:00,1.0",
            "2024-01-01T01:00:00,",
            "2024-01-01T02:00:00,3.0",
        ])
        s = gd.load_csv(p)
        assert np.isnan(s.columns["load"][1])

    def test_nan_token_becomes_missing(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2024-01-01T00:00:00,NaN",
            "2024-01-01T01:00:00,2.0",
            "2024-01-01T02:00:00,3.0",
        ])
        assert np.isnan(gd.load_csv(p).columns["load"][0])

    def test_out_of_order_timestamps_name_the_row(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2024-01-01T02:00:00,1.0",
            "2024-01-01T01:00:00,2.0",
        ])
        with pytest.raises(DataError, match="row 2"):
            gd.load_csv(p)

    def test_duplicate_timestamps_rejected(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2024-01-01T00:00:00,1.0",
            "2024-01-01T00:00:00,2.0",
        ])
        with pytest.raises(DataError, match="duplicate"):
            gd.load_csv(p)

    def test_bad_number_names_row_and_column(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2024-01-01T00:00:00,1.0",
            "2024-01-01T01:00:00,oops",
        ])
        with pytest.raises(DataError, match=r"row 2.*'load'"):
            gd.load_csv(p)

    def test_bad_timestamp_names_row(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["not-a-time,1.0"])
        with pytest.raises(DataError, match="row 1"):
            gd.load_csv(p)

    def test_explicit_target_column(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2024-01-01T00:00:00,1.0,10.0",
            "2024-01-01T01:00:00,2.0,20.0",
        ], header="ts,temp,load")
        s = gd.load_csv(p, target_column="temp")
        assert s.target == "temp"
        with pytest.raises(DataError, match="nope"):
            gd.load_csv(p, target_column="nope")

    def test_zulu_suffix_accepted(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["2024-01-01T00:00:00Z,1.0",
                                           "2024-01-01T01:00:00Z,2.0"])
        assert gd.load_csv(p).n_rows == 2


class TestHandleMissing:
    def test_interior_linear_midpoint(self):
        s = series([1.0, np.nan, 3.0])
        out = gd.handle_missing(s, max_fraction=0.5)
        np.testing.assert_array_equal(out.columns["load"], [1.0, 2.0, 3.0])

    def test_leading_row_dropped(self):
        s = series([np.nan, 5.0, 6.0])
        out = gd.handle_missing(s, max_fraction=0.5)
        np.testing.assert_array_equal(out.columns["load"], [5.0, 6.0])
        assert len(out.timestamps) == 2

    def test_trailing_row_dropped(self):
        s = series([5.0, 6.0, np.nan])
        out = gd.handle_missing(s, max_fraction=0.5)
        np.testing.assert_array_equal(out.columns["load"], [5.0, 6.0])

    def test_threshold_refusal_reports_fraction(self):
        vals = np.ones(100)
        vals[[10, 20, 30, 40]] = np.nan
        with pytest.raises(MissingDataError, match="0.0400"):
            gd.handle_missing(series(vals))

    def test_force_overrides_threshold(self):
        vals = np.ones(100)
        vals[[10, 20, 30, 40]] = np.nan
        out = gd.handle_missing(series(vals), force=True)
        assert not np.isnan(out.columns["load"]).any()

    def test_observed_values_untouched(self):
        rng = np.random.default_rng(0)
        vals = rng.normal(size=200)
        gaps = rng.choice(np.arange(1, 199), size=5, replace=False)
        vals_missing = vals.copy()
        vals_missing[gaps] = np.nan
        out = gd.handle_missing(series(vals_missing))
        keep = np.setdiff1d(np.arange(200), gaps)
        np.testing.assert_array_equal(out.columns["load"][keep], vals[keep])
        assert not np.isnan(out.columns["load"]).any()

    def test_uneven_gap_interpolates_linearly(self):
        s = series([0.0, np.nan, np.nan, 3.0])
        out = gd.handle_missing(s, max_fraction=0.6)
        np.testing.assert_allclose(out.columns["load"], [0.0, 1.0, 2.0, 3.0])

    def test_summary_counts(self):
        s = series([np.nan, 1.0, np.nan, 3.0, np.nan])
        summary = gd.missing_summary(s)
        assert summary.leading_rows == 1
        assert summary.trailing_rows == 1
        assert summary.interior_missing == 1
        assert summary.fractions["load"] == pytest.approx(0.6)


class TestIqrClip:
    def test_in_fence_data_unchanged(self):
        s = series([1.0, 2.0, 3.0, 4.0, 5.0])
        out = gd.iqr_clip(s)
        np.testing.assert_array_equal(out.columns["load"], s.columns["load"])

    def test_outlier_clipped_to_fence(self):
        s = series([1.0, 2.0, 3.0, 4.0, 100.0])
        out = gd.iqr_clip(s)
        # Q1=2, Q3=4, IQR=2 under linear-interpolation quantiles.
        np.testing.assert_array_equal(out.columns["load"], [1.0, 2.0, 3.0, 4.0, 7.0])

    def test_quantile_rule_matches_reference(self):
        rng = np.random.default_rng(1)
        vals = rng.normal(size=37)
        q1 = oracle_quantile(vals.tolist(), 0.25)
        q3 = oracle_quantile(vals.tolist(), 0.75)
        np.testing.assert_allclose(np.quantile(vals, [0.25, 0.75]), [q1, q3], atol=1e-12)

    def test_k_zero_clips_into_quartile_box(self):
        s = series([1.0, 2.0, 3.0, 4.0, 5.0])
        out = gd.iqr_clip(s, k=0.0)
        assert out.columns["load"].min() >= 2.0
        assert out.columns["load"].max() <= 4.0

    def test_idempotent_and_fence_bounded(self):
        rng = np.random.default_rng(2)
        vals = rng.standard_cauchy(size=500)  # heavy tails
        s = series(vals)
        once = gd.iqr_clip(s)
        twice = gd.iqr_clip(once)
        np.testing.assert_array_equal(once.columns["load"], twice.columns["load"])
        q1, q3 = np.quantile(vals, [0.25, 0.75])
        iqr = q3 - q1
        assert once.columns["load"].min() >= q1 - 1.5 * iqr - 1e-12
        assert once.columns["load"].max() <= q3 + 1.5 * iqr + 1e-12

    def test_zero_iqr_column_left_alone(self):
        s = series([5.0, 5.0, 5.0, 5.0])
        out = gd.iqr_clip(s)
        np.testing.assert_array_equal(out.columns["load"], s.columns["load"])

    def test_fit_rows_only(self):
        vals = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 1000.0])
        s = series(vals)
        out = gd.iqr_clip(s, fit_rows=range(5))
        assert out.columns["load"][5] < 1000.0  # clipped by fences fit upstream


class TestZscore:
    def test_hand_case(self):
        s = series([2.0, 4.0, 6.0])
        p = gd.zscore_fit(s)
        assert p.mean[0] == pytest.approx(4.0)
        assert p.std[0] == pytest.approx(1.632993, abs=1e-6)
        m, sd = oracle_mean_std([2.0, 4.0, 6.0])
        assert p.mean[0] == pytest.approx(m, abs=1e-12)
        assert p.std[0] == pytest.approx(sd, abs=1e-12)

    def test_already_standardized_is_fixed_point(self):
        rng = np.random.default_rng(3)
        vals = rng.normal(size=500)
        vals = (vals - vals.mean()) / vals.std()
        s = series(vals)
        p = gd.zscore_fit(s)
        out = gd.zscore_apply(s, p)
        np.testing.assert_allclose(out.columns["load"], vals, atol=1e-9)

    def test_roundtrip(self):
        rng = np.random.default_rng(4)
        vals = rng.normal(loc=50, scale=7, size=100)
        s = series(vals)
        p = gd.zscore_fit(s)
        normed = gd.zscore_apply(s, p)
        back = gd.zscore_invert(normed.columns["load"], p, "load")
        np.testing.assert_allclose(back, vals, atol=1e-9)

    def test_train_rows_standardized_exactly(self):
        rng = np.random.default_rng(5)
        vals = rng.normal(loc=10, scale=3, size=200)
        s = series(vals)
        fit = range(140)
        p = gd.zscore_fit(s, fit_rows=fit)
        out = gd.zscore_apply(s, p).columns["load"][:140]
        assert abs(out.mean()) < 1e-9
        assert abs(out.std() - 1.0) < 1e-9

    def test_constant_column_rejected_by_name(self):
        s = series([1.0, 2.0, 3.0], flat=[7.0, 7.0, 7.0])
        with pytest.raises(DataError, match="flat"):
            gd.zscore_fit(s)


class TestMakeWindows:
    def test_count_formula(self):
        s = series(np.arange(5.0))
        w = gd.make_windows(s, window_len=3, horizon=1)
        assert w.n_windows == 2
        np.testing.assert_array_equal(w.inputs[:, :, 0], [[0, 1, 2], [1, 2, 3]])
        np.testing.assert_array_equal(w.targets, [[3.0], [4.0]])

    def test_exactly_one_window_at_boundary(self):
        s = series(np.arange(4.0))
        w = gd.make_windows(s, window_len=3, horizon=1)
        assert w.n_windows == 1

    def test_stride_two(self):
        s = series(np.arange(7.0))
        w = gd.make_windows(s, window_len=3, horizon=1, stride=2)
        np.testing.assert_array_equal(w.starts, [0, 2])

    def test_insufficient_data_reports_minimum(self):
        s = series(np.arange(3.0))
        with pytest.raises(InsufficientDataError, match="at least 5"):
            gd.make_windows(s, window_len=4, horizon=1)

    def test_target_rows_map_back(self):
        s = series(np.arange(10.0))
        w = gd.make_windows(s, window_len=4, horizon=2)
        np.testing.assert_array_equal(w.target_rows(), w.starts + 4)
        np.testing.assert_array_equal(w.targets[:, 0], np.arange(10.0)[w.starts + 4])


class TestChronologicalSplit:
    def test_ten_windows(self):
        sp = gd.chronological_split(10)
        assert (len(sp.train), len(sp.validation), len(sp.test)) == (7, 2, 1)

    def test_hundred_windows(self):
        sp = gd.chronological_split(100)
        assert (len(sp.train), len(sp.validation), len(sp.test)) == (70, 20, 10)

    def test_order_and_disjointness(self):
        sp = gd.chronological_split(57)
        assert sp.train.stop == sp.validation.start
        assert sp.validation.stop == sp.test.start
        assert sp.test.stop == 57

    def test_empty_part_rejected(self):
        with pytest.raises(InsufficientDataError):
            gd.chronological_split(3)

    def test_too_few_windows_rejected(self):
        with pytest.raises(InsufficientDataError):
            gd.chronological_split(2)

    def test_bad_fractions_rejected(self):
        with pytest.raises(ParameterError):
            gd.chronological_split(10, fractions=(0.5, 0.2, 0.2))
        with pytest.raises(ParameterError):
            gd.chronological_split(10, fractions=(0.8, -0.1, 0.3))

    def test_no_leakage_between_splits(self):
        L, H = 4, 2
        sp = gd.chronological_split(50)
        end = gd.train_row_end(sp, L, H)
        # Every validation/test target row sits at or past the boundary.
        for i in list(sp.validation) + list(sp.test):
            assert i + L >= end - H  # first target row of window i
        # All training rows (inputs and targets) sit before it.
        assert sp.train[-1] + L + H == end


class TestKfold:
    def test_even_partition(self):
        folds = gd.kfold(10, 5)
        assert len(folds) == 5
        seen = np.concatenate([v for _, v in folds])
        np.testing.assert_array_equal(np.sort(seen), np.arange(10))
        for train, val in folds:
            assert len(val) == 2
            assert len(np.intersect1d(train, val)) == 0

    def test_remainder_distribution(self):
        folds = gd.kfold(10, 3)
        assert sorted(len(v) for _, v in folds) == [3, 3, 4]

    def test_leave_one_out(self):
        folds = gd.kfold(6, 6)
        assert all(len(v) == 1 for _, v in folds)

    def test_out_of_range_k(self):
        with pytest.raises(ParameterError):
            gd.kfold(10, 1)
        with pytest.raises(ParameterError):
            gd.kfold(10, 11)

    def test_blocks_are_contiguous(self):
        for _, val in gd.kfold(23, 4):
            np.testing.assert_array_equal(val, np.arange(val[0], val[-1] + 1))
