"""CSV ingestion and the preprocessing pipeline.

Pipeline order used by the command-line front end: missing-value handling,
outlier clipping with quartile fences, chronological split arithmetic,
z-score fit on training rows, apply, then supervised windowing. Fence and
normalization statistics are fit on training rows only and applied to all
rows, so no statistic ever sees validation or test targets.

Conventions pinned here because downstream oracle tests depend on them:
standard deviation is population (divide by n), quantiles interpolate
linearly between order statistics, and row indices in error messages are
1-based data rows (the header is row 0).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    InsufficientDataError,
    MissingDataError,
    ParameterError,
)

logger = logging.getLogger(__name__)

MISSING_TOKENS = {"", "nan", "na", "null"}


@dataclass(frozen=True)
class RawSeries:
    """Timestamped multivariate series; NaN marks a missing value."""

    timestamps: tuple[datetime, ...]
    columns: dict[str, np.ndarray]
    target: str

    def __post_init__(self):
        n = len(self.timestamps)
        for name, col in self.columns.items():
            if len(col) != n:
                raise DataError(
                    f"column '{name}' has {len(col)} values for {n} timestamps"
                )
        if self.target not in self.columns:
            raise DataError(f"target column '{self.target}' not present")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.columns.keys())

    @property
    def n_rows(self) -> int:
        return len(self.timestamps)

    def matrix(self) -> np.ndarray:
        """Values as (T, F) in column order."""
        return np.column_stack([self.columns[n] for n in self.names])

    def target_index(self) -> int:
        return self.names.index(self.target)

    def with_columns(self, columns: dict[str, np.ndarray]) -> "RawSeries":
        return RawSeries(timestamps=self.timestamps, columns=columns, target=self.target)


@dataclass(frozen=True)
class NormalizationParams:
    """Per-column mean and population standard deviation, fit on training rows."""

    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    target: str

    def column_index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise ParameterError(f"unknown column '{column}'") from None


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised (window, target) pairs plus the index map to source rows."""

    inputs: np.ndarray   # (N, L, F)
    targets: np.ndarray  # (N, H)
    starts: np.ndarray   # (N,) source row of each window's first input
    timestamps: tuple[datetime, ...]
    columns: tuple[str, ...]
    target: str

    @property
    def n_windows(self) -> int:
        return self.inputs.shape[0]

    @property
    def window_len(self) -> int:
        return self.inputs.shape[1]

    @property
    def horizon(self) -> int:
        return self.targets.shape[1]

    def target_rows(self) -> np.ndarray:
        """Source row of each window's first target element."""
        return self.starts + self.window_len


@dataclass(frozen=True)
class SplitIndices:
    """Chronological, disjoint window ranges: train before val before test."""

    train: range
    validation: range
    test: range


def _parse_timestamp(token: str, row: int) -> datetime:
    text = token.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise DataError(
            f"row {row}: unparseable timestamp '{token}'"
        ) from None


def load_csv(path, target_column: str | None = None) -> RawSeries:
    """Read a series from a comma-separated file.

    The first column is an ISO-8601 timestamp; the rest are numeric
    features. Empty fields and the token NaN become missing markers.
    ``target_column`` defaults to the last column.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if len(header) < 2:
            raise DataError(f"{path}: need a timestamp column and at least one feature")
        names = [h.strip() for h in header[1:]]
        timestamps: list[datetime] = []
        values: list[list[float]] = []
        for row_idx, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {row_idx}: expected {len(header)} fields, got {len(row)}"
                )
            timestamps.append(_parse_timestamp(row[0], row_idx))
            parsed = []
            for name, token in zip(names, row[1:]):
                text = token.strip()
                if text.lower() in MISSING_TOKENS:
                    parsed.append(np.nan)
                    continue
                try:
                    parsed.append(float(text))
                except ValueError:
                    raise DataError(
                        f"row {row_idx}, column '{name}': unparseable number '{token}'"
                    ) from None
            values.append(parsed)
    if not timestamps:
        raise DataError(f"{path}: no data rows")
    for i in range(1, len(timestamps)):
        if timestamps[i] == timestamps[i - 1]:
            raise DataError(f"row {i + 1}: duplicate timestamp {timestamps[i]}")
        if timestamps[i] < timestamps[i - 1]:
            raise DataError(
                f"row {i + 1}: timestamps not increasing ({timestamps[i]} "
                f"after {timestamps[i - 1]})"
            )
    arr = np.array(values, dtype=np.float64)
    columns = {name: arr[:, j].copy() for j, name in enumerate(names)}
    target = target_column if target_column is not None else names[-1]
    if target not in columns:
        raise DataError(f"target column '{target}' not in header {names}")
    return RawSeries(timestamps=tuple(timestamps), columns=columns, target=target)


@dataclass(frozen=True)
class MissingSummary:
    fractions: dict[str, float]
    leading_rows: int
    trailing_rows: int
    interior_missing: int


def missing_summary(s: RawSeries) -> MissingSummary:
    """Per-column missing fractions plus boundary/interior counts."""
    mat = s.matrix()
    missing = np.isnan(mat)
    fractions = {
        name: float(missing[:, j].mean()) for j, name in enumerate(s.names)
    }
    any_missing = missing.any(axis=1)
    lead = 0
    while lead < len(any_missing) and any_missing[lead]:
        lead += 1
    trail = 0
    while trail < len(any_missing) - lead and any_missing[-1 - trail]:
        trail += 1
    interior = int(missing[lead : len(any_missing) - trail].sum())
    return MissingSummary(
        fractions=fractions,
        leading_rows=lead,
        trailing_rows=trail,
        interior_missing=interior,
    )


def handle_missing(
    s: RawSeries, max_fraction: float = 0.03, force: bool = False
) -> RawSeries:
    """Drop missing boundary rows and linearly interpolate interior gaps.

    Refuses (unless ``force``) when any column's missing fraction exceeds
    ``max_fraction``; at that point the gaps are material and silently
    inventing data would be misleading.
    """
    summary = missing_summary(s)
    if not force:
        over = {c: f for c, f in summary.fractions.items() if f > max_fraction}
        if over:
            detail = ", ".join(f"{c}: {f:.4f}" for c, f in sorted(over.items()))
            raise MissingDataError(
                f"missing fraction exceeds {max_fraction}: {detail} "
                f"(pass force to interpolate anyway)"
            )
    lead, trail = summary.leading_rows, summary.trailing_rows
    stop = s.n_rows - trail
    if stop - lead < 1:
        raise DataError("all rows have missing values; nothing left after trimming")
    timestamps = s.timestamps[lead:stop]
    columns = {}
    for name in s.names:
        col = s.columns[name][lead:stop].copy()
        nan = np.isnan(col)
        if nan.all():
            raise DataError(f"column '{name}' has no observed values")
        if nan.any():
            idx = np.arange(len(col))
            col[nan] = np.interp(idx[nan], idx[~nan], col[~nan])
        columns[name] = col
    return RawSeries(timestamps=timestamps, columns=columns, target=s.target)


def iqr_clip(
    s: RawSeries, k: float = 1.5, fit_rows: range | None = None
) -> RawSeries:
    """Clip each column to [Q1 - k*IQR, Q3 + k*IQR].

    Quartiles are computed on ``fit_rows`` (default: all rows) and the
    fences applied everywhere. A zero-IQR column is left untouched with
    a warning, since its fences would collapse to a point.
    """
    if k < 0:
        raise ParameterError(f"iqr k must be >= 0, got {k}")
    rows = fit_rows if fit_rows is not None else range(s.n_rows)
    if len(rows) == 0:
        raise ParameterError("iqr_clip fit range is empty")
    fit = np.asarray(rows)
    columns = {}
    for name in s.names:
        col = s.columns[name]
        q1, q3 = np.quantile(col[fit], [0.25, 0.75])
        iqr = q3 - q1
        if iqr == 0.0:
            logger.warning("iqr_clip: column '%s' has zero IQR, left unclipped", name)
            columns[name] = col.copy()
            continue
        columns[name] = np.clip(col, q1 - k * iqr, q3 + k * iqr)
    return s.with_columns(columns)


def zscore_fit(s: RawSeries, fit_rows: range | None = None) -> NormalizationParams:
    """Per-column mean/std from the training rows only (leakage rule)."""
    rows = fit_rows if fit_rows is not None else range(s.n_rows)
    if len(rows) == 0:
        raise ParameterError("zscore_fit range is empty")
    fit = np.asarray(rows)
    means, stds = [], []
    for name in s.names:
        col = s.columns[name][fit]
        mean = float(col.mean())
        std = float(col.std())  # population
        if std == 0.0:
            raise DataError(f"column '{name}' is constant on the fit rows")
        means.append(mean)
        stds.append(std)
    return NormalizationParams(
        columns=s.names, mean=np.array(means), std=np.array(stds), target=s.target
    )


def zscore_apply(s: RawSeries, p: NormalizationParams) -> RawSeries:
    if s.names != p.columns:
        raise DataError(
            f"normalization columns {p.columns} do not match series {s.names}"
        )
    columns = {
        name: (s.columns[name] - p.mean[j]) / p.std[j]
        for j, name in enumerate(s.names)
    }
    return s.with_columns(columns)


def zscore_invert(x, p: NormalizationParams, column: str) -> np.ndarray:
    """Exact algebraic inverse of apply, for one column."""
    j = p.column_index(column)
    return np.asarray(x, dtype=np.float64) * p.std[j] + p.mean[j]


def make_windows(s: RawSeries, window_len: int, horizon: int, stride: int = 1) -> WindowedDataset:
    """Slide a (window, target) template over the series.

    Window i covers rows [i, i+L); its target is the target column over
    rows [i+L, i+L+H).
    """
    if window_len < 1 or horizon < 1 or stride < 1:
        raise ParameterError(
            f"window_len, horizon, stride must be >= 1, got "
            f"{window_len}, {horizon}, {stride}"
        )
    T = s.n_rows
    if T < window_len + horizon:
        raise InsufficientDataError(
            f"need at least {window_len + horizon} rows for one window, have {T}"
        )
    mat = s.matrix()
    tgt = s.columns[s.target]
    starts = np.arange(0, T - window_len - horizon + 1, stride)
    inputs = np.stack([mat[i : i + window_len] for i in starts])
    targets = np.stack([tgt[i + window_len : i + window_len + horizon] for i in starts])
    return WindowedDataset(
        inputs=inputs,
        targets=targets,
        starts=starts,
        timestamps=s.timestamps,
        columns=s.names,
        target=s.target,
    )


def chronological_split(
    n_windows: int, fractions: Sequence[float] = (0.7, 0.2, 0.1)
) -> SplitIndices:
    """First floor(f1 n) windows train, next floor(f2 n) validate, rest test."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ParameterError(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must sum to 1, got {sum(fractions)}")
    if n_windows < 3:
        raise InsufficientDataError(
            f"need at least 3 windows to split, have {n_windows}"
        )
    n_train = int(np.floor(fractions[0] * n_windows))
    n_val = int(np.floor(fractions[1] * n_windows))
    n_test = n_windows - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InsufficientDataError(
            f"split of {n_windows} windows leaves an empty part "
            f"({n_train}/{n_val}/{n_test})"
        )
    return SplitIndices(
        train=range(0, n_train),
        validation=range(n_train, n_train + n_val),
        test=range(n_train + n_val, n_windows),
    )


def train_row_end(split: SplitIndices, window_len: int, horizon: int) -> int:
    """Last source row (exclusive) touched by any training window or target.

    Fitting statistics on rows [0, this) keeps validation and test target
    rows out of every fitted quantity.
    """
    last_window = split.train[-1]
    return last_window + window_len + horizon


def kfold(n_windows: int, k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Contiguous blocked folds: fold j's block validates, the rest trains.

    Block sizes differ by at most one; the blocks partition [0, n).
    """
    if not 2 <= k <= n_windows:
        raise ParameterError(
            f"k must be in [2, {n_windows}], got {k}"
        )
    sizes = np.full(k, n_windows // k)
    sizes[: n_windows % k] += 1
    edges = np.concatenate([[0], np.cumsum(sizes)])
    folds = []
    all_idx = np.arange(n_windows)
    for j in range(k):
        val = all_idx[edges[j] : edges[j + 1]]
        train = np.concatenate([all_idx[: edges[j]], all_idx[edges[j + 1] :]])
        folds.append((train, val))
    return folds
