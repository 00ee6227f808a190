"""Forecast-quality metrics and the report bundle.

All metrics are computed on denormalized (original-unit) values; the
normalization applied for training is a numerical convenience only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, UndefinedMetricError


@dataclass(frozen=True)
class PredictionSet:
    """Paired actual and predicted values, validated once at construction."""

    y: np.ndarray
    y_hat: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        y_hat = np.asarray(self.y_hat, dtype=np.float64).reshape(-1)
        if y.shape != y_hat.shape:
            raise DimensionError(
                f"prediction set lengths differ: {y.shape} vs {y_hat.shape}"
            )
        if y.size < 1:
            raise ParameterError("prediction set must contain at least one pair")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_hat))):
            raise ParameterError("prediction set contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_hat", y_hat)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    smape: float
    r2: float
    n: int

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "smape_percent": self.smape,
            "r2": self.r2,
            "n": self.n,
        }


def mae(ps: PredictionSet) -> float:
    """Mean absolute error."""
    return float(np.mean(np.abs(ps.y - ps.y_hat)))


def rmse(ps: PredictionSet) -> float:
    """Root mean squared error."""
    return float(np.sqrt(np.mean((ps.y - ps.y_hat) ** 2)))


def smape(ps: PredictionSet) -> float:
    """Symmetric mean absolute percentage error, in percent, range [0, 200].

    A term with |y| + |y_hat| = 0 contributes zero: both values are zero,
    so there is no error to express.
    """
    denom = np.abs(ps.y) + np.abs(ps.y_hat)
    num = 2.0 * np.abs(ps.y - ps.y_hat)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(100.0 * np.mean(terms))


def r_squared(ps: PredictionSet) -> float:
    """Coefficient of determination: 1 - SS_res / SS_tot."""
    ss_tot = float(np.sum((ps.y - ps.y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError(
            "r_squared undefined: actual values are constant"
        )
    ss_res = float(np.sum((ps.y - ps.y_hat) ** 2))
    return 1.0 - ss_res / ss_tot


def report(ps: PredictionSet) -> MetricsReport:
    """All four metrics computed once on the same values."""
    return MetricsReport(
        rmse=rmse(ps), mae=mae(ps), smape=smape(ps), r2=r_squared(ps), n=ps.n
    )
