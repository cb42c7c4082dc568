"""Calibration diagnostics and regression accuracy metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._validation import (
    as_float_array,
    as_prob_matrix,
    check_class_labels,
    check_consistent_length,
    check_levels,
    check_rng,
)
from .distributions import DECILE_LEVELS, Featurization, GaussianDist, featurization_matrix
from .exceptions import DataError


@dataclass(frozen=True)
class ReliabilityBin:
    nominal_level: float
    empirical_freq: float
    count: int


@dataclass(frozen=True)
class ReliabilityTable:
    """Rows of nominal level vs empirical frequency with supporting counts."""

    bins: tuple[ReliabilityBin, ...]

    def nominal(self) -> np.ndarray:
        return np.array([b.nominal_level for b in self.bins])

    def empirical(self) -> np.ndarray:
        return np.array([b.empirical_freq for b in self.bins])


def quantile_matrix(dists, levels: np.ndarray) -> np.ndarray:
    """Quantiles of each forecast at each level, as an (n, L) matrix."""
    if len(dists) and all(isinstance(d, GaussianDist) for d in dists):
        from scipy.special import ndtri

        mu = np.array([d.mu for d in dists])
        sigma = np.array([d.sigma for d in dists])
        return mu[:, None] + sigma[:, None] * ndtri(levels)[None, :]
    return np.stack([np.asarray(d.quantile(levels), dtype=float) for d in dists])


def quantile_calibration_error(
    dists, ys, levels: Sequence[float] = DECILE_LEVELS
) -> float:
    """Sum over levels of squared (nominal - empirical) coverage gaps.

    The empirical coverage at level p is the fraction of outcomes at or
    below their forecast's p-quantile.
    """
    levels = check_levels(levels)
    if len(dists) == 0:
        raise DataError("quantile_calibration_error needs at least one forecast")
    ys = as_float_array(ys, "ys", ndim=1)
    check_consistent_length(dists, ys, names="dists/ys")
    q = quantile_matrix(dists, levels)
    covered = (ys[:, None] <= q).mean(axis=0)
    return float(np.sum((levels - covered) ** 2))


def coverage_table(dists, ys, levels: Sequence[float] = DECILE_LEVELS) -> ReliabilityTable:
    """Per-level empirical coverage of forecast quantiles."""
    levels = check_levels(levels)
    ys = as_float_array(ys, "ys", ndim=1)
    q = quantile_matrix(dists, levels)
    covered = (ys[:, None] <= q).mean(axis=0)
    n = len(ys)
    return ReliabilityTable(
        bins=tuple(
            ReliabilityBin(float(p), float(c), n) for p, c in zip(levels, covered)
        )
    )


@dataclass(frozen=True)
class DistributionCalibrationReport:
    """Groupwise quantile calibration, binned on forecast parameters."""

    tables: dict
    aggregate: float
    excluded: tuple  # (cell_key, count) pairs below the occupancy threshold
    bins_per_coordinate: int


def distribution_calibration_diagnostic(
    featurizations,
    dists,
    ys,
    param_bins: int = 5,
    levels: Sequence[float] = DECILE_LEVELS,
    min_bin_count: int = 10,
    max_cells: int = 125,
) -> DistributionCalibrationReport:
    """Check calibration conditionally on the forecast parameters.

    Forecasts are grouped into uniform cells over each featurization
    coordinate (``param_bins`` per coordinate, reduced so the total cell
    count stays within ``max_cells``); the quantile calibration error is
    evaluated within each occupied cell and aggregated by count weight.
    Cells with fewer than ``min_bin_count`` samples are excluded and
    reported.  With ``param_bins == 1`` this reduces exactly to
    :func:`quantile_calibration_error`.
    """
    if param_bins < 1:
        raise ValueError("param_bins must be >= 1")
    params = featurization_matrix(featurizations)
    ys = as_float_array(ys, "ys", ndim=1)
    check_consistent_length(params, dists, ys, names="featurizations/dists/ys")
    levels = check_levels(levels)
    n, d = params.shape

    b = param_bins
    if b**d > max_cells:
        b = max(1, int(np.floor(max_cells ** (1.0 / d))))

    keys = np.zeros((n, d), dtype=np.int64)
    for j in range(d):
        col = params[:, j]
        lo, hi = col.min(), col.max()
        if hi <= lo:
            continue
        edges = np.linspace(lo, hi, b + 1)
        keys[:, j] = np.clip(np.searchsorted(edges, col, side="right") - 1, 0, b - 1)

    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    tables: dict = {}
    excluded = []
    weighted = 0.0
    total = 0
    dists = list(dists)
    for g in range(int(inverse.max()) + 1):
        members = np.flatnonzero(inverse == g)
        key = tuple(keys[members[0]])
        if members.size < min_bin_count:
            excluded.append((key, int(members.size)))
            continue
        cell_dists = [dists[i] for i in members]
        cell_ys = ys[members]
        err = quantile_calibration_error(cell_dists, cell_ys, levels)
        tables[key] = coverage_table(cell_dists, cell_ys, levels)
        weighted += members.size * err
        total += members.size
    if total == 0:
        raise DataError("every parameter cell fell below the occupancy threshold")
    return DistributionCalibrationReport(
        tables=tables,
        aggregate=weighted / total,
        excluded=tuple(excluded),
        bins_per_coordinate=b,
    )


def ece_classification(forecasts, labels, bins: int = 10) -> float:
    """Expected calibration error over confidence bins.

    Confidence is the maximum class probability; the error is the
    count-weighted absolute gap between per-bin accuracy and confidence.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    probs = as_prob_matrix(forecasts)
    labels = check_class_labels(labels, probs.shape[1], "labels")
    check_consistent_length(probs, labels, names="forecasts/labels")
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    idx = np.clip((conf * bins).astype(int), 0, bins - 1)
    n = len(labels)
    ece = 0.0
    for b in range(bins):
        members = idx == b
        n_b = int(members.sum())
        if n_b == 0:
            continue
        ece += (n_b / n) * abs(correct[members].mean() - conf[members].mean())
    return float(ece)


def confidence_table(forecasts, labels, bins: int = 10) -> ReliabilityTable:
    """Accuracy vs mean confidence per confidence bin; counts sum to n."""
    probs = as_prob_matrix(forecasts)
    labels = check_class_labels(labels, probs.shape[1], "labels")
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    idx = np.clip((conf * bins).astype(int), 0, bins - 1)
    rows = []
    for b in range(bins):
        members = idx == b
        n_b = int(members.sum())
        if n_b == 0:
            continue
        rows.append(
            ReliabilityBin(float(conf[members].mean()), float(correct[members].mean()), n_b)
        )
    return ReliabilityTable(bins=tuple(rows))


def pit_calibration_error(
    forecasts, labels, levels: Sequence[float] = DECILE_LEVELS, rng: np.random.Generator | None = None
) -> float:
    """Quantile calibration error of categorical forecasts via randomized PIT.

    For discrete outcomes the plain probability integral transform is not
    uniform even under perfect calibration, so each outcome's transform is
    drawn uniformly across its probability mass: u = F(y-1) + V * f(y).
    The result is the sum over levels of squared (p - freq(u <= p)) gaps.
    """
    probs = as_prob_matrix(forecasts)
    labels = check_class_labels(labels, probs.shape[1], "labels")
    check_consistent_length(probs, labels, names="forecasts/labels")
    levels = check_levels(levels)
    rng = check_rng(rng if rng is not None else np.random.default_rng(0))
    cum = np.cumsum(probs, axis=1)
    below = cum[np.arange(len(labels)), labels] - probs[np.arange(len(labels)), labels]
    u = below + rng.random(len(labels)) * probs[np.arange(len(labels)), labels]
    covered = (u[:, None] <= np.asarray(levels)[None, :]).mean(axis=0)
    return float(np.sum((levels - covered) ** 2))


@dataclass(frozen=True)
class MaeMape:
    mae: float
    mape: float
    mape_n: int  # outcomes retained after excluding zeros


def mae_mape(point_preds, ys) -> MaeMape:
    """Mean absolute error and mean absolute percent error of point predictions.

    Zero outcomes are excluded from the MAPE and counted via ``mape_n``;
    an all-zero outcome vector is an error.
    """
    preds = as_float_array(point_preds, "point_preds", ndim=1)
    ys = as_float_array(ys, "ys", ndim=1)
    check_consistent_length(preds, ys, names="point_preds/ys")
    mae = float(np.mean(np.abs(ys - preds)))
    nonzero = ys != 0.0
    if not np.any(nonzero):
        raise DataError("MAPE is undefined: every outcome is zero")
    mape = float(np.mean(np.abs((ys[nonzero] - preds[nonzero]) / ys[nonzero])))
    return MaeMape(mae=mae, mape=mape, mape_n=int(nonzero.sum()))
