"""Proper scoring rules and the calibration/refinement decomposition.

All losses are oriented so that lower is better; the log score is negated
accordingly.  Densities and probabilities are floored at ``LOG_FLOOR``
inside logarithms so degenerate forecasts stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from ._validation import (
    as_prob_matrix,
    check_class_labels,
    check_consistent_length,
    check_finite_scalar,
    check_levels,
    check_probability,
    check_rng,
)
from .distributions import (
    DECILE_LEVELS,
    CategoricalDist,
    GaussianDist,
    PredictiveDistribution,
    QuantileGridDist,
)

LOG_FLOOR = 1e-12

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))
_INV_SQRT_PI = float(1.0 / np.sqrt(np.pi))

LOSS_KINDS = ("log", "crps", "check", "pinball_avg", "brier", "misclassification")


@dataclass(frozen=True)
class LossSpec:
    """Selector for one of the supported proper losses.

    ``check`` requires ``tau``; ``pinball_avg`` takes a level grid
    (defaulting to the nine deciles).
    """

    kind: str
    tau: float | None = None
    levels: tuple | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.kind == "check":
            if self.tau is None:
                raise ValueError("check loss requires tau")
            object.__setattr__(self, "tau", check_probability(self.tau, "tau", open_interval=True))
        if self.kind == "pinball_avg":
            levels = self.levels if self.levels is not None else DECILE_LEVELS
            object.__setattr__(self, "levels", tuple(check_levels(levels)))


def check_score(tau: float, y: float, f: float) -> float:
    """Pinball loss: tau*(y-f) when y >= f, else (1-tau)*(f-y)."""
    tau = check_probability(tau, "tau", open_interval=True)
    y = check_finite_scalar(y, "y")
    f = check_finite_scalar(f, "f")
    if y >= f:
        return tau * (y - f)
    return (1.0 - tau) * (f - y)


def log_loss(dist: PredictiveDistribution, y) -> float:
    """Negative log density/mass at the outcome, floored at LOG_FLOOR."""
    dens = float(dist.density(y))
    return -float(np.log(max(dens, LOG_FLOOR)))


def _crps_gaussian(dist: GaussianDist, y) -> np.ndarray:
    z = (np.asarray(y, dtype=float) - dist.mu) / dist.sigma
    phi = np.exp(-0.5 * z * z) / _SQRT_2PI
    return dist.sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * phi - _INV_SQRT_PI)


def _crps_quantile_grid(dist: QuantileGridDist, y: float) -> float:
    # The integrand (F(z) - 1{z >= y})^2 vanishes outside the CDF support
    # extended to y.  Between breakpoints F is linear, so each piece
    # integrates in closed form: w*c^2 + s^2*w^3/12 around the midpoint.
    lo, hi = dist.support()
    points = np.unique(np.concatenate([[lo, hi, y], dist.values]))
    total = 0.0
    for a, b in zip(points[:-1], points[1:]):
        w = b - a
        if w <= 0:
            continue
        m = 0.5 * (a + b)
        c = float(dist.cdf(m)) - (1.0 if m >= y else 0.0)
        s = float(dist.density(m))
        total += w * c * c + s * s * w**3 / 12.0
    return total


def _crps_categorical(dist: CategoricalDist, y) -> np.ndarray:
    # Discrete CRPS over the ordered classes (the ranked probability score).
    cum = np.cumsum(dist.probs)
    k = np.arange(dist.n_classes)
    yarr = np.asarray(y, dtype=float).reshape(-1, 1)
    ind = (k.reshape(1, -1) >= yarr).astype(float)
    vals = np.sum((cum.reshape(1, -1) - ind) ** 2, axis=1)
    return vals


def crps(dist: PredictiveDistribution, y) -> float:
    """Continuous ranked probability score of the forecast at outcome y."""
    y = check_finite_scalar(y, "y")
    if isinstance(dist, GaussianDist):
        return float(_crps_gaussian(dist, y))
    if isinstance(dist, QuantileGridDist):
        return _crps_quantile_grid(dist, y)
    if isinstance(dist, CategoricalDist):
        return float(_crps_categorical(dist, np.array([y]))[0])
    raise TypeError(f"unsupported distribution type {type(dist).__name__}")


def pinball_avg(dist: PredictiveDistribution, y, levels: Sequence[float] = DECILE_LEVELS) -> float:
    """Check score against the forecast quantiles, averaged over ``levels``."""
    levels = check_levels(levels)
    y = check_finite_scalar(y, "y")
    q = np.asarray(dist.quantile(levels), dtype=float)
    return float(np.mean(np.where(y >= q, levels * (y - q), (1.0 - levels) * (q - y))))


def misclassification_loss(p: float, y: int) -> int:
    """0-1 loss of the thresholded prediction 1{p >= 0.5} against binary y."""
    p = check_probability(p, "p")
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    pred = 1 if p >= 0.5 else 0
    return int(pred != y)


# ---------------------------------------------------------------------------
# Monte-Carlo expected scores
# ---------------------------------------------------------------------------


class ExpectedScore(NamedTuple):
    mean: float
    stderr: float


def _loss_values(spec: LossSpec, dist: PredictiveDistribution, ys: np.ndarray) -> np.ndarray:
    """Vectorized per-sample losses of ``dist`` against outcomes ``ys``."""
    kind = spec.kind
    if kind == "log":
        dens = np.asarray(dist.density(ys), dtype=float)
        return -np.log(np.maximum(dens, LOG_FLOOR))
    if kind == "crps":
        if isinstance(dist, GaussianDist):
            return np.asarray(_crps_gaussian(dist, ys), dtype=float)
        if isinstance(dist, CategoricalDist):
            return _crps_categorical(dist, ys)
        return np.array([_crps_quantile_grid(dist, float(y)) for y in ys])
    if kind == "check":
        f = float(dist.quantile(spec.tau))
        return np.where(ys >= f, spec.tau * (ys - f), (1.0 - spec.tau) * (f - ys))
    if kind == "pinball_avg":
        levels = np.asarray(spec.levels)
        q = np.asarray(dist.quantile(levels), dtype=float).reshape(1, -1)
        yy = np.asarray(ys, dtype=float).reshape(-1, 1)
        lv = levels.reshape(1, -1)
        return np.mean(np.where(yy >= q, lv * (yy - q), (1.0 - lv) * (q - yy)), axis=1)
    if kind == "brier":
        if not isinstance(dist, CategoricalDist):
            raise TypeError("brier loss requires a categorical forecast")
        labels = check_class_labels(ys, dist.n_classes, "outcomes")
        return 1.0 - 2.0 * dist.probs[labels] + float(np.sum(dist.probs**2))
    if kind == "misclassification":
        if not isinstance(dist, CategoricalDist) or dist.n_classes != 2:
            raise TypeError("misclassification loss requires a binary categorical forecast")
        labels = check_class_labels(ys, 2, "outcomes")
        pred = 1 if dist.probs[1] >= 0.5 else 0
        return (labels != pred).astype(float)
    raise ValueError(f"unknown loss kind {kind!r}")


def expected_score(
    spec: LossSpec,
    forecast: PredictiveDistribution,
    truth: PredictiveDistribution,
    n_mc: int,
    rng: np.random.Generator,
) -> ExpectedScore:
    """Monte-Carlo estimate of E_{y~truth} loss(forecast, y) with its standard error."""
    if n_mc < 100:
        raise ValueError("n_mc must be >= 100")
    rng = check_rng(rng)
    ys = truth.sample(rng, n_mc)
    vals = _loss_values(spec, forecast, ys)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n_mc))
    return ExpectedScore(mean, stderr)


def paired_score_gap(
    spec: LossSpec,
    forecast: PredictiveDistribution,
    truth: PredictiveDistribution,
    n_mc: int,
    rng: np.random.Generator,
) -> ExpectedScore:
    """MC estimate of E[loss(forecast, y) - loss(truth, y)] on shared draws.

    Propriety of the loss means this gap is nonnegative in expectation;
    sharing the outcome sample between the two scores keeps the standard
    error of the difference small.
    """
    if n_mc < 100:
        raise ValueError("n_mc must be >= 100")
    rng = check_rng(rng)
    ys = truth.sample(rng, n_mc)
    diff = _loss_values(spec, forecast, ys) - _loss_values(spec, truth, ys)
    mean = float(np.mean(diff))
    stderr = float(np.std(diff, ddof=1) / np.sqrt(n_mc))
    return ExpectedScore(mean, stderr)


# ---------------------------------------------------------------------------
# Empirical calibration/refinement decomposition of the log loss
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreReport:
    """Empirical log-loss split into calibration and refinement terms.

    The identity ``mean_loss == calibration_term + refinement_term`` holds
    exactly (to float round-off) because the loss is evaluated against the
    per-group representative forecast.
    """

    mean_loss: float
    calibration_term: float
    refinement_term: float
    n: int
    bin_count: int


def decompose_binned(forecasts, outcomes, bins: int = 20) -> ScoreReport:
    """Group forecasts, then split their mean log loss into KL + entropy.

    Forecast vectors are snapped to a uniform grid of ``bins`` cells per
    coordinate purely for grouping; each group's representative forecast is
    the mean of its members (exact when members coincide).  With empirical
    outcome distribution q and representative f per group, the calibration
    term is the weighted KL(q||f) and the refinement term the weighted
    entropy H(q).
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    probs = as_prob_matrix(forecasts)
    n, n_classes = probs.shape
    labels = check_class_labels(outcomes, n_classes, "outcomes")
    check_consistent_length(probs, labels, names="forecasts/outcomes")

    keys = np.rint(probs * bins).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    n_groups = int(inverse.max()) + 1

    calibration = 0.0
    refinement = 0.0
    loss_sum = 0.0
    for g in range(n_groups):
        members = inverse == g
        n_g = int(members.sum())
        f = probs[members].mean(axis=0)
        q = np.bincount(labels[members], minlength=n_classes) / n_g
        log_f = np.log(np.maximum(f, LOG_FLOOR))
        nz = q > 0
        w = n_g / n
        calibration += w * float(np.sum(q[nz] * (np.log(q[nz]) - log_f[nz])))
        refinement += w * float(-np.sum(q[nz] * np.log(q[nz])))
        loss_sum += float(-np.sum(log_f[labels[members]]))

    return ScoreReport(
        mean_loss=loss_sum / n,
        calibration_term=calibration,
        refinement_term=refinement,
        n=n,
        bin_count=n_groups,
    )
