"""Predictive distribution types and their featurizations.

Three concrete forecast representations are provided, all immutable and
safe for concurrent reads:

* :class:`GaussianDist` -- location/scale Gaussian, the natural output of
  regression models with an exponential-family head.
* :class:`CategoricalDist` -- class-membership probabilities over K >= 2
  ordered classes.
* :class:`QuantileGridDist` -- a distribution specified by its quantile
  values at a strictly increasing grid of probability levels; the CDF is
  the piecewise-linear interpolant through ``(value_i, level_i)`` with
  linear tails (boundary-segment slope) clamped to [0, 1].

Every type supports ``cdf``, ``quantile``, ``density`` and inverse-CDF
``sample``; sampling takes an explicit generator so the caller owns all
mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri

from ._validation import (
    as_float_array,
    check_finite_scalar,
    check_levels,
    check_probability,
    check_rng,
)

# Nine deciles: the default featurization grid for quantile recalibration.
DECILE_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

# Finite stand-in for the infinite density at a CDF jump; keeps log-losses
# finite on degenerate quantile grids.
DENSITY_CAP = 1e12

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _scalar_or_array(value, scalar_input: bool):
    if scalar_input:
        return float(value)
    return value


@dataclass(frozen=True)
class GaussianDist:
    """Gaussian forecast with mean ``mu`` and standard deviation ``sigma``."""

    mu: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mu", check_finite_scalar(self.mu, "mu"))
        object.__setattr__(self, "sigma", check_finite_scalar(self.sigma, "sigma"))
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def cdf(self, y):
        scalar = np.isscalar(y) or np.ndim(y) == 0
        arr = as_float_array(y, "y", ndim=None)
        return _scalar_or_array(ndtr((arr - self.mu) / self.sigma), scalar)

    def quantile(self, tau):
        scalar = np.isscalar(tau) or np.ndim(tau) == 0
        arr = as_float_array(tau, "tau")
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("tau must lie in (0, 1)")
        return _scalar_or_array(self.mu + self.sigma * ndtri(arr), scalar)

    def density(self, y):
        scalar = np.isscalar(y) or np.ndim(y) == 0
        arr = as_float_array(y, "y")
        z = (arr - self.mu) / self.sigma
        return _scalar_or_array(np.exp(-0.5 * z * z) / (self.sigma * _SQRT_2PI), scalar)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        rng = check_rng(rng)
        if n < 1:
            raise ValueError("n must be >= 1")
        u = np.clip(rng.random(n), 1e-16, 1.0 - 1e-16)
        return self.mu + self.sigma * ndtri(u)


@dataclass(frozen=True)
class CategoricalDist:
    """Categorical forecast over ordered classes 0..K-1 (K >= 2)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = as_float_array(self.probs, "probs", ndim=1)
        if probs.size < 2:
            raise ValueError("a categorical forecast needs K >= 2 classes")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError("probs entries must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probs must sum to 1 within 1e-12, got {probs.sum()!r}")
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "_cum", _frozen(np.cumsum(probs)))

    @property
    def n_classes(self) -> int:
        return self.probs.size

    def cdf(self, y):
        """P(class <= y); a right-continuous step function over the reals."""
        scalar = np.isscalar(y) or np.ndim(y) == 0
        arr = as_float_array(y, "y")
        idx = np.floor(arr).astype(int)
        out = np.where(
            idx < 0,
            0.0,
            self._cum[np.clip(idx, 0, self.n_classes - 1)],
        )
        out = np.where(idx >= self.n_classes - 1, 1.0, out)
        return _scalar_or_array(out, scalar)

    def quantile(self, tau):
        """Smallest class k with CDF(k) >= tau (the generalized inverse)."""
        scalar = np.isscalar(tau) or np.ndim(tau) == 0
        arr = as_float_array(tau, "tau")
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("tau must lie in (0, 1)")
        idx = np.searchsorted(self._cum, arr, side="left")
        out = np.clip(idx, 0, self.n_classes - 1).astype(float)
        return _scalar_or_array(out, scalar)

    def density(self, y):
        """Probability mass of an integer class index."""
        scalar = np.isscalar(y) or np.ndim(y) == 0
        arr = as_float_array(y, "y")
        rounded = np.rint(arr)
        if not np.allclose(arr, rounded, atol=1e-9):
            raise ValueError("categorical outcomes must be integer class indices")
        idx = rounded.astype(int)
        if np.any(idx < 0) or np.any(idx >= self.n_classes):
            raise ValueError(f"class index out of range [0, {self.n_classes})")
        return _scalar_or_array(self.probs[idx], scalar)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        rng = check_rng(rng)
        if n < 1:
            raise ValueError("n must be >= 1")
        u = rng.random(n)
        idx = np.searchsorted(self._cum, u, side="left")
        return np.clip(idx, 0, self.n_classes - 1).astype(float)


@dataclass(frozen=True)
class QuantileGridDist:
    """Distribution given by quantile values at fixed probability levels.

    ``levels`` must be strictly increasing inside (0, 1) and ``values``
    nondecreasing, both of length d >= 2.  Between grid points the CDF is
    linear; beyond the grid it continues with the boundary segment's slope
    until clamped to 0 or 1.  Repeated values produce CDF jumps whose
    density is reported as :data:`DENSITY_CAP`.
    """

    levels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        levels = check_levels(self.levels, "levels")
        values = as_float_array(self.values, "values", ndim=1)
        if levels.size != values.size:
            raise ValueError("levels and values must have equal length")
        if levels.size < 2:
            raise ValueError("a quantile grid needs at least 2 points")
        if np.any(np.diff(values) < 0.0):
            raise ValueError("values must be nondecreasing")
        object.__setattr__(self, "levels", _frozen(levels))
        object.__setattr__(self, "values", _frozen(values))

    # -- tail geometry ------------------------------------------------

    def _tail_slopes(self) -> tuple[float, float]:
        """CDF slopes of the first and last segments (inf on a jump)."""
        dv = np.diff(self.values)
        dl = np.diff(self.levels)
        lo = dl[0] / dv[0] if dv[0] > 0 else np.inf
        hi = dl[-1] / dv[-1] if dv[-1] > 0 else np.inf
        return float(lo), float(hi)

    def support(self) -> tuple[float, float]:
        """Interval outside which the CDF is exactly 0 or 1."""
        s_lo, s_hi = self._tail_slopes()
        lo = self.values[0] if not np.isfinite(s_lo) else self.values[0] - self.levels[0] / s_lo
        hi = self.values[-1] if not np.isfinite(s_hi) else self.values[-1] + (1.0 - self.levels[-1]) / s_hi
        return float(lo), float(hi)

    # -- distribution queries ------------------------------------------

    def cdf(self, y):
        scalar = np.isscalar(y) or np.ndim(y) == 0
        arr = np.atleast_1d(as_float_array(y, "y"))
        v, l = self.values, self.levels
        s_lo, s_hi = self._tail_slopes()
        out = np.empty_like(arr)

        idx = np.searchsorted(v, arr, side="right")
        below = idx == 0
        above = idx == v.size
        mid = ~(below | above)

        if np.any(below):
            if np.isfinite(s_lo):
                out[below] = np.clip(l[0] + s_lo * (arr[below] - v[0]), 0.0, l[0])
            else:
                out[below] = 0.0
        if np.any(above):
            if np.isfinite(s_hi):
                out[above] = np.clip(l[-1] + s_hi * (arr[above] - v[-1]), l[-1], 1.0)
            else:
                # jump at the top value: right-continuous, so CDF is 1 above
                # it and level[-1] exactly at it
                out[above] = np.where(arr[above] > v[-1], 1.0, l[-1])
        if np.any(mid):
            left = idx[mid] - 1
            width = v[left + 1] - v[left]  # > 0: arr is strictly between duplicates
            frac = (arr[mid] - v[left]) / width
            out[mid] = l[left] + frac * (l[left + 1] - l[left])
        result = out if not scalar else out[0]
        return _scalar_or_array(result, scalar)

    def quantile(self, tau):
        scalar = np.isscalar(tau) or np.ndim(tau) == 0
        arr = np.atleast_1d(as_float_array(tau, "tau"))
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError("tau must lie in (0, 1)")
        v, l = self.values, self.levels
        s_lo, s_hi = self._tail_slopes()
        out = np.empty_like(arr)

        below = arr <= l[0]
        above = arr >= l[-1]
        mid = ~(below | above)

        if np.any(below):
            if np.isfinite(s_lo):
                out[below] = v[0] + (arr[below] - l[0]) / s_lo
            else:
                out[below] = v[0]
        if np.any(above):
            if np.isfinite(s_hi):
                out[above] = v[-1] + (arr[above] - l[-1]) / s_hi
            else:
                out[above] = v[-1]
        if np.any(mid):
            j = np.searchsorted(l, arr[mid], side="left")
            left = j - 1
            frac = (arr[mid] - l[left]) / (l[j] - l[left])
            out[mid] = v[left] + frac * (v[j] - v[left])
        result = out if not scalar else out[0]
        return _scalar_or_array(result, scalar)

    def density(self, y):
        scalar = np.isscalar(y) or np.ndim(y) == 0
        arr = np.atleast_1d(as_float_array(y, "y"))
        v, l = self.values, self.levels
        s_lo, s_hi = self._tail_slopes()
        lo_supp, hi_supp = self.support()
        out = np.zeros_like(arr)

        sl = np.searchsorted(v, arr, side="left")
        sr = np.searchsorted(v, arr, side="right")
        on_jump = (sr - sl) >= 2  # y sits on a repeated grid value
        out[on_jump] = DENSITY_CAP

        rest = ~on_jump
        idx = sr[rest]
        yr = arr[rest]
        vals = np.zeros_like(yr)

        below = idx == 0
        above = idx == v.size
        mid = ~(below | above)
        if np.any(below):
            vals[below] = np.where(
                yr[below] >= lo_supp, s_lo if np.isfinite(s_lo) else 0.0, 0.0
            )
        if np.any(above):
            vals[above] = np.where(
                yr[above] <= hi_supp, s_hi if np.isfinite(s_hi) else 0.0, 0.0
            )
        if np.any(mid):
            left = idx[mid] - 1
            width = v[left + 1] - v[left]
            dl = l[left + 1] - l[left]
            vals[mid] = np.where(width > 0, dl / np.where(width > 0, width, 1.0), DENSITY_CAP)
        out[rest] = vals
        result = out if not scalar else out[0]
        return _scalar_or_array(result, scalar)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        rng = check_rng(rng)
        if n < 1:
            raise ValueError("n must be >= 1")
        u = np.clip(rng.random(n), 1e-16, 1.0 - 1e-16)
        return np.asarray(self.quantile(u))


PredictiveDistribution = Union[GaussianDist, CategoricalDist, QuantileGridDist]

FEATURIZATION_KINDS = ("gaussian-params", "quantile-grid", "class-probs")


@dataclass(frozen=True)
class Featurization:
    """Parameter vector handed to a recalibrator, tagged with its meaning."""

    params: np.ndarray
    kind: str = "quantile-grid"

    def __post_init__(self):
        params = as_float_array(self.params, "params", ndim=1)
        if self.kind not in FEATURIZATION_KINDS:
            raise ValueError(f"kind must be one of {FEATURIZATION_KINDS}, got {self.kind!r}")
        if self.kind == "gaussian-params" and params.size != 2:
            raise ValueError("gaussian-params featurization must have exactly 2 entries")
        if self.kind == "class-probs" and params.size < 2:
            raise ValueError("class-probs featurization needs K >= 2 entries")
        if params.size == 0:
            raise ValueError("params must be non-empty")
        object.__setattr__(self, "params", _frozen(params))

    def __len__(self) -> int:
        return self.params.size


def featurize(dist: PredictiveDistribution, levels: Sequence[float] = DECILE_LEVELS) -> Featurization:
    """Represent ``dist`` by its quantiles at ``levels``.

    This is the black-box featurization used to feed arbitrary forecasts
    into a quantile recalibrator.
    """
    levels = check_levels(levels)
    params = np.asarray(dist.quantile(levels), dtype=float)
    return Featurization(params=params, kind="quantile-grid")


def featurization_matrix(items, name: str = "featurizations") -> np.ndarray:
    """Stack featurizations (or raw parameter rows) into an (n, d) matrix."""
    if hasattr(items, "__len__") and len(items) and isinstance(items[0], Featurization):
        kinds = {f.kind for f in items}
        if len(kinds) != 1:
            raise ValueError(f"{name} mix featurization kinds: {sorted(kinds)}")
        mat = np.stack([f.params for f in items])
    else:
        mat = np.asarray(items, dtype=float)
        if mat.ndim == 1:
            mat = mat.reshape(-1, 1)
    if mat.ndim != 2:
        raise ValueError(f"{name} must stack into an (n, d) matrix")
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} contain non-finite values")
    return mat
