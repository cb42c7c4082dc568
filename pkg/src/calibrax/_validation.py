"""Input validation helpers used by estimators and metric functions."""

from __future__ import annotations

import numpy as np


def as_float_array(x, name: str = "array", *, ndim: int | None = None) -> np.ndarray:
    """Convert to a float64 ndarray and require all entries finite."""
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a 2-d float design matrix; 1-d input becomes a single column."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return as_float_array(arr, name, ndim=2)


def check_finite_scalar(x, name: str = "value") -> float:
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


def check_probability(p, name: str = "probability", *, open_interval: bool = False) -> float:
    p = check_finite_scalar(p, name)
    if open_interval:
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {p}")
    elif not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def check_levels(levels, name: str = "levels") -> np.ndarray:
    """Validate a strictly increasing vector of probability levels in (0, 1)."""
    arr = as_float_array(levels, name, ndim=1)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    if np.any(np.diff(arr) <= 0.0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


def check_consistent_length(*arrays, names: str = "inputs") -> int:
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise ValueError(f"{names} have mismatched lengths: {sorted(lengths)}")
    (n,) = lengths
    if n == 0:
        raise ValueError(f"{names} are empty")
    return n


def check_binary_labels(labels, name: str = "labels") -> np.ndarray:
    arr = np.asarray(labels)
    vals = np.unique(arr)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"{name} must be binary 0/1, got values {vals}")
    return arr.astype(int)


def check_class_labels(labels, n_classes: int, name: str = "labels") -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(np.asarray(arr, dtype=float))
        if not np.allclose(arr, rounded):
            raise ValueError(f"{name} must be integer class indices")
        arr = rounded.astype(int)
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise ValueError(f"{name} must lie in [0, {n_classes})")
    return arr.astype(int)


def as_prob_matrix(forecasts, name: str = "forecasts") -> np.ndarray:
    """Coerce categorical forecasts to an (n, K) row-stochastic matrix.

    Accepts an (n, K) array, a 1-d array of P(class 1) for binary problems,
    or a sequence of objects exposing a ``probs`` attribute.
    """
    if hasattr(forecasts, "__len__") and len(forecasts) and hasattr(forecasts[0], "probs"):
        mat = np.stack([np.asarray(f.probs, dtype=float) for f in forecasts])
    else:
        mat = np.asarray(forecasts, dtype=float)
        if mat.ndim == 1:
            mat = np.column_stack([1.0 - mat, mat])
    if mat.ndim != 2 or mat.shape[1] < 2:
        raise ValueError(f"{name} must be an (n, K>=2) probability matrix")
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(mat < -1e-12) or np.any(mat > 1.0 + 1e-12):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    sums = mat.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError(f"{name} rows must sum to 1")
    return np.clip(mat, 0.0, 1.0)


def check_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("expected a numpy.random.Generator; pass np.random.default_rng(seed)")
