"""Online recalibration on a probability grid with internal-regret ledgers.

A :class:`CalibratedForecaster` plays points ``i/N`` of the grid
``{0, 1/N, ..., 1}`` by regret matching over cumulative swap regrets
(squared-loss increments): each round it samples from the stationary
distribution of the row-stochastic matrix built from the positive-part
regret matrix.  :class:`BucketedRecalibrator` routes a raw forecast
stream into ``M`` interval buckets, each owning its own calibrated
sub-forecaster, and logs every step for the regret/calibration ledgers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._validation import check_rng
from .exceptions import ProtocolError

Loss = Callable[[np.ndarray, np.ndarray], np.ndarray]


def l1_loss(y, p):
    """Absolute-difference loss |y - p| (convex, not proper)."""
    return np.abs(np.asarray(y, dtype=float) - np.asarray(p, dtype=float))


def l2_loss(y, p):
    """Squared loss (y - p)^2, the proper loss driving the forecaster."""
    d = np.asarray(y, dtype=float) - np.asarray(p, dtype=float)
    return d * d


def misclassification(y, p):
    """Expected 0-1 loss of the thresholded prediction 1{p >= 0.5}.

    With a fractional first argument this is the outcome-frequency form:
    y when predicting below 0.5, else 1 - y.
    """
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    return np.where(p >= 0.5, 1.0 - y, y)


class CalibratedForecaster:
    """Binary-outcome forecaster on the grid {0,...,N}/N via regret matching.

    ``predict`` samples a grid point from the stationary distribution of
    the positive-part swap-regret matrix (lazy power iteration, warm
    started; uniform fallback after 10000 sweeps); ``update`` adds the
    realized squared-loss regret row for the point just played.
    Randomization is intrinsic: all draws flow through the supplied
    generator, so runs are reproducible given seed and history.
    """

    MAX_POWER_ITERS = 10_000
    POWER_TOL = 1e-10

    def __init__(self, n_grid: int, rng: np.random.Generator):
        if n_grid < 1:
            raise ValueError("n_grid must be >= 1")
        self.n_grid = int(n_grid)
        self.rng = check_rng(rng)
        n_actions = self.n_grid + 1
        self.grid = np.arange(n_actions) / self.n_grid
        self.swap_regret = np.zeros((n_actions, n_actions))
        self.play_counts = np.zeros(n_actions, dtype=np.int64)
        self.outcome_sums = np.zeros(n_actions)
        self.fallback_count = 0
        self._mu = np.full(n_actions, 1.0 / n_actions)
        self._pending: int | None = None
        self._dirty = True

    def _stationary(self) -> np.ndarray:
        positive = np.maximum(self.swap_regret, 0.0)
        np.fill_diagonal(positive, 0.0)
        row_sums = positive.sum(axis=1)
        active = row_sums > 0
        transition = np.where(
            active[:, None], positive / np.where(row_sums[:, None] > 0, row_sums[:, None], 1.0), 0.0
        )
        idx = np.flatnonzero(~active)
        transition[idx, idx] = 1.0
        # lazy chain (same stationary set, aperiodic) with warm start
        mu = self._mu
        for _ in range(self.MAX_POWER_ITERS):
            nxt = 0.5 * (mu + mu @ transition)
            if np.abs(nxt - mu).sum() < self.POWER_TOL:
                mu = nxt
                break
            mu = nxt
        else:
            self.fallback_count += 1
            mu = np.full_like(mu, 1.0 / mu.size)
        mu = np.maximum(mu, 0.0)
        mu = mu / mu.sum()
        return mu

    def predict(self) -> float:
        if self._pending is not None:
            raise ProtocolError("predict called twice without an update in between")
        if self._dirty:
            self._mu = self._stationary()
            self._dirty = False
        i = int(self.rng.choice(self._mu.size, p=self._mu))
        self._pending = i
        return float(self.grid[i])

    def update(self, y: int) -> None:
        if self._pending is None:
            raise ProtocolError("update called without a pending prediction")
        if y not in (0, 1):
            raise ValueError("y must be 0 or 1")
        i = self._pending
        played_loss = (self.grid[i] - y) ** 2
        self.swap_regret[i, :] += played_loss - (self.grid - y) ** 2
        self.play_counts[i] += 1
        self.outcome_sums[i] += y
        self._pending = None
        self._dirty = True

    def outcome_frequencies(self) -> np.ndarray:
        """Empirical outcome frequency per grid point (NaN where unplayed)."""
        with np.errstate(invalid="ignore"):
            return np.where(self.play_counts > 0, self.outcome_sums / np.maximum(self.play_counts, 1), np.nan)


def bucket_index(p_raw: float, n_buckets: int) -> int:
    """Index of the half-open interval [(j-1)/M, j/M) holding p_raw; the
    top bucket is closed at 1.0."""
    if not 0.0 <= p_raw <= 1.0:
        raise ValueError("p_raw must lie in [0, 1]")
    return min(int(p_raw * n_buckets), n_buckets - 1)


@dataclass(frozen=True)
class RunLedger:
    """Immutable log of one online run; every statistic derives from it."""

    p_raw: np.ndarray
    bucket: np.ndarray
    p_out: np.ndarray
    y: np.ndarray
    n_grid: int
    n_buckets: int

    @property
    def n_steps(self) -> int:
        return len(self.y)


class BucketedRecalibrator:
    """Routes raw forecasts into per-interval calibrated sub-forecasters."""

    def __init__(self, n_buckets: int, n_grid: int, seed: int = 0):
        if n_buckets < 1:
            raise ValueError("n_buckets must be >= 1")
        self.n_buckets = int(n_buckets)
        self.n_grid = int(n_grid)
        self.seed = int(seed)
        streams = np.random.SeedSequence(seed).spawn(self.n_buckets)
        self.sub = [CalibratedForecaster(n_grid, np.random.default_rng(s)) for s in streams]
        self.route_counts = np.zeros(self.n_buckets, dtype=np.int64)
        self._p_raw: list[float] = []
        self._bucket: list[int] = []
        self._p_out: list[float] = []
        self._y: list[int] = []

    def step(self, p_raw: float, y: int) -> float:
        j = bucket_index(float(p_raw), self.n_buckets)
        p_out = self.sub[j].predict()
        self.sub[j].update(y)
        self.route_counts[j] += 1
        self._p_raw.append(float(p_raw))
        self._bucket.append(j)
        self._p_out.append(p_out)
        self._y.append(int(y))
        return p_out

    def ledger(self) -> RunLedger:
        return RunLedger(
            p_raw=np.array(self._p_raw),
            bucket=np.array(self._bucket, dtype=np.int64),
            p_out=np.array(self._p_out),
            y=np.array(self._y, dtype=np.int64),
            n_grid=self.n_grid,
            n_buckets=self.n_buckets,
        )


# ---------------------------------------------------------------------------
# Ledger statistics
# ---------------------------------------------------------------------------


def _grid_counts(ledger: RunLedger, mask: np.ndarray | None = None):
    """Play counts and outcome frequencies per grid point over the ledger."""
    n_actions = ledger.n_grid + 1
    idx = np.rint(ledger.p_out * ledger.n_grid).astype(int)
    if mask is not None:
        idx = idx[mask]
        ys = ledger.y[mask]
    else:
        ys = ledger.y
    counts = np.bincount(idx, minlength=n_actions).astype(float)
    sums = np.bincount(idx, weights=ys, minlength=n_actions)
    with np.errstate(invalid="ignore"):
        freqs = np.where(counts > 0, sums / np.maximum(counts, 1.0), 0.0)
    return counts, freqs


def calibration_error(ledger: RunLedger, loss: Loss = l1_loss, mask: np.ndarray | None = None) -> float:
    """Play-weighted loss between outcome frequencies and grid predictions.

    With the default absolute loss this is the classical calibration
    score; any convex loss may be plugged in.
    """
    if ledger.n_steps == 0:
        raise ValueError("ledger is empty")
    counts, freqs = _grid_counts(ledger, mask)
    total = counts.sum()
    if total == 0:
        return 0.0
    grid = np.arange(ledger.n_grid + 1) / ledger.n_grid
    played = counts > 0
    return float(np.sum(loss(freqs[played], grid[played]) * counts[played] / total))


def internal_regret(ledger: RunLedger, loss: Loss = l2_loss) -> float:
    """Largest cumulative gain from retroactively swapping one grid point
    for another, measured by ``loss``.

    Computed exactly from the per-point outcome counts: the swap gain
    from i to j is T(i,1)*(loss(1,i)-loss(1,j)) + T(i,0)*(loss(0,i)-loss(0,j)).
    """
    if ledger.n_steps == 0:
        raise ValueError("ledger is empty")
    counts, freqs = _grid_counts(ledger)
    ones = counts * freqs
    zeros = counts - ones
    grid = np.arange(ledger.n_grid + 1) / ledger.n_grid
    loss_one = loss(np.ones_like(grid), grid)
    loss_zero = loss(np.zeros_like(grid), grid)
    # gain[i, j] of switching every play of i to j
    gain = ones[:, None] * (loss_one[:, None] - loss_one[None, :]) + zeros[:, None] * (
        loss_zero[:, None] - loss_zero[None, :]
    )
    return float(gain.max())


def external_regret_vs_raw(ledger: RunLedger, loss: Loss = misclassification) -> float:
    """Per-step loss of the recalibrated stream minus the raw stream's."""
    if ledger.n_steps == 0:
        raise ValueError("ledger is empty")
    out = float(np.mean(loss(ledger.y.astype(float), ledger.p_out)))
    raw = float(np.mean(loss(ledger.y.astype(float), ledger.p_raw)))
    return out - raw


def merged_calibration_check(ledger: RunLedger, loss: Loss = l2_loss) -> dict:
    """Merged calibration error vs the play-weighted per-bucket sum.

    For convex losses the merged error never exceeds the weighted sum of
    the per-bucket errors (the merged frequencies are play-weighted means
    of the bucket frequencies).
    """
    merged = calibration_error(ledger, loss)
    total = ledger.n_steps
    weighted = 0.0
    for j in range(ledger.n_buckets):
        mask = ledger.bucket == j
        t_j = int(mask.sum())
        if t_j == 0:
            continue
        weighted += (t_j / total) * calibration_error(ledger, loss, mask=mask)
    return {"merged": merged, "weighted_sum": weighted}


# ---------------------------------------------------------------------------
# Trace export
# ---------------------------------------------------------------------------


def write_trace_csv(ledger: RunLedger, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "p_raw", "bucket", "p_out", "y"])
        for t in range(ledger.n_steps):
            writer.writerow(
                [t, repr(float(ledger.p_raw[t])), int(ledger.bucket[t]), repr(float(ledger.p_out[t])), int(ledger.y[t])]
            )


def ledger_summary(ledger: RunLedger) -> dict:
    check = merged_calibration_check(ledger, l2_loss)
    return {
        "n_steps": ledger.n_steps,
        "n_grid": ledger.n_grid,
        "n_buckets": ledger.n_buckets,
        "calibration_l1": calibration_error(ledger, l1_loss),
        "calibration_l2": calibration_error(ledger, l2_loss),
        "internal_regret_l2": internal_regret(ledger, l2_loss),
        "internal_regret_misclassification": internal_regret(ledger, misclassification),
        "external_regret_misclassification": external_regret_vs_raw(ledger, misclassification),
        "merged_calibration_l2": check["merged"],
        "bucket_weighted_calibration_l2": check["weighted_sum"],
    }


def write_ledger_json(ledger: RunLedger, path) -> None:
    Path(path).write_text(json.dumps(ledger_summary(ledger), indent=1, sort_keys=True), encoding="utf-8")
