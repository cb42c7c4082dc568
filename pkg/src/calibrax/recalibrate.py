"""Recalibrators: post-hoc maps fitted over a base model's forecasts.

The regression-side recalibrator regresses outcome quantiles on the
featurized base forecast by minimizing the pinball loss at sampled
levels; the classification-side recalibrators map class probabilities to
class probabilities under the log loss.  A composed pipeline helper fits
a base model on one split and the recalibrator on a disjoint split.
"""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from sklearn.base import BaseEstimator, clone

from ._validation import (
    as_float_array,
    as_matrix,
    as_prob_matrix,
    check_binary_labels,
    check_class_labels,
    check_consistent_length,
    check_levels,
)
from .distributions import (
    DECILE_LEVELS,
    CategoricalDist,
    Featurization,
    QuantileGridDist,
    featurization_matrix,
    featurize,
)
from .exceptions import DataError, TrainingError
from .models import TrainConfig, _Standardizer, epoch_learning_rate
from .nnet import DenseSkipNet, MomentumSGD, sigmoid, softmax


# ---------------------------------------------------------------------------
# Neural quantile recalibrator
# ---------------------------------------------------------------------------


class QuantileRecalibrator(BaseEstimator):
    """Neural regression of outcome quantiles on forecast featurizations.

    The network takes the level tau concatenated with the featurization
    (inputs are standardized internally) and returns the estimated
    tau-quantile of the outcome.  Training minimizes the pinball loss over
    levels drawn uniformly at random, ``tau_samples_per_example`` per
    example per epoch, with the featurization levels themselves added once
    per epoch for stability.
    """

    def __init__(
        self,
        input_levels: Sequence[float] = DECILE_LEVELS,
        hidden: tuple[int, ...] = (20, 20),
        skip: bool = True,
        step_size: float = 0.08,
        momentum: float = 0.9,
        epochs: int = 30,
        batch_size: int = 1024,
        tau_samples_per_example: int = 8,
        seed: int = 0,
    ):
        self.input_levels = input_levels
        self.hidden = hidden
        self.skip = skip
        self.step_size = step_size
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.tau_samples_per_example = tau_samples_per_example
        self.seed = seed

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(
            step_size=self.step_size,
            momentum=self.momentum,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            tau_samples_per_example=self.tau_samples_per_example,
        )

    def _rows(self, phi_std: np.ndarray, taus: np.ndarray) -> np.ndarray:
        # one network row per (example, tau) pair; tau centered to [-1, 1]
        n, k = taus.shape
        rep = np.repeat(phi_std, k, axis=0)
        tcol = (2.0 * taus - 1.0).reshape(-1, 1)
        return np.concatenate([tcol, rep], axis=1)

    def _pinball_grad(self, pred: np.ndarray, target: np.ndarray, taus: np.ndarray):
        under = target >= pred
        loss = np.where(under, taus * (target - pred), (1.0 - taus) * (pred - target))
        grad = np.where(under, -taus, 1.0 - taus)
        return float(np.mean(loss)), grad / len(pred)

    def _eval_loss(self, net: DenseSkipNet, rows: np.ndarray, target: np.ndarray, taus: np.ndarray) -> float:
        pred = net.forward(rows)[:, 0]
        loss, _ = self._pinball_grad(pred, target, taus)
        return loss

    def fit(self, phis, ys):
        self._levels = check_levels(self.input_levels, "input_levels")
        P = featurization_matrix(phis)
        ys = as_float_array(ys, "ys", ndim=1)
        n = check_consistent_length(P, ys, names="phis/ys")
        if n < 50:
            raise DataError("quantile recalibration needs at least 50 examples")
        if P.shape[1] != self._levels.size:
            raise ValueError(
                f"featurization dimension {P.shape[1]} does not match "
                f"{self._levels.size} input levels"
            )
        cfg = self.train_config
        rng = np.random.default_rng(cfg.seed)
        self._phi_std = _Standardizer(P)
        self._y_std = _Standardizer(ys.reshape(-1, 1))
        phi_std = self._phi_std.transform(P)
        y_std = self._y_std.transform(ys.reshape(-1, 1)).ravel()

        net = DenseSkipNet(1 + P.shape[1], tuple(self.hidden), 1, rng, skip=self.skip)
        opt = MomentumSGD(net.n_params, cfg.step_size, cfg.momentum)
        params = net.get_flat_params()
        k = cfg.tau_samples_per_example
        fixed = np.asarray(self._levels)
        # fixed-level evaluation rows, reused for the per-epoch loss curve
        eval_taus = np.broadcast_to(fixed, (n, fixed.size))
        eval_rows = self._rows(phi_std, eval_taus)
        eval_target = np.repeat(y_std, fixed.size)
        eval_taus = eval_taus.ravel()
        # Polyak-averaged iterates: the averaged network is what gets
        # evaluated, kept, and returned; averaging removes the step noise
        # that would otherwise wiggle the epoch loss curve
        steps_per_epoch = max(1, int(np.ceil(n / cfg.batch_size)))
        ema_decay = max(0.9, 1.0 - 1.0 / steps_per_epoch)
        averaged = params.copy()
        curve = []
        best = (np.inf, averaged.copy())
        for epoch in range(cfg.epochs):
            lr = epoch_learning_rate(cfg.step_size, epoch, cfg.epochs)
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                taus = rng.random((idx.size, k))
                taus = np.concatenate([taus, np.broadcast_to(fixed, (idx.size, fixed.size))], axis=1)
                rows = self._rows(phi_std[idx], taus)
                net.set_flat_params(params)
                pred = net.forward(rows)[:, 0]
                target = np.repeat(y_std[idx], taus.shape[1])
                loss, grad = self._pinball_grad(pred, target, taus.ravel())
                if not np.isfinite(loss):
                    raise TrainingError(f"pinball training diverged at epoch {epoch}")
                grads = net.backward(grad.reshape(-1, 1))
                params = opt.step(params, grads, lr)
                averaged = ema_decay * averaged + (1.0 - ema_decay) * params
            net.set_flat_params(averaged)
            full = self._eval_loss(net, eval_rows, eval_target, eval_taus)
            if not np.isfinite(full):
                raise TrainingError(f"pinball training diverged at epoch {epoch}")
            curve.append(full)
            if full < best[0]:
                best = (full, averaged.copy())
        net.set_flat_params(best[1])
        self.net_ = net
        self.loss_curve_ = curve
        return self

    def predict_quantiles(self, phis, levels: Sequence[float]) -> np.ndarray:
        """Raw network quantiles at ``levels``, one row per featurization."""
        levels = check_levels(levels)
        P = featurization_matrix(phis)
        phi_std = self._phi_std.transform(P)
        taus = np.broadcast_to(np.asarray(levels), (len(P), levels.size))
        rows = self._rows(phi_std, taus)
        out = self.net_.forward(rows)[:, 0].reshape(len(P), levels.size)
        return out * self._y_std.scale[0] + self._y_std.mean[0]

    def transform(self, phis, out_levels: Sequence[float] = DECILE_LEVELS) -> list[QuantileGridDist]:
        """Recalibrated forecasts at ``out_levels``.

        Network outputs are sorted per example (rearrangement
        monotonization), which never increases the pinball loss.
        """
        out_levels = check_levels(out_levels)
        values = np.sort(self.predict_quantiles(phis, out_levels), axis=1)
        return [QuantileGridDist(out_levels, row) for row in values]

    def to_state(self) -> dict:
        return {
            "net": self.net_.to_state(),
            "phi_std": self._phi_std.to_state(),
            "y_std": self._y_std.to_state(),
            "input_levels": list(map(float, self._levels)),
        }

    @classmethod
    def from_state(cls, state: dict) -> "QuantileRecalibrator":
        model = cls(input_levels=tuple(state["input_levels"]))
        model._levels = np.asarray(state["input_levels"], dtype=float)
        model.net_ = DenseSkipNet.from_state(state["net"])
        model._phi_std = _Standardizer.from_state(state["phi_std"])
        model._y_std = _Standardizer.from_state(state["y_std"])
        return model


# ---------------------------------------------------------------------------
# Kernel recalibrator for binary scores
# ---------------------------------------------------------------------------


class KdeRecalibrator(BaseEstimator):
    """Nadaraya-Watson estimate of P(Y=1 | score) with a Gaussian kernel.

    The default bandwidth follows the normal-reference rule
    ``1.06 * std(scores) * T**(-1/5)``; outputs are clipped to
    ``[eps, 1-eps]`` with ``eps = 1/(2T)``.  Constant scores fall back to
    a constant base-rate predictor.
    """

    _WINDOW_RADII = 8.0  # kernel support cutoff, in bandwidths

    def __init__(self, bandwidth: float | None = None):
        self.bandwidth = bandwidth

    def fit(self, scores, labels):
        scores = as_float_array(scores, "scores", ndim=1)
        labels = check_binary_labels(labels)
        t = check_consistent_length(scores, labels, names="scores/labels")
        if t < 20:
            raise DataError("kernel recalibration needs at least 20 points")
        if np.any(scores < 0.0) or np.any(scores > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        self.eps_ = 1.0 / (2.0 * t)
        self.base_rate_ = float(labels.mean())
        spread = float(np.std(scores, ddof=1))
        if self.bandwidth is not None:
            if self.bandwidth <= 0:
                raise ValueError("bandwidth must be positive")
            self.bandwidth_ = float(self.bandwidth)
        else:
            self.bandwidth_ = 1.06 * spread * t ** (-0.2)
        self.degenerate_ = spread == 0.0 or self.bandwidth_ <= 0.0
        order = np.argsort(scores, kind="stable")
        self._xs = scores[order]
        self._ys = labels[order].astype(float)
        return self

    def predict(self, scores) -> np.ndarray:
        scores = np.atleast_1d(as_float_array(scores, "scores"))
        if self.degenerate_:
            return np.full(scores.shape, float(np.clip(self.base_rate_, self.eps_, 1 - self.eps_)))
        h = self.bandwidth_
        radius = self._WINDOW_RADII * h
        out = np.empty_like(scores)
        order = np.argsort(scores, kind="stable")
        sorted_q = scores[order]
        block = 512
        for start in range(0, sorted_q.size, block):
            q = sorted_q[start : start + block]
            lo = np.searchsorted(self._xs, q[0] - radius, side="left")
            hi = np.searchsorted(self._xs, q[-1] + radius, side="right")
            if hi <= lo:
                out[order[start : start + block]] = self.base_rate_
                continue
            xs = self._xs[lo:hi]
            ys = self._ys[lo:hi]
            w = np.exp(-0.5 * ((q[:, None] - xs[None, :]) / h) ** 2)
            denom = w.sum(axis=1)
            est = np.where(denom > 0, (w @ ys) / np.where(denom > 0, denom, 1.0), self.base_rate_)
            out[order[start : start + block]] = est
        return np.clip(out, self.eps_, 1.0 - self.eps_)

    def predict_dist(self, scores) -> list[CategoricalDist]:
        p = self.predict(scores)
        return [CategoricalDist([1.0 - pi, pi]) for pi in p]

    def to_state(self) -> dict:
        return {
            "bandwidth": self.bandwidth_,
            "eps": self.eps_,
            "base_rate": self.base_rate_,
            "degenerate": bool(self.degenerate_),
            "scores": self._xs.tolist(),
            "labels": self._ys.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "KdeRecalibrator":
        model = cls(bandwidth=state["bandwidth"])
        model.bandwidth_ = float(state["bandwidth"])
        model.eps_ = float(state["eps"])
        model.base_rate_ = float(state["base_rate"])
        model.degenerate_ = bool(state["degenerate"])
        model._xs = np.asarray(state["scores"], dtype=float)
        model._ys = np.asarray(state["labels"], dtype=float)
        return model


# ---------------------------------------------------------------------------
# Simplex-to-simplex neural recalibrator
# ---------------------------------------------------------------------------


class SimplexRecalibrator(BaseEstimator):
    """Neural map from class probabilities to class probabilities.

    Inputs enter as log probabilities, and the output layer starts as the
    identity on that block, so the untrained network reproduces its input
    exactly; training can only improve the log loss from there.
    """

    _LOG_CLIP = 1e-10

    def __init__(
        self,
        hidden: tuple[int, ...] = (20, 20),
        skip: bool = True,
        step_size: float = 0.02,
        momentum: float = 0.9,
        epochs: int = 40,
        batch_size: int = 256,
        seed: int = 0,
    ):
        self.hidden = hidden
        self.skip = skip
        self.step_size = step_size
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _features(self, probs: np.ndarray) -> np.ndarray:
        return np.log(np.clip(probs, self._LOG_CLIP, None))

    def _ce_and_grad(self, net: DenseSkipNet, xs: np.ndarray, labels: np.ndarray):
        logits = net.forward(xs)
        probs = softmax(logits)
        n = len(labels)
        picked = np.maximum(probs[np.arange(n), labels], 1e-300)
        loss = float(np.mean(-np.log(picked)))
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        return loss, net.backward(grad / n)

    def fit(self, probs, labels):
        probs = as_prob_matrix(probs)
        n, n_classes = probs.shape
        labels = check_class_labels(labels, n_classes, "labels")
        check_consistent_length(probs, labels, names="probs/labels")
        rng = np.random.default_rng(self.seed)
        xs = self._features(probs)

        net = DenseSkipNet(n_classes, tuple(self.hidden), n_classes, rng, skip=self.skip, zero_output=True)
        # identity on the log-probability block: softmax(log p) == p
        net.w_out[:n_classes, :] = np.eye(n_classes)
        opt = MomentumSGD(net.n_params, self.step_size, self.momentum)
        params = net.get_flat_params()
        steps_per_epoch = max(1, int(np.ceil(n / self.batch_size)))
        ema_decay = max(0.9, 1.0 - 1.0 / steps_per_epoch)
        averaged = params.copy()
        curve = []
        best_loss, _ = self._ce_and_grad(net, xs, labels)
        best = (best_loss, averaged.copy())  # the identity map is the starting point
        for epoch in range(self.epochs):
            lr = epoch_learning_rate(self.step_size, epoch, self.epochs)
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                net.set_flat_params(params)
                loss, grads = self._ce_and_grad(net, xs[idx], labels[idx])
                if not np.isfinite(loss):
                    raise TrainingError(f"simplex training diverged at epoch {epoch}")
                params = opt.step(params, grads, lr)
                averaged = ema_decay * averaged + (1.0 - ema_decay) * params
            net.set_flat_params(averaged)
            full, _ = self._ce_and_grad(net, xs, labels)
            if not np.isfinite(full):
                raise TrainingError(f"simplex training diverged at epoch {epoch}")
            curve.append(full)
            if full < best[0]:
                best = (full, averaged.copy())
        net.set_flat_params(best[1])
        self.net_ = net
        self.n_classes_ = n_classes
        self.loss_curve_ = curve
        return self

    def predict_proba(self, probs) -> np.ndarray:
        probs = as_prob_matrix(probs)
        if probs.shape[1] != self.n_classes_:
            raise ValueError(f"expected {self.n_classes_} classes, got {probs.shape[1]}")
        out = softmax(self.net_.forward(self._features(probs)))
        return out / out.sum(axis=1, keepdims=True)

    def predict_dist(self, probs) -> list[CategoricalDist]:
        return [CategoricalDist(row) for row in self.predict_proba(probs)]

    def to_state(self) -> dict:
        return {"net": self.net_.to_state(), "n_classes": self.n_classes_}

    @classmethod
    def from_state(cls, state: dict) -> "SimplexRecalibrator":
        model = cls()
        model.net_ = DenseSkipNet.from_state(state["net"])
        model.n_classes_ = int(state["n_classes"])
        return model


# ---------------------------------------------------------------------------
# Parametric baselines: Platt scaling and temperature scaling
# ---------------------------------------------------------------------------


class PlattScaler(BaseEstimator):
    """Two-parameter sigmoid fit sigma(a * logit(s) + b) on binary scores.

    The log loss in (a, b) is convex; Newton iterations reach the global
    optimum.  Degenerate data (one class, or separable fits running away)
    trigger a bounded-parameter fallback with a warning.
    """

    _PARAM_BOUND = 25.0

    def __init__(self, max_iter: int = 100, tol: float = 1e-12):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, scores, labels):
        scores = as_float_array(scores, "scores", ndim=1)
        labels = check_binary_labels(labels)
        t = check_consistent_length(scores, labels, names="scores/labels")
        eps = 1e-7
        z = np.log(np.clip(scores, eps, 1 - eps) / (1 - np.clip(scores, eps, 1 - eps)))
        self.degenerate_ = False
        if labels.min() == labels.max():
            rate = np.clip(labels.mean(), 1.0 / (2 * t), 1 - 1.0 / (2 * t))
            self.a_, self.b_ = 0.0, float(np.log(rate / (1 - rate)))
            self.degenerate_ = True
            warnings.warn("single-class labels: falling back to a constant base-rate scaler")
            return self

        a, b = 1.0, 0.0
        for _ in range(self.max_iter):
            t_lin = a * z + b
            p = sigmoid(t_lin)
            w = np.maximum(p * (1 - p), 1e-12)
            g = p - labels
            grad = np.array([np.mean(g * z), np.mean(g)])
            h11 = np.mean(w * z * z)
            h12 = np.mean(w * z)
            h22 = np.mean(w)
            hess = np.array([[h11, h12], [h12, h22]]) + 1e-12 * np.eye(2)
            step = np.linalg.solve(hess, grad)
            a, b = a - step[0], b - step[1]
            if max(abs(a), abs(b)) > self._PARAM_BOUND:
                a = float(np.clip(a, -self._PARAM_BOUND, self._PARAM_BOUND))
                b = float(np.clip(b, -self._PARAM_BOUND, self._PARAM_BOUND))
                self.degenerate_ = True
                warnings.warn("separable scores: Platt parameters clamped at the bound")
                break
            if np.max(np.abs(step)) < self.tol:
                break
        self.a_, self.b_ = float(a), float(b)
        return self

    def predict(self, scores) -> np.ndarray:
        scores = np.atleast_1d(as_float_array(scores, "scores"))
        eps = 1e-7
        z = np.log(np.clip(scores, eps, 1 - eps) / (1 - np.clip(scores, eps, 1 - eps)))
        return sigmoid(self.a_ * z + self.b_)

    def to_state(self) -> dict:
        return {"a": self.a_, "b": self.b_, "degenerate": bool(self.degenerate_)}

    @classmethod
    def from_state(cls, state: dict) -> "PlattScaler":
        model = cls()
        model.a_ = float(state["a"])
        model.b_ = float(state["b"])
        model.degenerate_ = bool(state["degenerate"])
        return model


class TemperatureScaler(BaseEstimator):
    """Single-temperature rescaling of logits, softmax(logits / T)."""

    def __init__(self, log_t_bound: float = 7.0):
        self.log_t_bound = log_t_bound

    def fit(self, logits, labels):
        logits = as_matrix(logits, "logits")
        labels = check_class_labels(labels, logits.shape[1], "labels")
        check_consistent_length(logits, labels, names="logits/labels")
        n = len(labels)

        def nll(log_t: float) -> float:
            probs = softmax(logits / np.exp(log_t))
            picked = np.maximum(probs[np.arange(n), labels], 1e-300)
            return float(np.mean(-np.log(picked)))

        res = minimize_scalar(
            nll, bounds=(-self.log_t_bound, self.log_t_bound), method="bounded",
            options={"xatol": 1e-12},
        )
        self.temperature_ = float(np.exp(res.x))
        return self

    def predict_proba(self, logits) -> np.ndarray:
        logits = as_matrix(logits, "logits")
        return softmax(logits / self.temperature_)

    def to_state(self) -> dict:
        return {"temperature": self.temperature_}

    @classmethod
    def from_state(cls, state: dict) -> "TemperatureScaler":
        model = cls()
        model.temperature_ = float(state["temperature"])
        return model


class SoftmaxRegressionRecalibrator(BaseEstimator):
    """Multiclass Platt scaling: softmax(W p + b) linear in the probabilities.

    The log loss is convex in (W, b); L-BFGS with an analytic gradient
    finds the global optimum.
    """

    def __init__(self, l2: float = 1e-8, max_iter: int = 500):
        self.l2 = l2
        self.max_iter = max_iter

    def fit(self, probs, labels):
        probs = as_prob_matrix(probs)
        n, k = probs.shape
        labels = check_class_labels(labels, k, "labels")
        check_consistent_length(probs, labels, names="probs/labels")
        onehot = np.zeros((n, k))
        onehot[np.arange(n), labels] = 1.0

        def unpack(theta):
            return theta[: k * k].reshape(k, k), theta[k * k :]

        def objective(theta):
            w, b = unpack(theta)
            logits = probs @ w + b
            p = softmax(logits)
            picked = np.maximum(p[np.arange(n), labels], 1e-300)
            loss = float(np.mean(-np.log(picked))) + 0.5 * self.l2 * float(theta @ theta)
            g_logits = (p - onehot) / n
            gw = probs.T @ g_logits + self.l2 * w
            gb = g_logits.sum(axis=0) + self.l2 * b
            return loss, np.concatenate([gw.ravel(), gb])

        theta0 = np.zeros(k * k + k)
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B", options={"maxiter": self.max_iter})
        self.weights_, self.bias_ = unpack(res.x)
        self.n_classes_ = k
        return self

    def predict_proba(self, probs) -> np.ndarray:
        probs = as_prob_matrix(probs)
        out = softmax(probs @ self.weights_ + self.bias_)
        return out / out.sum(axis=1, keepdims=True)

    def predict_dist(self, probs) -> list[CategoricalDist]:
        return [CategoricalDist(row) for row in self.predict_proba(probs)]

    def to_state(self) -> dict:
        return {"weights": self.weights_.tolist(), "bias": self.bias_.tolist()}

    @classmethod
    def from_state(cls, state: dict) -> "SoftmaxRegressionRecalibrator":
        model = cls()
        model.weights_ = np.asarray(state["weights"], dtype=float)
        model.bias_ = np.asarray(state["bias"], dtype=float)
        model.n_classes_ = model.weights_.shape[0]
        return model


# ---------------------------------------------------------------------------
# Composition: base model + recalibrator over disjoint splits
# ---------------------------------------------------------------------------


class IdentityRecalibrator(BaseEstimator):
    """Pass-through recalibrator: returns the featurization as a forecast."""

    def __init__(self, input_levels: Sequence[float] = DECILE_LEVELS):
        self.input_levels = input_levels

    def fit(self, phis, ys=None):
        self._levels = check_levels(self.input_levels, "input_levels")
        return self

    def transform(self, phis, out_levels: Sequence[float] | None = None) -> list[QuantileGridDist]:
        P = featurization_matrix(phis)
        dists = [QuantileGridDist(self._levels, np.sort(row)) for row in P]
        if out_levels is None:
            return dists
        out_levels = check_levels(out_levels)
        return [
            QuantileGridDist(out_levels, np.asarray(d.quantile(out_levels), dtype=float))
            for d in dists
        ]


class RecalibratedModel:
    """A fitted base model composed with a fitted recalibrator."""

    def __init__(self, base, recalibrator, levels: np.ndarray, mode: str):
        self.base_ = base
        self.recalibrator_ = recalibrator
        self.levels_ = levels
        self.mode_ = mode

    def featurize_base(self, X) -> np.ndarray:
        if self.mode_ == "classification":
            return self.base_.predict_proba(X)
        from .metrics import quantile_matrix

        return quantile_matrix(self.base_.predict_dist(X), self.levels_)

    def predict_dist(self, X, out_levels: Sequence[float] | None = None):
        phis = self.featurize_base(X)
        if self.mode_ == "classification":
            return self.recalibrator_.predict_dist(phis)
        return self.recalibrator_.transform(phis, out_levels if out_levels is not None else self.levels_)

    def predict_proba(self, X) -> np.ndarray:
        if self.mode_ != "classification":
            raise ValueError("predict_proba is only available for classification pipelines")
        return self.recalibrator_.predict_proba(self.base_.predict_proba(X))

    def predict(self, X) -> np.ndarray:
        if self.mode_ == "classification":
            return self.predict_proba(X).argmax(axis=1)
        dists = self.predict_dist(X)
        return np.array([float(d.quantile(0.5)) for d in dists])


def fit_recalibrated(
    base_estimator,
    recalibrator,
    X,
    y,
    recal_data: tuple | None = None,
    recal_fraction: float = 0.2,
    levels: Sequence[float] = DECILE_LEVELS,
    seed: int = 0,
) -> RecalibratedModel:
    """Fit a base model, then a recalibrator over its forecasts.

    When ``recal_data`` is None a fraction of the training data is held
    out for the recalibrator, keeping the two fits on disjoint samples.
    Classification is detected through ``predict_proba`` on the base
    estimator; everything else goes down the quantile-featurization path.
    """
    X = as_matrix(X)
    y = np.asarray(y)
    check_consistent_length(X, y, names="X/y")
    levels = check_levels(levels)

    if recal_data is None:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(y))
        n_recal = int(round(recal_fraction * len(y)))
        if n_recal < 1 or n_recal >= len(y):
            raise DataError("recal_fraction leaves an empty training or recalibration split")
        recal_idx, train_idx = order[:n_recal], order[n_recal:]
        X_train, y_train = X[train_idx], y[train_idx]
        X_recal, y_recal = X[recal_idx], y[recal_idx]
    else:
        X_recal, y_recal = recal_data
        X_recal = as_matrix(X_recal)
        y_recal = np.asarray(y_recal)
        if len(y_recal) == 0:
            raise DataError("recalibration set is empty")
        X_train, y_train = X, y

    base = clone(base_estimator).fit(X_train, y_train)
    recal = clone(recalibrator)
    if hasattr(base, "predict_proba"):
        probs = base.predict_proba(X_recal)
        recal.fit(probs, y_recal)
        return RecalibratedModel(base, recal, levels, mode="classification")

    from .metrics import quantile_matrix

    phis = quantile_matrix(base.predict_dist(X_recal), levels)
    recal.fit(phis, as_float_array(y_recal, "y_recal", ndim=1))
    return RecalibratedModel(base, recal, levels, mode="regression")
