"""Base probabilistic predictors: conjugate Bayesian ridge and small MLPs.

Estimators follow the scikit-learn protocol (``fit`` returning self,
``get_params``/``set_params`` via ``BaseEstimator``) and expose
``predict_dist`` returning per-row predictive distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_float_array, as_matrix, check_class_labels, check_consistent_length
from .distributions import CategoricalDist, GaussianDist
from .exceptions import NumericError, TrainingError
from .nnet import DenseSkipNet, MomentumSGD, sigmoid, softmax, softplus


@dataclass(frozen=True)
class TrainConfig:
    """Shared knobs for stochastic-gradient training loops."""

    step_size: float = 0.05
    momentum: float = 0.9
    epochs: int = 40
    batch_size: int = 256
    seed: int = 0
    tau_samples_per_example: int = 8

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.tau_samples_per_example < 1:
            raise ValueError("epochs, batch_size and tau_samples_per_example must be >= 1")


def epoch_learning_rate(step_size: float, epoch: int, epochs: int) -> float:
    """Log-linear decay to 1% of the initial rate by the final epoch.

    The quiet tail keeps end-of-epoch training losses non-increasing to
    well within 1e-3 once the optimizer reaches its noise floor.
    """
    frac = epoch / max(epochs - 1, 1)
    return step_size * 0.01**frac


class _Standardizer:
    """Column-wise affine map to zero mean, unit scale; degenerate-safe."""

    def __init__(self, data: np.ndarray):
        self.mean = data.mean(axis=0)
        scale = data.std(axis=0)
        self.scale = np.where(scale > 1e-12, scale, 1.0)

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean) / self.scale

    def to_state(self) -> dict:
        return {"mean": np.atleast_1d(self.mean).tolist(), "scale": np.atleast_1d(self.scale).tolist()}

    @classmethod
    def from_state(cls, state: dict) -> "_Standardizer":
        obj = cls.__new__(cls)
        obj.mean = np.asarray(state["mean"], dtype=float)
        obj.scale = np.asarray(state["scale"], dtype=float)
        return obj


# ---------------------------------------------------------------------------
# Bayesian ridge regression (conjugate closed form)
# ---------------------------------------------------------------------------


class BayesianRidgeRegression(BaseEstimator):
    """Linear-Gaussian regression with a spherical prior over the weights.

    The posterior is computed in closed form: weight covariance
    ``(alpha*I + beta*X'X)^-1`` and mean ``beta * cov @ X'y``.  When
    ``beta`` is None it is set to the reciprocal least-squares residual
    variance; ``evidence_iters`` > 0 runs that many fixed-point updates of
    (alpha, beta) under the marginal likelihood.
    """

    def __init__(self, alpha: float = 1e-6, beta: float | None = None, evidence_iters: int = 0):
        self.alpha = alpha
        self.beta = beta
        self.evidence_iters = evidence_iters

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_float_array(y, "y", ndim=1)
        check_consistent_length(X, y, names="X/y")
        if self.alpha < 0 or (self.beta is not None and self.beta <= 0):
            raise ValueError("alpha must be >= 0 and beta positive")
        n, d = X.shape

        gram = X.T @ X
        xty = X.T @ y
        beta = self.beta
        if beta is None:
            try:
                w_ls, *_ = np.linalg.lstsq(X, y, rcond=None)
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"least-squares init failed: {exc}") from exc
            resid_var = float(np.mean((y - X @ w_ls) ** 2))
            beta = 1.0 / max(resid_var, 1e-12)
        alpha = float(self.alpha)

        def posterior(a, b):
            try:
                cov = np.linalg.inv(a * np.eye(d) + b * gram)
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"posterior covariance is singular: {exc}") from exc
            return cov, b * cov @ xty

        cov, mean = posterior(alpha, beta)
        if self.evidence_iters > 0:
            try:
                eig = np.linalg.eigvalsh(gram)
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"eigendecomposition failed: {exc}") from exc
            for _ in range(int(self.evidence_iters)):
                lam = beta * eig
                gamma = float(np.sum(lam / (alpha + lam)))
                alpha = gamma / max(float(mean @ mean), 1e-12)
                resid = float(np.sum((y - X @ mean) ** 2))
                beta = (n - gamma) / max(resid, 1e-12)
                cov, mean = posterior(alpha, beta)

        if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(mean))):
            raise NumericError("posterior computation produced non-finite values")
        self.weight_mean_ = mean
        self.weight_cov_ = cov
        self.alpha_ = float(alpha)
        self.beta_ = float(beta)
        return self

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X)
        return X @ self.weight_mean_

    def predict_dist(self, X) -> list[GaussianDist]:
        X = as_matrix(X)
        mu = X @ self.weight_mean_
        var = np.einsum("ij,jk,ik->i", X, self.weight_cov_, X) + 1.0 / self.beta_
        sigma = np.sqrt(np.maximum(var, 1e-300))
        return [GaussianDist(float(m), float(s)) for m, s in zip(mu, sigma)]

    def to_state(self) -> dict:
        return {
            "alpha": self.alpha_,
            "beta": self.beta_,
            "weight_mean": self.weight_mean_.tolist(),
            "weight_cov": self.weight_cov_.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "BayesianRidgeRegression":
        model = cls(alpha=state["alpha"], beta=state["beta"])
        model.alpha_ = float(state["alpha"])
        model.beta_ = float(state["beta"])
        model.weight_mean_ = np.asarray(state["weight_mean"], dtype=float)
        model.weight_cov_ = np.asarray(state["weight_cov"], dtype=float)
        return model


# ---------------------------------------------------------------------------
# MLP heads trained with momentum SGD
# ---------------------------------------------------------------------------


def _check_divergence(loss: float) -> None:
    if not np.isfinite(loss):
        raise TrainingError(f"training diverged: loss became {loss!r}")


class GaussianMLPRegressor(BaseEstimator):
    """MLP with a mean head and a softplus-positive scale head, trained on
    the Gaussian negative log likelihood."""

    def __init__(
        self,
        hidden: tuple[int, ...] = (32, 32),
        skip: bool = True,
        step_size: float = 0.02,
        momentum: float = 0.9,
        epochs: int = 60,
        batch_size: int = 128,
        seed: int = 0,
        sigma_floor: float = 1e-3,
    ):
        self.hidden = hidden
        self.skip = skip
        self.step_size = step_size
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.sigma_floor = sigma_floor

    def _nll_and_grad(self, net: DenseSkipNet, xs: np.ndarray, ys: np.ndarray):
        out = net.forward(xs)
        mu = out[:, 0]
        sig = softplus(out[:, 1]) + self.sigma_floor
        resid = ys - mu
        nll = 0.5 * np.log(2.0 * np.pi) + np.log(sig) + 0.5 * (resid / sig) ** 2
        n = len(ys)
        d_mu = -resid / sig**2 / n
        d_sig = (1.0 / sig - resid**2 / sig**3) / n
        d_z1 = d_sig * sigmoid(out[:, 1])
        grad_out = np.column_stack([d_mu, d_z1])
        return float(np.mean(nll)), net.backward(grad_out)

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_float_array(y, "y", ndim=1)
        check_consistent_length(X, y, names="X/y")
        rng = np.random.default_rng(self.seed)
        self._x_std = _Standardizer(X)
        self._y_std = _Standardizer(y.reshape(-1, 1))
        xs = self._x_std.transform(X)
        ys = self._y_std.transform(y.reshape(-1, 1)).ravel()

        net = DenseSkipNet(X.shape[1], tuple(self.hidden), 2, rng, skip=self.skip)
        opt = MomentumSGD(net.n_params, self.step_size, self.momentum)
        params = net.get_flat_params()
        n = len(ys)
        steps_per_epoch = max(1, int(np.ceil(n / self.batch_size)))
        ema_decay = max(0.9, 1.0 - 1.0 / steps_per_epoch)
        averaged = params.copy()  # Polyak average: the model that is kept
        curve = []
        best = (np.inf, averaged.copy())
        for epoch in range(self.epochs):
            lr = epoch_learning_rate(self.step_size, epoch, self.epochs)
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                net.set_flat_params(params)
                loss, grads = self._nll_and_grad(net, xs[idx], ys[idx])
                _check_divergence(loss)
                params = opt.step(params, grads, lr)
                averaged = ema_decay * averaged + (1.0 - ema_decay) * params
            net.set_flat_params(averaged)
            full_loss, _ = self._nll_and_grad(net, xs, ys)
            _check_divergence(full_loss)
            curve.append(full_loss)
            if full_loss < best[0]:
                best = (full_loss, averaged.copy())
        net.set_flat_params(best[1])
        self.net_ = net
        self.loss_curve_ = curve
        return self

    def _raw_outputs(self, X) -> tuple[np.ndarray, np.ndarray]:
        xs = self._x_std.transform(as_matrix(X))
        out = self.net_.forward(xs)
        mu = out[:, 0] * self._y_std.scale[0] + self._y_std.mean[0]
        sig = (softplus(out[:, 1]) + self.sigma_floor) * self._y_std.scale[0]
        return mu, sig

    def predict(self, X) -> np.ndarray:
        return self._raw_outputs(X)[0]

    def predict_dist(self, X) -> list[GaussianDist]:
        mu, sig = self._raw_outputs(X)
        return [GaussianDist(float(m), float(s)) for m, s in zip(mu, sig)]

    def to_state(self) -> dict:
        return {
            "net": self.net_.to_state(),
            "x_std": self._x_std.to_state(),
            "y_std": self._y_std.to_state(),
            "sigma_floor": self.sigma_floor,
        }

    @classmethod
    def from_state(cls, state: dict) -> "GaussianMLPRegressor":
        model = cls(sigma_floor=state["sigma_floor"])
        model.net_ = DenseSkipNet.from_state(state["net"])
        model._x_std = _Standardizer.from_state(state["x_std"])
        model._y_std = _Standardizer.from_state(state["y_std"])
        return model


class SoftmaxMLPClassifier(BaseEstimator):
    """MLP classifier with a softmax head trained on cross-entropy."""

    def __init__(
        self,
        hidden: tuple[int, ...] = (32, 32),
        skip: bool = True,
        step_size: float = 0.05,
        momentum: float = 0.9,
        epochs: int = 40,
        batch_size: int = 128,
        seed: int = 0,
    ):
        self.hidden = hidden
        self.skip = skip
        self.step_size = step_size
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _ce_and_grad(self, net: DenseSkipNet, xs: np.ndarray, labels: np.ndarray):
        logits = net.forward(xs)
        probs = softmax(logits)
        n = len(labels)
        picked = np.maximum(probs[np.arange(n), labels], 1e-300)
        loss = float(np.mean(-np.log(picked)))
        grad = probs.copy()
        grad[np.arange(n), labels] -= 1.0
        return loss, net.backward(grad / n)

    def fit(self, X, labels):
        X = as_matrix(X)
        labels = np.asarray(labels)
        self.classes_ = np.unique(labels)
        if self.classes_.size < 2:
            raise ValueError("need at least 2 classes")
        y = np.searchsorted(self.classes_, labels)
        check_consistent_length(X, y, names="X/labels")
        rng = np.random.default_rng(self.seed)
        self._x_std = _Standardizer(X)
        xs = self._x_std.transform(X)
        n_classes = self.classes_.size

        net = DenseSkipNet(X.shape[1], tuple(self.hidden), n_classes, rng, skip=self.skip)
        opt = MomentumSGD(net.n_params, self.step_size, self.momentum)
        params = net.get_flat_params()
        n = len(y)
        steps_per_epoch = max(1, int(np.ceil(n / self.batch_size)))
        ema_decay = max(0.9, 1.0 - 1.0 / steps_per_epoch)
        averaged = params.copy()
        curve = []
        best = (np.inf, averaged.copy())
        for epoch in range(self.epochs):
            lr = epoch_learning_rate(self.step_size, epoch, self.epochs)
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                net.set_flat_params(params)
                loss, grads = self._ce_and_grad(net, xs[idx], y[idx])
                _check_divergence(loss)
                params = opt.step(params, grads, lr)
                averaged = ema_decay * averaged + (1.0 - ema_decay) * params
            net.set_flat_params(averaged)
            full_loss, _ = self._ce_and_grad(net, xs, y)
            _check_divergence(full_loss)
            curve.append(full_loss)
            if full_loss < best[0]:
                best = (full_loss, averaged.copy())
        net.set_flat_params(best[1])
        self.net_ = net
        self.loss_curve_ = curve
        return self

    def predict_proba(self, X) -> np.ndarray:
        xs = self._x_std.transform(as_matrix(X))
        return softmax(self.net_.forward(xs))

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def predict_dist(self, X) -> list[CategoricalDist]:
        probs = self.predict_proba(X)
        probs = probs / probs.sum(axis=1, keepdims=True)
        return [CategoricalDist(row) for row in probs]

    def to_state(self) -> dict:
        return {
            "net": self.net_.to_state(),
            "x_std": self._x_std.to_state(),
            "classes": self.classes_.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "SoftmaxMLPClassifier":
        model = cls()
        model.net_ = DenseSkipNet.from_state(state["net"])
        model._x_std = _Standardizer.from_state(state["x_std"])
        model.classes_ = np.asarray(state["classes"])
        return model
