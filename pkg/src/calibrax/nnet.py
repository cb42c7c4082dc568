"""Minimal dense-network engine with exact reverse-mode gradients.

The single architecture is a multilayer perceptron with parametric-ReLU
units and optional dense skip connections: every layer (and the output
layer) sees the concatenation of the raw input with all previous hidden
activations.  Gradients are accumulated layer by layer in closed form and
exposed as one flat vector aligned with ``get_flat_params``.
"""

from __future__ import annotations

import numpy as np

from ._validation import check_rng


def softplus(z: np.ndarray) -> np.ndarray:
    # log(1+exp(z)) without overflow
    return np.logaddexp(0.0, z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class DenseSkipNet:
    """PReLU multilayer perceptron with dense skip concatenation.

    Parameters are plain float64 arrays; ``forward`` caches activations
    for one subsequent ``backward`` call.  ``zero_output`` starts the
    output layer at zero, which makes the initial network constant.
    """

    def __init__(
        self,
        in_dim: int,
        hidden: tuple[int, ...],
        out_dim: int,
        rng: np.random.Generator,
        *,
        skip: bool = True,
        prelu_init: float = 0.25,
        zero_output: bool = False,
    ):
        rng = check_rng(rng)
        if in_dim < 1 or out_dim < 1 or any(h < 1 for h in hidden):
            raise ValueError("all layer widths must be positive")
        self.in_dim = int(in_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.out_dim = int(out_dim)
        self.skip = bool(skip)

        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        self.slopes: list[np.ndarray] = []
        fan_in = self.in_dim
        for width in self.hidden:
            self.weights.append(rng.standard_normal((fan_in, width)) * np.sqrt(2.0 / fan_in))
            self.biases.append(np.zeros(width))
            self.slopes.append(np.full(width, float(prelu_init)))
            fan_in = fan_in + width if self.skip else width
        if zero_output:
            self.w_out = np.zeros((fan_in, self.out_dim))
        else:
            self.w_out = rng.standard_normal((fan_in, self.out_dim)) * np.sqrt(1.0 / fan_in)
        self.b_out = np.zeros(self.out_dim)
        self._cache = None

    # -- forward / backward -------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected input of shape (n, {self.in_dim}), got {x.shape}")
        n = x.shape[0]
        # all activations live in one buffer; layer k reads the prefix of
        # width offsets[k] (dense skip) or its own predecessor slice
        offsets = [self.in_dim]
        for width in self.hidden:
            offsets.append(offsets[-1] + width)
        buf = np.empty((n, offsets[-1]))
        buf[:, : self.in_dim] = x
        factors = []  # dh/dz per unit: 1 above zero, the unit slope at or below
        z_negs = []  # z masked to its nonpositive part, for the slope gradient
        for k, (w, b, s) in enumerate(zip(self.weights, self.biases, self.slopes)):
            inp = buf[:, : offsets[k]] if self.skip else buf[:, offsets[k] - w.shape[0] : offsets[k]]
            z = inp @ w + b
            pos = z > 0
            factor = np.where(pos, 1.0, s)
            buf[:, offsets[k] : offsets[k + 1]] = z * factor
            factors.append(factor)
            z_negs.append(np.where(pos, 0.0, z))
        inp_out = buf if self.skip else buf[:, offsets[-1] - self.w_out.shape[0] :]
        out = inp_out @ self.w_out + self.b_out
        self._cache = (buf, factors, z_negs, offsets)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Gradient of a scalar loss w.r.t. every parameter, flattened.

        ``grad_out`` is dLoss/dOutput from the most recent ``forward``.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        buf, factors, z_negs, offsets = self._cache
        grad_out = np.asarray(grad_out, dtype=float)
        if grad_out.shape != (buf.shape[0], self.out_dim):
            raise ValueError(
                f"grad_out shape {grad_out.shape} does not match output "
                f"({buf.shape[0]}, {self.out_dim})"
            )

        g_buf = np.zeros_like(buf)
        inp_out = buf if self.skip else buf[:, offsets[-1] - self.w_out.shape[0] :]
        g_w_out = inp_out.T @ grad_out
        g_b_out = grad_out.sum(axis=0)
        if self.skip:
            g_buf += grad_out @ self.w_out.T
        else:
            g_buf[:, offsets[-1] - self.w_out.shape[0] :] += grad_out @ self.w_out.T

        g_w = [None] * len(self.hidden)
        g_b = [None] * len(self.hidden)
        g_s = [None] * len(self.hidden)
        for k in range(len(self.hidden) - 1, -1, -1):
            gh = g_buf[:, offsets[k] : offsets[k + 1]]
            gz = gh * factors[k]
            g_s[k] = np.einsum("ij,ij->j", gh, z_negs[k])
            w = self.weights[k]
            inp = buf[:, : offsets[k]] if self.skip else buf[:, offsets[k] - w.shape[0] : offsets[k]]
            g_w[k] = inp.T @ gz
            g_b[k] = gz.sum(axis=0)
            if self.skip:
                g_buf[:, : offsets[k]] += gz @ w.T
            else:
                g_buf[:, offsets[k] - w.shape[0] : offsets[k]] += gz @ w.T

        parts = []
        for k in range(len(self.hidden)):
            parts.extend([g_w[k].ravel(), g_b[k], g_s[k]])
        parts.extend([g_w_out.ravel(), g_b_out])
        return np.concatenate(parts)

    # -- flat parameter view -------------------------------------------

    @property
    def n_params(self) -> int:
        count = self.w_out.size + self.b_out.size
        for w, b, s in zip(self.weights, self.biases, self.slopes):
            count += w.size + b.size + s.size
        return count

    def get_flat_params(self) -> np.ndarray:
        parts = []
        for w, b, s in zip(self.weights, self.biases, self.slopes):
            parts.extend([w.ravel(), b, s])
        parts.extend([self.w_out.ravel(), self.b_out])
        return np.concatenate(parts)

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        pos = 0

        def take(shape):
            nonlocal pos
            size = int(np.prod(shape))
            block = flat[pos : pos + size].reshape(shape).copy()
            pos += size
            return block

        for k in range(len(self.hidden)):
            self.weights[k] = take(self.weights[k].shape)
            self.biases[k] = take(self.biases[k].shape)
            self.slopes[k] = take(self.slopes[k].shape)
        self.w_out = take(self.w_out.shape)
        self.b_out = take(self.b_out.shape)

    # -- serialization ---------------------------------------------------

    def to_state(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "hidden": list(self.hidden),
            "out_dim": self.out_dim,
            "skip": self.skip,
            "params": self.get_flat_params().tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "DenseSkipNet":
        net = cls(
            state["in_dim"],
            tuple(state["hidden"]),
            state["out_dim"],
            np.random.default_rng(0),
            skip=state["skip"],
        )
        net.set_flat_params(np.asarray(state["params"], dtype=float))
        return net


class MomentumSGD:
    """Classical momentum update over a flat parameter vector."""

    def __init__(self, n_params: int, step_size: float, momentum: float):
        if step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.step_size = float(step_size)
        self.momentum = float(momentum)
        self.velocity = np.zeros(n_params)

    def step(self, params: np.ndarray, grads: np.ndarray, lr: float | None = None) -> np.ndarray:
        lr = self.step_size if lr is None else lr
        self.velocity = self.momentum * self.velocity - lr * grads
        return params + self.velocity


def finite_difference_grad(fn, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function; gradient-check oracle."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] += h
        up = fn(bumped)
        bumped[i] -= 2 * h
        down = fn(bumped)
        grad[i] = (up - down) / (2 * h)
    return grad
