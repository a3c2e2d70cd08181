"""Minimal dense network core with hand-written reverse-mode gradients.

Covers exactly what the attentive autoencoder needs: dense layers, batch
normalization, ReLU/sigmoid, the softmax self-gating bottleneck, binary
cross-entropy, and an adaptive-moment optimizer. Every layer caches its
forward pass so a backward call can replay it; gradients are verifiable
against central finite differences.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

BCE_EPS = 1e-7
BN_EPS = 1e-5
BN_MOMENTUM = 0.99


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # evaluate on the negative half-line only, to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def attention_bottleneck(x: np.ndarray) -> np.ndarray:
    """Gate each row by its own softmax distribution: softmax(x) * x."""
    return softmax(x) * x


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Binary cross-entropy summed over features, averaged over the batch.

    Predictions are clamped to [BCE_EPS, 1 - BCE_EPS] before the logs.
    """
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    per_element = -(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    batch = pred.shape[0] if pred.ndim > 1 else 1
    return float(per_element.sum() / batch)


def bce_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(bce_loss)/d(pred); zero where the clamp is active."""
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    batch = pred.shape[0] if pred.ndim > 1 else 1
    grad = (-(target / p) + (1.0 - target) / (1.0 - p)) / batch
    inside = (pred > BCE_EPS) & (pred < 1.0 - BCE_EPS)
    return np.where(inside, grad, 0.0)


def glorot_uniform(in_dim: int, out_dim: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(in_dim, out_dim))


class Layer:
    """Common layer surface: forward caches what backward needs."""

    params = ()
    grads = ()

    def forward(self, x, training):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _require_cache(self, cache):
        if cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = glorot_uniform(in_dim, out_dim, rng)
        self.b = np.zeros(out_dim)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    @property
    def params(self):
        return (self.w, self.b)

    @property
    def grads(self):
        return (self.dw, self.db)

    def forward(self, x, training=True):
        if x.shape[-1] != self.w.shape[0]:
            raise ValueError(
                f"dense layer expects width {self.w.shape[0]}, got {x.shape[-1]}"
            )
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout):
        self._require_cache(self._x)
        self.dw = self._x.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.w.T


class BatchNorm(Layer):
    """Per-feature batch normalization with running statistics.

    Training mode normalizes with batch mean/variance (ddof=0) and folds the
    batch statistics into the running estimates; evaluation mode uses the
    running estimates. Running statistics start at mean 0, variance 1.
    """

    def __init__(self, dim: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        if eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must lie in (0, 1)")
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.eps = eps
        self.momentum = momentum
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache = None

    @property
    def params(self):
        return (self.gamma, self.beta)

    @property
    def grads(self):
        return (self.dgamma, self.dbeta)

    def forward(self, x, training=True):
        if training:
            if x.shape[0] < 2:
                raise ValueError("batch normalization needs batch size >= 2 in training mode")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv_std
            self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var
            self._cache = (xhat, inv_std)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * inv_std
            self._cache = None  # backward is only defined for training mode
        return self.gamma * xhat + self.beta

    def backward(self, dout):
        self._require_cache(self._cache)
        xhat, inv_std = self._cache
        n = dout.shape[0]
        self.dgamma = (dout * xhat).sum(axis=0)
        self.dbeta = dout.sum(axis=0)
        dxhat = dout * self.gamma
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, training=True):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        self._require_cache(self._mask)
        return dout * self._mask


class Sigmoid(Layer):
    def __init__(self):
        self._out = None

    def forward(self, x, training=True):
        self._out = sigmoid(x)
        return self._out

    def backward(self, dout):
        self._require_cache(self._out)
        return dout * self._out * (1.0 - self._out)


class Attention(Layer):
    """Softmax self-gating: y = softmax(x) * x per row."""

    def __init__(self):
        self._cache = None

    def forward(self, x, training=True):
        s = softmax(x)
        self._cache = (x, s)
        return s * x

    def backward(self, dout):
        self._require_cache(self._cache)
        x, s = self._cache
        # y = s * x: direct term g*s plus the softmax path
        # s' backward: s * (u - sum(u * s)) with u = g * x
        u = dout * x
        correction = (u * s).sum(axis=-1, keepdims=True)
        return dout * s + s * (u - correction)


class Sequential:
    """Ordered layer stack; the cached forward pass is the gradient tape."""

    def __init__(self, layers):
        self.layers = list(layers)
        self._ran_forward = False

    def forward(self, x, training=True):
        for layer in self.layers:
            x = layer.forward(x, training=training)
        self._ran_forward = training
        return x

    def backward(self, dout):
        if not self._ran_forward:
            raise RuntimeError("backward called before a training-mode forward pass")
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    def gradients(self):
        return [g for layer in self.layers for g in layer.grads]


class Adam:
    """Adaptive-moment optimizer with bias correction; updates in place."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ValueError(
                f"expected {len(self.params)} gradients, got {len(grads)}"
            )
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NumericalError("non-finite gradient encountered; aborting training")
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)
