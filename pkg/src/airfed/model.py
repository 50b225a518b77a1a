"""Trainable models, loss/gradient evaluation, and data-importance scoring.

Models are stateless descriptors: parameters live in a flat vector owned by
the caller and are never mutated in place. Probabilities are clamped at
1e-12 before any log to avoid -inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_CLAMP = 1e-12


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class SoftmaxRegression:
    """Linear multinomial classifier; params = [W (d*C), b (C)] flattened."""

    n_features: int
    n_classes: int

    @property
    def n_params(self) -> int:
        return self.n_features * self.n_classes + self.n_classes

    def _unpack(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d, c = self.n_features, self.n_classes
        return w[: d * c].reshape(d, c), w[d * c:]

    def predict_proba(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        W, b = self._unpack(w)
        return _softmax(X @ W + b)

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        p = np.clip(self.predict_proba(w, X), PROB_CLAMP, 1.0)
        return float(-np.mean(np.log(p[np.arange(len(y)), y])))

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        delta = self.predict_proba(w, X)
        delta[np.arange(n), y] -= 1.0
        gW = X.T @ delta / n
        gb = delta.mean(axis=0)
        return np.concatenate([gW.ravel(), gb])

    def per_sample_grads(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        delta = self.predict_proba(w, X)
        delta[np.arange(n), y] -= 1.0
        gW = np.einsum("nd,nc->ndc", X, delta).reshape(n, -1)
        return np.concatenate([gW, delta], axis=1)

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        return np.zeros(self.n_params)


@dataclass(frozen=True)
class OneHiddenLayer:
    """tanh hidden layer followed by softmax output.

    params = [W1 (d*h), b1 (h), W2 (h*C), b2 (C)] flattened.
    """

    n_features: int
    n_classes: int
    width: int

    @property
    def n_params(self) -> int:
        d, c, h = self.n_features, self.n_classes, self.width
        return d * h + h + h * c + c

    def _unpack(self, w):
        d, c, h = self.n_features, self.n_classes, self.width
        i = 0
        W1 = w[i:i + d * h].reshape(d, h); i += d * h
        b1 = w[i:i + h]; i += h
        W2 = w[i:i + h * c].reshape(h, c); i += h * c
        b2 = w[i:i + c]
        return W1, b1, W2, b2

    def _forward(self, w, X):
        W1, b1, W2, b2 = self._unpack(w)
        hidden = np.tanh(X @ W1 + b1)
        return hidden, _softmax(hidden @ W2 + b2)

    def predict_proba(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        return self._forward(w, X)[1]

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        p = np.clip(self.predict_proba(w, X), PROB_CLAMP, 1.0)
        return float(-np.mean(np.log(p[np.arange(len(y)), y])))

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        W1, b1, W2, b2 = self._unpack(w)
        n = X.shape[0]
        hidden, p = self._forward(w, X)
        delta2 = p.copy()
        delta2[np.arange(n), y] -= 1.0
        gW2 = hidden.T @ delta2 / n
        gb2 = delta2.mean(axis=0)
        delta1 = (delta2 @ W2.T) * (1.0 - hidden ** 2)
        gW1 = X.T @ delta1 / n
        gb1 = delta1.mean(axis=0)
        return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])

    def per_sample_grads(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        W1, b1, W2, b2 = self._unpack(w)
        n = X.shape[0]
        hidden, p = self._forward(w, X)
        delta2 = p.copy()
        delta2[np.arange(n), y] -= 1.0
        gW2 = np.einsum("nh,nc->nhc", hidden, delta2).reshape(n, -1)
        delta1 = (delta2 @ W2.T) * (1.0 - hidden ** 2)
        gW1 = np.einsum("nd,nh->ndh", X, delta1).reshape(n, -1)
        return np.concatenate([gW1, delta1, gW2, delta2], axis=1)

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(0)
        d, h = self.n_features, self.width
        w = rng.normal(0.0, 1.0, size=self.n_params)
        w[: d * h] /= np.sqrt(d)
        w[d * h + h: d * h + h + h * self.n_classes] /= np.sqrt(h)
        return w


@dataclass(frozen=True)
class LeastSquares:
    """Scalar-output least squares f(w; (x, y)) = (w.x - y)^2 / 2.

    Used as the analytically tractable test mode: the smoothness constant and
    the optimal loss are computable in closed form.
    """

    n_features: int

    @property
    def n_params(self) -> int:
        return self.n_features

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        r = X @ w - y
        return float(0.5 * np.mean(r ** 2))

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        r = X @ w - y
        return X.T @ r / X.shape[0]

    def per_sample_grads(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        return X * (X @ w - y)[:, None]

    def smoothness(self, X: np.ndarray) -> float:
        h = X.T @ X / X.shape[0]
        return float(np.linalg.eigvalsh(h)[-1])

    def optimum(self, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
        w_star, *_ = np.linalg.lstsq(X, y, rcond=None)
        return w_star, self.loss(w_star, X, y)

    def init_params(self, rng: np.random.Generator | None = None) -> np.ndarray:
        return np.zeros(self.n_params)


def build_model(kind: str, n_features: int, n_classes: int, width: int = 16):
    if kind == "softmax":
        return SoftmaxRegression(n_features, n_classes)
    if kind == "mlp":
        return OneHiddenLayer(n_features, n_classes, width)
    if kind == "quadratic":
        return LeastSquares(n_features)
    raise ValueError(f"unknown model kind {kind!r}")


def local_loss(model, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Average sample loss over one device's shard."""
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    return model.loss(w, X, y)


def local_gradient(model, w: np.ndarray, X: np.ndarray, y: np.ndarray,
                   batch_size: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Mini-batch gradient: uniform sample without replacement, full batch exact.

    With batch_size equal to the shard size the full-batch gradient is
    returned deterministically and no random draw is consumed.
    """
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if batch_size < 1 or batch_size > n:
        raise ValueError("batch exceeds shard")
    if batch_size == n:
        return model.grad(w, X, y)
    idx = rng.choice(n, size=batch_size, replace=False)
    return model.grad(w, X[idx], y[idx])


def global_update(w: np.ndarray, aggregated: np.ndarray, lr: float) -> np.ndarray:
    """One descent step on the global model."""
    if w.shape != aggregated.shape:
        raise ValueError("dimension mismatch between model and gradient")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    return w - lr * aggregated


def data_importance(model, w: np.ndarray, X: np.ndarray) -> float:
    """Mean predictive entropy (nats) of the model over a device's samples."""
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    p = model.predict_proba(w, X)
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError("probability vector does not sum to 1")
    p = np.clip(p, PROB_CLAMP, 1.0)
    return float(-np.mean(np.sum(p * np.log(p), axis=1)))


def finite_difference_grad(fun, w: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences; reference for gradient checks."""
    g = np.zeros_like(w, dtype=float)
    for i in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        g[i] = (fun(wp) - fun(wm)) / (2.0 * h)
    return g
