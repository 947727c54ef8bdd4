"""A small numpy multilayer perceptron with hand-written backpropagation."""

from __future__ import annotations

from typing import Optional

import numpy as np


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def sigmoid(z):
    # split by sign so large |z| never overflows exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_sigmoid(z):
    return -np.logaddexp(0, -z)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class MLP:
    """Dense ReLU layers followed by a linear output layer (logits)."""

    def __init__(self, sizes, rng: Optional[np.random.Generator] = None, dtype=np.float64, params=None):
        self.sizes = [int(s) for s in sizes]
        self.dtype = np.dtype(dtype)
        if params is not None:
            self.params = [p.astype(self.dtype) for p in params]
        else:
            self.params = []
            for a, b in zip(self.sizes[:-1], self.sizes[1:]):
                self.params.append(glorot(rng, a, b).astype(self.dtype))
                self.params.append(np.zeros(b, dtype=self.dtype))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def weights(self):
        return self.params[0::2]

    def copy_params(self):
        return [p.copy() for p in self.params]

    def astype(self, dtype) -> "MLP":
        return MLP(self.sizes, dtype=dtype, params=self.params)

    def forward(self, X, dropout: float = 0.0, rng: Optional[np.random.Generator] = None):
        """Returns logits and the cache needed by ``backward``."""
        h = X.astype(self.dtype, copy=False)
        cache = [h]
        masks = []
        L = self.n_layers
        for k in range(L):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = h @ W + b
            if k == L - 1:
                return z, (cache, masks)
            h = np.maximum(z, 0)
            if dropout > 0 and rng is not None:
                keep = (rng.random(h.shape) >= dropout).astype(self.dtype) / (1.0 - dropout)
                h = h * keep
            else:
                keep = None
            masks.append(keep)
            cache.append(h)
        raise AssertionError("network has no layers")

    def predict_logits(self, X, batch: int = 8192):
        out = []
        for s in range(0, X.shape[0], batch):
            out.append(self.forward(X[s:s + batch])[0])
        if not out:
            return np.zeros((0, self.sizes[-1]), dtype=self.dtype)
        return np.concatenate(out)

    def backward(self, dlogits, state):
        """Gradients of the data loss for every parameter, given dLoss/dlogits."""
        cache, masks = state
        grads = [None] * len(self.params)
        g = dlogits
        for k in range(self.n_layers - 1, -1, -1):
            h = cache[k]
            grads[2 * k] = h.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k == 0:
                break
            g = g @ self.params[2 * k].T
            # ReLU and dropout of the layer feeding this one
            keep = masks[k - 1]
            g = g * (cache[k] > 0)
            if keep is not None:
                g = g * keep
        return grads


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * (g * g)
            p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


# losses: each returns (value, dLoss/dlogits) with the batch mean already applied

def multilabel_loss(logits, targets, p_w: float = 1.0, alpha: float = 0.0):
    """Weighted binary cross-entropy plus an L1 gap between probabilities and targets."""
    M = logits.shape[0]
    bce = -(targets * log_sigmoid(logits) + (1 - targets) * log_sigmoid(-logits)).sum() / M
    p = sigmoid(logits)
    gap = p - targets
    l1 = np.abs(gap).sum() / M
    value = p_w * bce + alpha * l1
    grad = (p_w * gap + alpha * np.sign(gap) * p * (1 - p)) / M
    return float(value), grad.astype(logits.dtype, copy=False)


def categorical_loss(logits, labels):
    """Mean softmax cross-entropy for integer labels."""
    M = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(M)
    value = -logp[rows, labels].sum() / M
    grad = np.exp(logp)
    grad[rows, labels] -= 1
    return float(value), (grad / M).astype(logits.dtype, copy=False)


def l2_penalty(net: MLP, coef: float):
    if coef <= 0:
        return 0.0, None
    value = coef * sum(float((W.astype(np.float64) ** 2).sum()) for W in net.weights())
    return value, [2 * coef * p if k % 2 == 0 else None for k, p in enumerate(net.params)]
