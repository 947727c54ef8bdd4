"""Finite-difference verification of the hand-written gradients."""

from __future__ import annotations

import numpy as np

from .network import MLP, categorical_loss, multilabel_loss


def _loss_fn(model, p_w, alpha):
    if model.variant == "categorical":
        return categorical_loss
    return lambda z, y: multilabel_loss(z, y, p_w, alpha)


def gradient_check(model, batch, h: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``batch`` is (X, targets). Runs in float64 with dropout off; ``floor`` keeps the
    ratio meaningful for gradients that are numerically zero.
    """
    X, Y = batch
    X = np.asarray(X, dtype=np.float64)
    cfg = model.config
    net = MLP(model.net.sizes, dtype=np.float64, params=model.net.params)
    loss = _loss_fn(model, cfg.loss_weight, cfg.l1_regularizer)
    logits, state = net.forward(X)
    _, dlog = loss(logits, Y)
    grads = net.backward(dlog, state)
    worst = 0.0
    for p, g in zip(net.params, grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss(net.forward(X)[0], Y)[0]
            flat[i] = old - h
            down = loss(net.forward(X)[0], Y)[0]
            flat[i] = old
            num = (up - down) / (2 * h)
            err = abs(num - gflat[i]) / max(abs(num) + abs(gflat[i]), floor)
            worst = max(worst, err)
    return worst
