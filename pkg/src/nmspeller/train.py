"""Mini-batch AdamW training over sentence pairs.

The loss is the position-mean cross entropy over real characters; boundary
tokens and padding are excluded. Batches pad every layout to the widest
sentence in the batch. Training is bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import ConfigError, TrainingDivergedError
from .vocab import CLS_ID, PAD_ID, SEP_ID


class AdamW:
    """Adam with decoupled weight decay; decay skips tensors flagged decay=False."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and p.decay:
                update = update + self.weight_decay * p.data
            p.data -= self.lr * update

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def padded_layout(pair, width):
    """([cls] src [sep] pad*, [cls] tgt [sep] pad*, ignored positions)."""
    n = len(pair.source)
    pad = [PAD_ID] * (width - n - 2)
    ids = [CLS_ID] + pair.source + [SEP_ID] + pad
    tgt = [CLS_ID] + pair.target + [SEP_ID] + pad
    ignore = {0, n + 1} | set(range(n + 2, width))
    return ids, tgt, ignore


def batch_loss(model, batch, training, rng):
    """Scalar loss tensor and the number of scored positions."""
    width = max(len(p.source) for p in batch) + 2
    total = None
    positions = 0
    for pair in batch:
        ids, tgt, ignore = padded_layout(pair, width)
        logits = model.forward(ids, training=training, rng=rng)
        ce = T.cross_entropy(logits, tgt, ignore)
        weighted = T.scale(ce, float(len(pair.source)))
        total = weighted if total is None else T.add(total, weighted)
        positions += len(pair.source)
    return T.scale(total, 1.0 / positions), positions


def train(config, pairs, model, rng=None, log=None):
    """Run the configured number of epochs; returns per-epoch mean losses."""
    config.validate()
    if not pairs:
        raise ConfigError("training data is empty")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    opt = AdamW(model.parameters(), config.learning_rate,
                weight_decay=config.weight_decay)
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        loss_sum = 0.0
        position_sum = 0
        for start in range(0, len(order), config.batch_size):
            batch = [pairs[i] for i in order[start:start + config.batch_size]]
            model.zero_grad()
            loss, count = batch_loss(model, batch, training=True, rng=rng)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(
                    f"loss became {value} at epoch {epoch}, step {start // config.batch_size}"
                )
            T.backward(loss)
            opt.step()
            loss_sum += value * count
            position_sum += count
        curve.append(loss_sum / position_sum)
        if log is not None:
            log(epoch, curve[-1])
    return curve
