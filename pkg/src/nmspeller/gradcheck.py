"""Central-difference verification harness for the gradient tape."""

from __future__ import annotations

import numpy as np

from .tensor import backward, no_grad


def finite_difference_check(f, params, eps=1e-5):
    """Compare tape gradients of ``f`` against central finite differences.

    ``f`` rebuilds the scalar loss from scratch on every call and must be
    deterministic. ``params`` is an iterable of tensors or (name, tensor)
    pairs. Returns ``{name: max relative error}`` where the relative error
    uses a max(|analytic|, |numeric|, 1e-8) denominator.
    """
    eps = float(eps)
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    named = []
    for i, p in enumerate(params):
        if isinstance(p, tuple):
            named.append(p)
        else:
            named.append((p.name or f"param{i}", p))

    for _, t in named:
        t.zero_grad()
    backward(f())
    analytic = {name: np.array(t.grad, copy=True) for name, t in named}

    report = {}
    for name, t in named:
        flat = t.data.reshape(-1)
        ga = analytic[name].reshape(-1)
        worst = 0.0
        for j in range(flat.size):
            kept = flat[j]
            flat[j] = kept + eps
            with no_grad():
                up = f().item()
            flat[j] = kept - eps
            with no_grad():
                down = f().item()
            flat[j] = kept
            numeric = (up - down) / (2.0 * eps)
            err = abs(ga[j] - numeric) / max(abs(ga[j]), abs(numeric), 1e-8)
            if err > worst:
                worst = err
        report[name] = worst
    return report
