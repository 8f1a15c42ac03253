"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError
from .tensor import find_nonfinite
from .optim import zero_grads


def grad_check(f, params, h=1e-5):
    """Max relative error between backprop and central differences.

    ``f`` is a deterministic zero-argument callable returning a scalar Tensor
    built from ``params`` (a name -> Tensor dict). Every parameter element is
    perturbed by +-h, so keep shapes small. Error per element is
    |analytic - central| / max(1, |central|); the max over all elements is
    returned.
    """
    if not (1e-6 <= h <= 1e-4):
        raise ValueError(f"step h must lie in [1e-6, 1e-4], got {h}")

    zero_grads(params)
    out = f()
    if not np.isfinite(out.data):
        bad = find_nonfinite(out)
        raise NonFiniteError(
            f"forward pass produced a non-finite value (op {bad.op if bad else 'unknown'!r})",
            op=bad.op if bad else None,
        )
    out.backward()

    analytic = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}", op=name)
        analytic[name] = g.copy()

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        ana = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f().item()
            flat[i] = orig - h
            lo = f().item()
            flat[i] = orig
            central = (hi - lo) / (2.0 * h)
            if not np.isfinite(central):
                raise NonFiniteError(f"finite difference non-finite for {name!r}[{i}]", op=name)
            err = abs(ana[i] - central) / max(1.0, abs(central))
            if err > worst:
                worst = err
    zero_grads(params)
    return worst
