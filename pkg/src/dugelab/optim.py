"""Bias-corrected Adam over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ShapeMismatch


@dataclass
class AdamState:
    """First/second-moment accumulators plus the step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state):
    """One in-place Adam update from each parameter's accumulated gradient.

    ``params`` is an ordered name -> Tensor dict; tensors without a gradient
    are treated as zero-gradient. NaN gradients abort with the step index.
    """
    state.step += 1
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if np.isnan(g).any():
            raise NonFiniteError(f"NaN gradient in {name!r} at optimizer step {state.step}", op=name)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        elif state.m[name].shape != p.shape:
            raise ShapeMismatch(
                f"adam_step: accumulator for {name!r} has shape {state.m[name].shape}, parameter {p.shape}"
            )
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / (1.0 - state.beta1 ** state.step)
        v_hat = state.v[name] / (1.0 - state.beta2 ** state.step)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def zero_grads(params):
    for p in params.values():
        p.zero_grad()
