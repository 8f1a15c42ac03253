"""Forward noising, the noise-prediction objective, and ancestral sampling."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .denoiser import NULL_CONDITION
from .errors import ConfigurationError, NonFiniteError
from .optim import AdamState, adam_step, zero_grads
from .tensor import find_nonfinite


def _bar_coeffs(schedule, t, ndim):
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t > schedule.T):
        raise ConfigurationError(f"timestep out of range [0, {schedule.T}]: {t}")
    ab = schedule.alpha_bar(t)
    ab = np.asarray(ab, dtype=np.float64)
    if ab.ndim:
        ab = ab.reshape(ab.shape + (1,) * (ndim - 1))
    return np.sqrt(ab), np.sqrt(1.0 - ab)


def q_sample(x0, t, noise, schedule):
    """Close-form forward noising: sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ConfigurationError(f"q_sample: x0 shape {x0.shape} != noise shape {noise.shape}")
    c0, c1 = _bar_coeffs(schedule, t, x0.ndim)
    return c0 * x0 + c1 * noise


def denoise_loss(model, x0, cond, schedule, rng, t=None, noise=None):
    """Mean over the batch of the squared noise-prediction error.

    Timesteps default to uniform in [1, T] and noise to standard normal, both
    drawn from ``rng``; pass them explicitly for deterministic checks. The
    returned scalar is differentiable w.r.t. the model parameters.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[0] == 0:
        raise ConfigurationError(f"denoise_loss: batch must be a nonempty (B, D) array, got {x0.shape}")
    batch = x0.shape[0]
    if t is None:
        t = rng.integers(1, schedule.T + 1, (batch,))
    if noise is None:
        noise = rng.normal(x0.shape)
    x_t = q_sample(x0, t, noise, schedule)
    pred = model.forward(x_t, t, cond)
    diff = T.sub(pred, T.as_tensor(noise))
    return T.scale(T.tsum(T.mul(diff, diff)), 1.0 / batch)


def _chain(schedule, steps):
    """Descending timestep chain; a strided subset when steps < T."""
    if steps is None or steps >= schedule.T:
        return list(range(schedule.T, 0, -1))
    if steps < 1:
        raise ConfigurationError(f"inference steps must be >= 1, got {steps}")
    ts = np.unique(np.round(np.linspace(1, schedule.T, steps)).astype(int))
    return list(ts[::-1])


def ancestral_sample(model, cond, schedule, rng, guidance=1.0, steps=None, dim=None):
    """Sample by iterating the reverse chain from pure noise.

    Each image draws from its own substream of ``rng`` so results are
    independent of batch composition. With guidance != 1 the prediction is
    eps_u + guidance * (eps_c - eps_u) using the NULL-condition branch.
    Returns model-space values, shape (B, dim).
    """
    cond = np.asarray(cond, dtype=np.int64).reshape(-1)
    batch = cond.size
    if dim is None:
        dim = model.config.pixels
    streams = [rng.child(i) for i in range(batch)]
    x = np.stack([s.normal((dim,)) for s in streams])
    chain = _chain(schedule, steps)
    null = np.full(batch, NULL_CONDITION, dtype=np.int64)

    for k, t in enumerate(chain):
        t_prev = chain[k + 1] if k + 1 < len(chain) else 0
        ab_cur = float(schedule.alpha_bar(t))
        ab_prev = float(schedule.alpha_bar(t_prev))
        alpha_eff = ab_cur / ab_prev
        beta_eff = 1.0 - alpha_eff
        tvec = np.full(batch, t, dtype=np.int64)
        eps_c = model.predict(x, tvec, cond)
        if guidance == 1.0:
            eps = eps_c
        else:
            eps_u = model.predict(x, tvec, null)
            eps = eps_u + guidance * (eps_c - eps_u)
        mean = (x - beta_eff / np.sqrt(1.0 - ab_cur) * eps) / np.sqrt(alpha_eff)
        if t_prev > 0:
            var = beta_eff * (1.0 - ab_prev) / (1.0 - ab_cur)
            z = np.stack([s.normal((dim,)) for s in streams])
            x = mean + np.sqrt(var) * z
        else:
            x = mean
    return x


def to_model_space(images):
    """[0,1] images -> flattened [-1,1] model space."""
    images = np.asarray(images, dtype=np.float64)
    return (images * 2.0 - 1.0).reshape(images.shape[0], -1)


def from_model_space(x, image_size=16):
    """Flattened model space -> clipped [0,1] images."""
    x = np.clip((np.asarray(x) + 1.0) / 2.0, 0.0, 1.0)
    return x.reshape(x.shape[0], image_size, image_size)


def sample_images(model, cond, schedule, rng, guidance=1.0, steps=None):
    """Ancestral samples mapped back to [0,1] pixel grids."""
    x = ancestral_sample(model, cond, schedule, rng, guidance=guidance, steps=steps)
    return from_model_space(x, model.config.image_size)


def train_denoiser(model, images, labels, schedule, rng, iterations, batch_size=64,
                   lr=1e-3, cond_dropout=0.1, log_every=100):
    """Fit the noise-prediction objective on labeled [0,1] images.

    A fraction of conditions is replaced by NULL each batch so the empty-prompt
    branch (and classifier-free guidance) is meaningful. Returns the loss curve
    as {iteration: loss} pairs sampled every ``log_every`` steps.
    """
    x0 = to_model_space(images)
    labels = np.asarray(labels, dtype=np.int64)
    n = x0.shape[0]
    state = AdamState(lr=lr)
    loop = rng.child("loop")
    curve = []
    for it in range(iterations):
        idx = loop.integers(0, n, (batch_size,))
        cond = labels[idx].copy()
        if cond_dropout > 0:
            drop = loop.uniform(shape=(batch_size,)) < cond_dropout
            cond[drop] = NULL_CONDITION
        loss = denoise_loss(model, x0[idx], cond, schedule, loop)
        if not np.isfinite(loss.data):
            bad = find_nonfinite(loss)
            raise NonFiniteError(
                f"training loss non-finite at iteration {it}",
                op=bad.op if bad else None,
                context={"iteration": it},
            )
        zero_grads(model.params)
        loss.backward()
        adam_step(model.params, state)
        if it % log_every == 0 or it == iterations - 1:
            curve.append({"iteration": it, "loss": loss.item()})
    return curve
