"""Conditional noise-prediction network with observable cross-attention.

The model patchifies a 16x16 image into 16 tokens, adds learned positional and
projected sinusoidal time embeddings, and runs a stack of cross-attention
blocks whose keys/values come from a 3-token condition sequence
[START, class-or-NULL, END]. Every attention probability map can be captured
during a forward pass without perturbing the output.

Condition ids: 0 is the reserved NULL condition (empty prompt), classes are
1..K; rows K+1 and K+2 of the embedding table hold the shared START/END tokens.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .checkpoint import load_params, save_params
from .errors import ConfigurationError, ShapeMismatch
from .tensor import Tensor

NULL_CONDITION = 0


@dataclass(frozen=True)
class DenoiserConfig:
    num_classes: int = 5
    image_size: int = 16
    patch_size: int = 4
    dim: int = 32
    heads: int = 2
    blocks: int = 2
    time_dim: int = 32
    mlp_hidden: int = 64

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ConfigurationError(
                f"patch size {self.patch_size} does not divide image size {self.image_size}"
            )
        if self.dim % self.heads:
            raise ConfigurationError(f"dim {self.dim} not divisible by heads {self.heads}")

    @property
    def grid(self):
        return self.image_size // self.patch_size

    @property
    def tokens(self):
        return self.grid * self.grid

    @property
    def patch_pixels(self):
        return self.patch_size * self.patch_size

    @property
    def pixels(self):
        return self.image_size * self.image_size


class AttentionProbe:
    """Attention probability maps of one forward pass, one entry per block.

    Each map has shape (batch, heads, image-tokens, condition-tokens). Maps
    from a frozen pass are detached array copies; maps from a trainable pass
    stay connected to the gradient trace.
    """

    def __init__(self):
        self.maps = []

    def _capture(self, attn):
        if attn.requires_grad:
            self.maps.append(attn)
        else:
            self.maps.append(attn.data.copy())

    def __len__(self):
        return len(self.maps)

    def arrays(self):
        return [m.data if isinstance(m, Tensor) else m for m in self.maps]

    def tensors(self):
        if not all(isinstance(m, Tensor) for m in self.maps):
            raise ValueError("probe holds detached maps from a frozen pass, no gradient trace available")
        return self.maps

    def map_for(self, block, head):
        arr = self.arrays()[block]
        return arr[:, head]


def sinusoidal_features(t, dim):
    """Transformer-style sin/cos features of integer timesteps."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def patchify(images, patch):
    """(B, H, W) -> (B, tokens, patch*patch), row-major over the patch grid."""
    b, h, w = images.shape
    g = h // patch
    x = images.reshape(b, g, patch, g, patch)
    x = x.transpose(0, 1, 3, 2, 4)
    return x.reshape(b, g * g, patch * patch)


class DenoiserModel:
    """Parameterized conditional noise predictor over flattened images."""

    def __init__(self, config, rng=None, params=None):
        self.config = config
        if params is not None:
            self.params = params
        else:
            if rng is None:
                raise ConfigurationError("DenoiserModel needs an rng stream or explicit params")
            self.params = self._init_params(rng)

    def _init_params(self, rng, init_scale=0.02):
        cfg = self.config
        p = OrderedDict()

        def w(name, shape, scale=init_scale):
            p[name] = Tensor(rng.child(name).normal(shape) * scale, requires_grad=True, op=name)

        def zeros(name, shape):
            p[name] = Tensor(np.zeros(shape), requires_grad=True, op=name)

        def ones(name, shape):
            p[name] = Tensor(np.ones(shape), requires_grad=True, op=name)

        w("patch_embed.weight", (cfg.patch_pixels, cfg.dim))
        zeros("patch_embed.bias", (cfg.dim,))
        w("pos_embed", (cfg.tokens, cfg.dim))
        w("class_embed", (cfg.num_classes + 3, cfg.dim))
        w("time_proj.weight", (cfg.time_dim, cfg.dim))
        zeros("time_proj.bias", (cfg.dim,))
        for b in range(cfg.blocks):
            ones(f"block{b}.norm1.gain", (cfg.dim,))
            zeros(f"block{b}.norm1.bias", (cfg.dim,))
            for proj in ("q", "k", "v", "o"):
                w(f"block{b}.attn.w{proj}", (cfg.dim, cfg.dim))
                zeros(f"block{b}.attn.b{proj}", (cfg.dim,))
            ones(f"block{b}.norm2.gain", (cfg.dim,))
            zeros(f"block{b}.norm2.bias", (cfg.dim,))
            w(f"block{b}.mlp.w1", (cfg.dim, cfg.mlp_hidden))
            zeros(f"block{b}.mlp.b1", (cfg.mlp_hidden,))
            w(f"block{b}.mlp.w2", (cfg.mlp_hidden, cfg.dim))
            zeros(f"block{b}.mlp.b2", (cfg.dim,))
        ones("out_norm.gain", (cfg.dim,))
        zeros("out_norm.bias", (cfg.dim,))
        zeros("head.weight", (cfg.dim, cfg.patch_pixels))
        zeros("head.bias", (cfg.patch_pixels,))
        return p

    # -- condition handling --------------------------------------------------

    def condition_tokens(self, cond):
        """Indices [START, class-or-NULL, END] per batch element."""
        cfg = self.config
        cond = np.asarray(cond, dtype=np.int64).reshape(-1)
        if cond.size and (cond.min() < 0 or cond.max() > cfg.num_classes):
            raise ConfigurationError(
                f"condition ids must lie in [0, {cfg.num_classes}], got min={cond.min()} max={cond.max()}"
            )
        start = cfg.num_classes + 1
        end = cfg.num_classes + 2
        idx = np.stack([np.full_like(cond, start), cond, np.full_like(cond, end)], axis=1)
        return idx

    # -- forward pass ----------------------------------------------------------

    def forward(self, x, t, cond, probe=None):
        """Predict the added noise; optionally capture attention maps into ``probe``."""
        cfg = self.config
        p = self.params
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2 and x.shape[1] == cfg.pixels:
            images = x.reshape(-1, cfg.image_size, cfg.image_size)
        elif x.ndim == 3 and x.shape[1:] == (cfg.image_size, cfg.image_size):
            images = x
        else:
            raise ShapeMismatch(
                f"denoiser input must be (B, {cfg.pixels}) or (B, {cfg.image_size}, {cfg.image_size}), got {x.shape}"
            )
        batch = images.shape[0]

        patches = T.as_tensor(patchify(images, cfg.patch_size))
        tok = T.matmul(patches, p["patch_embed.weight"]) + p["patch_embed.bias"]
        tok = tok + p["pos_embed"]
        tfeat = T.as_tensor(sinusoidal_features(t, cfg.time_dim))
        temb = T.matmul(tfeat, p["time_proj.weight"]) + p["time_proj.bias"]
        tok = tok + T.reshape(temb, (batch, 1, cfg.dim))

        ctx = T.embedding(p["class_embed"], self.condition_tokens(cond))

        dh = cfg.dim // cfg.heads

        def split_heads(z, length):
            z = T.reshape(z, (batch, length, cfg.heads, dh))
            return T.transpose(z, (0, 2, 1, 3))

        for b in range(cfg.blocks):
            q_in = T.layer_norm(tok, p[f"block{b}.norm1.gain"], p[f"block{b}.norm1.bias"])
            q = split_heads(T.matmul(q_in, p[f"block{b}.attn.wq"]) + p[f"block{b}.attn.bq"], cfg.tokens)
            k = split_heads(T.matmul(ctx, p[f"block{b}.attn.wk"]) + p[f"block{b}.attn.bk"], 3)
            v = split_heads(T.matmul(ctx, p[f"block{b}.attn.wv"]) + p[f"block{b}.attn.bv"], 3)
            logits = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
            attn = T.row_softmax(logits)
            if probe is not None:
                probe._capture(attn)
            mixed = T.matmul(attn, v)
            mixed = T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (batch, cfg.tokens, cfg.dim))
            tok = tok + (T.matmul(mixed, p[f"block{b}.attn.wo"]) + p[f"block{b}.attn.bo"])

            m_in = T.layer_norm(tok, p[f"block{b}.norm2.gain"], p[f"block{b}.norm2.bias"])
            hidden = T.gelu(T.matmul(m_in, p[f"block{b}.mlp.w1"]) + p[f"block{b}.mlp.b1"])
            tok = tok + (T.matmul(hidden, p[f"block{b}.mlp.w2"]) + p[f"block{b}.mlp.b2"])

        out = T.layer_norm(tok, p["out_norm.gain"], p["out_norm.bias"])
        out = T.matmul(out, p["head.weight"]) + p["head.bias"]

        # invert the patch layout back to flat pixels
        g, ps = cfg.grid, cfg.patch_size
        out = T.reshape(out, (batch, g, g, ps, ps))
        out = T.transpose(out, (0, 1, 3, 2, 4))
        return T.reshape(out, (batch, cfg.pixels))

    def __call__(self, x, t, cond, probe=None):
        return self.forward(x, t, cond, probe=probe)

    def predict(self, x, t, cond):
        """Forward pass without building a gradient trace; returns an ndarray."""
        with T.no_grad():
            return self.forward(x, t, cond).data

    # -- parameter management ---------------------------------------------------

    def set_trainable(self, flag):
        for p in self.params.values():
            p.requires_grad = bool(flag)
            if not flag:
                p.grad = None
        return self

    def copy(self, trainable=None):
        params = OrderedDict(
            (name, Tensor(p.data.copy(), requires_grad=p.requires_grad, op=name))
            for name, p in self.params.items()
        )
        clone = DenoiserModel(self.config, params=params)
        if trainable is not None:
            clone.set_trainable(trainable)
        return clone

    def param_arrays(self):
        return OrderedDict((name, p.data) for name, p in self.params.items())

    def load_arrays(self, arrays):
        for name, p in self.params.items():
            if name not in arrays:
                raise ConfigurationError(f"missing parameter {name!r} in source arrays")
            if arrays[name].shape != p.shape:
                raise ShapeMismatch(f"parameter {name!r}: shape {arrays[name].shape} != {p.shape}")
            p.data = arrays[name].astype(np.float64).copy()
        return self

    def save(self, path):
        meta = {"kind": "denoiser", "config": asdict(self.config)}
        save_params(path, self.params, meta=meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_params(path)
        if meta.get("kind") != "denoiser":
            raise ConfigurationError(f"{path} is not a denoiser checkpoint (kind={meta.get('kind')!r})")
        config = DenoiserConfig(**meta["config"])
        params = OrderedDict(
            (name, Tensor(arr, requires_grad=True, op=name)) for name, arr in arrays.items()
        )
        return cls(config, params=params)


def forward_with_probes(model, x, t, cond):
    """Run one forward pass capturing every cross-attention map."""
    probe = AttentionProbe()
    eps = model.forward(x, t, cond, probe=probe)
    return eps, probe
