"""Classical layers: projections, the pre-norm transformer block, MLP heads.

Layers are stateless functions over a ``P`` mapping of parameter name to
leaf Tensor, so one registry can serve many concurrent forward passes.
"""
from __future__ import annotations

import math
from typing import Mapping, Optional

import numpy as np

from . import tensor as T
from .registry import CLASSICAL, ParamRegistry
from .tensor import Tensor

D_MODEL = 64
N_HEADS = 4
FFN_HIDDEN = 4 * D_MODEL


def init_linear(reg: ParamRegistry, name: str, fan_in: int, fan_out: int,
                rng: np.random.Generator) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    reg.add(f"{name}.W", rng.uniform(-bound, bound, size=(fan_in, fan_out)), CLASSICAL)
    reg.add(f"{name}.b", np.zeros(fan_out), CLASSICAL)


def init_layer_norm(reg: ParamRegistry, name: str, dim: int) -> None:
    reg.add(f"{name}.g", np.ones(dim), CLASSICAL)
    reg.add(f"{name}.b", np.zeros(dim), CLASSICAL)


def dense(P: Mapping[str, Tensor], name: str, x) -> Tensor:
    return T.linear(x, P[f"{name}.W"], P[f"{name}.b"])


def norm(P: Mapping[str, Tensor], name: str, x) -> Tensor:
    return T.layer_norm(x, P[f"{name}.g"], P[f"{name}.b"])


# ---------------------------------------------------------------------------
# transformer block
# ---------------------------------------------------------------------------

def init_transformer_block(reg: ParamRegistry, name: str, rng: np.random.Generator,
                           d: int = D_MODEL, hidden: int = FFN_HIDDEN) -> None:
    init_layer_norm(reg, f"{name}.ln1", d)
    init_linear(reg, f"{name}.qkv", d, 3 * d, rng)
    init_linear(reg, f"{name}.proj", d, d, rng)
    init_layer_norm(reg, f"{name}.ln2", d)
    init_linear(reg, f"{name}.fc1", d, hidden, rng)
    init_linear(reg, f"{name}.fc2", hidden, d, rng)


def self_attention(P: Mapping[str, Tensor], name: str, x: Tensor, n_heads: int = N_HEADS) -> Tensor:
    """Multi-head scaled dot-product attention over tokens x of shape (S, d)."""
    S, d = x.shape
    if d % n_heads:
        raise ValueError(f"width {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    qkv = dense(P, f"{name}.qkv", x)                       # (S, 3d)
    qkv = T.transpose(qkv.reshape(S, 3, n_heads, dh), (1, 2, 0, 3))  # (3, h, S, dh)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = T.affine(q @ T.transpose(k, (0, 2, 1)), 1.0 / math.sqrt(dh), 0.0)
    attn = T.softmax(scores, axis=-1)
    heads = attn @ v                                       # (h, S, dh)
    return T.transpose(heads, (1, 0, 2)).reshape(S, d)


def transformer_block(P: Mapping[str, Tensor], name: str, x: Tensor, n_heads: int = N_HEADS,
                      p: float = 0.1, rng: Optional[np.random.Generator] = None) -> Tensor:
    """x + Attn(LN(x)), then + FFN(LN(.)). Dropout only when ``rng`` is given."""
    if x.ndim != 2 or x.shape[1] != P[f"{name}.ln1.g"].shape[0]:
        raise ValueError(f"transformer block expects (S, d) tokens, got {x.shape}")
    h = self_attention(P, name, norm(P, f"{name}.ln1", x), n_heads)
    h = T.dropout(dense(P, f"{name}.proj", h), p, rng)
    x = x + h
    f = T.gelu(dense(P, f"{name}.fc1", norm(P, f"{name}.ln2", x)))
    f = T.dropout(f, p, rng)
    f = T.dropout(dense(P, f"{name}.fc2", f), p, rng)
    return x + f


# ---------------------------------------------------------------------------
# heads
# ---------------------------------------------------------------------------

def init_mlp_head(reg: ParamRegistry, name: str, d_in: int, n_classes: int,
                  rng: np.random.Generator, hidden: int = D_MODEL) -> None:
    init_linear(reg, f"{name}.fc1", d_in, hidden, rng)
    init_linear(reg, f"{name}.fc2", hidden, n_classes, rng)


def mlp_head(P: Mapping[str, Tensor], name: str, x: Tensor) -> Tensor:
    return dense(P, f"{name}.fc2", T.gelu(dense(P, f"{name}.fc1", x)))
