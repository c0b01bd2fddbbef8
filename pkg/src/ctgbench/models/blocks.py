"""Transformer building blocks shared by the patch and tiny-lm families.

Blocks are pure functions over (tape, params, input); parameters are
created by init helpers in a fixed order so that a given seed always
produces bit-identical models.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

INIT_STD = 0.02


def linear_init(rng, d_in, d_out, std=INIT_STD):
    return rng.normal(0.0, std, size=(d_in, d_out))


def transformer_param_values(rng, d_model, n_layers, d_ff):
    """Ordered parameter arrays for a stack of pre-LN attention+MLP layers."""
    values = {}
    for i in range(n_layers):
        p = f"layers.{i}"
        values[f"{p}.ln1.g"] = np.ones(d_model)
        values[f"{p}.ln1.b"] = np.zeros(d_model)
        for t in ("q", "k", "v", "o"):
            values[f"{p}.attn.{t}.w"] = linear_init(rng, d_model, d_model)
            values[f"{p}.attn.{t}.b"] = np.zeros(d_model)
        values[f"{p}.ln2.g"] = np.ones(d_model)
        values[f"{p}.ln2.b"] = np.zeros(d_model)
        values[f"{p}.mlp.fc1.w"] = linear_init(rng, d_model, d_ff)
        values[f"{p}.mlp.fc1.b"] = np.zeros(d_ff)
        values[f"{p}.mlp.fc2.w"] = linear_init(rng, d_ff, d_model)
        values[f"{p}.mlp.fc2.b"] = np.zeros(d_model)
    values["ln_f.g"] = np.ones(d_model)
    values["ln_f.b"] = np.zeros(d_model)
    return values


def _project(tape, params, adapters, layer_prefix, target, x):
    """Base linear projection plus the LoRA delta when an adapter is attached."""
    w = params[f"{layer_prefix}.attn.{target}.w"]
    b = params[f"{layer_prefix}.attn.{target}.b"]
    out = tape.add(tape.matmul(x, w), b)
    adapter = adapters.get((layer_prefix, target)) if adapters else None
    if adapter is not None:
        down = tape.matmul(x, tape.transpose(adapter.A, (1, 0)))
        up = tape.matmul(down, tape.transpose(adapter.B, (1, 0)))
        out = tape.add(out, tape.scale(up, adapter.alpha / adapter.r))
    return out


def split_heads(tape, x, n_heads):
    b, t, d = x.shape
    if d % n_heads != 0:
        raise ShapeError(f"attention: d_model {d} not divisible by {n_heads} heads")
    return tape.transpose(tape.reshape(x, (b, t, n_heads, d // n_heads)), (0, 2, 1, 3))


def merge_heads(tape, x):
    b, h, t, dh = x.shape
    return tape.reshape(tape.transpose(x, (0, 2, 1, 3)), (b, t, h * dh))


def transformer_layer(tape, params, prefix, x, n_heads, attn_bias=None, adapters=None):
    """Pre-LN self-attention + MLP with residual connections.

    attn_bias is an optional constant array added to the attention scores
    (the causal mask for decoder-style models).
    """
    d = x.shape[-1]
    h = tape.layer_norm(x, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    q = split_heads(tape, _project(tape, params, adapters, prefix, "q", h), n_heads)
    k = split_heads(tape, _project(tape, params, adapters, prefix, "k", h), n_heads)
    v = split_heads(tape, _project(tape, params, adapters, prefix, "v", h), n_heads)

    scores = tape.scale(tape.matmul(q, tape.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d // n_heads))
    if attn_bias is not None:
        scores = tape.add(scores, attn_bias)
    ctx = merge_heads(tape, tape.matmul(tape.softmax(scores), v))
    x = tape.add(x, _project(tape, params, adapters, prefix, "o", ctx))

    h2 = tape.layer_norm(x, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    m = tape.gelu(tape.add(tape.matmul(h2, params[f"{prefix}.mlp.fc1.w"]), params[f"{prefix}.mlp.fc1.b"]))
    m = tape.add(tape.matmul(m, params[f"{prefix}.mlp.fc2.w"]), params[f"{prefix}.mlp.fc2.b"])
    return tape.add(x, m)


def causal_bias(seq_len, dtype=np.float64):
    """Additive attention bias: 0 on and below the diagonal, -1e9 above."""
    bias = np.triu(np.full((seq_len, seq_len), -1e9, dtype=dtype), k=1)
    return bias[None, None, :, :]
