"""Decoder-only word-level language model used as a text classifier.

Records are serialized to text, tokenized against a fixed vocabulary, and
run through a causal transformer. There is no unembedding and no
next-token output: the final hidden states are mean-pooled over all token
positions and mapped to 2 logits. Low-rank adapters can be attached to
every q/k/v/o projection, freezing the base weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..errors import ParameterError, ShapeError, StateError
from ..text import default_vocabulary, serialize_text
from . import blocks
from .base import NetworkClassifier, validate_records

LORA_TARGETS = ("q", "k", "v", "o")


@dataclass
class LoraAdapter:
    """Rank-r update for one projection: W x + (alpha/r) * B (A x)."""

    layer: str
    target: str
    A: Tensor
    B: Tensor
    r: int
    alpha: float


class TinyLmClassifier(NetworkClassifier):
    # a strided record is one ~750-token sequence; the tape keeps every
    # attention intermediate alive, so wide eval batches exhaust memory
    eval_batch_size = 8

    def __init__(self, vocab=None, d_model=64, n_layers=2, n_heads=2, d_ff=None,
                 max_seq_len=4096, style="paired", seed=0, dtype="float32", train_config=None):
        self.vocab = vocab
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_seq_len = max_seq_len
        self.style = style
        self.seed = seed
        self.dtype = dtype
        self.train_config = train_config

    @property
    def uses_toco(self):
        return self.style == "paired"

    def _vocabulary(self):
        if not hasattr(self, "vocab_"):
            self.vocab_ = self.vocab if self.vocab is not None else default_vocabulary()
        return self.vocab_

    def _init_param_values(self, rng):
        if self.d_model <= 0 or self.n_layers <= 0 or self.max_seq_len <= 0:
            raise ParameterError("tiny-lm extents must be positive")
        if self.d_model % self.n_heads != 0:
            raise ParameterError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        d_ff = self.d_ff or 4 * self.d_model
        vocab = self._vocabulary()
        values = {
            "embed.w": rng.normal(0.0, blocks.INIT_STD, size=(len(vocab), self.d_model)),
            "pos.w": rng.normal(0.0, blocks.INIT_STD, size=(self.max_seq_len, self.d_model)),
        }
        values.update(blocks.transformer_param_values(rng, self.d_model, self.n_layers, d_ff))
        values["head.w"] = np.zeros((self.d_model, 2))
        values["head.b"] = np.zeros(2)
        return values

    # ---- text encoding ----

    def record_text(self, record):
        return serialize_text(record, style=self.style)

    def encode(self, records):
        validate_records(records, hz=1, equal_len=False)
        vocab = self._vocabulary()
        seqs = [vocab.tokenize(self.record_text(r)) for r in records]
        lengths = {len(s) for s in seqs}
        if len(lengths) > 1:
            raise ShapeError(f"records serialize to unequal token counts {sorted(lengths)}; batch them separately")
        seq_len = lengths.pop()
        if seq_len > self.max_seq_len:
            raise ShapeError(f"sequence of {seq_len} tokens exceeds max_seq_len {self.max_seq_len}")
        ids = np.stack(seqs)
        return {
            "ids": ids,
            "pos_ids": np.broadcast_to(np.arange(seq_len), ids.shape).copy(),
        }

    def forward_logits(self, tape, encoded):
        p = self.parameters()
        adapters = getattr(self, "adapters_", None)
        adapter_map = (
            {(f"layers.{a.layer}", a.target): a for a in adapters} if adapters else None
        )
        x = tape.add(tape.embedding_lookup(p["embed.w"], encoded["ids"]),
                     tape.embedding_lookup(p["pos.w"], encoded["pos_ids"]))
        bias = blocks.causal_bias(encoded["ids"].shape[1], dtype=x.value.dtype)
        for i in range(self.n_layers):
            x = blocks.transformer_layer(tape, p, f"layers.{i}", x, self.n_heads,
                                         attn_bias=bias, adapters=adapter_map)
        x = tape.layer_norm(x, p["ln_f.g"], p["ln_f.b"])
        pooled = tape.mean_pool(x, axis=1)
        return tape.add(tape.matmul(pooled, p["head.w"]), p["head.b"])

    # ---- adapters ----

    def adapter_parameters(self):
        out = {}
        for a in getattr(self, "adapters_", []) or []:
            out[f"layers.{a.layer}.attn.{a.target}.lora_A"] = a.A
            out[f"layers.{a.layer}.attn.{a.target}.lora_B"] = a.B
        return out

    def trainable(self):
        params = self.parameters()
        if not getattr(self, "adapters_", None):
            return dict(params)
        trainable = dict(self.adapter_parameters())
        trainable["head.w"] = params["head.w"]
        trainable["head.b"] = params["head.b"]
        return trainable


def attach_lora(model: TinyLmClassifier, r: int = 8, alpha: float = 16.0, seed: int = 0) -> TinyLmClassifier:
    """Add rank-r adapters to every q/k/v/o projection and freeze the base.

    B starts at zero, so the adapted forward is exactly the base forward
    until the first update reaches B. Returns the same model instance.
    """
    if not isinstance(model, TinyLmClassifier):
        raise ParameterError(f"adapters target the tiny-lm family, got {type(model).__name__}")
    if getattr(model, "adapters_", None):
        raise StateError("adapters already attached")
    if r <= 0:
        raise ParameterError(f"rank must be positive, got {r}")
    model.ensure_built()
    rng = np.random.default_rng([seed, 0x10AA])
    dtype = model.params_["embed.w"].value.dtype
    adapters = []
    for i in range(model.n_layers):
        for t in LORA_TARGETS:
            d_in = model.params_[f"layers.{i}.attn.{t}.w"].value.shape[0]
            d_out = model.params_[f"layers.{i}.attn.{t}.w"].value.shape[1]
            a = Tensor(rng.normal(0.0, 0.02, size=(r, d_in)).astype(dtype), name=f"layers.{i}.attn.{t}.lora_A")
            b = Tensor(np.zeros((d_out, r), dtype=dtype), name=f"layers.{i}.attn.{t}.lora_B")
            adapters.append(LoraAdapter(layer=str(i), target=t, A=a, B=b, r=r, alpha=float(alpha)))
    model.adapters_ = adapters
    return model
