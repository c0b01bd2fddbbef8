"""Patch-based transformer over the 2-channel numeric signal.

The padded 1 Hz recording is cut into fixed-length patches; each patch
(fhr and toco stretches concatenated) is linearly embedded, learned
positional embeddings are added, and a small pre-LN transformer encodes
the patch sequence. The head sees a mean over patches that contain at
least one observed sample, so padding never dilutes the pooled feature.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError, ShapeError
from . import blocks
from .base import NetworkClassifier, normalized_channels, validate_records


class PatchTransformerClassifier(NetworkClassifier):
    def __init__(self, patch_len=60, d_model=32, n_layers=2, n_heads=2, d_ff=None,
                 max_patches=60, seed=0, dtype="float32", train_config=None):
        self.patch_len = patch_len
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_patches = max_patches
        self.seed = seed
        self.dtype = dtype
        self.train_config = train_config

    @property
    def uses_toco(self):
        return True

    def _check_extents(self):
        if self.patch_len <= 0 or self.d_model <= 0 or self.n_layers <= 0 or self.max_patches <= 0:
            raise ParameterError("patch transformer extents must be positive")
        if self.d_model % self.n_heads != 0:
            raise ParameterError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")

    def _init_param_values(self, rng):
        self._check_extents()
        d_ff = self.d_ff or 4 * self.d_model
        values = {
            "embed.w": blocks.linear_init(rng, 2 * self.patch_len, self.d_model),
            "embed.b": np.zeros(self.d_model),
            "pos.w": rng.normal(0.0, blocks.INIT_STD, size=(self.max_patches, self.d_model)),
        }
        values.update(blocks.transformer_param_values(rng, self.d_model, self.n_layers, d_ff))
        values["head.w"] = np.zeros((self.d_model, 2))
        values["head.b"] = np.zeros(2)
        return values

    def encode(self, records):
        validate_records(records, hz=1)
        n = len(records[0])
        if n % self.patch_len != 0:
            raise ShapeError(f"input length {n} not divisible by patch_len {self.patch_len}")
        n_patches = n // self.patch_len
        if n_patches > self.max_patches:
            raise ShapeError(f"{n_patches} patches exceed the positional table of {self.max_patches}")
        xs, weights = [], []
        for r in records:
            fhr, toco = normalized_channels(r)
            patches = np.concatenate(
                [fhr.reshape(n_patches, self.patch_len), toco.reshape(n_patches, self.patch_len)], axis=1
            )
            xs.append(patches)
            weights.append(r.mask.reshape(n_patches, self.patch_len).any(axis=1).astype(np.float64))
        return {
            "x": np.stack(xs).astype(self.dtype),
            "pos_ids": np.broadcast_to(np.arange(n_patches), (len(records), n_patches)).copy(),
            "weights": np.stack(weights).astype(self.dtype),
        }

    def forward_logits(self, tape, encoded):
        p = self.parameters()
        x = tape.add(tape.matmul(encoded["x"], p["embed.w"]), p["embed.b"])
        x = tape.add(x, tape.embedding_lookup(p["pos.w"], encoded["pos_ids"]))
        for i in range(self.n_layers):
            x = blocks.transformer_layer(tape, p, f"layers.{i}", x, self.n_heads)
        x = tape.layer_norm(x, p["ln_f.g"], p["ln_f.b"])
        pooled = tape.masked_mean(x, encoded["weights"][:, :, None], axis=1)
        return tape.add(tape.matmul(pooled, p["head.w"]), p["head.b"])
