"""Multi-scale 1-D convolutional classifier with channel attention.

Three parallel branches with different kernel widths read the 2-channel
signal at stride 4, a second convolution mixes branches over a wider
effective window (about 75 s of signal), and a squeeze-excite block gates
channels before masked temporal pooling. The wide second stage is what
lets the model see a contraction peak and a following deceleration in one
receptive field.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError, ShapeError
from . import blocks
from .base import NetworkClassifier, normalized_channels, validate_records


class ConvAttnClassifier(NetworkClassifier):
    def __init__(self, branch_kernels=(3, 7, 15), channels_per_branch=8, stage2_kernel=15,
                 pool_stride=4, se_hidden=12, seed=0, dtype="float32", train_config=None):
        self.branch_kernels = branch_kernels
        self.channels_per_branch = channels_per_branch
        self.stage2_kernel = stage2_kernel
        self.pool_stride = pool_stride
        self.se_hidden = se_hidden
        self.seed = seed
        self.dtype = dtype
        self.train_config = train_config

    @property
    def uses_toco(self):
        return True

    @property
    def n_channels(self):
        return len(self.branch_kernels) * self.channels_per_branch

    def _init_param_values(self, rng):
        if not self.branch_kernels or self.channels_per_branch <= 0 or self.se_hidden <= 0:
            raise ParameterError("conv-attn extents must be positive")
        for k in tuple(self.branch_kernels) + (self.stage2_kernel,):
            if k % 2 == 0 or k <= 0:
                raise ParameterError(f"kernels must be odd and positive, got {k}")
        c = self.n_channels
        values = {}
        for k in self.branch_kernels:
            fan_in = 2 * k
            values[f"branch.{k}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(self.channels_per_branch, 2, k))
            values[f"branch.{k}.b"] = np.zeros(self.channels_per_branch)
        values["conv2.w"] = rng.normal(0.0, np.sqrt(2.0 / (c * self.stage2_kernel)), size=(c, c, self.stage2_kernel))
        values["conv2.b"] = np.zeros(c)
        values["se.fc1.w"] = rng.normal(0.0, np.sqrt(2.0 / c), size=(c, self.se_hidden))
        values["se.fc1.b"] = np.zeros(self.se_hidden)
        values["se.fc2.w"] = rng.normal(0.0, np.sqrt(2.0 / self.se_hidden), size=(self.se_hidden, c))
        values["se.fc2.b"] = np.zeros(c)
        values["head.w"] = np.zeros((c, 2))
        values["head.b"] = np.zeros(2)
        return values

    def encode(self, records):
        validate_records(records, hz=1)
        n = len(records[0])
        s = self.pool_stride
        if n % s != 0:
            raise ShapeError(f"input length {n} not divisible by pool stride {s}")
        xs, weights = [], []
        for r in records:
            fhr, toco = normalized_channels(r)
            xs.append(np.stack([fhr, toco]))
            # weight per strided step: fraction of observed samples in its block
            weights.append(r.mask.reshape(n // s, s).mean(axis=1))
        return {
            "x": np.stack(xs).astype(self.dtype),
            "weights": np.stack(weights).astype(self.dtype),
        }

    def forward_logits(self, tape, encoded):
        p = self.parameters()
        x = encoded["x"]
        branches = [
            tape.relu(tape.conv1d(x, p[f"branch.{k}.w"], p[f"branch.{k}.b"], padding="same", stride=self.pool_stride))
            for k in self.branch_kernels
        ]
        feats = tape.concat(branches, axis=1)
        feats = tape.relu(tape.conv1d(feats, p["conv2.w"], p["conv2.b"], padding="same"))

        w = encoded["weights"][:, None, :]
        squeezed = tape.masked_mean(feats, w, axis=2)
        gates = tape.sigmoid(
            tape.add(
                tape.matmul(tape.relu(tape.add(tape.matmul(squeezed, p["se.fc1.w"]), p["se.fc1.b"])), p["se.fc2.w"]),
                p["se.fc2.b"],
            )
        )
        gated = tape.channel_scale(feats, gates)
        pooled = tape.masked_mean(gated, w, axis=2)
        return tape.add(tape.matmul(pooled, p["head.w"]), p["head.b"])
