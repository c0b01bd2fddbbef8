"""Classifier families and the build factory."""

from __future__ import annotations

from ..errors import ParameterError
from .base import NetworkClassifier, as_label_ints, labels_from_records
from .convattn import ConvAttnClassifier
from .patch import PatchTransformerClassifier
from .tinylm import LoraAdapter, TinyLmClassifier, attach_lora

KINDS = {
    "patch": PatchTransformerClassifier,
    "conv-attn": ConvAttnClassifier,
    "tiny-lm": TinyLmClassifier,
}


def build(kind: str, config: dict | None = None, seed: int = 0) -> NetworkClassifier:
    """Construct and initialize a classifier of the named family."""
    if kind not in KINDS:
        raise ParameterError(f"unknown model kind {kind!r}; expected one of {sorted(KINDS)}")
    model = KINDS[kind](**{**(config or {}), "seed": seed})
    model.ensure_built()
    return model


__all__ = [
    "KINDS",
    "build",
    "NetworkClassifier",
    "PatchTransformerClassifier",
    "ConvAttnClassifier",
    "TinyLmClassifier",
    "LoraAdapter",
    "attach_lora",
    "as_label_ints",
    "labels_from_records",
]
