"""The three ablation studies, applied to any trained classifier.

Limited-data retrains a fresh copy of the model (same initialization seed)
on a stratified subsample. Toco-removal and temporal perturbation reuse
the trained model as-is and only transform the test set; both verify via
checksum that evaluation never touched a parameter.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import params_checksum
from .errors import ConfigurationError, StateError, SupplyError
from .metrics import MetricsReport
from .models.base import labels_from_records
from .transforms import mask_segments, shuffle_chunks, zero_toco


def _model_tensors(model):
    tensors = dict(model.parameters())
    tensors.update(model.adapter_parameters())
    return tensors


def subsample_limited(pool, limited_n: int, seed: int):
    """Stratified subsample preserving the pool's class ratio within one record."""
    if limited_n > len(pool):
        raise SupplyError(f"limited_n {limited_n} exceeds pool of {len(pool)}")
    y = labels_from_records(pool)
    n_pos = int(round(limited_n * y.sum() / y.size))
    n_neg = limited_n - n_pos
    rng = np.random.default_rng([int(seed), 0xAB1])
    chosen = set()
    for cls, take in ((1, n_pos), (0, n_neg)):
        idx = np.flatnonzero(y == cls)
        if idx.size < take:
            raise SupplyError(f"class {cls} has {idx.size} records, need {take}")
        chosen.update(pool[i].id for i in rng.permutation(idx)[:take])
    return [r for r in pool if r.id in chosen]


def toco_removed_view(test_padded):
    return [zero_toco(r) for r in test_padded]


def temporal_view(test_padded, mask_fraction: float, chunk_s: int, seed: int, identity_shuffle: bool = False):
    """Shuffle one-minute chunks then mask a fraction of segments.

    identity_shuffle is a test hook: it skips the permutation so that a
    zero mask_fraction provably leaves records untouched.
    """
    out = []
    for r in test_padded:
        p = r if identity_shuffle else shuffle_chunks(r, chunk_s=chunk_s, seed=seed)
        out.append(mask_segments(p, mask_fraction, segment_s=chunk_s, seed=seed))
    return out


def _evaluate_frozen(model, records, inputs_for, threshold=0.5):
    """Score a perturbed view and prove the model was not mutated."""
    before = params_checksum(_model_tensors(model))
    scores = model.decision_scores(inputs_for(records))
    if params_checksum(_model_tensors(model)) != before:
        raise StateError("evaluation mutated model parameters")
    y = labels_from_records(records)
    return MetricsReport.from_scores(y, scores, threshold=threshold), np.asarray(scores)


def run_toco_removal(model, test_padded, inputs_for):
    """Zero the uterine channel at inference; no retraining."""
    if not getattr(model, "uses_toco", True):
        raise ConfigurationError("toco-removal needs a model trained on both channels")
    view = toco_removed_view(test_padded)
    return _evaluate_frozen(model, view, inputs_for)


def run_temporal(model, test_padded, mask_fraction, chunk_s, seed, inputs_for, identity_shuffle=False):
    """Chunk-shuffle plus random masking at inference; no retraining."""
    view = temporal_view(test_padded, mask_fraction, chunk_s, seed, identity_shuffle)
    return _evaluate_frozen(model, view, inputs_for)


def run_limited_data(model_factory, pool_padded, test_padded, limited_n, val_fraction,
                     config, data_seed, ablation_seed, inputs_for):
    """Retrain from the same initialization on a reduced pool; evaluate unchanged test.

    model_factory() must rebuild the model exactly as the baseline was built
    (same seed, adapters attached for lora mode), so data size is the only
    varied factor.
    """
    from . import training

    subset = subsample_limited(pool_padded, limited_n, ablation_seed)
    train, val = training.split(subset, val_fraction, data_seed)
    model = model_factory()
    if config.mode == "lora-finetune":
        fit_result = training.finetune_lora(model, inputs_for(train), inputs_for(val), config)
    else:
        fit_result = training.fit(model, inputs_for(train), inputs_for(val), config)
    y = labels_from_records(test_padded)
    scores = model.decision_scores(inputs_for(test_padded))
    report = MetricsReport.from_scores(y, scores)
    return report, np.asarray(scores), fit_result, model
