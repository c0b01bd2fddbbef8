"""Shared estimator plumbing for the classifier families.

Estimators follow the scikit-learn protocol: constructor args are stored
verbatim (get_params/set_params work), fitted state lives in trailing-
underscore attributes, fit returns self. Families differ in how they
encode records and run the forward pass; everything else lives here.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ..autodiff import GradTape, Tensor
from ..errors import ParameterError
from ..records import APO, NPO, CtgRecord

# Fixed input normalization. Constants, not data statistics, so there is
# no train/test leakage and encoding is deterministic. FHR is centered on
# a typical baseline; toco is scaled only, so an all-zero (quiet or zeroed)
# channel stays at the neutral value 0.
FHR_CENTER = 135.0
FHR_SCALE = 25.0
TOCO_SCALE = 50.0


def as_label_ints(y):
    """Map APO/NPO strings (or 0/1 ints) to the canonical 1=APO, 0=NPO."""
    out = []
    for v in y:
        if isinstance(v, str):
            if v == APO:
                out.append(1)
            elif v == NPO:
                out.append(0)
            else:
                raise ParameterError(f"unknown label {v!r}")
        elif v in (0, 1):
            out.append(int(v))
        else:
            raise ParameterError(f"unknown label {v!r}")
    return np.array(out, dtype=np.int64)


def labels_from_records(records):
    for r in records:
        if r.label is None:
            raise ParameterError(f"record {r.id} has no label")
    return as_label_ints([r.label for r in records])


def validate_records(records, hz=None, equal_len=True):
    """Common input checks shared by every family's encode step."""
    if len(records) == 0:
        raise ParameterError("empty record batch")
    for r in records:
        if not isinstance(r, CtgRecord):
            raise ParameterError(f"expected CtgRecord, got {type(r).__name__}")
        if hz is not None and r.hz != hz:
            raise ParameterError(f"record {r.id} is {r.hz} Hz, expected {hz} Hz")
    if equal_len:
        lengths = {len(r) for r in records}
        if len(lengths) > 1:
            raise ParameterError(f"records in a batch must share one length, got {sorted(lengths)}")
    return records


def normalized_channels(record):
    """(fhr, toco) scaled to O(1); missing FHR samples become exactly 0."""
    fhr = np.where(record.mask, (record.fhr - FHR_CENTER) / FHR_SCALE, 0.0)
    toco = np.where(record.mask, record.toco / TOCO_SCALE, 0.0)
    return fhr, toco


def slice_encoded(encoded, idx):
    return {k: v[idx] for k, v in encoded.items()}


class NetworkClassifier(BaseEstimator, ClassifierMixin):
    """Base for tape-backed classifiers; subclasses define params and forward.

    Subclass contract:
      _init_param_values(rng) -> ordered {name: ndarray}
      encode(records)         -> {key: batch-first ndarray}
      forward_logits(tape, encoded) -> Tensor of shape (batch, 2)
    """

    #: subclasses list constructor args that define architecture extents
    classes_ = np.array([0, 1])

    def ensure_built(self):
        if not hasattr(self, "params_"):
            rng = np.random.default_rng(self.seed)
            values = self._init_param_values(rng)
            self.params_ = {name: Tensor(np.asarray(v, dtype=self.dtype), name=name) for name, v in values.items()}
        return self

    def parameters(self):
        self.ensure_built()
        return self.params_

    def adapter_parameters(self):
        return {}

    def trainable(self):
        """Name -> Tensor map of what the optimizer may update."""
        return dict(self.parameters())

    def n_parameters(self):
        total = sum(t.value.size for t in self.parameters().values())
        total += sum(t.value.size for t in self.adapter_parameters().values())
        return int(total)

    def loss_on(self, tape, encoded, y, weights=None):
        logits = self.forward_logits(tape, encoded)
        return tape.cross_entropy_with_logits(logits, y, weights)

    # evaluation batch cap; families with heavy per-example footprints lower it
    eval_batch_size = 64

    def logits(self, records, batch_size=None):
        self.ensure_built()
        batch_size = batch_size or self.eval_batch_size
        encoded = self.encode(records)
        n = len(records)
        outs = []
        for lo in range(0, n, batch_size):
            idx = np.arange(lo, min(lo + batch_size, n))
            tape = GradTape()
            outs.append(self.forward_logits(tape, slice_encoded(encoded, idx)).value)
        return np.concatenate(outs, axis=0)

    def predict_proba(self, X):
        z = self.logits(X).astype(np.float64)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def decision_scores(self, X):
        """P(APO); the score column every evaluation consumes."""
        return self.predict_proba(X)[:, 1]

    def predict(self, X):
        return (self.decision_scores(X) >= 0.5).astype(np.int64)

    def fit(self, X, y=None, val=None, config=None):
        """Train on records X; y defaults to the labels carried by X.

        val is an optional (records, labels) holdout; without it a
        stratified slice of X is carved off per the config. Returns self;
        the FitResult lands in self.fit_result_.
        """
        from .. import training

        if y is not None:
            y = as_label_ints(y)
            X = [r.copy_with(label=APO if yi == 1 else NPO) for r, yi in zip(X, y)]
        cfg = config or getattr(self, "train_config", None) or training.TrainConfig()
        if val is None:
            train_records, val_records = training.split(X, cfg.val_fraction, cfg.seed)
        else:
            train_records, val_records = X, val
        self.fit_result_ = training.fit(self, train_records, val_records, cfg)
        return self
