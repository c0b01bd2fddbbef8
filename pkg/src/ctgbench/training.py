"""Training protocols: splits, Adam, early stopping, and LoRA fine-tuning.

Two modes share one loop. Scratch training runs up to max_epochs and stops
after `patience` consecutive epochs without strict validation AU-ROC
improvement (> best + 1e-6). LoRA fine-tuning runs exactly lora_epochs
with the same validation monitoring and no patience stop. Both snapshot
the best epoch's parameters and restore them on exit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import GradTape, backward
from .errors import ContractError, DivergenceError, ParameterError, StateError, StratificationError, SupplyError
from .metrics import auroc
from .models.base import labels_from_records, slice_encoded

IMPROVEMENT_TOL = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    patience: int = 5
    val_fraction: float = 0.05
    batch_size: int = 8
    learning_rate: float | None = None  # None resolves by mode: 1e-3 scratch, 2e-4 lora
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    mode: str = "scratch"
    lora_epochs: int = 3
    class_weight: str = "none"

    def validate(self):
        if not (0.0 < self.val_fraction < 1.0):
            raise ParameterError(f"val_fraction {self.val_fraction} outside (0, 1)")
        if self.patience < 1:
            raise ParameterError(f"patience must be >= 1, got {self.patience}")
        if self.lora_epochs < 1:
            raise ParameterError(f"lora_epochs must be >= 1, got {self.lora_epochs}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ParameterError("max_epochs and batch_size must be >= 1")
        if self.mode not in ("scratch", "lora-finetune"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.class_weight not in ("none", "balanced"):
            raise ParameterError(f"unknown class_weight {self.class_weight!r}")
        return self

    def resolved_lr(self):
        if self.learning_rate is not None:
            return self.learning_rate
        return 2e-4 if self.mode == "lora-finetune" else 1e-3


@dataclass
class FitResult:
    best_epoch: int
    epochs_run: int
    val_auroc_history: list
    train_loss_history: list
    best_checkpoint: dict
    epoch_log: list = field(default_factory=list)
    updated_tensor_names: list = field(default_factory=list)


def split(cohort, val_fraction: float = 0.05, seed: int = 0):
    """Stratified (train, val) split; per-class count is round(fraction * n)."""
    if not cohort:
        raise ContractError("cannot split an empty cohort")
    y = labels_from_records(cohort)
    rng = np.random.default_rng([int(seed), 0x5711])
    val_ids = set()
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < 2:
            raise StratificationError(f"class {cls} has {idx.size} records; need at least 2")
        take = int(round(val_fraction * idx.size))
        if val_fraction > 0:
            # validation AU-ROC needs both classes present, whatever the scale
            take = min(max(take, 1), idx.size - 1)
        chosen = rng.permutation(idx)[:take]
        val_ids.update(cohort[i].id for i in chosen)
    train = [r for r in cohort if r.id not in val_ids]
    val = [r for r in cohort if r.id in val_ids]
    return train, val


def make_balanced_test(cohort, n_per_class: int = 250, seed: int = 0):
    """Uniformly draw an exactly balanced test set; returns (test, pool)."""
    y = labels_from_records(cohort)
    rng = np.random.default_rng([int(seed), 0x7E57])
    test_ids = set()
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < n_per_class:
            raise SupplyError(f"class {cls} has {idx.size} records, need {n_per_class} for the test set")
        chosen = rng.permutation(idx)[:n_per_class]
        test_ids.update(cohort[i].id for i in chosen)
    test = [r for r in cohort if r.id in test_ids]
    pool = [r for r in cohort if r.id not in test_ids]
    return test, pool


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, trainable, grads_by_uid):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, tensor in trainable.items():
            g = grads_by_uid.get(tensor.uid)
            if g is None:
                g = np.zeros_like(tensor.value)
            if name not in self.m:
                self.m[name] = np.zeros_like(tensor.value)
                self.v[name] = np.zeros_like(tensor.value)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / (1 - b1**self.t)
            vhat = self.v[name] / (1 - b2**self.t)
            tensor.value = tensor.value - (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(tensor.value.dtype)


class EarlyStopper:
    """Tracks best validation AU-ROC; signals stop after `patience` flat epochs."""

    def __init__(self, patience):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.streak = 0

    def update(self, epoch, value):
        if value > self.best + IMPROVEMENT_TOL:
            self.best = value
            self.best_epoch = epoch
            self.streak = 0
            return True
        self.streak += 1
        return False

    @property
    def should_stop(self):
        return self.streak >= self.patience


def _all_param_tensors(model):
    tensors = dict(model.parameters())
    tensors.update(model.adapter_parameters())
    return tensors


def snapshot_params(model):
    return {name: t.value.copy() for name, t in _all_param_tensors(model).items()}


def restore_params(model, snapshot):
    for name, t in _all_param_tensors(model).items():
        t.value = snapshot[name].copy()


def _scores_from_encoded(model, encoded, n, batch_size=None):
    batch_size = batch_size or getattr(model, "eval_batch_size", 64)
    outs = []
    for lo in range(0, n, batch_size):
        idx = np.arange(lo, min(lo + batch_size, n))
        tape = GradTape()
        logits = model.forward_logits(tape, slice_encoded(encoded, idx)).value.astype(np.float64)
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        outs.append((e / e.sum(axis=1, keepdims=True))[:, 1])
    return np.concatenate(outs)


def fit(model, train, val, config: TrainConfig, log_path=None) -> FitResult:
    """Train `model` and leave it holding its best-epoch parameters."""
    config.validate()
    if not val:
        raise ContractError("validation set is empty")
    if not train:
        raise ContractError("training set is empty")

    model.ensure_built()
    y_train = labels_from_records(train)
    y_val = labels_from_records(val)
    enc_train = model.encode(train)
    enc_val = model.encode(val)
    trainable = model.trainable()
    optimizer = Adam(config.resolved_lr(), config.beta1, config.beta2, config.eps)

    if config.class_weight == "balanced":
        counts = np.bincount(y_train, minlength=2)
        class_w = y_train.size / (2.0 * np.maximum(counts, 1))
    else:
        class_w = None

    lora_mode = config.mode == "lora-finetune"
    n_epochs_cap = config.lora_epochs if lora_mode else config.max_epochs
    stopper = EarlyStopper(config.patience)
    n = len(train)

    val_history, loss_history, epoch_log = [], [], []
    best_snapshot = snapshot_params(model)

    for epoch in range(1, n_epochs_cap + 1):
        t0 = time.perf_counter()
        order = np.random.default_rng([config.seed, 0xE90C, epoch]).permutation(n)
        batch_losses = []
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            tape = GradTape()
            weights = class_w[y_train[idx]] if class_w is not None else None
            loss = model.loss_on(tape, slice_encoded(enc_train, idx), y_train[idx], weights)
            if not np.isfinite(loss.value):
                raise DivergenceError(epoch=epoch, batch=bi)
            grads = backward(tape, loss)
            optimizer.step(trainable, grads)
            batch_losses.append(float(loss.value))

        val_scores = _scores_from_encoded(model, enc_val, len(val))
        val_auc = auroc(y_val, val_scores)
        val_history.append(val_auc)
        loss_history.append(float(np.mean(batch_losses)))
        improved = stopper.update(epoch, val_auc)
        if improved:
            best_snapshot = snapshot_params(model)
        epoch_log.append((epoch, loss_history[-1], val_auc, time.perf_counter() - t0))
        if not lora_mode and stopper.should_stop:
            break

    restore_params(model, best_snapshot)
    best_epoch = stopper.best_epoch if stopper.best_epoch else 1
    result = FitResult(
        best_epoch=best_epoch,
        epochs_run=len(val_history),
        val_auroc_history=val_history,
        train_loss_history=loss_history,
        best_checkpoint=best_snapshot,
        epoch_log=epoch_log,
        updated_tensor_names=sorted(trainable),
    )
    if log_path is not None:
        write_epoch_log(log_path, result)
    return result


def write_epoch_log(path, result: FitResult):
    lines = ["epoch\ttrain_loss\tval_auroc\twall_seconds"]
    for epoch, loss, auc, wall in result.epoch_log:
        lines.append(f"{epoch}\t{loss:.6f}\t{auc:.6f}\t{wall:.3f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def finetune_lora(model, train, val, config: TrainConfig | None = None, log_path=None) -> FitResult:
    """3-epoch (by default) adapter fine-tuning; base weights must be frozen."""
    if not getattr(model, "adapters_", None):
        raise StateError("attach_lora must run before finetune_lora")
    config = config or TrainConfig()
    if config.mode != "lora-finetune":
        config = replace(config, mode="lora-finetune")
    return fit(model, train, val, config, log_path=log_path)
