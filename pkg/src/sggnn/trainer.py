"""Semi-supervised training with stratified splits and early stopping."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import SplitMask
from .models import SGGNN, extract_alphas


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 500
    patience: int = 100
    split_fractions: tuple = (0.48, 0.32, 0.2)
    num_splits: int = 10
    seed: int = 0
    min_train_per_class: int = 1

    def __post_init__(self):
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        if len(self.split_fractions) != 3 or min(self.split_fractions) <= 0:
            raise ValueError("split_fractions must be three positive numbers")
        if sum(self.split_fractions) > 1 + 1e-9:
            raise ValueError("split_fractions must sum to at most 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")


@dataclass
class RunResult:
    test_accuracy: float
    val_accuracy: float
    train_accuracy: float
    best_epoch: int
    epochs_run: int
    loss_curve: list
    val_curve: list
    alphas: list | None = None
    node_alpha_means: list | None = None
    split_index: int = 0

    def to_json(self):
        return json.dumps(asdict(self))


def _allocate(sizes, fraction, total, minimum, caps):
    """Split ``total`` slots across classes proportionally to ``sizes``.

    Each class gets ``floor(fraction * size)`` (at least ``minimum``, at most
    its cap); leftover slots go to the largest fractional remainders, ties to
    the lower class index.
    """
    ideal = fraction * sizes
    quota = np.minimum(np.maximum(np.floor(ideal).astype(np.int64), minimum), caps)
    remainder = ideal - np.floor(ideal)
    diff = total - quota.sum()
    order = np.lexsort((np.arange(len(sizes)), -remainder))
    while diff > 0:
        progressed = False
        for c in order:
            if diff == 0:
                break
            if quota[c] < caps[c]:
                quota[c] += 1
                diff -= 1
                progressed = True
        if not progressed:
            break
    while diff < 0:
        progressed = False
        for c in order[::-1]:
            if diff == 0:
                break
            if quota[c] > minimum:
                quota[c] -= 1
                diff += 1
                progressed = True
        if not progressed:
            break
    return quota


def make_splits(labels, cfg, split_index):
    """Class-stratified random train/val/test masks for one split realization.

    Global sizes are ``floor(f * N)`` for train and validation; the test set
    takes the remainder when the fractions sum to one.
    """
    if not 0 <= split_index < cfg.num_splits:
        raise ValueError(f"split_index {split_index} outside [0, {cfg.num_splits})")
    labels = np.asarray(labels)
    n = len(labels)
    f_train, f_val, f_test = cfg.split_fractions
    n_train = math.floor(f_train * n)
    n_val = math.floor(f_val * n)
    if abs(sum(cfg.split_fractions) - 1.0) < 1e-9:
        n_test = n - n_train - n_val
    else:
        n_test = math.floor(f_test * n)
    classes = np.unique(labels)
    sizes = np.array([(labels == c).sum() for c in classes])
    small = classes[sizes < cfg.min_train_per_class]
    if len(small):
        raise ValueError(
            f"class(es) {small.tolist()} have fewer than {cfg.min_train_per_class} nodes required for training"
        )
    if n_train < cfg.min_train_per_class * len(classes):
        raise ValueError("training split too small to include every class")

    rng = np.random.default_rng([cfg.seed, split_index])
    members = [rng.permutation(np.flatnonzero(labels == c)) for c in classes]
    train_q = _allocate(sizes, f_train, n_train, cfg.min_train_per_class, sizes)
    left = sizes - train_q
    val_q = _allocate(sizes, f_val, n_val, 0, left)
    left = left - val_q
    test_q = _allocate(sizes, f_test, n_test, 0, left)

    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    for idx, a, b, c in zip(members, train_q, val_q, test_q):
        masks[0][idx[:a]] = True
        masks[1][idx[a:a + b]] = True
        masks[2][idx[a + b:a + b + c]] = True
    return SplitMask(*masks)


def predict(logits):
    """Argmax per row; ``np.argmax`` already prefers the lowest index on ties."""
    return np.argmax(np.asarray(logits), axis=1)


def accuracy(logits, labels, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("accuracy over an empty mask")
    return float(np.mean(predict(np.asarray(logits)[mask]) == np.asarray(labels)[mask]))


def evaluate(model, ops, x, labels, mask):
    """Accuracy of ``model`` (inference mode) on the nodes in ``mask``."""
    return accuracy(model.forward(ops, _as_tensor(x)).data, labels, mask)


def _validate(model, ops, x, labels, mask):
    """``(accuracy, loss)`` on ``mask``; falls back to ``(0, inf)`` when empty."""
    if not mask.any():
        return 0.0, math.inf
    logits = model.forward(ops, x)
    loss = ad.masked_cross_entropy(logits, labels, mask).item()
    return accuracy(logits.data, labels, mask), loss


def _as_tensor(x):
    return x if isinstance(x, ad.Tensor) else ad.Tensor(x)


def train(model, graphs, x, labels, masks, cfg, rng=None, on_step=None):
    """Fit ``model`` on the training mask and report accuracy of the best epoch.

    Each epoch takes one full-batch Adam step on the masked cross-entropy,
    then measures validation accuracy. Parameters from the epoch with the
    highest validation accuracy are restored at the end; equal accuracies are
    ranked by validation loss, then by the earlier epoch. Training stops once
    ``cfg.patience`` epochs pass without improvement.
    ``on_step(model, epoch)`` is called after every optimizer step.
    """
    rng = np.random.default_rng(rng if rng is not None else [cfg.seed, 1])
    x = _as_tensor(x)
    labels = np.asarray(labels)
    ops = model.prepare(list(graphs))
    params = model.parameters()
    decay_skip = {id(model.alpha_logits)} if isinstance(model, SGGNN) else set()
    state = ad.AdamState()

    best_val, best_loss, best_epoch, best_params = -1.0, math.inf, -1, None
    losses, vals = [], []
    epoch = 0
    for epoch in range(cfg.max_epochs):
        logits = model.forward(ops, x, training=True, rng=rng)
        loss = ad.masked_cross_entropy(logits, labels, masks.train)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDivergedError(f"non-finite training loss {value} at epoch {epoch}")
        losses.append(value)
        grads = ad.backward(loss, params)
        if cfg.weight_decay:
            grads = [g if id(p) in decay_skip else g + cfg.weight_decay * p.data for p, g in zip(params, grads)]
        ad.adam_step(params, grads, state, lr=cfg.learning_rate)
        if on_step is not None:
            on_step(model, epoch)

        val, val_loss = _validate(model, ops, x, labels, masks.val)
        vals.append(val)
        if val > best_val or (val == best_val and val_loss < best_loss):
            best_val, best_loss, best_epoch = val, val_loss, epoch
            best_params = [p.data.copy() for p in params]
        if epoch - best_epoch >= cfg.patience:
            break

    for p, saved in zip(params, best_params):
        p.data = saved
    out = model.forward(ops, x).data
    result = RunResult(
        test_accuracy=accuracy(out, labels, masks.test) if masks.test.any() else float("nan"),
        val_accuracy=accuracy(out, labels, masks.val) if masks.val.any() else float("nan"),
        train_accuracy=accuracy(out, labels, masks.train),
        best_epoch=best_epoch,
        epochs_run=epoch + 1,
        loss_curve=losses,
        val_curve=vals,
    )
    if isinstance(model, SGGNN):
        alphas = extract_alphas(model)
        if alphas.ndim == 1:
            result.alphas = alphas.tolist()
        else:
            result.node_alpha_means = alphas.mean(axis=0).tolist()
    return result
