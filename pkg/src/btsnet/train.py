"""SGD training and evaluation for BTSNet classifiers."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import ClipBatch
from .network import Network
from .ops import cross_entropy, per_sample_cross_entropy
from .tensor import Tensor

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainOptions:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or not math.isfinite(self.lr):
            raise ValueError("lr must be a finite non-negative number")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainingLog:
    options: dict
    epochs: list[dict] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def best_val_accuracy(self) -> float | None:
        accs = [e["val_accuracy"] for e in self.epochs if e.get("val_accuracy") is not None]
        return max(accs) if accs else None


class SGD:
    """Momentum SGD with L2 weight decay folded into the gradient."""

    def __init__(self, params: list[Tensor], lr: float, momentum: float, weight_decay: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= self.lr * v


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        # a lone clip cannot feed train-mode batch statistics
        if len(idx) >= 2 or n == 1:
            yield np.sort(idx)


def train(
    net: Network,
    data: ClipBatch,
    opts: TrainOptions,
    val: ClipBatch | None = None,
) -> TrainingLog:
    if len(data) == 0:
        raise ValueError("no training data")
    rng = np.random.default_rng(opts.seed)
    opt = SGD(net.parameters(), opts.lr, opts.momentum, opts.weight_decay)
    record = TrainingLog(options=asdict(opts))
    for epoch in range(1, opts.epochs + 1):
        started = time.perf_counter()
        net.train()
        losses = []
        for idx in _batches(len(data), opts.batch_size, rng):
            logits, _ = net.forward(Tensor(data.clips[idx]))
            loss = cross_entropy(logits, data.labels[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val is not None:
            metrics = evaluate(net, val)
            entry["val_accuracy"] = metrics["accuracy"]
            entry["val_loss"] = metrics["mean_loss"]
        record.epochs.append(entry)
        record.step_losses.extend(losses)
        log.info("epoch %d %s (%.1fs)", epoch, entry, time.perf_counter() - started)
    return record


def predict_logits(net: Network, data: ClipBatch, batch_size: int = 16) -> np.ndarray:
    net.eval()
    out = []
    for start in range(0, len(data), batch_size):
        logits, _ = net.forward(Tensor(data.clips[start:start + batch_size]))
        out.append(logits.data)
    return np.concatenate(out)


def metrics_from_logits(logits: np.ndarray, labels, num_classes: int | None = None) -> dict:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot evaluate on empty data")
    K = num_classes or logits.shape[1]
    pred = np.argmax(logits, axis=1)  # first maximum wins ties
    correct = pred == labels
    per_class = {}
    for k in range(K):
        mask = labels == k
        per_class[k] = float(correct[mask].mean()) if mask.any() else None
    return {
        "accuracy": float(correct.mean()),
        "per_class_accuracy": per_class,
        "mean_loss": float(per_sample_cross_entropy(logits, labels).mean()),
        "count": int(labels.size),
    }


def evaluate(net: Network, data: ClipBatch, batch_size: int = 16) -> dict:
    if len(data) == 0:
        raise ValueError("cannot evaluate on empty data")
    return metrics_from_logits(predict_logits(net, data, batch_size), data.labels, net.cfg.num_classes)
