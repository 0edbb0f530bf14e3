"""Loading model inputs, minibatch SGD training and evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..model import MultiBranchNet
from ..nn.functional import softmax_cross_entropy
from ..nn.optim import SGD
from ..projection import orthogonal_project, plane_stats
from .cubefile import read_cube
from .manifest import DatasetManifest

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 16
    epochs: int = 30
    lr_decay_factor: float = 0.1
    # None -> decay at 40% and 80% of the run
    lr_decay_every: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def decay_every(self) -> int:
        if self.lr_decay_every is not None:
            return max(1, self.lr_decay_every)
        return max(1, round(0.4 * self.epochs))

    def lr_at(self, epoch: int) -> float:
        return self.initial_lr * self.lr_decay_factor ** (epoch // self.decay_every)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float
    lr: float


@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray
    per_fold: list[float] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.per_fold)) if self.per_fold else self.accuracy

    @classmethod
    def from_predictions(cls, labels, predictions, num_classes: int) -> "Metrics":
        labels = np.asarray(labels, dtype=np.intp)
        predictions = np.asarray(predictions, dtype=np.intp)
        if labels.size == 0:
            raise ValueError("cannot score an empty test set")
        confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(confusion, (labels, predictions), 1)
        acc = float(np.trace(confusion) / confusion.sum())
        return cls(acc, confusion, [acc])


def load_inputs(manifest: DatasetManifest, kind: str) -> list[np.ndarray]:
    """Un-normalized model inputs for every record, as ``(n, H, W)`` stacks.

    ``open3d`` reads cubes and projects them; ``baseline2d`` reads the stored
    spectrogram crops.
    """
    if kind == "open3d":
        planes = [[], [], []]
        for rec in manifest:
            triple = orthogonal_project(read_cube(manifest.resolve(rec.cube_path)))
            for i, p in enumerate(triple.planes()):
                planes[i].append(p)
        return [np.stack(p) for p in planes]
    if kind == "baseline2d":
        specs = []
        for rec in manifest:
            if not rec.spectrogram_path:
                raise ValueError(f"record {rec.record_id} has no spectrogram file")
            specs.append(read_cube(manifest.resolve(rec.spectrogram_path))[:, 0, :].astype(np.float64))
        return [np.stack(specs)]
    raise ValueError(f"unknown model kind {kind!r}")


def labels_of(manifest: DatasetManifest) -> np.ndarray:
    return np.array([r.class_label for r in manifest], dtype=np.intp)


def fit_input_stats(planes: Sequence[np.ndarray]):
    """One NormStats per input plane kind, from training inputs only."""
    return tuple(plane_stats(list(p)) for p in planes)


def stratified_order(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random permutation whose every window holds classes in near-proportional shares.

    Each class is shuffled on its own and its members are spread evenly over
    ``[0, 1)`` with a random phase; merging by position interleaves the classes.
    Train-mode batch norm is badly biased by minibatches that miss a class.
    """
    n = labels.shape[0]
    keys = np.empty(n)
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        keys[members] = (np.arange(members.size) + rng.uniform()) / members.size
    return np.argsort(keys + 1e-9 * rng.random(n), kind="stable")


def fit(model: MultiBranchNet, planes: Sequence[np.ndarray], labels, config: TrainConfig,
        on_epoch=None) -> list[EpochStats]:
    """Minibatch SGD on already-normalized inputs. Mutates ``model``.

    Epochs visit the samples in a class-stratified random order. A trailing
    minibatch of a single sample is dropped (train-mode batch norm needs two).
    ``on_epoch(stats)`` may return True to stop early.
    """
    labels = np.asarray(labels, dtype=np.intp)
    n = labels.shape[0]
    if n < 2:
        raise ValueError("need at least two training samples")
    planes = [np.asarray(p, dtype=np.float64).reshape(n, 1, *p.shape[-2:]) for p in planes]
    opt = SGD(model.parameters(), config.initial_lr, config.momentum, config.weight_decay)
    history = []
    for epoch in range(config.epochs):
        opt.lr = config.lr_at(epoch)
        order = stratified_order(labels, np.random.default_rng([config.rng_seed, epoch]))
        total_loss, correct, seen = 0.0, 0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            if idx.size < 2:
                continue
            model.zero_grad()
            logits = model.forward([p[idx] for p in planes], train=True)
            loss, dlogits = softmax_cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting at {start} (lr={opt.lr})")
            model.backward(dlogits)
            opt.step()
            total_loss += loss * idx.size
            correct += int((logits.argmax(axis=1) == labels[idx]).sum())
            seen += idx.size
        stats = EpochStats(epoch, total_loss / seen, correct / seen, opt.lr)
        history.append(stats)
        log.debug("epoch %d loss %.4f acc %.3f lr %.4g", epoch, stats.loss,
                  stats.train_accuracy, stats.lr)
        if on_epoch is not None and on_epoch(stats):
            break
    return history


def train(model: MultiBranchNet, records: DatasetManifest, config: TrainConfig,
          inputs: Sequence[np.ndarray] | None = None):
    """Fit normalization on ``records``, then train. Returns ``(model, history)``.

    ``inputs`` may carry pre-loaded un-normalized planes for ``records``.
    """
    if len(records) == 0:
        raise ValueError("empty training set")
    if inputs is None:
        inputs = load_inputs(records, model.kind)
    model.norm_stats = fit_input_stats(inputs)
    history = fit(model, model.normalize_inputs(inputs), labels_of(records), config)
    return model, history


def predict(model: MultiBranchNet, planes: Sequence[np.ndarray], batch_size: int = 64) -> np.ndarray:
    """Eval-mode predictions on already-normalized inputs."""
    n = planes[0].shape[0]
    out = []
    for start in range(0, n, batch_size):
        out.append(model.predict([p[start:start + batch_size] for p in planes]))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.intp)


def evaluate(model: MultiBranchNet, records: DatasetManifest,
             inputs: Sequence[np.ndarray] | None = None) -> Metrics:
    if len(records) == 0:
        raise ValueError("empty test set")
    if inputs is None:
        inputs = load_inputs(records, model.kind)
    for p, dims in zip(inputs, model.input_dims):
        if p.shape[-2:] != dims:
            raise ValueError(f"input plane {p.shape[-2:]} does not match model dims {dims}")
    preds = predict(model, model.normalize_inputs(inputs))
    return Metrics.from_predictions(labels_of(records), preds, model.num_classes)
