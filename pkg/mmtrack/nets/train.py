#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Mini-batch training with Adam and an MSE loss, input standardization and
finite-difference gradient checks.
"""

import logging
import math

import numpy
from tqdm import tqdm

from mmtrack.types import Array, Callable, Iterator, Mapping, NamedTuple, Optional, Sequence
from mmtrack.util import make_rng

from . import NetsError
from .layers import Module
from .tensor import ShapeError, Tensor, mse

log = logging.getLogger(__name__)

#: std below this is replaced by 1 (constant features)
STD_FLOOR = 1e-12


class EmptyDataset(NetsError):
    """No samples to train or validate on"""


class Dataset(NamedTuple):
    """Network inputs (one array per forward argument, samples on axis 0) and targets"""

    inputs: tuple
    targets: Array

    def __len__(self):
        return len(self.targets)

    def check(self) -> "Dataset":
        if len(self) == 0:
            raise EmptyDataset("dataset has no samples")
        for index, value in enumerate(self.inputs):
            if len(value) != len(self):
                raise ShapeError(f"input {index} has {len(value)} samples, targets have {len(self)}")
        return self

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = numpy.asarray(indices, dtype=int)
        return Dataset(tuple(value[indices] for value in self.inputs), self.targets[indices])

    def split(self, validation_fraction: float, rng=None) -> tuple["Dataset", "Dataset"]:
        """Random train/validation split, at least one training sample"""
        if not 0 <= validation_fraction < 1:
            raise ValueError(f"validation fraction must be in [0, 1) (got {validation_fraction})")
        self.check()
        order = make_rng(rng).permutation(len(self))
        n_validation = min(int(round(validation_fraction * len(self))), len(self) - 1)
        return self.subset(order[n_validation:]), self.subset(order[:n_validation])

    def batches(self, size: int, rng=None) -> Iterator["Dataset"]:
        """Mini-batches in a shuffled order (dataset order when rng is None)"""
        order = numpy.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), size):
            yield self.subset(order[start : start + size])


class Standardizer(NamedTuple):
    """Per-feature affine map (x - mean) / std over the last axis"""

    mean: Array
    std: Array

    @classmethod
    def fit(cls, data: Array) -> "Standardizer":
        data = numpy.asarray(data, dtype=float)
        if data.size == 0:
            raise EmptyDataset("cannot fit a standardizer on no data")
        rows = data.reshape(-1, data.shape[-1])
        std = rows.std(axis=0)
        return cls(rows.mean(axis=0), numpy.where(std < STD_FLOOR, 1.0, std))

    @classmethod
    def identity(cls, size: int) -> "Standardizer":
        return cls(numpy.zeros(size), numpy.ones(size))

    def apply(self, data: Array) -> Array:
        return (numpy.asarray(data, dtype=float) - self.mean) / self.std

    def invert(self, data: Array) -> Array:
        return numpy.asarray(data, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict[str, Array]:
        return {"mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, data: Mapping[str, Array]) -> "Standardizer":
        return cls(numpy.asarray(data["mean"], dtype=float), numpy.asarray(data["std"], dtype=float))


class Adam:
    """Adam optimizer over a fixed list of parameters"""

    def __init__(self, parameters: Sequence[Tensor], betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.parameters = list(parameters)
        self.betas = betas
        self.eps = eps
        self.m = [numpy.zeros_like(p.data) for p in self.parameters]
        self.v = [numpy.zeros_like(p.data) for p in self.parameters]
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        beta1, beta2 = self.betas
        correction1 = 1 - beta1**self.t
        correction2 = 1 - beta2**self.t
        for parameter, m, v in zip(self.parameters, self.m, self.v):
            if parameter.grad is None:
                continue
            g = parameter.grad
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            parameter.data = parameter.data - lr * (m / correction1) / (numpy.sqrt(v / correction2) + self.eps)


def lr_schedule(epoch: int, lr: float = 1e-3, decay: float = 0.95, every: int = 80) -> float:
    """Step decay: lr·decay^(epoch // every)"""
    return lr * decay ** (epoch // every)


class TrainParams(NamedTuple):
    epochs: int = 500
    lr: float = 1e-3
    decay: float = 0.95
    decay_every: int = 80
    patience: int = 50
    batch_size: int = 32

    def check(self) -> "TrainParams":
        if self.epochs < 1 or self.batch_size < 1 or self.decay_every < 1 or self.patience < 1:
            raise ValueError(f"epochs, batch size, decay period and patience must be >= 1 (got {self})")
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0 (got {self.lr})")
        return self


class Epoch(NamedTuple):
    epoch: int
    lr: float
    train: float
    validation: float


class TrainResult(NamedTuple):
    """Best validation parameters, the loss curve and the epoch they come from"""

    params: dict
    history: list
    best_epoch: int

    @property
    def best_loss(self) -> float:
        return self.history[self.best_epoch].validation


def _loss(model: Module, batch: Dataset, loss: Callable) -> Tensor:
    return loss(model(*batch.inputs), batch.targets)


def evaluate(model: Module, dataset: Dataset, batch_size: int = 256, loss: Callable = mse) -> float:
    """Mean loss over a dataset (batch losses weighted by batch size)"""
    dataset.check()
    total = 0.0
    for batch in dataset.batches(batch_size):
        total += _loss(model, batch, loss).item() * len(batch)
    return total / len(dataset)


def train(
    model: Module,
    train_set: Dataset,
    validation: Optional[Dataset] = None,
    params: Optional[TrainParams] = None,
    seed=None,
    loss: Callable = mse,
    progress: bool = False,
) -> TrainResult:
    """
    Train in place and restore the parameters of the best validation epoch.
    Without a validation set the training loss drives early stopping.
    """
    params = (params or TrainParams()).check()
    train_set.check()
    if validation is not None and len(validation) == 0:
        validation = None
    rng = make_rng(seed)
    optimizer = Adam(model.parameters())
    best, best_epoch, best_state = math.inf, 0, model.state_dict()
    history = []
    epochs = tqdm(range(params.epochs), desc=type(model).__name__, unit="epoch", disable=not progress)
    for epoch in epochs:
        lr = lr_schedule(epoch, params.lr, params.decay, params.decay_every)
        total = 0.0
        for batch in train_set.batches(params.batch_size, rng):
            model.zero_grad()
            batch_loss = _loss(model, batch, loss)
            batch_loss.backward()
            optimizer.step(lr)
            total += batch_loss.item() * len(batch)
        train_loss = total / len(train_set)
        val_loss = train_loss if validation is None else evaluate(model, validation, loss=loss)
        history.append(Epoch(epoch, lr, train_loss, val_loss))
        if not math.isfinite(train_loss):
            raise NetsError(f"training diverged at epoch {epoch}")
        if val_loss < best:
            best, best_epoch, best_state = val_loss, epoch, model.state_dict()
        elif epoch - best_epoch >= params.patience:
            log.info("early stop at epoch %d (best %d, loss %g)", epoch, best_epoch, best)
            break
        if epoch % 50 == 0:
            log.debug("epoch %d lr=%g train=%g validation=%g", epoch, lr, train_loss, val_loss)
    model.load_state_dict(best_state)
    return TrainResult(best_state, history, best_epoch)


def grad_check(
    model: Module,
    sample: tuple,
    epsilon: float = 1e-6,
    n_params: int = 200,
    seed=0,
    loss: Callable = mse,
    floor: float = 1e-4,
) -> float:
    """
    Largest relative difference between reverse-mode gradients and central
    finite differences, over up to n_params scalar parameters picked at random.

    Args:
        model: network
        sample: (inputs tuple, target)
        epsilon: finite difference step, in [1e-6, 1e-3]
        floor: denominators below this are raised to it
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-6, 1e-3] (got {epsilon})")
    inputs, target = sample

    def evaluate_loss() -> Tensor:
        return loss(model(*inputs), target)

    model.zero_grad()
    evaluate_loss().backward()
    parameters = model.parameters()
    grads = [numpy.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in parameters]
    sizes = numpy.array([p.data.size for p in parameters])
    offsets = numpy.concatenate([[0], numpy.cumsum(sizes)])
    rng = make_rng(seed)
    picks = rng.choice(offsets[-1], size=min(n_params, offsets[-1]), replace=False)
    worst = 0.0
    for flat in picks:
        which = int(numpy.searchsorted(offsets, flat, side="right") - 1)
        parameter, index = parameters[which], flat - offsets[which]
        values = parameter.data.reshape(-1)
        original = values[index]
        values[index] = original + epsilon
        plus = evaluate_loss().item()
        values[index] = original - epsilon
        minus = evaluate_loss().item()
        values[index] = original
        numeric = (plus - minus) / (2 * epsilon)
        analytic = grads[which].reshape(-1)[index]
        error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, error)
    model.zero_grad()
    return worst
