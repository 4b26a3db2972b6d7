#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Building blocks: parameter containers, dense layers, attention."""

import math

import numpy

from mmtrack.types import Array, Iterator, NamedTuple, Optional, Sequence

from .tensor import ShapeError, Tensor, as_tensor, concat


class Module:
    """
    Parameter container. Parameters are the `Tensor` attributes created with
    `requires_grad=True`, sub-modules are `Module` attributes or lists of
    them; both are found by attribute name, in definition order.
    """

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{index}.")

    def parameters(self) -> list[Tensor]:
        return [parameter for _, parameter in self.named_parameters()]

    @property
    def n_parameters(self) -> int:
        return sum(parameter.data.size for parameter in self.parameters())

    def zero_grad(self):
        for parameter in self.parameters():
            parameter.zero_grad()

    def state_dict(self) -> dict[str, Array]:
        return {name: parameter.data.copy() for name, parameter in self.named_parameters()}

    def load_state_dict(self, state: dict[str, Array]):
        parameters = dict(self.named_parameters())
        missing = set(parameters) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, parameter in parameters.items():
            value = numpy.asarray(state[name], dtype=numpy.float64)
            if value.shape != parameter.shape:
                raise ShapeError(f"parameter {name} has shape {parameter.shape}, got {value.shape}")
            parameter.data = value.copy()


class Dense(Module):
    """y = x W + b, weights and bias drawn uniformly in ±1/√n_in"""

    def __init__(self, n_in: int, n_out: int, rng, activation: bool = False):
        bound = 1 / math.sqrt(n_in)
        self.weight = Tensor(rng.uniform(-bound, bound, (n_in, n_out)), requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, (n_out,)), requires_grad=True)
        self.activation = activation

    def __repr__(self):
        n_in, n_out = self.weight.shape
        return f"{type(self).__name__}({n_in}, {n_out}{', silu' if self.activation else ''})"

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(f"{self!r} got {x.shape[-1]} input features")
        y = x @ self.weight + self.bias
        return y.silu() if self.activation else y


class MLP(Module):
    """Dense layers, each followed by a SiLU"""

    def __init__(self, n_in: int, sizes: Sequence[int], rng):
        self.layers = []
        for size in sizes:
            self.layers.append(Dense(n_in, size, rng, activation=True))
            n_in = size

    @property
    def n_out(self) -> int:
        return self.layers[-1].weight.shape[1]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class LayerNorm(Module):
    """Normalization over the feature axis with a learned scale and shift"""

    def __init__(self, size: int, eps: float = 1e-5):
        self.scale = Tensor(numpy.ones(size), requires_grad=True)
        self.shift = Tensor(numpy.zeros(size), requires_grad=True)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return as_tensor(x).layer_norm(self.eps) * self.scale + self.shift


class AttentionSpec(NamedTuple):
    """Heads and embedding sizes of a multi-head attention block"""

    n_heads: int = 1
    K_dim: int = 32
    Q_dim: int = 32
    V_dim: int = 128

    def check(self) -> "AttentionSpec":
        if self.Q_dim != self.K_dim:
            raise ValueError(f"query and key sizes must match (got Q_dim={self.Q_dim}, K_dim={self.K_dim})")
        if min(self) < 1:
            raise ValueError(f"attention sizes must be >= 1 (got {self})")
        return self


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / √K_dim) v over the last two axes"""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query and key sizes differ: {q.shape[-1]} != {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key and value counts differ: {k.shape[-2]} != {v.shape[-2]}")
    scores = (q @ k.mT) * (1 / math.sqrt(k.shape[-1]))
    return scores.softmax(axis=-1) @ v


class MultiHeadAttention(Module):
    """
    Per head query/key/value projections, attention, concatenation of the
    heads and a dense output layer

    Args:
        n_query: query input features
        n_context: key/value input features
        spec: heads and embedding sizes
        n_out: output features
        rng: weight generator
    """

    def __init__(self, n_query: int, n_context: int, spec: AttentionSpec, n_out: int, rng):
        self.spec = spec.check()
        self.query = [Dense(n_query, spec.Q_dim, rng) for _ in range(spec.n_heads)]
        self.key = [Dense(n_context, spec.K_dim, rng) for _ in range(spec.n_heads)]
        self.value = [Dense(n_context, spec.V_dim, rng) for _ in range(spec.n_heads)]
        self.output = Dense(spec.n_heads * spec.V_dim, n_out, rng)

    def heads(self, x: Tensor, context: Optional[Tensor] = None) -> list[Tensor]:
        context = x if context is None else context
        return [attention(q(x), k(context), v(context)) for q, k, v in zip(self.query, self.key, self.value)]

    def forward(self, x: Tensor, context: Optional[Tensor] = None) -> Tensor:
        heads = self.heads(x, context)
        return self.output(heads[0] if len(heads) == 1 else concat(heads, axis=-1))


def positional_encoding(length: int, size: int) -> Array:
    """Sinusoidal encoding, (length, size)"""
    position = numpy.arange(length)[:, None]
    rate = numpy.exp(-math.log(10000.0) * (2 * (numpy.arange(size) // 2)) / size)
    angles = position * rate[None, :]
    return numpy.where(numpy.arange(size) % 2 == 0, numpy.sin(angles), numpy.cos(angles))
