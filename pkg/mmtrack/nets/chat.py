#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Channel attention networks.

ChanSTA turns a sequence of channel estimates (Γ snapshots of N_est paths
with 6 features each) into one feature row per snapshot: self-attention
across the paths of each snapshot first, then across the snapshots.
VO-ChAT reads the orientation out of the last row together with the
previous orientations; VP-ChAT decodes the recent positions and queries the
channel encoding for a correction of the current single-shot position.

All networks accept a leading batch axis; unbatched inputs are accepted and
give unbatched outputs.
"""

from mmtrack.types import NamedTuple, Optional, Sequence
from mmtrack.util import make_rng

from .layers import MLP, AttentionSpec, Dense, LayerNorm, Module, MultiHeadAttention, attention, positional_encoding
from .tensor import ShapeError, Tensor, as_tensor, concat

__all__ = [
    "AttentionSpec",
    "ChanSta",
    "ChanStaDims",
    "VoChat",
    "VoDims",
    "VpChat",
    "VpDims",
    "attention",
    "chan_sta_forward",
    "vo_chat_forward",
    "vp_chat_forward",
]

#: path features: |α| (dB), t, θ_az, θ_el, φ_az, φ_el
N_FEATURES = 6


class ChanStaDims(NamedTuple):
    length: int = 8
    n_paths: int = 5
    n_features: int = N_FEATURES
    mlp1: tuple[int, ...] = (32, 128)
    spatial: AttentionSpec = AttentionSpec(1, 32, 32, 128)
    mlp2: tuple[int, ...] = (128, 128)
    mlp3: tuple[int, ...] = (128, 128)
    temporal: AttentionSpec = AttentionSpec(2, 32, 32, 128)
    mlp4: tuple[int, ...] = (128, 128)

    def check(self) -> "ChanStaDims":
        if self.mlp2[-1] != self.mlp1[-1]:
            raise ValueError(f"mlp2 must end with {self.mlp1[-1]} features (got {self.mlp2})")
        if self.mlp4[-1] != self.mlp3[-1]:
            raise ValueError(f"mlp4 must end with {self.mlp3[-1]} features (got {self.mlp4})")
        self.spatial.check()
        self.temporal.check()
        return self

    @property
    def n_out(self) -> int:
        return self.mlp4[-1]


class VoDims(NamedTuple):
    mlp5: tuple[int, ...] = (32, 8, 1)
    mlp6: tuple[int, ...] = (16, 16)


class VpDims(NamedTuple):
    encoder: tuple[int, ...] = (32,)
    decoder_a: tuple[int, ...] = (8,)
    decoder_b: tuple[int, ...] = (32,)
    self_attention: AttentionSpec = AttentionSpec(1, 32, 32, 32)
    decoder_c: tuple[int, ...] = (32,)
    cross_attention: AttentionSpec = AttentionSpec(1, 32, 32, 32)
    inner: tuple[int, ...] = (32,)
    final: tuple[int, ...] = (8,)

    def check(self) -> "VpDims":
        self.self_attention.check()
        self.cross_attention.check()
        return self


def _batched(x, trailing: int) -> tuple[Tensor, bool]:
    """Add a batch axis to an unbatched input"""
    x = as_tensor(x)
    if x.ndim == trailing:
        return x.reshape(1, *x.shape), True
    return x, False


class ChanSta(Module):
    """Spatial then temporal self-attention over a channel estimate sequence"""

    def __init__(self, dims: ChanStaDims, rng):
        self.dims = dims.check()
        width = dims.mlp1[-1]
        self.mlp1 = MLP(dims.n_features, dims.mlp1, rng)
        self.spatial = MultiHeadAttention(width, width, dims.spatial, width, rng)
        self.norm1 = LayerNorm(width)
        self.mlp2 = MLP(width, dims.mlp2, rng)
        self.norm2 = LayerNorm(width)
        self.encoding = positional_encoding(dims.length, width)
        self.mlp3 = MLP(dims.n_paths * width, dims.mlp3, rng)
        width = dims.mlp3[-1]
        self.temporal = MultiHeadAttention(width, width, dims.temporal, width, rng)
        self.norm3 = LayerNorm(width)
        self.mlp4 = MLP(width, dims.mlp4, rng)
        self.norm4 = LayerNorm(width)

    def forward(self, z, trace: Optional[dict] = None) -> Tensor:
        """
        Args:
            z: (..., Γ, N_est, 6) channel estimates
            trace: filled with intermediate results when given

        Returns:
            (..., Γ, n_out) representation
        """
        dims = self.dims
        z, single = _batched(z, 3)
        expected = (dims.length, dims.n_paths, dims.n_features)
        if tuple(z.shape[-3:]) != expected:
            raise ShapeError(f"channel sequence must be (..., {expected}) (got {z.shape})")
        x = self.mlp1(z)
        attended = self.spatial(x)
        summed = x + attended
        x = self.norm1(summed)
        x = self.norm2(x + self.mlp2(x))
        if trace is not None:
            trace.update(spatial_attention=attended, spatial_pre_norm=summed, spatial=x)
        x = x + self.encoding[:, None, :]
        x = x.reshape(*x.shape[:-2], x.shape[-2] * x.shape[-1])
        x = self.mlp3(x)
        x = self.norm3(x + self.temporal(x))
        x = self.norm4(x + self.mlp4(x))
        return x.reshape(*x.shape[1:]) if single else x


class VoChat(Module):
    """Orientation from the channel sequence and the Γ-1 previous orientations"""

    def __init__(self, chan: ChanSta, dims: VoDims, rng):
        self.dims = dims
        self.chan = chan
        self.mlp5 = MLP(chan.dims.n_out, dims.mlp5, rng)
        self.mlp6 = MLP(dims.mlp5[-1] + chan.dims.length - 1, dims.mlp6, rng)
        self.head = Dense(dims.mlp6[-1], 1, rng)

    @classmethod
    def build(cls, seed=None, chan_dims: Optional[ChanStaDims] = None, dims: Optional[VoDims] = None) -> "VoChat":
        rng = make_rng(seed)
        return cls(ChanSta(chan_dims or ChanStaDims(), rng), dims or VoDims(), rng)

    def forward(self, z, previous) -> Tensor:
        """
        Args:
            z: (..., Γ, N_est, 6) channel estimates
            previous: (..., Γ-1) previous orientations

        Returns:
            (..., 1) orientation
        """
        z, single = _batched(z, 3)
        previous = as_tensor(previous)
        if single:
            previous = previous.reshape(1, *previous.shape)
        if previous.shape[-1] != self.chan.dims.length - 1:
            raise ShapeError(f"expected {self.chan.dims.length - 1} previous orientations (got {previous.shape})")
        r = self.chan(z)
        current = self.mlp5(r[:, -1, :])
        x = self.mlp6(concat([current, previous], axis=-1))
        out = self.head(x)
        return out.reshape(1) if single else out


class VpChat(Module):
    """Correction of the current single-shot position from channel and position sequences"""

    def __init__(self, chan: ChanSta, dims: VpDims, rng):
        self.dims = dims.check()
        self.chan = chan
        length = chan.dims.length
        self.encoder = MLP(chan.dims.n_out, dims.encoder, rng)
        self.decoder_a = MLP(2, dims.decoder_a, rng)
        self.encoding = positional_encoding(length, dims.decoder_a[-1])
        self.decoder_b = MLP(dims.decoder_a[-1], dims.decoder_b, rng)
        width = dims.decoder_b[-1]
        self.self_attention = MultiHeadAttention(width, width, dims.self_attention, width, rng)
        self.norm = LayerNorm(width)
        self.decoder_c = MLP(width, dims.decoder_c, rng)
        self.cross_attention = MultiHeadAttention(
            dims.decoder_c[-1], dims.encoder[-1], dims.cross_attention, dims.inner[-1], rng
        )
        self.inner = MLP(dims.inner[-1], dims.inner, rng)
        self.final = MLP(dims.inner[-1], dims.final, rng)
        self.head = Dense(dims.final[-1], 2, rng)

    @classmethod
    def build(cls, seed=None, chan_dims: Optional[ChanStaDims] = None, dims: Optional[VpDims] = None) -> "VpChat":
        rng = make_rng(seed)
        return cls(ChanSta(chan_dims or ChanStaDims(), rng), dims or VpDims(), rng)

    def forward(self, z, positions) -> Tensor:
        """
        Args:
            z: (..., Γ, N_est, 6) compensated channel estimates
            positions: (..., Γ, 2) corrected history and current single-shot
                estimate, relative to the current single-shot estimate

        Returns:
            (..., 2) correction
        """
        z, single = _batched(z, 3)
        positions = as_tensor(positions)
        if single:
            positions = positions.reshape(1, *positions.shape)
        if tuple(positions.shape[-2:]) != (self.chan.dims.length, 2):
            raise ShapeError(f"positions must be (..., {self.chan.dims.length}, 2) (got {positions.shape})")
        context = self.encoder(self.chan(z))
        p = self.decoder_b(self.decoder_a(positions) + self.encoding)
        p = self.norm(p + self.self_attention(p))
        p = self.decoder_c(p)
        query = p[:, -1:, :]
        x = self.inner(self.cross_attention(query, context))
        out = self.head(self.final(x))
        out = out.reshape(out.shape[0], 2)
        return out.reshape(2) if single else out


def chan_sta_forward(z, model: ChanSta, trace: Optional[dict] = None) -> Tensor:
    return model(z, trace=trace)


def vo_chat_forward(z, previous: Sequence[float], model: VoChat) -> Tensor:
    return model(z, previous)


def vp_chat_forward(z, positions, model: VpChat) -> Tensor:
    return model(z, positions)
