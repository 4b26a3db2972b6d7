#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Tap channel construction, pilot transmission and receiver whitening."""

import logging

import numpy
import scipy.linalg

from mmtrack.types import Array, NamedTuple, Optional, Seed, Sequence
from mmtrack.util import spawn_rngs

from . import PhyError
from .array import ArrayPair, response, spatial_frequencies
from .codebook import BeamPair
from .pilots import Pilots
from .radio import RadioConfig, pulse_samples

log = logging.getLogger(__name__)

#: smallest accepted ratio between the smallest and largest Cholesky diagonal
WHITENING_RCOND = 1e-10


class WhiteningError(PhyError):
    """Combiner Gram matrix is not positive definite"""


class TapChannel(NamedTuple):
    """Frequency selective MIMO channel, taps of shape (N_d, N_r, N_t)"""

    taps: Array

    @property
    def n_taps(self) -> int:
        return self.taps.shape[0]

    @property
    def energy(self) -> float:
        return float(numpy.sum(numpy.abs(self.taps) ** 2))


def steering_matrix(psi_par, psi_perp, geom) -> Array:
    """(len(ψ), N) array, row i = a(ψ∥_i) ⊗ a(ψ⊥_i)"""
    par = response(numpy.atleast_1d(psi_par), geom.nx).T
    perp = response(numpy.atleast_1d(psi_perp), geom.ny).T
    return numpy.einsum("la,lb->lab", par, perp).reshape(len(par), geom.size)


def build_taps(
    paths: Sequence, varpi: float, t_off: float, cfg: RadioConfig, geoms: ArrayPair, bs_yaw: float = 0.0
) -> TapChannel:
    """
    H_d = Σ α f_p(d·T_s - (t - t_off)) a_r(θ_az - ϖ, θ_el) a_t(φ_az, φ_el)^H

    Args:
        paths: [`Path`][mmtrack.world.tracer.Path]s with global angles
        varpi: vehicle heading (rad)
        t_off: receiver timing offset (s)
        cfg: radio parameters
        geoms: tx and rx arrays
        bs_yaw: base station boresight azimuth (rad)
    """
    taps = numpy.zeros((cfg.n_taps, geoms.rx.size, geoms.tx.size), dtype=complex)
    if not paths:
        return TapChannel(taps)
    alpha = numpy.array([path.alpha for path in paths], dtype=complex)
    delays = numpy.array([path.t for path in paths]) - t_off
    pulses = pulse_samples(delays, cfg)
    rx_par, rx_perp = spatial_frequencies([p.theta_az for p in paths], [p.theta_el for p in paths], varpi)
    tx_par, tx_perp = spatial_frequencies([p.phi_az for p in paths], [p.phi_el for p in paths], bs_yaw)
    a_r = steering_matrix(rx_par, rx_perp, geoms.rx)
    a_t = steering_matrix(tx_par, tx_perp, geoms.tx)
    taps = numpy.einsum("l,ld,lr,lt->drt", alpha, pulses, a_r, a_t.conj())
    return TapChannel(taps)


def transmit(taps: TapChannel, F: Array, W: Array, S: Pilots, cfg: RadioConfig, rng=None) -> Array:
    """
    Received block y[q] = W^H Σ_d √P_t H_d F s[q-d] + W^H n[q]

    The noise is circular white Gaussian of per-element variance σ_n²/N_r;
    `rng=None` gives the noiseless block.

    Returns:
        (N_s, Q) complex block
    """
    n_taps = min(taps.n_taps, S.n_taps)
    gains = numpy.einsum("rs,drt,tk->dsk", W.conj(), taps.taps[:n_taps], F)
    y = numpy.sqrt(cfg.tx_power) * numpy.einsum("dsk,dkq->sq", gains, S.delayed()[:n_taps])
    if rng is not None:
        n_rx = W.shape[0]
        scale = numpy.sqrt(cfg.noise_power / n_rx / 2)
        noise = scale * (rng.standard_normal((n_rx, S.length)) + 1j * rng.standard_normal((n_rx, S.length)))
        y = y + W.conj().T @ noise
    return y


def whiten(Y: Array, W: Array) -> tuple[Array, Array]:
    """
    Whiten a received block: L = chol(W^H W), Y̆ = L^-1 Y

    The noise of a block from [`transmit`][mmtrack.phy.channel.transmit] is
    W^H n with per-element variance σ_n²/N_r, so the whitened noise has
    covariance (σ_n²/N_r)·I.

    Raises:
        WhiteningError: W^H W is not positive definite
    """
    gram = W.conj().T @ W
    try:
        L = scipy.linalg.cholesky(gram, lower=True)
    except numpy.linalg.LinAlgError:
        raise WhiteningError("combiner is rank deficient") from None
    diagonal = numpy.abs(numpy.diag(L))
    if diagonal.min() <= WHITENING_RCOND * diagonal.max():
        raise WhiteningError("combiner is numerically rank deficient")
    return scipy.linalg.solve_triangular(L, Y, lower=True), L


class MeasurementSet(NamedTuple):
    """
    Whitened pilot measurements of one snapshot

    Attributes:
        y: (M, N_s, Q) whitened blocks
        F: (M, N_t, N_s) precoders
        W: (M, N_r, N_s) combiners
        L: (M, N_s, N_s) Cholesky factors of W^H W
        pilots: training sequences
        cfg: radio parameters
        geoms: tx and rx arrays
        window: receiver window start (s), the reference of the tap delays
        bs_yaw: base station boresight azimuth (rad)
    """

    y: Array
    F: Array
    W: Array
    L: Array
    pilots: Pilots
    cfg: RadioConfig
    geoms: ArrayPair
    window: float = 0.0
    bs_yaw: float = 0.0

    @property
    def n_meas(self) -> int:
        return self.y.shape[0]

    @property
    def tx_power(self) -> float:
        return self.cfg.tx_power

    @property
    def gamma(self) -> Array:
        """Measurement vector: whitened blocks flattened column-major, stacked over m"""
        return numpy.concatenate([y.flatten(order="F") for y in self.y])

    @property
    def whitened_combiners(self) -> Array:
        """(M, N_s, N_r) stack of L^-1 W^H"""
        return numpy.stack(
            [scipy.linalg.solve_triangular(L, W.conj().T, lower=True) for L, W in zip(self.L, self.W)]
        )


def measure(
    taps: TapChannel,
    codebook: Sequence[BeamPair],
    pilots: Pilots,
    cfg: RadioConfig,
    geoms: ArrayPair,
    seed: Optional[Seed] = None,
    window: float = 0.0,
    bs_yaw: float = 0.0,
    noise: bool = True,
) -> MeasurementSet:
    """
    Transmit the pilots through every beam pair and whiten the result. Each
    measurement draws its noise from its own stream split from seed.
    """
    rngs = spawn_rngs(seed, len(codebook)) if noise else [None] * len(codebook)
    blocks, factors = [], []
    for (F, W), rng in zip(codebook, rngs):
        y, L = whiten(transmit(taps, F, W, pilots, cfg, rng), W)
        blocks.append(y)
        factors.append(L)
    return MeasurementSet(
        y=numpy.stack(blocks),
        F=numpy.stack([pair.F for pair in codebook]),
        W=numpy.stack([pair.W for pair in codebook]),
        L=numpy.stack(factors),
        pilots=pilots,
        cfg=cfg,
        geoms=geoms,
        window=window,
        bs_yaw=bs_yaw,
    )
