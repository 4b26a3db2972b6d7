#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Analog beam codebooks.

Beams are phase-only (unit modulus entries scaled by 1/√N); the digital
stage is the identity so each of the N_s columns is one analog beam.
"""

import numpy

from mmtrack.types import Array, NamedTuple, Optional, Seed
from mmtrack.util import make_rng

from .array import ArrayGeometry, ArrayPair, spatial_frequencies, steering

#: beam offsets (in beamwidths) around a previous direction; the first one is the direction itself
BEAM_OFFSETS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1))


class BeamPair(NamedTuple):
    """Precoder F (N_t, N_s) and combiner W (N_r, N_s) of one measurement"""

    F: Array
    W: Array


def directed_beams(psi_par: float, psi_perp: float, geom: ArrayGeometry, offsets) -> Array:
    """Beams (one per column) towards (ψ∥, ψ⊥) shifted by the given beamwidth offsets"""
    width_par, width_perp = geom.beamwidth
    columns = [steering(psi_par + i * width_par, psi_perp + j * width_perp, geom) for i, j in offsets]
    return numpy.column_stack(columns) / numpy.sqrt(geom.size)


def random_beams(geom: ArrayGeometry, n_streams: int, rng) -> Array:
    phases = rng.uniform(0, 2 * numpy.pi, size=(geom.size, n_streams))
    return numpy.exp(1j * phases) / numpy.sqrt(geom.size)


def make_codebooks(
    prev_estimate,
    M: int,
    geoms: ArrayPair,
    seed: Seed,
    n_streams: int = 4,
    beams_per_path: int = 4,
    bs_yaw: Optional[float] = None,
) -> list[BeamPair]:
    """
    M precoder/combiner pairs.

    With a previous estimate, `beams_per_path` measurements per previous
    path point at its departure/arrival directions and at a grid of ±1
    beamwidth neighbors; the remaining slots get seeded random phase beams.

    Args:
        prev_estimate: previous channel estimate (raw: arrival azimuths in
            the vehicle frame, departure azimuths global) or None
        M: number of measurements
        geoms: tx and rx arrays
        seed: seed of the random beams
        n_streams: N_s
        beams_per_path: directed measurements per previous path
        bs_yaw: base station boresight azimuth; defaults to the one the
            estimate was made with
    """
    if M < 1:
        raise ValueError(f"M must be >= 1 (got {M})")
    rng = make_rng(seed)
    pairs = []
    if prev_estimate is not None:
        yaw = getattr(prev_estimate, "bs_yaw", 0.0) if bs_yaw is None else bs_yaw
        tx_par, tx_perp = spatial_frequencies(prev_estimate.phi_az, prev_estimate.phi_el, yaw)
        rx_par, rx_perp = spatial_frequencies(prev_estimate.theta_az, prev_estimate.theta_el)
        for path in range(len(tx_par)):
            for k in range(beams_per_path):
                if len(pairs) == M:
                    break
                offsets = [BEAM_OFFSETS[(k * n_streams + c) % len(BEAM_OFFSETS)] for c in range(n_streams)]
                F = directed_beams(tx_par[path], tx_perp[path], geoms.tx, offsets)
                W = directed_beams(rx_par[path], rx_perp[path], geoms.rx, offsets)
                pairs.append(BeamPair(F, W))
    while len(pairs) < M:
        pairs.append(BeamPair(random_beams(geoms.tx, n_streams, rng), random_beams(geoms.rx, n_streams, rng)))
    return pairs
