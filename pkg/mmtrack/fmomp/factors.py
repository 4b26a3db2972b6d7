#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Factored measurement atoms.

For a grid tuple j = (j1..j5) the whitened response of measurement m is the
(N_s, Q) block

    Y_m[i, q] = (ζ^S_{j1} ζ^F_{j2 j3})[q, m] · ζ^W_{j4 j5}[i, m]

where ζ^S holds the pulse-shaped pilots, ζ^F = F_m^T conj(a_t) and
ζ^W = L_m^-1 W_m^H a_r. The factors of a window are computed once and any
atom is then one small product away. Atoms are laid out like
`MeasurementSet.gamma`: the blocks of each measurement flattened column-major
and stacked over m.
"""

import logging

import numpy
import scipy.linalg

from mmtrack.phy.array import response, steering
from mmtrack.types import Array, GridIndex, NamedTuple, Sequence

from . import FmompError
from .dictionary import DictionarySet, Window

log = logging.getLogger(__name__)

#: largest N_t·N_r·N_d the dense measurement matrix is built for
DIRECT_COLUMN_LIMIT = 4096


class OracleTooLarge(FmompError):
    """Instance too large to materialize the dense measurement matrix"""


def _pilot_taps(meas) -> int:
    return min(meas.cfg.n_taps, meas.pilots.n_taps)


class FactorCache(NamedTuple):
    """
    Correlation factors over one window

    Attributes:
        S: (n1, Q, N_s) pilot factors ζ^S per delay index
        F: (n2, n3, N_s, M) precoder factors ζ^F per AoD pair
        W: (n4, n5, N_s, M) whitened combiner factors ζ^W per AoA pair
        window: the grid indices the factors were computed over
    """

    S: Array
    F: Array
    W: Array
    window: Window

    @property
    def shape(self) -> tuple[int, int, int]:
        """(Q, N_s, M)"""
        _, Q, N_s = self.S.shape
        return Q, N_s, self.F.shape[-1]

    @property
    def atom_size(self) -> int:
        Q, N_s, M = self.shape
        return Q * N_s * M

    def atom(self, local: Sequence[int]) -> Array:
        """Atom of the window position (local indices, one per dimension)"""
        j1, j2, j3, j4, j5 = local
        c = self.S[j1] @ self.F[j2, j3]
        W = self.W[j4, j5]
        return (c.T[:, :, None] * W.T[:, None, :]).reshape(-1)

    def candidate_atoms(self, local: Sequence[int], k: int) -> Array:
        """
        Atoms obtained by sweeping dimension k over the whole window while the
        other dimensions stay at `local`.

        Returns:
            (n_k, Q·N_s·M) matrix, one atom per row
        """
        j1, j2, j3, j4, j5 = local
        S = self.S if k == 0 else self.S[j1][None]
        if k == 1:
            F = self.F[:, j3]
        elif k == 2:
            F = self.F[j2, :]
        else:
            F = self.F[j2, j3][None]
        if k == 3:
            W = self.W[:, j5]
        elif k == 4:
            W = self.W[j4, :]
        else:
            W = self.W[j4, j5][None]
        c = numpy.matmul(S, F)
        atoms = c.transpose(0, 2, 1)[:, :, :, None] * W.transpose(0, 2, 1)[:, :, None, :]
        return atoms.reshape(atoms.shape[0], -1)

    def delay_scores(self, residual: Array, j1: int) -> tuple[Array, Array]:
        """
        Correlations of every (j2, j3, j4, j5) atom of the window with the
        residual at a fixed delay position, without forming the atoms.

        Returns:
            |ξ^H r| and ‖ξ‖, both (n2, n3, n4, n5)
        """
        Q, N_s, M = self.shape
        n2, n3, n4, n5 = self.F.shape[0], self.F.shape[1], self.W.shape[0], self.W.shape[1]
        S = self.S[j1]
        F = self.F.reshape(n2 * n3, N_s, M)
        W = self.W.reshape(n4 * n5, N_s, M)
        pilot = numpy.einsum("qk,mqi->mki", S.conj(), residual.reshape(M, Q, N_s))
        corr = numpy.einsum("akm,mki,bim->ab", F.conj(), pilot, W.conj(), optimize=True)
        c = numpy.einsum("qk,akm->aqm", S, F, optimize=True)
        energy = numpy.sum(numpy.abs(c) ** 2, axis=1) @ numpy.sum(numpy.abs(W) ** 2, axis=1).T
        shape = (n2, n3, n4, n5)
        return numpy.abs(corr).reshape(shape), numpy.sqrt(energy).reshape(shape)


def compute_factors(window: Window, meas, full: DictionarySet) -> FactorCache:
    """
    Pilot, precoder and combiner factors over a window.

    Args:
        window: grid indices per dimension
        meas: [`MeasurementSet`][mmtrack.phy.channel.MeasurementSet] carrying
            the pilots, codebooks and radio parameters
        full: full dictionaries the window indexes into
    """
    geoms = meas.geoms
    M = meas.n_meas
    N_s = meas.pilots.n_streams
    n_taps = _pilot_taps(meas)
    pulses = full.pulses(window.delay)[:, :n_taps]
    S = numpy.sqrt(meas.tx_power) * numpy.einsum("jd,dkq->jqk", pulses, meas.pilots.delayed()[:n_taps])

    A2 = full.steering(1, geoms.tx, window.aod_par)
    A3 = full.steering(2, geoms.tx, window.aod_perp)
    F = meas.F.reshape(M, geoms.tx.nx, geoms.tx.ny, N_s)
    F = numpy.einsum("mxyk,xa,yb->abkm", F, A2.conj(), A3.conj(), optimize=True)

    A4 = full.steering(3, geoms.rx, window.aoa_par)
    A5 = full.steering(4, geoms.rx, window.aoa_perp)
    Wh = meas.whitened_combiners.reshape(M, N_s, geoms.rx.nx, geoms.rx.ny)
    W = numpy.einsum("mixy,xa,yb->abim", Wh, A4, A5, optimize=True)
    return FactorCache(S, F, W, window)


def dense_atom(meas, full: DictionarySet, index: GridIndex) -> Array:
    """
    Atom of a grid tuple computed from scratch out of the full steering
    vectors, without any factor reuse. Same layout as
    [`FactorCache.atom`][mmtrack.fmomp.factors.FactorCache.atom].
    """
    geoms = meas.geoms
    n_taps = _pilot_taps(meas)
    _, aod_par, aod_perp, aoa_par, aoa_perp = full.values(index)
    pulse = full.pulses([index[0]])[0, :n_taps]
    a_t = steering(aod_par, aod_perp, geoms.tx)
    a_r = steering(aoa_par, aoa_perp, geoms.rx)
    delayed = meas.pilots.delayed()[:n_taps]
    tx = numpy.einsum("t,mtk,d,dkq->mq", a_t.conj(), meas.F, pulse, delayed, optimize=True)
    tx *= numpy.sqrt(meas.tx_power)
    rx = meas.whitened_combiners @ a_r
    return (tx[:, :, None] * rx[:, None, :]).reshape(-1)


def direct_column(meas, m: int, full: DictionarySet, index: GridIndex) -> Array:
    """
    Explicit Υ_m·Ψ[:, j] product for measurement m.

    Υ_m = ((I_{N_d} ⊗ F_m)·√P_t·S)^T ⊗ W̆_m^H is materialized in full and
    multiplied by the dictionary column vec([H_0 … H_{N_d-1}]) of a unit
    gain path at the grid tuple.

    Returns:
        length Q·N_s vector, the column-major flattening of the whitened block

    Raises:
        OracleTooLarge: N_t·N_r·N_d exceeds 4096
    """
    geoms = meas.geoms
    n_taps = _pilot_taps(meas)
    size = geoms.tx.size * geoms.rx.size * n_taps
    if size > DIRECT_COLUMN_LIMIT:
        raise OracleTooLarge(f"N_t·N_r·N_d = {size} exceeds {DIRECT_COLUMN_LIMIT}")
    N_s = meas.pilots.n_streams
    stacked = meas.pilots.stacked[: n_taps * N_s]
    precoded = numpy.kron(numpy.eye(n_taps), meas.F[m]) @ (numpy.sqrt(meas.tx_power) * stacked)
    upsilon = numpy.kron(precoded.T, meas.whitened_combiners[m])

    _, aod_par, aod_perp, aoa_par, aoa_perp = full.values(index)
    pulse = full.pulses([index[0]])[0, :n_taps]
    a_t = numpy.kron(response(aod_par, geoms.tx.nx), response(aod_perp, geoms.tx.ny))
    a_r = numpy.kron(response(aoa_par, geoms.rx.nx), response(aoa_perp, geoms.rx.ny))
    column = numpy.kron(pulse, numpy.kron(a_t.conj(), a_r))
    return upsilon @ column


def khatri_rao_atom(cache: FactorCache, local: Sequence[int]) -> Array:
    """
    Same atom as [`FactorCache.atom`][mmtrack.fmomp.factors.FactorCache.atom]
    written as the column-wise Kronecker product vec((ζ^S ζ^F) ⊙ ζ^W)
    """
    j1, j2, j3, j4, j5 = local
    return scipy.linalg.khatri_rao(cache.S[j1] @ cache.F[j2, j3], cache.W[j4, j5]).flatten(order="F")
