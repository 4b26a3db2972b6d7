#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Uniform rectangular arrays with half-wavelength spacing."""

import numpy

from mmtrack.types import Array, NamedTuple


class ArrayGeometry(NamedTuple):
    """URA with nx elements along the horizontal axis and ny along the vertical one"""

    nx: int
    ny: int

    def check(self) -> "ArrayGeometry":
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"array needs at least one element per axis (got {self.nx}x{self.ny})")
        return self

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def beamwidth(self) -> tuple[float, float]:
        """Null-to-peak width in spatial frequency per axis"""
        return 2 / self.nx, 2 / self.ny


class ArrayPair(NamedTuple):
    """Base station (tx) and vehicle (rx) arrays"""

    tx: ArrayGeometry
    rx: ArrayGeometry


def response(psi, n: int) -> Array:
    """
    1D array response(s) [a(ψ)]_k = exp(-jπkψ), k = 0..n-1

    Returns:
        (n,) for a scalar ψ, (n, len(ψ)) for a vector of ψ (one column per ψ)
    """
    k = numpy.arange(n)
    psi = numpy.asarray(psi, dtype=float)
    return numpy.exp(-1j * numpy.pi * numpy.multiply.outer(k, psi))


def steering(psi_par: float, psi_perp: float, geom: ArrayGeometry) -> Array:
    """a(ψ∥) ⊗ a(ψ⊥), the ∥ axis being the slow index"""
    return numpy.kron(response(psi_par, geom.nx), response(psi_perp, geom.ny))


def spatial_frequencies(az, el, yaw: float = 0.0) -> tuple:
    """(ψ∥, ψ⊥) of a direction relative to an array whose boresight azimuth is yaw"""
    az = numpy.asarray(az, dtype=float) - yaw
    el = numpy.asarray(el, dtype=float)
    return numpy.cos(el) * numpy.sin(az), numpy.sin(el)


def direction_from_frequencies(psi_par, psi_perp, yaw: float = 0.0) -> tuple:
    """
    Inverse of [`spatial_frequencies`][mmtrack.phy.array.spatial_frequencies]
    for directions in front of the array (|az - yaw| ≤ 90°)
    """
    psi_par = numpy.asarray(psi_par, dtype=float)
    el = numpy.arcsin(numpy.clip(psi_perp, -1, 1))
    cos_el = numpy.cos(el)
    ratio = numpy.divide(psi_par, cos_el, out=numpy.zeros_like(psi_par), where=cos_el > 1e-12)
    az = numpy.arcsin(numpy.clip(ratio, -1, 1)) + yaw
    az = numpy.pi - numpy.mod(numpy.pi - az, 2 * numpy.pi)
    return az, el
