#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Separable delay/angle dictionaries and tracking windows."""

import logging
import math

import numpy

from mmtrack.phy.array import ArrayGeometry, response
from mmtrack.phy.radio import RadioConfig, pulse_samples
from mmtrack.types import Array, GridIndex, NamedTuple, Sequence, Union

log = logging.getLogger(__name__)

DIMENSIONS = ("delay", "aod_par", "aod_perp", "aoa_par", "aoa_perp")


class Resolutions(NamedTuple):
    """Grid resolutions: delay (s) and angle (degrees, mapped to sin(angle) in spatial frequency)"""

    delay: float = 0.25e-9
    angle_deg: float = 0.25

    def check(self) -> "Resolutions":
        if self.delay <= 0 or self.angle_deg <= 0:
            raise ValueError(f"resolutions must be > 0 (got {self})")
        return self

    @property
    def spatial(self) -> float:
        return math.sin(math.radians(self.angle_deg))


def angular_grid(step: float) -> Array:
    """Symmetric spatial frequency grid over [-1, 1] containing 0"""
    n = math.floor(1 / step)
    return numpy.arange(-n, n + 1) * step


class DictionarySet(NamedTuple):
    """
    Full dictionary grids

    Attributes:
        delay: delay grid (s), relative to the receiver window start
        aod_par, aod_perp: departure spatial frequency grids
        aoa_par, aoa_perp: arrival spatial frequency grids
        resolutions: grid resolutions
        cfg: radio parameters the delay atoms are sampled with
    """

    delay: Array
    aod_par: Array
    aod_perp: Array
    aoa_par: Array
    aoa_perp: Array
    resolutions: Resolutions
    cfg: RadioConfig

    @property
    def grids(self) -> tuple[Array, Array, Array, Array, Array]:
        return self.delay, self.aod_par, self.aod_perp, self.aoa_par, self.aoa_perp

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(grid) for grid in self.grids)

    def pulses(self, indices=None) -> Array:
        """Ψ_1 columns as rows: (len(indices), N_d) pulse samples p(ẗ_j)"""
        delays = self.delay if indices is None else self.delay[indices]
        return pulse_samples(delays, self.cfg)

    def steering(self, k: int, geom: ArrayGeometry, indices=None) -> Array:
        """Ψ_k for an angular dimension k (1..4 zero based): (n, len(indices)) 1D responses"""
        grid = self.grids[k] if indices is None else self.grids[k][indices]
        n = geom.nx if k in (1, 3) else geom.ny
        return response(grid, n)

    def values(self, index: GridIndex) -> tuple[float, ...]:
        """Grid values of a 5-tuple"""
        return tuple(float(grid[i]) for grid, i in zip(self.grids, index))

    def nearest(self, k: int, value: float) -> int:
        grid = self.grids[k]
        return int(numpy.argmin(numpy.abs(grid - value)))


def build_full_dictionaries(cfg: RadioConfig, resolutions: Resolutions = Resolutions()) -> DictionarySet:
    """
    Delay grid spanning [0, N_d·T_s) and spatial frequency grids spanning [-1, 1]
    """
    resolutions.check()
    n_delay = round(cfg.n_taps * cfg.T_s / resolutions.delay)
    delay = numpy.arange(n_delay) * resolutions.delay
    angles = angular_grid(resolutions.spatial)
    return DictionarySet(delay, angles, angles.copy(), angles.copy(), angles.copy(), resolutions, cfg)


class Window(NamedTuple):
    """Per dimension grid indices searched for one path"""

    delay: Array
    aod_par: Array
    aod_perp: Array
    aoa_par: Array
    aoa_perp: Array

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(indices) for indices in self)

    def local(self, index: GridIndex) -> list[int]:
        """Position of a global 5-tuple inside the window"""
        return [int(numpy.flatnonzero(indices == i)[0]) for indices, i in zip(self, index)]

    def global_index(self, local: Sequence[int]) -> GridIndex:
        return tuple(int(indices[i]) for indices, i in zip(self, local))


def full_window(dictionary: DictionarySet) -> Window:
    return Window(*(numpy.arange(size) for size in dictionary.sizes))


def _radii(g: Union[int, Sequence[int]]) -> tuple[int, ...]:
    radii = (g,) * 5 if isinstance(g, (int, numpy.integer)) else tuple(g)
    if len(radii) != 5 or any(r < 0 for r in radii):
        raise ValueError(f"window radii must be 5 non negative integers (got {g!r})")
    return radii


def reduce_dictionaries(full: DictionarySet, prev, g: Union[int, Sequence[int]]) -> list[Window]:
    """
    Per path windows [ĵ - g_k, ĵ + g_k] clipped to the grid bounds.

    Args:
        full: full dictionaries
        prev: previous [`SupportSet`][mmtrack.fmomp.tracker.SupportSet] (or sequence of 5-tuples)
        g: window radius, one for all dimensions or one per dimension
    """
    radii = _radii(g)
    indices = getattr(prev, "indices", prev)
    windows = []
    for index in indices:
        ranges = []
        for k, (i, radius, size) in enumerate(zip(index, radii, full.sizes)):
            if not 0 <= i < size:
                raise ValueError(f"index {i} out of bounds of the {DIMENSIONS[k]} grid (size {size})")
            low, high = max(0, i - radius), min(size - 1, i + radius)
            if high - low < 2 * radius:
                log.debug("%s window around %d clipped to [%d, %d]", DIMENSIONS[k], i, low, high)
            ranges.append(numpy.arange(low, high + 1))
        windows.append(Window(*ranges))
    return windows
