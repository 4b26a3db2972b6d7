#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Support search: windowed tracking (F-MOMP), the coarse full-grid initializer
and the oracle-seeded initial support.

Both searches share one pursuit: every path starts from a grid position and
runs `N_iter` sweeps over the five dimensions, each sweep picking the atom of
the dimension's window that best correlates with the residual while the other
four dimensions stay fixed. After each path the gains of all chosen atoms are
re-fitted by least squares and the residual updated.
"""

import logging
import math

import numpy
import scipy.linalg

from mmtrack.phy.array import direction_from_frequencies, spatial_frequencies
from mmtrack.phy.radio import RadioConfig
from mmtrack.types import Array, GridIndex, NamedTuple, Optional, Sequence
from mmtrack.util import to_db, wrap_angle

from . import FmompError
from .dictionary import DIMENSIONS, DictionarySet, Resolutions, Window, full_window, reduce_dictionaries
from .factors import FactorCache, compute_factors

log = logging.getLogger(__name__)

#: atoms with a smaller norm are considered zero
ATOM_FLOOR = 1e-12

#: default bound on the number of grid tuples the initializer may sweep
DEFAULT_INIT_BUDGET = 10**8


class DegenerateWindow(FmompError):
    """Every atom of a search window is numerically zero"""


class InitTooLarge(FmompError):
    """Coarse grid exceeds the initializer budget"""


class ChannelEstimate(NamedTuple):
    """
    Estimated paths of one snapshot

    Attributes:
        alpha: complex gains
        t: times of arrival (s). Raw estimates are offset by the receiver
            clock: t = t_true - c_n
        theta_az, theta_el: angles of arrival (rad). Raw azimuths are
            relative to the vehicle heading, compensated ones are global
        phi_az, phi_el: global angles of departure (rad)
        compensated: whether the arrival azimuths were rotated to the
            global frame
        bs_yaw: base station boresight azimuth used for the departure angles
        t_off0: clock offset estimate carried for path selection (s)
    """

    alpha: Array
    t: Array
    theta_az: Array
    theta_el: Array
    phi_az: Array
    phi_el: Array
    compensated: bool = False
    bs_yaw: float = 0.0
    t_off0: float = 0.0

    @property
    def n_paths(self) -> int:
        return len(self.t)

    @property
    def magnitude(self) -> Array:
        return numpy.abs(self.alpha)

    @property
    def gains_db(self) -> Array:
        return to_db(self.alpha)

    @property
    def matrix(self) -> Array:
        """(N_est, 6) rows of (|α|, t, θ_az, θ_el, φ_az, φ_el)"""
        return numpy.column_stack((self.magnitude, self.t, self.theta_az, self.theta_el, self.phi_az, self.phi_el))

    def subset(self, indices: Sequence[int]) -> "ChannelEstimate":
        indices = numpy.asarray(indices, dtype=int)
        return self._replace(
            alpha=self.alpha[indices],
            t=self.t[indices],
            theta_az=self.theta_az[indices],
            theta_el=self.theta_el[indices],
            phi_az=self.phi_az[indices],
            phi_el=self.phi_el[indices],
        )

    @classmethod
    def from_paths(
        cls, paths: Sequence, varpi: Optional[float] = None, clock_offset: float = 0.0, bs_yaw: float = 0.0
    ) -> "ChannelEstimate":
        """
        Ideal estimate of traced paths. With a heading the estimate is raw
        (arrival azimuths relative to the vehicle, delays shifted by the
        clock offset), without it is compensated with absolute delays.
        """
        alpha = numpy.array([path.alpha for path in paths], dtype=complex)
        theta_az = numpy.array([path.theta_az for path in paths], dtype=float)
        if varpi is not None:
            theta_az = numpy.asarray(wrap_angle(theta_az - varpi), dtype=float)
        return cls(
            alpha=alpha,
            t=numpy.array([path.t for path in paths], dtype=float) - clock_offset,
            theta_az=theta_az,
            theta_el=numpy.array([path.theta_el for path in paths], dtype=float),
            phi_az=numpy.array([path.phi_az for path in paths], dtype=float),
            phi_el=numpy.array([path.phi_el for path in paths], dtype=float),
            compensated=varpi is None,
            bs_yaw=bs_yaw,
        )


class SupportSet(NamedTuple):
    """
    Dictionary support of the tracked paths

    Attributes:
        indices: one grid 5-tuple per path, pairwise distinct
        gains: complex gains of the support atoms
        window: receiver window start the delay indices refer to (s)
    """

    indices: tuple[GridIndex, ...]
    gains: Array
    window: float = 0.0

    @property
    def n_paths(self) -> int:
        return len(self.indices)

    def check(self, full: DictionarySet) -> "SupportSet":
        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f"support has duplicate tuples: {self.indices}")
        for index in self.indices:
            for k, (i, size) in enumerate(zip(index, full.sizes)):
                if not 0 <= i < size:
                    raise ValueError(f"index {i} out of bounds of the {DIMENSIONS[k]} grid (size {size})")
        return self

    def shifted(self, window: float, resolution: float, n_delay: int) -> "SupportSet":
        """
        Same physical delays referred to another receiver window start; the
        delay indices are clipped to the grid.
        """
        shift = round((self.window - window) / resolution)
        if shift == 0:
            return self._replace(window=window)
        indices = [(min(max(index[0] + shift, 0), n_delay - 1), *index[1:]) for index in self.indices]
        return self._replace(indices=_distinct(indices, n_delay), window=window)


def _distinct(indices: Sequence[GridIndex], n_delay: int) -> tuple[GridIndex, ...]:
    """Resolve colliding tuples by moving the later ones to the next free delay index"""
    result = []
    for index in indices:
        index = tuple(int(i) for i in index)
        step = 0
        while index in result:
            step += 1
            index = ((index[0] + step) % n_delay, *index[1:])
        result.append(index)
    return tuple(result)


def _exclude(scores: Array, window: Window, local: Sequence[int], k: int, chosen: Sequence[GridIndex]) -> None:
    fixed = window.global_index(local)
    for index in chosen:
        if all(index[d] == fixed[d] for d in range(5) if d != k):
            scores[numpy.flatnonzero(window[k] == index[k])] = -numpy.inf


def _sweep(cache: FactorCache, local: list[int], k: int, residual: Array, chosen: Sequence[GridIndex]) -> int:
    """Best position of dimension k with the others fixed (lowest index on ties)"""
    atoms = cache.candidate_atoms(local, k)
    norms = numpy.linalg.norm(atoms, axis=1)
    if norms.max() <= ATOM_FLOOR:
        raise DegenerateWindow(f"all atoms of the {DIMENSIONS[k]} window are zero")
    safe = numpy.where(norms > ATOM_FLOOR, norms, 1.0)
    scores = numpy.where(norms > ATOM_FLOOR, numpy.abs(atoms.conj() @ residual) / safe, 0.0)
    _exclude(scores, cache.window, local, k, chosen)
    return int(numpy.argmax(scores))


def _exhaustive(cache: FactorCache, residual: Array, chosen: Sequence[GridIndex]) -> list[int]:
    """Best window position over all tuples (lowest flat index on ties)"""
    window = cache.window
    taken = [window.local(index) for index in chosen if _inside(window, index)]
    best, best_score, largest = None, -numpy.inf, 0.0
    for j1 in range(len(window.delay)):
        corr, norms = cache.delay_scores(residual, j1)
        largest = max(largest, float(norms.max()))
        scores = numpy.where(norms > ATOM_FLOOR, corr / numpy.where(norms > ATOM_FLOOR, norms, 1.0), 0.0)
        for local in taken:
            if local[0] == j1:
                scores[tuple(local[1:])] = -numpy.inf
        position = int(numpy.argmax(scores))
        if scores.flat[position] > best_score:
            best_score = scores.flat[position]
            best = [j1, *(int(i) for i in numpy.unravel_index(position, scores.shape))]
    if largest <= ATOM_FLOOR:
        raise DegenerateWindow("all atoms of the window are zero")
    if best is None:
        raise DegenerateWindow("no free atom left in the window")
    return best


def _inside(window: Window, index: GridIndex) -> bool:
    return all(numpy.any(indices == i) for indices, i in zip(window, index))


def pursuit(
    gamma: Array,
    caches: Sequence[FactorCache],
    starts: Optional[Sequence[Sequence[int]]],
    N_iter: int,
    trace: Optional[list] = None,
) -> tuple[tuple[GridIndex, ...], Array]:
    """
    Alternating maximization over the given windows, one path per window.

    Args:
        gamma: whitened measurement vector
        caches: factor cache of each path window
        starts: local start position of each path in its window; None starts
            each path at the best tuple of an exhaustive search of its window
        N_iter: sweeps over the five dimensions per path
        trace: when given, the residual after each path is appended to it

    Returns:
        chosen grid tuples and their least-squares gains
    """
    residual = gamma.copy()
    chosen, atoms = [], []
    gains = numpy.zeros(0, dtype=complex)
    for n, cache in enumerate(caches):
        local = _exhaustive(cache, residual, chosen) if starts is None else [int(i) for i in starts[n]]
        for _ in range(N_iter):
            for k in range(5):
                local[k] = _sweep(cache, local, k, residual, chosen)
        index = cache.window.global_index(local)
        if index in chosen:
            raise DegenerateWindow(f"no free atom left in the window of path {n}")
        chosen.append(index)
        atoms.append(cache.atom(local))
        basis = numpy.column_stack(atoms)
        gains = scipy.linalg.lstsq(basis, gamma)[0]
        residual = gamma - basis @ gains
        if trace is not None:
            trace.append(residual)
        log.debug("path %d: support %s, residual norm %.3e", n, index, numpy.linalg.norm(residual))
    return tuple(chosen), gains


def raw_estimate(support: SupportSet, full: DictionarySet, bs_yaw: float = 0.0) -> ChannelEstimate:
    """
    Channel estimate of a support: delays include the window start, arrival
    azimuths stay relative to the vehicle frame.
    """
    values = numpy.array([full.values(index) for index in support.indices]).reshape(-1, 5)
    phi_az, phi_el = direction_from_frequencies(values[:, 1], values[:, 2], bs_yaw)
    theta_az, theta_el = direction_from_frequencies(values[:, 3], values[:, 4])
    return ChannelEstimate(
        alpha=numpy.asarray(support.gains, dtype=complex),
        t=values[:, 0] + support.window,
        theta_az=theta_az,
        theta_el=theta_el,
        phi_az=phi_az,
        phi_el=phi_el,
        compensated=False,
        bs_yaw=bs_yaw,
    )


def fmomp_track(
    meas, prev: SupportSet, full: DictionarySet, g, N_est: int, N_iter: int
) -> tuple[ChannelEstimate, SupportSet]:
    """
    Track the channel support of a snapshot around the previous one.

    Args:
        meas: whitened [`MeasurementSet`][mmtrack.phy.channel.MeasurementSet]
        prev: support of the previous snapshot
        full: full dictionaries
        g: window radius (one for all dimensions or one per dimension)
        N_est: number of paths
        N_iter: sweeps per path

    Returns:
        raw channel estimate and the new support

    Raises:
        DegenerateWindow: all the atoms of a window are zero
    """
    if N_est < 1 or N_iter < 1:
        raise ValueError(f"N_est and N_iter must be >= 1 (got {N_est}, {N_iter})")
    if prev.n_paths != N_est:
        raise ValueError(f"previous support has {prev.n_paths} paths, expected {N_est}")
    prev = prev.shifted(meas.window, full.resolutions.delay, full.sizes[0])
    windows = reduce_dictionaries(full, prev, g)
    caches = [compute_factors(window, meas, full) for window in windows]
    starts = [window.local(index) for window, index in zip(windows, prev.indices)]
    indices, gains = pursuit(meas.gamma, caches, starts, N_iter)
    support = SupportSet(indices, gains, meas.window)
    return raw_estimate(support, full, meas.bs_yaw), support


def build_coarse_dictionaries(cfg: RadioConfig, geoms, oversample: int = 1) -> DictionarySet:
    """
    Initial access grids: delays every T_s/oversample over the taps and
    spatial frequencies every 2/(N·oversample) per array axis.
    """
    if oversample < 1:
        raise ValueError(f"oversample must be >= 1 (got {oversample})")
    delay_step = cfg.T_s / oversample
    delay = numpy.arange(cfg.n_taps * oversample) * delay_step

    def grid(n):
        step = 2 / (n * oversample)
        half = math.floor(1 / step)
        return numpy.arange(-half, half + 1) * step

    finest = 2 / (max(geoms.tx.nx, geoms.tx.ny, geoms.rx.nx, geoms.rx.ny) * oversample)
    resolutions = Resolutions(delay_step, math.degrees(math.asin(min(finest, 1.0))))
    return DictionarySet(
        delay, grid(geoms.tx.nx), grid(geoms.tx.ny), grid(geoms.rx.nx), grid(geoms.rx.ny), resolutions, cfg
    )


def momp_init(
    meas, coarse: DictionarySet, N_est: int, N_iter: int, budget: int = DEFAULT_INIT_BUDGET
) -> SupportSet:
    """
    Cold start support search over the whole (coarse) grid.

    Each path starts at the best tuple of an exhaustive search of the coarse
    grid on the current residual (affordable because the correlations are
    factored per delay) and is then refined by the alternating sweeps.

    Raises:
        InitTooLarge: the number of grid tuples exceeds the budget
    """
    if N_est < 1 or N_iter < 1:
        raise ValueError(f"N_est and N_iter must be >= 1 (got {N_est}, {N_iter})")
    size = math.prod(coarse.sizes)
    if size > budget:
        raise InitTooLarge(f"coarse grid has {size} tuples, budget is {budget}")
    window = full_window(coarse)
    cache = compute_factors(window, meas, coarse)
    indices, gains = pursuit(meas.gamma, [cache] * N_est, None, N_iter)
    log.info("initial support: %s", indices)
    return SupportSet(indices, gains, meas.window)


def rebase_support(support: SupportSet, source: DictionarySet, target: DictionarySet) -> SupportSet:
    """Nearest target grid tuples of a support found on another grid"""
    indices = [
        tuple(target.nearest(k, value) for k, value in enumerate(source.values(index))) for index in support.indices
    ]
    return support._replace(indices=_distinct(indices, target.sizes[0]))


def oracle_support(
    paths: Sequence,
    full: DictionarySet,
    N_est: int,
    varpi: float,
    t_off: float,
    window: float = 0.0,
    bs_yaw: float = 0.0,
    offsets: Sequence[int] = (0, 0, 0, 0, 0),
) -> SupportSet:
    """
    Grid support of the strongest N_est true paths, perturbed by `offsets`
    grid cells per dimension.

    Args:
        paths: traced paths (global angles, absolute delays)
        full: full dictionaries
        N_est: number of paths
        varpi: vehicle heading (rad)
        t_off: receiver timing offset (window start + clock offset) (s)
        window: receiver window start (s)
        bs_yaw: base station boresight azimuth (rad)
        offsets: index offset per dimension
    """
    if not paths:
        raise ValueError("oracle support needs at least one path")
    strongest = sorted(paths, key=lambda path: -abs(path.alpha))
    indices, gains = [], []
    for path in strongest:
        tx = spatial_frequencies(path.phi_az, path.phi_el, bs_yaw)
        rx = spatial_frequencies(path.theta_az, path.theta_el, varpi)
        values = (path.t - t_off, *tx, *rx)
        index = []
        for k, (value, offset, size) in enumerate(zip(values, offsets, full.sizes)):
            index.append(min(max(full.nearest(k, float(value)) + offset, 0), size - 1))
        index = tuple(index)
        if index not in indices:
            indices.append(index)
            gains.append(path.alpha)
        if len(indices) == N_est:
            break
    while len(indices) < N_est:
        indices.append(indices[0])
        gains.append(0j)
    return SupportSet(_distinct(indices, full.sizes[0]), numpy.array(gains, dtype=complex), window)
