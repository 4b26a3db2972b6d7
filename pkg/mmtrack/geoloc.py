#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Single-shot geometric localization from a channel estimate.

Every retained path ℓ meets the equation

    r_v + d_ℓ·ϑ_ℓ = r_B + (c·(t_ℓ + t_off) - d_ℓ)·φ_ℓ

where ϑ points from the vehicle to the scatterer and φ from the base
station to the scatterer. With the vehicle height known the unknowns are
the planar position, the clock offset and one distance per path, which a
weighted least squares solve recovers once two paths are available:

```python
from mmtrack.geoloc import LocalizeParams, compensate, localize

est = compensate(raw, varpi_hat, t_off0_hat)
result = localize(est, scene.r_B, scene.h_v, LocalizeParams(), tx_power_dbm=45)
print(result.r_xy, result.t_off)
```
"""

import logging
import math

import numpy
import scipy.linalg

from mmtrack.constants import SPEED_OF_LIGHT
from mmtrack.fmomp.tracker import ChannelEstimate
from mmtrack.types import Array, NamedTuple, Optional, Sequence
from mmtrack.util import to_db, wrap_angle

log = logging.getLogger(__name__)


class GeolocError(Exception):
    """Localization error"""


class CompensationError(GeolocError):
    """Estimate is not in the expected (raw or compensated) state"""


class InsufficientPaths(GeolocError):
    """Fewer than two paths survived the selection"""


class GeometryDegenerate(GeolocError):
    """Stacked localization system is rank deficient"""


class DirectionVectors(NamedTuple):
    """Unit vectors, (n, 3) each: dod from the base station, doa from the vehicle, towards the scatterer"""

    dod: Array
    doa: Array


class LocalizeParams(NamedTuple):
    """
    Path selection and weighting parameters

    Attributes:
        alpha_th_dbm: received power threshold (dBm) under which a path is dropped
        weight_eps: weight of the weakest path
        detour_check: check first order consistency against a position prior
        detour_tol: tolerance (m) of the consistency check
        los_tol: |ϑ + φ| under which a path is taken as line of sight
        z_tol: |ϑ_z + φ_z| under which the height closed form is not used
    """

    alpha_th_dbm: float = -105.0
    weight_eps: float = 2.0
    detour_check: bool = True
    detour_tol: float = 5.0
    los_tol: float = 0.02
    z_tol: float = 0.05

    def check(self) -> "LocalizeParams":
        if self.weight_eps <= 0:
            raise ValueError(f"weight_eps must be > 0 (got {self.weight_eps})")
        if self.detour_tol <= 0 or self.los_tol <= 0 or self.z_tol <= 0:
            raise ValueError("tolerances must be > 0")
        return self


class Selection(NamedTuple):
    """Retained path indices and their vehicle→scatterer distance (nan when unknown)"""

    selected: Array
    d_theta: Array


class LocalizationResult(NamedTuple):
    """
    Single-shot localization

    Attributes:
        r_xy: planar position (m)
        t_off: clock offset (s)
        d_theta: vehicle→scatterer distance per selected path (m)
        selected: indices of the paths used
        residual_norm: weighted residual norm of the solve
    """

    r_xy: Array
    t_off: float
    d_theta: Array
    selected: Array
    residual_norm: float


def unit_vectors(az, el) -> Array:
    """(n, 3) unit vectors [cos el cos az, cos el sin az, sin el]"""
    az = numpy.atleast_1d(numpy.asarray(az, dtype=float))
    el = numpy.atleast_1d(numpy.asarray(el, dtype=float))
    return numpy.column_stack((numpy.cos(el) * numpy.cos(az), numpy.cos(el) * numpy.sin(az), numpy.sin(el)))


def direction_vectors(est: ChannelEstimate) -> DirectionVectors:
    if not est.compensated:
        raise CompensationError("direction vectors need a compensated estimate")
    return DirectionVectors(unit_vectors(est.phi_az, est.phi_el), unit_vectors(est.theta_az, est.theta_el))


def compensate(raw: ChannelEstimate, varpi_hat: float, t_off0_hat: float) -> ChannelEstimate:
    """
    Rotate the arrival azimuths to the global frame. Delays are left as
    they are; the clock offset estimate is carried for the path selection.

    Raises:
        CompensationError: estimate already compensated
    """
    if raw.compensated:
        raise CompensationError("estimate is already compensated")
    theta_az = numpy.asarray(wrap_angle(numpy.asarray(raw.theta_az) + varpi_hat), dtype=float)
    return raw._replace(theta_az=theta_az, compensated=True, t_off0=float(t_off0_hat))


def uncompensate(est: ChannelEstimate, varpi_hat: float) -> ChannelEstimate:
    """Inverse of [`compensate`][mmtrack.geoloc.compensate]"""
    if not est.compensated:
        raise CompensationError("estimate is not compensated")
    theta_az = numpy.asarray(wrap_angle(numpy.asarray(est.theta_az) - varpi_hat), dtype=float)
    return est._replace(theta_az=theta_az, compensated=False, t_off0=0.0)


def absolute_estimate(est: ChannelEstimate, t_off: float) -> ChannelEstimate:
    """Estimate with absolute times of arrival t + t_off"""
    return est._replace(t=numpy.asarray(est.t) + t_off, t_off0=0.0)


def received_dbm(est: ChannelEstimate, tx_power_dbm: float) -> Array:
    return tx_power_dbm + to_db(est.alpha)


def closest_approach(r_B: Array, dod: Array, r_v: Array, doa: Array) -> Optional[tuple[float, float, float]]:
    """
    Closest approach of the rays r_B + s·dod and r_v + u·doa.

    Returns:
        (s, u, gap) or None for parallel rays
    """
    w = r_B - r_v
    b = float(dod @ doa)
    denominator = 1 - b * b
    if denominator < 1e-12:
        return None
    d, e = float(dod @ w), float(doa @ w)
    s = (b * e - d) / denominator
    u = (e - b * d) / denominator
    gap = float(numpy.linalg.norm(r_B + s * dod - r_v - u * doa))
    return s, u, gap


def select_paths(
    est: ChannelEstimate,
    h_v: float,
    r_B: Sequence[float],
    params: LocalizeParams = LocalizeParams(),
    tx_power_dbm: float = 45.0,
    prior_xy: Optional[Sequence[float]] = None,
) -> Selection:
    """
    Keep the paths usable for localization.

    A path is dropped when its received power P_t + 20·log10|α| is at or
    below the threshold. A line of sight path (ϑ ≈ -φ) gets the midpoint
    distance c·(t + t_off0)/2. Otherwise, when the height constraint is
    informative, d = (φ_z·c·(t + t_off0) + z_B - h_v)/(φ_z + ϑ_z) and the
    path is dropped if d ≤ z_B. With a position prior and the detour check
    on, the base station and vehicle rays must meet ahead of both arrays at
    a total length within the tolerance of c·(t + t_off0), and a line of
    sight path must end within the tolerance of the prior. Bounces between
    two parallel facets arrive antiparallel to their departure and only
    the latter test rejects them.

    Args:
        est: compensated estimate
        h_v: vehicle array height (m)
        r_B: base station position (m)
        params: selection parameters
        tx_power_dbm: transmit power (dBm)
        prior_xy: planar position prior for the detour check

    Raises:
        CompensationError: estimate not compensated
        InsufficientPaths: fewer than two paths retained
    """
    directions = direction_vectors(est)
    r_B = numpy.asarray(r_B, dtype=float)
    ranges = SPEED_OF_LIGHT * (numpy.asarray(est.t) + est.t_off0)
    power = received_dbm(est, tx_power_dbm)
    r_v = None if prior_xy is None else numpy.array([prior_xy[0], prior_xy[1], h_v], dtype=float)
    selected, distances = [], []
    for index, (dod, doa, length, dbm) in enumerate(zip(directions.dod, directions.doa, ranges, power)):
        if dbm <= params.alpha_th_dbm:
            log.debug("path %d dropped: %.1f dBm below threshold", index, dbm)
            continue
        if numpy.linalg.norm(dod + doa) <= params.los_tol:
            if params.detour_check and r_v is not None:
                gap = float(numpy.linalg.norm(r_B + length * dod - r_v))
                if gap > params.detour_tol:
                    log.debug("path %d dropped: line of sight ends %.2f m from the prior", index, gap)
                    continue
            selected.append(index)
            distances.append(length / 2)
            continue
        d = math.nan
        z = dod[2] + doa[2]
        if abs(z) > params.z_tol:
            d = (dod[2] * length + r_B[2] - h_v) / z
            if d <= r_B[2]:
                log.debug("path %d dropped: height distance %.2f m <= %.2f m", index, d, r_B[2])
                continue
        if params.detour_check and r_v is not None:
            approach = closest_approach(r_B, dod, r_v, doa)
            if approach is None:
                log.debug("path %d dropped: parallel rays", index)
                continue
            s, u, gap = approach
            if s <= 0 or u <= 0 or gap > params.detour_tol or abs(s + u - length) > params.detour_tol:
                log.debug("path %d dropped: inconsistent detour (gap %.2f m, length %.2f m)", index, gap, s + u)
                continue
            if math.isnan(d):
                d = u
        selected.append(index)
        distances.append(d)
    if len(selected) < 2:
        raise InsufficientPaths(f"{len(selected)} path(s) retained, at least 2 needed")
    return Selection(numpy.array(selected, dtype=int), numpy.array(distances, dtype=float))


def weights(gains_db: Sequence[float], eps: float = 2.0) -> Array:
    """w = g - min(g) + ε, gains in dB"""
    gains_db = numpy.asarray(gains_db, dtype=float)
    if gains_db.size == 0:
        raise ValueError("weights need at least one gain")
    return gains_db - gains_db.min() + eps


def wls_localize(
    est: ChannelEstimate,
    selected: Sequence[int],
    w: Sequence[float],
    r_B: Sequence[float],
    h_v: float,
    los_tol: float = 0.02,
) -> LocalizationResult:
    """
    Weighted least squares solve of the planar position, the clock offset
    and the per path distances. Line of sight paths carry no distance
    unknown; their distance is reported as c·(t + t_off)/2.

    Raises:
        InsufficientPaths: fewer than two paths
        GeometryDegenerate: the stacked system is rank deficient
    """
    selected = numpy.asarray(selected, dtype=int)
    w = numpy.asarray(w, dtype=float)
    if len(selected) < 2:
        raise InsufficientPaths(f"{len(selected)} path(s) given, at least 2 needed")
    if len(w) != len(selected):
        raise ValueError(f"got {len(w)} weights for {len(selected)} paths")
    directions = direction_vectors(est.subset(selected))
    t = numpy.asarray(est.t)[selected]
    r_B = numpy.asarray(r_B, dtype=float)
    los = numpy.linalg.norm(directions.dod + directions.doa, axis=1) <= los_tol
    columns = numpy.flatnonzero(~los)
    n = len(selected)
    A = numpy.zeros((3 * n, 3 + len(columns)))
    b = numpy.zeros(3 * n)
    for i, (dod, doa) in enumerate(zip(directions.dod, directions.doa)):
        rows = slice(3 * i, 3 * i + 3)
        A[rows, :2] = numpy.eye(3)[:, :2]
        A[rows, 2] = -dod
        if not los[i]:
            A[rows, 3 + int(numpy.flatnonzero(columns == i)[0])] = dod + doa
        b[rows] = r_B - (0, 0, h_v) + SPEED_OF_LIGHT * t[i] * dod
    scale = numpy.repeat(numpy.sqrt(w), 3)
    solution, _, rank, _ = scipy.linalg.lstsq(A * scale[:, None], b * scale)
    if rank < A.shape[1]:
        raise GeometryDegenerate(f"localization system has rank {rank} < {A.shape[1]}")
    t_off = solution[2] / SPEED_OF_LIGHT
    d_theta = SPEED_OF_LIGHT * (t + t_off) / 2
    d_theta[columns] = solution[3:]
    residual = float(numpy.linalg.norm((A @ solution - b) * scale))
    return LocalizationResult(solution[:2].copy(), float(t_off), d_theta, selected, residual)


def localize(
    est: ChannelEstimate,
    r_B: Sequence[float],
    h_v: float,
    params: LocalizeParams = LocalizeParams(),
    tx_power_dbm: float = 45.0,
    prior_xy: Optional[Sequence[float]] = None,
) -> LocalizationResult:
    """Select, weight and solve"""
    selection = select_paths(est, h_v, r_B, params, tx_power_dbm, prior_xy)
    w = weights(to_db(est.alpha[selection.selected]), params.weight_eps)
    result = wls_localize(est, selection.selected, w, r_B, h_v, params.los_tol)
    log.debug("localized at %s with %d paths", result.r_xy, len(selection.selected))
    return result
