#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Error summaries: percentiles, empirical CDFs and path matching."""

import math

import numpy
import scipy.optimize

from mmtrack.constants import NANOSEC_PER_SEC
from mmtrack.fmomp.tracker import ChannelEstimate
from mmtrack.types import Array, NamedTuple, Sequence
from mmtrack.util import wrap_angle

PERCENTILES = (50, 80, 95)

#: delay error (s) weighing as much as one radian in the path matching cost
MATCH_DELAY_SCALE = 1e-9


class Summary(NamedTuple):
    n: int
    p50: float
    p80: float
    p95: float
    mean: float


def summarize(errors: Sequence[float]) -> Summary:
    """Linear interpolation percentiles (50/80/95) and the mean"""
    errors = numpy.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("cannot summarize an empty error list")
    p50, p80, p95 = numpy.percentile(errors, PERCENTILES)
    return Summary(int(errors.size), float(p50), float(p80), float(p95), float(errors.mean()))


def cdf(errors: Sequence[float]) -> tuple[Array, Array]:
    """Empirical CDF sampled at every sorted error: F(e_i) = (i + 1)/n"""
    errors = numpy.sort(numpy.asarray(errors, dtype=float))
    if errors.size == 0:
        raise ValueError("cannot build the CDF of an empty error list")
    return errors, numpy.arange(1, errors.size + 1) / errors.size


def angle_error_deg(estimate, truth) -> Array:
    return numpy.degrees(numpy.abs(wrap_angle(numpy.asarray(estimate) - numpy.asarray(truth))))


class PathErrors(NamedTuple):
    """Per matched path errors: delay (ns) and angles (deg)"""

    delay_ns: Array
    aoa_az_deg: Array
    aoa_el_deg: Array
    aod_az_deg: Array
    aod_el_deg: Array


def match_paths(raw: ChannelEstimate, truth: ChannelEstimate) -> PathErrors:
    """
    Pair estimated paths with the strongest true paths (minimum cost
    assignment on delay and angle differences) and return their errors.
    Both estimates must be expressed the same way (raw delays and relative
    arrival azimuths for a raw estimate).
    """
    n = min(raw.n_paths, truth.n_paths)
    if n == 0:
        empty = numpy.zeros(0)
        return PathErrors(empty, empty, empty, empty, empty)
    strongest = numpy.argsort(-numpy.abs(truth.alpha), kind="stable")[:n]
    truth = truth.subset(strongest)
    cost = numpy.abs(raw.t[:, None] - truth.t[None, :]) / MATCH_DELAY_SCALE
    for name in ("theta_az", "theta_el", "phi_az", "phi_el"):
        est, true = getattr(raw, name), getattr(truth, name)
        cost = cost + numpy.abs(wrap_angle(est[:, None] - true[None, :]))
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    return PathErrors(
        numpy.abs(raw.t[rows] - truth.t[cols]) * NANOSEC_PER_SEC,
        angle_error_deg(raw.theta_az[rows], truth.theta_az[cols]),
        angle_error_deg(raw.theta_el[rows], truth.theta_el[cols]),
        angle_error_deg(raw.phi_az[rows], truth.phi_az[cols]),
        angle_error_deg(raw.phi_el[rows], truth.phi_el[cols]),
    )


def position_error(estimate: Sequence[float], truth: Sequence[float]) -> float:
    return math.dist(estimate, truth)
