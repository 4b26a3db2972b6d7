#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Extended Kalman filter over [x, y, v, ϖ] (constant speed and heading) fed
with single-shot planar positions. Baseline for the learned position
correction.
"""

import logging

import numpy
import scipy.linalg

from mmtrack.types import Array, Iterable, NamedTuple, Optional, Sequence
from mmtrack.util import wrap_angle

log = logging.getLogger(__name__)

#: measured coordinates (x, y)
H = numpy.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])

#: smallest eigenvalue accepted for a covariance
EIGEN_FLOOR = -1e-9


class EkfError(Exception):
    """Filter error"""


class EkfState(NamedTuple):
    """Mean [x, y, v, ϖ] (m, m, m/s, rad) and its 4x4 covariance"""

    mean: Array
    covariance: Array

    def check(self) -> "EkfState":
        P = self.covariance
        if P.shape != (4, 4) or self.mean.shape != (4,):
            raise ValueError(f"state needs a 4-vector and a 4x4 covariance (got {self.mean.shape}, {P.shape})")
        if not numpy.allclose(P, P.T, atol=1e-12, rtol=0):
            raise EkfError("covariance is not symmetric")
        if numpy.linalg.eigvalsh(P).min() < EIGEN_FLOOR:
            raise EkfError("covariance is not positive semidefinite")
        return self

    @property
    def position(self) -> Array:
        return self.mean[:2]


def initial_state(xy: Sequence[float], v: float, varpi: float, covariance=None) -> EkfState:
    P = numpy.eye(4) if covariance is None else numpy.asarray(covariance, dtype=float)
    return EkfState(numpy.array([xy[0], xy[1], v, varpi], dtype=float), P.copy())


def default_process_noise(dt: float) -> Array:
    return numpy.diag([0.01, 0.01, 0.1, 1e-3]) * dt


def _symmetric(P: Array) -> Array:
    return (P + P.T) / 2


def predict(state: EkfState, dt: float, process_noise: Array) -> EkfState:
    """
    x += v·cos ϖ·dt, y += v·sin ϖ·dt; P = F P F^T + Q with F the Jacobian
    of the motion.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    x, y, v, varpi = state.mean
    cos, sin = numpy.cos(varpi), numpy.sin(varpi)
    mean = numpy.array([x + v * cos * dt, y + v * sin * dt, v, varpi])
    F = numpy.array(
        [
            [1.0, 0.0, cos * dt, -v * sin * dt],
            [0.0, 1.0, sin * dt, v * cos * dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    P = F @ state.covariance @ F.T + process_noise
    return EkfState(mean, _symmetric(P))


def update(state: EkfState, z: Sequence[float], R: Array) -> EkfState:
    """
    Position update with the Joseph form covariance
    P = (I - K H) P (I - K H)^T + K R K^T.
    """
    R = numpy.asarray(R, dtype=float)
    innovation = numpy.asarray(z, dtype=float) - H @ state.mean
    P = state.covariance
    S = H @ P @ H.T + R
    try:
        factor = scipy.linalg.cho_factor(S)
    except numpy.linalg.LinAlgError:
        raise EkfError("innovation covariance is not positive definite") from None
    K = scipy.linalg.cho_solve(factor, H @ P).T
    mean = state.mean + K @ innovation
    mean[3] = wrap_angle(mean[3])
    A = numpy.eye(4) - K @ H
    P = A @ P @ A.T + K @ R @ K.T
    return EkfState(mean, _symmetric(P))


class Ekf:
    """
    Filter of one trajectory keeping its noise settings

    Args:
        dt: snapshot period (s)
        process_noise: Q, defaults to diag(0.01, 0.01, 0.1, 1e-3)·dt
        measurement_noise: R, defaults to σ²·I with σ = 1 m
    """

    def __init__(self, dt: float, process_noise: Optional[Array] = None, measurement_noise: Optional[Array] = None):
        if dt <= 0:
            raise ValueError(f"dt must be > 0 (got {dt})")
        self.dt = dt
        self.Q = default_process_noise(dt) if process_noise is None else numpy.asarray(process_noise, dtype=float)
        self.R = numpy.eye(2) if measurement_noise is None else numpy.asarray(measurement_noise, dtype=float)
        self.log = log.getChild(type(self).__name__)

    def __repr__(self):
        return f"{type(self).__name__}(dt={self.dt})"

    def step(self, state: EkfState, z: Optional[Sequence[float]]) -> EkfState:
        """Predict then update (prediction only when there is no measurement)"""
        state = predict(state, self.dt, self.Q)
        if z is None:
            self.log.debug("no measurement, keeping the prediction")
            return state
        return update(state, z, self.R)

    def run(self, initial: EkfState, measurements: Iterable[Optional[Sequence[float]]]) -> list[EkfState]:
        """Filtered states, one per measurement (the initial state is not included)"""
        states, state = [], initial
        for z in measurements:
            state = self.step(state, z)
            states.append(state)
        return states
