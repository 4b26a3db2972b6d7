#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Driver behavior model.

The driver looks at an aim point `look_ahead` seconds ahead on the lane
centerline and steers to cancel the bearing error η between the lane
tangent there and the vehicle heading. The steering control δ follows a
lead compensator with additive Gaussian noise and the heading integrates
the control through a random wheel steering rate.
"""

import logging
import math

from mmtrack.types import NamedTuple, Optional, Seed
from mmtrack.util import make_rng, wrap_angle

from . import WorldError
from .scene import Lane, Scene

log = logging.getLogger(__name__)

CONTROL_LAWS = ("bearing", "printed")


class TrajectoryTerminated(WorldError):
    """The aim point fell past the lane end"""


class InvalidStart(WorldError, ValueError):
    """Start state is not on any lane"""


class DriverParams(NamedTuple):
    """
    Driver behavior parameters

    Attributes:
        look_ahead: look-ahead time (s)
        gain: driver gain
        lead_time: leading time constant (s)
        omega_mean: mean wheel steering rate (rad/s)
        omega_var: wheel steering rate variance ((rad/s)²)
        sigma_delta_sq: control noise variance
        delta_max: control saturation
        control: "bearing" (lead compensator on the bearing error) or
            "printed" (lead term added to the previous control)
    """

    look_ahead: float = 0.5
    gain: float = 2.0
    lead_time: float = 0.2
    omega_mean: float = 1.3
    omega_var: float = 0.17**2
    sigma_delta_sq: float = 1e-4
    delta_max: float = 0.5
    control: str = "bearing"

    def check(self) -> "DriverParams":
        if self.look_ahead <= 0:
            raise ValueError(f"look_ahead must be > 0 (got {self.look_ahead})")
        if self.lead_time < 0:
            raise ValueError(f"lead_time must be >= 0 (got {self.lead_time})")
        if self.omega_var < 0:
            raise ValueError(f"omega_var must be >= 0 (got {self.omega_var})")
        if self.sigma_delta_sq < 0:
            raise ValueError(f"sigma_delta_sq must be >= 0 (got {self.sigma_delta_sq})")
        if self.delta_max <= 0:
            raise ValueError(f"delta_max must be > 0 (got {self.delta_max})")
        if self.control not in CONTROL_LAWS:
            raise ValueError(f"control must be one of {CONTROL_LAWS} (got {self.control!r})")
        return self


class VehicleState(NamedTuple):
    """
    Planar state of the tracked vehicle

    Attributes:
        x, y: position (m)
        varpi: heading (rad), wrapped to (-π, π]
        v: speed (m/s)
        delta: steering control
        eta: bearing error seen at this state (rad)
    """

    x: float
    y: float
    varpi: float
    v: float
    delta: float = 0.0
    eta: float = 0.0

    @property
    def r_v_xy(self) -> tuple[float, float]:
        return self.x, self.y


def bearing_error(lane: Lane, x: float, y: float, varpi: float, v: float, look_ahead: float) -> float:
    """Bearing error towards the aim point `v·look_ahead` meters ahead on the lane"""
    s, _ = lane.project((x, y))
    s_aim = s + v * look_ahead
    if s_aim > lane.length:
        raise TrajectoryTerminated(f"aim point at {s_aim:.2f}m is past the end of {lane.name} ({lane.length:.2f}m)")
    return wrap_angle(lane.tangent(s_aim) - varpi)


def initial_state(
    lane: Lane, s: float, v: Optional[float] = None, look_ahead: float = DriverParams().look_ahead
) -> VehicleState:
    """State on the lane centerline at arc length s, aligned with the lane"""
    v = lane.speed if v is None else v
    x, y = lane.point(s)
    varpi = lane.tangent(s)
    eta = bearing_error(lane, x, y, varpi, v, look_ahead)
    return VehicleState(float(x), float(y), varpi, float(v), 0.0, eta)


def step_driver(state: VehicleState, params: DriverParams, lane: Lane, dt: float, rng) -> VehicleState:
    """
    Advance the vehicle by dt.

    Raises:
        TrajectoryTerminated: the aim point is past the lane end
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    omega = rng.normal(params.omega_mean, math.sqrt(params.omega_var))
    noise = rng.normal(0.0, math.sqrt(params.sigma_delta_sq))
    varpi = wrap_angle(state.varpi + omega * state.delta * dt)
    x = state.x + dt * state.v * math.cos(state.varpi)
    y = state.y + dt * state.v * math.sin(state.varpi)
    eta = bearing_error(lane, x, y, varpi, state.v, params.look_ahead)
    lead = params.lead_time * wrap_angle(eta - state.eta) / dt
    if params.control == "bearing":
        delta = params.gain * (eta + lead)
    else:
        delta = params.gain * (state.delta + lead)
    delta = min(max(delta + noise, -params.delta_max), params.delta_max)
    return VehicleState(x, y, varpi, state.v, delta, eta)


def find_lane(scene: Scene, xy, tolerance: float = 2.0) -> Lane:
    """Lane whose centerline is nearest to xy (within tolerance)"""
    best, best_dist = None, math.inf
    for lane in scene.lanes:
        _, dist = lane.project(xy)
        if dist < best_dist:
            best, best_dist = lane, dist
    if best is None or best_dist > tolerance:
        raise InvalidStart(f"start {tuple(xy)} is not on any lane")
    return best


def generate_trajectory(
    start: VehicleState,
    params: DriverParams,
    scene: Scene,
    n_steps: int,
    dt: float,
    seed: Seed,
    lane_tolerance: float = 2.0,
) -> list[VehicleState]:
    """
    Trajectory of at most n_steps states (start included). Stops early when
    the lane end is reached.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1 (got {n_steps})")
    params.check()
    lane = find_lane(scene, start.r_v_xy, lane_tolerance)
    rng = make_rng(seed)
    states = [start]
    for _ in range(n_steps - 1):
        try:
            states.append(step_driver(states[-1], params, lane, dt, rng))
        except TrajectoryTerminated as error:
            log.info("trajectory stops after %d steps: %s", len(states), error)
            break
    return states
