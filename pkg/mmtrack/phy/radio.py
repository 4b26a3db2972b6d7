#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Radio front-end parameters, pulse shaping and the receiver clock."""

import math

import numpy

from mmtrack.constants import BOLTZMANN, DEFAULT_CARRIER, SPEED_OF_LIGHT
from mmtrack.types import Array, NamedTuple, Sequence
from mmtrack.util import dbm_to_watt, watt_to_dbm


class RadioConfig(NamedTuple):
    """
    Radio link parameters

    Attributes:
        carrier: carrier frequency f_c (Hz)
        bandwidth: bandwidth B_c (Hz)
        n_taps: number of channel taps N_d
        tx_power_dbm: transmit power P_t (dBm)
        rolloff: raised-cosine roll-off factor
        temperature: noise temperature (K)
    """

    carrier: float = DEFAULT_CARRIER
    bandwidth: float = 1e9
    n_taps: int = 32
    tx_power_dbm: float = 45.0
    rolloff: float = 0.4
    temperature: float = 290.0

    def check(self) -> "RadioConfig":
        if self.n_taps < 1:
            raise ValueError(f"n_taps must be >= 1 (got {self.n_taps})")
        if not 0 <= self.rolloff <= 1:
            raise ValueError(f"rolloff must be in [0, 1] (got {self.rolloff})")
        if self.bandwidth <= 0 or self.carrier <= 0:
            raise ValueError("carrier and bandwidth must be > 0")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0 (got {self.temperature})")
        return self

    @property
    def T_s(self) -> float:
        """Sampling period (s)"""
        return 1 / self.bandwidth

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier

    @property
    def tx_power(self) -> float:
        """Transmit power (W)"""
        return dbm_to_watt(self.tx_power_dbm)

    @property
    def noise_power(self) -> float:
        """Thermal noise power k_B·T·B_c (W)"""
        return BOLTZMANN * self.temperature * self.bandwidth

    @property
    def noise_dbm(self) -> float:
        return watt_to_dbm(self.noise_power) if self.noise_power > 0 else -math.inf


def raised_cosine(t, T_s: float, rolloff: float):
    """
    Peak-normalized raised-cosine impulse response. The singular points
    t = ±T_s/(2·rolloff) take their analytic limit π/4·sinc(1/(2·rolloff)).
    """
    x = numpy.asarray(t, dtype=float) / T_s
    sinc = numpy.sinc(x)
    if rolloff == 0:
        result = sinc
    else:
        denominator = 1 - (2 * rolloff * x) ** 2
        singular = numpy.isclose(numpy.abs(denominator), 0, atol=1e-12)
        safe = numpy.where(singular, 1.0, denominator)
        result = numpy.where(
            singular,
            numpy.pi / 4 * numpy.sinc(1 / (2 * rolloff)),
            sinc * numpy.cos(numpy.pi * rolloff * x) / safe,
        )
    if numpy.ndim(result) == 0:
        return float(result)
    return result


def pulse_samples(delays, cfg: RadioConfig) -> Array:
    """
    Pulse samples at the tap instants for each delay.

    Returns:
        (len(delays), N_d) array with [i, d] = f_p(d·T_s - delays[i])
    """
    delays = numpy.atleast_1d(numpy.asarray(delays, dtype=float))
    taps = numpy.arange(cfg.n_taps) * cfg.T_s
    return raised_cosine(taps[None, :] - delays[:, None], cfg.T_s, cfg.rolloff)


def clock_offsets(n: int, initial: float, sigma_drift: float, rng) -> Array:
    """Clock offset random walk starting at `initial` (s)"""
    steps = rng.normal(0.0, sigma_drift, size=n)
    steps[0] = 0.0
    return initial + numpy.cumsum(steps)


def window_start(delays: Sequence[float], clock_offset: float, resolution: float, guard: float) -> float:
    """
    Receiver capture window start: the earliest arrival as seen by the
    receiver clock, minus a guard, quantized down to the delay resolution.
    """
    earliest = min(delays) - clock_offset - guard
    return resolution * math.floor(earliest / resolution)
