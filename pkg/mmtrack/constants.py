#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

#: speed of light in vacuum (m/s)
SPEED_OF_LIGHT = 299_792_458.0

#: Boltzmann constant (J/K)
BOLTZMANN = 1.380649e-23

NANOSEC_PER_SEC = 1_000_000_000

KMH_PER_MS = 3.6

#: order of the Hadamard matrix the pilot sequences are drawn from
HADAMARD_ORDER = 64

#: default carrier frequency (Hz)
DEFAULT_CARRIER = 73e9
