#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

import numpy
import scipy.linalg

from mmtrack.constants import HADAMARD_ORDER
from mmtrack.types import Array, NamedTuple

from . import PhyError


class UnsupportedSize(PhyError, ValueError):
    """Pilot length or stream count exceeds the Hadamard order"""


class Pilots(NamedTuple):
    """
    Training sequences

    Attributes:
        s: (N_s, Q) per-instant pilot vectors s[q] as columns
        stacked: (N_d·N_s, Q) stacked delayed pilots, block d holding s[q-d]
            (zero for q < d)
    """

    s: Array
    stacked: Array

    @property
    def n_streams(self) -> int:
        return self.s.shape[0]

    @property
    def length(self) -> int:
        return self.s.shape[1]

    @property
    def n_taps(self) -> int:
        return self.stacked.shape[0] // self.s.shape[0]

    def delayed(self) -> Array:
        """(N_d, N_s, Q) view of the stacked pilots"""
        return self.stacked.reshape(self.n_taps, self.n_streams, self.length)


def delay_stack(s: Array, n_taps: int) -> Array:
    n_streams, length = s.shape
    stacked = numpy.zeros((n_taps, n_streams, length), dtype=s.dtype)
    for d in range(min(n_taps, length)):
        stacked[d, :, d:] = s[:, : length - d]
    return stacked.reshape(n_taps * n_streams, length)


def pilot_matrix(Q: int, N_s: int, N_d: int = 1) -> Pilots:
    """
    N_s rows of the order 64 Hadamard matrix truncated to length Q and scaled
    so that E[s s*] = I/N_s.

    Raises:
        UnsupportedSize: Q or N_s exceed 64
    """
    if not 1 <= Q <= HADAMARD_ORDER or not 1 <= N_s <= HADAMARD_ORDER:
        raise UnsupportedSize(f"pilots support 1 <= Q, N_s <= {HADAMARD_ORDER} (got Q={Q}, N_s={N_s})")
    if N_d < 1:
        raise ValueError(f"N_d must be >= 1 (got {N_d})")
    s = scipy.linalg.hadamard(HADAMARD_ORDER).astype(float)[:N_s, :Q] / numpy.sqrt(N_s)
    return Pilots(s, delay_stack(s, N_d))
