#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Closed-form operation counts of the sparse recovery variants."""

import enum
import math

from mmtrack.types import NamedTuple


class Method(enum.Enum):
    OMP = "omp"
    MOMP = "momp"
    FMOMP = "fmomp"


class Dims(NamedTuple):
    """
    Problem dimensions

    Attributes:
        N_est: number of estimated paths
        N_s: number of streams
        Q: pilot length
        N_iter: alternating maximization sweeps
        signal: N_k^s per dimension (N_d, N_t^x, N_t^y, N_r^x, N_r^y)
        atoms: N_k^a per dimension (searched grid points)
    """

    N_est: int
    N_s: int
    Q: int
    N_iter: int
    signal: tuple[int, int, int, int, int]
    atoms: tuple[int, int, int, int, int]

    def check(self) -> "Dims":
        values = (self.N_est, self.N_s, self.Q, self.N_iter, *self.signal, *self.atoms)
        if len(self.signal) != 5 or len(self.atoms) != 5:
            raise ValueError("signal and atoms need one size per dimension")
        if any(int(value) < 1 for value in values):
            raise ValueError(f"dimensions must be positive (got {self})")
        return self

    @property
    def N_d(self) -> int:
        return self.signal[0]


#: 16x16 BS array, 12x12 vehicle array, 32 taps, windows of 17 grid points
DEFAULT_DIMS = Dims(N_est=5, N_s=4, Q=36, N_iter=4, signal=(32, 16, 16, 12, 12), atoms=(17, 17, 17, 17, 17))


def op_count(method, dims: Dims) -> int:
    """Complex multiplications of one support search (exact integers)"""
    method = Method(method)
    dims.check()
    base = dims.N_est * dims.N_s * dims.Q
    if method == Method.OMP:
        return base * math.prod(s * a for s, a in zip(dims.signal, dims.atoms))
    sweeps = dims.N_iter * sum(dims.atoms)
    if method == Method.MOMP:
        return base * sweeps * math.prod(dims.signal)
    _, N2, N3, N4, N5 = dims.signal
    return base * sweeps * (dims.N_d + N2 * N3 + N4 * N5)
