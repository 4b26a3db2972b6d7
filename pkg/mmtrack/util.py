#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""Utility functions used by the library. Mostly for internal usage"""

import functools
import math

import numpy

from .types import Array, Seed

int16 = functools.partial(int, base=16)


def try_numeric(text: str):
    """
    Try to translate given text into bool, int, int base 16 or float.
    Returns the original text if it fails.

    Args:
        text (str): text to be translated

    Returns:
        bool, int, float or str: The converted text
    """
    lowered = text.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for func in (int, int16, float):
        try:
            return func(text)
        except ValueError:
            pass
    return text


def wrap_angle(angle):
    """Wrap angle(s) in radians to (-pi, pi]"""
    wrapped = numpy.pi - numpy.mod(numpy.pi - numpy.asarray(angle, dtype=float), 2 * numpy.pi)
    if numpy.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def to_db(value) -> Array:
    """Amplitude to decibel (20·log10)"""
    return 20 * numpy.log10(numpy.abs(value))


def dbm_to_watt(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


def watt_to_dbm(watt: float) -> float:
    return 10 * math.log10(watt) + 30


def make_rng(seed: Seed = None) -> numpy.random.Generator:
    """A numpy generator from anything that can seed one (a generator is returned as is)"""
    if isinstance(seed, numpy.random.Generator):
        return seed
    return numpy.random.default_rng(seed)


def seed_sequence(seed: int, *key: int) -> numpy.random.SeedSequence:
    """
    Deterministic seed sequence for a position in the experiment (ex: trajectory,
    snapshot). The same (seed, key) always gives the same stream.
    """
    return numpy.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))


def spawn_rngs(seed: Seed, n: int) -> list[numpy.random.Generator]:
    """n independent generators split deterministically from seed"""
    if isinstance(seed, numpy.random.Generator):
        return [numpy.random.default_rng(int(s)) for s in seed.integers(0, 2**63 - 1, size=n)]
    if isinstance(seed, numpy.random.SeedSequence):
        seq = seed
    else:
        seq = numpy.random.SeedSequence(seed)
    return [numpy.random.default_rng(child) for child in seq.spawn(n)]
