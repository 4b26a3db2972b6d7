#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

import collections.abc
import os
import pathlib
import typing

import numpy

Union = typing.Union
Optional = typing.Optional
PathLike = Union[str, pathlib.Path, os.PathLike]

Iterable = collections.abc.Iterable
Iterator = collections.abc.Iterator
Callable = collections.abc.Callable
Sequence = collections.abc.Sequence
Mapping = collections.abc.Mapping
NamedTuple = typing.NamedTuple

Array = numpy.ndarray
#: anything `numpy.random.default_rng` accepts
Seed = Union[None, int, Sequence[int], numpy.random.SeedSequence, numpy.random.Generator]
#: a 5-tuple of dictionary grid indices (delay, AoD par, AoD perp, AoA par, AoA perp)
GridIndex = tuple[int, int, int, int, int]
