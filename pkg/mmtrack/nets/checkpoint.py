#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Network checkpoints in the mmtrack tensor file layout.

Entries are named `param/<parameter name>` and
`norm/<key>/mean`, `norm/<key>/std` for the input and target
standardizers.
"""

import logging

from mmtrack.io import read_tensors, write_tensors
from mmtrack.types import Mapping, Optional, PathLike

from .layers import Module
from .train import Standardizer

log = logging.getLogger(__name__)

PARAM_PREFIX = "param/"
NORM_PREFIX = "norm/"


def save_checkpoint(path: PathLike, model: Module, normalizers: Optional[Mapping[str, Standardizer]] = None):
    tensors = {f"{PARAM_PREFIX}{name}": value for name, value in model.state_dict().items()}
    for key, normalizer in (normalizers or {}).items():
        for field, value in normalizer.to_dict().items():
            tensors[f"{NORM_PREFIX}{key}/{field}"] = value
    write_tensors(path, tensors)


def load_checkpoint(path: PathLike, model: Module) -> dict[str, Standardizer]:
    """Load parameters into model; returns the stored standardizers"""
    tensors = read_tensors(path)
    state = {name[len(PARAM_PREFIX) :]: value for name, value in tensors.items() if name.startswith(PARAM_PREFIX)}
    model.load_state_dict(state)
    fields = {}
    for name, value in tensors.items():
        if name.startswith(NORM_PREFIX):
            key, field = name[len(NORM_PREFIX) :].rsplit("/", 1)
            fields.setdefault(key, {})[field] = value
    log.info("loaded %d parameters and %d standardizers from %s", len(state), len(fields), path)
    return {key: Standardizer.from_dict(value) for key, value in fields.items()}
