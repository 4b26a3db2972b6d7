#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Snapshot records.

One JSON object per snapshot, trajectory-major. Every stage copies the
record it reads and adds its own keys:

```
dataset:    schema, trajectory, snapshot, lane, pose {x, y, varpi, v}, r_v,
            clock_offset, window, paths [...], seeds {codebook, noise}
tracked:    raw {alpha, t, theta_az, ...}, support [[j1..j5], ...], track_failed, timing
oriented:   varpi_hat, varpi_source
localized:  compensated {...}, single_shot [x, y], t_off_hat, ekf [x, y], fallback, selected, timing
corrected:  corrected [x, y]
```

Complex gains are `[re, im]` pairs.
"""

import numpy

from mmtrack.fmomp.tracker import ChannelEstimate, SupportSet
from mmtrack.io import FormatError
from mmtrack.types import Array, Iterable, Mapping, Sequence
from mmtrack.world.driver import VehicleState
from mmtrack.world.tracer import Path

SCHEMA = 1

_ESTIMATE_FIELDS = ("t", "theta_az", "theta_el", "phi_az", "phi_el")


def check_record(record: Mapping) -> Mapping:
    if record.get("schema") != SCHEMA:
        raise FormatError(f"unsupported record schema {record.get('schema')!r} (expected {SCHEMA})")
    return record


def complex_array(pairs: Sequence) -> Array:
    values = numpy.asarray(pairs, dtype=float).reshape(-1, 2)
    return values[:, 0] + 1j * values[:, 1]


def path_to_record(path: Path) -> dict:
    return {
        "alpha": complex(path.alpha),
        "t": float(path.t),
        "theta_az": float(path.theta_az),
        "theta_el": float(path.theta_el),
        "phi_az": float(path.phi_az),
        "phi_el": float(path.phi_el),
        "order": int(path.order),
    }


def path_from_record(record: Mapping) -> Path:
    re, im = record["alpha"]
    return Path(
        complex(re, im),
        record["t"],
        record["theta_az"],
        record["theta_el"],
        record["phi_az"],
        record["phi_el"],
        record["order"],
    )


def paths_from_record(record: Mapping) -> list[Path]:
    return [path_from_record(path) for path in record["paths"]]


def pose_to_record(state: VehicleState) -> dict:
    return {"x": float(state.x), "y": float(state.y), "varpi": float(state.varpi), "v": float(state.v)}


def true_xy(record: Mapping) -> Array:
    pose = record["pose"]
    return numpy.array([pose["x"], pose["y"]])


def estimate_to_record(est: ChannelEstimate) -> dict:
    result = {name: numpy.asarray(getattr(est, name), dtype=float) for name in _ESTIMATE_FIELDS}
    result["alpha"] = numpy.asarray(est.alpha, dtype=complex)
    result["compensated"] = bool(est.compensated)
    result["bs_yaw"] = float(est.bs_yaw)
    result["t_off0"] = float(est.t_off0)
    return result


def estimate_from_record(record: Mapping) -> ChannelEstimate:
    fields = {name: numpy.asarray(record[name], dtype=float) for name in _ESTIMATE_FIELDS}
    return ChannelEstimate(
        alpha=complex_array(record["alpha"]),
        compensated=record["compensated"],
        bs_yaw=record["bs_yaw"],
        t_off0=record["t_off0"],
        **fields,
    )


def support_to_record(support: SupportSet) -> dict:
    return {
        "indices": [list(index) for index in support.indices],
        "gains": numpy.asarray(support.gains, dtype=complex),
        "window": float(support.window),
    }


def support_from_record(record: Mapping) -> SupportSet:
    indices = tuple(tuple(int(i) for i in index) for index in record["indices"])
    return SupportSet(indices, complex_array(record["gains"]), record["window"])


def group_trajectories(records: Iterable[Mapping]) -> list[list[Mapping]]:
    """Records split per trajectory, each in snapshot order"""
    groups = {}
    for record in records:
        groups.setdefault(check_record(record)["trajectory"], []).append(record)
    return [sorted(groups[key], key=lambda r: r["snapshot"]) for key in sorted(groups)]
