#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.


"""
config = {
    "seed": 7,
    "scene": {"path": ""},                  # "" means the default urban canyon
    "dataset": {
        "n_trajectories": 32,
        "n_test": 8,                        # last trajectories kept for testing
        "n_snapshots": 250,
        "dt": 0.1,                          # snapshot period (s)
        "max_order": 2,                     # reflections traced
    },
    "driver": {"look_ahead": 0.5, ..., "control": "bearing" | "printed"},
    "clock": {"initial": 20e-9, "sigma_drift": 0.05e-9, "guard": 2e-9},
    "radio": {"carrier": 73e9, "bandwidth": 1e9, "n_taps": 32, "tx_power_dbm": 45.0, ...},
    "arrays": {"tx": [16, 16], "rx": [12, 12]},
    "tracking": {
        "M": 40, "Q": 36, "N_s": 4, "N_est": 5,
        "window": 8 | [8, 8, 8, 8, 8],      # g_k
        "N_iter": 4,
        "delay_resolution": 0.25e-9,
        "angle_resolution_deg": 0.25,
        "init": "oracle" | "momp",
        "oracle_offset": [0, 0, 0, 0, 0],
        "init_oversample": 1, "init_budget": 10_000_000,
        "beams_per_path": 4,
        "noise": True,
        "jobs": 1,                          # trajectories tracked in parallel
    },
    "localize": {"alpha_th_dbm": -105.0, "weight_eps": 2.0, "detour_check": True, ...,
                 "orientation": "estimate" | "truth"},
    "ekf": {"sigma_r": 1.0, "process": [0.01, 0.01, 0.1, 0.001], "sigma_v": 1.0, "sigma_varpi": 0.05},
    "nets": {
        "length": 8,                        # Γ
        "reduced": False,                   # small layer sizes (tests, quick runs)
        "epochs_vo": 500, "epochs_vp": 1000,
        "lr": 0.001, "decay": 0.95, "decay_every": 80, "patience": 50,
        "batch_size": 32, "validation_fraction": 0.125,
    },
    "bench": {"tx": [16, 16], "rx": [12, 12], "n_taps": 32, "M": 4, "window": 8, "repeat": 3},
}
"""

import copy
import logging
import pathlib

import numpy

from mmtrack.fmomp.dictionary import Resolutions
from mmtrack.geoloc import LocalizeParams
from mmtrack.nets.chat import AttentionSpec, ChanStaDims, VoDims, VpDims
from mmtrack.nets.train import TrainParams
from mmtrack.phy.array import ArrayGeometry, ArrayPair
from mmtrack.phy.radio import RadioConfig
from mmtrack.types import Array, Mapping, NamedTuple, PathLike, Sequence, Union
from mmtrack.util import try_numeric
from mmtrack.world.driver import CONTROL_LAWS, DriverParams

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

import tomli_w

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration"""


DEFAULT_CONFIG = {
    "seed": 7,
    "scene": {"path": ""},
    "dataset": {"n_trajectories": 32, "n_test": 8, "n_snapshots": 250, "dt": 0.1, "max_order": 2},
    "driver": dict(DriverParams()._asdict()),
    "clock": {"initial": 20e-9, "sigma_drift": 0.05e-9, "guard": 2e-9},
    "radio": dict(RadioConfig()._asdict()),
    "arrays": {"tx": [16, 16], "rx": [12, 12]},
    "tracking": {
        "M": 40,
        "Q": 36,
        "N_s": 4,
        "N_est": 5,
        "window": 8,
        "N_iter": 4,
        "delay_resolution": 0.25e-9,
        "angle_resolution_deg": 0.25,
        "init": "oracle",
        "oracle_offset": [0, 0, 0, 0, 0],
        "init_oversample": 1,
        "init_budget": 10_000_000,
        "beams_per_path": 4,
        "noise": True,
        "jobs": 1,
    },
    "localize": {**LocalizeParams()._asdict(), "orientation": "estimate"},
    "ekf": {"sigma_r": 1.0, "process": [0.01, 0.01, 0.1, 0.001], "sigma_v": 1.0, "sigma_varpi": 0.05},
    "nets": {
        "length": 8,
        "reduced": False,
        "epochs_vo": 500,
        "epochs_vp": 1000,
        "lr": 0.001,
        "decay": 0.95,
        "decay_every": 80,
        "patience": 50,
        "batch_size": 32,
        "validation_fraction": 0.125,
    },
    "bench": {"tx": [16, 16], "rx": [12, 12], "n_taps": 32, "M": 4, "window": 8, "repeat": 3},
}


_CONFIG_INIT_MAP = {
    "oracle": "oracle",
    "momp": "momp",
    "": "oracle",
}


_CONFIG_ORIENTATION_MAP = {
    "estimate": "estimate",
    "vo": "estimate",
    "truth": "truth",
}


def _section(config: Mapping, name: str) -> Mapping:
    section = config.get(name)
    if not isinstance(section, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return section


def _positive(config: Mapping, section: str, *keys: str):
    values = _section(config, section)
    for key in keys:
        value = values.get(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f"{section}.{key} must be a positive number (got {value!r})")


def _array_size(config: Mapping, section: str, key: str):
    value = _section(config, section).get(key)
    if not isinstance(value, Sequence) or len(value) != 2 or any(not isinstance(v, int) or v < 1 for v in value):
        raise ConfigError(f"{section}.{key} must be two positive integers (got {value!r})")


def check_config(config: Mapping):
    """
    Raises:
        ConfigError: naming the first offending key
    """
    seed = config.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non negative integer (got {seed!r})")
    if not isinstance(_section(config, "scene").get("path", ""), str):
        raise ConfigError("scene.path must be a string")
    _positive(config, "dataset", "n_trajectories", "n_snapshots", "dt")
    dataset = config["dataset"]
    if not 0 <= dataset.get("n_test", 0) < dataset["n_trajectories"]:
        raise ConfigError(f"dataset.n_test must be in [0, n_trajectories) (got {dataset.get('n_test')!r})")
    if dataset.get("max_order", 2) not in (0, 1, 2):
        raise ConfigError(f"dataset.max_order must be 0, 1 or 2 (got {dataset.get('max_order')!r})")
    if _section(config, "driver").get("control", "bearing") not in CONTROL_LAWS:
        raise ConfigError(f"driver.control must be one of {CONTROL_LAWS}")
    clock = _section(config, "clock")
    if clock.get("sigma_drift", 0) < 0 or clock.get("guard", 0) < 0:
        raise ConfigError("clock.sigma_drift and clock.guard must be >= 0")
    _positive(config, "radio", "carrier", "bandwidth", "n_taps")
    _array_size(config, "arrays", "tx")
    _array_size(config, "arrays", "rx")
    _positive(config, "tracking", "M", "Q", "N_s", "N_est", "N_iter", "delay_resolution", "angle_resolution_deg")
    tracking = config["tracking"]
    if tracking.get("init", "oracle") not in _CONFIG_INIT_MAP:
        raise ConfigError(f"tracking.init must be one of {sorted(k for k in _CONFIG_INIT_MAP if k)}")
    window = tracking.get("window")
    radii = [window] * 5 if isinstance(window, int) else window
    if not isinstance(radii, Sequence) or len(radii) != 5 or any(not isinstance(r, int) or r < 0 for r in radii):
        raise ConfigError(f"tracking.window must be an integer or 5 integers >= 0 (got {window!r})")
    if len(tracking.get("oracle_offset", (0,) * 5)) != 5:
        raise ConfigError("tracking.oracle_offset must have 5 integers")
    if tracking.get("jobs", 1) < 1:
        raise ConfigError("tracking.jobs must be >= 1")
    if _section(config, "localize").get("orientation", "estimate") not in _CONFIG_ORIENTATION_MAP:
        raise ConfigError(f"localize.orientation must be one of {sorted(_CONFIG_ORIENTATION_MAP)}")
    if len(_section(config, "ekf").get("process", ())) != 4:
        raise ConfigError("ekf.process must have 4 values")
    _positive(config, "ekf", "sigma_r")
    _positive(
        config, "nets", "length", "epochs_vo", "epochs_vp", "lr", "decay", "decay_every", "patience", "batch_size"
    )
    if config["nets"]["length"] < 2:
        raise ConfigError("nets.length must be >= 2")
    if not 0 <= config["nets"].get("validation_fraction", 0) < 1:
        raise ConfigError("nets.validation_fraction must be in [0, 1)")
    _array_size(config, "bench", "tx")
    _array_size(config, "bench", "rx")
    _positive(config, "bench", "n_taps", "M", "repeat")


def merge(base: Mapping, override: Mapping) -> dict:
    """Deep merge: tables are merged key by key, other values replaced"""
    result = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(result.get(key), Mapping):
            result[key] = merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def parse_override(text: str) -> dict:
    """`section.key=value` to a nested dict; values go through try_numeric"""
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise ConfigError(f"override must look like section.key=value (got {text!r})")
    keys = name.strip().split(".")
    value = value.strip()
    if value.startswith("[") and value.endswith("]"):
        parsed = [try_numeric(item) for item in value[1:-1].split(",") if item.strip()]
    else:
        parsed = try_numeric(value)
    result = parsed
    for key in reversed(keys):
        result = {key: result}
    return result


def load_config(path: Union[PathLike, None] = None, overrides: Sequence[str] = (), seed=None) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        path = pathlib.Path(path)
        try:
            with path.open("rb") as fobj:
                data = tomllib.load(fobj)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as error:
            raise ConfigError(f"{path}: {error}") from None
        config = merge(config, data)
        log.info("loaded config %s", path)
    for text in overrides:
        config = merge(config, parse_override(text))
    if seed is not None:
        config = merge(config, {"seed": seed})
    check_config(config)
    return config


def dump_config(config: Mapping, path: PathLike):
    pathlib.Path(path).write_text(tomli_w.dumps(config), encoding="utf-8")
    log.info("wrote config %s", path)


# typed views


def _fields(cls, section: Mapping) -> dict:
    return {key: section[key] for key in cls._fields if key in section}


def driver_params(config: Mapping) -> DriverParams:
    return DriverParams(**_fields(DriverParams, config["driver"])).check()


def radio_config(config: Mapping) -> RadioConfig:
    return RadioConfig(**_fields(RadioConfig, config["radio"])).check()


def array_pair(config: Mapping, section: str = "arrays") -> ArrayPair:
    arrays = config[section]
    return ArrayPair(ArrayGeometry(*arrays["tx"]).check(), ArrayGeometry(*arrays["rx"]).check())


def localize_params(config: Mapping) -> LocalizeParams:
    return LocalizeParams(**_fields(LocalizeParams, config["localize"])).check()


def orientation_source(config: Mapping) -> str:
    return _CONFIG_ORIENTATION_MAP[config["localize"].get("orientation", "estimate")]


class TrackingParams(NamedTuple):
    """Channel tracking settings"""

    M: int
    Q: int
    N_s: int
    N_est: int
    window: tuple[int, ...]
    N_iter: int
    resolutions: Resolutions
    init: str
    oracle_offset: tuple[int, ...]
    init_oversample: int
    init_budget: int
    beams_per_path: int
    noise: bool
    jobs: int


def tracking_params(config: Mapping) -> TrackingParams:
    tracking = config["tracking"]
    window = tracking["window"]
    return TrackingParams(
        M=int(tracking["M"]),
        Q=int(tracking["Q"]),
        N_s=int(tracking["N_s"]),
        N_est=int(tracking["N_est"]),
        window=(window,) * 5 if isinstance(window, int) else tuple(window),
        N_iter=int(tracking["N_iter"]),
        resolutions=Resolutions(tracking["delay_resolution"], tracking["angle_resolution_deg"]).check(),
        init=_CONFIG_INIT_MAP[tracking.get("init", "oracle")],
        oracle_offset=tuple(int(i) for i in tracking.get("oracle_offset", (0,) * 5)),
        init_oversample=int(tracking.get("init_oversample", 1)),
        init_budget=int(tracking.get("init_budget", 10_000_000)),
        beams_per_path=int(tracking.get("beams_per_path", 4)),
        noise=bool(tracking.get("noise", True)),
        jobs=int(tracking.get("jobs", 1)),
    )


class EkfParams(NamedTuple):
    process_noise: Array
    measurement_noise: Array
    initial_covariance: Array


def ekf_params(config: Mapping) -> EkfParams:
    ekf = config["ekf"]
    dt = config["dataset"]["dt"]
    process = numpy.diag(numpy.asarray(ekf["process"], dtype=float)) * dt
    measurement = ekf["sigma_r"] ** 2 * numpy.eye(2)
    initial = numpy.diag([ekf["sigma_r"] ** 2] * 2 + [ekf["sigma_v"] ** 2, ekf["sigma_varpi"] ** 2])
    return EkfParams(process, measurement, initial)


def network_dims(config: Mapping, n_paths: int) -> tuple[ChanStaDims, VoDims, VpDims]:
    """Layer sizes; the reduced set keeps the structure with small widths"""
    nets = config["nets"]
    length = int(nets["length"])
    if not nets.get("reduced", False):
        return ChanStaDims(length=length, n_paths=n_paths), VoDims(), VpDims()
    spec = AttentionSpec(1, 4, 4, 8)
    chan = ChanStaDims(
        length=length,
        n_paths=n_paths,
        mlp1=(8, 8),
        spatial=spec,
        mlp2=(8,),
        mlp3=(8,),
        temporal=AttentionSpec(2, 4, 4, 8),
        mlp4=(8,),
    )
    vp = VpDims(
        encoder=(8,),
        decoder_a=(4,),
        decoder_b=(8,),
        self_attention=spec,
        decoder_c=(8,),
        cross_attention=spec,
        inner=(8,),
        final=(4,),
    )
    return chan, VoDims(mlp5=(8, 1), mlp6=(8,)), vp


def train_params(config: Mapping, network: str) -> TrainParams:
    nets = config["nets"]
    return TrainParams(
        epochs=int(nets[f"epochs_{network}"]),
        lr=float(nets["lr"]),
        decay=float(nets["decay"]),
        decay_every=int(nets["decay_every"]),
        patience=int(nets["patience"]),
        batch_size=int(nets["batch_size"]),
    ).check()
