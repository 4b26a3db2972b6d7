#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Support search cost: predicted operation counts next to measured times.

The timed work is the one the variants differ in: computing the atoms a
tracking search visits. The factored way builds the per-window factors once
and sweeps every dimension; the dense way recomputes each of the same atoms
from the full steering vectors.
"""

import logging
import timeit

from mmtrack.constants import NANOSEC_PER_SEC
from mmtrack.fmomp.complexity import Dims, Method, op_count
from mmtrack.fmomp.dictionary import build_full_dictionaries, reduce_dictionaries
from mmtrack.fmomp.factors import compute_factors, dense_atom
from mmtrack.fmomp.tracker import oracle_support
from mmtrack.phy.channel import build_taps, measure
from mmtrack.phy.codebook import make_codebooks
from mmtrack.phy.pilots import pilot_matrix
from mmtrack.phy.radio import window_start
from mmtrack.types import Mapping, NamedTuple, Optional
from mmtrack.world.driver import initial_state
from mmtrack.world.scene import Scene
from mmtrack.world.tracer import trace_paths

from .config import array_pair, radio_config, tracking_params

log = logging.getLogger(__name__)

HEADER = ("method", "N_est", "N_s", "Q", "N_iter", "N_d", "N_t", "N_r", "predicted_count", "wall_time_ns")


class BenchRow(NamedTuple):
    method: str
    N_est: int
    N_s: int
    Q: int
    N_iter: int
    N_d: int
    N_t: int
    N_r: int
    predicted_count: int
    wall_time_ns: Optional[int]


def bench_dims(config: Mapping) -> Dims:
    params = tracking_params(config)
    bench = config["bench"]
    tx, rx = bench["tx"], bench["rx"]
    signal = (int(bench["n_taps"]), *tx, *rx)
    atoms = (2 * int(bench["window"]) + 1,) * 5
    return Dims(params.N_est, params.N_s, params.Q, params.N_iter, signal, atoms).check()


def _instance(config: Mapping, scene: Scene):
    """Measurements of a vehicle halfway along the first lane and the windows around its paths"""
    params = tracking_params(config)
    bench = config["bench"]
    cfg = radio_config(config)._replace(n_taps=int(bench["n_taps"])).check()
    geoms = array_pair(config, "bench")
    full = build_full_dictionaries(cfg, params.resolutions)
    lane = scene.lanes[0]
    state = initial_state(lane, lane.length / 2)
    paths = trace_paths(scene, scene.vehicle_position(state), config["dataset"]["max_order"], cfg.wavelength)
    if not paths:
        raise ValueError("benchmark vehicle position has no path")
    clock = config["clock"]
    offset = clock["initial"]
    window = window_start([path.t for path in paths], offset, params.resolutions.delay, clock["guard"])
    support = oracle_support(paths, full, params.N_est, state.varpi, window + offset, window, scene.bs_yaw)
    codebook = make_codebooks(None, int(bench["M"]), geoms, config["seed"], params.N_s, bs_yaw=scene.bs_yaw)
    taps = build_taps(paths, state.varpi, window + offset, cfg, geoms, scene.bs_yaw)
    pilots = pilot_matrix(params.Q, params.N_s, cfg.n_taps)
    meas = measure(taps, codebook, pilots, cfg, geoms, config["seed"], window, scene.bs_yaw)
    windows = reduce_dictionaries(full, support, int(bench["window"]))
    return meas, full, windows, support


def _factored(meas, full, windows, support):
    for window, index in zip(windows, support.indices):
        cache = compute_factors(window, meas, full)
        local = window.local(index)
        for k in range(5):
            cache.candidate_atoms(local, k)


def _dense(meas, full, windows, support):
    for window, index in zip(windows, support.indices):
        for k, indices in enumerate(window):
            for i in indices:
                candidate = list(index)
                candidate[k] = int(i)
                dense_atom(meas, full, tuple(candidate))


def _best_ns(func, args, repeat: int) -> int:
    times = timeit.repeat(lambda: func(*args), number=1, repeat=repeat)
    return int(min(times) * NANOSEC_PER_SEC)


def run_bench(config: Mapping, scene: Scene) -> list[BenchRow]:
    dims = bench_dims(config)
    repeat = int(config["bench"]["repeat"])
    args = _instance(config, scene)
    factored = _best_ns(_factored, args, repeat)
    dense = _best_ns(_dense, args, repeat)
    log.info("factored %d ns, dense %d ns (best of %d)", factored, dense, repeat)
    times = {Method.OMP: None, Method.MOMP: dense, Method.FMOMP: factored}
    _, tx_x, tx_y, rx_x, rx_y = dims.signal
    return [
        BenchRow(
            method.value,
            dims.N_est,
            dims.N_s,
            dims.Q,
            dims.N_iter,
            dims.N_d,
            tx_x * tx_y,
            rx_x * rx_y,
            op_count(method, dims),
            times[method],
        )
        for method in Method
    ]
