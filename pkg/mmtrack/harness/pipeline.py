#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Pipeline stages.

Every stage takes the records of the previous one and returns new records;
reading and writing the stage files is left to the caller. All randomness
comes from `seed_sequence(config["seed"], stream, ...)` so any stage can be
rerun alone with the same result.
"""

import concurrent.futures
import enum
import functools
import logging
import pathlib
import time

import numpy
from tqdm import tqdm

from mmtrack import ekf
from mmtrack.constants import NANOSEC_PER_SEC
from mmtrack.fmomp.dictionary import build_full_dictionaries
from mmtrack.fmomp.tracker import (
    ChannelEstimate,
    DegenerateWindow,
    build_coarse_dictionaries,
    fmomp_track,
    momp_init,
    oracle_support,
    raw_estimate,
    rebase_support,
)
from mmtrack.geoloc import GeometryDegenerate, InsufficientPaths, compensate, localize
from mmtrack.io import FormatError, write_csv, write_tensors
from mmtrack.nets.chat import VoChat, VpChat
from mmtrack.nets.train import Dataset, EmptyDataset, Standardizer, TrainResult, train
from mmtrack.phy.channel import build_taps, measure
from mmtrack.phy.codebook import make_codebooks
from mmtrack.phy.pilots import pilot_matrix
from mmtrack.phy.radio import clock_offsets, window_start
from mmtrack.types import Array, Mapping, Optional, PathLike, Sequence
from mmtrack.util import make_rng, seed_sequence, to_db, wrap_angle
from mmtrack.world.driver import generate_trajectory, initial_state
from mmtrack.world.scene import Scene, default_scene, load_scene
from mmtrack.world.tracer import trace_paths

from .config import (
    array_pair,
    driver_params,
    ekf_params,
    localize_params,
    network_dims,
    orientation_source,
    radio_config,
    tracking_params,
    train_params,
)
from .metrics import angle_error_deg, cdf, match_paths, position_error, summarize
from .records import (
    SCHEMA,
    estimate_from_record,
    estimate_to_record,
    group_trajectories,
    path_to_record,
    paths_from_record,
    pose_to_record,
    support_to_record,
    true_xy,
)

log = logging.getLogger(__name__)

#: gain floor (dB) of the network features (padded paths have a zero gain)
GAIN_FLOOR_DB = -200.0

_NETWORKS = {"vo": 0, "vp": 1}


class Stream(enum.IntEnum):
    """Random stream families, the first spawn key of every seed sequence"""

    START = 0
    TRAJECTORY = 1
    CLOCK = 2
    CODEBOOK = 3
    NOISE = 4
    WEIGHTS = 5
    SPLIT = 6
    SHUFFLE = 7


def _seed_int(seed: int, *key: int) -> int:
    return int(seed_sequence(seed, *key).generate_state(1)[0])


def scene_from_config(config: Mapping) -> Scene:
    path = config["scene"].get("path", "")
    return load_scene(path) if path else default_scene()


# dataset


def generate_dataset(config: Mapping, scene: Scene, progress: bool = False) -> list[dict]:
    """
    Trajectories on the scene lanes (round robin), with the traced paths,
    clock offsets, receiver windows and measurement seeds of every snapshot
    """
    seed = config["seed"]
    dataset = config["dataset"]
    dt = dataset["dt"]
    n_snapshots = dataset["n_snapshots"]
    driver = driver_params(config)
    cfg = radio_config(config)
    resolution = tracking_params(config).resolutions.delay
    clock = config["clock"]
    starts = make_rng(seed_sequence(seed, Stream.START))
    records = []
    trajectories = range(dataset["n_trajectories"])
    for traj in tqdm(trajectories, desc="trajectories", unit="traj", disable=not progress):
        lane = scene.lanes[traj % len(scene.lanes)]
        travel = lane.speed * (dt * n_snapshots + driver.look_ahead) + 1.0
        s_max = max(lane.length - travel, 0.0)
        s0 = float(starts.uniform(0.0, s_max)) if s_max > 0 else 0.0
        start = initial_state(lane, s0, look_ahead=driver.look_ahead)
        trajectory_seed = seed_sequence(seed, Stream.TRAJECTORY, traj)
        states = generate_trajectory(start, driver, scene, n_snapshots, dt, trajectory_seed)
        offsets = clock_offsets(
            len(states), clock["initial"], clock["sigma_drift"], make_rng(seed_sequence(seed, Stream.CLOCK, traj))
        )
        for n, (state, offset) in enumerate(zip(states, offsets)):
            r_v = scene.vehicle_position(state)
            paths = trace_paths(scene, r_v, dataset["max_order"], cfg.wavelength)
            if not paths:
                log.warning("trajectory %d snapshot %d has no path", traj, n)
            delays = [path.t for path in paths] or [offset + clock["guard"]]
            records.append(
                {
                    "schema": SCHEMA,
                    "trajectory": traj,
                    "snapshot": n,
                    "time": n * dt,
                    "lane": lane.name,
                    "pose": pose_to_record(state),
                    "r_v": r_v,
                    "clock_offset": float(offset),
                    "window": window_start(delays, offset, resolution, clock["guard"]),
                    "paths": [path_to_record(path) for path in paths],
                    "seeds": {
                        "codebook": _seed_int(seed, Stream.CODEBOOK, traj, n),
                        "noise": _seed_int(seed, Stream.NOISE, traj, n),
                    },
                }
            )
        log.info("trajectory %d on %s: %d snapshots", traj, lane.name, len(states))
    return records


# channel tracking


def track_trajectory(
    config: Mapping, scene: Scene, group: Sequence[Mapping], dump_dir: Optional[PathLike] = None
) -> list[dict]:
    """
    Measure and track one trajectory. The measurements of a snapshot depend
    on the previous estimate (adaptive beams), so they are synthesized here
    from the seeds stored in the dataset records.
    """
    params = tracking_params(config)
    cfg = radio_config(config)
    geoms = array_pair(config)
    full = build_full_dictionaries(cfg, params.resolutions)
    pilots = pilot_matrix(params.Q, params.N_s, cfg.n_taps)
    support, estimate = None, None
    result = []
    for record in group:
        paths = paths_from_record(record)
        varpi = record["pose"]["varpi"]
        window = record["window"]
        t_off = window + record["clock_offset"]
        started = time.perf_counter()
        if support is None and params.init == "oracle":
            support = oracle_support(
                paths, full, params.N_est, varpi, t_off, window, scene.bs_yaw, params.oracle_offset
            )
            estimate = raw_estimate(support, full, scene.bs_yaw)
        codebook = make_codebooks(
            estimate, params.M, geoms, record["seeds"]["codebook"], params.N_s, params.beams_per_path, scene.bs_yaw
        )
        taps = build_taps(paths, varpi, t_off, cfg, geoms, scene.bs_yaw)
        meas = measure(
            taps, codebook, pilots, cfg, geoms, record["seeds"]["noise"], window, scene.bs_yaw, noise=params.noise
        )
        measured = time.perf_counter()
        if support is None:
            coarse = build_coarse_dictionaries(cfg, geoms, params.init_oversample)
            support = rebase_support(
                momp_init(meas, coarse, params.N_est, params.N_iter, params.init_budget), coarse, full
            )
        failed = False
        try:
            estimate, support = fmomp_track(meas, support, full, params.window, params.N_est, params.N_iter)
        except DegenerateWindow as error:
            log.warning(
                "trajectory %d snapshot %d: %s, keeping the previous support",
                record["trajectory"],
                record["snapshot"],
                error,
            )
            failed = True
            support = support.shifted(window, full.resolutions.delay, full.sizes[0])
            estimate = raw_estimate(support, full, scene.bs_yaw)
        tracked = time.perf_counter()
        if dump_dir is not None:
            name = f"meas-{record['trajectory']:03d}-{record['snapshot']:04d}.mmt"
            write_tensors(pathlib.Path(dump_dir) / name, {"y": meas.y, "F": meas.F, "W": meas.W, "L": meas.L})
        log.debug("trajectory %d snapshot %d support %s", record["trajectory"], record["snapshot"], support.indices)
        result.append(
            {
                **record,
                "raw": estimate_to_record(estimate),
                "support": support_to_record(support),
                "track_failed": failed,
                "timing": {"measure": measured - started, "track": tracked - measured},
            }
        )
    return result


def track(
    config: Mapping, scene: Scene, records: Sequence[Mapping], progress: bool = False, dump_dir=None
) -> list[dict]:
    """Track every trajectory; output keeps the trajectory-major order"""
    groups = group_trajectories(records)
    jobs = tracking_params(config).jobs
    work = functools.partial(track_trajectory, config, scene, dump_dir=dump_dir)
    bar = functools.partial(tqdm, total=len(groups), desc="tracking", unit="traj", disable=not progress)
    if jobs == 1:
        tracked = list(bar(map(work, groups)))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            tracked = list(bar(executor.map(work, groups)))
    return [record for group in tracked for record in group]


# network inputs


def channel_features(record: Mapping) -> Array:
    """(N_est, 6) rows (gain dB, delay ns, θ_az, θ_el, φ_az, φ_el) of an estimate record"""
    est = estimate_from_record(record)
    gains = numpy.maximum(to_db(numpy.where(est.magnitude > 0, est.magnitude, 1e-300)), GAIN_FLOOR_DB)
    return numpy.column_stack((gains, est.t * NANOSEC_PER_SEC, est.theta_az, est.theta_el, est.phi_az, est.phi_el))


def _windows(values: Sequence, length: int) -> Array:
    """Sliding windows of `length` consecutive items, one per full window"""
    values = numpy.asarray(values, dtype=float)
    return numpy.stack([values[n - length + 1 : n + 1] for n in range(length - 1, len(values))])


def _train_groups(config: Mapping, groups: list) -> list:
    n_test = config["dataset"].get("n_test", 0)
    train_groups = groups[: len(groups) - n_test] if n_test else groups
    if not train_groups:
        raise EmptyDataset("no training trajectory")
    return train_groups


def vo_samples(groups: Sequence[Sequence[Mapping]], length: int) -> tuple[Array, Array, Array]:
    """
    Channel windows, the true previous orientations and the true current
    orientation of every snapshot with a full history

    Returns:
        (B, Γ, N_est, 6), (B, Γ-1), (B,)
    """
    channels, previous, targets = [], [], []
    for group in groups:
        if len(group) < length:
            continue
        features = _windows([channel_features(r["raw"]) for r in group], length)
        varpi = _windows([r["pose"]["varpi"] for r in group], length)
        channels.append(features)
        previous.append(varpi[:, :-1])
        targets.append(varpi[:, -1])
    if not channels:
        raise EmptyDataset(f"no trajectory has {length} snapshots")
    return numpy.concatenate(channels), numpy.concatenate(previous), numpy.concatenate(targets)


def vp_samples(groups: Sequence[Sequence[Mapping]], length: int) -> tuple[Array, Array, Array]:
    """
    Compensated channel windows, position windows (true history then the
    current single-shot estimate, relative to that estimate) and the
    correction to the true position

    Returns:
        (B, Γ, N_est, 6), (B, Γ, 2), (B, 2)
    """
    channels, positions, targets = [], [], []
    for group in groups:
        if len(group) < length:
            continue
        features = _windows([channel_features(r["compensated"]) for r in group], length)
        truth = _windows([true_xy(r) for r in group], length)
        single = numpy.array([r["single_shot"] for r in group])[length - 1 :]
        history = truth.copy()
        history[:, -1] = single
        channels.append(features)
        positions.append(history - single[:, None, :])
        targets.append(truth[:, -1] - single)
    if not channels:
        raise EmptyDataset(f"no trajectory has {length} snapshots")
    return numpy.concatenate(channels), numpy.concatenate(positions), numpy.concatenate(targets)


def write_history(path: PathLike, result: TrainResult):
    write_csv(path, ("epoch", "lr", "train", "validation"), result.history)


def _fit(config: Mapping, model, inputs: tuple, targets: Array, network: str, progress: bool) -> TrainResult:
    seed = config["seed"]
    dataset = Dataset(inputs, targets).check()
    fraction = config["nets"].get("validation_fraction", 0.0)
    train_set, validation = dataset.split(fraction, rng=seed_sequence(seed, Stream.SPLIT, _NETWORKS[network]))
    result = train(
        model,
        train_set,
        validation,
        train_params(config, network),
        seed=seed_sequence(seed, Stream.SHUFFLE, _NETWORKS[network]),
        progress=progress,
    )
    log.info("%s: best epoch %d, validation loss %g", network, result.best_epoch, result.best_loss)
    return result


# orientation


def build_vo(config: Mapping, n_paths: int) -> VoChat:
    chan, dims, _ = network_dims(config, n_paths)
    return VoChat.build(seed_sequence(config["seed"], Stream.WEIGHTS, _NETWORKS["vo"]), chan, dims)


def build_vp(config: Mapping, n_paths: int) -> VpChat:
    chan, _, dims = network_dims(config, n_paths)
    return VpChat.build(seed_sequence(config["seed"], Stream.WEIGHTS, _NETWORKS["vp"]), chan, dims)


def train_vo(
    config: Mapping, records: Sequence[Mapping], progress: bool = False
) -> tuple[VoChat, dict[str, Standardizer], TrainResult]:
    length = config["nets"]["length"]
    groups = _train_groups(config, group_trajectories(records))
    channels, previous, targets = vo_samples(groups, length)
    normalizers = {
        "channel": Standardizer.fit(channels),
        "orientation": Standardizer.fit(numpy.concatenate([previous.ravel(), targets])[:, None]),
    }
    inputs = (normalizers["channel"].apply(channels), normalizers["orientation"].apply(previous[..., None])[..., 0])
    model = build_vo(config, channels.shape[2])
    result = _fit(config, model, inputs, normalizers["orientation"].apply(targets[:, None]), "vo", progress)
    return model, normalizers, result


def orient(
    config: Mapping, records: Sequence[Mapping], model: VoChat, normalizers: Mapping[str, Standardizer]
) -> list[dict]:
    """
    Orientation of every snapshot. The first Γ-1 snapshots of a trajectory
    take the initial access orientation (the truth); afterwards the network
    runs on its own previous outputs.
    """
    length = config["nets"]["length"]
    channel, orientation = normalizers["channel"], normalizers["orientation"]
    result = []
    for group in group_trajectories(records):
        features = [channel_features(r["raw"]) for r in group]
        estimates = []
        for n, record in enumerate(group):
            if n < length - 1:
                varpi_hat, source = record["pose"]["varpi"], "initial"
            else:
                z = channel.apply(numpy.stack(features[n - length + 1 : n + 1]))
                previous = orientation.apply(numpy.array(estimates[n - length + 1 : n])[:, None])[:, 0]
                output = model(z, previous).numpy()
                varpi_hat, source = wrap_angle(float(orientation.invert(output[:, None])[0, 0])), "vo"
            estimates.append(varpi_hat)
            result.append({**record, "varpi_hat": varpi_hat, "varpi_source": source})
    return result


# localization


def localize_trajectory(config: Mapping, scene: Scene, group: Sequence[Mapping]) -> list[dict]:
    """
    Compensate, localize and filter one trajectory. The clock offset of the
    compensation is the previous single-shot estimate (the truth at the
    first snapshot); the EKF prediction is the position prior of the path
    selection and replaces the single-shot position when it fails.
    """
    params = localize_params(config)
    source = orientation_source(config)
    noise = ekf_params(config)
    dt = config["dataset"]["dt"]
    tx_power = radio_config(config).tx_power_dbm
    first = group[0]["pose"]
    state = ekf.initial_state((first["x"], first["y"]), first["v"], first["varpi"], noise.initial_covariance)
    t_off_hat = group[0]["clock_offset"]
    result = []
    for n, record in enumerate(group):
        started = time.perf_counter()
        if source == "truth":
            varpi_hat = record["pose"]["varpi"]
        elif "varpi_hat" in record:
            varpi_hat = record["varpi_hat"]
        else:
            raise FormatError(
                "records carry no orientation estimate: run train-vo first or use localize.orientation=truth"
            )
        predicted = state if n == 0 else ekf.predict(state, dt, noise.process_noise)
        comp = compensate(estimate_from_record(record["raw"]), varpi_hat, t_off_hat)
        try:
            single = localize(comp, scene.r_B, scene.h_v, params, tx_power, predicted.position)
        except (InsufficientPaths, GeometryDegenerate) as error:
            log.warning(
                "trajectory %d snapshot %d: %s, using the EKF prediction",
                record["trajectory"],
                record["snapshot"],
                error,
            )
            state = predicted
            position, selected, fallback = predicted.position.copy(), [], True
        else:
            state = ekf.update(predicted, single.r_xy, noise.measurement_noise)
            t_off_hat = single.t_off
            position, selected, fallback = single.r_xy, single.selected, False
        timing = {**record.get("timing", {}), "localize": time.perf_counter() - started}
        result.append(
            {
                **record,
                "varpi_hat": varpi_hat,
                "compensated": estimate_to_record(comp),
                "single_shot": position,
                "t_off_hat": t_off_hat,
                "ekf": state.position.copy(),
                "fallback": fallback,
                "selected": selected,
                "timing": timing,
            }
        )
    return result


def localize_records(config: Mapping, scene: Scene, records: Sequence[Mapping], progress: bool = False) -> list[dict]:
    groups = group_trajectories(records)
    result = []
    for group in tqdm(groups, desc="localizing", unit="traj", disable=not progress):
        result.extend(localize_trajectory(config, scene, group))
    n_fallback = sum(record["fallback"] for record in result)
    if n_fallback:
        log.warning("%d of %d snapshots fell back to the EKF prediction", n_fallback, len(result))
    return result


# position correction


def train_vp(
    config: Mapping, records: Sequence[Mapping], progress: bool = False
) -> tuple[VpChat, dict[str, Standardizer], TrainResult]:
    length = config["nets"]["length"]
    groups = _train_groups(config, group_trajectories(records))
    channels, positions, targets = vp_samples(groups, length)
    normalizers = {
        "channel": Standardizer.fit(channels),
        "position": Standardizer.fit(positions),
        "correction": Standardizer.fit(targets),
    }
    inputs = (normalizers["channel"].apply(channels), normalizers["position"].apply(positions))
    model = build_vp(config, channels.shape[2])
    result = _fit(config, model, inputs, normalizers["correction"].apply(targets), "vp", progress)
    return model, normalizers, result


def correct(
    config: Mapping, records: Sequence[Mapping], model: VpChat, normalizers: Mapping[str, Standardizer]
) -> list[dict]:
    """
    Corrected positions. The first Γ-1 snapshots keep their single-shot
    position; afterwards the corrected history feeds the network.
    """
    length = config["nets"]["length"]
    channel, position, correction = normalizers["channel"], normalizers["position"], normalizers["correction"]
    result = []
    for group in group_trajectories(records):
        features = [channel_features(r["compensated"]) for r in group]
        corrected = []
        for n, record in enumerate(group):
            single = numpy.asarray(record["single_shot"], dtype=float)
            if n < length - 1:
                value = single
            else:
                history = numpy.array([*corrected[n - length + 1 : n], single]) - single
                z = channel.apply(numpy.stack(features[n - length + 1 : n + 1]))
                output = model(z, position.apply(history)).numpy()
                value = single + correction.invert(output)
            corrected.append(value)
            result.append({**record, "corrected": value})
    return result


# evaluation


def _test_groups(config: Mapping, records: Sequence[Mapping]) -> list:
    groups = group_trajectories(records)
    n_test = config["dataset"].get("n_test", 0)
    return groups[len(groups) - n_test :] if n_test else groups


def collect_errors(config: Mapping, scene: Scene, records: Sequence[Mapping]) -> dict[str, list[float]]:
    """
    Errors of the test trajectories per metric. Only the metrics the records
    carry are reported: a tracked file gives the channel errors, a localized
    one adds the positions, and so on.
    """
    length = config["nets"]["length"]
    errors = {}

    def add(name, values):
        errors.setdefault(name, []).extend(float(value) for value in numpy.atleast_1d(values))

    for group in _test_groups(config, records):
        for n, record in enumerate(group):
            pose = record["pose"]
            truth = true_xy(record)
            if "raw" in record and record["paths"]:
                ideal = ChannelEstimate.from_paths(
                    paths_from_record(record), pose["varpi"], record["clock_offset"], scene.bs_yaw
                )
                matched = match_paths(estimate_from_record(record["raw"]), ideal)
                for name, values in matched._asdict().items():
                    add(name, values)
            if record.get("varpi_source") == "vo":
                add("orientation_vo_deg", angle_error_deg(record["varpi_hat"], pose["varpi"]))
                add("orientation_hold_deg", angle_error_deg(group[n - 1]["pose"]["varpi"], pose["varpi"]))
            if "single_shot" in record:
                add("position_single_m", position_error(record["single_shot"], truth))
                add("position_ekf_m", position_error(record["ekf"], truth))
            if "corrected" in record and n >= length - 1:
                add("position_corrected_m", position_error(record["corrected"], truth))
    return {name: values for name, values in errors.items() if values}


def write_metrics(out_dir: PathLike, errors: Mapping[str, Sequence[float]]) -> list[tuple]:
    """metrics.csv with one summary row per metric plus one cdf_<metric>.csv each"""
    out_dir = pathlib.Path(out_dir)
    rows = []
    for name in sorted(errors):
        summary = summarize(errors[name])
        rows.append((name, *summary))
        values, probabilities = cdf(errors[name])
        write_csv(out_dir / f"cdf_{name}.csv", ("error", "cdf"), zip(values.tolist(), probabilities.tolist()))
        log.info("%s: n=%d p50=%g p80=%g p95=%g", name, summary.n, summary.p50, summary.p80, summary.p95)
    write_csv(out_dir / "metrics.csv", ("metric", "n", "p50", "p80", "p95", "mean"), rows)
    return rows
