#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

import argparse
import logging
import pathlib
import sys

from mmtrack.ekf import EkfError
from mmtrack.fmomp import FmompError
from mmtrack.geoloc import GeolocError
from mmtrack.io import FormatError, read_records, write_csv, write_records
from mmtrack.nets import NetsError
from mmtrack.nets.checkpoint import load_checkpoint, save_checkpoint
from mmtrack.phy import PhyError
from mmtrack.world import WorldError
from mmtrack.world.scene import Scene, default_scene, dump_scene, load_scene

from . import pipeline
from .bench import HEADER, run_bench
from .config import dump_config, load_config, orientation_source, tracking_params

log = logging.getLogger(__name__)

ERRORS = (WorldError, PhyError, FmompError, GeolocError, NetsError, EkfError, FormatError, ValueError, OSError)

#: stage files from the most to the least processed
STAGE_FILES = ("corrected.jsonl", "localized.jsonl", "oriented.jsonl", "tracked.jsonl")


def _scene(config, out: pathlib.Path) -> Scene:
    if config["scene"].get("path"):
        return load_scene(config["scene"]["path"])
    path = out / "scene.toml"
    return load_scene(path) if path.exists() else default_scene()


def _read(out: pathlib.Path, name: str, stage: str) -> list:
    path = out / name
    if not path.exists():
        raise FileNotFoundError(f"{path} not found: run {stage} first")
    return read_records(path)


def gen_scene(args, config, out):
    path = out / "scene.toml"
    dump_scene(pipeline.scene_from_config(config), path)
    print(path)


def gen_dataset(args, config, out):
    records = pipeline.generate_dataset(config, _scene(config, out), progress=args.progress)
    write_records(out / "dataset.jsonl", records)


def track(args, config, out):
    records = _read(out, "dataset.jsonl", "gen-dataset")
    dump_dir = None
    if args.dump_measurements:
        dump_dir = out / "measurements"
        dump_dir.mkdir(exist_ok=True)
    tracked = pipeline.track(config, _scene(config, out), records, progress=args.progress, dump_dir=dump_dir)
    write_records(out / "tracked.jsonl", tracked)


def train_vo(args, config, out):
    records = _read(out, "tracked.jsonl", "track")
    model, normalizers, result = pipeline.train_vo(config, records, progress=args.progress)
    save_checkpoint(out / "vo.ckpt", model, normalizers)
    pipeline.write_history(out / "vo_loss.csv", result)
    write_records(out / "oriented.jsonl", pipeline.orient(config, records, model, normalizers))


def localize(args, config, out):
    if orientation_source(config) == "truth":
        records = _read(out, "tracked.jsonl", "track")
    else:
        records = _read(out, "oriented.jsonl", "train-vo")
    localized = pipeline.localize_records(config, _scene(config, out), records, progress=args.progress)
    write_records(out / "localized.jsonl", localized)


def train_vp(args, config, out):
    records = _read(out, "localized.jsonl", "localize")
    model, normalizers, result = pipeline.train_vp(config, records, progress=args.progress)
    save_checkpoint(out / "vp.ckpt", model, normalizers)
    pipeline.write_history(out / "vp_loss.csv", result)
    write_records(out / "corrected.jsonl", pipeline.correct(config, records, model, normalizers))


def infer(args, config, out):
    """Rerun the saved networks on the current stage records"""
    n_paths = tracking_params(config).N_est
    if args.network == "vo":
        model = pipeline.build_vo(config, n_paths)
        normalizers = load_checkpoint(out / "vo.ckpt", model)
        records = _read(out, "tracked.jsonl", "track")
        write_records(out / "oriented.jsonl", pipeline.orient(config, records, model, normalizers))
    else:
        model = pipeline.build_vp(config, n_paths)
        normalizers = load_checkpoint(out / "vp.ckpt", model)
        records = _read(out, "localized.jsonl", "localize")
        write_records(out / "corrected.jsonl", pipeline.correct(config, records, model, normalizers))


def evaluate(args, config, out):
    for name in STAGE_FILES:
        if (out / name).exists():
            break
    else:
        raise FileNotFoundError(f"no stage records in {out}: run track first")
    log.info("evaluating %s", name)
    errors = pipeline.collect_errors(config, _scene(config, out), read_records(out / name))
    rows = pipeline.write_metrics(out, errors)
    print(f"{'metric':24} {'n':>6} {'p50':>10} {'p80':>10} {'p95':>10}")
    for metric, n, p50, p80, p95, _ in rows:
        print(f"{metric:24} {n:>6} {p50:>10.4g} {p80:>10.4g} {p95:>10.4g}")


def bench(args, config, out):
    rows = run_bench(config, _scene(config, out))
    write_csv(out / "bench.csv", HEADER, rows)
    for row in rows:
        wall = "-" if row.wall_time_ns is None else f"{row.wall_time_ns / 1e6:.3f} ms"
        print(f"{row.method:6} {row.predicted_count:>24,} {wall:>14}")


COMMANDS = {
    "gen-scene": gen_scene,
    "gen-dataset": gen_dataset,
    "track": track,
    "train-vo": train_vo,
    "localize": localize,
    "train-vp": train_vp,
    "infer": infer,
    "evaluate": evaluate,
    "bench": bench,
}


def cli():
    parser = argparse.ArgumentParser(prog="mmtrack")
    parser.add_argument("--config", help="TOML configuration file", default=None)
    parser.add_argument("--seed", help="master seed (overrides the configuration)", type=int, default=None)
    parser.add_argument("--out", help="output directory [default: %(default)s]", default="run")
    parser.add_argument(
        "--set", help="override a key: section.key=value", action="append", default=[], dest="overrides"
    )
    parser.add_argument("-v", "--verbose", help="log progress", action="store_true")
    parser.add_argument("--log-level", help="log level [default: WARNING]", default=None)
    parser.add_argument("--progress", help="show progress bars", action="store_true")
    sub_parsers = parser.add_subparsers(
        title="sub-commands", description="valid sub-commands", help="select one command", required=True, dest="command"
    )
    sub_parsers.add_parser("gen-scene", help="write the scene description")
    sub_parsers.add_parser("gen-dataset", help="generate trajectories and traced paths")
    track = sub_parsers.add_parser("track", help="measure and track the channel of every snapshot")
    track.add_argument("--dump-measurements", help="write the measurements of every snapshot", action="store_true")
    sub_parsers.add_parser("train-vo", help="train the orientation network and estimate orientations")
    sub_parsers.add_parser("localize", help="single-shot localization and EKF")
    sub_parsers.add_parser("train-vp", help="train the position correction network and correct positions")
    infer = sub_parsers.add_parser("infer", help="rerun a saved network")
    infer.add_argument("network", choices=["vo", "vp"])
    sub_parsers.add_parser("evaluate", help="error percentiles and CDFs")
    sub_parsers.add_parser("bench", help="operation counts and timings of the support search")
    return parser


def run(args):
    config = load_config(args.config, args.overrides, args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / "config.toml")
    COMMANDS[args.command](args, config, out)


def main(args=None):
    parser = cli()
    args = parser.parse_args(args=args)
    level = args.log_level or ("INFO" if args.verbose else "WARNING")
    logging.basicConfig(level=level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except KeyboardInterrupt:
        print("\rCtrl-C pressed. Bailing out")
    except ERRORS as error:
        print(f"mmtrack {args.command}: {error}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
