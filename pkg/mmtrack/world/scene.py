#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Urban canyon scenes.

A scene file is TOML:

```toml
ground_z = 0.0
h_v = 1.6
bounds = [[-13.0, -123.0, 0.0], [231.0, 85.0, 56.0]]

[bs]
position = [222.0, -10.0, 10.0]
yaw_deg = 180.0           # array boresight azimuth

[[walls]]                 # vertical rectangular facet
start = [-13.0, -12.0]
end = [40.0, -12.0]
height = 30.0
loss_db = 6.0

[[lanes]]
name = "lane-1"
speed_kmh = 60.0
points = [[0.0, -5.25], [1.0, -5.26]]
```
"""

import logging
import math
import pathlib

import numpy

from mmtrack.constants import KMH_PER_MS
from mmtrack.types import Array, NamedTuple, Optional, PathLike, Sequence

from . import WorldError

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

import tomli_w

log = logging.getLogger(__name__)


class InvalidScene(WorldError, ValueError):
    """The scene breaks one of its invariants"""


class Wall(NamedTuple):
    """Vertical rectangular facet standing on the ground plane"""

    start: tuple[float, float]
    end: tuple[float, float]
    height: float
    loss_db: float = 6.0

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    @property
    def direction(self) -> Array:
        """Unit vector from start to end (ground plane)"""
        start, end = numpy.asarray(self.start, float), numpy.asarray(self.end, float)
        return (end - start) / self.length

    @property
    def normal(self) -> Array:
        """Unit normal of the facet plane (ground plane)"""
        dx, dy = self.direction
        return numpy.array([-dy, dx])

    @property
    def amplitude_loss(self) -> float:
        return 10 ** (-self.loss_db / 20)


class Lane:
    """
    Lane centerline polyline with arc length parametrization

    Attributes:
        points (ndarray): (K, 2) polyline vertices (m)
        name (str): lane name
        speed (float): nominal speed (m/s)
    """

    def __init__(self, points: Sequence, name: str = "", speed: float = 60 / KMH_PER_MS):
        self.points = numpy.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 2:
            raise InvalidScene(f"lane {name!r} needs at least 2 points in the plane")
        self.name = name
        self.speed = float(speed)
        segments = numpy.diff(self.points, axis=0)
        self._seg_len = numpy.hypot(segments[:, 0], segments[:, 1])
        if not (self._seg_len > 0).all():
            raise InvalidScene(f"lane {name!r} has repeated points")
        self._seg_dir = segments / self._seg_len[:, None]
        self._arc = numpy.concatenate(([0.0], numpy.cumsum(self._seg_len)))

    def __repr__(self):
        return f"Lane({self.name!r}, length={self.length:.1f}m, speed={self.speed:.2f}m/s)"

    @property
    def length(self) -> float:
        return float(self._arc[-1])

    def project(self, xy) -> tuple[float, float]:
        """Arc length of the nearest centerline point and distance to it"""
        xy = numpy.asarray(xy, dtype=float)
        rel = xy - self.points[:-1]
        u = numpy.clip(numpy.einsum("ij,ij->i", rel, self._seg_dir), 0, self._seg_len)
        nearest = self.points[:-1] + u[:, None] * self._seg_dir
        dist = numpy.hypot(*(xy - nearest).T)
        i = int(numpy.argmin(dist))
        return float(self._arc[i] + u[i]), float(dist[i])

    def _segment(self, s: float) -> int:
        return int(numpy.clip(numpy.searchsorted(self._arc, s, side="right") - 1, 0, len(self._seg_len) - 1))

    def point(self, s: float) -> Array:
        i = self._segment(s)
        return self.points[i] + (s - self._arc[i]) * self._seg_dir[i]

    def tangent(self, s: float) -> float:
        """Heading (rad) of the centerline at arc length s"""
        dx, dy = self._seg_dir[self._segment(s)]
        return math.atan2(dy, dx)


class Scene(NamedTuple):
    """
    Static environment

    Attributes:
        walls: vertical facets
        ground_z: ground plane height (m)
        r_B: base station array position (m)
        lanes: lane centerlines
        h_v: vehicle array height above ground (m)
        bs_yaw: azimuth (rad) of the base station array boresight
        bounds: ((xmin, ymin, zmin), (xmax, ymax, zmax)) scene box (m)
    """

    walls: tuple[Wall, ...]
    ground_z: float
    r_B: tuple[float, float, float]
    lanes: tuple[Lane, ...]
    h_v: float
    bs_yaw: float = 0.0
    bounds: Optional[tuple[tuple[float, float, float], tuple[float, float, float]]] = None

    def check(self) -> "Scene":
        for i, wall in enumerate(self.walls):
            if wall.length <= 0:
                raise InvalidScene(f"wall #{i} must have positive length")
            if wall.height <= 0:
                raise InvalidScene(f"wall #{i} must have positive height")
        if self.h_v <= 0:
            raise InvalidScene("h_v must be > 0")
        if self.r_B[2] <= 0:
            raise InvalidScene("base station height must be > 0")
        return self

    def vehicle_position(self, state) -> Array:
        """3D array position of a vehicle state"""
        return numpy.array([state.x, state.y, self.ground_z + self.h_v])

    def contains(self, point) -> bool:
        if self.bounds is None:
            return True
        low, high = numpy.asarray(self.bounds, dtype=float)
        return bool(numpy.all(point >= low) and numpy.all(point <= high))

    def lane(self, name: str) -> Lane:
        for lane in self.lanes:
            if lane.name == name:
                return lane
        raise KeyError(name)


def swaying_lane(
    y: float, x_start: float, x_end: float, speed_kmh: float, name: str, amplitude=0.6, period=80.0, phase=0.0
):
    """Lane along +x with a gentle sinusoidal lateral sway"""
    x = numpy.arange(x_start, x_end + 0.5, 1.0)
    points = numpy.column_stack((x, y + amplitude * numpy.sin(2 * numpy.pi * x / period + phase)))
    return Lane(points, name=name, speed=speed_kmh / KMH_PER_MS)


def _street_side(y, blocks):
    return [Wall((x0, y), (x1, y), height) for x0, x1, height in blocks]


def default_scene() -> Scene:
    """200 m urban canyon with a four lane street and the base station at its east end"""
    south = _street_side(-12.0, [(-13, 40, 30), (46, 95, 45), (101, 150, 22), (156, 200, 56), (206, 231, 18)])
    north = _street_side(12.0, [(-13, 30, 25), (36, 88, 50), (94, 140, 35), (146, 190, 20), (196, 231, 40)])
    lanes = (
        swaying_lane(-5.25, 0, 200, 60, "lane-1", phase=0.0),
        swaying_lane(-1.75, 0, 200, 50, "lane-2", phase=1.0),
        swaying_lane(1.75, 0, 200, 25, "lane-3", phase=2.0),
        swaying_lane(5.25, 0, 200, 15, "lane-4", phase=3.0),
    )
    scene = Scene(
        walls=tuple(south + north),
        ground_z=0.0,
        r_B=(222.0, -10.0, 10.0),
        lanes=lanes,
        h_v=1.6,
        bs_yaw=math.pi,
        bounds=((-13.0, -123.0, 0.0), (231.0, 85.0, 56.0)),
    )
    return scene.check()


def scene_to_dict(scene: Scene) -> dict:
    result = {
        "ground_z": float(scene.ground_z),
        "h_v": float(scene.h_v),
        "bs": {"position": [float(v) for v in scene.r_B], "yaw_deg": math.degrees(scene.bs_yaw)},
        "walls": [
            {
                "start": list(map(float, w.start)),
                "end": list(map(float, w.end)),
                "height": float(w.height),
                "loss_db": float(w.loss_db),
            }
            for w in scene.walls
        ],
        "lanes": [
            {"name": lane.name, "speed_kmh": lane.speed * KMH_PER_MS, "points": lane.points.tolist()}
            for lane in scene.lanes
        ],
    }
    if scene.bounds is not None:
        result["bounds"] = [list(map(float, corner)) for corner in scene.bounds]
    return result


def scene_from_dict(data: dict) -> Scene:
    try:
        bs = data["bs"]
        walls = tuple(
            Wall(tuple(w["start"]), tuple(w["end"]), float(w["height"]), float(w.get("loss_db", 6.0)))
            for w in data.get("walls", ())
        )
        lanes = tuple(
            Lane(lane["points"], name=lane.get("name", f"lane-{i + 1}"), speed=lane.get("speed_kmh", 60.0) / KMH_PER_MS)
            for i, lane in enumerate(data.get("lanes", ()))
        )
        bounds = data.get("bounds")
        scene = Scene(
            walls=walls,
            ground_z=float(data.get("ground_z", 0.0)),
            r_B=tuple(float(v) for v in bs["position"]),
            lanes=lanes,
            h_v=float(data["h_v"]),
            bs_yaw=math.radians(bs.get("yaw_deg", 0.0)),
            bounds=None if bounds is None else tuple(tuple(map(float, c)) for c in bounds),
        )
    except (KeyError, TypeError) as error:
        raise InvalidScene(f"invalid scene description: {error!r}") from None
    return scene.check()


def load_scene(path: PathLike) -> Scene:
    path = pathlib.Path(path)
    with path.open("rb") as fobj:
        try:
            data = tomllib.load(fobj)
        except tomllib.TOMLDecodeError as error:
            raise InvalidScene(f"{path}: {error}") from None
    scene = scene_from_dict(data)
    log.info("loaded scene %s: %d walls, %d lanes", path, len(scene.walls), len(scene.lanes))
    return scene


def dump_scene(scene: Scene, path: PathLike):
    path = pathlib.Path(path)
    path.write_text(tomli_w.dumps(scene_to_dict(scene)), encoding="utf-8")
    log.info("wrote scene %s", path)
