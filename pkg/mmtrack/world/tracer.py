#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
Specular multipath geometry by the image method.

Walls are opaque vertical facets. A reflection of order k is found by
mirroring the base station successively across k walls and walking back
from the vehicle towards the images; a path is valid when every
reflection point lies on its facet and no leg is blocked.
"""

import itertools
import logging
import math

import numpy

from mmtrack.constants import DEFAULT_CARRIER, SPEED_OF_LIGHT
from mmtrack.types import Array, NamedTuple, Optional, Sequence

from .scene import Scene, Wall

log = logging.getLogger(__name__)

#: legs that touch a wall closer than this (relative segment parameter) are not blocked by it
EDGE_TOLERANCE = 1e-9


class Path(NamedTuple):
    """
    One multipath component

    Attributes:
        alpha: complex gain
        t: absolute time of arrival (s)
        theta_az, theta_el: global angle of arrival (rad)
        phi_az, phi_el: global angle of departure (rad)
        order: number of bounces (0 = LOS)
    """

    alpha: complex
    t: float
    theta_az: float
    theta_el: float
    phi_az: float
    phi_el: float
    order: int

    @property
    def length(self) -> float:
        return self.t * SPEED_OF_LIGHT


def direction_angles(vector) -> tuple[float, float]:
    """(azimuth, elevation) of a 3D direction"""
    x, y, z = vector
    norm = math.sqrt(x * x + y * y + z * z)
    return math.atan2(y, x), math.asin(max(-1.0, min(1.0, z / norm)))


def mirror(point: Array, wall: Wall) -> Array:
    """Image of a 3D point across the vertical plane of the wall"""
    normal = wall.normal
    offset = numpy.dot(point[:2] - numpy.asarray(wall.start, float), normal)
    image = numpy.array(point, dtype=float)
    image[:2] -= 2 * offset * normal
    return image


def crossing(p: Array, q: Array, wall: Wall, ground_z: float) -> Optional[tuple[float, Array]]:
    """
    Where the segment p→q crosses the wall facet.

    Returns:
        (segment parameter, point) or None if the segment does not cross the
        facet (parallel, same side or outside the facet extent)
    """
    start = numpy.asarray(wall.start, float)
    normal = wall.normal
    dp = numpy.dot(p[:2] - start, normal)
    dq = numpy.dot(q[:2] - start, normal)
    if dp * dq >= 0:
        return None
    t = dp / (dp - dq)
    point = p + t * (q - p)
    u = numpy.dot(point[:2] - start, wall.direction)
    if not (0 <= u <= wall.length and ground_z <= point[2] <= ground_z + wall.height):
        return None
    return t, point


def is_blocked(p: Array, q: Array, walls: Sequence[Wall], ground_z: float, skip: Sequence[int] = ()) -> bool:
    for index, wall in enumerate(walls):
        if index in skip:
            continue
        hit = crossing(p, q, wall, ground_z)
        if hit is not None and EDGE_TOLERANCE < hit[0] < 1 - EDGE_TOLERANCE:
            return True
    return False


def _reflection_points(scene: Scene, r_v: Array, sequence: Sequence[int]) -> Optional[list[Array]]:
    """Reflection points (BS side first) of the wall sequence, or None if invalid"""
    walls = scene.walls
    images = [numpy.asarray(scene.r_B, dtype=float)]
    for index in sequence:
        images.append(mirror(images[-1], walls[index]))
    points = []
    target = r_v
    for level in range(len(sequence), 0, -1):
        wall = walls[sequence[level - 1]]
        hit = crossing(target, images[level], wall, scene.ground_z)
        if hit is None:
            return None
        target = hit[1]
        points.append(target)
    points.reverse()
    return points


def _make_path(vertices: list[Array], loss: float, order: int, wavelength: float) -> Path:
    length = sum(math.dist(a, b) for a, b in zip(vertices, vertices[1:]))
    phi_az, phi_el = direction_angles(vertices[1] - vertices[0])
    theta_az, theta_el = direction_angles(vertices[-2] - vertices[-1])
    alpha = wavelength / (4 * math.pi * length) * loss * numpy.exp(-2j * math.pi * length / wavelength)
    return Path(complex(alpha), length / SPEED_OF_LIGHT, theta_az, theta_el, phi_az, phi_el, order)


def trace_paths(
    scene: Scene, r_v_3d, max_order: int = 2, wavelength: float = SPEED_OF_LIGHT / DEFAULT_CARRIER
) -> list[Path]:
    """
    LOS, first and second order specular paths between the base station
    and a vehicle array at r_v_3d, sorted by descending gain magnitude.
    """
    if max_order not in (0, 1, 2):
        raise ValueError(f"max_order must be 0, 1 or 2 (got {max_order})")
    r_B = numpy.asarray(scene.r_B, dtype=float)
    r_v = numpy.asarray(r_v_3d, dtype=float)
    walls = scene.walls
    paths = []
    if not is_blocked(r_B, r_v, walls, scene.ground_z):
        paths.append(_make_path([r_B, r_v], 1.0, 0, wavelength))
    sequences = itertools.chain.from_iterable(
        itertools.permutations(range(len(walls)), order) for order in range(1, max_order + 1)
    )
    for sequence in sequences:
        points = _reflection_points(scene, r_v, sequence)
        if points is None:
            continue
        vertices = [r_B, *points, r_v]
        legs = zip(vertices, vertices[1:])
        if any(is_blocked(a, b, walls, scene.ground_z) for a, b in legs):
            continue
        loss = math.prod(walls[index].amplitude_loss for index in sequence)
        paths.append(_make_path(vertices, loss, len(sequence), wavelength))
    paths.sort(key=lambda path: (-abs(path.alpha), path.t))
    log.debug("traced %d paths to %s", len(paths), r_v)
    return paths
