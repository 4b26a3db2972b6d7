#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

import math
import pathlib
import tempfile

import numpy
from ward import fixture, raises, test

from mmtrack.constants import SPEED_OF_LIGHT
from mmtrack.util import wrap_angle
from mmtrack.world.driver import (
    DriverParams,
    InvalidStart,
    TrajectoryTerminated,
    find_lane,
    generate_trajectory,
    initial_state,
    step_driver,
)
from mmtrack.world.scene import InvalidScene, Lane, Scene, Wall, default_scene, dump_scene, load_scene
from mmtrack.world.tracer import mirror, trace_paths

WAVELENGTH = SPEED_OF_LIGHT / 73e9


@fixture
def tmp_dir():
    with tempfile.TemporaryDirectory() as name:
        yield pathlib.Path(name)


def corridor(walls=(Wall((-100.0, -12.0), (300.0, -12.0), 30.0),)):
    lane = Lane([(0.0, 0.0), (100.0, 0.0)], name="straight", speed=10.0)
    return Scene(walls=tuple(walls), ground_z=0.0, r_B=(50.0, 0.0, 10.0), lanes=(lane,), h_v=1.6).check()


@test("lane arc length parametrization")
def _():
    lane = Lane([(0, 0), (30, 0), (30, 40)], name="L")
    assert lane.length == 70
    assert numpy.allclose(lane.point(10), (10, 0))
    assert numpy.allclose(lane.point(50), (30, 20))
    assert math.isclose(lane.tangent(10), 0.0)
    assert math.isclose(lane.tangent(50), math.pi / 2)
    s, dist = lane.project((12, 3))
    assert math.isclose(s, 12)
    assert math.isclose(dist, 3)


for points in ([(0, 0)], [(0, 0), (0, 0)], [(0, 0, 0), (1, 1, 1)]):

    @test("invalid lane {points}")
    def _(points=points):
        with raises(InvalidScene):
            Lane(points)


@test("scene invariants")
def _():
    with raises(InvalidScene):
        corridor()._replace(h_v=0.0).check()
    with raises(InvalidScene):
        corridor(walls=[Wall((0.0, 0.0), (0.0, 0.0), 10.0)])
    with raises(InvalidScene):
        corridor(walls=[Wall((0.0, 0.0), (1.0, 0.0), -1.0)])


@test("default scene")
def _():
    scene = default_scene()
    assert len(scene.lanes) == 4
    assert scene.lane("lane-2").name == "lane-2"
    assert math.isclose(scene.lane("lane-1").speed, 60 / 3.6)
    assert scene.contains(numpy.array(scene.r_B))
    with raises(KeyError):
        scene.lane("nope")


@test("scene file")
def _(tmp=tmp_dir):
    scene = default_scene()
    path = tmp / "scene.toml"
    dump_scene(scene, path)
    loaded = load_scene(path)
    assert loaded.walls == scene.walls
    assert loaded.r_B == scene.r_B
    assert math.isclose(loaded.bs_yaw, scene.bs_yaw)
    assert [lane.name for lane in loaded.lanes] == [lane.name for lane in scene.lanes]
    for a, b in zip(loaded.lanes, scene.lanes):
        assert numpy.allclose(a.points, b.points)
        assert math.isclose(a.speed, b.speed)

    path.write_text("h_v = 1.6\n", encoding="utf-8")
    with raises(InvalidScene) as error:
        load_scene(path)
    assert "bs" in error.raised.args[0]


@test("image of a point across a wall")
def _():
    wall = Wall((0.0, -12.0), (10.0, -12.0), 30.0)
    assert numpy.allclose(mirror(numpy.array([3.0, 0.0, 10.0]), wall), (3.0, -24.0, 10.0))


@test("line of sight and single bounce paths")
def _():
    scene = corridor()
    r_v = numpy.array([0.0, 0.0, 1.6])
    paths = trace_paths(scene, r_v, max_order=1, wavelength=WAVELENGTH)
    assert [path.order for path in paths] == [0, 1]
    los, bounce = paths

    los_length = math.dist(r_v, scene.r_B)
    assert math.isclose(los.t, los_length / SPEED_OF_LIGHT)
    assert math.isclose(abs(los.alpha), WAVELENGTH / (4 * math.pi * los_length))
    assert math.isclose(los.theta_az, 0.0, abs_tol=1e-12)
    assert math.isclose(los.phi_az, math.pi)
    assert math.isclose(los.theta_el, -los.phi_el)

    bounce_length = math.dist(r_v, (50.0, -24.0, 10.0))
    assert math.isclose(bounce.length, bounce_length)
    assert math.isclose(abs(bounce.alpha), WAVELENGTH / (4 * math.pi * bounce_length) * 10 ** (-6 / 20))
    assert math.isclose(bounce.phi_az, math.atan2(-12.0, -25.0))
    assert math.isclose(bounce.theta_az, math.atan2(-12.0, 25.0))


@test("paths are sorted by gain and never shorter than the line of sight")
def _():
    scene = default_scene()
    lane = scene.lanes[0]
    r_v = scene.vehicle_position(initial_state(lane, 60.0))
    paths = trace_paths(scene, r_v, max_order=2)
    assert len(paths) > 1
    gains = [abs(path.alpha) for path in paths]
    assert gains == sorted(gains, reverse=True)
    los_length = math.dist(r_v, scene.r_B)
    assert all(path.length >= los_length - 1e-9 for path in paths)
    assert {path.order for path in paths} <= {0, 1, 2}


@test("blocked line of sight")
def _():
    scene = corridor(walls=[Wall((25.0, -50.0), (25.0, 50.0), 30.0)])
    assert trace_paths(scene, numpy.array([0.0, 0.0, 1.6]), max_order=1) == []


@test("unsupported reflection order")
def _():
    with raises(ValueError):
        trace_paths(corridor(), numpy.zeros(3), max_order=3)


@test("driver parameters")
def _():
    assert DriverParams().check() == DriverParams()
    for bad in (dict(control="random"), dict(look_ahead=0.0), dict(delta_max=0.0), dict(omega_var=-1.0)):
        with raises(ValueError):
            DriverParams(**bad).check()


@test("initial state follows the lane")
def _():
    lane = Lane([(0, 0), (100, 100)], speed=5.0)
    state = initial_state(lane, 10.0)
    assert math.isclose(state.varpi, math.pi / 4)
    assert math.isclose(state.v, 5.0)
    assert math.isclose(state.x, 10 / math.sqrt(2))
    assert math.isclose(state.eta, 0.0, abs_tol=1e-12)
    with raises(TrajectoryTerminated):
        initial_state(lane, lane.length - 0.1)


@test("trajectory is reproducible and moves v·dt per step")
def _():
    scene = default_scene()
    lane = scene.lanes[1]
    start = initial_state(lane, 5.0)
    params = DriverParams()
    states = generate_trajectory(start, params, scene, 50, 0.1, seed=3)
    again = generate_trajectory(start, params, scene, 50, 0.1, seed=3)
    assert states == again
    assert len(states) == 50
    assert states[0] == start
    for a, b in zip(states, states[1:]):
        assert math.isclose(math.hypot(b.x - a.x, b.y - a.y), a.v * 0.1)
        assert abs(b.delta) <= params.delta_max


@test("trajectory stops at the lane end")
def _():
    scene = default_scene()
    lane = scene.lanes[0]
    start = initial_state(lane, lane.length - 40.0)
    states = generate_trajectory(start, DriverParams(), scene, 250, 0.1, seed=1)
    assert 1 < len(states) < 250


@test("lane lookup")
def _():
    scene = default_scene()
    assert find_lane(scene, (50.0, 1.75)).name == "lane-3"
    with raises(InvalidStart):
        find_lane(scene, (50.0, 40.0))


@test("driver step needs a positive period")
def _():
    lane = default_scene().lanes[0]
    with raises(ValueError):
        step_driver(initial_state(lane, 0.0), DriverParams(), lane, 0.0, numpy.random.default_rng(0))


def shortest_bounce(a, b, wall, ground_z=0.0, n=41, rounds=10):
    """Shortest a→facet→b length by a zooming grid search over the facet"""
    start, direction = numpy.asarray(wall.start, dtype=float), wall.direction
    floor, ceiling = numpy.array([0.0, ground_z]), numpy.array([wall.length, ground_z + wall.height])
    low, high, best = floor, ceiling, math.inf
    for _ in range(rounds):
        u, z = numpy.linspace(low[0], high[0], n), numpy.linspace(low[1], high[1], n)
        U, Z = numpy.meshgrid(u, z, indexing="ij")
        points = numpy.stack((start[0] + U * direction[0], start[1] + U * direction[1], Z), axis=-1)
        lengths = numpy.linalg.norm(points - a, axis=-1) + numpy.linalg.norm(points - b, axis=-1)
        i, j = numpy.unravel_index(numpy.argmin(lengths), lengths.shape)
        best = min(best, float(lengths[i, j]))
        step = (high - low) / (n - 1)
        centre = numpy.array([u[i], z[j]])
        low, high = numpy.maximum(centre - 2 * step, floor), numpy.minimum(centre + 2 * step, ceiling)
    return best


def two_walls(r_B=(50.0, 0.0, 10.0)):
    lane = Lane([(0.0, 0.0), (100.0, 0.0)], name="straight", speed=10.0)
    walls = (Wall((-200.0, -12.0), (300.0, -12.0), 60.0), Wall((-200.0, 15.0), (300.0, 15.0), 60.0))
    return Scene(walls=walls, ground_z=0.0, r_B=r_B, lanes=(lane,), h_v=1.6).check()


@test("a bounce on the plane x = 0 has the length of the image path")
def _():
    wall = Wall((0.0, -100.0), (0.0, 100.0), 30.0)
    lane = Lane([(0.0, 0.0), (10.0, 0.0)])
    scene = Scene(walls=(wall,), ground_z=0.0, r_B=(5.0, 0.0, 10.0), lanes=(lane,), h_v=2.0).check()
    r_v = numpy.array([5.0, 20.0, 2.0])
    assert numpy.allclose(mirror(numpy.array(scene.r_B), wall), (-5.0, 0.0, 10.0))
    paths = trace_paths(scene, r_v, max_order=1)
    assert [path.order for path in paths] == [0, 1]
    assert math.isclose(paths[1].length, math.sqrt(564), rel_tol=1e-12)
    brute = shortest_bounce(numpy.array(scene.r_B), r_v, wall)
    assert -1e-9 <= brute - math.sqrt(564) <= 1e-6


@test("first order paths are the shortest bounces on their facet")
def _():
    scene = two_walls()
    r_v = numpy.array([0.0, 0.0, 1.6])
    lengths = sorted(path.length for path in trace_paths(scene, r_v, max_order=1) if path.order == 1)
    brute = sorted(shortest_bounce(numpy.array(scene.r_B), r_v, wall) for wall in scene.walls)
    assert len(lengths) == 2
    assert numpy.allclose(lengths, brute, rtol=0, atol=1e-6)


@test("paths are reciprocal when the end points are swapped")
def _():
    r_B, r_v = (50.0, 3.0, 10.0), numpy.array([0.0, -2.0, 1.6])
    forward = trace_paths(two_walls(r_B), r_v, max_order=2)
    backward = trace_paths(two_walls(tuple(r_v)), numpy.array(r_B), max_order=2)
    assert len(forward) == len(backward) > 3
    assert {path.order for path in forward} == {0, 1, 2}

    def matches(a, b):
        return (
            math.isclose(a.t, b.t, rel_tol=1e-12)
            and math.isclose(abs(a.alpha), abs(b.alpha), rel_tol=1e-9)
            and abs(wrap_angle(a.theta_az - b.phi_az)) < 1e-9
            and abs(wrap_angle(a.phi_az - b.theta_az)) < 1e-9
            and math.isclose(a.theta_el, b.phi_el, abs_tol=1e-9)
            and math.isclose(a.phi_el, b.theta_el, abs_tol=1e-9)
            and a.order == b.order
        )

    unmatched = list(backward)
    for path in forward:
        partner = next(other for other in unmatched if matches(path, other))
        unmatched.remove(partner)
    assert unmatched == []


@test("heading changes by at most |ω|·δ_max·dt per step")
def _():
    lane = default_scene().lanes[2]
    params = DriverParams()
    dt = 0.1
    rng, replay = numpy.random.default_rng(7), numpy.random.default_rng(7)
    state = initial_state(lane, 5.0)
    steps = 0
    for _ in range(200):
        omega = replay.normal(params.omega_mean, math.sqrt(params.omega_var))
        replay.normal(0.0, math.sqrt(params.sigma_delta_sq))
        try:
            new = step_driver(state, params, lane, dt, rng)
        except TrajectoryTerminated:
            break
        turn = abs(wrap_angle(new.varpi - state.varpi))
        assert turn <= abs(omega * state.delta) * dt + 1e-12
        assert turn <= abs(omega) * params.delta_max * dt + 1e-12
        state = new
        steps += 1
    assert steps > 100
