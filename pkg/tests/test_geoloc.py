#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

import math

import numpy
from ward import raises, test

from mmtrack.constants import SPEED_OF_LIGHT
from mmtrack.fmomp.tracker import ChannelEstimate
from mmtrack.geoloc import (
    CompensationError,
    GeometryDegenerate,
    InsufficientPaths,
    LocalizeParams,
    absolute_estimate,
    closest_approach,
    compensate,
    direction_vectors,
    localize,
    received_dbm,
    select_paths,
    uncompensate,
    unit_vectors,
    weights,
    wls_localize,
)
from mmtrack.world.scene import Lane, Scene, Wall, default_scene
from mmtrack.world.tracer import trace_paths

R_V = numpy.array([0.0, 0.0, 1.6])
BOUNCE = (25.0, -12.0, 5.8)


def corridor():
    lane = Lane([(0.0, 0.0), (100.0, 0.0)], name="straight", speed=10.0)
    wall = Wall((-100.0, -12.0), (300.0, -12.0), 30.0)
    return Scene(walls=(wall,), ground_z=0.0, r_B=(50.0, 0.0, 10.0), lanes=(lane,), h_v=1.6).check()


SCENE = corridor()
PATHS = trace_paths(SCENE, R_V, max_order=1)


@test("unit vectors")
def _():
    vectors = unit_vectors([0.0, math.pi / 2], [0.0, 0.0])
    assert numpy.allclose(vectors, [[1, 0, 0], [0, 1, 0]])
    assert numpy.allclose(unit_vectors(0.3, math.pi / 2), [[0, 0, 1]])
    assert numpy.allclose(numpy.linalg.norm(unit_vectors([0.1, 2.0, -1.0], [0.3, -0.2, 0.0]), axis=1), 1)


@test("compensation rotates the arrival azimuths only")
def _():
    raw = ChannelEstimate.from_paths(PATHS, varpi=0.4, clock_offset=20e-9)
    assert not raw.compensated
    est = compensate(raw, 0.4, 18e-9)
    assert est.compensated
    assert est.t_off0 == 18e-9
    assert numpy.allclose(est.theta_az, [path.theta_az for path in PATHS])
    assert numpy.array_equal(est.t, raw.t)
    assert numpy.array_equal(est.phi_az, raw.phi_az)
    back = uncompensate(est, 0.4)
    assert numpy.allclose(numpy.exp(1j * back.theta_az), numpy.exp(1j * raw.theta_az))
    with raises(CompensationError):
        compensate(est, 0.4, 0.0)
    with raises(CompensationError):
        uncompensate(raw, 0.4)
    with raises(CompensationError):
        direction_vectors(raw)


@test("absolute estimate and received power")
def _():
    raw = ChannelEstimate.from_paths(PATHS, varpi=0.0, clock_offset=20e-9)
    assert numpy.allclose(absolute_estimate(raw, 20e-9).t, [path.t for path in PATHS])
    assert numpy.allclose(received_dbm(raw, 45.0), 45.0 + 20 * numpy.log10(numpy.abs(raw.alpha)))


@test("closest approach of two rays")
def _():
    origin, x_axis, y_axis = numpy.zeros(3), numpy.array([1.0, 0, 0]), numpy.array([0, 1.0, 0])
    s, u, gap = closest_approach(origin, x_axis, numpy.array([5.0, 5, 0]), -y_axis)
    assert math.isclose(s, 5.0)
    assert math.isclose(u, 5.0)
    assert math.isclose(gap, 0.0, abs_tol=1e-12)
    s, u, gap = closest_approach(origin, x_axis, numpy.array([0.0, 1, 2]), y_axis)
    assert math.isclose(gap, 2.0)
    assert closest_approach(origin, x_axis, numpy.ones(3), x_axis) is None


@test("path selection keeps a consistent reflection")
def _():
    est = ChannelEstimate.from_paths(PATHS)
    selection = select_paths(est, SCENE.h_v, SCENE.r_B, prior_xy=(0.0, 0.0))
    assert list(selection.selected) == [0, 1]
    assert math.isclose(selection.d_theta[0], math.dist(R_V, SCENE.r_B) / 2)
    assert math.isclose(selection.d_theta[1], math.dist(R_V, BOUNCE), rel_tol=1e-6)


@test("path selection drops a reflection inconsistent with the prior")
def _():
    est = ChannelEstimate.from_paths(PATHS)
    with raises(InsufficientPaths) as error:
        select_paths(est, SCENE.h_v, SCENE.r_B, prior_xy=(-60.0, 0.0))
    assert "0 path(s)" in error.raised.args[0]
    params = LocalizeParams(detour_check=False)
    assert len(select_paths(est, SCENE.h_v, SCENE.r_B, params, prior_xy=(-60.0, 0.0)).selected) == 2


@test("path selection drops a line of sight path ending away from the prior")
def _():
    est = ChannelEstimate.from_paths(PATHS)
    with raises(InsufficientPaths) as error:
        select_paths(est, SCENE.h_v, SCENE.r_B, prior_xy=(0.0, 8.0))
    assert "1 path(s)" in error.raised.args[0]
    assert len(select_paths(est, SCENE.h_v, SCENE.r_B, prior_xy=(0.0, 4.0)).selected) == 2


@test("path selection drops weak paths")
def _():
    est = ChannelEstimate.from_paths(PATHS)
    with raises(InsufficientPaths) as error:
        select_paths(est, SCENE.h_v, SCENE.r_B, tx_power_dbm=-60.0)
    assert "0 path(s)" in error.raised.args[0]


@test("weights")
def _():
    assert numpy.allclose(weights([-100.0, -90.0, -95.0]), [2.0, 12.0, 7.0])
    assert numpy.allclose(weights([-80.0], eps=0.5), [0.5])
    with raises(ValueError):
        weights([])


for varpi, clock in [(0.0, 0.0), (0.4, 20e-9), (-2.5, 35.5e-9)]:

    @test("localization of an ideal estimate (ϖ={varpi}, c={clock})")
    def _(varpi=varpi, clock=clock):
        raw = ChannelEstimate.from_paths(PATHS, varpi=varpi, clock_offset=clock)
        est = compensate(raw, varpi, clock)
        result = localize(est, SCENE.r_B, SCENE.h_v, prior_xy=(1.0, -0.5))
        assert numpy.allclose(result.r_xy, R_V[:2], atol=1e-6)
        assert math.isclose(result.t_off, clock, abs_tol=1e-15)
        assert list(result.selected) == [0, 1]
        assert math.isclose(result.d_theta[0], math.dist(R_V, SCENE.r_B) / 2, rel_tol=1e-6)
        assert math.isclose(result.d_theta[1], math.dist(R_V, BOUNCE), rel_tol=1e-6)
        assert result.residual_norm < 1e-6


@test("weighted solve argument checks")
def _():
    est = ChannelEstimate.from_paths(PATHS)
    with raises(InsufficientPaths):
        wls_localize(est, [1], [1.0], SCENE.r_B, SCENE.h_v)
    with raises(ValueError):
        wls_localize(est, [0, 1], [1.0], SCENE.r_B, SCENE.h_v)


@test("a single reflection seen twice cannot be solved")
def _():
    est = ChannelEstimate.from_paths([PATHS[1], PATHS[1]])
    with raises(GeometryDegenerate):
        wls_localize(est, [0, 1], [1.0, 1.0], SCENE.r_B, SCENE.h_v)


@test("localization parameters")
def _():
    assert LocalizeParams().check() == LocalizeParams()
    for bad in (dict(weight_eps=0.0), dict(detour_tol=0.0), dict(los_tol=-1.0)):
        with raises(ValueError):
            LocalizeParams(**bad).check()


@test("a clock offset shifts the ranges used by the selection")
def _():
    raw = ChannelEstimate.from_paths(PATHS, varpi=0.0, clock_offset=30e-9)
    est = compensate(raw, 0.0, 30e-9)
    selection = select_paths(est, SCENE.h_v, SCENE.r_B, prior_xy=(0.0, 0.0))
    assert math.isclose(selection.d_theta[0], SPEED_OF_LIGHT * PATHS[0].t / 2)


def two_walls(r_B=(50.0, 0.0, 10.0), south=-12.0, north=15.0):
    lane = Lane([(0.0, 0.0), (100.0, 0.0)], name="straight", speed=10.0)
    walls = (Wall((-200.0, south), (300.0, south), 60.0), Wall((-200.0, north), (300.0, north), 60.0))
    return Scene(walls=walls, ground_z=0.0, r_B=r_B, lanes=(lane,), h_v=1.6).check()


TWO_WALLS = two_walls()
TWO_WALL_PATHS = trace_paths(TWO_WALLS, R_V, max_order=1)


def noisy_estimate():
    """Compensated estimate with perturbed reflection angles and delays"""
    est = ChannelEstimate.from_paths(TWO_WALL_PATHS)
    reflected = numpy.array([path.order > 0 for path in TWO_WALL_PATHS])
    d_az = numpy.where(reflected, [0.01, -0.015, 0.02][: len(reflected)], 0.0)
    d_t = numpy.array([2e-10, -1e-10, 3e-10][: len(reflected)])
    return est._replace(theta_az=est.theta_az + d_az, t=est.t + d_t)


def weighted_cost(est, w, r_B, h_v, unknowns):
    """Σ w·|r_v + d·ϑ - r_B - (c·t + c·t_off - d)·φ|², d = 0 for line of sight paths"""
    directions = direction_vectors(est)
    los = numpy.linalg.norm(directions.dod + directions.doa, axis=1) <= 0.02
    d = numpy.zeros(est.n_paths)
    d[~los] = unknowns[3:]
    r_v = numpy.array([unknowns[0], unknowns[1], h_v])
    ranges = SPEED_OF_LIGHT * numpy.asarray(est.t) + unknowns[2] - d
    residual = r_v + d[:, None] * directions.doa - numpy.asarray(r_B) - ranges[:, None] * directions.dod
    return float(numpy.sum(numpy.asarray(w) * numpy.sum(residual**2, axis=1)))


@test("the weighted solve is invariant to a common weight scale")
def _():
    est = noisy_estimate()
    assert est.n_paths == 3
    w = numpy.array([3.0, 5.0, 9.0])
    result = wls_localize(est, [0, 1, 2], w, TWO_WALLS.r_B, TWO_WALLS.h_v)
    scaled = wls_localize(est, [0, 1, 2], 7.5 * w, TWO_WALLS.r_B, TWO_WALLS.h_v)
    assert numpy.allclose(scaled.r_xy, result.r_xy, rtol=0, atol=1e-10)
    assert math.isclose(SPEED_OF_LIGHT * scaled.t_off, SPEED_OF_LIGHT * result.t_off, abs_tol=1e-10)
    assert numpy.allclose(scaled.d_theta, result.d_theta, rtol=0, atol=1e-10)
    assert math.isclose(scaled.residual_norm, math.sqrt(7.5) * result.residual_norm, rel_tol=1e-9)


@test("the weighted solve minimizes the weighted residual")
def _():
    est = noisy_estimate()
    w = numpy.array([3.0, 5.0, 9.0])
    result = wls_localize(est, [0, 1, 2], w, TWO_WALLS.r_B, TWO_WALLS.h_v)
    directions = direction_vectors(est)
    los = numpy.linalg.norm(directions.dod + directions.doa, axis=1) <= 0.02
    assert los.sum() == 1
    unknowns = numpy.concatenate((result.r_xy, [SPEED_OF_LIGHT * result.t_off], result.d_theta[~los]))
    best = weighted_cost(est, w, TWO_WALLS.r_B, TWO_WALLS.h_v, unknowns)
    assert best > 0
    assert math.isclose(best, result.residual_norm**2, rel_tol=1e-9)
    for i in range(len(unknowns)):
        for delta in (-1e-3, 1e-3):
            moved = unknowns.copy()
            moved[i] += delta
            assert weighted_cost(est, w, TWO_WALLS.r_B, TWO_WALLS.h_v, moved) >= best


@test("second order paths with a long detour never survive the selection")
def _():
    scene = default_scene()
    rng = numpy.random.default_rng(11)
    checked = 0
    for _ in range(40):
        lane = scene.lanes[rng.integers(len(scene.lanes))]
        x, y = lane.point(rng.uniform(0.0, lane.length))
        r_v = numpy.array([x, y, scene.h_v])
        paths = trace_paths(scene, r_v, max_order=2)
        est = ChannelEstimate.from_paths(paths)
        direct = math.dist(r_v, scene.r_B)
        for k, path in enumerate(paths):
            if path.order == 0:
                kept = select_paths(est.subset([k, k]), scene.h_v, scene.r_B, tx_power_dbm=100.0, prior_xy=(x, y))
                assert len(kept.selected) == 2
            if path.order != 2 or path.length - direct <= 10.0:
                continue
            checked += 1
            with raises(InsufficientPaths) as error:
                select_paths(est.subset([k, k]), scene.h_v, scene.r_B, tx_power_dbm=100.0, prior_xy=(x, y))
            assert "0 path(s)" in error.raised.args[0]
    assert checked > 0


@test("ideal estimates of random scenes are inverted exactly")
def _():
    rng = numpy.random.default_rng(5)
    solved = 0
    for _ in range(100):
        r_B = (rng.uniform(-10.0, 10.0), rng.uniform(-3.0, 3.0), rng.uniform(5.0, 15.0))
        scene = two_walls(r_B, south=-rng.uniform(10.0, 20.0), north=rng.uniform(10.0, 20.0))
        r_v = numpy.array([rng.uniform(20.0, 80.0), rng.uniform(-8.0, 8.0), scene.h_v])
        paths = trace_paths(scene, r_v, max_order=1)
        if len(paths) < 2:
            continue
        varpi, clock = rng.uniform(-math.pi, math.pi), rng.uniform(0.0, 50e-9)
        est = compensate(ChannelEstimate.from_paths(paths, varpi=varpi, clock_offset=clock), varpi, clock)
        result = localize(est, scene.r_B, scene.h_v, prior_xy=r_v[:2])
        assert numpy.linalg.norm(result.r_xy - r_v[:2]) < 1e-6
        assert abs(result.t_off - clock) < 1e-12
        solved += 1
    assert solved >= 90
