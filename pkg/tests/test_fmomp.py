#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

import math

import numpy
from ward import fixture, raises, test

from mmtrack.fmomp.complexity import DEFAULT_DIMS, Dims, Method, op_count
from mmtrack.fmomp.dictionary import (
    Resolutions,
    angular_grid,
    build_full_dictionaries,
    full_window,
    reduce_dictionaries,
)
from mmtrack.fmomp.factors import (
    OracleTooLarge,
    compute_factors,
    dense_atom,
    direct_column,
    khatri_rao_atom,
)
from mmtrack.fmomp.tracker import (
    ChannelEstimate,
    DegenerateWindow,
    InitTooLarge,
    SupportSet,
    build_coarse_dictionaries,
    fmomp_track,
    momp_init,
    oracle_support,
    pursuit,
    raw_estimate,
    rebase_support,
)
from mmtrack.phy.array import ArrayGeometry, ArrayPair, direction_from_frequencies
from mmtrack.phy.channel import build_taps, measure
from mmtrack.phy.codebook import make_codebooks
from mmtrack.phy.pilots import pilot_matrix
from mmtrack.phy.radio import RadioConfig
from mmtrack.world.tracer import Path

CFG = RadioConfig(n_taps=4)
GEOMS = ArrayPair(ArrayGeometry(4, 4), ArrayGeometry(2, 2))
RESOLUTIONS = Resolutions(delay=0.5e-9, angle_deg=10.0)
ALPHA = 2e-6 * (0.6 - 0.8j)


def path_at(values, alpha=ALPHA, bs_yaw=0.0):
    """Path whose delay and spatial frequencies are the given (delay, aod_par, aod_perp, aoa_par, aoa_perp)"""
    t, *psi = values
    phi_az, phi_el = direction_from_frequencies(psi[0], psi[1], bs_yaw)
    theta_az, theta_el = direction_from_frequencies(psi[2], psi[3])
    return Path(alpha, t, float(theta_az), float(theta_el), float(phi_az), float(phi_el), 1)


def measurements(paths, seed=1, M=8, window=0.0):
    taps = build_taps(paths, 0.0, window, CFG, GEOMS)
    codebook = make_codebooks(None, M, GEOMS, seed=seed, n_streams=2)
    return measure(taps, codebook, pilot_matrix(8, 2, CFG.n_taps), CFG, GEOMS, window=window, noise=False)


class Instance:
    def __init__(self):
        self.full = build_full_dictionaries(CFG, RESOLUTIONS)
        self.index = (3, 7, 4, 6, 3)
        self.path = path_at(self.full.values(self.index))
        self.meas = measurements([self.path])


@fixture
def instance():
    return Instance()


@test("angular grid")
def _():
    grid = angular_grid(0.3)
    assert numpy.allclose(grid, [-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9])
    assert grid[len(grid) // 2] == 0


@test("full dictionaries")
def _(inst=instance):
    full = inst.full
    assert full.sizes == (8, 11, 11, 11, 11)
    assert math.isclose(full.delay[1], 0.5e-9)
    assert math.isclose(full.aod_par[6], math.sin(math.radians(10)))
    assert full.nearest(0, 1.6e-9) == 3
    assert full.pulses([0, 2]).shape == (2, 4)
    assert full.steering(1, GEOMS.tx, [0, 1, 2]).shape == (4, 3)
    assert full.steering(4, GEOMS.rx).shape == (2, 11)
    with raises(ValueError):
        Resolutions(delay=0.0).check()


@test("tracking windows")
def _(inst=instance):
    full = inst.full
    windows = reduce_dictionaries(full, [(4, 5, 5, 5, 5), (0, 10, 5, 5, 5)], 2)
    assert windows[0].sizes == (5, 5, 5, 5, 5)
    assert list(windows[0].delay) == [2, 3, 4, 5, 6]
    assert windows[1].sizes == (3, 3, 5, 5, 5)
    assert list(windows[1].aod_par) == [8, 9, 10]
    assert windows[0].local((4, 5, 5, 5, 5)) == [2, 2, 2, 2, 2]
    assert windows[1].global_index([0, 2, 0, 0, 0]) == (0, 10, 3, 3, 3)
    per_dim = reduce_dictionaries(full, [(4, 5, 5, 5, 5)], (0, 1, 2, 3, 0))
    assert per_dim[0].sizes == (1, 3, 5, 7, 1)
    assert full_window(full).sizes == full.sizes
    with raises(ValueError):
        reduce_dictionaries(full, [(8, 0, 0, 0, 0)], 1)
    with raises(ValueError):
        reduce_dictionaries(full, [(0, 0, 0, 0, 0)], (1, 1))


@test("factored, dense, Khatri-Rao and explicit atoms agree")
def _(inst=instance):
    full, meas = inst.full, inst.meas
    window = reduce_dictionaries(full, [inst.index], 2)[0]
    cache = compute_factors(window, meas, full)
    Q, N_s, M = cache.shape
    assert (Q, N_s, M) == (8, 2, 8)
    rng = numpy.random.default_rng(0)
    for _ in range(5):
        local = [int(rng.integers(size)) for size in window.sizes]
        index = window.global_index(local)
        atom = cache.atom(local)
        assert atom.shape == (cache.atom_size,)
        assert numpy.allclose(atom, dense_atom(meas, full, index))
        assert numpy.allclose(atom, khatri_rao_atom(cache, local))
        block = Q * N_s
        for m in (0, M - 1):
            assert numpy.allclose(atom[m * block : (m + 1) * block], direct_column(meas, m, full, index))


@test("candidate atoms sweep one dimension")
def _(inst=instance):
    full, meas = inst.full, inst.meas
    window = reduce_dictionaries(full, [inst.index], 2)[0]
    cache = compute_factors(window, meas, full)
    local = [1, 2, 3, 4, 0]
    for k in range(5):
        atoms = cache.candidate_atoms(local, k)
        assert atoms.shape == (window.sizes[k], cache.atom_size)
        for i in range(window.sizes[k]):
            position = list(local)
            position[k] = i
            assert numpy.allclose(atoms[i], cache.atom(position))


@test("delay scores match a brute force correlation")
def _(inst=instance):
    full, meas = inst.full, inst.meas
    window = reduce_dictionaries(full, [inst.index], 1)[0]
    cache = compute_factors(window, meas, full)
    residual = meas.gamma
    corr, norms = cache.delay_scores(residual, 1)
    assert corr.shape == (3, 3, 3, 3)
    for position in numpy.ndindex(*corr.shape):
        atom = cache.atom([1, *position])
        assert math.isclose(corr[position], abs(atom.conj() @ residual), rel_tol=1e-9, abs_tol=1e-20)
        assert math.isclose(norms[position], numpy.linalg.norm(atom), rel_tol=1e-9)


@test("dense measurement matrix size limit")
def _(inst=instance):
    big = inst.meas._replace(geoms=ArrayPair(ArrayGeometry(16, 16), ArrayGeometry(4, 4)))
    with raises(OracleTooLarge):
        direct_column(big, 0, inst.full, inst.index)


@test("tracking keeps an exact support")
def _(inst=instance):
    prev = SupportSet((inst.index,), numpy.array([0j]), 0.0)
    estimate, support = fmomp_track(inst.meas, prev, inst.full, 2, 1, 2)
    assert support.indices == (inst.index,)
    assert numpy.allclose(support.gains, [ALPHA])
    assert estimate.n_paths == 1
    assert math.isclose(estimate.t[0], inst.path.t)
    assert math.isclose(estimate.phi_az[0], inst.path.phi_az, abs_tol=1e-9)
    assert math.isclose(estimate.theta_el[0], inst.path.theta_el, abs_tol=1e-9)


for step in (1, -1, 2):

    @test("tracking recovers a path that moved by {step} delay cells")
    def _(inst=instance, step=step):
        start = list(inst.index)
        start[0] += step
        prev = SupportSet((tuple(start),), numpy.array([0j]), 0.0)
        _, support = fmomp_track(inst.meas, prev, inst.full, 2, 1, 1)
        assert support.indices == (inst.index,)
        assert numpy.allclose(support.gains, [ALPHA])


@test("tracking two paths")
def _(inst=instance):
    full = inst.full
    second = (5, 3, 6, 4, 7)
    paths = [inst.path, path_at(full.values(second), alpha=2e-8j)]
    meas = measurements(paths, M=16)
    prev = SupportSet((inst.index, second), numpy.zeros(2, dtype=complex), 0.0)
    _, support = fmomp_track(meas, prev, full, 1, 2, 2)
    assert support.indices == (inst.index, second)
    assert numpy.allclose(support.gains, [ALPHA, 2e-8j])


@test("pursuit residuals shrink and stay orthogonal to the chosen atoms")
def _(inst=instance):
    full = inst.full
    indices = (inst.index, (5, 3, 6, 4, 7), (1, 8, 2, 5, 5))
    paths = [path_at(full.values(index), alpha=alpha) for index, alpha in zip(indices, (ALPHA, 5e-7j, -3e-7))]
    taps = build_taps(paths, 0.0, 0.0, CFG, GEOMS)
    codebook = make_codebooks(None, 16, GEOMS, seed=1, n_streams=2)
    meas = measure(taps, codebook, pilot_matrix(8, 2, CFG.n_taps), CFG, GEOMS, seed=3)
    windows = reduce_dictionaries(full, indices, 1)
    caches = [compute_factors(window, meas, full) for window in windows]
    starts = [window.local(index) for window, index in zip(windows, indices)]
    trace = []
    chosen, gains = pursuit(meas.gamma, caches, starts, 2, trace=trace)
    assert len(trace) == len(chosen) == len(gains) == 3

    scale = numpy.linalg.norm(meas.gamma)
    norms = [scale] + [numpy.linalg.norm(residual) for residual in trace]
    assert all(after <= before * (1 + 1e-12) for before, after in zip(norms, norms[1:]))
    atoms = [cache.atom(cache.window.local(index)) for cache, index in zip(caches, chosen)]
    for n, residual in enumerate(trace):
        for atom in atoms[: n + 1]:
            assert abs(atom.conj() @ residual) / numpy.linalg.norm(atom) <= 1e-8 * scale


@test("tracking refers the previous support to the new window")
def _(inst=instance):
    full = inst.full
    meas = measurements([inst.path._replace(t=inst.path.t + 1e-9)], window=1e-9)
    prev = SupportSet(((5, 7, 4, 6, 3),), numpy.array([0j]), 0.0)
    estimate, support = fmomp_track(meas, prev, full, 1, 1, 1)
    assert support.window == 1e-9
    assert support.indices == (inst.index,)
    assert math.isclose(estimate.t[0], inst.path.t + 1e-9)


@test("tracking argument checks")
def _(inst=instance):
    prev = SupportSet((inst.index,), numpy.array([0j]), 0.0)
    with raises(ValueError):
        fmomp_track(inst.meas, prev, inst.full, 2, 2, 1)
    with raises(ValueError):
        fmomp_track(inst.meas, prev, inst.full, 2, 1, 0)


@test("window with only zero atoms")
def _(inst=instance):
    silent = inst.meas._replace(F=numpy.zeros_like(inst.meas.F))
    prev = SupportSet((inst.index,), numpy.array([0j]), 0.0)
    with raises(DegenerateWindow):
        fmomp_track(silent, prev, inst.full, 1, 1, 1)


@test("coarse initial search")
def _(inst=instance):
    coarse = build_coarse_dictionaries(CFG, GEOMS)
    assert coarse.sizes == (4, 5, 5, 3, 3)
    assert numpy.allclose(coarse.aod_par, [-1, -0.5, 0, 0.5, 1])
    index = (2, 3, 1, 1, 1)
    meas = measurements([path_at(coarse.values(index))], M=12)
    support = momp_init(meas, coarse, 1, 2)
    assert support.indices == (index,)
    assert numpy.allclose(support.gains, [ALPHA])
    rebased = rebase_support(support, coarse, inst.full)
    expected = tuple(inst.full.nearest(k, value) for k, value in enumerate(coarse.values(index)))
    assert rebased.indices == (expected,)
    with raises(InitTooLarge):
        momp_init(meas, coarse, 1, 1, budget=100)
    with raises(ValueError):
        build_coarse_dictionaries(CFG, GEOMS, oversample=0)


@test("rebased supports stay distinct")
def _(inst=instance):
    coarse = build_coarse_dictionaries(CFG, GEOMS, oversample=2)
    support = SupportSet(((2, 3, 3, 1, 1), (2, 3, 3, 1, 1)), numpy.zeros(2, dtype=complex), 0.0)
    rebased = rebase_support(support, coarse, inst.full)
    assert len(set(rebased.indices)) == 2
    assert rebased.indices[1][1:] == rebased.indices[0][1:]


@test("oracle support")
def _(inst=instance):
    full = inst.full
    weak = path_at(full.values((1, 5, 5, 5, 5)), alpha=1e-8)
    support = oracle_support([weak, inst.path], full, 3, 0.0, 0.0)
    assert support.indices[0] == inst.index
    assert support.indices[1] == (1, 5, 5, 5, 5)
    assert len(set(support.indices)) == 3
    assert numpy.allclose(support.gains, [ALPHA, 1e-8, 0])
    shifted = oracle_support([inst.path], full, 1, 0.0, 0.0, offsets=(1, -1, 0, 0, 100))
    assert shifted.indices == ((4, 6, 4, 6, 10),)
    late = oracle_support([inst.path], full, 1, 0.0, 0.5e-9, window=0.5e-9)
    assert late.indices == ((2, 7, 4, 6, 3),)
    assert late.window == 0.5e-9
    with raises(ValueError):
        oracle_support([], full, 1, 0.0, 0.0)


@test("support shift to another window")
def _():
    support = SupportSet(((4, 1, 1, 1, 1), (0, 2, 2, 2, 2)), numpy.zeros(2, dtype=complex), 2e-9)
    shifted = support.shifted(1e-9, 0.5e-9, 8)
    assert shifted.indices == ((6, 1, 1, 1, 1), (2, 2, 2, 2, 2))
    assert shifted.window == 1e-9
    clipped = support.shifted(4e-9, 0.5e-9, 8)
    assert clipped.indices == ((0, 1, 1, 1, 1), (0, 2, 2, 2, 2))
    assert support.shifted(2e-9, 0.5e-9, 8).indices == support.indices


@test("support validation")
def _(inst=instance):
    with raises(ValueError):
        SupportSet(((1, 1, 1, 1, 1), (1, 1, 1, 1, 1)), numpy.zeros(2), 0.0).check(inst.full)
    with raises(ValueError):
        SupportSet(((8, 1, 1, 1, 1),), numpy.zeros(1), 0.0).check(inst.full)


@test("raw estimate of a support")
def _(inst=instance):
    support = SupportSet((inst.index,), numpy.array([ALPHA]), 1e-9)
    est = raw_estimate(support, inst.full)
    assert math.isclose(est.t[0], inst.path.t + 1e-9)
    assert math.isclose(est.theta_az[0], inst.path.theta_az, abs_tol=1e-9)
    assert math.isclose(est.phi_el[0], inst.path.phi_el, abs_tol=1e-9)
    assert not est.compensated


@test("ideal estimates of traced paths")
def _(inst=instance):
    paths = [inst.path, inst.path._replace(alpha=1e-9, t=4e-9)]
    raw = ChannelEstimate.from_paths(paths, varpi=0.5, clock_offset=1e-9, bs_yaw=0.1)
    assert not raw.compensated
    assert raw.bs_yaw == 0.1
    assert math.isclose(raw.t[1], 3e-9)
    assert math.isclose(raw.theta_az[0], inst.path.theta_az - 0.5)
    absolute = ChannelEstimate.from_paths(paths)
    assert absolute.compensated
    assert math.isclose(absolute.theta_az[0], inst.path.theta_az)
    assert raw.matrix.shape == (2, 6)
    assert math.isclose(raw.matrix[1, 0], 1e-9)
    assert raw.subset([1]).n_paths == 1
    assert math.isclose(raw.subset([1]).t[0], 3e-9)


@test("operation counts")
def _():
    dims = Dims(N_est=2, N_s=3, Q=4, N_iter=5, signal=(2, 3, 4, 5, 6), atoms=(1, 2, 3, 4, 5))
    base = 2 * 3 * 4
    assert op_count("omp", dims) == base * (2 * 1) * (3 * 2) * (4 * 3) * (5 * 4) * (6 * 5)
    assert op_count(Method.MOMP, dims) == base * 5 * 15 * (2 * 3 * 4 * 5 * 6)
    assert op_count(Method.FMOMP, dims) == base * 5 * 15 * (2 + 12 + 30)
    assert dims.N_d == 2
    with raises(ValueError):
        op_count("lasso", dims)
    with raises(ValueError):
        op_count("omp", dims._replace(Q=0))


@test("factored search is the cheapest")
def _():
    omp, momp, fmomp = (op_count(method, DEFAULT_DIMS) for method in Method)
    assert fmomp < momp < omp
    assert isinstance(omp, int)
