"""Exact-engine tests: dense Liouvillian vs the symmetric-sector solver."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ionsync.exact import (
    DenseObservables,
    MinimalModel,
    SymmetricSector,
    build_dense,
    dense_equator_state,
    dense_ground_state,
    dense_observables,
    evolve_dense,
    minimal_evolve_state,
    minimal_solve,
    minimal_steady_state,
    minimal_to_spinspin,
    rotation_superop,
    steady_state_dense,
    suggest_dt,
)
from ionsync.spinspin import SpinSpinModel, collective_rate

FULL_MODEL = MinimalModel(n=3, gamma_c=1.3, nbar=0.45, w=0.8,
                          gamma_sp=0.2, gamma_deph=0.35)


def random_spinspin(n, seed, hermitian_j=True):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    gm = a @ a.conj().T
    b2 = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    gp = 0.1 * (b2 @ b2.conj().T)
    j = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    j = 0.5 * (j + j.conj().T)
    np.fill_diagonal(j, 0.0)
    f = np.zeros((n, 1), dtype=complex)
    return SpinSpinModel(
        n_sigma=n, b=rng.normal(size=n), j=j, gamma_minus=gm, gamma_plus=gp,
        gamma_31=0.3, gamma_13=0.1, gamma_d=0.2, gamma_w=0.0, w=0.4,
        gamma_c=collective_rate(gm, gp), f=f, kappa=np.array([1.0]),
        nbar=np.array([0.0]), delta_tilde=np.array([0.0]))


def test_minimal_model_validation():
    with pytest.raises(ValueError, match="at least one spin"):
        MinimalModel(n=0, gamma_c=1.0, nbar=0.0, w=0.0)
    with pytest.raises(ValueError, match="nbar"):
        MinimalModel(n=2, gamma_c=1.0, nbar=-0.1, w=0.0)


def test_minimal_to_spinspin_embedding():
    m = MinimalModel(n=4, gamma_c=0.7, nbar=1.2, w=2.0,
                     gamma_sp=0.05, gamma_deph=0.6)
    model = minimal_to_spinspin(m)
    assert model.n_sigma == 4
    assert_allclose(model.b, 0.0, atol=1e-14)
    assert_allclose(model.j, 0.0, atol=1e-14)
    assert_allclose(model.gamma_minus,
                    0.5 * m.gamma_c * (1 + m.nbar) * np.ones((4, 4)),
                    rtol=1e-12)
    assert_allclose(model.gamma_plus,
                    0.5 * m.gamma_c * m.nbar * np.ones((4, 4)), rtol=1e-12)
    assert_allclose(model.gamma_c, m.gamma_c, rtol=1e-12)
    assert model.gamma_31 == m.gamma_sp
    assert model.gamma_13 == 0.0
    assert model.gamma_d == m.gamma_deph
    assert model.w == m.w


def test_sector_dimension_and_lookup():
    for n, want in ((1, 4), (2, 10), (3, 20), (5, 56)):
        sector = SymmetricSector(n)
        assert sector.dim == want
        assert sector.dim == math.comb(n + 3, 3)
        assert np.all(sector.tuples.sum(axis=1) == n)


def test_product_state_observables():
    rng = np.random.default_rng(11)
    v = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho1 = v @ v.conj().T
    rho1 /= np.trace(rho1).real
    # q over (|e><e|, |e><g|, |g><e|, |g><g|); basis order (g, e)
    q = [rho1[1, 1], rho1[1, 0], rho1[0, 1], rho1[0, 0]]
    n = 6
    sector = SymmetricSector(n)
    c = sector.product_state(q)
    assert_allclose(sector.trace(c), 1.0, rtol=1e-12)
    sz, jp, pm, pp = sector.observables(c)
    assert_allclose(sz, (q[0] - q[3]).real, rtol=1e-12)
    assert_allclose(jp, n * q[2], rtol=1e-12)
    assert_allclose(pm, q[2] * q[1], rtol=1e-12)
    assert_allclose(pp, q[2] ** 2, rtol=1e-12)
    assert sector.hermiticity_defect(c) < 1e-12


def test_equator_state_matches_dense():
    n = 3
    sector = SymmetricSector(n)
    c = sector.equator_state()
    got = sector.observables(c)
    want = dense_observables(n, dense_equator_state(n))
    for g, w_ in zip(got, want):
        assert_allclose(g, w_, atol=1e-13)
    # per-spin <sy> = 2 Im<J+>/n = +1 after the pulse convention
    assert_allclose(2 * got[1].imag / n, 1.0, rtol=1e-12)


def test_dense_vs_sector_evolution():
    m = FULL_MODEL
    sector = SymmetricSector(m.n)
    gen = sector.minimal_generator(m)
    dt = suggest_dt(m, gen)
    liou = build_dense(minimal_to_spinspin(m))
    for start in ("ground", "equator"):
        if start == "ground":
            c0, v0 = sector.ground_state(), dense_ground_state(m.n)
        else:
            c0, v0 = sector.equator_state(), dense_equator_state(m.n)
        res_s = minimal_solve(m, t_final=2.0, n_samples=8, dt=dt, state0=c0,
                              sector=sector, gen=gen)
        res_d, _ = evolve_dense(liou, v0, t_final=2.0, n_samples=8, dt=dt)
        assert_allclose(res_s.times, res_d.times, rtol=1e-15)
        assert_allclose(res_s.sz, res_d.sz, rtol=1e-9, atol=1e-11)
        assert_allclose(res_s.jplus, res_d.jplus, rtol=1e-9, atol=1e-11)
        assert_allclose(res_s.pair_pm, res_d.pair_pm, rtol=1e-9, atol=1e-11)
        assert_allclose(res_s.pair_pp, res_d.pair_pp, rtol=1e-9, atol=1e-11)
        assert res_s.trace_defect < 1e-10
        assert res_d.trace_defect < 1e-10
        assert res_s.hermiticity_defect < 1e-10
        assert res_d.hermiticity_defect < 1e-10


def test_single_spin_steady_inversion():
    m = MinimalModel(n=1, gamma_c=0.9, nbar=0.6, w=1.7)
    up = m.w + m.gamma_c * m.nbar
    down = m.gamma_c * (1.0 + m.nbar)
    want = (up - down) / (up + down)
    _, _, series = minimal_steady_state(m, rel_tol=1e-11)
    assert_allclose(series.sz[-1], want, rtol=1e-8)


def test_dense_pump_only_reaches_pure_excited():
    m = MinimalModel(n=1, gamma_c=0.0, nbar=0.0, w=1.0)
    liou = build_dense(minimal_to_spinspin(m))
    rho_vec, mult = steady_state_dense(liou)
    assert mult == 1
    rho = rho_vec.reshape((2, 2), order="F")
    assert_allclose(rho, np.diag([0.0, 1.0]), atol=1e-10)
    assert_allclose(np.trace(rho @ rho).real, 1.0, atol=1e-10)


def test_dense_random_model_trace_and_hermiticity():
    model = random_spinspin(3, seed=5)
    liou = build_dense(model)  # internal trace check must pass
    rng = np.random.default_rng(6)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho0 = a @ a.conj().T
    rho0 /= np.trace(rho0).real
    series, _ = evolve_dense(liou, rho0.reshape(-1, order="F"),
                             t_final=0.5, n_samples=5)
    assert series.trace_defect < 1e-10
    assert series.hermiticity_defect < 1e-10


def test_dense_steady_matches_long_evolution():
    m = MinimalModel(n=2, gamma_c=1.1, nbar=0.3, w=0.9, gamma_sp=0.15)
    liou = build_dense(minimal_to_spinspin(m))
    rho_vec, mult = steady_state_dense(liou)
    assert mult == 1
    series, v = evolve_dense(liou, dense_ground_state(2), t_final=80.0,
                             n_samples=4)
    assert_allclose(v, rho_vec, atol=1e-9)
    obs = DenseObservables(2)
    sz_ss, _, _, _ = obs(rho_vec)
    assert_allclose(series.sz[-1], sz_ss.real, atol=1e-9)


def test_dense_steady_degenerate_multiplicity():
    m = MinimalModel(n=1, gamma_c=0.0, nbar=0.0, w=0.0, gamma_deph=0.5)
    liou = build_dense(minimal_to_spinspin(m))
    with pytest.warns(UserWarning, match="degenerate"):
        _, mult = steady_state_dense(liou)
    assert mult == 2


def test_dense_swap_symmetry():
    m = MinimalModel(n=2, gamma_c=0.8, nbar=0.25, w=0.6,
                     gamma_sp=0.1, gamma_deph=0.2)
    liou = build_dense(minimal_to_spinspin(m)).matrix.toarray()
    p = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            p[2 * a + b, 2 * b + a] = 1.0
    swap = np.kron(p, p)  # vec action of rho -> P rho P
    assert_allclose(swap @ liou, liou @ swap, atol=1e-12)


def test_rotation_superop_dense():
    n = 2
    rot = rotation_superop(n)
    obs = DenseObservables(n)
    v = rot @ dense_ground_state(n)
    sz, jp, _, _ = obs(v)
    assert_allclose(sz, 0.0, atol=1e-14)
    assert_allclose(2 * jp.imag / n, 1.0, rtol=1e-14)  # <sy> = +1
    # pi/2 twice = pi pulse: ground -> fully excited
    sz2, _, _, _ = obs(rot @ v)
    assert_allclose(sz2, 1.0, rtol=1e-14)
    # <sz>_after = <sy>_before on a random state
    rng = np.random.default_rng(3)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    vec = rho.reshape(-1, order="F")
    sz_b, jp_b, _, _ = obs(vec)
    sz_a, jp_a, _, _ = obs(rot @ vec)
    assert_allclose(sz_a.real, 2 * jp_b.imag / n, rtol=1e-12)
    assert_allclose(2 * jp_a.imag / n, -sz_b.real, rtol=1e-12)


def test_sector_rotation_ground_to_equator():
    sector = SymmetricSector(5)
    c = sector.rotate_half_pi(sector.ground_state(), n_steps=2000)
    want = sector.equator_state()
    assert np.max(np.abs(c - want)) < 1e-9 * np.max(np.abs(want))


def test_sector_rotation_matches_dense_on_steady_state():
    m = FULL_MODEL
    sector, c_ss, _ = minimal_steady_state(m, rel_tol=1e-11)
    liou = build_dense(minimal_to_spinspin(m))
    v_ss, _ = steady_state_dense(liou)
    c_rot = sector.rotate_half_pi(c_ss, n_steps=4096)
    v_rot = rotation_superop(m.n) @ v_ss
    got = sector.observables(c_rot)
    want = DenseObservables(m.n)(v_rot)
    for g, w_ in zip(got, want):
        assert_allclose(g, w_, rtol=1e-6, atol=1e-8)


def test_suggest_dt_bounds():
    m = FULL_MODEL
    sector = SymmetricSector(m.n)
    gen = sector.minimal_generator(m)
    dt = suggest_dt(m, gen)
    rate = max(m.w, m.gamma_c * (1 + m.nbar), m.n * m.gamma_c,
               m.gamma_sp, m.gamma_deph)
    assert dt <= 0.01 / rate + 1e-15
    assert dt <= 2.0 / np.max(np.abs(gen.diagonal())) + 1e-15
    dead = MinimalModel(n=2, gamma_c=0.0, nbar=0.0, w=0.0)
    with pytest.raises(ValueError, match="no dynamics"):
        suggest_dt(dead, SymmetricSector(2).minimal_generator(dead))


def test_minimal_steady_matches_dense_steady():
    m = MinimalModel(n=4, gamma_c=1.0, nbar=0.5, w=2.0, gamma_sp=0.1)
    sector, c_ss, series = minimal_steady_state(m, rel_tol=1e-11)
    liou = build_dense(minimal_to_spinspin(m))
    v_ss, _ = steady_state_dense(liou)
    want = DenseObservables(4)(v_ss)
    got = sector.observables(c_ss)
    assert_allclose(got[0].real, want[0].real, atol=1e-8)
    assert_allclose(got[2].real, want[2].real, atol=1e-8)
    assert series.trace_defect < 1e-10


def test_evolve_state_returns_final_state():
    m = FULL_MODEL
    series, c = minimal_evolve_state(m, t_final=1.0, n_samples=4)
    sector = SymmetricSector(m.n)
    sz, _, _, _ = sector.observables(c)
    assert_allclose(sz.real, series.sz[-1], rtol=1e-12)
