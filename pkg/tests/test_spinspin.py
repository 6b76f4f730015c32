import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ionsync.cooling import CoolingRates, DopplerParams, cooling_rates
from ionsync.crystal import calibrate_trap, generate_crystal, solve_normal_modes
from ionsync.raman import (
    EffectiveSpinParams,
    RamanConfig,
    SpinPhononCoupling,
    effective_params,
    spin_phonon_couplings,
)
from ionsync.spinspin import (
    SpinSpinModel,
    build_model,
    collective_rate,
    model_to_csv,
    model_to_json,
    validity_check,
)

TWO_PI = 2 * math.pi

PARAMS = EffectiveSpinParams(delta_r=0.0, omega_r=1.0, delta=1e5,
                             gamma_31=0.04, gamma_13=0.02, gamma_d=0.06,
                             gamma_1x=0.0, gamma_3x=0.0)


def synthetic_rates(omega_shifted, kappa, nbar):
    omega_shifted = np.asarray(omega_shifted, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    nbar = np.asarray(nbar, dtype=float)
    return CoolingRates(omega=omega_shifted.copy(), omega_shifted=omega_shifted,
                        kappa=kappa, nbar=nbar,
                        heating=np.zeros_like(kappa, dtype=bool),
                        d_minus=kappa, d_plus=np.zeros_like(kappa))


def test_two_spin_two_mode_brute_force():
    f = np.array([[0.3j, 0.1 + 0.2j],
                  [0.25j, -0.15 + 0.05j]])
    rates = synthetic_rates([5.0, 4.0], [0.5, 0.8], [2.0, 0.5])
    m = build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.3, chi=0.5,
                    delta_r=-5.0)
    delta = np.array([0.0, -1.0])
    kappa = np.array([0.5, 0.8])
    nbar = np.array([2.0, 0.5])
    lor = kappa**2 / 4 + delta**2
    for l in range(2):
        b = -sum(abs(f[l, n]) ** 2 * delta[n] * (1 + 2 * nbar[n]) / lor[n]
                 for n in range(2))
        assert_allclose(m.b[l], b, rtol=1e-12)
        for mm in range(2):
            gm = sum(f[l, n] * np.conj(f[mm, n]) * (kappa[n] / 2) * (1 + nbar[n]) / lor[n]
                     for n in range(2))
            gp = sum(f[l, n] * np.conj(f[mm, n]) * (kappa[n] / 2) * nbar[n] / lor[n]
                     for n in range(2))
            assert_allclose(m.gamma_minus[l, mm], gm, rtol=1e-12)
            assert_allclose(m.gamma_plus[l, mm], gp, rtol=1e-12)
            if l != mm:
                j = -sum(f[l, n] * np.conj(f[mm, n]) * delta[n] / lor[n]
                         for n in range(2))
                assert_allclose(m.j[l, mm], j, rtol=1e-12)
    assert m.j[0, 0] == 0.0 and m.j[1, 1] == 0.0
    # repump fraction chi folds into dephasing
    assert_allclose(m.gamma_d, PARAMS.gamma_d + 0.5 * 0.3, rtol=1e-15)
    assert_allclose(m.gamma_w, 0.15, rtol=1e-15)
    gc = 2.0 / 4.0 * np.real(np.sum(m.gamma_minus - m.gamma_plus))
    assert_allclose(m.gamma_c, gc, rtol=1e-12)


def test_resonant_com_only_closed_form():
    # on resonance (delta = 0) the coherent pieces vanish and
    # Gamma-_lm = 2 f_l f_m^* (1 + nbar) / kappa
    f = np.array([[0.2j], [0.15j], [0.1j]])
    rates = synthetic_rates([7.0], [0.4], [1.5])
    m = build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.0)
    assert_allclose(m.delta_tilde, [0.0], atol=1e-18)
    assert_allclose(m.b, np.zeros(3), atol=1e-18)
    assert_allclose(m.j, np.zeros((3, 3)), atol=1e-18)
    expected = 2.0 * np.outer(f[:, 0], f[:, 0].conj()) * 2.5 / 0.4
    assert_allclose(m.gamma_minus, expected, rtol=1e-12)
    # detailed balance mode by mode: Gamma+ / Gamma- = nbar / (1 + nbar)
    assert_allclose(m.gamma_plus, expected * 1.5 / 2.5, rtol=1e-12)
    # rank-one all-equal structure for uniform coupling magnitude
    w_eig = np.linalg.eigvalsh(m.gamma_minus)
    assert w_eig[-1] > 0
    assert np.all(np.abs(w_eig[:-1]) < 1e-12 * w_eig[-1])


def test_uniform_coupling_gamma_c_closed_form():
    n_sigma, n_total = 6, 19
    eta, omega_r, kappa = 0.23, 2.0, 0.04
    f = np.full((n_sigma, 1), 1j * omega_r * eta / (2 * math.sqrt(n_total)))
    rates = synthetic_rates([5.0], [kappa], [0.8])
    m = build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.0)
    assert_allclose(m.gamma_c, omega_r**2 * eta**2 / (kappa * n_total), rtol=1e-12)
    assert np.ptp(m.gamma_minus.real) < 1e-15 * m.gamma_minus.real.max()


def test_gamma_matrices_positive_semidefinite():
    rng = np.random.default_rng(11)
    f = rng.normal(size=(5, 8)) + 1j * rng.normal(size=(5, 8))
    rates = synthetic_rates(rng.uniform(3, 6, 8), rng.uniform(0.1, 1.0, 8),
                            rng.uniform(0.0, 3.0, 8))
    m = build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.1, delta_r=-4.5)
    for g in (m.gamma_minus, m.gamma_plus):
        assert np.max(np.abs(g - g.conj().T)) < 1e-13 * np.abs(g).max()
        w_eig = np.linalg.eigvalsh(g)
        assert w_eig.min() > -1e-12 * np.linalg.norm(g)


def test_gamma_c_invariances():
    rng = np.random.default_rng(3)
    f = rng.normal(size=(4, 5)) + 1j * rng.normal(size=(4, 5))
    rates = synthetic_rates(rng.uniform(3, 6, 5), rng.uniform(0.1, 1.0, 5),
                            rng.uniform(0.0, 3.0, 5))
    m = build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.0, delta_r=-4.0)
    perm = rng.permutation(4)
    mp = build_model(SpinPhononCoupling(f=f[perm]), rates, PARAMS, w=0.0,
                     delta_r=-4.0)
    assert_allclose(mp.gamma_c, m.gamma_c, rtol=1e-12)
    ms = build_model(SpinPhononCoupling(f=3.0 * f), rates, PARAMS, w=0.0,
                     delta_r=-4.0)
    assert_allclose(ms.gamma_c, 9.0 * m.gamma_c, rtol=1e-12)


def _pipeline_model(n_sigma, n_tau, w=0.0, com_only=False, eta_com=0.2254):
    crystal = generate_crystal(n_sigma, n_tau, 10e-6)
    k_z = calibrate_trap(crystal, TWO_PI * 2e6)
    modes = solve_normal_modes(crystal.with_k_z(k_z))
    doppler = DopplerParams(gamma=TWO_PI * 41.4e6, detuning=-math.pi * 41.4e6,
                            rabi=TWO_PI * 10e6, wavelength=280.3e-9)
    rates = cooling_rates(modes, doppler)
    from scipy.constants import hbar
    k_sigma = eta_com / math.sqrt(hbar / (2 * modes.mass_sigma * modes.omega[0]))
    raman = RamanConfig(g1=TWO_PI * 44.7e6, g2=TWO_PI * 44.7e6,
                        delta1=TWO_PI * 230e9, delta2=TWO_PI * 230e9,
                        gamma1=TWO_PI * 27.27e6, gamma2=TWO_PI * 13.63e6,
                        k_sigma=k_sigma)
    params = effective_params(raman)
    coupling = spin_phonon_couplings(raman, modes, params)
    return build_model(coupling, rates, params, w=w, com_only=com_only)


def test_gamma_c_decreases_with_crystal_size():
    sizes = [(48, 43), (94, 75), (124, 93)]
    gcs = [_pipeline_model(*s).gamma_c for s in sizes]
    assert gcs[0] > gcs[1] > gcs[2] > 0


def test_realistic_gamma_c_scale():
    m = _pipeline_model(48, 43)
    # collective rate of order a few Hz for the 91-ion crystal
    assert 0.5 < m.gamma_c / TWO_PI < 5.0
    v = validity_check(m)
    assert v.ok and v.ratio > 10
    assert_allclose(v.detuning_over_kappa[0], 0.0, atol=1e-10)
    assert v.nbar_com == pytest.approx(m.nbar[0])


def test_com_only_matches_full_on_resonant_mode():
    full = _pipeline_model(48, 43)
    com = _pipeline_model(48, 43, com_only=True)
    assert com.f.shape[1] == 1
    assert len(com.kappa) == 1
    # the resonant mode dominates the collective rate
    assert com.gamma_c == pytest.approx(full.gamma_c, rel=0.2)


def test_validity_sentinel_for_uncoupled_mode():
    f = np.zeros((3, 1), dtype=complex)
    rates = synthetic_rates([5.0], [0.4], [1.0])
    m = build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.0)
    v = validity_check(m)
    assert math.isinf(v.ratio) and v.ok


def test_validity_warns_when_marginal():
    f = np.full((4, 1), 0.5j)
    rates = synthetic_rates([5.0], [0.3], [0.0])
    m = build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.0)
    with pytest.warns(UserWarning, match="marginal"):
        v = validity_check(m)
    assert not v.ok


def test_singular_mode_rejected():
    f = np.full((2, 1), 0.5j)
    rates = synthetic_rates([5.0], [0.0], [1.0])
    with pytest.raises(ValueError, match="singular|zero damping"):
        build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.0, delta_r=-5.0)


def test_heated_mode_rejected():
    f = np.full((2, 1), 0.5j)
    rates = CoolingRates(omega=np.array([5.0]), omega_shifted=np.array([5.0]),
                         kappa=np.array([-0.1]), nbar=np.array([np.nan]),
                         heating=np.array([True]),
                         d_minus=np.array([0.1]), d_plus=np.array([0.2]))
    with pytest.raises(ValueError, match="heated"):
        build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.0)


def test_parameter_validation():
    f = np.full((2, 1), 0.5j)
    rates = synthetic_rates([5.0], [0.4], [1.0])
    with pytest.raises(ValueError, match="w"):
        build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=-1.0)
    with pytest.raises(ValueError, match="chi"):
        build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.1, chi=-0.5)


def test_export_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    f = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    rates = synthetic_rates(rng.uniform(3, 6, 4), rng.uniform(0.1, 1.0, 4),
                            rng.uniform(0.0, 2.0, 4))
    m = build_model(SpinPhononCoupling(f=f), rates, PARAMS, w=0.2, chi=0.5,
                    delta_r=-4.0)
    jpath = tmp_path / "model.json"
    model_to_json(m, jpath)
    doc = json.loads(jpath.read_text())
    assert doc["n_sigma"] == 3
    assert_allclose(doc["gamma_c"], m.gamma_c, rtol=1e-15)
    assert_allclose(np.array(doc["j_re"]) + 1j * np.array(doc["j_im"]), m.j,
                    rtol=1e-15)
    assert_allclose(np.array(doc["gamma_plus_re"]), m.gamma_plus.real, rtol=1e-15)
    cpath = tmp_path / "model.csv"
    model_to_csv(m, cpath)
    data = np.loadtxt(cpath, delimiter=",", skiprows=1)
    assert data.shape == (9, 9)
    k = 5  # row (l=1, m=2)
    assert data[k, 0] == 1 and data[k, 1] == 2
    assert_allclose(data[k, 2], m.b[1], rtol=1e-15)
    assert_allclose(data[k, 3] + 1j * data[k, 4], m.j[1, 2], rtol=1e-15)
    assert_allclose(data[k, 5] + 1j * data[k, 6], m.gamma_minus[1, 2], rtol=1e-15)
