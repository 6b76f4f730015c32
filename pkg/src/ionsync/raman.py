"""Effective two-level description of a far-detuned Raman transition.

Two laser legs couple the qubit states |1> and |3> to a short-lived
excited state |2> (couplings g1, g2, detunings Delta1, Delta2; |2>
decays into |1> at Gamma1 and into |3> at Gamma2).  Far off resonance
the excited state can be eliminated, leaving a two-photon Rabi coupling
between the qubit states plus weak scattering-induced decay and
dephasing.

Two independent routes compute the reduced generator on the slow
manifold and must agree entrywise:

- :func:`sw_reduce` projects the full 9x9 single-ion Liouvillian onto
  the slow operator manifold through third order in the coupling,
- :func:`closed_form_generator` evaluates the 5x5 closed-form result in
  terms of the effective parameters.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .crystal import NormalModes, lamb_dicke

# operator basis A_1..A_9 = |a><b| over (|1>, |2>, |3>), row-major in (a, b);
# the slow manifold is everything not involving a single factor of |2>
SLOW = [0, 2, 4, 6, 8]   # A1, A3, A5, A7, A9
FAST = [1, 3, 5, 7]      # A2, A4, A6, A8


@dataclass(frozen=True)
class RamanConfig:
    """Raw three-level parameters, rates in rad/s, wavevector in 1/m.

    ``k_sigma`` is the magnitude of the difference wavevector of the two
    legs projected on the out-of-plane axis; it sets the spin Lamb-Dicke
    parameters and nothing else here.
    """

    g1: complex
    g2: complex
    delta1: float
    delta2: float
    gamma1: float
    gamma2: float
    k_sigma: float

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("decay rates must be >= 0")
        if self.k_sigma <= 0:
            raise ValueError("k_sigma must be > 0")
        scale = max(abs(self.g1), abs(self.g2), self.gamma1, self.gamma2)
        delta_min = min(abs(self.delta1), abs(self.delta2))
        if scale > 0 and delta_min < 100.0 * scale:
            warnings.warn(
                f"detuning/coupling ratio {delta_min / scale:.1f} < 100; the "
                f"adiabatic elimination of the excited state is marginal",
                stacklevel=2)


@dataclass(frozen=True)
class EffectiveSpinParams:
    """Parameters of the eliminated two-level system, rad/s.

    delta_r   two-photon detuning including the differential Stark shift
    omega_r   two-photon Rabi coupling between |1> and |3>
    delta     average single-photon detuning
    gamma_31  decay |3> -> |1> from scattering on leg 2
    gamma_13  decay |1> -> |3> from scattering on leg 1
    gamma_d   pure dephasing from elastic scattering on both legs
    gamma_1x, gamma_3x
              cross-scattering amplitudes; they feed the qubit coherence
              decay in the closed-form generator but no population flow
    """

    delta_r: float
    omega_r: complex
    delta: float
    gamma_31: float
    gamma_13: float
    gamma_d: float
    gamma_1x: complex
    gamma_3x: complex


@dataclass(frozen=True)
class SpinPhononCoupling:
    """Sideband coupling f[l, n] of spin ion l to transverse mode n, rad/s."""

    f: np.ndarray


def effective_params(cfg: RamanConfig) -> EffectiveSpinParams:
    """Eliminate the excited state at second order in g/Delta."""
    d1, d2 = cfg.delta1, cfg.delta2
    if d1 == 0 or d2 == 0:
        raise ValueError("single-photon detunings must be nonzero")
    g1, g2 = complex(cfg.g1), complex(cfg.g2)
    delta = 0.5 * (d1 + d2)
    delta_r = (d1 + abs(g1) ** 2 / (4.0 * d1)) - (d2 + abs(g2) ** 2 / (4.0 * d2))
    omega_r = (g1 * np.conj(g2) / 4.0) * (1.0 / d1 + 1.0 / d2)
    denom = 4.0 * delta * delta
    return EffectiveSpinParams(
        delta_r=delta_r,
        omega_r=omega_r,
        delta=delta,
        gamma_31=cfg.gamma1 * abs(g2) ** 2 / denom,
        gamma_13=cfg.gamma2 * abs(g1) ** 2 / denom,
        gamma_d=(cfg.gamma1 * abs(g1) ** 2 + cfg.gamma2 * abs(g2) ** 2) / denom,
        gamma_1x=cfg.gamma1 * g1 * np.conj(g2) / denom,
        gamma_3x=cfg.gamma2 * g1 * np.conj(g2) / denom,
    )


def _liouvillian_split(cfg: RamanConfig):
    """Full single-ion Liouvillian as (V, l0_diagonal) in the A basis.

    l0 holds only the fast single-photon precession of the optical
    coherences; everything else, including the excited-state damping and
    the slow two-photon detuning, is the perturbation V.
    """
    g1, g2 = complex(cfg.g1), complex(cfg.g2)
    c1, c2 = np.conj(g1), np.conj(g2)
    ga, gb = cfg.gamma1, cfg.gamma2
    gsum = ga + gb
    d12 = cfg.delta1 - cfg.delta2
    i = 1j
    v = np.zeros((9, 9), dtype=complex)
    # slow rows: populations and the qubit coherences
    v[0, 4] = ga
    v[0, 1] = i * g1 / 2;  v[0, 3] = -i * c1 / 2
    v[2, 2] = -i * d12
    v[2, 1] = i * g2 / 2;  v[2, 5] = -i * c1 / 2
    v[4, 4] = -gsum
    v[4, 1] = -i * g1 / 2; v[4, 3] = i * c1 / 2
    v[4, 5] = i * c2 / 2;  v[4, 7] = -i * g2 / 2
    v[6, 6] = i * d12
    v[6, 3] = -i * c2 / 2; v[6, 7] = i * g1 / 2
    v[8, 4] = gb
    v[8, 5] = -i * c2 / 2; v[8, 7] = i * g2 / 2
    # fast rows: optical coherences with |2>
    v[1, 0] = i * c1 / 2;  v[1, 2] = i * c2 / 2;  v[1, 4] = -i * c1 / 2
    v[1, 1] = -gsum / 2
    v[3, 0] = -i * g1 / 2; v[3, 4] = i * g1 / 2;  v[3, 6] = -i * g2 / 2
    v[3, 3] = -gsum / 2
    v[5, 2] = -i * g1 / 2; v[5, 4] = i * g2 / 2;  v[5, 8] = -i * g2 / 2
    v[5, 5] = -gsum / 2
    v[7, 4] = -i * c2 / 2; v[7, 6] = i * c1 / 2;  v[7, 8] = i * c2 / 2
    v[7, 7] = -gsum / 2
    l0 = np.zeros(9, dtype=complex)
    l0[1] = -i * cfg.delta1
    l0[3] = +i * cfg.delta1
    l0[5] = +i * cfg.delta2
    l0[7] = -i * cfg.delta2
    return v, l0


def sw_reduce(cfg: RamanConfig) -> np.ndarray:
    """Project the 9x9 Liouvillian onto the slow manifold, third order.

    The slow coordinates, in order, are (|1><1|, |1><3|, |2><2|, |3><1|,
    |3><3|).  With P/Q the slow/fast blocks of V and l0 the fast
    precession, the reduced generator is

        L1 = V_PP
        L2 = - V_PQ l0^-1 V_QP
        L3 = V_PQ l0^-1 V_QQ l0^-1 V_QP - (1/2){V_PP, V_PQ l0^-2 V_QP}

    Raises ValueError when the fast block is singular (zero detuning).
    """
    v, l0 = _liouvillian_split(cfg)
    lf = l0[FAST]
    if np.any(lf == 0):
        raise ValueError("fast block is singular: both detunings must be nonzero")
    vp = v[np.ix_(SLOW, SLOW)]
    vqp = v[np.ix_(FAST, SLOW)]
    vpq = v[np.ix_(SLOW, FAST)]
    vq = v[np.ix_(FAST, FAST)]
    inv = 1.0 / lf
    l2 = -vpq @ (inv[:, None] * vqp)
    w2 = vpq @ (inv[:, None] ** 2 * vqp)
    l3 = vpq @ (inv[:, None] * (vq @ (inv[:, None] * vqp))) - 0.5 * (vp @ w2 + w2 @ vp)
    return vp + l2 + l3


def closed_form_generator(cfg: RamanConfig) -> np.ndarray:
    """Slow-manifold generator written in the effective parameters.

    Same coordinates and ordering as :func:`sw_reduce`.  Valid for
    nearly equal detunings; the two routes agree entrywise to the order
    kept in the elimination.
    """
    p = effective_params(cfg)
    denom = 4.0 * p.delta * p.delta
    g11 = cfg.gamma1 * abs(cfg.g1) ** 2 / denom
    g33 = cfg.gamma2 * abs(cfg.g2) ** 2 / denom
    g13, g31 = p.gamma_13, p.gamma_31
    orr = p.omega_r
    g1x, g3x = p.gamma_1x, p.gamma_3x
    coh = -(g13 + g31 + g11 + g33) / 2.0
    i = 1j
    l = np.array([
        [-g13,
         i * orr / 2 + (g1x - g3x) / 2,
         cfg.gamma1 - 2 * g11 - g31,
         -i * np.conj(orr) / 2 + np.conj(g1x - g3x) / 2,
         g31],
        [i * np.conj(orr) / 2 - np.conj(g1x + g3x) / 2,
         -i * p.delta_r + coh,
         -np.conj(g1x + g3x) / 2,
         0.0,
         -i * np.conj(orr) / 2 - np.conj(g1x + g3x) / 2],
        [0.0,
         0.0,
         -(cfg.gamma1 + cfg.gamma2) + 2 * g11 + g13 + g31 + 2 * g33,
         0.0,
         0.0],
        [-i * orr / 2 - (g1x + g3x) / 2,
         0.0,
         -(g1x + g3x) / 2,
         i * p.delta_r + coh,
         i * orr / 2 - (g1x + g3x) / 2],
        [g13,
         -i * orr / 2 - (g1x - g3x) / 2,
         cfg.gamma2 - g13 - 2 * g33,
         i * np.conj(orr) / 2 - np.conj(g1x - g3x) / 2,
         -g31],
    ], dtype=complex)
    return l


def spin_phonon_couplings(cfg: RamanConfig, modes: NormalModes,
                          params: EffectiveSpinParams | None = None) -> SpinPhononCoupling:
    """Red-sideband coupling of every spin ion to every transverse mode.

    f[l, n] = i Omega_R eta_n M_ln / 2 over the spin rows l of the mode
    matrix, with eta_n the spin-species Lamb-Dicke parameter at the
    difference wavevector ``cfg.k_sigma``.
    """
    if params is None:
        params = effective_params(cfg)
    eta = lamb_dicke(modes, cfg.k_sigma, "sigma")
    m_sigma = modes.matrix[modes.n_tau:, :]
    f = 0.5j * params.omega_r * eta[None, :] * m_sigma
    return SpinPhononCoupling(f=f)


def check_red_sideband(params: EffectiveSpinParams, delta_r: float) -> bool:
    """Warn if the carrier coupling is not far off-resonant.

    ``delta_r`` is the beatnote detuning actually applied (typically
    minus the highest shifted mode frequency).  Returns True when the
    hierarchy |Omega_R| << |delta_r| holds.
    """
    ok = abs(params.omega_r) < 0.1 * abs(delta_r)
    if not ok:
        warnings.warn(
            f"carrier coupling |Omega_R| = {abs(params.omega_r):.3g} rad/s is "
            f"not small against the sideband detuning {abs(delta_r):.3g} rad/s",
            stacklevel=2)
    return ok


def params_to_json(params: EffectiveSpinParams, path) -> None:
    """Dump every effective parameter in rad/s and in 2 pi x Hz."""
    def entry(x):
        if isinstance(x, complex) or np.iscomplexobj(x):
            x = complex(x)
            return {"rad_s": [x.real, x.imag],
                    "two_pi_hz": [x.real / (2 * math.pi), x.imag / (2 * math.pi)]}
        return {"rad_s": float(x), "two_pi_hz": float(x) / (2 * math.pi)}

    doc = {
        "delta_r": entry(params.delta_r),
        "omega_r": entry(params.omega_r),
        "delta": entry(params.delta),
        "gamma_31": entry(params.gamma_31),
        "gamma_13": entry(params.gamma_13),
        "gamma_d": entry(params.gamma_d),
        "gamma_1x": entry(params.gamma_1x),
        "gamma_3x": entry(params.gamma_3x),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
