"""Doppler damping and steady occupation of every transverse mode.

A laser red-detuned from a cycling transition of the coolant ions damps
each mode at a rate set by second-order scattering: the mode absorbs
(emits) sideband photons at rates proportional to the lorentzian weight
at detuning +- omega_n, summed over the coolant ions weighted by their
mode participation.  The difference of the two rates damps the mode and
their ratio fixes its steady occupation; the same response also pulls
the mode frequency.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .crystal import NormalModes, lamb_dicke


@dataclass(frozen=True)
class DopplerParams:
    """Cooling-laser parameters, all rates in rad/s, wavelength in m.

    ``u2`` is the geometric factor <u^2> for the projection of photon
    recoil on the mode axis.  It is accepted and range-checked for
    forward compatibility with recoil-heating corrections but does not
    enter any rate computed here.
    """

    gamma: float
    detuning: float
    rabi: float
    wavelength: float
    u2: float = 2.0 / 5.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")
        if not 0.0 <= self.u2 <= 1.0:
            raise ValueError("u2 must lie in [0, 1]")

    @property
    def wavevector(self) -> float:
        return 2.0 * math.pi / self.wavelength


@dataclass(frozen=True)
class CoolingRates:
    """Per-mode cooling output, aligned with the mode index.

    ``nbar`` is NaN for modes the laser heats instead of cools; those
    modes are marked in ``heating`` rather than raised as errors so that
    a partially heated spectrum can still be inspected.
    """

    omega: np.ndarray
    omega_shifted: np.ndarray
    kappa: np.ndarray
    nbar: np.ndarray
    heating: np.ndarray
    d_minus: np.ndarray
    d_plus: np.ndarray


def _coupling_matrix(modes: NormalModes, params: DopplerParams) -> np.ndarray:
    """G[m, n] = (Omega/2) eta_n M_mn over the coolant rows m."""
    eta = lamb_dicke(modes, params.wavevector, "tau")
    return 0.5 * params.rabi * eta[None, :] * modes.matrix[: modes.n_tau, :]


def cooling_rates(modes: NormalModes, params: DopplerParams) -> CoolingRates:
    """Damping rate, occupation and frequency pull of every mode.

    For each mode n, with g_mn = (Omega/2) eta_n M_mn and lorentzian
    denominators L± = Gamma^2/4 + (Delta -+ omega_n)^2:

        R±_n = sum_m g_mn^2 / L±,   D±_n = R±_n Gamma / 2,
        kappa_n = 2 (D-_n - D+_n),  nbar_n = D+_n / (D-_n - D+_n),
        omega'_n = omega_n + R-_n (Delta + omega_n) + R+_n (Delta - omega_n).
    """
    if params.detuning > 0:
        warnings.warn("cooling laser is blue detuned; expect heating",
                      stacklevel=2)
    g = _coupling_matrix(modes, params)
    g2 = np.sum(g * g, axis=0)
    det, gam = params.detuning, params.gamma
    r_minus = g2 / (gam**2 / 4.0 + (det + modes.omega) ** 2)
    r_plus = g2 / (gam**2 / 4.0 + (det - modes.omega) ** 2)
    d_minus = r_minus * gam / 2.0
    d_plus = r_plus * gam / 2.0
    kappa = 2.0 * (d_minus - d_plus)
    heating = d_minus <= d_plus
    with np.errstate(divide="ignore", invalid="ignore"):
        nbar = np.where(heating, np.nan, d_plus / (d_minus - d_plus))
    omega_shifted = (modes.omega
                     + r_minus * (det + modes.omega)
                     + r_plus * (det - modes.omega))
    return CoolingRates(omega=modes.omega.copy(), omega_shifted=omega_shifted,
                        kappa=kappa, nbar=nbar, heating=heating,
                        d_minus=d_minus, d_plus=d_plus)


def cross_coupling_ratio(modes: NormalModes, params: DopplerParams,
                         rates: CoolingRates | None = None):
    """Worst off-diagonal cooling cross-talk relative to the mode damping.

    The same scattering that damps mode n also couples mode pairs (k, n)
    through the shared coolant ions.  With S = G^T G,

        R±[k, n] = S[k, n] / (Gamma^2/4 + (Delta -+ omega_n)^2),
        D±[k, n] = R±[k, n] Gamma / 2,

    the figure of merit is max over k != n and both branches of
    |D[k, n]| / min(|kappa_k|, |kappa_n|).  Returns (ratio, (k, n)).
    Small values justify treating the modes as independently damped.
    """
    if rates is None:
        rates = cooling_rates(modes, params)
    g = _coupling_matrix(modes, params)
    s = g.T @ g
    det, gam = params.detuning, params.gamma
    denom_minus = gam**2 / 4.0 + (det + rates.omega) ** 2
    denom_plus = gam**2 / 4.0 + (det - rates.omega) ** 2
    worst = -1.0
    pair = (0, 0)
    abs_kappa = np.abs(rates.kappa)
    for d_mat in (s / denom_minus[None, :] * gam / 2.0,
                  s / denom_plus[None, :] * gam / 2.0):
        scale = np.minimum(abs_kappa[:, None], abs_kappa[None, :])
        ratio = np.abs(d_mat) / scale
        np.fill_diagonal(ratio, -np.inf)
        k, n = np.unravel_index(np.argmax(ratio), ratio.shape)
        if ratio[k, n] > worst:
            worst = float(ratio[k, n])
            pair = (int(k), int(n))
    return worst, pair


def cooling_to_csv(rates: CoolingRates, path) -> None:
    """Per-mode table: index, bare and shifted frequency, damping, occupation."""
    n = len(rates.omega)
    rows = np.column_stack([
        np.arange(n), rates.omega, rates.omega_shifted, rates.kappa, rates.nbar,
    ])
    np.savetxt(path, rows, delimiter=",",
               header="mode,omega_rad_s,omega_shifted_rad_s,kappa_rad_s,nbar",
               comments="", fmt=["%d"] + ["%.17g"] * 4)
