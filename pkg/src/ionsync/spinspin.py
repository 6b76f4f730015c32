"""Phonon-mediated spin-spin rates for the reduced qubit master equation.

Each damped transverse mode, driven near its red sideband, mediates an
exchange coupling and collective raising/lowering dissipation between
the spin ions.  Eliminating mode n at detuning delta_n = omega'_n +
delta_r with damping kappa_n and occupation nbar_n gives per-mode
lorentzian weights; summing over modes yields the local field B_l, the
exchange J_lm and the collective rates Gamma±_lm.

The master equation assembled downstream is

    d mu/dt = -i [H, mu]
              + sum_lm Gamma-_lm (2 s-_m mu s+_l - s+_l s-_m mu - mu s+_l s-_m)
              + sum_lm Gamma+_lm (2 s+_l mu s-_m - s-_m s+_l mu - mu s-_m s+_l)
              + (gamma_31 / 2) sum_l D[s-_l]
              + ((w + gamma_13) / 2) sum_l D[s+_l]
              + (gamma_d / 8) sum_l D[sz_l]

with D[O] mu = 2 O mu O^dag - O^dag O mu - mu O^dag O, the repump w
acting as incoherent raising, and a fraction chi of the repump cycle
folded into gamma_d as extra dephasing.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cooling import CoolingRates
from .raman import EffectiveSpinParams, SpinPhononCoupling


@dataclass(frozen=True)
class SpinSpinModel:
    """Everything the spin-only engines need, rates in rad/s.

    ``j``, ``gamma_minus`` and ``gamma_plus`` are n_sigma x n_sigma and
    hermitian; the diagonal of ``j`` is zeroed (the exchange Hamiltonian
    runs over l != m, the diagonal physics lives in ``b``).  ``gamma_d``
    already includes the repump contribution ``gamma_w = chi w``.
    ``f``, ``kappa``, ``nbar`` and ``delta_tilde`` are kept for validity
    diagnostics.
    """

    n_sigma: int
    b: np.ndarray
    j: np.ndarray
    gamma_minus: np.ndarray
    gamma_plus: np.ndarray
    gamma_31: float
    gamma_13: float
    gamma_d: float
    gamma_w: float
    w: float
    gamma_c: float
    f: np.ndarray
    kappa: np.ndarray
    nbar: np.ndarray
    delta_tilde: np.ndarray


@dataclass(frozen=True)
class ValidityReport:
    """Adiabaticity of the phonon elimination.

    ``ratio`` compares the mode relaxation kappa_com against the total
    collective emission N_sigma Gamma_com (1 + nbar_com); the spin
    description is trustworthy when it is large.  ``detuning_over_kappa``
    lists delta_n / kappa_com per mode for locating accidental
    near-resonances.
    """

    ratio: float
    gamma_com: float
    nbar_com: float
    detuning_over_kappa: np.ndarray
    ok: bool


def collective_rate(gamma_minus: np.ndarray, gamma_plus: np.ndarray) -> float:
    """Mean collective decay Gamma_c = (2/N^2) sum_lm (Gamma- - Gamma+)."""
    n = gamma_minus.shape[0]
    return float(np.real(np.sum(gamma_minus - gamma_plus))) * 2.0 / (n * n)


def build_model(coupling: SpinPhononCoupling, rates: CoolingRates,
                params: EffectiveSpinParams, w: float, chi: float = 0.0,
                delta_r: float | None = None,
                com_only: bool = False) -> SpinSpinModel:
    """Eliminate the phonon modes and assemble the spin-only rates.

    ``delta_r`` is the Raman beatnote detuning; by default it sits on
    the red sideband of the highest (COM-like) shifted mode, making that
    mode resonant.  ``com_only`` keeps just that mode, dropping the
    off-resonant rest.  ``chi`` is the fraction of repump cycles that
    dephase without flipping the spin, added to the dephasing rate.
    """
    if w < 0:
        raise ValueError("repump rate w must be >= 0")
    if chi < 0:
        raise ValueError("chi must be >= 0")
    f = np.asarray(coupling.f, dtype=complex)
    if delta_r is None:
        delta_r = -rates.omega_shifted[0]
    delta = rates.omega_shifted + delta_r
    kappa = rates.kappa
    nbar = rates.nbar
    if com_only:
        f, delta, kappa, nbar = f[:, :1], delta[:1], kappa[:1], nbar[:1]
    lorentz = kappa**2 / 4.0 + delta**2
    if np.any(lorentz == 0.0):
        bad = int(np.argmax(lorentz == 0.0))
        raise ValueError(
            f"mode {bad} has zero damping and zero detuning; the phonon "
            f"elimination is singular there")
    if np.any(np.isnan(nbar)):
        bad = int(np.argmax(np.isnan(nbar)))
        raise ValueError(
            f"mode {bad} is heated, not cooled; fix the cooling stage or "
            f"exclude the mode before building the spin model")
    w_b = delta * (1.0 + 2.0 * nbar) / lorentz
    w_j = delta / lorentz
    w_minus = (kappa / 2.0) * (1.0 + nbar) / lorentz
    w_plus = (kappa / 2.0) * nbar / lorentz
    abs2 = np.abs(f) ** 2
    b = -abs2 @ w_b
    j = -(f * w_j[None, :]) @ f.conj().T
    np.fill_diagonal(j, 0.0)
    gamma_minus = (f * w_minus[None, :]) @ f.conj().T
    gamma_plus = (f * w_plus[None, :]) @ f.conj().T
    return SpinSpinModel(
        n_sigma=f.shape[0], b=b, j=j,
        gamma_minus=gamma_minus, gamma_plus=gamma_plus,
        gamma_31=params.gamma_31, gamma_13=params.gamma_13,
        gamma_d=params.gamma_d + chi * w, gamma_w=chi * w, w=w,
        gamma_c=collective_rate(gamma_minus, gamma_plus),
        f=f, kappa=kappa, nbar=nbar, delta_tilde=delta,
    )


def validity_check(model: SpinSpinModel) -> ValidityReport:
    """Compare mode relaxation against collective emission on resonance.

    Uses the COM-like mode (index 0): with f2 the mean squared coupling
    of the spins to it, Gamma_com = f2 / kappa_com and the figure of
    merit is kappa_com / (N_sigma Gamma_com (1 + nbar_com)).  Warns
    below 10; an uncoupled mode (f = 0) reports infinity.
    """
    kappa_com = float(model.kappa[0])
    nbar_com = float(model.nbar[0])
    f2 = float(np.mean(np.abs(model.f[:, 0]) ** 2))
    if f2 == 0.0:
        gamma_com = 0.0
        ratio = math.inf
    else:
        gamma_com = f2 / kappa_com
        ratio = kappa_com / (model.n_sigma * gamma_com * (1.0 + nbar_com))
    ok = ratio >= 10.0
    if not ok:
        warnings.warn(
            f"phonon elimination is marginal: kappa_com exceeds the "
            f"collective emission by only {ratio:.2f}x (want >= 10)",
            stacklevel=2)
    return ValidityReport(ratio=ratio, gamma_com=gamma_com, nbar_com=nbar_com,
                          detuning_over_kappa=model.delta_tilde / kappa_com,
                          ok=ok)


def model_to_json(model: SpinSpinModel, path) -> None:
    """Full dump: scalars, b, and re/im of j and Gamma±."""
    doc = {
        "n_sigma": model.n_sigma,
        "w": model.w,
        "gamma_31": model.gamma_31,
        "gamma_13": model.gamma_13,
        "gamma_d": model.gamma_d,
        "gamma_w": model.gamma_w,
        "gamma_c": model.gamma_c,
        "b": model.b.tolist(),
        "j_re": model.j.real.tolist(),
        "j_im": model.j.imag.tolist(),
        "gamma_minus_re": model.gamma_minus.real.tolist(),
        "gamma_minus_im": model.gamma_minus.imag.tolist(),
        "gamma_plus_re": model.gamma_plus.real.tolist(),
        "gamma_plus_im": model.gamma_plus.imag.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def model_to_csv(model: SpinSpinModel, path) -> None:
    """Long-format pair table: l, m, b_l, then re/im of j and Gamma±."""
    n = model.n_sigma
    ll, mm = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rows = np.column_stack([
        ll.ravel(), mm.ravel(),
        np.broadcast_to(model.b[:, None], (n, n)).ravel(),
        model.j.real.ravel(), model.j.imag.ravel(),
        model.gamma_minus.real.ravel(), model.gamma_minus.imag.ravel(),
        model.gamma_plus.real.ravel(), model.gamma_plus.imag.ravel(),
    ])
    np.savetxt(path, rows, delimiter=",",
               header="l,m,b_l,j_re,j_im,gamma_minus_re,gamma_minus_im,"
                      "gamma_plus_re,gamma_plus_im",
               comments="", fmt=["%d", "%d"] + ["%.17g"] * 7)
