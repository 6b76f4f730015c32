"""Coherence-decay (fringe) readout shared by all three dynamics engines.

The protocol: start every spin in the ground state, apply a global
half-pi rotation about x (full transverse contrast), then let the
ensemble evolve under the complete model, pump included, for the
interrogation time.  The fringe envelope is |<s+>| per spin normalized
to its t=0+ value, so it starts at exactly 1; after the phase-locking
transient its log-slope is the collective decoherence rate, which the
fit window of :func:`fit_decay` isolates.

The closing half-pi pulse of the usual sequence maps the transverse
variance onto the population variance, so it needs no extra evolution:
the normalized readout variance is evaluated directly from the
transverse correlators of the late-interrogation state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exact import (DenseObservables, MinimalModel, SymmetricSector,
                    build_dense, dense_equator_state, evolve_dense,
                    minimal_evolve_state, minimal_to_spinspin)
from .langevin import LangevinSegment, run_langevin
from .spinspin import SpinSpinModel

__all__ = [
    "DecayFit", "RamseyResult", "transverse_variance_ratio",
    "variance_ratio_stderr", "fit_decay", "ramsey_minimal", "ramsey_dense",
    "ramsey_langevin", "run_ramsey", "envelope_to_csv", "summary_to_json",
]


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay rate from a log-linear least-squares fit."""

    rate: float
    r_squared: float
    t_start: float
    t_end: float
    n_points: int


@dataclass(frozen=True)
class RamseyResult:
    """Envelope, decay fit and readout statistics from one protocol run.

    ``steady`` holds the per-spin observables sz, splus_re, splus_im,
    pair_pm and pair_pp_re of the late-interrogation state;
    ``variance_ratio`` is the normalized population-readout variance
    computed from them.  ``envelope_se`` is zero for the deterministic
    engines.
    """

    engine: str
    n_spins: int
    times: np.ndarray
    envelope: np.ndarray
    envelope_se: np.ndarray
    fit: DecayFit | None
    variance_ratio: float
    steady: dict
    extras: dict = field(default_factory=dict)


def transverse_variance_ratio(n_spins: int, pair_pm: float,
                              pair_pp_re: float, splus_im: float) -> float:
    """Variance of the transverse collective spin over the coherent value.

    Takes the pair-averaged <s+_i s-_j>, Re <s+_i s+_j> (i != j) and the
    per-spin Im <s+> of the pre-readout state; the final pulse turns
    this into the population variance.  Independent spins give 1; a
    macroscopically spread phase inflates the ratio by O(N).
    """
    n = n_spins
    var = (n / 4.0 + 0.5 * n * (n - 1) * (pair_pm - pair_pp_re)
           - (n * splus_im) ** 2)
    return var / (n / 4.0)


def variance_ratio_stderr(n_spins: int, splus_im: float, se_pair_pm: float,
                          se_pair_pp_re: float, se_splus_im: float) -> float:
    """Linear error propagation for :func:`transverse_variance_ratio`."""
    n = n_spins
    d_pair = 2.0 * (n - 1)
    d_im = 8.0 * n * splus_im
    return math.sqrt((d_pair * se_pair_pm) ** 2
                     + (d_pair * se_pair_pp_re) ** 2
                     + (d_im * se_splus_im) ** 2)


def fit_decay(times, envelope, envelope_se=None, *, n_spins: int,
              gamma_c: float, w: float) -> DecayFit:
    """Least-squares slope of log(envelope) over the late-time window.

    The window starts after both the phase-locking transient (5
    collective times) and the pump transient (3 pump times), whichever
    ends later, and stops at the last sample above the noise floor (5x
    the median envelope standard error when available, else 1e-9).
    Needs at least ten samples inside the window.
    """
    times = np.asarray(times, dtype=float)
    envelope = np.asarray(envelope, dtype=float)
    t_start = 0.0
    if gamma_c > 0:
        t_start = max(t_start, 5.0 / (n_spins * gamma_c))
    if w > 0:
        t_start = max(t_start, 3.0 / w)
    floor = 1e-9
    if envelope_se is not None:
        med = float(np.median(envelope_se))
        if med > 0:
            floor = 5.0 * med
    above = np.flatnonzero(envelope > floor)
    if above.size == 0:
        raise ValueError("envelope never rises above the noise floor")
    t_end = float(times[above[-1]])
    mask = (times >= t_start) & (times <= t_end) & (envelope > 0)
    n_pts = int(mask.sum())
    if n_pts < 10:
        raise ValueError(
            f"only {n_pts} samples in the fit window [{t_start:g}, "
            f"{t_end:g}]; extend the observation time or tighten the grid")
    t = times[mask]
    y = np.log(envelope[mask])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    return DecayFit(rate=float(-slope), r_squared=r2, t_start=t_start,
                    t_end=t_end, n_points=n_pts)


def _steady_dict(n: int, sz: complex, jp: complex, pm: complex,
                 pp: complex) -> dict:
    return {
        "sz": float(np.real(sz)),
        "splus_re": float(np.real(jp)) / n,
        "splus_im": float(np.imag(jp)) / n,
        "pair_pm": float(np.real(pm)),
        "pair_pp_re": float(np.real(pp)),
    }


def _variance_ratio(n: int, steady: dict) -> float:
    return transverse_variance_ratio(n, steady["pair_pm"],
                                     steady["pair_pp_re"],
                                     steady["splus_im"])


def _normalized(mag: np.ndarray):
    scale = float(mag[0])
    if scale <= 0:
        raise ValueError("no contrast right after the pulse")
    return mag / scale, scale


def ramsey_minimal(model: MinimalModel, *, t_obs: float, n_samples: int = 200,
                   dt: float | None = None,
                   fit: bool = True) -> RamseyResult:
    """Run the protocol in the permutation-symmetric sector."""
    n = model.n
    sector = SymmetricSector(n)
    series, c_end = minimal_evolve_state(model, t_obs, n_samples, dt=dt,
                                         state0=sector.equator_state(),
                                         sector=sector)
    envelope, scale = _normalized(np.abs(series.jplus))
    steady = _steady_dict(n, *sector.observables(c_end))
    decay = fit_decay(series.times, envelope, None, n_spins=n,
                      gamma_c=model.gamma_c, w=model.w) if fit else None
    return RamseyResult(
        engine="minimal", n_spins=n, times=series.times, envelope=envelope,
        envelope_se=np.zeros_like(envelope), fit=decay,
        variance_ratio=_variance_ratio(n, steady), steady=steady,
        extras={"dt": series.dt, "initial_contrast": scale / (n / 2.0),
                "trace_defect": series.trace_defect,
                "hermiticity_defect": series.hermiticity_defect})


def ramsey_dense(model, *, t_obs: float, n_samples: int = 200,
                 dt: float | None = None, fit: bool = True) -> RamseyResult:
    """Run the protocol on the full density matrix (small spin counts)."""
    if isinstance(model, MinimalModel):
        model = minimal_to_spinspin(model)
    n = model.n_sigma
    liou = build_dense(model)
    series, v_end = evolve_dense(liou, dense_equator_state(n), t_obs,
                                 n_samples, dt=dt)
    envelope, scale = _normalized(np.abs(series.jplus))
    steady = _steady_dict(n, *DenseObservables(n)(v_end))
    decay = fit_decay(series.times, envelope, None, n_spins=n,
                      gamma_c=model.gamma_c, w=model.w) if fit else None
    return RamseyResult(
        engine="dense", n_spins=n, times=series.times, envelope=envelope,
        envelope_se=np.zeros_like(envelope), fit=decay,
        variance_ratio=_variance_ratio(n, steady), steady=steady,
        extras={"dt": series.dt, "initial_contrast": scale / (n / 2.0),
                "trace_defect": series.trace_defect,
                "hermiticity_defect": series.hermiticity_defect})


def ramsey_langevin(model: SpinSpinModel, *, n_traj: int, seed: int,
                    dt: float, t_obs: float, n_samples: int = 200,
                    steady_fraction: float = 0.25, scheme: str = "weak2",
                    n_workers: int | None = None,
                    max_abort_fraction: float = 0.01,
                    fit: bool = True) -> RamseyResult:
    """Run the protocol with the stochastic c-number engine.

    The trailing ``steady_fraction`` of the interrogation window
    provides the readout statistics, so ``t_obs`` should comfortably
    exceed the relaxation time when the variance matters.
    """
    n = model.n_sigma
    result = run_langevin(
        model, n_traj=n_traj, seed=seed, dt=dt,
        segments=[LangevinSegment(t_obs, n_samples)],
        scheme=scheme, initial="equator_x",
        steady_window=((1.0 - steady_fraction) * t_obs, t_obs),
        n_workers=n_workers, max_abort_fraction=max_abort_fraction)
    seg = result.segments[0]
    steady = dict(seg.steady_mean)
    steady_se = dict(seg.steady_se)
    v_se = variance_ratio_stderr(n, steady["splus_im"],
                                 steady_se["pair_pm"],
                                 steady_se["pair_pp_re"],
                                 steady_se["splus_im"])
    re, im = seg.mean["splus_re"], seg.mean["splus_im"]
    se_re, se_im = seg.se["splus_re"], seg.se["splus_im"]
    mag = np.hypot(re, im)
    # direction-projected error; fall back near the origin
    safe = mag > 1e-300
    se_mag = np.hypot(se_re, se_im)
    se_mag[safe] = np.hypot(re[safe] * se_re[safe],
                            im[safe] * se_im[safe]) / mag[safe]
    envelope, scale = _normalized(mag)
    envelope_se = se_mag / scale
    decay = fit_decay(seg.times, envelope, envelope_se, n_spins=n,
                      gamma_c=model.gamma_c, w=model.w) if fit else None
    return RamseyResult(
        engine="langevin", n_spins=n, times=seg.times, envelope=envelope,
        envelope_se=envelope_se, fit=decay,
        variance_ratio=_variance_ratio(n, steady), steady=steady,
        extras={"variance_ratio_se": v_se, "steady_se": steady_se,
                "initial_contrast": scale / 0.5, "n_traj": result.n_traj,
                "n_aborted": result.n_aborted, "dt": result.dt,
                "clamped_fraction": result.clamped_fraction,
                "neg_ratio_median": result.neg_ratio_median})


def run_ramsey(engine: str, model, **kwargs) -> RamseyResult:
    """Dispatch to one of the engine drivers by name."""
    drivers = {"minimal": ramsey_minimal, "dense": ramsey_dense,
               "langevin": ramsey_langevin}
    if engine not in drivers:
        raise ValueError(f"unknown engine '{engine}'; pick one of "
                         f"{sorted(drivers)}")
    return drivers[engine](model, **kwargs)


def envelope_to_csv(result: RamseyResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,envelope,stderr\n")
        for t, e, s in zip(result.times, result.envelope,
                           result.envelope_se):
            fh.write(f"{t:.17g},{e:.17g},{s:.17g}\n")


def summary_to_json(result: RamseyResult, path, extra: dict | None = None) -> None:
    """Decay fit, variance ratio and readout statistics as a JSON blob."""
    out = {
        "engine": result.engine,
        "n_spins": result.n_spins,
        "variance_ratio": result.variance_ratio,
        "steady": {k: float(v) for k, v in result.steady.items()},
    }
    if extra:
        out.update(extra)
    if result.fit is not None:
        out["decay_rate"] = result.fit.rate
        out["r_squared"] = result.fit.r_squared
        out["fit_window"] = [result.fit.t_start, result.fit.t_end]
        out["fit_points"] = result.fit.n_points
    for key, value in result.extras.items():
        if isinstance(value, (int, float, np.integer, np.floating)):
            out[key] = float(value)
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
