"""Stochastic c-number engine for large spin ensembles.

Each spin carries a classical vector (s^x, s^y, s^z) whose ensemble
averages over trajectories reproduce symmetrically ordered quantum
expectation values.  The Ito system is

    ds = A(s) dt + B(s) dW,    B B^T = 2 D(s),

with drift A and diffusion D derived from the same master equation the
exact engines integrate (see spinspin).  The engine requires real
symmetric Gamma+/- and J; the resonant sideband coupling produced by
the pipeline satisfies this by phase convention.

Trajectories are integrated in fixed chunks of 128 with a per-trajectory
counter-based RNG keyed by (seed, trajectory index), and chunk results
are reduced in chunk-index order, so results are bit-identical for any
worker count.  Diverged trajectories (non-finite or runaway components)
are dropped from the entire ensemble; if more than ``max_abort_fraction``
of the requested trajectories abort, the run fails.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .spinspin import SpinSpinModel

CHUNK_SIZE = 128
NOISE_BLOCK_STEPS = 256
DIVERGE_LIMIT = 1e3

OBSERVABLE_NAMES = ("sz", "splus_re", "splus_im", "pair_pm", "pair_pp_re")


class DivergenceError(RuntimeError):
    """Raised when too many trajectories blow up."""

    def __init__(self, message, aborted_fraction):
        super().__init__(message)
        self.aborted_fraction = aborted_fraction


@dataclass(frozen=True)
class LangevinSegment:
    """One leg of a protocol: evolve for t_final, sampling n_samples+1
    points (including t = 0 of the segment) when record is True."""

    t_final: float
    n_samples: int = 50
    record: bool = True

    def __post_init__(self):
        if self.t_final <= 0:
            raise ValueError("segment t_final must be positive")
        if self.n_samples < 1:
            raise ValueError("need at least one sample interval")


@dataclass(frozen=True)
class SegmentSeries:
    """Ensemble means and standard errors on a segment's time grid."""

    times: np.ndarray
    mean: dict
    se: dict
    steady_mean: dict | None = None
    steady_se: dict | None = None


@dataclass(frozen=True)
class LangevinResult:
    segments: tuple
    n_traj: int
    n_aborted: int
    seed: int
    dt: float
    scheme: str
    clamped_fraction: float
    neg_ratio_median: float

    @property
    def aborted_fraction(self) -> float:
        total = self.n_traj + self.n_aborted
        return self.n_aborted / total if total else 0.0


@dataclass
class _Consts:
    """Model quantities prearranged for vectorized drift/diffusion."""

    n: int
    b: np.ndarray
    j: np.ndarray
    dg_off: np.ndarray
    sg_off: np.ndarray
    damp_t: np.ndarray
    damp_z: np.ndarray
    pump: np.ndarray
    a_vec: np.ndarray
    c_t: np.ndarray
    c_z: np.ndarray
    per_spin: bool
    max_rate: float


def _require_real_symmetric(mat: np.ndarray, name: str) -> np.ndarray:
    scale = np.max(np.abs(mat))
    tol = 1e-10 * max(scale, 1e-300)
    if np.max(np.abs(np.imag(mat))) > tol:
        raise ValueError(f"{name} must be real for the c-number engine")
    real = np.real(mat).copy()
    if np.max(np.abs(real - real.T)) > tol:
        raise ValueError(f"{name} must be symmetric for the c-number engine")
    return 0.5 * (real + real.T)


def prepare(model: SpinSpinModel) -> _Consts:
    """Validate the model and precompute drift/diffusion coefficients."""
    n = model.n_sigma
    gm = _require_real_symmetric(model.gamma_minus, "gamma_minus")
    gp = _require_real_symmetric(model.gamma_plus, "gamma_plus")
    j = _require_real_symmetric(model.j, "j")
    if np.max(np.abs(np.imag(model.b))) > 0:
        raise ValueError("b must be real for the c-number engine")
    b = np.real(model.b).astype(float)
    gm_d = np.diag(gm).copy()
    gp_d = np.diag(gp).copy()
    dg_off = gm - gp
    np.fill_diagonal(dg_off, 0.0)
    sg_off = gm + gp
    np.fill_diagonal(sg_off, 0.0)
    g31, g13, gd, w = model.gamma_31, model.gamma_13, model.gamma_d, model.w
    damp_t = gm_d + gp_d + 0.5 * g31 + 0.5 * (g13 + w) + 0.5 * gd
    damp_z = 2.0 * (gm_d + gp_d) + g31 + g13 + w
    pump = (g13 + w) - (2.0 * (gm_d - gp_d) + g31)
    a_vec = g31 + 2.0 * (gm_d - gp_d) - (w + g13)
    c_t = 2.0 * (gm_d + gp_d) + g31 + (g13 + w) + gd
    c_z = 2.0 * (w + g13 + g31 + 2.0 * (gm_d + gp_d))
    per_spin = not (np.any(sg_off) or np.any(dg_off))
    r3 = np.abs(b) + np.sum(np.abs(dg_off) + np.abs(j), axis=1)
    max_rate = max(damp_t.max(), damp_z.max(), r3.max())
    return _Consts(n=n, b=b, j=j, dg_off=dg_off, sg_off=sg_off,
                   damp_t=damp_t, damp_z=damp_z, pump=pump, a_vec=a_vec,
                   c_t=c_t, c_z=c_z, per_spin=per_spin, max_rate=max_rate)


def _split(state: np.ndarray, n: int):
    return state[:, :n], state[:, n:2 * n], state[:, 2 * n:]


def _drift(c: _Consts, state: np.ndarray) -> np.ndarray:
    x, y, z = _split(state, c.n)
    gx = x @ c.dg_off
    gy = y @ c.dg_off
    jx = x @ c.j
    jy = y @ c.j
    dx = -c.damp_t * x - c.b * y + z * (gx + jy)
    dy = -c.damp_t * y + c.b * x + z * (gy - jx)
    dz = (-c.damp_z * z + c.pump
          - (x * gx + y * gy) - (x * jy - y * jx))
    return np.concatenate([dx, dy, dz], axis=1)


def drift_field(model: SpinSpinModel, state: np.ndarray) -> np.ndarray:
    """Drift A(s) for states of shape (n_traj, 3N) or (3N,)."""
    state = np.atleast_2d(np.asarray(state, dtype=float))
    out = _drift(prepare(model), state)
    return out[0] if out.shape[0] == 1 else out


def _diffusion_full(c: _Consts, state: np.ndarray, out=None) -> np.ndarray:
    k = state.shape[0]
    n = c.n
    x, y, z = _split(state, n)
    if out is None:
        out = np.empty((k, 3 * n, 3 * n))
    ix, iy, iz = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    zz = z[:, :, None] * z[:, None, :]
    out[:, ix, ix] = 2.0 * c.sg_off * zz
    out[:, iy, iy] = out[:, ix, ix]
    out[:, ix, iy] = 0.0
    out[:, iy, ix] = 0.0
    out[:, iz, iz] = 2.0 * c.sg_off * (x[:, :, None] * x[:, None, :]
                                       + y[:, :, None] * y[:, None, :])
    xz = -2.0 * c.sg_off * (z[:, :, None] * x[:, None, :])
    yz = -2.0 * c.sg_off * (z[:, :, None] * y[:, None, :])
    out[:, ix, iz] = xz
    out[:, iz, ix] = xz.transpose(0, 2, 1)
    out[:, iy, iz] = yz
    out[:, iz, iy] = yz.transpose(0, 2, 1)
    idx = np.arange(n)
    out[:, idx, idx] = c.c_t
    out[:, n + idx, n + idx] = c.c_t
    out[:, 2 * n + idx, 2 * n + idx] = c.c_z + 2.0 * c.a_vec * z
    out[:, idx, 2 * n + idx] = c.a_vec * x
    out[:, 2 * n + idx, idx] = c.a_vec * x
    out[:, n + idx, 2 * n + idx] = c.a_vec * y
    out[:, 2 * n + idx, n + idx] = c.a_vec * y
    return out


def _diffusion_perspin(c: _Consts, state: np.ndarray, out=None) -> np.ndarray:
    """3x3 blocks per spin, valid when Gamma+/- have no cross terms."""
    k = state.shape[0]
    n = c.n
    x, y, z = _split(state, n)
    if out is None:
        out = np.empty((k, n, 3, 3))
    out[..., 0, 0] = c.c_t
    out[..., 1, 1] = c.c_t
    out[..., 0, 1] = 0.0
    out[..., 1, 0] = 0.0
    out[..., 2, 2] = c.c_z + 2.0 * c.a_vec * z
    ax = c.a_vec * x
    ay = c.a_vec * y
    out[..., 0, 2] = ax
    out[..., 2, 0] = ax
    out[..., 1, 2] = ay
    out[..., 2, 1] = ay
    return out


def diffusion_matrix(model: SpinSpinModel, state: np.ndarray) -> np.ndarray:
    """Full noise covariance 2D(s) of shape (..., 3N, 3N)."""
    state = np.atleast_2d(np.asarray(state, dtype=float))
    out = _diffusion_full(prepare(model), state)
    return out[0] if out.shape[0] == 1 else out


def noise_transform(cov: np.ndarray):
    """Factor B with B B^T = cov (clamping negative eigenvalues to 0).

    cov may be batched over leading axes.  Returns (B, neg_ratio) where
    neg_ratio is max(0, -lambda_min)/max|lambda| per matrix, the clamp
    size logged by the integrator.  Raises on non-symmetric input.
    """
    cov = np.asarray(cov, dtype=float)
    defect = np.max(np.abs(cov - cov.swapaxes(-1, -2)))
    scale = max(float(np.max(np.abs(cov))), 1e-300)
    if defect > 1e-8 * scale:
        raise ValueError("noise covariance must be symmetric")
    lam, vec = np.linalg.eigh(cov)
    mags = np.abs(lam)
    top = np.maximum(mags[..., -1], mags[..., 0])
    neg = np.maximum(0.0, -lam[..., 0])
    neg_ratio = np.where(top > 0, neg / np.where(top > 0, top, 1.0), 0.0)
    root = np.sqrt(np.clip(lam, 0.0, None))
    b = (vec * root[..., None, :]) @ vec.swapaxes(-1, -2)
    return b, neg_ratio


def initial_states(n_spins: int, rng: np.random.Generator, n_traj: int,
                   kind: str = "ground", gaussian: bool = False) -> np.ndarray:
    """Sample (n_traj, 3N) initial spin vectors.

    "ground": s^z = -1 with transverse components +-1 (or standard
    normals with ``gaussian``), matching the symmetrized quantum moments
    of |g>.  "equator_x": ground followed by the half-pi pulse map
    (x, y, z) -> (x, -z, y), so s^y = +1 exactly.
    """
    if kind not in ("ground", "equator_x"):
        raise ValueError(f"unknown initial state '{kind}'")
    if gaussian:
        x = rng.standard_normal((n_traj, n_spins))
        y = rng.standard_normal((n_traj, n_spins))
    else:
        x = 2.0 * rng.integers(0, 2, size=(n_traj, n_spins)) - 1.0
        y = 2.0 * rng.integers(0, 2, size=(n_traj, n_spins)) - 1.0
    z = -np.ones((n_traj, n_spins))
    state = np.concatenate([x, y, z], axis=1)
    if kind == "equator_x":
        state = pulse_half_pi(state)
    return state


def pulse_half_pi(state: np.ndarray) -> np.ndarray:
    """Half-pi pulse about x: (x, y, z) -> (x, -z, y) per spin."""
    squeeze = state.ndim == 1
    state = np.atleast_2d(state)
    n = state.shape[1] // 3
    x, y, z = _split(state, n)
    out = np.concatenate([x, -z, y], axis=1)
    return out[0] if squeeze else out


def _observe(state: np.ndarray, n: int) -> np.ndarray:
    """Derived observables per trajectory, stacked (n_obs, n_traj)."""
    x, y, z = _split(state, n)
    sx = x.sum(axis=1)
    sy = y.sum(axis=1)
    sz = z.sum(axis=1)
    qx = (x * x).sum(axis=1)
    qy = (y * y).sum(axis=1)
    pairs = n * (n - 1)
    if pairs == 0:
        pm = np.zeros_like(sx)
        pp = np.zeros_like(sx)
    else:
        pm = (sx**2 + sy**2 - qx - qy) / (4.0 * pairs)
        pp = (sx**2 - qx - sy**2 + qy) / (4.0 * pairs)
    return np.stack([sz / n, sx / (2.0 * n), sy / (2.0 * n), pm, pp])


def _segment_steps(seg: LangevinSegment, dt: float):
    steps_per = max(1, math.ceil(seg.t_final / (seg.n_samples * dt)))
    dt_actual = seg.t_final / (seg.n_samples * steps_per)
    return steps_per, dt_actual


def _run_chunk(consts: _Consts, segments, pulse_after, dt, scheme, seed,
               traj_lo, traj_hi, initial, gaussian, steady, want_dump):
    """Integrate trajectories [traj_lo, traj_hi); return partial sums.

    ``steady`` is None or (recorded segment position, sample indices).
    """
    n = consts.n
    k = traj_hi - traj_lo
    gens = [np.random.Generator(np.random.Philox(key=[seed, t]))
            for t in range(traj_lo, traj_hi)]
    state = np.concatenate([initial_states(n, g, 1, initial, gaussian)
                            for g in gens], axis=0)
    alive = np.ones(k, dtype=bool)
    diffusion = _diffusion_perspin if consts.per_spin else _diffusion_full
    diff_buf = None
    staged = []  # per recorded segment: (n_obs, n_times, k)
    dump_states = [] if want_dump else None
    total_steps = sum(_segment_steps(s, dt)[0] * s.n_samples for s in segments)
    clamp = np.zeros(total_steps)
    sqrt_dt_cache = {}
    gstep = 0
    for si, seg in enumerate(segments):
        steps_per, dt_act = _segment_steps(seg, dt)
        if dt_act not in sqrt_dt_cache:
            sqrt_dt_cache[dt_act] = math.sqrt(dt_act)
        sq = sqrt_dt_cache[dt_act]
        if seg.record:
            stage = np.empty((len(OBSERVABLE_NAMES), seg.n_samples + 1, k))
            stage[:, 0, :] = _observe(state, n)
            staged.append(stage)
            if want_dump:
                states_seg = np.empty((seg.n_samples + 1, k, 3 * n))
                states_seg[0] = state
                dump_states.append(states_seg)
        noise_left = 0
        for samp in range(1, seg.n_samples + 1):
            for _ in range(steps_per):
                bad = ~np.isfinite(state).all(axis=1)
                np.logical_or(bad, np.abs(state).max(axis=1) > DIVERGE_LIMIT,
                              out=bad)
                if bad.any():
                    alive &= ~bad
                    state[bad] = 0.0
                if noise_left == 0:
                    block = min(NOISE_BLOCK_STEPS,
                                total_steps - gstep)
                    noise_buf = np.stack(
                        [g.standard_normal((block, 3 * n)) for g in gens])
                    noise_left = block
                    noise_pos = 0
                xi = noise_buf[:, noise_pos, :] * sq
                noise_pos += 1
                noise_left -= 1
                cov = diffusion(consts, state, out=diff_buf)
                diff_buf = cov
                bmat, neg = noise_transform(cov)
                clamp[gstep] = float(np.max(neg))
                if consts.per_spin:
                    xi3 = np.stack(_split(xi, n), axis=-1)
                    kick3 = np.einsum("knij,knj->kni", bmat, xi3)
                    kick = np.concatenate(
                        [kick3[..., 0], kick3[..., 1], kick3[..., 2]], axis=1)
                else:
                    kick = np.einsum("kij,kj->ki", bmat, xi)
                a0 = _drift(consts, state)
                if scheme == "weak2":
                    pred = state + dt_act * a0 + kick
                    a1 = _drift(consts, pred)
                    state = state + (0.5 * dt_act) * (a0 + a1) + kick
                else:
                    state = state + dt_act * a0 + kick
                gstep += 1
            if seg.record:
                staged[-1][:, samp, :] = _observe(state, n)
                if want_dump:
                    dump_states[-1][samp] = state
        if si in pulse_after:
            state = pulse_half_pi(state)
    bad = ~np.isfinite(state).all(axis=1)
    np.logical_or(bad, np.abs(state).max(axis=1) > DIVERGE_LIMIT, out=bad)
    alive &= ~bad
    for stage in staged:
        if not np.isfinite(stage).all():
            alive &= np.isfinite(stage).all(axis=(0, 1))
    out = {
        "n_alive": int(alive.sum()),
        "n_total": k,
        "clamp": clamp,
        "sums": [s[:, :, alive].sum(axis=2) for s in staged],
        "sumsqs": [(s[:, :, alive] ** 2).sum(axis=2) for s in staged],
    }
    if steady is not None and staged:
        rec_pos, steady_idx = steady
        window = staged[rec_pos][:, steady_idx, :][:, :, alive].mean(axis=1)
        out["steady_sum"] = window.sum(axis=1)
        out["steady_sumsq"] = (window**2).sum(axis=1)
    if want_dump:
        out["dump"] = [s[:, alive, :] for s in dump_states]
        out["dump_traj"] = traj_lo + np.flatnonzero(alive)
    return out


def _mean_se(total, total_sq, count):
    if count == 0:
        return np.full_like(total, np.nan), np.full_like(total, np.nan)
    mean = total / count
    if count < 2:
        return mean, np.full_like(total, np.nan)
    var = np.clip(total_sq - count * mean**2, 0.0, None) / (count - 1)
    return mean, np.sqrt(var / count)


def run_langevin(model: SpinSpinModel, *, n_traj: int, seed: int,
                 dt: float, t_final: float | None = None,
                 n_samples: int = 50, segments=None, pulse_after=(),
                 scheme: str = "weak2", initial: str = "ground",
                 gaussian: bool = False, steady_window=None,
                 steady_segment: int | None = None,
                 n_workers: int | None = None, dump_path=None,
                 max_abort_fraction: float = 0.01) -> LangevinResult:
    """Integrate an ensemble of c-number trajectories.

    Either give ``t_final`` (plus ``n_samples``) for a single recorded
    segment, or an explicit list of :class:`LangevinSegment`;
    ``pulse_after`` lists segment indices after which the half-pi pulse
    map is applied.  ``steady_window = (t0, t1)`` averages each
    trajectory over that window of one recorded segment (the last by
    default, or ``steady_segment``) before taking ensemble statistics.
    ``dump_path`` writes raw sampled states as little-endian records
    (uint32 traj, uint32 sample, 3N float64).
    """
    if scheme not in ("weak2", "euler"):
        raise ValueError(f"unknown scheme '{scheme}'")
    if segments is None:
        if t_final is None:
            raise ValueError("give t_final or segments")
        segments = [LangevinSegment(t_final, n_samples)]
    segments = list(segments)
    if not segments:
        raise ValueError("need at least one segment")
    if not any(s.record for s in segments):
        raise ValueError("at least one segment must record")
    pulse_after = tuple(pulse_after)
    for idx in pulse_after:
        if not 0 <= idx < len(segments):
            raise ValueError("pulse_after index out of range")
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    consts = prepare(model)
    if consts.max_rate > 0 and dt > 0.1 / consts.max_rate:
        warnings.warn(
            f"dt = {dt:g} exceeds 0.1/max rate = {0.1 / consts.max_rate:g}; "
            f"the integration may be inaccurate", stacklevel=2)
    steady = None
    steady_at = None
    if steady_window is not None:
        if steady_segment is None:
            steady_segment = max(i for i, s in enumerate(segments)
                                 if s.record)
        seg = segments[steady_segment]
        if not seg.record:
            raise ValueError("steady_segment is not recorded")
        t0, t1 = steady_window
        times = np.linspace(0.0, seg.t_final, seg.n_samples + 1)
        steady_idx = np.flatnonzero((times >= t0) & (times <= t1))
        if steady_idx.size == 0:
            raise ValueError("steady window contains no samples")
        steady_at = sum(1 for s in segments[:steady_segment] if s.record)
        steady = (steady_at, steady_idx)
    chunks = [(lo, min(lo + CHUNK_SIZE, n_traj))
              for lo in range(0, n_traj, CHUNK_SIZE)]
    args = [(consts, segments, pulse_after, dt, scheme, seed, lo, hi,
             initial, gaussian, steady, dump_path is not None)
            for lo, hi in chunks]
    if n_workers and n_workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_chunk_star, args))
    else:
        results = [_run_chunk(*a) for a in args]
    # chunk-index-ordered reduction keeps sums bit-identical
    rec_segments = [s for s in segments if s.record]
    sums = [np.zeros((len(OBSERVABLE_NAMES), s.n_samples + 1))
            for s in rec_segments]
    sumsqs = [np.zeros_like(x) for x in sums]
    steady_sum = np.zeros(len(OBSERVABLE_NAMES))
    steady_sumsq = np.zeros(len(OBSERVABLE_NAMES))
    n_alive = 0
    n_total = 0
    clamp = None
    dump_records = []
    for res in results:
        n_alive += res["n_alive"]
        n_total += res["n_total"]
        for i, _ in enumerate(rec_segments):
            sums[i] += res["sums"][i]
            sumsqs[i] += res["sumsqs"][i]
        if steady is not None:
            steady_sum += res["steady_sum"]
            steady_sumsq += res["steady_sumsq"]
        clamp = res["clamp"] if clamp is None else np.maximum(clamp,
                                                              res["clamp"])
        if dump_path is not None:
            dump_records.append((res["dump_traj"], res["dump"]))
    aborted = n_total - n_alive
    frac = aborted / n_total
    if frac > max_abort_fraction:
        raise DivergenceError(
            f"{aborted} of {n_total} trajectories diverged "
            f"({100 * frac:.1f}% > {100 * max_abort_fraction:.1f}%)", frac)
    if n_alive == 0:
        raise DivergenceError("no trajectory survived", 1.0)
    if dump_path is not None:
        _write_dump(dump_path, model.n_sigma, dump_records)
    series = []
    rec_pos = 0
    for seg in segments:
        if not seg.record:
            continue
        mean, se = _mean_se(sums[rec_pos], sumsqs[rec_pos], n_alive)
        times = np.linspace(0.0, seg.t_final, seg.n_samples + 1)
        steady_mean = steady_se = None
        if steady is not None and rec_pos == steady_at:
            sm, ss = _mean_se(steady_sum, steady_sumsq, n_alive)
            steady_mean = dict(zip(OBSERVABLE_NAMES, sm))
            steady_se = dict(zip(OBSERVABLE_NAMES, ss))
        series.append(SegmentSeries(
            times=times,
            mean=dict(zip(OBSERVABLE_NAMES, mean)),
            se=dict(zip(OBSERVABLE_NAMES, se)),
            steady_mean=steady_mean, steady_se=steady_se))
        rec_pos += 1
    clamped_fraction = float(np.mean(clamp > 0.0)) if clamp.size else 0.0
    neg_median = float(np.median(clamp)) if clamp.size else 0.0
    return LangevinResult(
        segments=tuple(series), n_traj=n_alive, n_aborted=aborted,
        seed=seed, dt=dt, scheme=scheme,
        clamped_fraction=clamped_fraction, neg_ratio_median=neg_median)


def _run_chunk_star(args):
    return _run_chunk(*args)


def _write_dump(path, n_spins, dump_records):
    rec_dtype = np.dtype([("traj", "<u4"), ("sample", "<u4"),
                          ("state", "<f8", (3 * n_spins,))])
    with open(path, "wb") as fh:
        for traj_idx, seg_states in dump_records:
            for states in seg_states:
                n_t, k, _ = states.shape
                rec = np.empty(n_t * k, dtype=rec_dtype)
                rec["traj"] = np.repeat(traj_idx[None, :], n_t, axis=0).ravel()
                rec["sample"] = np.repeat(np.arange(n_t, dtype=np.uint32), k)
                rec["state"] = states.reshape(n_t * k, -1)
                rec.tofile(fh)


def series_to_csv(series: SegmentSeries, path) -> None:
    names = list(series.mean)
    header = "t," + ",".join(f"{n}_mean,{n}_se" for n in names)
    cols = [series.times]
    for n in names:
        cols.append(series.mean[n])
        cols.append(series.se[n])
    np.savetxt(path, np.column_stack(cols), delimiter=",",
               header=header, comments="", fmt="%.17g")
