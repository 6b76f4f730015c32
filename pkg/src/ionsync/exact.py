"""Exact master-equation engines for the reduced spin model.

Two complementary solvers:

- a dense Liouvillian over the full 2^N Hilbert space (N <= 6), the
  ground truth every other engine is checked against, supporting the
  complete spin-spin model with arbitrary B_l, J_lm and Gamma±_lm;
- a permutation-symmetric solver for the minimal collective model,
  exact for exchange-symmetric generators and polynomial in N, good to
  hundreds of spins.

The symmetric solver expands the density matrix over symmetrized
products of the single-site operator basis Q1 = |e><e|, Q2 = |e><g|,
Q3 = |g><e|, Q4 = |g><g|.  A state is a vector of weighted coefficients
ct(n) = multinomial(n) c(n) indexed by occupation 4-tuples n with
sum(n) = N, dimension C(N+3, 3).  Exchange-symmetric generators act by
two local rules:

- sum over sites of a single-site map T:
      ct(n - e_a + e_b) += T[b, a] n_a ct(n)
- sum over ordered pairs (l != m) of site maps (phi at l, psi at m):
      ct(n - e_a - e_b + e_c + e_d)
          += phi[c, a] psi[d, b] occ ct(n),
      occ = n_a n_b for a != b, n_a (n_a - 1) for a == b.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .cooling import CoolingRates
from .raman import EffectiveSpinParams, SpinPhononCoupling
from .spinspin import SpinSpinModel, build_model

DENSE_MAX_SPINS = 6

# single-site superoperator actions on the operator basis (Q1, Q2, Q3, Q4),
# T[target, source]; L*/R* are left/right multiplication by the named operator
def _t(*entries):
    m = np.zeros((4, 4))
    for r, c in entries:
        m[r, c] = 1.0
    return m

T_L_PLUS = _t((0, 2), (1, 3))
T_L_MINUS = _t((2, 0), (3, 1))
T_R_PLUS = _t((1, 0), (3, 2))
T_R_MINUS = _t((0, 1), (2, 3))
T_L_Q1 = np.diag([1.0, 1.0, 0.0, 0.0])
T_R_Q1 = np.diag([1.0, 0.0, 1.0, 0.0])
T_L_Q4 = np.diag([0.0, 0.0, 1.0, 1.0])
T_R_Q4 = np.diag([0.0, 1.0, 0.0, 1.0])
T_MINUS_RHO_PLUS = _t((3, 0))   # s- rho s+
T_PLUS_RHO_MINUS = _t((0, 3))   # s+ rho s-
T_Z_RHO_Z = np.diag([1.0, -1.0, -1.0, 1.0])
T_IDENT = np.eye(4)
T_LX_MINUS_RX = (T_L_PLUS + T_L_MINUS) - (T_R_PLUS + T_R_MINUS)


@dataclass(frozen=True)
class MinimalModel:
    """Collective emission at rate gamma_c against a repump w.

    d mu/dt = (gamma_c/2)(nbar+1) D[J-] + (gamma_c/2) nbar D[J+]
              + (w/2) sum_l D[s+_l]
              + (gamma_sp/2) sum_l D[s-_l] + (gamma_deph/8) sum_l D[sz_l]

    with D[O] mu = 2 O mu O^dag - O^dag O mu - mu O^dag O.
    """

    n: int
    gamma_c: float
    nbar: float
    w: float
    gamma_sp: float = 0.0
    gamma_deph: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one spin")
        for name in ("gamma_c", "nbar", "w", "gamma_sp", "gamma_deph"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def minimal_to_spinspin(model: MinimalModel) -> SpinSpinModel:
    """Embed the minimal model as a uniform all-to-all spin-spin model.

    Synthesizes a single resonant collective mode with uniform coupling
    chosen so Gamma-_lm = gamma_c (nbar+1)/2 and Gamma+_lm =
    gamma_c nbar/2 exactly; the mode's damping is a bookkeeping value
    picked large enough that the validity diagnostic stays quiet.
    """
    n = model.n
    kappa0 = max(100.0 * n * model.gamma_c * (1.0 + model.nbar), 1.0)
    f = np.full((n, 1), 0.5j * math.sqrt(model.gamma_c * kappa0))
    omega0 = 1.0
    rates = CoolingRates(
        omega=np.array([omega0]), omega_shifted=np.array([omega0]),
        kappa=np.array([kappa0]), nbar=np.array([model.nbar]),
        heating=np.array([False]),
        d_minus=np.array([kappa0]), d_plus=np.array([0.0]))
    params = EffectiveSpinParams(
        delta_r=0.0, omega_r=0.0, delta=1.0,
        gamma_31=model.gamma_sp, gamma_13=0.0, gamma_d=model.gamma_deph,
        gamma_1x=0.0, gamma_3x=0.0)
    return build_model(SpinPhononCoupling(f=f), rates, params,
                       w=model.w, chi=0.0, delta_r=-omega0)


@dataclass(frozen=True)
class ObservableSeries:
    """Spin observables on a time grid, engine-agnostic.

    sz is the per-spin inversion <sz>, jplus the total <J+> (complex),
    pair_pm and pair_pp the pair averages of <s+_i s-_j> and
    <s+_i s+_j> over i != j (zero for a single spin).  The defects
    record worst-case trace and hermiticity drift over the run.
    """

    times: np.ndarray
    sz: np.ndarray
    jplus: np.ndarray
    pair_pm: np.ndarray
    pair_pp: np.ndarray
    trace_defect: float
    hermiticity_defect: float
    dt: float


def _rk4(matvec, y, dt, n_steps):
    for _ in range(n_steps):
        k1 = matvec(y)
        k2 = matvec(y + (0.5 * dt) * k1)
        k3 = matvec(y + (0.5 * dt) * k2)
        k4 = matvec(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


# ---------------------------------------------------------------------------
# permutation-symmetric sector


class SymmetricSector:
    """Occupation-tuple machinery for N exchange-symmetric spins."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("need at least one spin")
        self.n = n
        grid = np.indices((n + 1, n + 1, n + 1)).reshape(3, -1).T
        keep = grid.sum(axis=1) <= n
        t3 = grid[keep].astype(np.int64)
        self.tuples = np.column_stack([t3, n - t3.sum(axis=1)])
        self.dim = len(self.tuples)
        self._lookup = np.full((n + 1, n + 1, n + 1), -1, dtype=np.int64)
        self._lookup[t3[:, 0], t3[:, 1], t3[:, 2]] = np.arange(self.dim)
        t = self.tuples
        diag = (t[:, 1] == 0) & (t[:, 2] == 0)
        self._diag_idx = np.flatnonzero(diag)
        self._diag_weight = (t[diag, 0] - t[diag, 3]).astype(float)
        self._jp_idx = np.flatnonzero((t[:, 1] == 0) & (t[:, 2] == 1))
        self._pm_idx = np.flatnonzero((t[:, 1] == 1) & (t[:, 2] == 1))
        self._pp_idx = np.flatnonzero((t[:, 1] == 0) & (t[:, 2] == 2))
        self._herm_perm = self._index_of(t[:, [0, 2, 1, 3]])

    def _index_of(self, tuples) -> np.ndarray:
        idx = self._lookup[tuples[:, 0], tuples[:, 1], tuples[:, 2]]
        if np.any(idx < 0):
            raise IndexError("tuple outside the sector")
        return idx

    # -- states --

    def product_state(self, q) -> np.ndarray:
        """ct for the product state rho = (sum_a q_a Q_a)^{tensor N}."""
        q = np.asarray(q, dtype=complex)
        t = self.tuples
        log_multinom = gammaln(self.n + 1) - gammaln(t + 1.0).sum(axis=1)
        out = np.exp(log_multinom).astype(complex)
        for a in range(4):
            na = t[:, a]
            if q[a] == 0:
                out = np.where(na > 0, 0.0, out)
            else:
                mag, phase = abs(q[a]), q[a] / abs(q[a])
                out = out * np.exp(na * math.log(mag)) * phase**na
        return out

    def ground_state(self) -> np.ndarray:
        c = np.zeros(self.dim, dtype=complex)
        c[self._lookup[0, 0, 0]] = 1.0
        return c

    def equator_state(self) -> np.ndarray:
        """All spins in (|g> - i|e>)/sqrt(2), i.e. <sy> = +1 per spin."""
        return self.product_state([0.5, -0.5j, 0.5j, 0.5])

    # -- observables --

    def trace(self, c) -> complex:
        return complex(np.sum(c[self._diag_idx]))

    def observables(self, c):
        """(sz per spin, <J+>, pair-avg <s+s->, pair-avg <s+s+>)."""
        n = self.n
        sz = np.sum(c[self._diag_idx] * self._diag_weight) / n
        jp = np.sum(c[self._jp_idx])
        if n > 1:
            pm = np.sum(c[self._pm_idx]) / (n * (n - 1))
            pp = 2.0 * np.sum(c[self._pp_idx]) / (n * (n - 1))
        else:
            pm = 0.0 + 0.0j
            pp = 0.0 + 0.0j
        return complex(sz), complex(jp), complex(pm), complex(pp)

    def hermiticity_defect(self, c) -> float:
        defect = np.max(np.abs(c - np.conj(c[self._herm_perm])))
        scale = np.max(np.abs(c))
        return float(defect / scale) if scale > 0 else 0.0

    # -- generator assembly --

    def _single_site(self, tmat, weight, rows, cols, vals):
        t = self.tuples
        idx = np.arange(self.dim)
        for b in range(4):
            for a in range(4):
                coeff = tmat[b, a]
                if coeff == 0.0:
                    continue
                occ = t[:, a]
                mask = occ > 0
                if a == b:
                    rows.append(idx[mask])
                else:
                    target = t[mask].copy()
                    target[:, a] -= 1
                    target[:, b] += 1
                    rows.append(self._index_of(target))
                cols.append(idx[mask])
                vals.append(weight * coeff * occ[mask].astype(float))

    def _two_site(self, tphi, tpsi, weight, rows, cols, vals):
        t = self.tuples
        idx = np.arange(self.dim)
        for c_ in range(4):
            for a in range(4):
                if tphi[c_, a] == 0.0:
                    continue
                for d in range(4):
                    for b in range(4):
                        coeff = tphi[c_, a] * tpsi[d, b]
                        if coeff == 0.0:
                            continue
                        if a == b:
                            occ = t[:, a] * (t[:, a] - 1)
                        else:
                            occ = t[:, a] * t[:, b]
                        mask = occ > 0
                        target = t[mask].copy()
                        target[:, a] -= 1
                        target[:, b] -= 1
                        target[:, c_] += 1
                        target[:, d] += 1
                        rows.append(self._index_of(target))
                        cols.append(idx[mask])
                        vals.append(weight * coeff * occ[mask].astype(float))
        return rows, cols, vals

    def _assemble(self, rows, cols, vals) -> sp.csr_matrix:
        gen = sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim))
        return gen.tocsr()

    def minimal_generator(self, model: MinimalModel) -> sp.csr_matrix:
        """Real sparse generator of the minimal master equation."""
        if model.n != self.n:
            raise ValueError("model size does not match the sector")
        rows, cols, vals = [], [], []
        lm = 0.5 * model.gamma_c * (model.nbar + 1.0)
        lp = 0.5 * model.gamma_c * model.nbar
        if lm > 0:
            self._two_site(T_L_MINUS, T_R_PLUS, 2.0 * lm, rows, cols, vals)
            self._two_site(T_L_PLUS, T_L_MINUS, -lm, rows, cols, vals)
            self._two_site(T_R_PLUS, T_R_MINUS, -lm, rows, cols, vals)
            self._single_site(T_MINUS_RHO_PLUS, 2.0 * lm, rows, cols, vals)
            self._single_site(T_L_Q1, -lm, rows, cols, vals)
            self._single_site(T_R_Q1, -lm, rows, cols, vals)
        if lp > 0:
            self._two_site(T_L_PLUS, T_R_MINUS, 2.0 * lp, rows, cols, vals)
            self._two_site(T_L_MINUS, T_L_PLUS, -lp, rows, cols, vals)
            self._two_site(T_R_MINUS, T_R_PLUS, -lp, rows, cols, vals)
            self._single_site(T_PLUS_RHO_MINUS, 2.0 * lp, rows, cols, vals)
            self._single_site(T_L_Q4, -lp, rows, cols, vals)
            self._single_site(T_R_Q4, -lp, rows, cols, vals)
        pump = 0.5 * model.w
        if pump > 0:
            self._single_site(T_PLUS_RHO_MINUS, 2.0 * pump, rows, cols, vals)
            self._single_site(T_L_Q4, -pump, rows, cols, vals)
            self._single_site(T_R_Q4, -pump, rows, cols, vals)
        spont = 0.5 * model.gamma_sp
        if spont > 0:
            self._single_site(T_MINUS_RHO_PLUS, 2.0 * spont, rows, cols, vals)
            self._single_site(T_L_Q1, -spont, rows, cols, vals)
            self._single_site(T_R_Q1, -spont, rows, cols, vals)
        deph = model.gamma_deph / 8.0
        if deph > 0:
            self._single_site(T_Z_RHO_Z, 2.0 * deph, rows, cols, vals)
            self._single_site(T_IDENT, -2.0 * deph, rows, cols, vals)
        if not rows:
            return sp.csr_matrix((self.dim, self.dim))
        return self._assemble(rows, cols, vals)

    def rotation_generator(self) -> sp.csr_matrix:
        """Real part G of the pi/2-pulse generator -iG.

        Integrating dct/ds = -i G ct over s in [0, 1] applies the
        product rotation exp(-i pi sx/4) per spin: (x, y, z) ->
        (x, -z, y), taking the ground state to the equator state.
        """
        rows, cols, vals = [], [], []
        self._single_site(T_LX_MINUS_RX, math.pi / 4.0, rows, cols, vals)
        return self._assemble(rows, cols, vals)

    def rotate_half_pi(self, c, n_steps=None) -> np.ndarray:
        gen = self.rotation_generator()
        norm = math.pi * self.n / 2.0  # spectral radius of the generator
        if n_steps is None:
            n_steps = max(64, int(16.0 * norm))
        matvec = lambda v: (gen @ v.imag) - 1j * (gen @ v.real)
        return _rk4(matvec, np.asarray(c, dtype=complex), 1.0 / n_steps, n_steps)


def _real_split_matvec(gen):
    return lambda v: (gen @ v.real) + 1j * (gen @ v.imag)


def _spectral_radius(matrix: sp.spmatrix, iters: int = 60) -> float:
    """Power-iteration estimate of the largest |eigenvalue|.

    Deterministic start; the growth rate is averaged over the last ten
    iterations so complex-pair oscillation does not bias it.  Floored by
    the largest |diagonal| (never a gross underestimate for the strongly
    damped generators used here).
    """
    dmax = float(np.max(np.abs(matrix.diagonal()))) if matrix.nnz else 0.0
    if matrix.nnz == 0:
        return 0.0
    rng = np.random.default_rng(12345)
    x = rng.normal(size=matrix.shape[0]) + 1j * rng.normal(size=matrix.shape[0])
    x /= np.linalg.norm(x)
    growth = []
    for k in range(iters):
        y = matrix @ x
        r = np.linalg.norm(y)
        if r == 0.0:
            return dmax
        if k >= iters - 10:
            growth.append(r)
        x = y / r
    return max(float(np.exp(np.mean(np.log(growth)))), dmax)


def suggest_dt(model: MinimalModel, gen: sp.csr_matrix) -> float:
    """Fixed RK4 step: well under the physical and stability scales."""
    rate = max(model.w, model.gamma_c * (1.0 + model.nbar),
               model.n * model.gamma_c, model.gamma_sp, model.gamma_deph)
    if rate == 0.0:
        raise ValueError("model has no dynamics; all rates are zero")
    rho = _spectral_radius(gen)
    dt = 0.01 / rate
    if rho > 0:
        # |dt * lambda| <= 1.5 keeps every left-half-plane eigenvalue
        # inside the RK4 stability region
        dt = min(dt, 1.5 / rho)
    return dt


def minimal_solve(model: MinimalModel, t_final: float, n_samples: int = 50,
                  dt: float | None = None, state0=None,
                  sector: SymmetricSector | None = None,
                  gen: sp.csr_matrix | None = None) -> ObservableSeries:
    """Evolve the minimal model, sampling observables on a uniform grid.

    ``state0`` is a coefficient vector, or None for the ground state.
    Use :func:`minimal_evolve_state` when the final state is needed too.
    """
    series, _ = minimal_evolve_state(model, t_final, n_samples, dt=dt,
                                     state0=state0, sector=sector, gen=gen)
    return series


def minimal_evolve_state(model: MinimalModel, t_final: float,
                         n_samples: int = 50, dt: float | None = None,
                         state0=None, sector: SymmetricSector | None = None,
                         gen: sp.csr_matrix | None = None):
    """Like :func:`minimal_solve` but also returns the final state."""
    if sector is None:
        sector = SymmetricSector(model.n)
    if gen is None:
        gen = sector.minimal_generator(model)
    if dt is None:
        dt = suggest_dt(model, gen)
    if state0 is None:
        state0 = sector.ground_state()
    c = np.asarray(state0, dtype=complex).copy()
    matvec = _real_split_matvec(gen)
    steps_per = max(1, math.ceil(t_final / (n_samples * dt)))
    dt_actual = t_final / (n_samples * steps_per)
    times = np.linspace(0.0, t_final, n_samples + 1)
    sz = np.empty(n_samples + 1)
    jplus = np.empty(n_samples + 1, dtype=complex)
    pm = np.empty(n_samples + 1)
    pp = np.empty(n_samples + 1, dtype=complex)
    trace_defect = 0.0
    herm_defect = 0.0
    for i in range(n_samples + 1):
        if i > 0:
            c = _rk4(matvec, c, dt_actual, steps_per)
        s, jp, pair_pm, pair_pp = sector.observables(c)
        sz[i] = s.real
        jplus[i] = jp
        pm[i] = pair_pm.real
        pp[i] = pair_pp
        trace_defect = max(trace_defect, abs(sector.trace(c) - 1.0))
        herm_defect = max(herm_defect, sector.hermiticity_defect(c))
    series = ObservableSeries(times=times, sz=sz, jplus=jplus, pair_pm=pm,
                              pair_pp=pp, trace_defect=trace_defect,
                              hermiticity_defect=herm_defect, dt=dt_actual)
    return series, c


def minimal_steady_state(model: MinimalModel, rel_tol: float = 1e-9,
                         dt: float | None = None,
                         sector: SymmetricSector | None = None,
                         max_blocks: int = 400):
    """March the minimal model to its steady state.

    Deterministic converged evolution from the ground state: advance in
    blocks of a few slow times until the monitored observables move by
    less than ``rel_tol`` (relative to the per-spin scale of 1) across a
    block.  Returns (sector, state, ObservableSeries of the last block).
    """
    if sector is None:
        sector = SymmetricSector(model.n)
    gen = sector.minimal_generator(model)
    if dt is None:
        dt = suggest_dt(model, gen)
    slow = [r for r in (model.w, model.n * model.gamma_c * (1.0 + model.nbar),
                        model.gamma_sp, model.gamma_deph) if r > 0]
    t_block = 3.0 / min(slow)
    c = sector.ground_state()
    matvec = _real_split_matvec(gen)
    steps = max(1, math.ceil(t_block / dt))
    dt_actual = t_block / steps
    prev = None
    for _ in range(max_blocks):
        c = _rk4(matvec, c, dt_actual, steps)
        s, jp, pm, pp = sector.observables(c)
        cur = np.array([s.real, pm.real, abs(jp) / model.n])
        if prev is not None and np.max(np.abs(cur - prev)) < rel_tol:
            break
        prev = cur
    else:
        warnings.warn("steady state not converged; returning the last block",
                      stacklevel=2)
    series, c = minimal_evolve_state(model, t_block, n_samples=2, dt=dt_actual,
                                     state0=c, sector=sector, gen=gen)
    return sector, c, series


# ---------------------------------------------------------------------------
# dense Liouvillian


@dataclass(frozen=True)
class DenseLiouvillian:
    """Vectorized Liouvillian over 4^n coefficients, column stacking."""

    n_sigma: int
    matrix: sp.csr_matrix


def _site_operator(op: np.ndarray, site: int, n: int) -> sp.csr_matrix:
    mats = [sp.identity(2, format="csr", dtype=complex)] * n
    mats[site] = sp.csr_matrix(op.astype(complex))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out

# single-spin operators in the (|g>, |e>) basis
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]])
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]])
SIGMA_Z = np.diag([-1.0, 1.0])
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])


def _left(a: sp.spmatrix, dim: int) -> sp.csr_matrix:
    return sp.kron(sp.identity(dim, format="csr", dtype=complex), a, format="csr")


def _right(b: sp.spmatrix, dim: int) -> sp.csr_matrix:
    return sp.kron(b.T, sp.identity(dim, format="csr", dtype=complex), format="csr")


def _sandwich(a: sp.spmatrix, b: sp.spmatrix) -> sp.csr_matrix:
    """Superoperator of rho -> a rho b."""
    return sp.kron(b.T, a, format="csr")


def build_dense(model: SpinSpinModel) -> DenseLiouvillian:
    """Assemble the full master equation over 2^n, n <= 6.

    Checks trace preservation of the assembled matrix to 1e-12 before
    returning it.
    """
    n = model.n_sigma
    if n > DENSE_MAX_SPINS:
        raise ValueError(f"dense engine is capped at {DENSE_MAX_SPINS} spins")
    dim = 2**n
    sp_l = [_site_operator(SIGMA_PLUS, l, n) for l in range(n)]
    sm_l = [_site_operator(SIGMA_MINUS, l, n) for l in range(n)]
    sz_l = [_site_operator(SIGMA_Z, l, n) for l in range(n)]
    terms = []
    ham = sp.csr_matrix((dim, dim), dtype=complex)
    for l in range(n):
        ham = ham + 0.5 * model.b[l] * sz_l[l]
        for m in range(n):
            if l != m and model.j[l, m] != 0:
                ham = ham + model.j[l, m] * (sp_l[l] @ sm_l[m])
    terms.append(-1j * (_left(ham, dim) - _right(ham, dim)))
    for l in range(n):
        for m in range(n):
            gm = model.gamma_minus[l, m]
            if gm != 0:
                lowering = sp_l[l] @ sm_l[m]
                terms.append(gm * (2.0 * _sandwich(sm_l[m], sp_l[l])
                                   - _left(lowering, dim)
                                   - _right(lowering, dim)))
            gp = model.gamma_plus[l, m]
            if gp != 0:
                raising = sm_l[m] @ sp_l[l]
                terms.append(gp * (2.0 * _sandwich(sp_l[l], sm_l[m])
                                   - _left(raising, dim)
                                   - _right(raising, dim)))
    for rate, ops in (((model.w + model.gamma_13) / 2.0, (sp_l, sm_l)),
                      (model.gamma_31 / 2.0, (sm_l, sp_l)),
                      (model.gamma_d / 8.0, (sz_l, sz_l))):
        if rate == 0:
            continue
        for l in range(n):
            o, od = ops[0][l], ops[1][l]
            terms.append(rate * (2.0 * _sandwich(o, od)
                                 - _left(od @ o, dim) - _right(od @ o, dim)))
    coo = [t.tocoo() for t in terms]
    liou = sp.coo_matrix(
        (np.concatenate([t.data for t in coo]),
         (np.concatenate([t.row for t in coo]),
          np.concatenate([t.col for t in coo]))),
        shape=(dim * dim, dim * dim)).tocsr()
    trace_row = liou.T @ _vec_identity(dim)
    scale = max(np.abs(liou.data).max(), 1.0) if liou.nnz else 1.0
    if np.abs(trace_row).max() > 1e-12 * scale:
        raise RuntimeError("assembled Liouvillian does not preserve the trace")
    return DenseLiouvillian(n_sigma=n, matrix=liou)


def _vec_identity(dim: int) -> np.ndarray:
    v = np.zeros(dim * dim)
    v[:: dim + 1] = 1.0
    return v


def dense_ground_state(n: int) -> np.ndarray:
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1.0
    return rho.reshape(-1, order="F")


def dense_equator_state(n: int) -> np.ndarray:
    site = 0.5 * np.array([[1.0, 1j], [-1j, 1.0]])
    rho = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        rho = np.kron(rho, site)
    return rho.reshape(-1, order="F")


def rotation_superop(n: int) -> sp.csr_matrix:
    """vec action of rho -> U rho U^dag with U = prod_l exp(-i pi sx_l/4)."""
    u1 = (np.eye(2) - 1j * SIGMA_X) / math.sqrt(2.0)
    u = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        u = np.kron(u, u1)
    return sp.csr_matrix(np.kron(u.conj(), u))


class DenseObservables:
    """Precomputed sparse operators for fast expectation values."""

    def __init__(self, n: int):
        self.n = n
        dim = 2**n
        sp_l = [_site_operator(SIGMA_PLUS, l, n) for l in range(n)]
        sm_l = [_site_operator(SIGMA_MINUS, l, n) for l in range(n)]
        sz_tot = sp.csr_matrix((dim, dim), dtype=complex)
        jp_tot = sp.csr_matrix((dim, dim), dtype=complex)
        pm_tot = sp.csr_matrix((dim, dim), dtype=complex)
        pp_tot = sp.csr_matrix((dim, dim), dtype=complex)
        for l in range(n):
            sz_tot = sz_tot + _site_operator(SIGMA_Z, l, n)
            jp_tot = jp_tot + sp_l[l]
            for m in range(n):
                if l != m:
                    pm_tot = pm_tot + sp_l[l] @ sm_l[m]
                    pp_tot = pp_tot + sp_l[l] @ sp_l[m]
        self._ops = (sz_tot, jp_tot, pm_tot, pp_tot)

    @staticmethod
    def _expect(op: sp.spmatrix, rho: np.ndarray) -> complex:
        # Tr(A rho) = sum_ab A_ab rho_ba
        return complex(op.multiply(rho.T).sum())

    def __call__(self, rho_vec: np.ndarray):
        """(sz per spin, <J+>, pair-avg <s+s->, pair-avg <s+s+>)."""
        n = self.n
        dim = 2**n
        rho = rho_vec.reshape((dim, dim), order="F")
        sz, jp, pm, pp = (self._expect(op, rho) for op in self._ops)
        sz /= n
        if n > 1:
            pm /= n * (n - 1)
            pp /= n * (n - 1)
        return sz, jp, pm, pp


def dense_observables(n: int, rho_vec: np.ndarray):
    """One-shot convenience wrapper around :class:`DenseObservables`."""
    return DenseObservables(n)(rho_vec)


def evolve_dense(liou: DenseLiouvillian, rho0_vec: np.ndarray, t_final: float,
                 n_samples: int = 50, dt: float | None = None):
    """RK4 evolution of vec(rho); returns (ObservableSeries, final vec)."""
    n = liou.n_sigma
    lmat = liou.matrix
    if dt is None:
        rho = _spectral_radius(lmat)
        if rho == 0.0:
            raise ValueError("Liouvillian has no dynamics")
        dt = 1.5 / rho
    steps_per = max(1, math.ceil(t_final / (n_samples * dt)))
    dt_actual = t_final / (n_samples * steps_per)
    times = np.linspace(0.0, t_final, n_samples + 1)
    matvec = lambda v: lmat @ v
    v = np.asarray(rho0_vec, dtype=complex).copy()
    dim = 2**n
    tr_vec = _vec_identity(dim)
    observe = DenseObservables(n)
    sz = np.empty(n_samples + 1)
    jplus = np.empty(n_samples + 1, dtype=complex)
    pm = np.empty(n_samples + 1)
    pp = np.empty(n_samples + 1, dtype=complex)
    trace_defect = 0.0
    herm_defect = 0.0
    for i in range(n_samples + 1):
        if i > 0:
            v = _rk4(matvec, v, dt_actual, steps_per)
        s, jp, pair_pm, pair_pp = observe(v)
        sz[i] = s.real
        jplus[i] = jp
        pm[i] = pair_pm.real
        pp[i] = pair_pp
        trace_defect = max(trace_defect, abs(float(tr_vec @ v.real) - 1.0)
                           + abs(float(tr_vec @ v.imag)))
        rho = v.reshape((dim, dim), order="F")
        h_scale = np.abs(rho).max()
        if h_scale > 0:
            herm_defect = max(herm_defect,
                              np.abs(rho - rho.conj().T).max() / h_scale)
    series = ObservableSeries(times=times, sz=sz, jplus=jplus, pair_pm=pm,
                              pair_pp=pp, trace_defect=trace_defect,
                              hermiticity_defect=herm_defect, dt=dt_actual)
    return series, v


def steady_state_dense(liou: DenseLiouvillian, null_tol: float = 1e-10):
    """Null space of the Liouvillian via SVD.

    Returns (vec(rho_ss) trace-normalized, multiplicity).  With
    multiplicity above one the steady manifold is degenerate; the
    returned state is the trace-carrying direction of the null basis
    and a warning is emitted.
    """
    lmat = liou.matrix.toarray()
    _, svals, vh = np.linalg.svd(lmat)
    scale = svals[0] if svals[0] > 0 else 1.0
    null_mask = svals < null_tol * scale
    multiplicity = int(np.sum(null_mask))
    if multiplicity == 0:
        raise RuntimeError("no steady state found (no singular value near 0)")
    basis = vh[null_mask].conj()
    dim = 2**liou.n_sigma
    tr = _vec_identity(dim)
    traces = basis @ tr
    if multiplicity > 1:
        warnings.warn(f"steady state is degenerate (multiplicity "
                      f"{multiplicity}); returning the trace-carrying "
                      f"combination", stacklevel=2)
    if np.max(np.abs(traces)) < 1e-12:
        raise RuntimeError("null space carries no trace; cannot normalize")
    weights = traces.conj() / np.sum(np.abs(traces) ** 2)
    rho = weights @ basis
    rho = rho / (tr @ rho)
    # symmetrize away float dust
    mat = rho.reshape((dim, dim), order="F")
    mat = 0.5 * (mat + mat.conj().T)
    return mat.reshape(-1, order="F"), multiplicity
