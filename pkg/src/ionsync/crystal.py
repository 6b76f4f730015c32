"""Two-species planar ion crystals and their transverse normal modes.

The crystal is an ideal triangular lattice built from closed hexagonal
rings, with the coolant species occupying the sites closest to the trap
center and the spin species the outer sites.  Only out-of-plane (z)
motion is modeled: the potential energy expanded to second order in the
transverse displacements gives a stiffness matrix whose mass-weighted
eigenproblem yields the transverse normal modes.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import atomic_mass, e, epsilon_0, hbar
from scipy.optimize import brentq

COULOMB_K = 1.0 / (4.0 * math.pi * epsilon_0)

# Both species default to the spin-ion isotope mass.  A few percent of
# mass difference concentrates the top mode on the lighter species and
# shifts the damping rates by tens of percent, which is outside the
# regime the bundled reference configuration describes; callers that
# want the full two-species physics pass their own IonSpecies.
MASS_TAU_DEFAULT = 24.985837 * atomic_mass
MASS_SIGMA_DEFAULT = 24.985837 * atomic_mass


class InstabilityError(ValueError):
    """Raised when the transverse spectrum has a non-positive eigenvalue."""


@dataclass(frozen=True)
class IonSpecies:
    """One ion species: a label, its mass in kg and its charge in C."""

    label: str
    mass: float
    charge: float = e

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError(f"species {self.label!r}: mass must be > 0")


TAU_DEFAULT = IonSpecies("tau", MASS_TAU_DEFAULT)
SIGMA_DEFAULT = IonSpecies("sigma", MASS_SIGMA_DEFAULT)


@dataclass(frozen=True)
class CrystalConfig:
    """Planar crystal geometry plus the (species-independent) trap stiffness.

    Ions are ordered coolant (tau) first, then spin (sigma), each group
    sorted by distance from the center and then by polar angle.

    Attributes
    ----------
    positions : (N, 2) ndarray
        In-plane equilibrium coordinates in meters.
    n_tau, n_sigma : int
        Number of coolant / spin ions; rows [0, n_tau) of ``positions``
        are coolant sites.
    spacing : float
        Lattice constant in meters.
    tau, sigma : IonSpecies
        The two species (exactly two per configuration).
    k_z : float or None
        Trap stiffness along z in N/m, the same for both species (the
        axial restoring force depends on the charge, not the mass).
        None until chosen, e.g. by :func:`calibrate_trap`.
    """

    positions: np.ndarray
    n_tau: int
    n_sigma: int
    spacing: float
    tau: IonSpecies = TAU_DEFAULT
    sigma: IonSpecies = SIGMA_DEFAULT
    k_z: float | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must be an (N, 2) array of meters")
        if self.n_tau + self.n_sigma != len(pos):
            raise ValueError("n_tau + n_sigma must equal len(positions)")
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        if np.any(d[~np.eye(len(pos), dtype=bool)] <= 0):
            raise ValueError("all pairwise distances must be > 0")

    @property
    def n_total(self) -> int:
        return self.n_tau + self.n_sigma

    @property
    def masses(self) -> np.ndarray:
        """Per-ion mass in kg, in crystal order."""
        return np.concatenate([
            np.full(self.n_tau, self.tau.mass),
            np.full(self.n_sigma, self.sigma.mass),
        ])

    def with_k_z(self, k_z: float) -> "CrystalConfig":
        return dataclasses.replace(self, k_z=k_z)


@dataclass(frozen=True)
class NormalModes:
    """Transverse normal modes of a crystal.

    Attributes
    ----------
    omega : (N,) ndarray
        Mode angular frequencies in rad/s, sorted descending; the first
        mode is the COM-like mode with uniform displacement sign.
    matrix : (N, N) ndarray
        Orthonormal mode matrix; column n is the mass-weighted
        displacement pattern of mode n, sign-fixed so the largest
        magnitude entry is positive.
    n_tau : int
        Rows [0, n_tau) of ``matrix`` belong to coolant ions.
    mass_tau, mass_sigma : float
        Species masses in kg, kept for Lamb-Dicke evaluation.
    eta_tau, eta_sigma : ndarray or None
        Cached per-mode Lamb-Dicke parameters, attached via
        :meth:`with_lamb_dicke` once the relevant wavevectors are known.
    """

    omega: np.ndarray
    matrix: np.ndarray
    n_tau: int
    mass_tau: float
    mass_sigma: float
    eta_tau: np.ndarray | None = None
    eta_sigma: np.ndarray | None = None

    @property
    def n_total(self) -> int:
        return len(self.omega)

    @property
    def n_sigma(self) -> int:
        return self.n_total - self.n_tau

    def with_lamb_dicke(self, k_tau: float | None = None,
                        k_sigma: float | None = None) -> "NormalModes":
        """Return a copy with eta arrays computed for the given wavevectors."""
        eta_t = lamb_dicke(self, k_tau, "tau") if k_tau is not None else self.eta_tau
        eta_s = lamb_dicke(self, k_sigma, "sigma") if k_sigma is not None else self.eta_sigma
        return dataclasses.replace(self, eta_tau=eta_t, eta_sigma=eta_s)


def closed_shell_totals(max_shells: int = 20) -> list[int]:
    """Ion counts 1 + 3 s (s + 1) that fill s hexagonal rings completely."""
    return [1 + 3 * s * (s + 1) for s in range(max_shells + 1)]


def _hex_lattice_sites(n_shells: int, spacing: float) -> np.ndarray:
    """Triangular-lattice sites of a hexagon-shaped patch, center included.

    Sites are generated from integer combinations i*a1 + j*a2 of the
    primitive vectors with max(|i|, |j|, |i+j|) <= n_shells, which is
    exactly the hexagonal patch of 1 + 3 s (s+1) sites.
    """
    a1 = spacing * np.array([1.0, 0.0])
    a2 = spacing * np.array([0.5, math.sqrt(3.0) / 2.0])
    sites = []
    for i in range(-n_shells, n_shells + 1):
        for j in range(-n_shells, n_shells + 1):
            if max(abs(i), abs(j), abs(i + j)) <= n_shells:
                sites.append(i * a1 + j * a2)
    return np.array(sites)


def _radial_order(points: np.ndarray) -> np.ndarray:
    """Indices sorting points by (radius, angle); deterministic for a lattice."""
    r = np.linalg.norm(points, axis=1)
    phi = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2.0 * math.pi)
    # round to kill float jitter between symmetry-equivalent radii
    return np.lexsort((np.round(phi, 12), np.round(r, 15)))


def generate_crystal(n_sigma: int, n_tau: int, spacing: float,
                     tau: IonSpecies = TAU_DEFAULT,
                     sigma: IonSpecies = SIGMA_DEFAULT) -> CrystalConfig:
    """Build the two-species planar crystal for the given counts.

    The total count must fill a whole number of hexagonal rings
    (1, 7, 19, 37, 61, 91, 127, 169, 217, ...); a pair of ions is also
    accepted as the smallest nontrivial crystal.  The ``n_tau`` sites
    closest to the center become coolant ions, the rest spin ions; both
    groups are ordered by (radius, angle).

    Raises
    ------
    ValueError
        If n_sigma or n_tau is < 1, or the total cannot form the
        filled-shell pattern.
    """
    if n_sigma < 1 or n_tau < 1:
        raise ValueError("need at least one ion of each species")
    n = n_sigma + n_tau
    if n == 2:
        points = np.array([[0.0, 0.0], [spacing, 0.0]])
    else:
        totals = closed_shell_totals()
        if n not in totals:
            below = max((t for t in totals if t < n), default=1)
            above = min(t for t in totals if t > n)
            raise ValueError(
                f"{n} ions cannot form a filled-shell triangular crystal; "
                f"totals must fill whole hexagonal rings (..., {below}, {above}, ...) "
                f"or be the 2-ion special case"
            )
        n_shells = totals.index(n)
        points = _hex_lattice_sites(n_shells, spacing)
    points = points[_radial_order(points)]
    # coolant core first; re-sort each group for the documented ordering
    core = points[:n_tau]
    outer = points[n_tau:]
    positions = np.vstack([core[_radial_order(core)], outer[_radial_order(outer)]])
    return CrystalConfig(positions=positions, n_tau=n_tau, n_sigma=n_sigma,
                         spacing=spacing, tau=tau, sigma=sigma)


def _stiffness_matrix(crystal: CrystalConfig, k_z: float) -> np.ndarray:
    """Mass-weighted transverse stiffness matrix in SI units (rad/s)^2."""
    pos = crystal.positions
    n = len(pos)
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    q = crystal.tau.charge  # both species carry the same single charge
    coulomb = COULOMB_K * q * q / d**3
    h = coulomb.copy()
    np.fill_diagonal(h, k_z - coulomb.sum(axis=1))
    m = crystal.masses
    return h / np.sqrt(np.outer(m, m))


def _sorted_modes(k_weighted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose, sort descending, fix signs, break degenerate ties."""
    w2, vecs = np.linalg.eigh(k_weighted)
    # sign convention: largest-magnitude entry of each column positive
    idx_max = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx_max, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    order = sorted(
        range(len(w2)),
        key=lambda i: (-round(w2[i] / max(abs(w2).max(), 1e-300), 12),
                       tuple(np.round(vecs[:, i], 10))),
    )
    return w2[order], vecs[:, order]


def solve_normal_modes(crystal: CrystalConfig) -> NormalModes:
    """Diagonalize the mass-weighted transverse stiffness matrix.

    Returns modes sorted by frequency descending.  Raises
    :class:`InstabilityError` if any squared frequency is non-positive,
    naming the offending mode.
    """
    if crystal.k_z is None:
        raise ValueError("crystal.k_z is unset; run calibrate_trap or set it")
    w2, vecs = _sorted_modes(_stiffness_matrix(crystal, crystal.k_z))
    if w2[-1] <= 0:
        bad = int(np.argmax(w2 <= 0))
        raise InstabilityError(
            f"transverse mode {bad} has omega^2 = {w2[bad]:.6g} <= 0; "
            f"the crystal is structurally unstable at k_z = {crystal.k_z:.6g} N/m"
        )
    return NormalModes(omega=np.sqrt(w2), matrix=vecs, n_tau=crystal.n_tau,
                       mass_tau=crystal.tau.mass, mass_sigma=crystal.sigma.mass)


def _max_omega(crystal: CrystalConfig, k_z: float) -> float:
    w2 = np.linalg.eigvalsh(_stiffness_matrix(crystal, k_z))
    return math.sqrt(max(w2[-1], 0.0))


def calibrate_trap(crystal: CrystalConfig, target_com: float) -> float:
    """Trap stiffness k_z putting the highest mode at ``target_com`` rad/s.

    The highest mode frequency grows monotonically with k_z and vanishes
    as k_z -> 0, so doubling/halving always brackets the unique root and
    a scalar root-find converges to better than 1e-9 relative.  Raises
    :class:`InstabilityError` when the crystal is unstable at that root:
    the lower modes go soft before the highest one, and then every
    *stable* stiffness overshoots the target.
    """
    if target_com <= 0:
        raise ValueError("target_com must be > 0")
    # max omega^2 >= k_z / mean(m), so this start is already at or above target
    hi = max(crystal.masses) * target_com**2
    while _max_omega(crystal, hi) < target_com:
        hi *= 2.0
    lo = hi / 2.0
    while _max_omega(crystal, lo) >= target_com:
        lo /= 2.0
    # xtol must be far below the N/m scale of k_z (~1e-12 for MHz traps)
    k_z = brentq(lambda k: _max_omega(crystal, k) - target_com,
                 lo, hi, xtol=1e-30, rtol=1e-14)
    if np.linalg.eigvalsh(_stiffness_matrix(crystal, k_z))[0] <= 0:
        raise InstabilityError(
            f"no stable trap reaches max mode frequency {target_com:.6g} rad/s: "
            f"at k_z = {k_z:.6g} N/m the highest mode hits the target but a "
            f"lower mode already has omega^2 <= 0"
        )
    achieved = _max_omega(crystal, k_z)
    if abs(achieved - target_com) > 1e-9 * target_com:
        raise RuntimeError("trap calibration did not converge to 1e-9 relative")
    return k_z


def lamb_dicke(modes: NormalModes, k: float, species: str) -> np.ndarray:
    """Per-mode Lamb-Dicke parameters eta_n = k sqrt(hbar / (2 m omega_n)).

    ``species`` selects the mass: "tau" (coolant) or "sigma" (spin).
    """
    if k <= 0:
        raise ValueError("wavevector k must be > 0")
    if species == "tau":
        mass = modes.mass_tau
    elif species == "sigma":
        mass = modes.mass_sigma
    else:
        raise ValueError(f"unknown species {species!r}")
    return k * np.sqrt(hbar / (2.0 * mass * modes.omega))


def modes_to_csv(modes: NormalModes, path) -> None:
    """Write a per-mode table: index, frequency in Hz, participation vector."""
    n = modes.n_total
    header = "mode,frequency_hz," + ",".join(f"m_{i}" for i in range(n))
    rows = np.column_stack([
        np.arange(n), modes.omega / (2.0 * math.pi), modes.matrix.T,
    ])
    np.savetxt(path, rows, delimiter=",", header=header, comments="",
               fmt=["%d", "%.17g"] + ["%.17g"] * n)
