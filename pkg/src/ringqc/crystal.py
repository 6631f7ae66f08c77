"""Coulomb crystal statics and normal modes in an anisotropic harmonic trap.

Internally everything runs in scaled units: lengths in
``l0 = (k_e q^2 / (m w_z^2))^(1/3)`` and energies in ``m w_z^2 l0^2``, so the
potential reads

    U = sum_i (ax^2 x_i^2 + ay^2 y_i^2 + z_i^2) / 2 + sum_{i<j} 1 / |r_i - r_j|

with ax = w_x / w_z, ay = w_y / w_z. Ring curvature is ignored: at a 12.5 cm
radius and ~20 um spacing the correction is O(1e-4).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import eigsh

from .physcore import CONST, IonSpecies

DENSE_CAP = 2000
CHAIN_CAP = 5000


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class InstabilityError(RuntimeError):
    def __init__(self, msg, modes=()):
        super().__init__(msg)
        self.modes = list(modes)


@dataclass(frozen=True)
class TrapPotential:
    omega_x: float
    omega_y: float
    omega_z: float
    mass: float
    charge: float = CONST.elementary_charge

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "omega_z", "mass", "charge"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_species(cls, sp: IonSpecies, omega_x, omega_y, omega_z):
        return cls(omega_x, omega_y, omega_z, sp.mass, sp.charge)

    @property
    def length_scale(self) -> float:
        return (CONST.coulomb * self.charge**2 / (self.mass * self.omega_z**2)) ** (1.0 / 3.0)

    @property
    def energy_scale(self) -> float:
        return self.mass * self.omega_z**2 * self.length_scale**2

    @property
    def aniso(self) -> np.ndarray:
        return np.array([self.omega_x / self.omega_z, self.omega_y / self.omega_z, 1.0])

    def scaled(self, alpha: float) -> "TrapPotential":
        return TrapPotential(alpha * self.omega_x, alpha * self.omega_y, alpha * self.omega_z,
                             self.mass, self.charge)


@dataclass
class CrystalState:
    positions: np.ndarray  # (N, 3), metres
    residual_gradient_norm: float  # inf-norm, newtons
    potential_energy: float  # J
    iterations: int = 0
    trap: TrapPotential | None = field(default=None, repr=False)

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    def is_linear(self, rtol=1e-6) -> bool:
        scale = np.abs(self.positions[:, 2]).max() if self.n_ions > 1 else 1.0
        return bool(np.abs(self.positions[:, :2]).max() <= rtol * max(scale, 1e-300))

    def is_planar(self, rtol=1e-6) -> bool:
        """True if the crystal lies in a plane containing the z axis (chain or zigzag)."""
        if self.n_ions < 3:
            return True
        p = self.positions - self.positions.mean(axis=0)
        s = np.linalg.svd(p, compute_uv=False)
        return bool(s[-1] <= rtol * s[0])


@dataclass
class PhononSpectrum:
    frequencies: np.ndarray  # (3N,), rad/s ascending
    eigenvectors: np.ndarray  # (3N, 3N) columns, ion-major (x0, y0, z0, x1, ...)
    axial_weight: np.ndarray  # (3N,) weight of each mode on z coordinates
    hessian_asymmetry: float = 0.0

    @property
    def band_min(self) -> float:
        return float(self.frequencies.min())

    @property
    def band_max(self) -> float:
        return float(self.frequencies.max())

    @property
    def band_width(self) -> float:
        return self.band_max - self.band_min

    def branch(self, name: str = "all") -> np.ndarray:
        if name == "all":
            return self.frequencies
        if name == "axial":
            return self.frequencies[self.axial_weight > 0.5]
        if name == "transverse":
            return self.frequencies[self.axial_weight <= 0.5]
        if name in ("x", "y"):
            k = 0 if name == "x" else 1
            w = (self.eigenvectors[k::3, :] ** 2).sum(axis=0)
            return self.frequencies[w > 0.5]
        raise ValueError(f"unknown branch {name!r}")


# ---------------------------------------------------------------------------
# scaled-unit kernels

def _pair_terms(r):
    d = r[:, None, :] - r[None, :, :]
    dist = np.sqrt((d**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    return d, dist


def energy(r: np.ndarray, aniso: np.ndarray) -> float:
    """Scaled potential energy of an (N, 3) configuration."""
    harmonic = 0.5 * float(((aniso**2) * r**2).sum())
    if len(r) < 2:
        return harmonic
    _, dist = _pair_terms(r)
    iu = np.triu_indices(len(r), 1)
    return harmonic + float((1.0 / dist[iu]).sum())


def coulomb_forces(r: np.ndarray) -> np.ndarray:
    """Scaled Coulomb force on each ion."""
    if len(r) < 2:
        return np.zeros_like(r)
    d, dist = _pair_terms(r)
    return (d / dist[..., None] ** 3).sum(axis=1)


def gradient(r: np.ndarray, aniso: np.ndarray) -> np.ndarray:
    return (aniso**2) * r - coulomb_forces(r)


def hessian(r: np.ndarray, aniso: np.ndarray, block: int = 256) -> np.ndarray:
    """Dense (3N, 3N) Hessian of the scaled potential, built in row blocks."""
    n = len(r)
    h = np.zeros((n, 3, n, 3))
    eye = np.eye(3)
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        d = r[lo:hi, None, :] - r[None, :, :]
        dist2 = (d**2).sum(-1)
        rows = np.arange(hi - lo)
        dist2[rows, rows + lo] = 1.0
        inv5 = dist2 ** -2.5
        inv5[rows, rows + lo] = 0.0
        t = (3.0 * d[..., :, None] * d[..., None, :] - dist2[..., None, None] * eye) * inv5[..., None, None]
        h[lo:hi] = -t.transpose(0, 2, 1, 3)
        h[lo + rows, :, lo + rows, :] = np.diag(aniso**2) + t.sum(axis=1)
    return h.reshape(3 * n, 3 * n)


def _orient(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its first significant component is positive."""
    out = vecs.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-8 * np.abs(col).max())[0]
        if col[idx] < 0:
            out[:, k] = -col
    return out


# ---------------------------------------------------------------------------
# statics

def _chain_seed(n_ions: int) -> np.ndarray:
    """Axial positions at the quantiles of the continuum chain density.

    The line density is close to an inverted parabola with half-length
    L^3 ~ 2 N ln N in scaled units; the Newton solve takes it from there.
    """
    if n_ions < 3:
        return (np.arange(n_ions) - (n_ions - 1) / 2.0) * 2.0 ** (1.0 / 3.0)
    half = (2.0 * n_ions * math.log(n_ions)) ** (1.0 / 3.0)
    frac = (np.arange(n_ions) + 0.5) / n_ions
    # 3u - u^3 = 4F - 2 solved by u = 2 sin(asin((4F - 2)/2) / 3)
    u = 2.0 * np.sin(np.arcsin(2.0 * frac - 1.0) / 3.0)
    return half * u


def default_seed(n_ions: int, trap: TrapPotential) -> np.ndarray:
    """Linear chain along z, spaced like the continuum chain (scaled units)."""
    r = np.zeros((n_ions, 3))
    r[:, 2] = _chain_seed(n_ions)
    return r


def _max_step(r, step):
    if len(r) < 2:
        return 1.0
    _, dist = _pair_terms(r)
    nn = dist.min(axis=1)
    move = np.sqrt((step**2).sum(-1))
    ratio = np.max(move / (0.3 * nn))
    return 1.0 if ratio <= 1.0 else 1.0 / ratio


def _newton_minimize(r0, aniso, tol, max_iter, escape=True):
    r = r0.copy()
    n = len(r)
    e = energy(r, aniso)
    it = 0
    for it in range(1, max_iter + 1):
        g = gradient(r, aniso)
        gmax = np.abs(g).max()
        h = hessian(r, aniso)
        if gmax < tol:
            try:
                sla.cho_factor(h)
                return r, gmax, it
            except sla.LinAlgError:
                if not escape:
                    return r, gmax, it
                # converged onto a saddle; push along the softest direction
                w, v = sla.eigh(h, subset_by_index=[0, 0])
                v = _orient(v)[:, 0].reshape(n, 3)
                r = _line_search(r, 1e-2 * v, aniso, e, g, accept_any_decrease=True)
                e = energy(r, aniso)
                continue
        diag_scale = np.abs(np.diag(h)).max()
        try:
            c = sla.cho_factor(h)
        except sla.LinAlgError:
            # shift just past the most negative curvature so the step still
            # follows it; the step cap keeps the move local
            lam_min = sla.eigvalsh(h, subset_by_index=[0, 0])[0]
            shift = 1.5 * max(-lam_min, 0.0) + 1e-8 * diag_scale
            while True:
                try:
                    c = sla.cho_factor(h + shift * np.eye(3 * n))
                    break
                except sla.LinAlgError:
                    shift = 2.0 * shift
        step = -sla.cho_solve(c, g.ravel()).reshape(n, 3)
        if not np.all(np.isfinite(step)):
            step = -g
        r_new = _line_search(r, step, aniso, e, g)
        if r_new is None:
            r_new = _line_search(r, -g, aniso, e, g)
        if r_new is None:
            # no descent possible at this precision
            return r, gmax, it
        r = r_new
        e = energy(r, aniso)
    g = gradient(r, aniso)
    return r, np.abs(g).max(), it


def _line_search(r, step, aniso, e0, g, accept_any_decrease=False):
    t = _max_step(r, step)
    slope = float((g * step).sum())
    for _ in range(60):
        trial = r + t * step
        e = energy(trial, aniso)
        if accept_any_decrease:
            if e < e0:
                return trial
        elif e <= e0 + 1e-4 * t * slope or (abs(e - e0) <= 1e-14 * abs(e0) and slope < 0):
            return trial
        t *= 0.5
    if accept_any_decrease:
        # symmetric saddle: take the push regardless; the next Newton steps descend
        return r + _max_step(r, step) * step
    return None


MULTISTART_MAX_N = 64
N_RANDOM_STARTS = 8


def _candidate_seeds(n_ions: int, trap: TrapPotential) -> list[np.ndarray]:
    """Chain, both planar zigzags, a helix and fixed-seed random clouds.

    Used only when the linear chain is unstable, where several competing
    structures exist and a single Newton descent can stop in a local minimum.
    """
    aniso = trap.aniso
    chain = default_seed(n_ions, trap)
    idx = np.arange(n_ions)
    alt = np.where(idx % 2 == 0, 1.0, -1.0)
    seeds = [chain]
    for k in (0, 1):
        zz = chain.copy()
        zz[:, k] = 0.5 * alt
        seeds.append(zz)
    helix = chain.copy()
    ang = idx * 2.0 * np.pi / 3.0
    helix[:, 0], helix[:, 1] = 0.7 * np.cos(ang), 0.7 * np.sin(ang)
    seeds.append(helix)
    rng = np.random.default_rng(n_ions)
    # exact symmetry pins Newton to a saddle manifold where it crawls
    seeds = [r + 1e-2 * rng.normal(size=r.shape) for r in seeds]
    width = (n_ions / aniso**2) ** (1.0 / 3.0)
    n_random = N_RANDOM_STARTS if n_ions <= MULTISTART_MAX_N else 1
    seeds.extend(rng.normal(size=(n_ions, 3)) * width for _ in range(n_random))
    if n_ions > MULTISTART_MAX_N:
        seeds = seeds[3:]
    return seeds


def solve_equilibrium(trap: TrapPotential, n_ions: int, seed_layout: np.ndarray | None = None,
                      *, rtol: float = 1e-10, max_iter: int = 2000) -> CrystalState:
    """Minimum-energy configuration of ``n_ions`` ions.

    Damped Newton with a step cap of 0.3 nearest-neighbour distances; a
    Levenberg shift replaces Newton when the Hessian is indefinite. If the
    iteration lands on a saddle (e.g. a linear chain beyond the zigzag
    threshold) it is kicked along the softest mode and restarted.

    Without ``seed_layout``, and when the linear chain is unstable, a fixed set
    of starting layouts is tried (a reduced set above N = 64) and the lowest
    converged energy is kept, so the result is deterministic.

    ``seed_layout`` is in metres. Tolerance is ``rtol`` times the two-ion
    Coulomb force k_e q^2 / spacing^2, on the gradient inf-norm.
    """
    if n_ions < 1:
        raise ValueError("n_ions must be >= 1")
    if n_ions > DENSE_CAP:
        raise ValueError(f"dense solve capped at N={DENSE_CAP}; use chain_band_extremes for larger N")
    l0 = trap.length_scale
    aniso = trap.aniso
    if seed_layout is not None:
        seeds = [np.asarray(seed_layout, float) / l0]
        if seeds[0].shape != (n_ions, 3):
            raise ValueError(f"seed_layout must have shape ({n_ions}, 3)")
    elif n_ions >= 3 and not zigzag_stability(trap, n_ions)[0]:
        seeds = _candidate_seeds(n_ions, trap)
    else:
        seeds = [default_seed(n_ions, trap)]
    force_scale = 2.0 ** (-2.0 / 3.0)
    tol = rtol * force_scale
    best, worst_residual, total_it = None, 0.0, 0
    for r0 in seeds:
        r, gmax, it = _newton_minimize(r0, aniso, tol, max_iter)
        total_it += it
        if gmax >= tol:
            worst_residual = max(worst_residual, gmax)
            continue
        if n_ions > 1 and _pair_terms(r)[1].min() * l0 < 1e-9:
            continue
        e = energy(r, aniso)
        if best is None or e < best[1] - 1e-12 * abs(e):
            best = (r, e, gmax)
    if best is None:
        raise ConvergenceError(f"no convergence after {total_it} iterations: residual "
                               f"{worst_residual:.3e} (scaled)", residual=worst_residual)
    r, e, gmax = best
    force_unit = trap.energy_scale / l0
    return CrystalState(positions=r * l0, residual_gradient_norm=gmax * force_unit,
                        potential_energy=e * trap.energy_scale, iterations=total_it, trap=trap)


def phonon_modes(state: CrystalState, trap: TrapPotential | None = None, *,
                 masses: np.ndarray | None = None, tol: float = 1e-9) -> PhononSpectrum:
    """Normal modes from the mass-weighted Hessian at equilibrium.

    With ``masses`` (one per ion) the spring constants stay those of ``trap``
    and only the kinetic term changes, as for a mixed-isotope chain in a
    common DC well.
    """
    trap = trap or state.trap
    r = state.positions / trap.length_scale
    h = hessian(r, trap.aniso)
    scale = np.abs(h).max()
    asym = float(np.abs(h - h.T).max() / scale)
    h = 0.5 * (h + h.T)
    if masses is not None:
        masses = np.asarray(masses, float)
        inv_sqrt = np.repeat(np.sqrt(trap.mass / masses), 3)
        h = h * inv_sqrt[:, None] * inv_sqrt[None, :]
    lam, vecs = sla.eigh(h)
    bad = np.flatnonzero(lam < -tol * scale)
    if bad.size:
        raise InstabilityError(f"configuration is not a minimum: modes {bad.tolist()} have "
                               f"negative curvature", modes=bad.tolist())
    lam = np.clip(lam, 0.0, None)
    vecs = _orient(vecs)
    axial = (vecs[2::3, :] ** 2).sum(axis=0)
    return PhononSpectrum(frequencies=trap.omega_z * np.sqrt(lam), eigenvectors=vecs,
                          axial_weight=axial, hessian_asymmetry=asym)


def band_statistics(spec: PhononSpectrum, branch: str = "all") -> tuple[float, float, float]:
    """(width, mean spacing, min adjacent spacing) of one branch, in rad/s."""
    f = np.sort(spec.branch(branch))
    if f.size == 0:
        raise ValueError(f"branch {branch!r} is empty")
    if f.size == 1:
        return 0.0, 0.0, 0.0
    width = float(f[-1] - f[0])
    return width, width / (f.size - 1), float(np.diff(f).min())


# ---------------------------------------------------------------------------
# linear chains and the zigzag threshold

def _chain_energy_terms(z):
    d = z[:, None] - z[None, :]
    a = np.abs(d)
    np.fill_diagonal(a, np.inf)
    return d, a


def solve_chain(n_ions: int, *, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Scaled axial positions of a linear chain in a unit-frequency axial well."""
    if n_ions > CHAIN_CAP:
        raise ValueError(f"chain solve capped at N={CHAIN_CAP}")
    z = _chain_seed(n_ions)
    if n_ions == 1:
        return z

    def e_of(z):
        _, a = _chain_energy_terms(z)
        iu = np.triu_indices(len(z), 1)
        return 0.5 * float(z @ z) + float((1.0 / a[iu]).sum())

    e = e_of(z)
    for _ in range(max_iter):
        d, a = _chain_energy_terms(z)
        g = z - (np.sign(d) / a**2).sum(axis=1)
        # the largest one-sided Coulomb sum sets the roundoff floor
        if np.abs(g).max() < tol * max(1.0, float((1.0 / a**2).sum(axis=1).max())):
            return z
        k = 2.0 / a**3
        h = -k
        np.fill_diagonal(h, 1.0 + k.sum(axis=1))
        step = -sla.solve(h, g, assume_a="pos")
        # only neighbours closing in on each other limit the step: no gap
        # may shrink by more than half
        order = np.argsort(z)
        gaps = np.diff(z[order])
        closing = -np.diff(step[order])
        m = closing > 0
        t = min(1.0, float(np.min(0.5 * gaps[m] / closing[m]))) if m.any() else 1.0
        while t > 1e-12:
            trial = z + t * step
            if np.all(np.diff(np.sort(trial)) > 0) and np.array_equal(np.argsort(trial), np.argsort(z)):
                et = e_of(trial)
                if et <= e + 1e-4 * t * float(g @ step) or abs(et - e) <= 1e-15 * abs(e):
                    break
            t *= 0.5
        z = z + t * step
        e = e_of(z)
    raise ConvergenceError("linear chain did not converge", residual=float(np.abs(g).max()))


def chain_coulomb_blocks(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coulomb parts of the axial and transverse Hessian blocks of a chain.

    Full blocks are ``diag(1) + axial`` and ``diag(a^2) + transverse``.
    """
    _, a = _chain_energy_terms(z)
    inv3 = 1.0 / a**3
    axial = -2.0 * inv3
    np.fill_diagonal(axial, 2.0 * inv3.sum(axis=1))
    trans = inv3.copy()
    np.fill_diagonal(trans, -inv3.sum(axis=1))
    return axial, trans


def zigzag_stability(trap: TrapPotential, n_ions: int) -> tuple[bool, float]:
    """Is the linear chain a minimum? Returns (stable, lowest transverse mode).

    The mode frequency is signed: a negative value means an imaginary
    frequency of that magnitude (the buckling mode).
    """
    if n_ions < 3:
        raise ValueError("zigzag analysis needs at least 3 ions")
    z = solve_chain(n_ions)
    _, trans = chain_coulomb_blocks(z)
    mu = sla.eigvalsh(trans)
    a = trap.aniso
    lam = min(a[0] ** 2 + mu[0], a[1] ** 2 + mu[0])
    freq = math.copysign(math.sqrt(abs(lam)), lam) * trap.omega_z
    return bool(lam > 0), freq


def lowest_transverse_eigenvalue(n_ions: int, anisotropy: float) -> float:
    """Scaled lowest transverse curvature of the chain for w_x = w_y = anisotropy * w_z."""
    z = solve_chain(n_ions)
    _, trans = chain_coulomb_blocks(z)
    return anisotropy**2 + float(sla.eigvalsh(trans)[0])


def critical_anisotropy(n_ions: int, lo: float = 1.0, hi: float = 100.0,
                        rtol: float = 1e-12) -> float:
    """Bisect w_x/w_z for the point where the chain's softest transverse mode goes soft."""
    z = solve_chain(n_ions)
    _, trans = chain_coulomb_blocks(z)
    mu0 = float(sla.eigvalsh(trans)[0])

    def f(alpha):
        return alpha**2 + mu0

    if not (f(lo) < 0 < f(hi)):
        raise ValueError("bracket does not straddle the zigzag threshold")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def chain_band_extremes(trap: TrapPotential, n_ions: int, branch: str = "transverse"
                        ) -> tuple[float, float]:
    """(min, max) mode frequency of one branch of a long linear chain.

    Used beyond the dense cap: solves the 1-D chain and asks for the two
    extremal eigenvalues only.
    """
    z = solve_chain(n_ions)
    axial, trans = chain_coulomb_blocks(z)
    a = trap.aniso
    if branch == "axial":
        m = axial + np.eye(n_ions)
    elif branch in ("transverse", "x"):
        m = trans + a[0] ** 2 * np.eye(n_ions)
    elif branch == "y":
        m = trans + a[1] ** 2 * np.eye(n_ions)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    if n_ions <= 64:
        lam = sla.eigvalsh(m)
        lo, hi = lam[0], lam[-1]
    else:
        hi = eigsh(m, k=1, which="LA", return_eigenvectors=False)[0]
        lo = eigsh(m, k=1, which="SA", return_eigenvectors=False)[0]
    if lo < 0:
        raise InstabilityError(f"linear chain of {n_ions} ions is unstable in the {branch} branch")
    return trap.omega_z * math.sqrt(lo), trap.omega_z * math.sqrt(hi)


# ---------------------------------------------------------------------------
# files

def write_state_csv(state: CrystalState, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ion", "x_m", "y_m", "z_m"])
        for i, (x, y, z) in enumerate(state.positions):
            w.writerow([i, repr(float(x)), repr(float(y)), repr(float(z))])


def write_spectrum_csv(spec: PhononSpectrum, path: str | Path, eigvec_path: str | Path | None = None) -> None:
    """Mode table as CSV; eigenvectors optionally to a companion ``.npy``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "omega_rad_s", "freq_Hz", "branch", "axial_weight"])
        for i, (om, aw) in enumerate(zip(spec.frequencies, spec.axial_weight)):
            w.writerow([i, repr(float(om)), repr(float(om / (2 * math.pi))),
                        "axial" if aw > 0.5 else "transverse", repr(float(aw))])
    if eigvec_path is not None:
        with open(eigvec_path, "wb") as fh:
            np.save(fh, spec.eigenvectors)


def read_spectrum_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["omega_rad_s"]) for r in rows])
