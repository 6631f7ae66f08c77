"""Time-domain simulation of ions on the ring orbit.

Coordinates are local to the orbit: ``x`` radial, ``y`` vertical, ``s`` arc
length (periodic in the circumference). Velocities are stored as
``(vx, vy, vs)``. Beam directions use the same frame.

Scattering uses the two-level Lorentzian rate

    R = (Gamma/2) s0 / (1 + s0 + (2 delta_eff / Gamma)^2),  delta_eff = delta - k (n.v)

per beam, with no cross-saturation between beams. The mean force ``hbar k R n``
enters the deterministic part; photon shot noise and isotropic spontaneous
emission enter as kicks after the first velocity half-step.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .budget import mathieu_q, micromotion_displacement
from .physcore import CONST, TWO_PI, IonSpecies, RingConfig, beam_velocity

HBAR = CONST.reduced_planck
KB = CONST.boltzmann


class StepSizeError(ValueError):
    pass


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class LaserBeam:
    wavelength: float
    detuning: float  # rad/s, lab frame
    saturation: float
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    waist: float = 10e-6
    profile: str = "round"
    aspect: float = 1.0  # elliptical: length along the orbit / waist
    # arc position of the beam centre; None means the beam covers the whole
    # orbit (an idealised co-moving cooler)
    center: float | None = None

    def __post_init__(self):
        d = np.asarray(self.direction, float)
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"beam direction must be a unit vector, |n| = {norm}")
        if self.saturation < 0:
            raise ValueError("saturation must be >= 0")
        if not self.waist > 0 or not self.wavelength > 0:
            raise ValueError("waist and wavelength must be positive")
        if self.profile not in ("round", "elliptical"):
            raise ValueError(f"unknown profile {self.profile!r}")
        object.__setattr__(self, "direction", tuple(float(c) for c in d))

    @property
    def k(self) -> float:
        return TWO_PI / self.wavelength

    @property
    def footprint(self) -> float | None:
        """Illuminated arc length, or None for the whole orbit."""
        if self.center is None:
            return None
        return 2.0 * self.waist * (self.aspect if self.profile == "elliptical" else 1.0)


def counter_propagating_pair(wavelength, detuning, split, saturation, **kw):
    """Two tangential beams along +s and -s whose detunings differ by ``split``.

    The +s beam gets ``detuning + split/2``; the ring then settles at
    v = split / (2k).
    """
    return [
        LaserBeam(wavelength, detuning + split / 2, saturation, (0.0, 0.0, 1.0), **kw),
        LaserBeam(wavelength, detuning - split / 2, saturation, (0.0, 0.0, -1.0), **kw),
    ]


def scattering_rate(beam: LaserBeam, velocity, linewidth: float) -> np.ndarray:
    v = np.asarray(velocity, float)
    n = np.asarray(beam.direction)
    delta = beam.detuning - beam.k * (v @ n)
    s0 = beam.saturation
    return 0.5 * linewidth * s0 / (1.0 + s0 + (2.0 * delta / linewidth) ** 2)


def scattering_force(beam: LaserBeam, velocity, linewidth: float, wavelength: float | None = None):
    """Mean radiation-pressure force (N) for one beam; vectorised over velocity rows."""
    if not linewidth > 0:
        raise ValueError("linewidth must be positive")
    if wavelength is not None and wavelength != beam.wavelength:
        beam = replace(beam, wavelength=wavelength)
    rate = scattering_rate(beam, velocity, linewidth)
    return HBAR * beam.k * np.multiply.outer(rate, np.asarray(beam.direction))


def net_force_along(beams: Sequence[LaserBeam], v: float, linewidth: float,
                    axis=(0.0, 0.0, 1.0)) -> float:
    """Net deterministic force projected on ``axis`` for an ion moving at v along it."""
    vel = v * np.asarray(axis, float)
    return float(sum(scattering_force(b, vel, linewidth) for b in beams) @ np.asarray(axis))


def damping_time(beams: Sequence[LaserBeam], mass: float, linewidth: float, v0: float = 0.0,
                 axis=(0.0, 0.0, 1.0)) -> float:
    """m / beta with beta = -dF/dv at v0 (central difference)."""
    h = 1e-4 * linewidth / beams[0].k
    beta = -(net_force_along(beams, v0 + h, linewidth, axis)
             - net_force_along(beams, v0 - h, linewidth, axis)) / (2 * h)
    if not beta > 0:
        raise ValueError("beams do not damp motion at this velocity")
    return mass / beta


# ---------------------------------------------------------------------------
# stray fields

@dataclass
class StrayFieldMap:
    """DC field along the orbit: uniform + patches + harmonics - compensation.

    Compensation entries are (arc position, applied field) and are linearly
    interpolated, periodically, between entries; a single entry applies
    everywhere.
    """

    circumference: float
    uniform: tuple[float, float, float] = (0.0, 0.0, 0.0)
    patches: list[tuple[float, float, tuple[float, float, float]]] = field(default_factory=list)
    harmonics: list[tuple[int, tuple[float, float, float], float]] = field(default_factory=list)
    compensation: list[tuple[float, tuple[float, float, float]]] = field(default_factory=list)

    def raw_field(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, float))
        e = np.tile(np.asarray(self.uniform, float), (len(s), 1))
        c = self.circumference
        for start, end, vec in self.patches:
            a, b = start % c, end % c
            u = np.mod(s, c)
            inside = (u >= a) & (u < b) if a <= b else (u >= a) | (u < b)
            e[inside] += np.asarray(vec, float)
        for n, amp, phase in self.harmonics:
            e += np.multiply.outer(np.sin(TWO_PI * n * s / c + phase), np.asarray(amp, float))
        return e

    def applied_field(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, float))
        if not self.compensation:
            return np.zeros((len(s), 3))
        pos = np.array([p for p, _ in self.compensation], float) % self.circumference
        vals = np.array([v for _, v in self.compensation], float)
        if len(pos) == 1:
            return np.tile(vals[0], (len(s), 1))
        order = np.argsort(pos)
        pos, vals = pos[order], vals[order]
        c = self.circumference
        xp = np.concatenate([pos[-1:] - c, pos, pos[:1] + c])
        out = np.empty((len(s), 3))
        u = np.mod(s, c)
        for k in range(3):
            fp = np.concatenate([vals[-1:, k], vals[:, k], vals[:1, k]])
            out[:, k] = np.interp(u, xp, fp)
        return out

    def field(self, s) -> np.ndarray:
        """Net field (V/m), shape (len(s), 3)."""
        return self.raw_field(s) + self.applied_field(s)

    def is_zero(self) -> bool:
        return (not any(self.uniform) and not self.patches and not self.harmonics
                and not self.compensation)


@dataclass
class CompensationResult:
    stray: StrayFieldMap
    max_sensor_residual: float  # V/m
    max_orbit_residual: float  # V/m, dense evaluation
    gate_residuals: np.ndarray  # V/m, radial component magnitude at each gate
    gate_displacements: np.ndarray  # m
    meets_target: bool


def compensate_stray(stray: StrayFieldMap, sensors: Sequence[float], target_residual: float, *,
                     gate_positions: Sequence[float] = (), species: IonSpecies | None = None,
                     secular_freq_x: float | None = None, n_eval: int = 4096) -> CompensationResult:
    """Null the sampled field at each sensor with a compensation electrode.

    The new map's compensation entries are exactly the sensor set; any
    previous entries are superseded. Residual displacements at the gate
    positions use q E / (m w_x^2) and need ``species`` and ``secular_freq_x``.
    """
    sensors = np.asarray(sensors, float)
    c = stray.circumference
    ring = np.sort(np.mod(sensors, c))
    gaps = np.diff(np.r_[ring, ring[:1] + c]) if len(ring) > 1 else np.array([c])
    if gaps.min() <= 1e-12 * c:
        raise ValueError("sensor positions must be distinct on the ring")
    raw = stray.raw_field(sensors)
    comp = [(float(p), tuple(float(c) for c in -e)) for p, e in zip(sensors, raw)]
    new = replace(stray, compensation=comp, patches=list(stray.patches), harmonics=list(stray.harmonics))
    sensor_res = np.linalg.norm(new.field(sensors), axis=1).max()
    grid = np.linspace(0.0, stray.circumference, n_eval, endpoint=False)
    grid = np.concatenate([grid, sensors, np.asarray(gate_positions, float)])
    orbit_res = float(np.linalg.norm(new.field(grid), axis=1).max())
    gates = np.asarray(gate_positions, float)
    gate_res = np.abs(new.field(gates)[:, 0]) if len(gates) else np.zeros(0)
    if len(gates) and species is not None and secular_freq_x is not None:
        gate_dx = np.array([micromotion_displacement(e, species, secular_freq_x) for e in gate_res])
    else:
        gate_dx = np.zeros(len(gates))
    check = gate_res if len(gates) else np.array([orbit_res])
    return CompensationResult(new, float(sensor_res), orbit_res, gate_res, gate_dx,
                              bool(np.all(check <= target_residual)))


# ---------------------------------------------------------------------------
# simulation state

@dataclass
class SimState:
    s: np.ndarray  # arc coordinate, [0, C)
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray  # (N, 3): vx, vy, vs
    mass: np.ndarray
    charge: np.ndarray
    bright: np.ndarray  # bool; dark ions scatter nothing
    linewidth: float
    circumference: float
    time: float = 0.0
    turns: np.ndarray | None = None
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)
    kicks: int = 0
    expected_kicks: float = 0.0
    recoil_energy: float = 0.0  # J deposited by stochastic kicks

    def __post_init__(self):
        if self.turns is None:
            self.turns = np.zeros(len(self.s), dtype=np.int64)

    @property
    def n_ions(self) -> int:
        return len(self.s)

    def copy(self) -> "SimState":
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng.bit_generator.state
        return replace(self, s=self.s.copy(), x=self.x.copy(), y=self.y.copy(), v=self.v.copy(),
                       turns=self.turns.copy(), rng=rng)

    def unwrapped_s(self) -> np.ndarray:
        return self.s + self.turns * self.circumference

    def transverse_energy(self, omega_x: float, omega_y: float) -> float:
        m = self.mass
        return float(0.5 * (m * (self.v[:, 0] ** 2 + self.v[:, 1] ** 2)).sum()
                     + 0.5 * (m * (omega_x**2 * self.x**2 + omega_y**2 * self.y**2)).sum())


def initial_state(cfg: RingConfig, sp: IonSpecies, n_ions: int | None = None, *, seed: int = 0,
                  velocity: float | None = None, linewidth: float | None = None,
                  dark: Sequence[bool] | None = None, dark_species: IonSpecies | None = None,
                  spread: str = "even") -> SimState:
    """Ions evenly spaced on the orbit at the ring velocity, at rest transversely."""
    n = cfg.n_ions if n_ions is None else n_ions
    rng = np.random.default_rng(seed)
    c = cfg.circumference
    s = (np.arange(n) + 0.5) * (c / n) if spread == "even" else np.zeros(n)
    v = np.zeros((n, 3))
    v[:, 2] = beam_velocity(cfg, sp) if velocity is None else velocity
    dark_mask = np.zeros(n, bool) if dark is None else np.asarray(dark, bool)
    mass = np.full(n, sp.mass)
    if dark_species is not None:
        mass[dark_mask] = dark_species.mass
    gamma = linewidth if linewidth is not None else sp.require("cooling_linewidth")
    return SimState(s=s, x=np.zeros(n), y=np.zeros(n), v=v, mass=mass,
                    charge=np.full(n, sp.charge), bright=~dark_mask, linewidth=gamma,
                    circumference=c, rng=rng)


def set_temperature(state: SimState, temperature: float, axes=(0, 1, 2), keep_mean=True) -> None:
    """Idealised cooling stage: resample velocities from a Maxwellian at T.

    Stands in for the sub-Doppler stages that are not simulated.
    """
    sigma = np.sqrt(KB * temperature / state.mass)
    for k in axes:
        mean = state.v[:, k].mean() if keep_mean else 0.0
        state.v[:, k] = mean + sigma * state.rng.standard_normal(state.n_ions)


@dataclass(frozen=True)
class DynamicsOptions:
    noise: bool = True
    rf_drive: bool = False
    coulomb: bool = False
    coulomb_neighbors: int = 8  # used above FULL_NBODY ions
    dispersion: bool = False  # outward push m (v_s^2 - v0^2) / R for off-energy ions


FULL_NBODY = 512


def max_stable_dt(cfg: RingConfig, linewidth: float) -> float:
    return 0.05 / max(linewidth, cfg.secular_freq_x, cfg.secular_freq_y, cfg.rf_drive_freq)


class _BeamArrays:
    """Beams packed into arrays so rates for all ions and beams are one operation."""

    def __init__(self, beams: Sequence[LaserBeam]):
        beams = [b for b in beams if b.saturation > 0]
        self.n = len(beams)
        self.dirs = np.array([b.direction for b in beams], float).reshape(-1, 3)
        self.k = np.array([b.k for b in beams], float)
        self.detuning = np.array([b.detuning for b in beams], float)
        self.s0 = np.array([b.saturation for b in beams], float)
        self.center = np.array([np.nan if b.center is None else b.center for b in beams], float)
        self.half = np.array([0.0 if b.footprint is None else 0.5 * b.footprint for b in beams], float)
        self.local = ~np.isnan(self.center)

    def rates(self, state: SimState, v: np.ndarray) -> np.ndarray:
        """Scattering rates, shape (N, B); zero for dark ions and outside footprints."""
        gamma = state.linewidth
        delta = self.detuning - self.k * (v @ self.dirs.T)
        r = 0.5 * gamma * self.s0 / (1.0 + self.s0 + (2.0 * delta / gamma) ** 2)
        r *= state.bright[:, None]
        if self.local.any():
            c = state.circumference
            d = np.mod(state.s[:, None] - self.center[self.local] + 0.5 * c, c) - 0.5 * c
            r[:, self.local] *= np.abs(d) <= self.half[self.local]
        return r


def _coulomb(state: SimState, opts: DynamicsOptions) -> np.ndarray:
    n = state.n_ions
    c = state.circumference
    pos = np.column_stack([state.x, state.y, state.s])
    kq = CONST.coulomb * state.charge
    if n <= FULL_NBODY:
        d = pos[:, None, :] - pos[None, :, :]
        d[..., 2] = np.mod(d[..., 2] + 0.5 * c, c) - 0.5 * c
        r2 = (d**2).sum(-1)
        np.fill_diagonal(r2, np.inf)
        w = kq[:, None] * state.charge[None, :] * r2**-1.5
        return (w[..., None] * d).sum(axis=1)
    order = np.argsort(state.s)
    f = np.zeros((n, 3))
    for off in range(1, opts.coulomb_neighbors + 1):
        for sgn in (1, -1):
            j = order[np.roll(np.arange(n), -sgn * off)]
            d = pos[order] - pos[j]
            d[:, 2] = np.mod(d[:, 2] + 0.5 * c, c) - 0.5 * c
            r2 = (d**2).sum(-1)
            f[order] += (kq[order] * state.charge[j] * r2**-1.5)[:, None] * d
    return f


def _forces(state: SimState, beams: _BeamArrays, stray: StrayFieldMap | None, cfg: RingConfig,
            opts: DynamicsOptions, t: float, v: np.ndarray):
    """Deterministic force (N, 3) and the scattering rates it used."""
    m = state.mass
    f = np.empty((state.n_ions, 3))
    if opts.rf_drive:
        # a = 0 Mathieu drive; its pseudopotential reproduces w_x and w_y
        om = cfg.rf_drive_freq
        drive = 0.5 * om**2 * math.cos(om * t)
        f[:, 0] = m * mathieu_q(cfg.secular_freq_x, om) * drive * state.x
        f[:, 1] = -m * mathieu_q(cfg.secular_freq_y, om) * drive * state.y
    else:
        f[:, 0] = -m * cfg.secular_freq_x**2 * state.x
        f[:, 1] = -m * cfg.secular_freq_y**2 * state.y
    f[:, 2] = 0.0
    if stray is not None and not stray.is_zero():
        f += state.charge[:, None] * stray.field(state.s)
    if opts.dispersion:
        # excess centrifugal force over the design orbit, 2 (E - E0) / R
        f[:, 0] += (m * v[:, 2] ** 2 - 2.0 * cfg.kinetic_energy) / cfg.radius
    if opts.coulomb and state.n_ions > 1:
        f += _coulomb(state, opts)
    rates = None
    if beams.n:
        rates = beams.rates(state, v)
        f += (HBAR * rates * beams.k) @ beams.dirs
    return f, rates


def _kicks(state: SimState, beams: _BeamArrays, rates: np.ndarray, dt: float) -> None:
    lam = rates * dt
    n = state.rng.poisson(lam)
    total = int(n.sum())
    state.kicks += total
    state.expected_kicks += float(lam.sum())
    # absorption shot noise about the mean force already applied
    dp = (HBAR * (n - lam) * beams.k) @ beams.dirs
    if total:
        ions, which = np.nonzero(n)
        counts = n[ions, which]
        owners = np.repeat(ions, counts)
        p = HBAR * np.repeat(beams.k[which], counts)
        u = state.rng.standard_normal((total, 3))
        u *= (p / np.linalg.norm(u, axis=1))[:, None]
        np.add.at(dp, owners, u)
    state.recoil_energy += float(((dp**2).sum(axis=1) / (2 * state.mass)).sum())
    state.v += dp / state.mass[:, None]


def wrap_arc(s: np.ndarray, circumference: float) -> tuple[np.ndarray, np.ndarray]:
    """Reduce arc positions into [0, C); returns (s, whole turns removed)."""
    turns = np.floor_divide(s, circumference).astype(np.int64)
    s = s - turns * circumference
    # rounding can leave s a hair outside [0, C); move it across the seam
    over = s >= circumference
    s[over] -= circumference
    turns[over] += 1
    under = s < 0
    s[under] += circumference
    turns[under] -= 1
    s[s >= circumference] = 0.0
    return s, turns


def _step(state, beams: _BeamArrays, stray, cfg, dt, opts):
    inv_m = 1.0 / state.mass[:, None]
    f, rates = _forces(state, beams, stray, cfg, opts, state.time, state.v)
    state.v += 0.5 * dt * f * inv_m
    if opts.noise and rates is not None:
        _kicks(state, beams, rates, dt)
    state.x += dt * state.v[:, 0]
    state.y += dt * state.v[:, 1]
    state.s, turns = wrap_arc(state.s + dt * state.v[:, 2], state.circumference)
    state.turns += turns
    state.time += dt
    f, _ = _forces(state, beams, stray, cfg, opts, state.time, state.v)
    state.v += 0.5 * dt * f * inv_m


def _check_dt(state, cfg, dt):
    limit = max_stable_dt(cfg, state.linewidth)
    if not 0 < dt < limit:
        raise StepSizeError(f"dt = {dt:.3e} s violates the resolution guard dt < {limit:.3e} s")


def step(state: SimState, beams: Sequence[LaserBeam], stray: StrayFieldMap | None, cfg: RingConfig,
         dt: float, opts: DynamicsOptions = DynamicsOptions()) -> SimState:
    """Advance one step in place (velocity Verlet, kicks after the first half-step)."""
    _check_dt(state, cfg, dt)
    _step(state, _BeamArrays(beams), stray, cfg, dt, opts)
    return state


# ---------------------------------------------------------------------------
# runs, history and estimators

@dataclass
class History:
    times: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    positions: list = field(default_factory=list)  # (x, y, s_unwrapped) per sample

    def append(self, state: SimState) -> None:
        self.times.append(state.time)
        self.velocities.append(state.v.copy())
        self.positions.append(np.column_stack([state.x, state.y, state.unwrapped_s()]))

    def arrays(self):
        return np.asarray(self.times), np.asarray(self.velocities), np.asarray(self.positions)


class TrajectoryRecorder:
    """Append-only CSV of per-ion snapshots, every ``decimation`` steps."""

    header = ["t_s", "ion", "s_m", "x_m", "y_m", "vx_m_s", "vy_m_s", "vs_m_s"]

    def __init__(self, fh: io.TextIOBase, decimation: int = 1):
        self.fh = fh
        self.decimation = max(1, int(decimation))
        self.writer = csv.writer(fh, lineterminator="\n")
        self.writer.writerow(self.header)
        self._count = 0

    def __call__(self, state: SimState) -> None:
        if self._count % self.decimation == 0:
            for i in range(state.n_ions):
                self.writer.writerow([repr(state.time), i, repr(float(state.s[i])), repr(float(state.x[i])),
                                      repr(float(state.y[i])), *(repr(float(c)) for c in state.v[i])])
        self._count += 1


def run(state: SimState, beams, stray, cfg, dt, n_steps, opts: DynamicsOptions = DynamicsOptions(),
        sample_every: int = 0, recorder=None) -> History:
    _check_dt(state, cfg, dt)
    packed = _BeamArrays(beams)
    hist = History()
    for k in range(n_steps):
        _step(state, packed, stray, cfg, dt, opts)
        if sample_every and (k + 1) % sample_every == 0:
            hist.append(state)
        if recorder is not None:
            recorder(state)
    return hist


def estimate_temperatures(history: History, mass: float, *, burn_in: float = 0.0,
                          cooling_time: float | None = None, convention: str = "paper",
                          min_samples: int = 10) -> tuple[float, float, float]:
    """(T_par, T_perp, mean longitudinal velocity) from a sampled history.

    ``convention="paper"`` uses k_B T_par = m <dv_s^2> / 2, the beam-physics
    definition; ``"equipartition"`` uses k_B T_par = m <dv_s^2>, which is the
    convention of the textbook Doppler limit. T_perp is always from
    equipartition over the two transverse degrees of freedom.
    """
    times, vel, _ = history.arrays()
    if len(times) == 0:
        raise InsufficientHistoryError("empty history")
    keep = times >= times[0] + burn_in if burn_in else np.ones(len(times), bool)
    times, vel = times[keep], vel[keep]
    if len(times) < min_samples:
        raise InsufficientHistoryError(f"only {len(times)} samples after burn-in")
    if cooling_time is not None and (times[-1] - times[0]) < 10 * cooling_time:
        raise InsufficientHistoryError("history shorter than 10 cooling times after burn-in")
    vs = vel[..., 2].ravel()
    var_s = float(np.mean((vs - vs.mean()) ** 2))
    factor = {"paper": 0.5, "equipartition": 1.0}[convention]
    t_par = factor * mass * var_s / KB
    vt = vel[..., :2].reshape(-1, 2)
    var_t = float(np.mean((vt - vt.mean(axis=0)) ** 2, axis=0).sum())
    t_perp = 0.5 * mass * var_t / KB
    return t_par, t_perp, float(vs.mean())


def doppler_limit(linewidth: float) -> float:
    """hbar Gamma / (2 k_B)."""
    return HBAR * linewidth / (2 * KB)


def summarize(state: SimState, history: History, cfg: RingConfig, mass: float, **kw) -> dict:
    t_par, t_perp, v_mean = estimate_temperatures(history, mass, **kw)
    return {
        "time_s": state.time,
        "n_ions": state.n_ions,
        "T_par_K": t_par,
        "T_perp_K": t_perp,
        "v_mean_m_s": v_mean,
        "recoil_kicks": state.kicks,
        "expected_kicks": state.expected_kicks,
        "recoil_energy_J": state.recoil_energy,
        "transverse_energy_J": state.transverse_energy(cfg.secular_freq_x, cfg.secular_freq_y),
    }


def write_summary(path: str | Path, summary: dict) -> None:
    import json
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
