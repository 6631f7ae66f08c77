"""Carrier-level Rabi dynamics, AOM pulse scheduling and multi-pass gate plans.

Rotating-frame Hamiltonian (hbar = 1):

    H(t) = -(delta/2) sz + (Omega(t)/2) (cos(phi) sx + sin(phi) sy)

``pi_pulse`` quantities use Omega tau = pi; ``switching`` quantities use
Omega tau = 2 pi. The two are kept apart by name.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy.special import erf

from .budget import n_ion_gate_time, pi_pulse_requirements
from .physcore import TWO_PI, IonSpecies

MIN_RISE_FALL = 2e-9

_SX = np.array([[0, 1], [1, 0]], complex)
_SY = np.array([[0, -1j], [1j, 0]], complex)
_SZ = np.array([[1, 0], [0, -1]], complex)


class CrosstalkError(ValueError):
    def __init__(self, msg: str, max_pulse_length: float):
        super().__init__(msg)
        self.max_pulse_length = max_pulse_length


class BandwidthError(ValueError):
    pass


@dataclass
class QubitState:
    """Amplitudes (c_g, c_e); the global phase is kept, not normalised away."""

    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, complex).reshape(2)

    @classmethod
    def ground(cls) -> "QubitState":
        return cls(np.array([1.0, 0.0], complex))

    @classmethod
    def excited(cls) -> "QubitState":
        return cls(np.array([0.0, 1.0], complex))

    @property
    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def excited_population(self) -> float:
        return float(abs(self.amplitudes[1]) ** 2)

    @property
    def ground_population(self) -> float:
        return float(abs(self.amplitudes[0]) ** 2)

    def fidelity(self, other: "QubitState") -> float:
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)


# ---------------------------------------------------------------------------
# envelopes; local time starts at 0

class Envelope(Protocol):
    def __call__(self, t): ...
    def integral(self, a: float, b: float) -> float: ...
    def breakpoints(self) -> list[float]: ...
    @property
    def duration(self) -> float: ...


@dataclass(frozen=True)
class Trapezoid:
    """rise / flat / fall; ``edge`` is "linear" or "cosine" (raised-cosine ramps)."""

    peak: float
    flat: float
    rise: float = 0.0
    fall: float = 0.0
    edge: str = "linear"

    def __post_init__(self):
        if min(self.flat, self.rise, self.fall) < 0:
            raise ValueError("durations must be >= 0")
        if self.edge not in ("linear", "cosine"):
            raise ValueError(f"unknown edge {self.edge!r}")

    @property
    def duration(self) -> float:
        return self.rise + self.flat + self.fall

    def breakpoints(self) -> list[float]:
        return [0.0, self.rise, self.rise + self.flat, self.duration]

    def _ramp(self, u):
        return u if self.edge == "linear" else 0.5 * (1.0 - np.cos(np.pi * u))

    def _ramp_integral(self, u):
        return 0.5 * u**2 if self.edge == "linear" else 0.5 * (u - np.sin(np.pi * u) / np.pi)

    def __call__(self, t):
        t = np.asarray(t, float)
        r, f = self.rise, self.flat
        out = np.zeros_like(t)
        if r > 0:
            m = (t >= 0) & (t < r)
            out[m] = self._ramp(t[m] / r)
        out[(t >= r) & (t <= r + f)] = 1.0
        if self.fall > 0:
            m = (t > r + f) & (t <= self.duration)
            out[m] = self._ramp((self.duration - t[m]) / self.fall)
        return self.peak * out

    def _cumulative(self, t: float) -> float:
        r, f, d = self.rise, self.flat, self.duration
        t = min(max(t, 0.0), d)
        total = 0.0
        if r > 0:
            total += r * self._ramp_integral(min(t, r) / r)
        total += max(0.0, min(t, r + f) - r)
        if self.fall > 0 and t > r + f:
            total += self.fall * (self._ramp_integral(1.0) - self._ramp_integral((d - t) / self.fall))
        return self.peak * total

    def integral(self, a: float, b: float) -> float:
        return self._cumulative(b) - self._cumulative(a)

    def area(self) -> float:
        return self.integral(0.0, self.duration)


def rectangular(peak: float, length: float) -> Trapezoid:
    return Trapezoid(peak, length)


@dataclass(frozen=True)
class Gaussian:
    """Transit envelope of an ion crossing a Gaussian waist, truncated at +-``cut`` sigma."""

    peak: float
    sigma: float
    cut: float = 6.0

    @property
    def duration(self) -> float:
        return 2 * self.cut * self.sigma

    @property
    def center(self) -> float:
        return self.cut * self.sigma

    def breakpoints(self) -> list[float]:
        return [0.0, self.center, self.duration]

    def __call__(self, t):
        t = np.asarray(t, float)
        val = self.peak * np.exp(-0.5 * ((t - self.center) / self.sigma) ** 2)
        return np.where((t >= 0) & (t <= self.duration), val, 0.0)

    def integral(self, a: float, b: float) -> float:
        a, b = max(a, 0.0), min(b, self.duration)
        if b <= a:
            return 0.0
        z = lambda t: (t - self.center) / (math.sqrt(2) * self.sigma)  # noqa: E731
        return float(self.peak * self.sigma * math.sqrt(math.pi / 2) * (erf(z(b)) - erf(z(a))))

    def area(self) -> float:
        return self.integral(0.0, self.duration)

    @classmethod
    def for_transit(cls, peak: float, waist: float, velocity: float, cut: float = 6.0) -> "Gaussian":
        # intensity ~ exp(-2 r^2 / w0^2) and Omega ~ I
        return cls(peak, waist / (2.0 * velocity), cut)


# ---------------------------------------------------------------------------
# evolution

def _rotation(theta: float, phi: float) -> np.ndarray:
    """exp(-i theta/2 (cos phi sx + sin phi sy))."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s * np.exp(-1j * phi)], [-1j * s * np.exp(1j * phi), c]])


def _expm_su2(a: np.ndarray) -> np.ndarray:
    """exp(-i a.sigma) for a real 3-vector a."""
    theta = float(np.linalg.norm(a))
    if theta == 0.0:
        return np.eye(2, dtype=complex)
    n = a / theta
    return math.cos(theta) * np.eye(2) - 1j * math.sin(theta) * (n[0] * _SX + n[1] * _SY + n[2] * _SZ)


def _hvec(omega: float, detuning: float, phase: float) -> np.ndarray:
    """H = h.sigma."""
    return np.array([0.5 * omega * math.cos(phase), 0.5 * omega * math.sin(phase), -0.5 * detuning])


_GL = 0.5 * math.sqrt(3) / 3  # Gauss-Legendre nodes at 1/2 -+ sqrt(3)/6


def magnus_propagator(envelope, detuning: float, phase: float, t0: float, t1: float,
                      max_phase_step: float = 0.02) -> np.ndarray:
    """Fourth-order Magnus propagator over [t0, t1], stepping between breakpoints."""
    pts = sorted({t0, t1, *[p for p in envelope.breakpoints() if t0 < p < t1]})
    u = np.eye(2, dtype=complex)
    for a, b in zip(pts[:-1], pts[1:]):
        peak = float(np.max(np.abs(envelope(np.linspace(a, b, 9)))))
        rate = math.hypot(peak, detuning)
        n = max(1, math.ceil(rate * (b - a) / max_phase_step))
        h = (b - a) / n
        for k in range(n):
            ta = a + k * h
            t1_, t2_ = ta + (0.5 - _GL) * h, ta + (0.5 + _GL) * h
            h1 = _hvec(float(envelope(t1_)), detuning, phase)
            h2 = _hvec(float(envelope(t2_)), detuning, phase)
            # -i Omega_M = -i h (h1 + h2)/2 - (sqrt3/12) h^2 [H2, H1];
            # [b.s, a.s] = 2i (b x a).s, so the commutator adds a real vector
            avec = 0.5 * h * (h1 + h2) + (math.sqrt(3) / 6) * h * h * np.cross(h2, h1)
            u = _expm_su2(avec) @ u
    return u


def rabi_evolve(state: QubitState, envelope, detuning: float = 0.0, duration: float | None = None, *,
                phase: float = 0.0, method: str = "auto") -> QubitState:
    """Evolve ``state`` through ``envelope`` on [0, duration].

    Resonant pulses of fixed phase are a rotation by the pulse area and are
    applied in closed form; ``method="magnus"`` forces the numerical path.
    """
    if abs(state.norm - 1.0) > 1e-9:
        raise ValueError("state must be normalised")
    duration = envelope.duration if duration is None else duration
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if method not in ("auto", "magnus"):
        raise ValueError(f"unknown method {method!r}")
    if detuning == 0.0 and method == "auto":
        u = _rotation(envelope.integral(0.0, duration), phase)
    else:
        u = magnus_propagator(envelope, detuning, phase, 0.0, duration)
    return QubitState(u @ state.amplitudes)


def flip_probability(area: float) -> float:
    return math.sin(area / 2) ** 2


# ---------------------------------------------------------------------------
# scheduling

@dataclass(frozen=True)
class Pulse:
    start: float
    flat: float
    rise: float
    fall: float
    peak_rabi: float
    phase: float
    target: int

    @property
    def stop(self) -> float:
        return self.start + self.rise + self.flat + self.fall

    def envelope(self) -> Trapezoid:
        return Trapezoid(self.peak_rabi, self.flat, self.rise, self.fall)


@dataclass
class PulseTrain:
    pulses: list[Pulse]
    arrival_rate: float
    n_transits: int

    @property
    def period(self) -> float:
        return 1.0 / self.arrival_rate

    def transit_time(self, ion: int) -> float:
        return (ion + 0.5) * self.period

    def transit_window(self, ion: int) -> tuple[float, float]:
        t = self.transit_time(ion)
        return t - 0.5 * self.period, t + 0.5 * self.period

    def envelope(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        out = np.zeros_like(t)
        for p in self.pulses:
            out += p.envelope()(t - p.start)
        return out

    def repetition_period(self) -> float | None:
        if len(self.pulses) < 2:
            return None
        starts = np.array([p.start for p in self.pulses])
        return float(np.min(np.diff(starts)))

    def write_csv(self, fh) -> None:
        """One row per pulse; times in ns, peak Rabi frequency as Omega/2pi in MHz."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "start_ns", "rise_ns", "flat_ns", "fall_ns", "peak_rabi_MHz", "phase_rad"])
        for p in self.pulses:
            w.writerow([p.target, repr(p.start * 1e9), repr(p.rise * 1e9), repr(p.flat * 1e9),
                        repr(p.fall * 1e9), repr(p.peak_rabi / TWO_PI / 1e6), repr(p.phase)])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    @classmethod
    def from_csv(cls, path: str | Path, arrival_rate: float) -> "PulseTrain":
        pulses = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                pulses.append(Pulse(float(row["start_ns"]) * 1e-9, float(row["flat_ns"]) * 1e-9,
                                    float(row["rise_ns"]) * 1e-9, float(row["fall_ns"]) * 1e-9,
                                    float(row["peak_rabi_MHz"]) * 1e6 * TWO_PI, float(row["phase_rad"]),
                                    int(row["target"])))
        n = max((p.target for p in pulses), default=-1) + 1
        return cls(pulses, arrival_rate, n)


def max_pulse_length(arrival_rate: float, rise_fall: float) -> float:
    return 1.0 / arrival_rate - 2.0 * rise_fall


def schedule_pulses(arrival_rate: float, targets: Sequence[int], pulse_length: float,
                    rise_fall: float = MIN_RISE_FALL, *, peak_rabi: float | None = None,
                    phase: float = 0.0, min_rise_fall: float = MIN_RISE_FALL,
                    bandwidth_cap: float | None = None) -> PulseTrain:
    """One trapezoidal pulse per target, centred on that ion's transit.

    Ion i transits at (i + 1/2)/rate and owns the window of one period around
    it. ``pulse_length`` is the flat top. Without ``peak_rabi`` each pulse is
    a pi pulse.
    """
    if not arrival_rate > 0 or not pulse_length > 0:
        raise ValueError("arrival_rate and pulse_length must be positive")
    if rise_fall < min_rise_fall:
        raise ValueError(f"rise/fall {rise_fall:.3g} s below hardware minimum {min_rise_fall:.3g} s")
    period = 1.0 / arrival_rate
    extent = pulse_length + 2.0 * rise_fall
    if extent > period * (1 + 1e-12):
        best = max_pulse_length(arrival_rate, rise_fall)
        raise CrosstalkError(
            f"pulse {pulse_length * 1e9:.3f} ns + 2 x {rise_fall * 1e9:.3f} ns edges exceeds the "
            f"{period * 1e9:.3f} ns ion period; maximum feasible flat top is "
            f"{max(best, 0.0) * 1e9:.3f} ns", best)
    targets = sorted(set(int(t) for t in targets))
    if targets and targets[0] < 0:
        raise ValueError("target indices must be >= 0")
    if peak_rabi is None:
        peak_rabi = math.pi / (pulse_length + rise_fall)  # linear-edge area = peak (flat + rise)
    pulses = [Pulse((t + 0.5) * period - 0.5 * extent, pulse_length, rise_fall, rise_fall,
                    peak_rabi, phase, t) for t in targets]
    train = PulseTrain(pulses, arrival_rate, (targets[-1] + 1) if targets else 0)
    rep = train.repetition_period()
    if bandwidth_cap is not None and rep is not None and 1.0 / rep > bandwidth_cap * (1 + 1e-12):
        raise BandwidthError(f"repetition rate {1 / rep:.4g} Hz exceeds modulator cap {bandwidth_cap:.4g} Hz")
    return train


def leaked_area(train: PulseTrain, ion: int, n_eval: int = 2001) -> float:
    """Max |envelope| seen inside ``ion``'s transit window (zero for a safe schedule)."""
    a, b = train.transit_window(ion)
    t = np.linspace(a, b, n_eval)
    return float(np.max(np.abs(train.envelope(t)))) if len(train.pulses) else 0.0


# ---------------------------------------------------------------------------
# budgets and plans

@dataclass(frozen=True)
class SwitchingBudget:
    single_ion_rabi: float  # rad/s, 2 pi / pulse_length
    intensity: float  # W/m^2 for that Rabi frequency
    n_ion_gate_time: float  # s
    modulator_rate: float  # Hz


def switching_budget(sp: IonSpecies, pulse_length: float, eta: float, n_ions: float, *,
                     velocity: float | None = None, spacing: float | None = None) -> SwitchingBudget:
    """Switching-rate budget (2 pi convention) for a pulse of ``pulse_length``.

    The modulator rate is the ion arrival rate v/spacing when both are given,
    otherwise the back-to-back rate 1/pulse_length.
    """
    for name, v in (("pulse_length", pulse_length), ("eta", eta), ("n_ions", n_ions)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    # the pi-pulse intensity scales linearly with Rabi frequency; a 2 pi
    # rotation in the same time is a pi pulse of half the length
    rabi, intensity = pi_pulse_requirements(sp, pulse_length / 2.0)
    gate = n_ion_gate_time(rabi, eta, n_ions)
    rate = velocity / spacing if velocity and spacing else 1.0 / pulse_length
    return SwitchingBudget(rabi, intensity, gate, rate)


@dataclass
class GatePlan:
    target_angle: float
    phase: float
    passes: int
    fragments: list[float]
    angle_ledger: list[float]  # cumulative angle after each pass
    revolution_period: float
    contrast: float = 1.0
    fragment_pulses: list = field(default_factory=list)

    @property
    def wall_clock(self) -> float:
        return self.passes * self.revolution_period


def plan_piecewise_gate(target_angle: float, max_angle_per_pass: float, revolution_period: float, *,
                        phase: float = 0.0, coherence_time: float | None = None,
                        fragment_rabi: float | None = None) -> GatePlan:
    """Split a rotation into equal fragments, one per pass through the beam.

    Laser phase is assumed coherent from pass to pass. ``coherence_time``
    adds an exponential contrast decay over the wall-clock time.
    """
    if not max_angle_per_pass > 0:
        raise ValueError("max_angle_per_pass must be positive")
    if not revolution_period > 0:
        raise ValueError("revolution_period must be positive")
    ratio = abs(target_angle) / max_angle_per_pass
    passes = math.ceil(ratio - 1e-12 * max(1.0, ratio)) if ratio > 0 else 0
    frag = target_angle / passes if passes else 0.0
    fragments = [frag] * passes
    ledger = list(np.cumsum(fragments)) if passes else []
    if passes:
        ledger[-1] = float(target_angle)
    contrast = 1.0
    if coherence_time is not None:
        contrast = math.exp(-passes * revolution_period / coherence_time)
    pulses = []
    if fragment_rabi is not None and passes:
        pulses = [rectangular(fragment_rabi, abs(frag) / fragment_rabi)] * passes
    return GatePlan(float(target_angle), phase, passes, fragments, [float(x) for x in ledger],
                    revolution_period, contrast, pulses)


def execute_plan(plan: GatePlan, state: QubitState, peak_rabi: float, *, method: str = "auto") -> QubitState:
    """Apply each fragment as a resonant rectangular pulse at ``peak_rabi``."""
    for frag in plan.fragments:
        phase = plan.phase + (math.pi if frag < 0 else 0.0)
        env = rectangular(peak_rabi, abs(frag) / peak_rabi)
        state = rabi_evolve(state, env, 0.0, phase=phase, method=method)
    return state
