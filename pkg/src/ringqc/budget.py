"""Closed-form feasibility estimates for a storage-ring ion quantum computer.

All functions are pure and take/return SI quantities. Frequencies named
``*_freq`` are angular (rad/s) unless the name says ``rate`` (Hz).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .physcore import CONST, PALLAS, TWO_PI, IonSpecies, MissingDataError, RingConfig, beam_velocity


def _positive(**kw):
    for name, value in kw.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class LambDickeParams:
    recoil_freq: float
    mode_freq: float
    eta: float
    wavevector: float


@dataclass(frozen=True)
class BudgetEntry:
    value: float
    unit: str
    provenance: str
    paper_discrepancy: str | None = None


@dataclass
class BudgetReport:
    entries: dict[str, BudgetEntry] = field(default_factory=dict)

    def add(self, name, value, unit, provenance, paper_discrepancy=None):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"budget entry {name} is not finite: {value!r}")
        self.entries[name] = BudgetEntry(value, unit, provenance, paper_discrepancy)
        return value

    def __getitem__(self, name) -> float:
        return self.entries[name].value

    def to_dict(self) -> dict:
        out = {}
        for name, e in self.entries.items():
            row = {"value": e.value, "unit": e.unit, "provenance": e.provenance}
            if e.paper_discrepancy:
                row["paper_discrepancy"] = e.paper_discrepancy
            out[name] = row
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# single-ion localisation and temperatures

def localization_length(temperature: float, mass: float, mode_freq: float) -> float:
    """RMS-type extent sqrt(2 k_B T / (m w^2)) of a thermal ion in a harmonic well."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    _positive(mass=mass, mode_freq=mode_freq)
    return math.sqrt(2.0 * CONST.boltzmann * temperature / (mass * mode_freq**2))


def transverse_temperature_from_size(size: float, mass: float, mode_freq: float) -> float:
    """Inverse of :func:`localization_length`."""
    if size < 0:
        raise ValueError("size must be >= 0")
    _positive(mass=mass, mode_freq=mode_freq)
    return mass * mode_freq**2 * size**2 / (2.0 * CONST.boltzmann)


def lamb_dicke(sp: IonSpecies | float, laser_wavelength: float, mode_freq: float) -> LambDickeParams:
    mass = sp.mass if isinstance(sp, IonSpecies) else float(sp)
    _positive(laser_wavelength=laser_wavelength, mode_freq=mode_freq)
    k = TWO_PI / laser_wavelength
    recoil = CONST.reduced_planck * k**2 / (2.0 * mass)
    return LambDickeParams(recoil_freq=recoil, mode_freq=mode_freq,
                           eta=math.sqrt(recoil / mode_freq), wavevector=k)


def ion_spacing(sp: IonSpecies | float, mode_freq_z: float, charge: float | None = None) -> float:
    """Cube root of e^2 / (2 pi eps0 m w_z^2).

    This is exactly the equilibrium separation of two ions in a harmonic well.
    """
    mass = sp.mass if isinstance(sp, IonSpecies) else float(sp)
    q = charge if charge is not None else (sp.charge if isinstance(sp, IonSpecies) else CONST.elementary_charge)
    _positive(mode_freq_z=mode_freq_z)
    return (q**2 / (TWO_PI * CONST.vacuum_permittivity * mass * mode_freq_z**2)) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# micromotion

def micromotion_displacement(stray_field: float, sp: IonSpecies, secular_freq_x: float) -> float:
    """Equilibrium shift q E / (m w_x^2) caused by a DC stray field."""
    _positive(secular_freq_x=secular_freq_x)
    return sp.charge * stray_field / (sp.mass * secular_freq_x**2)


def mathieu_q(secular_freq: float, rf_freq: float) -> float:
    """Lowest-order relation w = q Omega / (2 sqrt 2) with a = 0."""
    return 2.0 * math.sqrt(2.0) * secular_freq / rf_freq


def micromotion_amplitude_energy(displacement: float, secular_freq: float, rf_freq: float,
                                 mass: float) -> tuple[float, float, float]:
    """Excess-micromotion amplitude, mean kinetic energy and equivalent temperature.

    x(t) = x0 (1 + q/2 cos(Omega t)) to lowest order, so the driven part has
    amplitude q x0 / 2 and <KE> = m (q x0/2)^2 Omega^2 / 4.
    """
    _positive(secular_freq=secular_freq, mass=mass)
    if not rf_freq > secular_freq:
        raise ValueError("rf_freq must exceed secular_freq for the pseudopotential picture")
    q = mathieu_q(secular_freq, rf_freq)
    amplitude = q * abs(displacement) / 2.0
    kinetic = mass * amplitude**2 * rf_freq**2 / 4.0
    return amplitude, kinetic, kinetic / CONST.boltzmann


# ---------------------------------------------------------------------------
# laser geometry, velocity control and pulse timing

def doppler_control_velocity(delta_omega: float, cooling_wavelength: float) -> float:
    """Ring velocity v = Delta_omega / (2k) set by two split counter-propagating beams."""
    _positive(cooling_wavelength=cooling_wavelength)
    return delta_omega / (2.0 * TWO_PI / cooling_wavelength)


def doppler_control_split(velocity: float, cooling_wavelength: float) -> float:
    """Inverse: beam frequency split (rad/s) needed for a given velocity."""
    _positive(cooling_wavelength=cooling_wavelength)
    return 2.0 * (TWO_PI / cooling_wavelength) * velocity


def rayleigh_range(waist: float, wavelength: float) -> float:
    _positive(waist=waist, wavelength=wavelength)
    return math.pi * waist**2 / wavelength


def pulse_timing(waist: float, velocity: float, spacing: float) -> tuple[float, float, float]:
    """(w0 / 2v, spacing / v, v / spacing)."""
    _positive(waist=waist, velocity=velocity, spacing=spacing)
    period = spacing / velocity
    return waist / (2.0 * velocity), period, 1.0 / period


def pi_pulse_requirements(sp: IonSpecies, target_pulse: float) -> tuple[float, float]:
    """Rabi frequency and intensity for a pi pulse of the given length.

    The qubit line is an electric quadrupole transition; the Rabi frequency is
    taken to scale linearly with intensity, anchored at the species' measured
    reference point. No saturation.
    """
    _positive(target_pulse=target_pulse)
    if sp.reference_rabi is None:
        raise MissingDataError(f"species {sp.name!r} has no reference Rabi frequency")
    ref_rabi, ref_intensity = sp.reference_rabi
    rabi = math.pi / target_pulse
    return rabi, ref_intensity * rabi / ref_rabi


def reference_pi_time(sp: IonSpecies) -> float:
    if sp.reference_rabi is None:
        raise MissingDataError(f"species {sp.name!r} has no reference Rabi frequency")
    return math.pi / sp.reference_rabi[0]


def n_ion_gate_time(single_ion_rabi: float, eta: float, n_ions: float) -> float:
    """2 pi / Omega_N with the sideband-limited Omega_N = eta Omega / sqrt(N)."""
    _positive(single_ion_rabi=single_ion_rabi, eta=eta, n_ions=n_ions)
    return TWO_PI / (eta * single_ion_rabi / math.sqrt(n_ions))


def phonon_band_budget(band_width: float, n_modes: int) -> tuple[float, float]:
    """Mean mode spacing (Hz) and the resolved-sideband time floor 1/spacing."""
    _positive(band_width=band_width)
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    spacing = band_width / n_modes
    return spacing, 1.0 / spacing


def apparent_ring_temperatures(cfg: RingConfig, reference: tuple[RingConfig, float, float]
                               ) -> tuple[float, float]:
    """Scale a reference machine's apparent temperatures to ``cfg``.

    T_par goes like 1/Q_x^2 and T_perp like mu_cell^2; only the ratios are
    meaningful, so the constants come from the reference machine.
    Returns (T_par, T_perp).
    """
    ref_cfg, t_par_ref, t_perp_ref = reference
    _positive(tune=cfg.horizontal_tune, ref_tune=ref_cfg.horizontal_tune,
              phase_advance=cfg.cell_phase_advance, ref_phase_advance=ref_cfg.cell_phase_advance)
    t_par = t_par_ref * (ref_cfg.horizontal_tune / cfg.horizontal_tune) ** 2
    t_perp = t_perp_ref * (cfg.cell_phase_advance / ref_cfg.cell_phase_advance) ** 2
    return t_par, t_perp


# apparent temperatures quoted for PALLAS: T_perp = 1 mK, T_par = 0.2 mK
PALLAS_T_PERP = 1e-3
PALLAS_T_PAR = 0.2e-3


# ---------------------------------------------------------------------------
# numbers the closed forms do not reproduce; carried into reports verbatim

DISCREPANCY_NOTES = {
    "localization": (
        "quoted 47 nm is not reproduced by sqrt(2 kB T/(m wz^2)) at 20 uK with the tabulated "
        "species frequencies (14.5 nm Ca-40 at 1 MHz, 31.3 nm Ba-138 at 0.25 MHz); the mass and "
        "frequency behind 47 nm are not stated (Ca-40 near wz = 2pi x 0.31 MHz would give it)"
    ),
    "velocity_control": (
        "kv = dw/2 at 397 nm pairs 100 m/s with a 503.8 MHz split, and 80 MHz with 15.9 m/s; "
        "the quoted 100 m/s <-> 80 MHz pairing contradicts the stated condition"
    ),
    "pulse_length": (
        "w0/(2v) with w0 = 10 um and v = 2.8 km/s evaluates to 1.79 ns, not 4.6 ns; downstream "
        "calculations take the pulse length as an explicit input"
    ),
    "micromotion_energy": (
        "lowest-order Mathieu model gives <KE> = m x_mu^2 Omega^2/4 = 0.076 meV (0.89 K) for Ca-40; "
        "the quoted 16 meV / 190 mK pair is two orders larger and internally inconsistent "
        "(16 meV / kB = 186 K)"
    ),
    "transverse_temperature": (
        "7 um with Mg-24 at wx = 2pi x 110 kHz gives 33.7 mK; the inputs behind the quoted 28 mK "
        "are not stated"
    ),
}


def build_report(sp: IonSpecies, cfg: RingConfig, *, stray_field: float = 10.0,
                 temperature_ld: float = 20e-6, waist: float = 10e-6,
                 pulse_length: float = 4.6e-9, eta: float | None = None,
                 band_width: float = 1e6, rise_fall: float = 2e-9,
                 velocity_split: float | None = None) -> BudgetReport:
    """Every closed-form scalar for one species/ring pair.

    ``velocity_split`` (rad/s) is the counter-propagating beam frequency split;
    when omitted the split needed for the ring's own velocity is reported.
    """
    rep = BudgetReport()
    m = sp.mass
    v = rep.add("beam_velocity", beam_velocity(cfg, sp), "m/s", "sqrt(2 E_kin / m)")
    spacing = rep.add("ion_spacing", ion_spacing(sp, cfg.secular_freq_z), "m",
                      "cbrt(e^2 / (2 pi eps0 m wz^2))")
    rep.add("localization_length", localization_length(temperature_ld, m, cfg.secular_freq_z), "m",
            f"sqrt(2 kB T/(m wz^2)), T = {temperature_ld!r} K")
    dx = rep.add("micromotion_displacement", micromotion_displacement(stray_field, sp, cfg.secular_freq_x),
                 "m", f"q E/(m wx^2), E = {stray_field!r} V/m")
    amp, ke, teq = micromotion_amplitude_energy(dx, cfg.secular_freq_x, cfg.rf_drive_freq, m)
    rep.add("micromotion_amplitude", amp, "m", "q_mathieu dx / 2, q = 2 sqrt2 wx / Omega_rf")
    rep.add("micromotion_kinetic_energy", ke, "J", "m x_mu^2 Omega_rf^2 / 4",
            DISCREPANCY_NOTES["micromotion_energy"])
    rep.add("micromotion_equivalent_temperature", teq, "K", "<KE> / kB")
    rep.add("rayleigh_range", rayleigh_range(waist, sp.qubit_wavelength or sp.cooling_wavelength or 397e-9),
            "m", "pi w0^2 / lambda")
    if v > 0:
        tau_formula, period, rate = pulse_timing(waist, v, spacing)
        rep.add("formula_pulse_length", tau_formula, "s", "w0 / (2 v)", DISCREPANCY_NOTES["pulse_length"])
        rep.add("arrival_period", period, "s", "spacing / v")
        rep.add("arrival_rate", rate, "Hz", "v / spacing")
        rep.add("max_crosstalk_free_pulse", period - 2 * rise_fall, "s",
                f"arrival_period - 2 x rise/fall, rise/fall = {rise_fall!r} s")
    if sp.cooling_wavelength is not None:
        if velocity_split is None:
            split = rep.add("velocity_control_split", doppler_control_split(v, sp.cooling_wavelength),
                            "rad/s", "2 k v")
        else:
            split = velocity_split
        rep.add("velocity_control_velocity", doppler_control_velocity(split, sp.cooling_wavelength),
                "m/s", "dw / (2k)", DISCREPANCY_NOTES["velocity_control"])
    if sp.reference_rabi is not None:
        rabi_pi, i_pi = pi_pulse_requirements(sp, pulse_length)
        rep.add("reference_pi_time", reference_pi_time(sp), "s", "pi / Omega_ref")
        rep.add("pi_pulse_rabi", rabi_pi, "rad/s", f"pi / tau, tau = {pulse_length!r} s")
        rep.add("pi_pulse_intensity", i_pi, "W/m^2", "I_ref Omega / Omega_ref (linear quadrupole scaling)")
        switch_rabi = TWO_PI / pulse_length
        rep.add("switching_rabi", switch_rabi, "rad/s", "2 pi / tau (2 pi-pulse convention)")
        if eta is None and sp.qubit_wavelength is not None:
            eta = lamb_dicke(sp, sp.qubit_wavelength, cfg.secular_freq_z).eta
        if eta is not None:
            rep.add("lamb_dicke_eta", eta, "1", "sqrt(omega_R / wz)")
            rep.add("n_ion_gate_time", n_ion_gate_time(switch_rabi, eta, cfg.n_ions), "s",
                    "2 pi sqrt(N) / (eta Omega)")
    # one branch of N modes shares the band
    spacing_hz, t_min = phonon_band_budget(band_width, cfg.n_ions)
    rep.add("phonon_mode_spacing", spacing_hz, "Hz", f"band / N, band = {band_width!r} Hz")
    rep.add("resolved_sideband_time", t_min, "s", "1 / mode spacing")
    t_par, t_perp = apparent_ring_temperatures(cfg, (PALLAS, PALLAS_T_PAR, PALLAS_T_PERP))
    rep.add("apparent_T_par", t_par, "K", "T_par,PALLAS (Q_x,PALLAS / Q_x)^2")
    rep.add("apparent_T_perp", t_perp, "K", "T_perp,PALLAS (mu / mu_PALLAS)^2")
    return rep
