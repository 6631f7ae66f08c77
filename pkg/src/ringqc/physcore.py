"""Physical constants, ion species registry and ring configurations.

Everything in here is SI. Conversions to eV / kHz / mK only happen at the
CLI and scenario-file boundary (see :mod:`ringqc.scenario`).
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace
from pathlib import Path

import scipy.constants as sc


@dataclass(frozen=True)
class PhysicalConstants:
    elementary_charge: float = sc.e
    vacuum_permittivity: float = sc.epsilon_0
    boltzmann: float = sc.k
    reduced_planck: float = sc.hbar
    atomic_mass_unit: float = sc.atomic_mass

    @property
    def coulomb(self) -> float:
        """k_e = 1 / (4 pi eps0)."""
        return 1.0 / (4.0 * math.pi * self.vacuum_permittivity)


CONST = PhysicalConstants()

TWO_PI = 2.0 * math.pi


class UnknownSpeciesError(KeyError):
    pass


class MissingDataError(ValueError):
    """A species record lacks a field that an operation needs."""


@dataclass(frozen=True)
class IonSpecies:
    name: str
    isotope_mass: float
    charge: float = CONST.elementary_charge
    cooling_wavelength: float | None = None
    qubit_wavelength: float | None = None
    cooling_linewidth: float | None = None
    shelved_lifetime: float | None = None
    # (rabi frequency in rad/s, intensity in W/m^2)
    reference_rabi: tuple[float, float] | None = None
    typical_transverse_freq: float | None = None
    typical_axial_freq: float | None = None
    dark: bool = False
    # free-form provenance of values not taken from the source tables
    notes: str = ""

    def __post_init__(self):
        if not self.isotope_mass > 0:
            raise ValueError(f"{self.name}: mass must be positive")
        z = self.charge / CONST.elementary_charge
        if z < 0.5 or abs(z - round(z)) > 1e-9:
            raise ValueError(f"{self.name}: charge must be a positive multiple of e")
        for attr in ("cooling_wavelength", "qubit_wavelength"):
            lam = getattr(self, attr)
            if lam is not None and not 100e-9 < lam < 10e-6:
                raise ValueError(f"{self.name}: {attr}={lam!r} outside (100 nm, 10 um)")
        if self.cooling_linewidth is not None and not self.cooling_linewidth > 0:
            raise ValueError(f"{self.name}: linewidth must be positive")
        if self.reference_rabi is not None:
            rabi, intensity = self.reference_rabi
            if not (rabi > 0 and intensity > 0):
                raise ValueError(f"{self.name}: reference_rabi entries must be positive")
            object.__setattr__(self, "reference_rabi", (float(rabi), float(intensity)))

    @property
    def mass(self) -> float:
        return self.isotope_mass

    def require(self, attr: str):
        value = getattr(self, attr)
        if value is None:
            raise MissingDataError(f"species {self.name!r} has no {attr}")
        return value


def _amu(a: int) -> float:
    return a * CONST.atomic_mass_unit


_EXTERNAL = "cooling linewidth: external data, not from the source tables"

# Cooling linewidths are the natural widths of the S1/2-P1/2 lines from the
# usual spectroscopy literature; they are defaults only.
_REGISTRY: dict[str, IonSpecies] = {
    "Ca-40": IonSpecies(
        name="Ca-40",
        isotope_mass=_amu(40),
        cooling_wavelength=397e-9,
        qubit_wavelength=792e-9,
        cooling_linewidth=TWO_PI * 22.4e6,
        shelved_lifetime=1.0,
        reference_rabi=(TWO_PI * 1000e3, 5000e6),
        typical_transverse_freq=TWO_PI * 2.5e6,
        typical_axial_freq=TWO_PI * 1.0e6,
        notes=_EXTERNAL,
    ),
    "Ba-138": IonSpecies(
        name="Ba-138",
        isotope_mass=_amu(138),
        cooling_wavelength=493e-9,
        qubit_wavelength=1762e-9,
        cooling_linewidth=TWO_PI * 20.1e6,
        shelved_lifetime=32.0,
        reference_rabi=(TWO_PI * 43e3, 250e3),
        typical_transverse_freq=TWO_PI * 1.0e6,
        typical_axial_freq=TWO_PI * 0.25e6,
        notes=_EXTERNAL,
    ),
    "Mg-24": IonSpecies(name="Mg-24", isotope_mass=_amu(24), notes="mass-only record"),
    "Ca-43": IonSpecies(name="Ca-43", isotope_mass=_amu(43), dark=True, notes="dark admixture isotope"),
    "Ba-136": IonSpecies(name="Ba-136", isotope_mass=_amu(136), dark=True, notes="dark admixture isotope"),
}


def species_names() -> list[str]:
    return sorted(_REGISTRY)


def load_species(name: str | IonSpecies) -> IonSpecies:
    """Look up a built-in species by name; user-built records pass through."""
    if isinstance(name, IonSpecies):
        return name
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownSpeciesError(
            f"unknown species {name!r}; known: {', '.join(species_names())}"
        ) from None


@dataclass(frozen=True)
class RingConfig:
    circumference: float
    n_ions: int
    kinetic_energy: float  # J per ion
    secular_freq_x: float
    secular_freq_y: float
    secular_freq_z: float
    rf_drive_freq: float
    horizontal_tune: float
    periodicity: int
    cell_phase_advance: float | None = None

    def __post_init__(self):
        if not self.circumference > 0:
            raise ValueError("circumference must be positive")
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if self.kinetic_energy < 0:
            raise ValueError("kinetic_energy must be >= 0")
        for f in ("secular_freq_x", "secular_freq_y", "secular_freq_z", "rf_drive_freq",
                  "horizontal_tune"):
            if not getattr(self, f) > 0:
                raise ValueError(f"{f} must be positive")
        if self.periodicity < 1:
            raise ValueError("periodicity must be >= 1")
        if self.cell_phase_advance is None:
            object.__setattr__(self, "cell_phase_advance",
                               TWO_PI * self.horizontal_tune / self.periodicity)
        elif not self.cell_phase_advance > 0:
            raise ValueError("cell_phase_advance must be positive")

    @property
    def radius(self) -> float:
        return self.circumference / TWO_PI

    def validate_for(self, sp: IonSpecies) -> None:
        v = beam_velocity(self, sp)
        if not (math.isfinite(v) and v < 1e6):
            raise ValueError(f"beam velocity {v:.3g} m/s outside the nonrelativistic regime")


def beam_velocity(cfg: RingConfig | float, sp: IonSpecies) -> float:
    """v = sqrt(2 E_kin / m). Accepts a RingConfig or a bare energy in J."""
    energy = cfg.kinetic_energy if isinstance(cfg, RingConfig) else float(cfg)
    if energy < 0:
        raise ValueError("kinetic energy must be >= 0")
    return math.sqrt(2.0 * energy / sp.mass)


# The PALLAS RFQ ring. The RF drive is not part of the published ring
# parameters; 10 MHz is the drive used for the micromotion estimates.
PALLAS = RingConfig(
    circumference=0.36,
    n_ions=10_000,
    kinetic_energy=1.0 * sc.eV,
    secular_freq_x=TWO_PI * 110e3,
    secular_freq_y=TWO_PI * 110e3,
    secular_freq_z=TWO_PI * 180e3,
    rf_drive_freq=TWO_PI * 10e6,
    horizontal_tune=50.0,
    periodicity=800,
)


# ---------------------------------------------------------------------------
# flat key-value record files (INI sections)

_SPECIES_KEYS = {
    "name": "name",
    "isotope_mass_kg": "isotope_mass",
    "charge_C": "charge",
    "cooling_wavelength_m": "cooling_wavelength",
    "qubit_wavelength_m": "qubit_wavelength",
    "cooling_linewidth_rad_s": "cooling_linewidth",
    "shelved_lifetime_s": "shelved_lifetime",
    "reference_rabi_rad_s": None,
    "reference_intensity_W_m2": None,
    "typical_transverse_freq_rad_s": "typical_transverse_freq",
    "typical_axial_freq_rad_s": "typical_axial_freq",
    "dark": "dark",
    "notes": "notes",
}

_RING_KEYS = {
    "circumference_m": "circumference",
    "n_ions": "n_ions",
    "kinetic_energy_J": "kinetic_energy",
    "secular_freq_x_rad_s": "secular_freq_x",
    "secular_freq_y_rad_s": "secular_freq_y",
    "secular_freq_z_rad_s": "secular_freq_z",
    "rf_drive_freq_rad_s": "rf_drive_freq",
    "horizontal_tune": "horizontal_tune",
    "periodicity": "periodicity",
    "cell_phase_advance_rad": "cell_phase_advance",
}


def species_to_section(sp: IonSpecies) -> dict[str, str]:
    out = {}
    for key, attr in _SPECIES_KEYS.items():
        if attr is None:
            continue
        value = getattr(sp, attr)
        if value is None:
            continue
        out[key] = value if isinstance(value, str) else repr(value)
    if sp.reference_rabi is not None:
        out["reference_rabi_rad_s"] = repr(sp.reference_rabi[0])
        out["reference_intensity_W_m2"] = repr(sp.reference_rabi[1])
    return out


def species_from_section(section) -> IonSpecies:
    kw = {}
    for key, attr in _SPECIES_KEYS.items():
        if attr is None or key not in section:
            continue
        raw = section[key]
        if attr in ("name", "notes"):
            kw[attr] = raw
        elif attr == "dark":
            kw[attr] = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            kw[attr] = float(raw)
    if "reference_rabi_rad_s" in section:
        kw["reference_rabi"] = (float(section["reference_rabi_rad_s"]),
                                float(section["reference_intensity_W_m2"]))
    if "name" not in kw:
        raise KeyError("species section needs a 'name'")
    return IonSpecies(**kw)


def ring_to_section(cfg: RingConfig) -> dict[str, str]:
    return {key: repr(getattr(cfg, attr)) for key, attr in _RING_KEYS.items()}


def ring_from_section(section) -> RingConfig:
    kw = {}
    for key, attr in _RING_KEYS.items():
        if key not in section:
            continue
        kw[attr] = int(section[key]) if attr in ("n_ions", "periodicity") else float(section[key])
    return RingConfig(**kw)


def write_records(path: str | Path, species: list[IonSpecies] = (), rings: dict[str, RingConfig] | None = None) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sp in species:
        cp[f"species:{sp.name}"] = species_to_section(sp)
    for label, cfg in (rings or {}).items():
        cp[f"ring:{label}"] = ring_to_section(cfg)
    with open(path, "w") as fh:
        cp.write(fh)


def read_records(path: str | Path) -> tuple[dict[str, IonSpecies], dict[str, RingConfig]]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    species, rings = {}, {}
    for name in cp.sections():
        kind, _, label = name.partition(":")
        if kind == "species":
            sp = species_from_section(cp[name])
            species[sp.name] = sp
        elif kind == "ring":
            rings[label] = ring_from_section(cp[name])
    return species, rings


def with_overrides(sp: IonSpecies, **kw) -> IonSpecies:
    return replace(sp, **kw)


__all__ = [
    "CONST", "TWO_PI", "PALLAS", "PhysicalConstants", "IonSpecies", "RingConfig",
    "UnknownSpeciesError", "MissingDataError", "load_species", "species_names",
    "beam_velocity", "read_records", "write_records", "with_overrides",
]
