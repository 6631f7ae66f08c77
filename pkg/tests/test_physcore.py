import math

import pytest
import scipy.constants as sc

from ringqc.physcore import (CONST, PALLAS, IonSpecies, MissingDataError, RingConfig,
                             UnknownSpeciesError, beam_velocity, load_species, read_records,
                             species_names, with_overrides, write_records)


def test_constants_are_codata():
    assert CONST.elementary_charge == sc.e
    assert CONST.coulomb == pytest.approx(8.9875517923e9, rel=1e-9)


@pytest.mark.parametrize("name,amu", [("Ca-40", 40), ("Ba-138", 138), ("Mg-24", 24)])
def test_species_masses(name, amu):
    assert load_species(name).mass == pytest.approx(amu * sc.atomic_mass)


def test_unknown_species_lists_known_names():
    with pytest.raises(UnknownSpeciesError) as exc:
        load_species("Xe-129")
    for name in species_names():
        assert name in str(exc.value)


def test_missing_field_is_reported():
    with pytest.raises(MissingDataError):
        load_species("Mg-24").require("cooling_wavelength")


@pytest.mark.parametrize("kw", [
    {"isotope_mass": -1.0},
    {"charge": 0.3 * sc.e},
    {"cooling_wavelength": 5e-8},
    {"cooling_linewidth": -1.0},
    {"reference_rabi": (0.0, 1.0)},
])
def test_species_rejects_bad_values(kw):
    base = {"name": "X", "isotope_mass": 1e-25}
    base.update(kw)
    with pytest.raises(ValueError):
        IonSpecies(**base)


def test_beam_velocity_matches_hand_value():
    mg = load_species("Mg-24")
    assert beam_velocity(PALLAS, mg) == pytest.approx(math.sqrt(2 * sc.eV / (24 * sc.atomic_mass)))
    with pytest.raises(ValueError):
        beam_velocity(-1.0, mg)


def test_cell_phase_advance_default():
    assert PALLAS.cell_phase_advance == pytest.approx(2 * math.pi * 50 / 800)


@pytest.mark.parametrize("field", ["circumference", "secular_freq_x", "horizontal_tune"])
def test_ring_rejects_nonpositive(field):
    kw = dict(circumference=1.0, n_ions=1, kinetic_energy=0.0, secular_freq_x=1.0, secular_freq_y=1.0,
              secular_freq_z=1.0, rf_drive_freq=1.0, horizontal_tune=1.0, periodicity=1)
    kw[field] = 0.0
    with pytest.raises(ValueError):
        RingConfig(**kw)


def test_records_round_trip(tmp_path):
    ca = with_overrides(load_species("Ca-40"), notes="edited")
    path = tmp_path / "records.ini"
    write_records(path, [ca, load_species("Mg-24")], {"pallas": PALLAS})
    species, rings = read_records(path)
    assert species["Ca-40"] == ca
    assert species["Mg-24"] == load_species("Mg-24")
    assert rings["pallas"] == PALLAS
