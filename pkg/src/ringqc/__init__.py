"""Desk-scale modelling toolkit for a storage-ring ion-crystal quantum computer."""
from .physcore import CONST, PALLAS, IonSpecies, RingConfig, load_species

__version__ = "0.1.0"

__all__ = ["CONST", "PALLAS", "IonSpecies", "RingConfig", "load_species", "__version__"]
