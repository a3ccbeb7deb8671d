"""Low-energy spectra and dipole polarisation of interacting polar rigid rotors."""

__version__ = "0.1.0"

from rotorspec.angular import (
    cartesian_to_spherical,
    clebsch_gordan,
    dmatrix_element,
    spherical_to_cartesian,
    wigner3j,
)
from rotorspec.molecule import MoleculeSpec, RotorClass, builtin_molecule, load_molecule_file

__all__ = [
    "__version__",
    "wigner3j",
    "clebsch_gordan",
    "dmatrix_element",
    "cartesian_to_spherical",
    "spherical_to_cartesian",
    "MoleculeSpec",
    "RotorClass",
    "builtin_molecule",
    "load_molecule_file",
]
