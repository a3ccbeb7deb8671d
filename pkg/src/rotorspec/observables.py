"""Dipole-moment expectation values in laboratory Cartesian axes.

Expectations are computed in the spherical basis, where the operator matrix
elements are products of D-matrix elements, and converted to (X, Y, Z) at
the end.  All values are reported in units of each molecule's dipole
magnitude; the Hermiticity of d_X, d_Y, d_Z makes every expectation real,
and any imaginary residue above 1e-8 is treated as an error rather than
silently discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from rotorspec.basis import BasisSet
from rotorspec.hamiltonian import single_dipole_matrix
from rotorspec.molecule import MoleculeSpec
from rotorspec.solver import EigenSolution

__all__ = ["DipoleReport", "dipole_operator", "expectation_dipoles"]

_SQRT2 = math.sqrt(2.0)


def dipole_operator(
    basis: BasisSet, spec: MoleculeSpec, molecule_index: int = 1, p: int = 0
) -> sparse.csr_matrix:
    """Lab-frame dipole operator d_p of one molecule over ``basis``.

    For a pair basis the operator acts on the chosen molecule and as the
    identity on the other; ``molecule_index`` is ignored for single bases.
    Values are in units of the molecule's d_mag and obey the selection
    rules Delta m = p, Delta k = q with d_q != 0, |Delta j| <= 1.
    """
    if molecule_index not in (1, 2):
        raise ValueError("molecule_index must be 1 or 2")
    single = basis.single if basis.pair else basis
    mat = single_dipole_matrix(spec, single, p)
    if not basis.pair:
        return mat
    eye = sparse.identity(single.dimension, dtype=mat.dtype, format="csr")
    if molecule_index == 1:
        full = sparse.kron(mat, eye, format="csr")
    else:
        full = sparse.kron(eye, mat, format="csr")
    if basis.parent_indices is not None:
        ix = basis.parent_indices
        full = full[ix][:, ix].tocsr()
    return full


@dataclass
class DipoleReport:
    """Per-state dipole projections <d_X>, <d_Y>, <d_Z> in units of d_mag.

    ``molecule1``/``molecule2`` hold (n_states, 3) arrays of per-molecule
    expectations; ``average`` is their two-molecule mean (equal to
    ``molecule1`` for a single molecule).
    """

    molecule1: np.ndarray
    molecule2: np.ndarray | None
    average: np.ndarray

    def group_average(self, groups: list[list[int]]) -> np.ndarray:
        """Basis-rotation-invariant mean of ``average`` over each degeneracy group."""
        return np.array([self.average[g].mean(axis=0) for g in groups])


def _spherical_to_xyz(e_m: np.ndarray, e_0: np.ndarray, e_p: np.ndarray) -> np.ndarray:
    dx = (e_m - e_p) / _SQRT2
    dy = 1j * (e_m + e_p) / _SQRT2
    dz = e_0
    out = np.stack([dx, dy, dz], axis=1)
    residue = np.abs(out.imag).max() if out.size else 0.0
    if residue > 1e-8:
        raise ValueError(f"dipole expectation has imaginary residue {residue:.3e} > 1e-8")
    return out.real


def expectation_dipoles(
    solution: EigenSolution,
    basis: BasisSet,
    spec1: MoleculeSpec,
    spec2: MoleculeSpec | None = None,
    operators: dict[tuple[int, int], sparse.spmatrix] | None = None,
) -> DipoleReport:
    """Dipole projections of every state in ``solution``.

    ``operators`` may supply prebuilt {(molecule_index, p): matrix} pairs
    (as a sweep engine does) to avoid rebuilding them per call.  Vectors
    must be normalised; the per-molecule average <d_L> = <d_1L + d_2L>/2 is
    reported alongside the individual molecules.
    """
    v = solution.vectors
    norms = np.linalg.norm(v, axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise ValueError("eigenvectors must be normalised")

    def expectations(mol: int, spec: MoleculeSpec) -> np.ndarray:
        e = {}
        for p in (-1, 0, 1):
            op = operators.get((mol, p)) if operators else None
            if op is None:
                op = dipole_operator(basis, spec, mol, p)
            e[p] = np.einsum("ij,ij->j", v.conj(), op @ v)
        return _spherical_to_xyz(e[-1], e[0], e[1])

    m1 = expectations(1, spec1)
    if not basis.pair:
        return DipoleReport(molecule1=m1, molecule2=None, average=m1)
    m2 = expectations(2, spec2 if spec2 is not None else spec1)
    return DipoleReport(molecule1=m1, molecule2=m2, average=0.5 * (m1 + m2))
