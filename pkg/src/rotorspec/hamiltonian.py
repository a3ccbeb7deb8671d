"""Matrix-element kernels and sparse assembly of the rotor-pair Hamiltonian.

Everything is assembled in dimensionless units: energies in the middle
rotational constant B of molecule 1, distances in r_B = (d^2/B)^(1/3) and
the dc field as eps = d E / B.  The full operator is

    H = H_rot x 1 + 1 x H_rot + H_dc x 1 + 1 x H_dc + H_dd,

with the intermolecular axis pinned to e_Z, so the dipole-dipole term takes
the single-term form

    H_dd = -(1/r^3) (2 d_{1,0} d_{2,0} + d_{1,-1} d_{2,+1} + d_{1,+1} d_{2,-1})

in laboratory spherical components.  Pair operators are built as Kronecker
products of single-molecule operator matrices, which keeps assembly cheap
and makes Hermiticity exact by construction: the p = -1 lab-frame dipole
matrix is defined as minus the adjoint of the p = +1 one, and the p = 0
matrix is mirrored from its upper triangle.

Element kernels (`h_rot_element`, `h_dc_element`, `h_dd_element`) express
the same physics one matrix element at a time; the assembled matrices agree
with them and the kernels double as the reference path in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from rotorspec.angular import dmatrix_element
from rotorspec.basis import BasisSet, PairState, RotorState, build_single_basis
from rotorspec.molecule import MoleculeSpec, RotorClass

__all__ = [
    "FieldConfig",
    "SparseHermitian",
    "h_rot_element",
    "h_dc_element",
    "h_dd_element",
    "assemble",
    "single_molecule_assemble",
    "single_rotational_matrix",
    "single_dipole_matrix",
    "PairOperators",
]


def _exact_cos_sin_deg(theta_deg: float) -> tuple[float, float]:
    # Exact values at multiples of 90 degrees so that promised selection
    # rules (m_total blocking at theta = 0, vanishing <d_Z> at 90) hold
    # without trigonometric round-off.
    t = theta_deg % 360.0
    table = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if t in table:
        return table[t]
    rad = math.radians(theta_deg)
    return math.cos(rad), math.sin(rad)


@dataclass(frozen=True)
class FieldConfig:
    """dc field eps (cos(theta) e_Z + sin(theta) e_X) in dimensionless units.

    ``epsilon`` is d E / B >= 0 and ``theta_deg`` the angle between the
    field and the YZ-plane.  Any angle is accepted; 0 and 90 degrees are
    the two physically distinct endpoints.
    """

    epsilon: float
    theta_deg: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("field magnitude eps must be non-negative")

    @property
    def cos_sin(self) -> tuple[float, float]:
        return _exact_cos_sin_deg(self.theta_deg)

    def spherical(self) -> dict[int, float]:
        """Spherical components {p: eps_p}; real because the field has no Y part."""
        cth, sth = self.cos_sin
        ex = self.epsilon * sth
        return {-1: ex / math.sqrt(2.0), 0: self.epsilon * cth, 1: -ex / math.sqrt(2.0)}

    @property
    def conserves_m_total(self) -> bool:
        """True when the field is zero or parallel to the intermolecular axis."""
        if self.epsilon == 0.0:
            return True
        return self.cos_sin[1] == 0.0


def _dipole_on_axis(spec: MoleculeSpec) -> bool:
    return spec.d_xyz[0] == 0.0 and spec.d_xyz[1] == 0.0


def k_total_conserved(spec1: MoleculeSpec, spec2: MoleculeSpec) -> bool:
    """k1 + k2 is conserved when H_rot is k-diagonal and both dipoles lie on z.

    True for linear rotors and for symmetric/spherical tops with the dipole
    along the symmetry axis (any physical symmetric top); false for
    asymmetric tops, whose rotational term mixes k +- 2.
    """
    for spec in (spec1, spec2):
        if spec.rotor_class is RotorClass.ASYMMETRIC:
            return False
        if not _dipole_on_axis(spec):
            return False
    return True


@dataclass
class SparseHermitian:
    """Complex Hermitian (or real symmetric) matrix in coordinate form.

    Only the upper triangle including the diagonal is stored, sorted
    row-major; the lower triangle is implied by Hermiticity, so the
    round-tripped matrix satisfies H = H^dagger exactly.  ``is_real``
    flags the real-symmetric fast path.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    is_real: bool

    @classmethod
    def from_csr(cls, h: sparse.spmatrix) -> "SparseHermitian":
        h = sparse.csr_matrix(h)
        upper = sparse.triu(h, k=0).tocoo()
        order = np.lexsort((upper.col, upper.row))
        rows = upper.row[order].astype(np.int64)
        cols = upper.col[order].astype(np.int64)
        vals = upper.data[order]
        keep = vals != 0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        is_real = vals.dtype.kind == "f" or bool(np.all(vals.imag == 0.0))
        if is_real and vals.dtype.kind != "f":
            vals = vals.real.copy()
        return cls(dim=h.shape[0], rows=rows, cols=cols, vals=vals, is_real=is_real)

    @property
    def nnz_stored(self) -> int:
        return len(self.vals)

    def to_csr(self) -> sparse.csr_matrix:
        """Reconstruct the full Hermitian matrix."""
        upper = sparse.coo_matrix((self.vals, (self.rows, self.cols)), shape=(self.dim, self.dim))
        diag_mask = self.rows == self.cols
        diag = sparse.coo_matrix(
            (self.vals[diag_mask], (self.rows[diag_mask], self.cols[diag_mask])),
            shape=(self.dim, self.dim),
        )
        full = upper + upper.conj().T - diag
        return full.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def dump(self, path: str | Path, params: dict | None = None) -> None:
        """Write the stored triangle as text: one 'row col real imag' per line."""
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write("# rotorspec coordinate matrix, upper triangle, 0-based indices\n")
            fh.write(f"# dim={self.dim} nnz={self.nnz_stored} real={int(self.is_real)}\n")
            for key, value in (params or {}).items():
                fh.write(f"# {key}={value}\n")
            for r, c, v in zip(self.rows, self.cols, self.vals):
                v = complex(v)
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")

    @classmethod
    def load(cls, path: str | Path) -> "SparseHermitian":
        path = Path(path)
        dim = None
        rows, cols, re, im = [], [], [], []
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if token.startswith("dim="):
                        dim = int(token[4:])
                continue
            r, c, x, y = line.split()
            rows.append(int(r))
            cols.append(int(c))
            re.append(float(x))
            im.append(float(y))
        if dim is None:
            raise ValueError(f"{path}: missing 'dim=' header")
        vals = np.array(re, dtype=float) + 1j * np.array(im, dtype=float)
        is_real = bool(np.all(vals.imag == 0.0))
        if is_real:
            vals = vals.real.copy()
        return cls(
            dim=dim,
            rows=np.array(rows, dtype=np.int64),
            cols=np.array(cols, dtype=np.int64),
            vals=vals,
            is_real=is_real,
        )


# ---------------------------------------------------------------------------
# element kernels


def _f_pm(j: int, k: int, sign: int) -> float:
    # f_+-(j, k) = sqrt([j(j+1) - k(k+-1)] [j(j+1) - (k+-1)(k+-2)])
    jj = j * (j + 1)
    return math.sqrt((jj - k * (k + sign)) * (jj - (k + sign) * (k + sign * 2)))


def h_rot_element(spec: MoleculeSpec, bra: RotorState, ket: RotorState) -> float:
    """<bra|H_rot|ket> in units of the molecule's middle constant.

    Linear and spherical rotors give B j(j+1); symmetric tops add the
    (A - C) k^2 ladder; asymmetric tops additionally couple k to k +- 2
    through (B - C)/4 f_+-(j, k).
    """
    if bra.j != ket.j or bra.m != ket.m:
        return 0.0
    j, k = ket.j, ket.k
    a_t, _, c_t = spec.reduced_constants()
    cls = spec.rotor_class
    if cls is RotorClass.LINEAR or cls is RotorClass.SPHERICAL:
        return float(j * (j + 1)) if bra.k == ket.k else 0.0
    if cls is RotorClass.PROLATE:
        return c_t * j * (j + 1) + (a_t - c_t) * k * k if bra.k == ket.k else 0.0
    if cls is RotorClass.OBLATE:
        return a_t * j * (j + 1) + (c_t - a_t) * k * k if bra.k == ket.k else 0.0
    # Asymmetric top.
    if bra.k == k:
        return 0.5 * (1.0 + c_t) * (j * (j + 1) - k * k) + a_t * k * k
    if bra.k == k + 2:
        return 0.25 * (1.0 - c_t) * _f_pm(j, k, +1)
    if bra.k == k - 2:
        return 0.25 * (1.0 - c_t) * _f_pm(j, k, -1)
    return 0.0


def h_dc_element(spec: MoleculeSpec, field: FieldConfig, bra: RotorState, ket: RotorState) -> complex:
    """<bra|H_dc|ket> = -sum_{p,q} (-1)^p d_q eps_{-p} <bra|D^{1*}_{p,q}|ket>.

    Dipole components in units of d_mag, so the field strength enters only
    through eps.  Nonzero only for |Delta j| <= 1, Delta m = p, Delta k = q.
    """
    p = bra.m - ket.m
    q = bra.k - ket.k
    if abs(p) > 1 or abs(q) > 1 or abs(bra.j - ket.j) > 1:
        return 0.0
    dq = spec.d_sph[q]
    if dq == 0:
        return 0.0
    eps = field.spherical()[-p]
    if eps == 0.0:
        return 0.0
    el = dmatrix_element(bra.j, bra.k, bra.m, 1, p, q, ket.j, ket.k, ket.m)
    sign = -1.0 if p % 2 else 1.0
    return -sign * dq * eps * el


_DD_BRANCHES = ((0, 0, 2.0), (-1, 1, 1.0), (1, -1, 1.0))


def h_dd_element(
    spec1: MoleculeSpec,
    spec2: MoleculeSpec,
    r: float,
    bra: PairState,
    ket: PairState,
) -> complex:
    """Dipole-dipole element at separation r (units of r_B of molecule 1).

    Implements -(1/r^3) [2 D1(0) D2(0) + D1(-1) D2(+1) + D1(+1) D2(-1)]
    with Di(p) the lab-frame dipole element of molecule i; m1 + m2 is
    conserved term by term.
    """
    if r <= 0:
        raise ValueError("separation r must be positive")
    p1 = bra.s1.m - ket.s1.m
    p2 = bra.s2.m - ket.s2.m
    total = 0.0 + 0.0j
    for b1, b2, w in _DD_BRANCHES:
        if p1 != b1 or p2 != b2:
            continue
        q1 = bra.s1.k - ket.s1.k
        q2 = bra.s2.k - ket.s2.k
        if abs(q1) > 1 or abs(q2) > 1:
            continue
        d1 = spec1.d_sph[q1]
        d2 = spec2.d_sph[q2]
        if d1 == 0 or d2 == 0:
            continue
        e1 = dmatrix_element(bra.s1.j, bra.s1.k, bra.s1.m, 1, b1, q1, ket.s1.j, ket.s1.k, ket.s1.m)
        if e1 == 0.0:
            continue
        e2 = dmatrix_element(bra.s2.j, bra.s2.k, bra.s2.m, 1, b2, q2, ket.s2.j, ket.s2.k, ket.s2.m)
        total += w * d1 * e1 * d2 * e2
    scale = spec2.d_mag / spec1.d_mag
    return -total * scale / r**3


# ---------------------------------------------------------------------------
# single-molecule operator matrices


def _matrix_dtype(*specs: MoleculeSpec):
    # The field components are always real (no Y component), so the matrix
    # is real as soon as every molecule-frame dipole has no y part.
    for spec in specs:
        if any(component.imag != 0.0 for component in spec.d_sph):
            return np.complex128
    return np.float64


def single_rotational_matrix(spec: MoleculeSpec, basis: BasisSet, dtype=None) -> sparse.csr_matrix:
    """H_rot over a single-molecule basis, units of the molecule's B."""
    if basis.pair:
        raise ValueError("expected a single-molecule basis")
    dtype = dtype or _matrix_dtype(spec)
    rows, cols, vals = [], [], []
    asym = spec.rotor_class is RotorClass.ASYMMETRIC
    for col, ket in enumerate(basis.states):
        diag = h_rot_element(spec, ket, ket)
        if diag != 0.0:
            rows.append(col)
            cols.append(col)
            vals.append(diag)
        if asym:
            for dk in (-2, 2):
                bra = RotorState(ket.j, ket.k + dk, ket.m)
                if abs(bra.k) > bra.j or bra not in basis:
                    continue
                val = h_rot_element(spec, bra, ket)
                if val != 0.0:
                    rows.append(basis.ordinal(bra))
                    cols.append(col)
                    vals.append(val)
    n = basis.dimension
    return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n), dtype=dtype).tocsr()


def single_dipole_matrix(spec: MoleculeSpec, basis: BasisSet, p: int, dtype=None) -> sparse.csr_matrix:
    """Lab-frame dipole operator d_p = sum_q d_q D^{1*}_{p,q}, units of d_mag.

    Satisfies d_{-p} = (-1)^p (d_p)^dagger; the p = 0 matrix is Hermitian.
    To keep those relations exact in floating point, callers should obtain
    p = -1 as minus the adjoint of p = +1 (as `PairOperators` does).
    """
    if basis.pair:
        raise ValueError("expected a single-molecule basis")
    if p not in (-1, 0, 1):
        raise ValueError("laboratory spherical index p must be -1, 0 or +1")
    dtype = dtype or _matrix_dtype(spec)
    rows, cols, vals = [], [], []
    for col, ket in enumerate(basis.states):
        m = ket.m + p
        for q in (-1, 0, 1):
            dq = spec.d_sph[q]
            if dq == 0:
                continue
            k = ket.k + q
            for j in (ket.j - 1, ket.j, ket.j + 1):
                if j < 0 or j > basis.j_max or abs(k) > j or abs(m) > j:
                    continue
                if basis.linear and k != 0:
                    continue
                el = dmatrix_element(j, k, m, 1, p, q, ket.j, ket.k, ket.m)
                if el == 0.0:
                    continue
                value = dq * el
                rows.append(basis.ordinal(RotorState(j, k, m)))
                cols.append(col)
                # value.imag is exactly zero whenever the real dtype applies
                vals.append(complex(value) if dtype is np.complex128 else value.real)
    n = basis.dimension
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n), dtype=dtype).tocsr()
    if p == 0:
        # Mirror the upper triangle so Hermiticity is exact, not just 1 ulp.
        upper = sparse.triu(mat, k=0)
        strict = sparse.triu(mat, k=1)
        mat = (upper + strict.conj().T).tocsr()
    return mat


def _single_dipole_set(spec: MoleculeSpec, basis: BasisSet, dtype) -> dict[int, sparse.csr_matrix]:
    d_plus = single_dipole_matrix(spec, basis, 1, dtype=dtype)
    return {
        1: d_plus,
        0: single_dipole_matrix(spec, basis, 0, dtype=dtype),
        -1: (-d_plus.conj().T).tocsr(),
    }


def _single_dc_csr(
    dipoles: dict[int, sparse.csr_matrix], field: FieldConfig
) -> sparse.csr_matrix:
    eps = field.spherical()
    # H_dc = -sum_p (-1)^p d_p eps_{-p}
    out = -eps[0] * dipoles[0]
    out = out + eps[-1] * dipoles[1] + eps[1] * dipoles[-1]
    return out.tocsr()


def single_molecule_assemble(spec: MoleculeSpec, field: FieldConfig, basis: BasisSet) -> SparseHermitian:
    """H_rot + H_dc for one molecule over ``basis``, in units of B and d."""
    dtype = _matrix_dtype(spec)
    h = single_rotational_matrix(spec, basis, dtype=dtype)
    if field.epsilon != 0.0:
        h = h + _single_dc_csr(_single_dipole_set(spec, basis, dtype), field)
    return SparseHermitian.from_csr(h)


# ---------------------------------------------------------------------------
# pair assembly


class PairOperators:
    """Precomputed Kronecker-product pieces of the two-molecule Hamiltonian.

    Built once per (molecule pair, basis cutoff); the r- and
    field-dependent matrices are then cheap sparse combinations, which is
    what makes dense parameter sweeps affordable.  Units are those of
    molecule 1 (its B, d and r_B); molecule 2 carries the ratio factors
    B2/B1 and d2/d1.
    """

    def __init__(self, spec1: MoleculeSpec, spec2: MoleculeSpec, single_basis: BasisSet):
        if single_basis.pair:
            raise ValueError("PairOperators expects the single-molecule basis")
        if (spec1.rotor_class is RotorClass.LINEAR) != (spec2.rotor_class is RotorClass.LINEAR):
            raise ValueError("cannot pair a linear with a non-linear rotor in one basis")
        if (spec1.rotor_class is RotorClass.LINEAR) != single_basis.linear:
            raise ValueError("basis linearity does not match the molecules")
        self.spec1 = spec1
        self.spec2 = spec2
        self.single_basis = single_basis
        self.dtype = _matrix_dtype(spec1, spec2)
        self.rot_ratio = spec2.b_mid / spec1.b_mid
        self.dip_ratio = spec2.d_mag / spec1.d_mag

        n = single_basis.dimension
        eye = sparse.identity(n, dtype=self.dtype, format="csr")
        r1 = single_rotational_matrix(spec1, single_basis, dtype=self.dtype)
        r2 = single_rotational_matrix(spec2, single_basis, dtype=self.dtype)
        self.h_rot = (
            sparse.kron(r1, eye, format="csr")
            + self.rot_ratio * sparse.kron(eye, r2, format="csr")
        )

        a = _single_dipole_set(spec1, single_basis, self.dtype)
        b = a if spec2 is spec1 or spec2 == spec1 else _single_dipole_set(spec2, single_basis, self.dtype)
        self._singles = (a, b)
        # Lab-frame dipole operators of each molecule on the pair space,
        # in units of that molecule's own d_mag.
        self.dip1 = {p: sparse.kron(a[p], eye, format="csr") for p in (-1, 0, 1)}
        self.dip2 = {p: sparse.kron(eye, b[p], format="csr") for p in (-1, 0, 1)}
        # Angular kernel of H_dd; the adjoint pairing of the two cross terms
        # makes this exactly Hermitian.
        self.dd_kernel = (
            2.0 * sparse.kron(a[0], b[0], format="csr")
            + sparse.kron(a[-1], b[1], format="csr")
            + sparse.kron(a[1], b[-1], format="csr")
        ).tocsr()

    @property
    def dimension(self) -> int:
        return self.h_rot.shape[0]

    def h_dd_csr(self, r: float) -> sparse.csr_matrix:
        if r <= 0:
            raise ValueError("separation r must be positive")
        return (-self.dip_ratio / r**3) * self.dd_kernel

    def h_dc_csr(self, field: FieldConfig) -> sparse.csr_matrix:
        eps = field.spherical()
        total = {p: (self.dip1[p] + self.dip_ratio * self.dip2[p]) for p in (-1, 0, 1)}
        out = -eps[0] * total[0] + eps[-1] * total[1] + eps[1] * total[-1]
        return out.tocsr()

    def hamiltonian_csr(self, r: float, field: FieldConfig) -> sparse.csr_matrix:
        h = self.h_rot + self.h_dd_csr(r)
        if field.epsilon != 0.0:
            h = h + self.h_dc_csr(field)
        return h.tocsr()


def _slice_to_basis(h: sparse.csr_matrix, basis: BasisSet) -> sparse.csr_matrix:
    if basis.parent_indices is None:
        return h
    ix = basis.parent_indices
    return h[ix][:, ix].tocsr()


def assemble(
    spec1: MoleculeSpec,
    spec2: MoleculeSpec,
    r: float,
    field: FieldConfig,
    basis: BasisSet,
) -> SparseHermitian:
    """Assemble the full pair Hamiltonian over ``basis`` in coordinate form.

    The basis may be sector-filtered; requesting an m_total sector with a
    field that breaks m conservation, or a k_total sector when a dipole
    component off the symmetry axis (or an asymmetric top) mixes k, is an
    error rather than a silent approximation.
    """
    if not basis.pair:
        raise ValueError("assemble expects a pair basis")
    if basis.sector is not None:
        if basis.sector.m_total is not None and not field.conserves_m_total:
            raise ValueError("m_total sector requested but the field breaks m conservation")
        if basis.sector.k_total is not None and not k_total_conserved(spec1, spec2):
            raise ValueError("k_total sector requested but k1 + k2 is not conserved")
    ops = PairOperators(spec1, spec2, basis.single)
    h = ops.hamiltonian_csr(r, field)
    return SparseHermitian.from_csr(_slice_to_basis(h, basis))
