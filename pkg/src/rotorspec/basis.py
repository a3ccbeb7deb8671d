"""Truncated symmetric-top bases for one and two molecules.

States are enumerated lexicographically in (j, k, m) and, for pairs, in
(j1, k1, m1, j2, k2, m2), which keeps matrices and eigenvectors
bit-reproducible across runs.  Pair bases can be filtered to a symmetry
sector of fixed m_total = m1 + m2 and/or k_total = k1 + k2; a filtered
basis remembers the ordinals of its states inside the unfiltered parent
enumeration so assembled operators can be sliced out of the full matrix.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np

from rotorspec.molecule import RotorClass

__all__ = [
    "RotorState",
    "PairState",
    "Sector",
    "BasisSet",
    "build_single_basis",
    "build_pair_basis",
    "exchange_permutation",
    "single_dimension",
]


class RotorState(NamedTuple):
    j: int
    k: int
    m: int


class PairState(NamedTuple):
    s1: RotorState
    s2: RotorState


class Sector(NamedTuple):
    """Conserved-sum constraint; either entry may be None (unconstrained)."""

    m_total: int | None = None
    k_total: int | None = None

    def describe(self) -> str:
        parts = []
        if self.m_total is not None:
            parts.append(f"m={self.m_total}")
        if self.k_total is not None:
            parts.append(f"k={self.k_total}")
        return ";".join(parts)


def _single_states(linear: bool, j_max: int) -> list[RotorState]:
    states = []
    for j in range(j_max + 1):
        ks = (0,) if linear else range(-j, j + 1)
        for k in ks:
            for m in range(-j, j + 1):
                states.append(RotorState(j, k, m))
    return states


def single_dimension(linear: bool, j_max: int) -> int:
    if linear:
        return sum(2 * j + 1 for j in range(j_max + 1))
    return sum((2 * j + 1) ** 2 for j in range(j_max + 1))


class BasisSet:
    """Ordered, indexed basis over single- or two-molecule rotor states."""

    def __init__(
        self,
        rotor_class: RotorClass,
        j_max: int,
        states: list,
        pair: bool,
        qn: np.ndarray,
        sector: Sector | None = None,
        parent_indices: np.ndarray | None = None,
        single: "BasisSet | None" = None,
    ):
        self.rotor_class = rotor_class
        self.j_max = j_max
        self.states = states
        self.pair = pair
        self.qn = qn  # integer quantum numbers, one row per state
        self.sector = sector
        self.parent_indices = parent_indices
        self.single = single
        self._index = {state: i for i, state in enumerate(states)}

    @property
    def linear(self) -> bool:
        return self.rotor_class is RotorClass.LINEAR

    @property
    def dimension(self) -> int:
        return len(self.states)

    def ordinal(self, state) -> int:
        return self._index[state]

    def state(self, i: int):
        return self.states[i]

    def __contains__(self, state) -> bool:
        return state in self._index

    @property
    def m_total(self) -> np.ndarray:
        """Per-state total laboratory projection m (m1 + m2 for pairs)."""
        if self.pair:
            return self.qn[:, 2] + self.qn[:, 5]
        return self.qn[:, 2]

    @property
    def k_total(self) -> np.ndarray:
        if self.pair:
            return self.qn[:, 1] + self.qn[:, 4]
        return self.qn[:, 1]

    def __repr__(self) -> str:
        kind = "pair" if self.pair else "single"
        sec = f", sector({self.sector.describe()})" if self.sector else ""
        return f"BasisSet({kind}, {self.rotor_class.value}, j_max={self.j_max}, dim={self.dimension}{sec})"


def build_single_basis(rotor_class: RotorClass, j_max: int) -> BasisSet:
    """Full single-molecule basis |j k m> with j <= j_max (k pinned to 0 if linear)."""
    if j_max < 0:
        raise ValueError("j_max must be non-negative")
    linear = rotor_class is RotorClass.LINEAR
    states = _single_states(linear, j_max)
    qn = np.array(states, dtype=np.int64).reshape(len(states), 3)
    return BasisSet(rotor_class, j_max, states, pair=False, qn=qn)


def build_pair_basis(
    rotor_class: RotorClass,
    j_max: int,
    m_total: int | None = None,
    k_total: int | None = None,
) -> BasisSet:
    """Tensor-product two-molecule basis, optionally filtered to one sector.

    m_total filtering is only exact when the field lies along e_Z (or
    vanishes); k_total filtering is refused for asymmetric tops, whose
    rotational Hamiltonian mixes k.
    """
    if j_max < 0:
        raise ValueError("j_max must be non-negative")
    if k_total is not None and rotor_class is RotorClass.ASYMMETRIC:
        raise ValueError("k_total sectors are not conserved for asymmetric tops")
    single = build_single_basis(rotor_class, j_max)
    n = single.dimension
    sq = single.qn
    # Pair quantum numbers by construction of the product enumeration.
    qn = np.hstack([np.repeat(sq, n, axis=0), np.tile(sq, (n, 1))])

    sector = None
    parent = None
    if m_total is not None or k_total is not None:
        mask = np.ones(len(qn), dtype=bool)
        if m_total is not None:
            mask &= (qn[:, 2] + qn[:, 5]) == m_total
        if k_total is not None:
            mask &= (qn[:, 1] + qn[:, 4]) == k_total
        parent = np.nonzero(mask)[0]
        qn = qn[mask]
        sector = Sector(m_total=m_total, k_total=k_total)

    states = [
        PairState(RotorState(*row[:3]), RotorState(*row[3:]))
        for row in qn.tolist()
    ]
    return BasisSet(
        rotor_class,
        j_max,
        states,
        pair=True,
        qn=qn,
        sector=sector,
        parent_indices=parent,
        single=single,
    )


def pair_sectors(
    rotor_class: RotorClass,
    j_max: int,
    block_m: bool,
    block_k: bool,
) -> list[Sector]:
    """Sectors that partition the full pair basis under the requested blocking."""
    if not block_m and not block_k:
        return [Sector()]
    span = range(-2 * j_max, 2 * j_max + 1)
    ms: Iterable[int | None] = span if block_m else (None,)
    if block_k and rotor_class is not RotorClass.LINEAR:
        ks: Iterable[int | None] = span
    elif block_k:
        ks = (0,)
    else:
        ks = (None,)
    return [Sector(m, k) for m in ms for k in ks]


def exchange_permutation(basis: BasisSet) -> np.ndarray:
    """Ordinal permutation mapping |s1, s2> to |s2, s1>; an involution.

    Sector-filtered bases are supported because swapping the molecules
    preserves both m_total and k_total.
    """
    if not basis.pair:
        raise ValueError("exchange permutation requires a pair basis")
    n = basis.single.dimension
    if basis.parent_indices is None:
        idx = np.arange(basis.dimension)
        return (idx % n) * n + idx // n
    parent = basis.parent_indices
    swapped = (parent % n) * n + parent // n
    pos = {int(p): i for i, p in enumerate(parent)}
    return np.array([pos[int(s)] for s in swapped], dtype=np.int64)
