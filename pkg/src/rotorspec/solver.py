"""Lowest-eigenpair solvers and spectral post-processing.

Solves use a dense LAPACK path for dimensions up to 5000 and an implicitly
restarted Lanczos (ARPACK) path above, with deterministic seeded start
vectors.  The post-processing steps attach the structure the physics
guarantees: degeneracy groups, exchange-parity labels (the two-molecule
swap is an involution, so each complete degenerate group diagonalises into
+-1 sectors), a canonical ordering inside degenerate groups, and adiabatic
track matching between neighbouring sweep points via eigenvector overlaps.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as dla
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from rotorspec.basis import BasisSet, Sector
from rotorspec.hamiltonian import FieldConfig, SparseHermitian, single_molecule_assemble
from rotorspec.molecule import MoleculeSpec, RotorClass

__all__ = [
    "SolverConvergenceError",
    "ParityClassificationError",
    "EigenSolution",
    "StateLabel",
    "solve_lowest",
    "solve_blocked",
    "group_degenerate",
    "classify_parity",
    "canonical_group_order",
    "track_states",
    "single_state_labels",
    "label_single_vectors",
    "label_single_solution",
    "label_pair_solution",
]

DENSE_LIMIT = 5000


class SolverConvergenceError(RuntimeError):
    """Raised when the iterative solver fails to converge the requested pairs."""


class ParityClassificationError(RuntimeError):
    """Raised when a state has no clean exchange parity (missed degeneracy)."""


@dataclass
class EigenSolution:
    """Sorted lowest eigenpairs plus the labels attached after solving.

    ``vectors`` holds one orthonormal column per state over the full basis
    ordering.  ``sector_tags`` records the (m_total, k_total) block each
    state came from when the solve was sector-blocked; ``parity`` holds the
    exchange parity (+1/-1, 0 before classification).
    """

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    sector_tags: list[Sector] | None = None
    parity: np.ndarray | None = None
    degeneracy_groups: list[list[int]] | None = None

    @property
    def n_states(self) -> int:
        return len(self.values)

    def truncate(self, n: int) -> "EigenSolution":
        """Keep the lowest n states, never splitting a degeneracy group."""
        if n >= self.n_states:
            return self
        if self.degeneracy_groups:
            cut = n
            for group in self.degeneracy_groups:
                if group[0] < n <= group[-1]:
                    cut = group[-1] + 1
                    break
            n = min(cut, self.n_states)
        return EigenSolution(
            values=self.values[:n],
            vectors=self.vectors[:, :n],
            residuals=self.residuals[:n],
            sector_tags=self.sector_tags[:n] if self.sector_tags is not None else None,
            parity=self.parity[:n] if self.parity is not None else None,
            degeneracy_groups=[g for g in (self.degeneracy_groups or []) if g[-1] < n] or None,
        )


def _as_csr(h) -> sparse.csr_matrix:
    if isinstance(h, SparseHermitian):
        return h.to_csr()
    if sparse.issparse(h):
        return h.tocsr()
    return sparse.csr_matrix(np.asarray(h))


def _residuals(h: sparse.csr_matrix, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    if len(values) == 0:
        return np.zeros(0)
    res = h @ vectors - vectors * values[np.newaxis, :]
    return np.linalg.norm(res, axis=0)


def solve_lowest(h, n: int, tol: float = 1e-10, method: str = "auto", seed: int = 0, v0=None) -> EigenSolution:
    """Algebraically smallest n eigenpairs of a Hermitian matrix.

    ``method`` is 'auto' (dense up to dimension 5000, Lanczos beyond),
    'dense' or 'iterative'.  The iterative path uses a deterministic
    seeded start vector (or ``v0``) and raises SolverConvergenceError,
    naming the unconverged count, if ARPACK does not converge.  Residuals
    ||H v - lambda v|| are verified against tol * max(1, |lambda|).
    """
    if n < 1:
        raise ValueError("must request at least one eigenpair")
    hc = _as_csr(h)
    dim = hc.shape[0]
    n = min(n, dim)
    if method not in ("auto", "dense", "iterative"):
        raise ValueError(f"unknown solver method {method!r}")
    use_dense = method == "dense" or (method == "auto" and dim <= DENSE_LIMIT)
    if not use_dense and n >= dim - 1:
        use_dense = True  # ARPACK requires k < dim - 1

    if use_dense:
        dense = hc.toarray()
        if n == dim:
            values, vectors = dla.eigh(dense)
        else:
            values, vectors = dla.eigh(dense, subset_by_index=(0, n - 1))
    else:
        if v0 is None:
            rng = np.random.default_rng(seed)
            v0 = rng.standard_normal(dim)
        v0 = np.asarray(v0, dtype=hc.dtype)
        try:
            values, vectors = eigsh(hc, k=n, which="SA", v0=v0, tol=tol * 1e-2)
        except ArpackNoConvergence as exc:
            missing = n - len(exc.eigenvalues)
            raise SolverConvergenceError(
                f"iterative solver left {missing} of {n} eigenpairs unconverged (dim={dim})"
            ) from exc
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]

    residuals = _residuals(hc, values, vectors)
    bound = tol * np.maximum(1.0, np.abs(values))
    bad = int(np.sum(residuals > bound))
    if bad:
        raise SolverConvergenceError(
            f"{bad} of {n} eigenpairs exceed the residual bound tol*max(1,|lambda|)"
        )
    return EigenSolution(values=values, vectors=vectors, residuals=residuals)


def solve_blocked(
    h_full,
    sector_indices: list[tuple[Sector, np.ndarray]],
    n: int,
    tol: float = 1e-10,
    method: str = "auto",
    seed: int = 0,
    threads: int = 1,
) -> EigenSolution:
    """Solve each symmetry block separately and merge the lowest n states.

    ``sector_indices`` maps each sector to the ordinals of its basis states
    in the full enumeration.  Eigenvectors are embedded back into the full
    basis (blocks are exact, so this loses nothing), and the merged list is
    sorted by eigenvalue with deterministic tie-breaking.
    """
    hc = _as_csr(h_full)
    dim = hc.shape[0]
    jobs = [(sec, ix) for sec, ix in sector_indices if len(ix) > 0]

    def solve_one(job):
        sec, ix = job
        sub = hc[ix][:, ix].tocsr()
        local = solve_lowest(sub, min(n, len(ix)), tol=tol, method=method, seed=seed)
        return sec, ix, local

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve_one, jobs))
    else:
        results = [solve_one(job) for job in jobs]

    values, tags, cols, sec_ord, local_ord = [], [], [], [], []
    for s_idx, (sec, ix, local) in enumerate(results):
        for i in range(local.n_states):
            col = np.zeros(dim, dtype=local.vectors.dtype)
            col[ix] = local.vectors[:, i]
            values.append(local.values[i])
            tags.append(sec)
            cols.append(col)
            sec_ord.append(s_idx)
            local_ord.append(i)

    values = np.array(values)
    order = np.lexsort((np.array(local_ord), np.array(sec_ord), values))[:n]
    vectors = np.column_stack([cols[i] for i in order]) if len(order) else np.zeros((dim, 0))
    merged = EigenSolution(
        values=values[order],
        vectors=vectors,
        residuals=_residuals(hc, values[order], vectors),
        sector_tags=[tags[i] for i in order],
    )
    return merged


def group_degenerate(values: np.ndarray, dtol: float = 1e-8) -> list[list[int]]:
    """Partition sorted eigenvalues into maximal runs with gaps below dtol."""
    groups: list[list[int]] = []
    current: list[int] = []
    for i, v in enumerate(values):
        if current and v - values[current[-1]] >= dtol:
            groups.append(current)
            current = []
        current.append(i)
    if current:
        groups.append(current)
    return groups


def classify_parity(solution: EigenSolution, perm: np.ndarray, dtol: float = 1e-8) -> np.ndarray:
    """Rotate degenerate groups to exchange-parity eigenstates and label all states.

    Within each degeneracy group the restriction of the swap operator P is
    diagonalised (an involution, so eigenvalues are +-1) and the group basis
    rotated accordingly.  A non-degenerate state must already satisfy
    |<v|P|v>| > 0.99; anything less signals a missed degeneracy or a solver
    failure and raises ParityClassificationError.
    """
    if solution.degeneracy_groups is None:
        solution.degeneracy_groups = group_degenerate(solution.values, dtol)
    parity = np.zeros(solution.n_states, dtype=np.int64)
    v = solution.vectors
    for group in solution.degeneracy_groups:
        if len(group) == 1:
            i = group[0]
            s = np.vdot(v[:, i], v[perm, i]).real
            if abs(s) <= 0.99:
                raise ParityClassificationError(
                    f"state {i} has |<v|P|v>| = {abs(s):.3f} <= 0.99; "
                    "likely a missed degeneracy"
                )
            parity[i] = 1 if s > 0 else -1
            continue
        g = np.array(group)
        vg = v[:, g]
        restr = vg.conj().T @ vg[perm, :]
        restr = 0.5 * (restr + restr.conj().T)
        eigvals, rot = dla.eigh(restr)
        if np.any(np.abs(np.abs(eigvals) - 1.0) > 1e-6):
            raise ParityClassificationError(
                f"exchange restriction of group {group} has eigenvalues {eigvals}; "
                "group is not closed under the swap (incomplete degeneracy?)"
            )
        v[:, g] = vg @ rot
        parity[g] = np.where(eigvals > 0, 1, -1)
    solution.parity = parity
    return parity


def canonical_group_order(solution: EigenSolution, jz_diagonal: np.ndarray) -> None:
    """Deterministically order members inside each degeneracy group.

    Sorts by (parity descending, <J_Z> ascending); <J_Z> is evaluated with
    the diagonal m_total operator.  This pins the reported basis inside
    degenerate groups, making CSV output reproducible.
    """
    if solution.degeneracy_groups is None:
        return
    v = solution.vectors
    for group in solution.degeneracy_groups:
        if len(group) == 1:
            continue
        g = np.array(group)
        jz = np.einsum("ij,i,ij->j", v[:, g].conj(), jz_diagonal, v[:, g]).real
        par = solution.parity[g] if solution.parity is not None else np.zeros(len(g))
        order = np.lexsort((np.round(jz, 9), -par))
        v[:, g] = v[:, g][:, order]
        if solution.parity is not None:
            solution.parity[g] = par[order]
        if solution.sector_tags is not None:
            tags = [solution.sector_tags[i] for i in g]
            for slot, src in zip(g, order):
                solution.sector_tags[slot] = tags[src]
        res = solution.residuals[g]
        solution.residuals[g] = res[order]


def _group_of(groups: list[list[int]], n_states: int) -> list[list[int]]:
    if groups:
        return groups
    return [[i] for i in range(n_states)]


def track_states(
    prev: EigenSolution, curr: EigenSolution, threshold: float = 0.5
) -> np.ndarray:
    """Match current states to previous ones by squared eigenvector overlaps.

    Matching happens at the degeneracy-group level (Frobenius overlap of
    group subspaces, normalised by the smaller group size), greedily from
    the strongest overlap down, accepting matches at or above ``threshold``.
    Members inside matched groups are then paired greedily on individual
    overlaps.  Returns, per current state, the previous-state index or -1
    for a new track.
    """
    overlap = np.abs(prev.vectors.conj().T @ curr.vectors) ** 2
    groups_p = _group_of(prev.degeneracy_groups or [], prev.n_states)
    groups_c = _group_of(curr.degeneracy_groups or [], curr.n_states)

    scores = []
    for gp_i, gp in enumerate(groups_p):
        for gc_i, gc in enumerate(groups_c):
            s = overlap[np.ix_(gp, gc)].sum() / min(len(gp), len(gc))
            if s >= threshold:
                scores.append((-s, gp_i, gc_i))
    scores.sort()

    mapping = np.full(curr.n_states, -1, dtype=np.int64)
    used_p: set[int] = set()
    used_c: set[int] = set()
    for _neg, gp_i, gc_i in scores:
        if gp_i in used_p or gc_i in used_c:
            continue
        used_p.add(gp_i)
        used_c.add(gc_i)
        gp, gc = groups_p[gp_i], groups_c[gc_i]
        sub = overlap[np.ix_(gp, gc)].copy()
        for _ in range(min(len(gp), len(gc))):
            flat = int(np.argmax(sub))
            r, c = divmod(flat, sub.shape[1])
            if sub[r, c] < 0:
                break
            mapping[gc[c]] = gp[r]
            sub[r, :] = -1.0
            sub[:, c] = -1.0
    return mapping


# ---------------------------------------------------------------------------
# state labelling


@dataclass
class StateLabel:
    """Asymptotic quantum-number label (jbar, kbar or taubar, mbar, parity)."""

    jbar: int
    mbar: int
    kbar: int | None = None
    taubar: int | None = None
    parity: int | None = None
    weight: float = 1.0
    jbar_only: bool = False

    @property
    def uncertain(self) -> bool:
        return self.weight < 0.5

    def text(self) -> str:
        if self.jbar_only:
            body = f"{self.jbar}"
        else:
            inner = []
            if self.kbar is not None:
                inner.append(f"{self.kbar:+d}")
            if self.taubar is not None:
                inner.append(f"{self.taubar:+d}")
            inner.append(f"{self.mbar:+d}")
            body = f"{self.jbar}(" + ";".join(inner) + ")"
        if self.parity is not None:
            body += "+" if self.parity > 0 else "-"
        if self.uncertain:
            body += "?"
        return body


@dataclass
class SingleLabels:
    """Full single-molecule eigenbasis with per-state asymptotic labels."""

    vectors: np.ndarray  # (dim, dim) eigenvectors over the single basis
    jbar: np.ndarray
    mbar: np.ndarray
    kbar: np.ndarray | None
    taubar: np.ndarray | None


def _dominant(weights: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """For each eigenvector column, the label value carrying the most weight."""
    uniq = np.unique(labels)
    per_label = np.stack([weights[labels == u].sum(axis=0) for u in uniq])
    return uniq[np.argmax(per_label, axis=0)]


def _zero_field_tau(spec: MoleculeSpec, basis: BasisSet) -> tuple[np.ndarray, np.ndarray]:
    """Zero-field eigenvectors of an asymmetric top with tau = k_a - k_c labels.

    Within each exact (j, m) block the eigenvalues rank the states, and
    tau runs -j..j in order of increasing energy.
    """
    sol = solve_lowest(
        single_molecule_assemble(spec, FieldConfig(0.0), basis), basis.dimension, method="dense"
    )
    u0, vals0 = sol.vectors, sol.values
    w0 = np.abs(u0) ** 2
    j0 = _dominant(w0, basis.qn[:, 0])
    m0 = _dominant(w0, basis.qn[:, 2])
    tau0 = np.zeros(basis.dimension, dtype=np.int64)
    for j in np.unique(j0):
        for m in np.unique(m0):
            block = np.nonzero((j0 == j) & (m0 == m))[0]
            if len(block) == 0:
                continue
            ranks = np.argsort(vals0[block], kind="stable")
            for rank, i in enumerate(ranks):
                tau0[block[i]] = -j + rank
    return u0, tau0


def label_single_vectors(
    spec: MoleculeSpec, basis: BasisSet, vectors: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]:
    """(jbar, mbar, kbar, taubar) arrays for the given single-molecule vectors.

    jbar, mbar (and kbar for k-conserving rotors) come from the dominant
    basis components; asymmetric tops get taubar by matching against the
    zero-field eigenbasis through squared overlaps.
    """
    w = np.abs(vectors) ** 2
    jbar = _dominant(w, basis.qn[:, 0])
    mbar = _dominant(w, basis.qn[:, 2])
    asym = spec.rotor_class is RotorClass.ASYMMETRIC
    # k is identically zero for linear rotors and carries no label information.
    kbar = None if (asym or spec.rotor_class is RotorClass.LINEAR) else _dominant(w, basis.qn[:, 1])
    taubar = None
    if asym:
        u0, tau0 = _zero_field_tau(spec, basis)
        ov = np.abs(u0.conj().T @ vectors) ** 2
        n = vectors.shape[1]
        taubar = np.empty(n, dtype=np.int64)
        taken = ov.copy()
        for _ in range(n):
            flat = int(np.argmax(taken))
            r, c = divmod(flat, taken.shape[1])
            if taken[r, c] < 0:
                break
            taubar[c] = tau0[r]
            taken[r, :] = -1.0
            taken[:, c] = -1.0
    return jbar, mbar, kbar, taubar


def single_state_labels(spec: MoleculeSpec, field, basis: BasisSet) -> SingleLabels:
    """Diagonalise one molecule fully and label every eigenstate.

    The returned eigenbasis is what pair states are decomposed against when
    they are labelled at a sweep's reference endpoint.
    """
    sol = solve_lowest(single_molecule_assemble(spec, field, basis), basis.dimension, method="dense")
    jbar, mbar, kbar, taubar = label_single_vectors(spec, basis, sol.vectors)
    return SingleLabels(vectors=sol.vectors, jbar=jbar, mbar=mbar, kbar=kbar, taubar=taubar)


def label_single_solution(
    solution: EigenSolution, basis: BasisSet, spec: MoleculeSpec
) -> list[StateLabel]:
    """Labels for the states of a single-molecule solve (no parity)."""
    jbar, mbar, kbar, taubar = label_single_vectors(spec, basis, solution.vectors)
    weights = np.ones(solution.n_states)
    return [
        StateLabel(
            jbar=int(jbar[i]),
            mbar=int(mbar[i]),
            kbar=None if kbar is None else int(kbar[i]),
            taubar=None if taubar is None else int(taubar[i]),
            weight=float(weights[i]),
        )
        for i in range(solution.n_states)
    ]


def label_pair_solution(
    solution: EigenSolution,
    basis: BasisSet,
    singles: SingleLabels,
    singles2: SingleLabels | None = None,
    jbar_only: bool = False,
) -> list[StateLabel]:
    """Label pair eigenstates by their dominant product of single-molecule states.

    Each eigenvector is transformed into the product-of-eigenstates basis;
    the dominant amplitude (symmetrised over the two molecule orderings, so
    exchange-adapted states keep their full weight) supplies additive
    labels jbar, kbar or taubar and mbar.  Weights below 0.5 mark the label
    uncertain.
    """
    if not basis.pair:
        raise ValueError("expected a pair basis")
    if singles2 is None:
        singles2 = singles
    n1 = basis.single.dimension
    u1, u2 = singles.vectors, singles2.vectors
    labels = []
    for i in range(solution.n_states):
        if basis.parent_indices is None:
            cmat = solution.vectors[:, i].reshape(n1, n1)
        else:
            full = np.zeros(n1 * n1, dtype=solution.vectors.dtype)
            full[basis.parent_indices] = solution.vectors[:, i]
            cmat = full.reshape(n1, n1)
        amp = u1.conj().T @ cmat @ u2.conj()
        w = np.abs(amp) ** 2
        sym = w + w.T
        np.fill_diagonal(sym, np.diag(w))
        flat = int(np.argmax(np.triu(sym)))
        a, b = divmod(flat, n1)
        weight = float(sym[a, b])
        parity = None
        if solution.parity is not None and solution.parity[i] != 0:
            parity = int(solution.parity[i])
        labels.append(
            StateLabel(
                jbar=int(singles.jbar[a] + singles2.jbar[b]),
                mbar=int(singles.mbar[a] + singles2.mbar[b]),
                kbar=None if singles.kbar is None else int(singles.kbar[a] + singles2.kbar[b]),
                taubar=None if singles.taubar is None else int(singles.taubar[a] + singles2.taubar[b]),
                parity=parity,
                weight=weight,
                jbar_only=jbar_only,
            )
        )
    return labels
