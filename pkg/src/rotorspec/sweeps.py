"""Parameter-sweep engine: r, theta, field-magnitude, kappa and Stark sweeps.

Each sweep solves a grid of Hamiltonians that share the same basis and, for
pair modes, the same precomputed Kronecker operator pieces, so a grid point
costs one sparse combination plus the eigensolve.  Symmetry blocking is
applied automatically whenever it is exact: m_total when the field is zero
or along the intermolecular axis, k_total when no term can change k.

States are tracked adiabatically from the physical reference endpoint
(largest r, theta = 0, eps = 0, or the prolate kappa end), labelled there
by their dominant product of single-molecule eigenstates, and written out
as one CSV row per retained state per grid point.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rotorspec.basis import BasisSet, Sector, build_pair_basis, build_single_basis
from rotorspec.hamiltonian import (
    FieldConfig,
    PairOperators,
    SparseHermitian,
    k_total_conserved,
    single_molecule_assemble,
    _single_dipole_set,
    _single_dc_csr,
    _matrix_dtype,
    single_rotational_matrix,
)
from rotorspec.basis import exchange_permutation
from rotorspec.molecule import MoleculeSpec, RotorClass, molecule_for_kappa
from rotorspec.solver import (
    EigenSolution,
    StateLabel,
    canonical_group_order,
    classify_parity,
    group_degenerate,
    label_pair_solution,
    label_single_solution,
    single_state_labels,
    solve_blocked,
    solve_lowest,
    track_states,
)
from rotorspec.observables import DipoleReport, expectation_dipoles

__all__ = [
    "SWEEP_MODES",
    "SweepPlan",
    "SweepRow",
    "SweepTable",
    "run_sweep",
    "solve_point",
    "stark_curve",
    "convergence_study",
    "ConvergenceTable",
]

SWEEP_MODES = ("sweep-r", "sweep-theta", "sweep-field", "sweep-kappa", "stark")

_SOLVE_MARGIN = 8


def fmt17(x: float) -> str:
    """17-significant-digit decimal representation used in all text output."""
    return f"{x:.17g}"


@dataclass
class SweepPlan:
    """A validated sweep request: the grid plus every fixed parameter."""

    mode: str
    grid: np.ndarray
    spec1: MoleculeSpec | None = None
    spec2: MoleculeSpec | None = None
    r: float | None = None
    epsilon: float = 0.0
    theta_deg: float = 0.0
    j_max: int = 7
    n_states: int = 40
    tol: float = 1e-10
    deg_tol: float = 1e-8
    seed: int = 0
    method: str = "auto"
    threads: int = 1
    warm_start: bool = False
    # kappa-mode parameterisation: A, C fixed, B derived from kappa.
    kappa_a: float = 2.0
    kappa_c: float = 1.0
    kappa_dipole: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.mode not in SWEEP_MODES:
            raise ValueError(f"unknown sweep mode {self.mode!r}; choose from {SWEEP_MODES}")
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or len(grid) < 1:
            raise ValueError("sweep grid must be a one-dimensional sequence")
        diffs = np.diff(grid)
        if len(grid) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("sweep grid must be strictly monotone")
        self.grid = grid
        if self.mode == "sweep-kappa":
            if self.kappa_a <= self.kappa_c:
                raise ValueError("kappa sweeps require A > C")
            if np.any(np.abs(grid) > 1.0):
                raise ValueError("kappa grid must lie within [-1, 1]")
        elif self.spec1 is None:
            raise ValueError(f"{self.mode} requires a molecule")
        if self.mode == "sweep-r" and np.any(grid <= 0):
            raise ValueError("separations must be positive")
        if self.mode in ("sweep-theta", "sweep-field", "sweep-kappa") and (
            self.r is None or self.r <= 0
        ):
            raise ValueError(f"{self.mode} requires a positive fixed separation r")
        if self.mode == "sweep-field" and np.any(grid < 0):
            raise ValueError("field magnitudes must be non-negative")
        if self.mode == "stark" and np.any(grid < 0):
            raise ValueError("field magnitudes must be non-negative")
        if self.epsilon < 0:
            raise ValueError("field magnitude must be non-negative")
        if self.n_states < 1:
            raise ValueError("n_states must be at least one")
        if self.j_max < 0:
            raise ValueError("j_max must be non-negative")
        if self.method not in ("auto", "dense", "iterative"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least one")

    @property
    def pair(self) -> bool:
        return self.mode != "stark"


@dataclass
class SweepRow:
    param: float
    track: int
    label: str
    parity: str
    sector: str
    group: int
    energy: float
    d_x: float
    d_y: float
    d_z: float
    residual: float


_CSV_HEADER = (
    "param,track,label,parity,sector,group,energy_B,dX_d,dY_d,dZ_d,residual"
)


@dataclass
class SweepTable:
    rows: list[SweepRow]
    metadata: dict

    def params(self) -> np.ndarray:
        return np.unique([row.param for row in self.rows])

    def rows_at(self, param: float, atol: float = 0.0) -> list[SweepRow]:
        return [row for row in self.rows if abs(row.param - param) <= atol]

    def track(self, track_id: int) -> list[SweepRow]:
        return [row for row in self.rows if row.track == track_id]

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_HEADER.split(","))
            for row in self.rows:
                writer.writerow(
                    [
                        fmt17(row.param),
                        row.track,
                        row.label,
                        row.parity,
                        row.sector,
                        row.group,
                        fmt17(row.energy),
                        fmt17(row.d_x),
                        fmt17(row.d_y),
                        fmt17(row.d_z),
                        fmt17(row.residual),
                    ]
                )


def _sector_partition(
    m_total: np.ndarray, k_total: np.ndarray, block_m: bool, block_k: bool
) -> list[tuple[Sector, np.ndarray]]:
    """Exact-symmetry blocks of the full pair enumeration as index lists."""
    if not block_m and not block_k:
        return [(Sector(), np.arange(len(m_total)))]
    keys = []
    if block_m:
        keys.append(m_total)
    if block_k:
        keys.append(k_total)
    stacked = np.stack(keys, axis=1)
    uniq, inverse = np.unique(stacked, axis=0, return_inverse=True)
    out = []
    for u_idx, key in enumerate(uniq):
        vals = iter(key)
        m_val = int(next(vals)) if block_m else None
        k_val = int(next(vals)) if block_k else None
        out.append((Sector(m_total=m_val, k_total=k_val), np.nonzero(inverse == u_idx)[0]))
    return out


def _drop_trailing_group(solution: EigenSolution, full_dim: int, n_min: int) -> EigenSolution:
    """Drop an incomplete trailing degeneracy group at the solve boundary.

    When fewer states than the full dimension were computed, the last group
    may be cut in half by the boundary, which would confuse parity
    classification and tracking.
    """
    groups = solution.degeneracy_groups
    if not groups or solution.n_states >= full_dim:
        return solution
    last = groups[-1]
    if last[-1] == solution.n_states - 1 and last[0] > n_min:
        keep = last[0]
        trimmed = solution.truncate(keep)
        trimmed.degeneracy_groups = groups[:-1]
        return trimmed
    return solution


def _postprocess(
    solution: EigenSolution,
    n_states: int,
    deg_tol: float,
    full_dim: int,
    perm: np.ndarray | None,
    jz_diag: np.ndarray,
) -> EigenSolution:
    solution.degeneracy_groups = group_degenerate(solution.values, deg_tol)
    solution = _drop_trailing_group(solution, full_dim, max(1, n_states // 2))
    if perm is not None:
        classify_parity(solution, perm, deg_tol)
    canonical_group_order(solution, jz_diag)
    solution = solution.truncate(n_states)
    return solution


class _PointEngine:
    """Shared per-point machinery: assemble, block, solve, post-process."""

    def __init__(self, plan: SweepPlan):
        self.plan = plan
        if plan.pair:
            spec1 = plan.spec1 if plan.mode != "sweep-kappa" else self._kappa_spec(plan.grid[0])
            rotor_class = spec1.rotor_class
            self.full_basis = build_pair_basis(rotor_class, plan.j_max)
            self.single_basis = self.full_basis.single
            self.perm = exchange_permutation(self.full_basis)
            self.jz_diag = self.full_basis.m_total.astype(float)
        else:
            self.full_basis = build_single_basis(plan.spec1.rotor_class, plan.j_max)
            self.single_basis = self.full_basis
            self.perm = None
            self.jz_diag = self.full_basis.m_total.astype(float)
        self._ops_cache: PairOperators | None = None
        self._single_cache = None
        self.solve_count = 0

    def _kappa_spec(self, kappa_value: float) -> MoleculeSpec:
        plan = self.plan
        return molecule_for_kappa(kappa_value, plan.kappa_a, plan.kappa_c, plan.kappa_dipole)

    def specs_at(self, param: float) -> tuple[MoleculeSpec, MoleculeSpec | None]:
        plan = self.plan
        if plan.mode == "sweep-kappa":
            spec = self._kappa_spec(param)
            return spec, spec
        return plan.spec1, (plan.spec2 or plan.spec1) if plan.pair else None

    def field_at(self, param: float) -> FieldConfig:
        plan = self.plan
        if plan.mode == "sweep-theta":
            return FieldConfig(plan.epsilon, param)
        if plan.mode in ("sweep-field", "stark"):
            return FieldConfig(param, plan.theta_deg)
        return FieldConfig(plan.epsilon, plan.theta_deg)

    def r_at(self, param: float) -> float | None:
        plan = self.plan
        if not plan.pair:
            return None
        return param if plan.mode == "sweep-r" else plan.r

    def operators_at(self, param: float) -> PairOperators:
        plan = self.plan
        spec1, spec2 = self.specs_at(param)
        if plan.mode == "sweep-kappa":
            return PairOperators(spec1, spec2, self.single_basis)
        if self._ops_cache is None:
            self._ops_cache = PairOperators(spec1, spec2, self.single_basis)
        return self._ops_cache

    def _single_matrices(self):
        if self._single_cache is None:
            spec = self.plan.spec1
            dtype = _matrix_dtype(spec)
            rot = single_rotational_matrix(spec, self.single_basis, dtype=dtype)
            dip = _single_dipole_set(spec, self.single_basis, dtype)
            self._single_cache = (rot, dip)
        return self._single_cache

    def solve(self, param: float, v0=None) -> tuple[EigenSolution, DipoleReport, dict]:
        plan = self.plan
        field = self.field_at(param)
        spec1, spec2 = self.specs_at(param)
        if plan.pair:
            ops = self.operators_at(param)
            h = ops.hamiltonian_csr(self.r_at(param), field)
            block_m = field.conserves_m_total
            block_k = k_total_conserved(spec1, spec2)
            dipole_ops = {
                (1, p): ops.dip1[p] for p in (-1, 0, 1)
            } | {(2, p): ops.dip2[p] for p in (-1, 0, 1)}
        else:
            rot, dip = self._single_matrices()
            h = rot if field.epsilon == 0.0 else rot + _single_dc_csr(dip, field)
            h = h.tocsr()
            block_m = field.conserves_m_total
            block_k = False
            dipole_ops = {(1, p): dip[p] for p in (-1, 0, 1)}

        n_solve = min(plan.n_states + _SOLVE_MARGIN, h.shape[0])
        if block_m or block_k:
            sectors = _sector_partition(
                self.full_basis.m_total, self.full_basis.k_total, block_m, block_k
            )
            solution = solve_blocked(
                h, sectors, n_solve, tol=plan.tol, method=plan.method,
                seed=plan.seed, threads=plan.threads,
            )
        else:
            solution = solve_lowest(
                h, n_solve, tol=plan.tol, method=plan.method, seed=plan.seed, v0=v0
            )
        self.solve_count += 1
        solution = _postprocess(
            solution, plan.n_states, plan.deg_tol, h.shape[0], self.perm, self.jz_diag
        )
        spec2_eff = spec2 if plan.pair else None
        report = expectation_dipoles(
            solution, self.full_basis, spec1, spec2_eff, operators=dipole_ops
        )
        info = {"blocked_m": block_m, "blocked_k": block_k, "dim": h.shape[0]}
        return solution, report, info

    def labels_for(
        self, solution: EigenSolution, param: float, reference_field: FieldConfig
    ) -> list[StateLabel]:
        plan = self.plan
        if not plan.pair:
            return label_single_solution(solution, self.full_basis, plan.spec1)
        spec1, spec2 = self.specs_at(param)
        singles1 = single_state_labels(spec1, reference_field, self.single_basis)
        singles2 = (
            singles1
            if spec2 is None or spec2 == spec1
            else single_state_labels(spec2, reference_field, self.single_basis)
        )
        return label_pair_solution(
            solution,
            self.full_basis,
            singles1,
            singles2,
            jbar_only=plan.mode == "sweep-kappa",
        )


def _reference_first_order(plan: SweepPlan) -> np.ndarray:
    """Grid processing order with the labelling reference endpoint first."""
    grid = np.sort(plan.grid)
    if plan.mode == "sweep-r":
        return grid[::-1]
    return grid


def _energy_rescale(plan: SweepPlan, param: float) -> float:
    """Factor turning point-local energy units into the reported unit.

    kappa sweeps vary B with kappa; energies are reported in the fixed unit
    B(kappa = 0) = (A + C)/2 so that adjacent grid points share a scale.
    Other modes report in the molecule's own B.
    """
    if plan.mode != "sweep-kappa":
        return 1.0
    b_point = 0.5 * (param * (plan.kappa_a - plan.kappa_c) + plan.kappa_a + plan.kappa_c)
    b_unit = 0.5 * (plan.kappa_a + plan.kappa_c)
    return b_point / b_unit


def run_sweep(plan: SweepPlan) -> SweepTable:
    """Run a sweep: solve, track, label and tabulate every grid point."""
    t_start = time.perf_counter()
    engine = _PointEngine(plan)
    order = _reference_first_order(plan)
    reference_field = engine.field_at(order[0])

    point_row_lists: list[list[SweepRow]] = []
    labels_by_track: dict[int, str] = {}
    prev_solution: EigenSolution | None = None
    prev_tracks: np.ndarray | None = None
    next_track = 0
    point_infos = []

    for point_i, param in enumerate(order):
        v0 = None
        if plan.warm_start and prev_solution is not None and prev_solution.n_states:
            v0 = np.ascontiguousarray(prev_solution.vectors[:, 0])
        solution, report, info = engine.solve(param, v0=v0)
        point_infos.append(info)

        if prev_solution is None:
            tracks = np.arange(solution.n_states)
            next_track = solution.n_states
            for state_i, lab in enumerate(
                engine.labels_for(solution, param, reference_field)
            ):
                labels_by_track[state_i] = lab.text()
        else:
            mapping = track_states(prev_solution, solution, threshold=0.5)
            tracks = np.empty(solution.n_states, dtype=np.int64)
            fresh: list[int] = []
            for i, src in enumerate(mapping):
                if src >= 0:
                    tracks[i] = prev_tracks[src]
                else:
                    tracks[i] = next_track
                    fresh.append(i)
                    next_track += 1
            if fresh:
                new_labels = engine.labels_for(solution, param, reference_field)
                for i in fresh:
                    labels_by_track[tracks[i]] = new_labels[i].text()

        scale = _energy_rescale(plan, param)
        group_of_state = np.zeros(solution.n_states, dtype=np.int64)
        for g_id, group in enumerate(solution.degeneracy_groups or []):
            for i in group:
                group_of_state[i] = g_id
        point_rows = []
        for i in range(solution.n_states):
            parity = ""
            if solution.parity is not None and solution.parity[i] != 0:
                parity = "+" if solution.parity[i] > 0 else "-"
            sector = ""
            if solution.sector_tags is not None:
                sector = solution.sector_tags[i].describe()
            point_rows.append(
                SweepRow(
                    param=float(param),
                    track=int(tracks[i]),
                    label=labels_by_track.get(int(tracks[i]), "?"),
                    parity=parity,
                    sector=sector,
                    group=int(group_of_state[i]),
                    energy=float(solution.values[i] * scale),
                    d_x=float(report.average[i, 0]),
                    d_y=float(report.average[i, 1]),
                    d_z=float(report.average[i, 2]),
                    residual=float(solution.residuals[i] * scale),
                )
            )
        point_rows.sort(key=lambda row: row.track)
        point_row_lists.append(point_rows)
        prev_solution, prev_tracks = solution, tracks

    # Emit rows in ascending parameter order regardless of processing order.
    ordered = sorted(range(len(order)), key=lambda i: order[i])
    flat_rows = [row for i in ordered for row in point_row_lists[i]]

    metadata = {
        "mode": plan.mode,
        "grid_points": len(plan.grid),
        "grid_min": float(plan.grid.min()),
        "grid_max": float(plan.grid.max()),
        "j_max": plan.j_max,
        "basis_dimension": engine.full_basis.dimension,
        "n_states": plan.n_states,
        "tol": plan.tol,
        "deg_tol": plan.deg_tol,
        "seed": plan.seed,
        "method": plan.method,
        "threads": plan.threads,
        "solves": engine.solve_count,
        "sector_policy": {
            "m_total_blocked_points": sum(1 for i in point_infos if i["blocked_m"]),
            "k_total_blocked_points": sum(1 for i in point_infos if i["blocked_k"]),
            "points": len(point_infos),
        },
        "wall_time_s": time.perf_counter() - t_start,
    }
    if plan.mode == "sweep-kappa":
        metadata["energy_unit"] = "B(kappa=0) = (A+C)/2"
        metadata["kappa_a"] = plan.kappa_a
        metadata["kappa_c"] = plan.kappa_c
    if plan.spec1 is not None:
        metadata["molecule"] = plan.spec1.name
        if plan.pair:
            metadata["molecule2"] = (plan.spec2 or plan.spec1).name
    return SweepTable(rows=flat_rows, metadata=metadata)


def solve_point(
    spec1: MoleculeSpec,
    spec2: MoleculeSpec | None,
    r: float,
    field: FieldConfig,
    j_max: int,
    n_states: int = 40,
    tol: float = 1e-10,
    deg_tol: float = 1e-8,
    seed: int = 0,
    method: str = "auto",
    threads: int = 1,
) -> tuple[EigenSolution, BasisSet, DipoleReport]:
    """One fully post-processed pair spectrum at fixed (r, field).

    Convenience wrapper over the sweep machinery for single-point use;
    returns the solution (grouped, parity-classified, canonically ordered),
    the full pair basis and the dipole report.
    """
    plan = SweepPlan(
        mode="sweep-r",
        grid=np.array([r]),
        spec1=spec1,
        spec2=spec2,
        epsilon=field.epsilon,
        theta_deg=field.theta_deg,
        j_max=j_max,
        n_states=n_states,
        tol=tol,
        deg_tol=deg_tol,
        seed=seed,
        method=method,
        threads=threads,
    )
    engine = _PointEngine(plan)
    solution, report, _info = engine.solve(r)
    return solution, engine.full_basis, report


def stark_curve(
    spec: MoleculeSpec,
    theta_deg: float,
    eps_grid,
    j_max: int = 7,
    n_states: int = 20,
    **kwargs,
) -> SweepTable:
    """Single-molecule energies and dipole projections versus field magnitude."""
    plan = SweepPlan(
        mode="stark",
        grid=np.asarray(eps_grid, dtype=float),
        spec1=spec,
        theta_deg=theta_deg,
        j_max=j_max,
        n_states=n_states,
        **kwargs,
    )
    return run_sweep(plan)


@dataclass
class ConvergenceRow:
    j_max: int
    state: int
    energy: float
    d_z: float
    delta_energy: float | None


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    metadata: dict

    def energies_at(self, j_max: int) -> np.ndarray:
        return np.array([r.energy for r in self.rows if r.j_max == j_max])

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j_max", "state", "energy_B", "dZ_d", "delta_energy_B"])
            for row in self.rows:
                writer.writerow(
                    [
                        row.j_max,
                        row.state,
                        fmt17(row.energy),
                        fmt17(row.d_z),
                        "" if row.delta_energy is None else fmt17(row.delta_energy),
                    ]
                )


def convergence_study(
    spec1: MoleculeSpec,
    spec2: MoleculeSpec | None,
    r: float,
    field: FieldConfig,
    j_max_values,
    n_states: int = 10,
    tol: float = 1e-10,
    deg_tol: float = 1e-8,
    seed: int = 0,
    method: str = "auto",
    threads: int = 1,
) -> ConvergenceTable:
    """Repeat one fixed-point solve for each cutoff and tabulate differences.

    Rows carry (j_max, state ordinal, energy, <d_Z>) plus the change in each
    state's energy relative to the previous cutoff.
    """
    j_values = sorted(int(j) for j in j_max_values)
    if any(j < 0 for j in j_values):
        raise ValueError("j_max values must be non-negative")
    t_start = time.perf_counter()
    rows: list[ConvergenceRow] = []
    prev_energies: np.ndarray | None = None
    dims = {}
    for j_max in j_values:
        solution, basis, report = solve_point(
            spec1, spec2, r, field, j_max, n_states=n_states,
            tol=tol, deg_tol=deg_tol, seed=seed, method=method, threads=threads,
        )
        dims[j_max] = basis.dimension
        n = solution.n_states
        for i in range(n):
            delta = None
            if prev_energies is not None and i < len(prev_energies):
                delta = float(solution.values[i] - prev_energies[i])
            rows.append(
                ConvergenceRow(
                    j_max=j_max,
                    state=i,
                    energy=float(solution.values[i]),
                    d_z=float(report.average[i, 2]),
                    delta_energy=delta,
                )
            )
        prev_energies = solution.values.copy()
    metadata = {
        "mode": "convergence",
        "j_max_values": j_values,
        "basis_dimensions": dims,
        "r": r,
        "epsilon": field.epsilon,
        "theta_deg": field.theta_deg,
        "n_states": n_states,
        "wall_time_s": time.perf_counter() - t_start,
        "molecule": spec1.name,
    }
    return ConvergenceTable(rows=rows, metadata=metadata)
