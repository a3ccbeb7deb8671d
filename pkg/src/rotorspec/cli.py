"""Command-line front end: spectra, sweeps and matrix dumps as CSV files.

Every run writes the requested table plus a ``<out>.meta.json`` sidecar
recording the exact configuration, basis dimension, sector policy, solver
settings and wall time.  All numeric output is dimensionless (energy/B,
r/r_B, eps = dE/B); ``--si`` appends converted columns using the molecule's
natural units.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

import rotorspec
from rotorspec.basis import build_pair_basis, build_single_basis
from rotorspec.hamiltonian import FieldConfig, assemble, single_molecule_assemble
from rotorspec.molecule import (
    BUILTIN_NAMES,
    MoleculeSpec,
    RotorClass,
    builtin_molecule,
    characteristic_scales,
    load_molecule_file,
)
from rotorspec.solver import ParityClassificationError, SolverConvergenceError
from rotorspec.sweeps import (
    SweepPlan,
    convergence_study,
    fmt17,
    run_sweep,
)

__all__ = ["main", "parse_args", "run"]

_SWEEP_COMMANDS = ("spectrum", "sweep-r", "sweep-theta", "sweep-field", "sweep-kappa", "stark")
_DEFAULT_GRIDS = {
    "sweep-r": "0.2:10:60:log",
    "sweep-theta": "0:90:91",
    "sweep-field": "0:10:101",
    "sweep-kappa": "-0.95:0.95:39",
    "stark": "0:10:101",
}


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ValueError(f"grid must be start:stop:count[:log], got {text!r}")
    try:
        start, stop = float(parts[0]), float(parts[1])
        count = int(parts[2])
    except ValueError as exc:
        raise ValueError(f"malformed grid {text!r}") from exc
    if count < 1:
        raise ValueError("grid needs at least one point")
    if count > 1 and not start < stop:
        raise ValueError(f"non-monotone grid {text!r} (start must be below stop)")
    if len(parts) == 4:
        if parts[3] != "log":
            raise ValueError(f"unknown grid qualifier {parts[3]!r}")
        if start <= 0:
            raise ValueError("log-spaced grids require positive endpoints")
        return np.geomspace(start, stop, count)
    return np.linspace(start, stop, count)


def _parse_jmax_range(text: str) -> list[int]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"convergence grid must be MIN:MAX, got {text!r}")
    lo, hi = int(parts[0]), int(parts[1])
    if lo < 0 or hi < lo:
        raise ValueError(f"bad j_max range {text!r}")
    return list(range(lo, hi + 1))


def _parse_dipole(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"dipole must be da,db,dc in Debye, got {text!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _resolve_molecule(selector: str, b_ghz: float, d_debye: float) -> MoleculeSpec:
    candidate = Path(selector)
    if candidate.exists() or os.sep in selector:
        return load_molecule_file(candidate)
    return builtin_molecule(selector, b_ghz=b_ghz, d_debye=d_debye)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotorspec",
        description=(
            "Low-energy spectra and dipole polarisation of one or two polar "
            "rigid rotors in a dc electric field."
        ),
    )
    parser.add_argument("--version", action="version", version=f"rotorspec {rotorspec.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, pair: bool):
        if pair or p.prog.endswith("stark"):
            p.add_argument("--molecule", default="linear",
                           help=f"built-in name ({', '.join(BUILTIN_NAMES)}) or molecule file path")
            p.add_argument("--b-ghz", type=float, default=1.0,
                           help="B constant of the generic linear rotor (GHz)")
            p.add_argument("--d-debye", type=float, default=1.0,
                           help="dipole of the generic linear rotor (Debye)")
        if pair:
            p.add_argument("--molecule2", default=None,
                           help="second molecule (defaults to the first)")
        p.add_argument("--jmax", type=int, default=None,
                       help="basis cutoff (default 7 for linear, 5 for non-linear pairs)")
        p.add_argument("--n-states", type=int, default=None,
                       help="states to report (default 40 for pairs, 20 single)")
        p.add_argument("--tol", type=float, default=1e-10, help="solver residual tolerance")
        p.add_argument("--deg-tol", type=float, default=1e-8,
                       help="degeneracy grouping tolerance (units of B)")
        p.add_argument("--seed", type=int, default=0, help="iterative-solver start-vector seed")
        p.add_argument("--method", choices=("auto", "dense", "iterative"), default="auto")
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("ROTORSPEC_THREADS", "1")),
                       help="worker threads for blocked solves (env ROTORSPEC_THREADS)")
        p.add_argument("--out", default=None, help="output file (default <command>.csv)")
        p.add_argument("--format", choices=("csv",), default="csv")
        p.add_argument("--si", action="store_true",
                       help="append SI columns (GHz energies) and unit conversions")

    p_spec = sub.add_parser("spectrum", help="pair spectrum at one point")
    p_spec.add_argument("--r", type=float, required=True, help="separation in units of r_B")
    p_spec.add_argument("--eps", type=float, default=0.0, help="field magnitude eps = dE/B")
    p_spec.add_argument("--theta", type=float, default=0.0, help="field angle in degrees")
    add_common(p_spec, pair=True)

    p_r = sub.add_parser("sweep-r", help="sweep the separation r")
    p_r.add_argument("--eps", type=float, default=0.0)
    p_r.add_argument("--theta", type=float, default=0.0)
    p_r.add_argument("--grid", default=_DEFAULT_GRIDS["sweep-r"], help="start:stop:count[:log]")
    add_common(p_r, pair=True)

    p_t = sub.add_parser("sweep-theta", help="sweep the field angle theta")
    p_t.add_argument("--r", type=float, required=True)
    p_t.add_argument("--eps", type=float, default=4.0)
    p_t.add_argument("--grid", default=_DEFAULT_GRIDS["sweep-theta"])
    add_common(p_t, pair=True)

    p_f = sub.add_parser("sweep-field", help="sweep the field magnitude eps")
    p_f.add_argument("--r", type=float, required=True)
    p_f.add_argument("--theta", type=float, default=0.0)
    p_f.add_argument("--grid", default=_DEFAULT_GRIDS["sweep-field"])
    add_common(p_f, pair=True)

    p_k = sub.add_parser("sweep-kappa", help="sweep the asymmetry parameter kappa")
    p_k.add_argument("--r", type=float, required=True)
    p_k.add_argument("--eps", type=float, default=0.0)
    p_k.add_argument("--theta", type=float, default=0.0)
    p_k.add_argument("--A", dest="kappa_a", type=float, default=2.0,
                     help="fixed A constant of the kappa family")
    p_k.add_argument("--C", dest="kappa_c", type=float, default=1.0,
                     help="fixed C constant of the kappa family")
    p_k.add_argument("--dipole", default="1,0,0", help="da,db,dc in Debye")
    p_k.add_argument("--grid", default=_DEFAULT_GRIDS["sweep-kappa"])
    add_common(p_k, pair=False)

    p_s = sub.add_parser("stark", help="single-molecule Stark curve")
    p_s.add_argument("--theta", type=float, default=0.0)
    p_s.add_argument("--grid", default=_DEFAULT_GRIDS["stark"])
    add_common(p_s, pair=False)

    p_c = sub.add_parser("convergence", help="fixed-point solve versus j_max")
    p_c.add_argument("--r", type=float, required=True)
    p_c.add_argument("--eps", type=float, default=0.0)
    p_c.add_argument("--theta", type=float, default=0.0)
    p_c.add_argument("--grid", default="1:7", help="MIN:MAX inclusive j_max range")
    add_common(p_c, pair=True)

    p_d = sub.add_parser("dump-matrix", help="write the assembled matrix in coordinate form")
    p_d.add_argument("--r", type=float, default=None, help="separation (omit with --single)")
    p_d.add_argument("--eps", type=float, default=0.0)
    p_d.add_argument("--theta", type=float, default=0.0)
    p_d.add_argument("--single", action="store_true", help="single molecule instead of a pair")
    add_common(p_d, pair=True)

    return parser


def parse_args(argv=None) -> argparse.Namespace:
    """Parse and fully validate the command line (fail fast, before assembly)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
    except (ValueError, KeyError) as exc:
        parser.error(str(exc))
    return args


def _validate(args: argparse.Namespace) -> None:
    cmd = args.command
    if cmd == "sweep-kappa":
        args.spec1 = None
        args.spec2 = None
        args.kappa_dipole = _parse_dipole(args.dipole)
        if args.kappa_a <= args.kappa_c:
            raise ValueError("--A must exceed --C for the kappa parameterisation")
    else:
        args.spec1 = _resolve_molecule(args.molecule, args.b_ghz, args.d_debye)
        args.spec2 = None
        if getattr(args, "molecule2", None):
            args.spec2 = _resolve_molecule(args.molecule2, args.b_ghz, args.d_debye)

    pair = cmd not in ("stark",)
    if args.jmax is None:
        if cmd == "sweep-kappa":
            args.jmax = 5
        elif args.spec1.rotor_class is RotorClass.LINEAR:
            args.jmax = 7
        else:
            args.jmax = 5 if pair else 7
    if args.jmax < 0:
        raise ValueError("--jmax must be non-negative")
    if args.n_states is None:
        args.n_states = 40 if pair and cmd != "convergence" else 20
        if cmd == "convergence":
            args.n_states = 10
    if args.n_states < 1:
        raise ValueError("--n-states must be positive")
    if args.threads < 1:
        raise ValueError("--threads must be positive")

    if cmd in ("spectrum", "sweep-theta", "sweep-field", "sweep-kappa", "convergence", "dump-matrix"):
        r = getattr(args, "r", None)
        if cmd == "dump-matrix":
            if not args.single and (r is None or r <= 0):
                raise ValueError("dump-matrix needs --r > 0 (or --single)")
        elif r is None or r <= 0:
            raise ValueError("--r must be positive")
    if getattr(args, "eps", 0.0) < 0:
        raise ValueError("--eps must be non-negative")

    if cmd == "convergence":
        args.jmax_values = _parse_jmax_range(args.grid)
    elif cmd in _DEFAULT_GRIDS:
        args.grid_values = _parse_grid(args.grid)

    if args.out is None:
        args.out = "matrix.txt" if cmd == "dump-matrix" else f"{cmd}.csv"


def _build_plan(args: argparse.Namespace) -> SweepPlan:
    cmd = args.command
    common = dict(
        j_max=args.jmax,
        n_states=args.n_states,
        tol=args.tol,
        deg_tol=args.deg_tol,
        seed=args.seed,
        method=args.method,
        threads=args.threads,
    )
    if cmd == "spectrum":
        return SweepPlan(
            mode="sweep-r", grid=np.array([args.r]), spec1=args.spec1, spec2=args.spec2,
            epsilon=args.eps, theta_deg=args.theta, **common,
        )
    if cmd == "sweep-r":
        return SweepPlan(
            mode="sweep-r", grid=args.grid_values, spec1=args.spec1, spec2=args.spec2,
            epsilon=args.eps, theta_deg=args.theta, **common,
        )
    if cmd == "sweep-theta":
        return SweepPlan(
            mode="sweep-theta", grid=args.grid_values, spec1=args.spec1, spec2=args.spec2,
            r=args.r, epsilon=args.eps, **common,
        )
    if cmd == "sweep-field":
        return SweepPlan(
            mode="sweep-field", grid=args.grid_values, spec1=args.spec1, spec2=args.spec2,
            r=args.r, theta_deg=args.theta, **common,
        )
    if cmd == "sweep-kappa":
        return SweepPlan(
            mode="sweep-kappa", grid=args.grid_values, r=args.r,
            epsilon=args.eps, theta_deg=args.theta,
            kappa_a=args.kappa_a, kappa_c=args.kappa_c, kappa_dipole=args.kappa_dipole,
            **common,
        )
    if cmd == "stark":
        return SweepPlan(
            mode="stark", grid=args.grid_values, spec1=args.spec1,
            theta_deg=args.theta, **common,
        )
    raise ValueError(f"no sweep plan for command {cmd!r}")


def _si_block(spec: MoleculeSpec) -> dict:
    units = characteristic_scales(spec)
    return {
        "energy_unit_GHz": units.energy_ghz,
        "length_unit_nm": units.length_nm,
        "field_unit_kV_per_cm": units.field_kv_per_cm,
    }


def _write_sidecar(out: Path, args: argparse.Namespace, result_meta: dict, wall: float) -> None:
    config = {
        k: v
        for k, v in vars(args).items()
        if k not in ("spec1", "spec2", "grid_values", "jmax_values")
        and not k.startswith("_")
        and (isinstance(v, (int, float, str, bool, list, tuple)) or v is None)
    }
    sidecar = {
        "version": rotorspec.__version__,
        "config": config,
        "result": result_meta,
        "wall_time_s": wall,
    }
    path = Path(str(out) + ".meta.json")
    path.write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=str), encoding="utf-8")


def _append_si_columns(csv_path: Path, energy_ghz: float) -> None:
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    out = []
    for i, line in enumerate(lines):
        if i == 0:
            out.append(line + ",energy_GHz")
            continue
        energy = float(line.split(",")[6])
        out.append(line + "," + fmt17(energy * energy_ghz))
    csv_path.write_text("\r\n".join(out) + "\r\n", encoding="utf-8")


def run(args: argparse.Namespace) -> int:
    """Execute a validated configuration; returns the process exit status."""
    t0 = time.perf_counter()
    out = Path(args.out)
    cmd = args.command

    if cmd == "dump-matrix":
        field = FieldConfig(args.eps, args.theta)
        spec2 = args.spec2 or args.spec1
        params = {
            "molecule": args.spec1.name, "molecule2": spec2.name,
            "eps": args.eps, "theta_deg": args.theta, "j_max": args.jmax,
        }
        if args.single:
            basis = build_single_basis(args.spec1.rotor_class, args.jmax)
            mat = single_molecule_assemble(args.spec1, field, basis)
            params["kind"] = "single"
        else:
            basis = build_pair_basis(args.spec1.rotor_class, args.jmax)
            mat = assemble(args.spec1, spec2, args.r, field, basis)
            params.update({"kind": "pair", "r": args.r})
        mat.dump(out, params)
        meta = {"dimension": mat.dim, "nnz_stored": mat.nnz_stored, "real": mat.is_real}
        _write_sidecar(out, args, meta, time.perf_counter() - t0)
        print(f"wrote {out} (dim={mat.dim}, stored entries={mat.nnz_stored})")
        return 0

    if cmd == "convergence":
        table = convergence_study(
            args.spec1, args.spec2, args.r, FieldConfig(args.eps, args.theta),
            args.jmax_values, n_states=args.n_states, tol=args.tol,
            deg_tol=args.deg_tol, seed=args.seed, method=args.method, threads=args.threads,
        )
        table.write_csv(out)
        meta = dict(table.metadata)
        if args.si:
            meta["si_units"] = _si_block(args.spec1)
        _write_sidecar(out, args, meta, time.perf_counter() - t0)
        print(f"wrote {out} ({len(table.rows)} rows)")
        return 0

    plan = _build_plan(args)
    table = run_sweep(plan)
    table.write_csv(out)
    meta = dict(table.metadata)
    if args.si:
        ref_spec = args.spec1 if cmd != "sweep-kappa" else None
        if ref_spec is not None:
            meta["si_units"] = _si_block(ref_spec)
            _append_si_columns(out, characteristic_scales(ref_spec).energy_ghz)
    _write_sidecar(out, args, meta, time.perf_counter() - t0)
    print(f"wrote {out} ({len(table.rows)} rows)")
    return 0


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return run(args)
    except (SolverConvergenceError, ParityClassificationError) as exc:
        print(f"rotorspec: solver error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"rotorspec: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
