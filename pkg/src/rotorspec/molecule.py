"""Molecule parameter records, rotor classification and characteristic scales.

Rotational constants are stored in GHz with the convention A >= B >= C.
Dipole components are stored both in the inertial (a, b, c) order they are
tabulated in and in the molecule-fixed (x, y, z) order used by the matrix
elements, with (x, y, z) = (a, b, c) for oblate symmetric tops and
(x, y, z) = (b, c, a) for every other rotor.

All two-molecule computations downstream run in dimensionless units: energy
in the middle rotational constant B, length in r_B = (d^2/B)^(1/3) and the
field as eps = d E / B.  This module owns the conversions to and from SI.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

from scipy import constants as _const

from rotorspec.angular import SphericalVector, cartesian_to_spherical

__all__ = [
    "RotorClass",
    "MoleculeSpec",
    "UnitSystem",
    "classify",
    "axis_map",
    "kappa",
    "characteristic_scales",
    "make_molecule",
    "builtin_molecule",
    "load_molecule_file",
    "BUILTIN_NAMES",
]

# 1 Debye in C m (1e-18 statC cm).
DEBYE_SI = 1e-21 / _const.c

_REL_TOL = 1e-9


class RotorClass(enum.Enum):
    LINEAR = "linear"
    SPHERICAL = "spherical"
    PROLATE = "prolate"
    OBLATE = "oblate"
    ASYMMETRIC = "asymmetric"


def _close(x: float, y: float) -> bool:
    return abs(x - y) <= _REL_TOL * max(abs(x), abs(y))


def classify(a: float | None, b: float, c: float, linear: bool = False) -> RotorClass:
    """Rotor class from the ordered rotational constants A >= B >= C.

    Linear rotors carry no A constant (rotation about the molecular axis is
    absent), so they are requested either with the explicit flag or by
    passing ``a=None`` together with B = C.  Equality of constants is tested
    with relative tolerance 1e-9; anything not exactly symmetric within that
    tolerance is treated as fully asymmetric.
    """
    if b <= 0 or c <= 0:
        raise ValueError("rotational constants must be positive")
    if b < c:
        raise ValueError(f"constants must be ordered A >= B >= C, got B={b} < C={c}")
    if linear or a is None:
        if not _close(b, c):
            raise ValueError("a linear rotor requires B = C")
        return RotorClass.LINEAR
    if a < b:
        raise ValueError(f"constants must be ordered A >= B >= C, got A={a} < B={b}")
    if _close(a, b) and _close(b, c):
        return RotorClass.SPHERICAL
    if _close(a, b):
        return RotorClass.OBLATE
    if _close(b, c):
        return RotorClass.PROLATE
    return RotorClass.ASYMMETRIC


def axis_map(rotor_class: RotorClass) -> tuple[str, str, str]:
    """Inertial axes assigned to the molecule-fixed (x, y, z) axes.

    Oblate symmetric tops use (x, y, z) = (a, b, c); every other class uses
    (x, y, z) = (b, c, a), so the quantisation axis z is the unique axis.
    """
    if rotor_class is RotorClass.OBLATE:
        return ("a", "b", "c")
    return ("b", "c", "a")


@dataclass(frozen=True)
class MoleculeSpec:
    """Immutable rigid-rotor parameter record.

    Attributes
    ----------
    name : str
    a, b, c : rotational constants in GHz; ``a`` is None for linear rotors.
    d_abc : dipole components (d_a, d_b, d_c) in Debye.
    rotor_class : RotorClass
    d_xyz : dipole reordered to the molecule-fixed (x, y, z) axes, Debye.
    d_mag : |d| in Debye.
    d_sph : spherical components of the unit dipole d_xyz / d_mag.
    """

    name: str
    a: float | None
    b: float
    c: float
    d_abc: tuple[float, float, float]
    rotor_class: RotorClass
    d_xyz: tuple[float, float, float]
    d_mag: float
    d_sph: SphericalVector

    @property
    def is_linear(self) -> bool:
        return self.rotor_class is RotorClass.LINEAR

    @property
    def b_mid(self) -> float:
        """Energy scale in GHz: the middle (b-axis) rotational constant."""
        return self.b

    def reduced_constants(self) -> tuple[float | None, float, float]:
        """(A, B, C) / B_mid; A entry is None for linear rotors."""
        if self.a is None:
            return (None, 1.0, self.c / self.b)
        return (self.a / self.b, 1.0, self.c / self.b)


@dataclass(frozen=True)
class UnitSystem:
    """Dimensionful values of the natural units of a molecule.

    energy_ghz is the middle constant B, length_m is r_B = (d^2/B)^(1/3)
    evaluated in SI with the vacuum-permittivity convention eps0 = 1/4pi
    (the dipole-dipole energy is d^2/r^3), and field_v_per_m is B/d, the
    field at which eps = d E / B equals one.
    """

    energy_ghz: float
    length_m: float
    field_v_per_m: float

    @property
    def length_nm(self) -> float:
        return self.length_m * 1e9

    @property
    def field_kv_per_cm(self) -> float:
        return self.field_v_per_m * 1e-5


def make_molecule(
    name: str,
    a: float | None,
    b: float,
    c: float,
    d_a: float,
    d_b: float,
    d_c: float,
    linear: bool = False,
) -> MoleculeSpec:
    """Build a validated MoleculeSpec from tabulated constants.

    Constants in GHz (A >= B >= C, ``a=None`` or ``linear=True`` for linear
    rotors), dipole components in Debye along the inertial axes.
    """
    rotor_class = classify(a, b, c, linear=linear)
    d_abc = (float(d_a), float(d_b), float(d_c))
    d_mag = math.sqrt(d_a**2 + d_b**2 + d_c**2)
    if d_mag <= 0.0:
        raise ValueError(f"{name}: molecule must carry a permanent dipole")
    if rotor_class is RotorClass.LINEAR and not (d_a == 0.0 and d_b == 0.0):
        # Tabulations sometimes put the linear dipole on the a axis; either
        # way it lies along the molecular axis, which maps to z.
        if d_b != 0.0 or d_c != 0.0:
            raise ValueError(f"{name}: a linear rotor dipole must lie on a single axis")
        d_abc = (0.0, 0.0, abs(d_a))
    perm = axis_map(rotor_class)
    by_name = dict(zip(("a", "b", "c"), d_abc))
    d_xyz = tuple(by_name[axis] for axis in perm)
    if rotor_class is RotorClass.LINEAR:
        d_xyz = (0.0, 0.0, d_mag)
    d_sph = cartesian_to_spherical(d_xyz)
    return MoleculeSpec(
        name=name,
        a=None if rotor_class is RotorClass.LINEAR else float(a),  # type: ignore[arg-type]
        b=float(b),
        c=float(c),
        d_abc=d_abc,
        rotor_class=rotor_class,
        d_xyz=d_xyz,  # type: ignore[arg-type]
        d_mag=d_mag,
        d_sph=d_sph,
    )


def kappa(spec: MoleculeSpec) -> float:
    """Ray's asymmetry parameter (2B - A - C)/(A - C), -1 prolate to +1 oblate."""
    if spec.a is None:
        raise ValueError("kappa is undefined for linear rotors")
    if _close(spec.a, spec.c):
        raise ValueError("kappa is undefined for spherical tops (A = C)")
    return (2.0 * spec.b - spec.a - spec.c) / (spec.a - spec.c)


def molecule_for_kappa(kappa_value: float, a: float, c: float, d_abc: tuple[float, float, float]) -> MoleculeSpec:
    """Asymmetric rotor with A, C fixed and B = (kappa (A - C) + A + C)/2.

    kappa = -1 reproduces the prolate limit B = C and kappa = +1 the oblate
    limit B = A; values strictly inside (-1, 1) give an asymmetric top.
    """
    if not -1.0 <= kappa_value <= 1.0:
        raise ValueError(f"kappa must lie in [-1, 1], got {kappa_value}")
    if a <= c:
        raise ValueError("kappa parameterisation requires A > C")
    b = 0.5 * (kappa_value * (a - c) + a + c)
    return make_molecule(f"kappa={kappa_value:+.6f}", a, b, c, *d_abc)


def characteristic_scales(spec: MoleculeSpec) -> UnitSystem:
    """Natural units of one molecule: B (GHz), r_B (m) and B/d (V/m)."""
    d_cm = spec.d_mag * DEBYE_SI
    energy_j = _const.h * spec.b_mid * 1e9
    length = (d_cm**2 / (4.0 * math.pi * _const.epsilon_0 * energy_j)) ** (1.0 / 3.0)
    return UnitSystem(
        energy_ghz=spec.b_mid,
        length_m=length,
        field_v_per_m=energy_j / d_cm,
    )


def _builtin_registry(b_ghz: float, d_debye: float) -> dict[str, MoleculeSpec]:
    return {
        "linear": make_molecule("linear", None, b_ghz, b_ghz, 0.0, 0.0, d_debye, linear=True),
        "chf3": make_molecule("CHF3", 10.348, 10.348, 5.6734, 0.0, 0.0, 1.645),
        "propanediol-r": make_molecule("propanediol-R", 8.57205, 3.640, 2.790, 1.2, 1.9, 0.36),
        "propanediol-s": make_molecule("propanediol-S", 8.57205, 3.640, 2.790, 1.2, 1.9, -0.36),
    }


BUILTIN_NAMES = ("linear", "CHF3", "propanediol-R", "propanediol-S")


def builtin_molecule(name: str, b_ghz: float = 1.0, d_debye: float = 1.0) -> MoleculeSpec:
    """Look up a built-in molecule by name (case-insensitive).

    The generic ``linear`` rotor is parameterised by ``b_ghz`` and
    ``d_debye``; both default to one, which is all that matters for
    dimensionless output since linear results scale out B and d entirely.
    """
    registry = _builtin_registry(b_ghz, d_debye)
    key = name.strip().lower()
    if key not in registry:
        known = ", ".join(BUILTIN_NAMES)
        raise KeyError(f"unknown molecule {name!r}; built-ins are: {known}")
    return registry[key]


_FILE_KEYS = {"name", "class", "A_GHz", "B_GHz", "C_GHz", "da_D", "db_D", "dc_D"}
_CLASS_NAMES = {cls.value: cls for cls in RotorClass}


def load_molecule_file(path: str | Path) -> MoleculeSpec:
    """Parse a plain-text molecule definition (key = value lines, UTF-8).

    Recognised keys: name, class (optional), A_GHz (optional for linear),
    B_GHz, C_GHz, da_D, db_D, dc_D.  '#' starts a comment; unknown keys are
    errors.  When ``class`` is present it must agree with the constants.
    """
    path = Path(path)
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FILE_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        if key in entries:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = value

    missing = {"B_GHz", "C_GHz", "da_D", "db_D", "dc_D"} - set(entries)
    if missing:
        raise ValueError(f"{path}: missing required keys: {', '.join(sorted(missing))}")

    declared: RotorClass | None = None
    if "class" in entries:
        cls_name = entries["class"].strip().lower()
        if cls_name not in _CLASS_NAMES:
            raise ValueError(f"{path}: unknown rotor class {entries['class']!r}")
        declared = _CLASS_NAMES[cls_name]

    def num(key: str) -> float:
        try:
            return float(entries[key])
        except ValueError as exc:
            raise ValueError(f"{path}: key {key} is not a number: {entries[key]!r}") from exc

    a = num("A_GHz") if "A_GHz" in entries else None
    linear = declared is RotorClass.LINEAR or a is None
    if linear and a is not None:
        raise ValueError(f"{path}: a linear molecule must omit A_GHz")
    spec = make_molecule(
        entries.get("name", path.stem),
        a,
        num("B_GHz"),
        num("C_GHz"),
        num("da_D"),
        num("db_D"),
        num("dc_D"),
        linear=linear,
    )
    if declared is not None and spec.rotor_class is not declared:
        raise ValueError(
            f"{path}: declared class {declared.value!r} disagrees with constants "
            f"({spec.rotor_class.value})"
        )
    return spec
