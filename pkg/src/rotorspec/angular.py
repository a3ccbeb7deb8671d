"""Exact angular-momentum algebra for integer quantum numbers.

Wigner 3j symbols and Clebsch-Gordan coefficients are evaluated with
arbitrary-precision integer arithmetic (Racah's finite sum over exact
rationals), so every coefficient is correct to a unit or two in the last
place even at large j.  On top of these sit the matrix elements of the
conjugated rotation matrices D^{J*}_{M,K} in the symmetric-top basis and
the rank-1 spherical/Cartesian conversions.

Phases follow the Condon-Shortley convention throughout, which is the
convention implied by writing a symmetric-top matrix element as

    <j k m| D^{J*}_{M,K} |j' k' m'>
        = (-1)^(m+k) sqrt((2j+1)(2j'+1))
          * 3j(j, J, j'; -m, M, m') * 3j(j, J, j'; -k, K, k').

Only integer angular momenta are supported; rigid rotors never need
half-integer values.

All functions here are pure and cache-backed, hence thread-safe.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numpy as np

__all__ = [
    "SphericalVector",
    "wigner3j",
    "clebsch_gordan",
    "dmatrix_element",
    "cartesian_to_spherical",
    "spherical_to_cartesian",
    "rank2_product_coefficient",
]

_SQRT2 = math.sqrt(2.0)


class SphericalVector(NamedTuple):
    """Rank-1 spherical components (v_-1, v_0, v_+1) of a vector.

    For a real Cartesian source vector, ``zero`` is real and
    ``plus == -conj(minus)``.
    """

    minus: complex
    zero: complex
    plus: complex

    def __getitem__(self, p):  # type: ignore[override]
        if p in (-1, 0, 1):
            return (self.minus, self.zero, self.plus)[p + 1]
        raise IndexError(f"spherical index must be -1, 0 or +1, got {p}")


def _check_jm(j: int, m: int, name: str) -> None:
    if j < 0:
        raise ValueError(f"{name}: angular momentum must be non-negative, got j={j}")
    if abs(m) > j:
        raise ValueError(f"{name}: projection |m|={abs(m)} exceeds j={j}")


@lru_cache(maxsize=None)
def _wigner3j_exact(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> tuple[int, Fraction]:
    """Exact 3j symbol as (sign, value_squared) with value = sign*sqrt(value_squared).

    Racah's single-sum formula evaluated over exact rationals.  Returning
    the squared magnitude keeps the result a Fraction; the square root is
    taken once, in floating point, by the caller.
    """
    # Selection rules: zero is a legal value, not an error.
    if m1 + m2 + m3 != 0:
        return 0, Fraction(0)
    if j3 < abs(j1 - j2) or j3 > j1 + j2:
        return 0, Fraction(0)

    f = math.factorial
    # Triangle coefficient squared and the m-dependent factorial product.
    pref = Fraction(
        f(j1 + j2 - j3) * f(j1 - j2 + j3) * f(-j1 + j2 + j3), f(j1 + j2 + j3 + 1)
    ) * Fraction(
        f(j1 + m1) * f(j1 - m1) * f(j2 + m2) * f(j2 - m2) * f(j3 + m3) * f(j3 - m3)
    )

    t_min = max(0, j2 - j3 - m1, j1 - j3 + m2)
    t_max = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    ssum = Fraction(0)
    for t in range(t_min, t_max + 1):
        den = (
            f(t)
            * f(j1 + j2 - j3 - t)
            * f(j1 - m1 - t)
            * f(j2 + m2 - t)
            * f(j3 - j2 + m1 + t)
            * f(j3 - j1 - m2 + t)
        )
        term = Fraction(1, den)
        ssum += -term if t % 2 else term

    if ssum == 0:
        return 0, Fraction(0)
    phase = -1 if (j1 - j2 - m3) % 2 else 1
    sign = phase * (1 if ssum > 0 else -1)
    return sign, pref * ssum * ssum


def wigner3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3j symbol (j1 j2 j3; m1 m2 m3) for integer arguments.

    Returns exactly 0.0 when m1+m2+m3 != 0 or the triangle inequality
    |j1-j2| <= j3 <= j1+j2 fails.  Raises ValueError for negative j or
    |m| > j, which are malformed arguments rather than legal zeros.
    """
    for j, m, name in ((j1, m1, "j1/m1"), (j2, m2, "j2/m2"), (j3, m3, "j3/m3")):
        _check_jm(j, m, name)
    sign, sq = _wigner3j_exact(j1, j2, j3, m1, m2, m3)
    if sign == 0:
        return 0.0
    return sign * math.sqrt(float(sq))


def clebsch_gordan(j1: int, m1: int, j2: int, m2: int, j3: int, m3: int) -> float:
    """Clebsch-Gordan coefficient <j1 m1, j2 m2 | j3 m3>.

    Derived from the 3j symbol through the standard phase relation
    <j1 m1, j2 m2|j3 m3> = (-1)^(j1-j2+m3) sqrt(2 j3 + 1)
    * 3j(j1, j2, j3; m1, m2, -m3).  Zero when m3 != m1 + m2.
    """
    for j, m, name in ((j1, m1, "j1/m1"), (j2, m2, "j2/m2"), (j3, m3, "j3/m3")):
        _check_jm(j, m, name)
    if m3 != m1 + m2:
        return 0.0
    sign, sq = _wigner3j_exact(j1, j2, j3, m1, m2, -m3)
    if sign == 0:
        return 0.0
    phase = -1 if (j1 - j2 + m3) % 2 else 1
    return phase * sign * math.sqrt((2 * j3 + 1) * float(sq))


@lru_cache(maxsize=None)
def dmatrix_element(
    j: int,
    k: int,
    m: int,
    big_j: int,
    big_m: int,
    big_k: int,
    j2: int,
    k2: int,
    m2: int,
) -> float:
    """Matrix element <j k m| D^{J*}_{M,K} |j2 k2 m2> in the symmetric-top basis.

    Parameters
    ----------
    j, k, m
        Bra quantum numbers.
    big_j, big_m, big_k
        Rank J of the rotation matrix, laboratory index M and
        molecule-frame index K.
    j2, k2, m2
        Ket quantum numbers.

    The element vanishes identically unless m == m2 + M and k == k2 + K;
    the zero is exact, not merely small.
    """
    _check_jm(j, k, "bra j/k")
    _check_jm(j, m, "bra j/m")
    _check_jm(j2, k2, "ket j/k")
    _check_jm(j2, m2, "ket j/m")
    _check_jm(big_j, big_m, "J/M")
    _check_jm(big_j, big_k, "J/K")

    if m != m2 + big_m or k != k2 + big_k:
        return 0.0
    s1, sq1 = _wigner3j_exact(j, big_j, j2, -m, big_m, m2)
    if s1 == 0:
        return 0.0
    s2, sq2 = _wigner3j_exact(j, big_j, j2, -k, big_k, k2)
    if s2 == 0:
        return 0.0
    phase = -1 if (m + k) % 2 else 1
    value = math.sqrt((2 * j + 1) * (2 * j2 + 1) * float(sq1 * sq2))
    return phase * s1 * s2 * value


def cartesian_to_spherical(v) -> SphericalVector:
    """Spherical components (v_-1, v_0, v_+1) of a Cartesian 3-vector.

    Uses v_0 = v_z and v_{+-1} = -+(v_x +- i v_y)/sqrt(2).
    """
    vx, vy, vz = (complex(c) for c in v)
    return SphericalVector(
        minus=(vx - 1j * vy) / _SQRT2,
        zero=vz,
        plus=-(vx + 1j * vy) / _SQRT2,
    )


def spherical_to_cartesian(v) -> np.ndarray:
    """Cartesian components of a rank-1 spherical vector (inverse map)."""
    if isinstance(v, SphericalVector):
        vm, v0, vp = v
    else:
        vm, v0, vp = (complex(c) for c in v)
    return np.array(
        [(vm - vp) / _SQRT2, 1j * (vm + vp) / _SQRT2, v0],
        dtype=complex,
    )


def rank2_product_coefficient(p: int, p_prime: int) -> float:
    """Coupling coefficient <1 p', 1 p-p' | 2 p> of the rank-2 dipole product.

    Returns 0.0 outside the legal range |p'| <= 1, |p - p'| <= 1, |p| <= 2.
    """
    if abs(p) > 2 or abs(p_prime) > 1 or abs(p - p_prime) > 1:
        return 0.0
    return clebsch_gordan(1, p_prime, 1, p - p_prime, 2, p)
