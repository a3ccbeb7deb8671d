"""Independent brute-force oracles used to pin expected values in the tests.

Everything in this file deliberately avoids the library's own code paths:
3j symbols come from a different arrangement of Racah's sum evaluated over
exact rationals, rotation-matrix elements from numerical quadrature of
little-d functions, and the small dense pair Hamiltonian from a from-scratch
transcription of the matrix-element formulas.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def _fac(n: int) -> int:
    if n < 0:
        raise ValueError("negative factorial")
    return math.factorial(n)


def racah_wigner3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """3j symbol evaluated with exact rationals via an alternative Racah sum.

    The summation variable and factorial grouping differ from the library's
    direct formula, which makes this an independent check rather than a
    re-run of the same code.
    """
    if m1 + m2 + m3 != 0:
        return 0.0
    if j3 < abs(j1 - j2) or j3 > j1 + j2:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0

    pref = Fraction(
        _fac(j3 - m3) * _fac(j3 + m3),
        _fac(j2 + m2) * _fac(j2 - m2) * _fac(j1 - m2 - m3) * _fac(j1 + m2 + m3),
    ) * Fraction(
        _fac(j1 + j2 - j3) * _fac(j1 - j2 + j3) * _fac(-j1 + j2 + j3),
        _fac(j1 + j2 + j3 + 1),
    )

    u = j2 - j1 + j3
    total = Fraction(0)
    for v in range(0, min(j3 - m3, u) + 1):
        a1 = j2 + j3 - m2 - m3 - v
        a2 = j1 + m2 + m3 + v
        b1 = j3 - m3 - v
        b2 = u - v
        b3 = j3 + m3 - u + v
        if min(a1, a2, b1, b2, b3) < 0:
            continue
        term = Fraction(_fac(a1) * _fac(a2), _fac(v) * _fac(b1) * _fac(b2) * _fac(b3))
        if (2 * j2 - j1 - m1 + v) % 2:
            term = -term
        total += term

    if total == 0:
        return 0.0
    sign = 1 if total > 0 else -1
    return sign * math.sqrt(float(pref * total * total))


def little_d(j: int, mp: int, m: int, beta: float) -> float:
    """Wigner little-d function d^j_{mp,m}(beta) from the factorial sum."""
    pref = math.sqrt(_fac(j + m) * _fac(j - m) * _fac(j + mp) * _fac(j - mp))
    total = 0.0
    for v in range(0, 2 * j + 1):
        a = j - mp - v
        b = j + m - v
        c = v + mp - m
        if a < 0 or b < 0 or c < 0:
            continue
        total += (
            (-1.0) ** v
            / (_fac(a) * _fac(b) * _fac(c) * _fac(v))
            * math.cos(beta / 2.0) ** (2 * j + m - mp - 2 * v)
            * (-math.sin(beta / 2.0)) ** (mp - m + 2 * v)
        )
    return pref * total


def quadrature_dmatrix_element(
    j: int, k: int, m: int, big_j: int, big_m: int, big_k: int, j2: int, k2: int, m2: int
) -> float:
    """<j k m|D^{J*}_{M,K}|j2 k2 m2> by Gauss-Legendre quadrature over beta.

    The alpha and gamma integrals reduce to exact Kronecker deltas on the
    projections; the remaining beta integral of three little-d functions is
    a polynomial in cos(beta), so the quadrature below is exact to rounding.
    """
    if m != m2 + big_m or k != k2 + big_k:
        return 0.0
    nodes, weights = np.polynomial.legendre.leggauss(2 * (j + big_j + j2) + 8)
    acc = 0.0
    for x, w in zip(nodes, weights):
        beta = math.acos(x)
        acc += w * (
            little_d(j, m, k, beta)
            * little_d(big_j, -big_m, -big_k, beta)
            * little_d(j2, m2, k2, beta)
        )
    phase = (-1.0) ** (big_m - big_k)
    return phase * math.sqrt((2 * j + 1) * (2 * j2 + 1)) * acc / 2.0


def linear_pair_states(j_max: int) -> list[tuple[int, int, int, int]]:
    """Lexicographic (j1, m1, j2, m2) enumeration for a linear pair (k = 0)."""
    singles = [(j, m) for j in range(j_max + 1) for m in range(-j, j + 1)]
    return [(ja, ma, jb, mb) for ja, ma in singles for jb, mb in singles]


def _d1_elem_linear(j: int, m: int, p: int, j2: int, m2: int) -> float:
    # <j 0 m|D^{1*}_{p,0}|j2 0 m2>, written out from the 3j-product formula.
    if m != m2 + p:
        return 0.0
    return (
        (-1.0) ** m
        * math.sqrt((2 * j + 1) * (2 * j2 + 1))
        * racah_wigner3j(j, 1, j2, -m, p, m2)
        * racah_wigner3j(j, 1, j2, 0, 0, 0)
    )


def dense_linear_pair_hamiltonian(j_max: int, eps: float, theta_deg: float, r: float) -> np.ndarray:
    """From-scratch dense pair Hamiltonian for two unit-dipole linear rotors.

    Dimensionless units (energy in B, r in r_B, eps = d E / B).  Every
    element is re-derived here from the 3j oracle; nothing is shared with
    the library's assembly path.
    """
    states = linear_pair_states(j_max)
    dim = len(states)
    th = math.radians(theta_deg)
    # Spherical field components: E_0 = eps cos(theta), E_{+-1} = -+ eps sin(theta)/sqrt(2).
    e_sph = {
        -1: eps * math.sin(th) / math.sqrt(2.0),
        0: eps * math.cos(th),
        1: -eps * math.sin(th) / math.sqrt(2.0),
    }
    h = np.zeros((dim, dim), dtype=complex)
    for a, (ja, ma, jb, mb) in enumerate(states):
        for b, (jc, mc, jd, md) in enumerate(states):
            val = 0.0
            # Rotational term, diagonal for linear rotors.
            if (ja, ma, jb, mb) == (jc, mc, jd, md):
                val += ja * (ja + 1) + jb * (jb + 1)
            # Field term, one molecule at a time.
            if (jb, mb) == (jd, md):
                for p in (-1, 0, 1):
                    val += -((-1.0) ** p) * e_sph[-p] * _d1_elem_linear(ja, ma, p, jc, mc)
            if (ja, ma) == (jc, mc):
                for p in (-1, 0, 1):
                    val += -((-1.0) ** p) * e_sph[-p] * _d1_elem_linear(jb, mb, p, jd, md)
            # Dipole-dipole term: -(1/r^3)(2 d_{1,0} d_{2,0} + d_{1,-1} d_{2,+1} + d_{1,+1} d_{2,-1}).
            for p1, p2, w in ((0, 0, 2.0), (-1, 1, 1.0), (1, -1, 1.0)):
                val += (
                    -(w / r**3)
                    * _d1_elem_linear(ja, ma, p1, jc, mc)
                    * _d1_elem_linear(jb, mb, p2, jd, md)
                )
            h[a, b] = val
    return h


def characteristic_length_si(d_debye: float, b_ghz: float) -> float:
    """r_B = (d^2 / (4 pi eps0 h B))^(1/3) in metres, straight SI arithmetic."""
    from scipy import constants

    d_cm = d_debye * 1e-21 / constants.c  # Debye -> C m
    energy = constants.h * b_ghz * 1e9
    return (d_cm**2 / (4.0 * math.pi * constants.epsilon_0 * energy)) ** (1.0 / 3.0)


def stark_ground_second_order(eps: float) -> float:
    """Weak-field ground energy of a linear rotor: -eps^2/6 in units of B."""
    return -(eps**2) / 6.0


def stark_ground_dipole_slope() -> float:
    """d<d_Z>/d(eps) at eps -> 0 for the linear-rotor ground state."""
    return 1.0 / 3.0
