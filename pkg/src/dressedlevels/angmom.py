"""Exact half-integer bookkeeping and the bits of angular-momentum algebra we need.

Phase convention: Condon-Shortley throughout. Clebsch-Gordan coefficients are
real, and ``<j1 j1; j2 (J - j1) | J J>`` is positive. Only squared moduli ever
reach observable quantities (signal weights, admixtures), so results that are
reported downstream do not depend on this choice.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache, total_ordering
from math import factorial, sqrt
from numbers import Rational
from typing import Union

import numpy as np

from .errors import PreconditionError
from .labeled import LabeledMatrix

__all__ = [
    "HalfInt",
    "half",
    "projections",
    "clebsch_gordan",
    "ladder_element",
    "idotj_matrix",
    "lande_energy",
]


@total_ordering
class HalfInt:
    """An integer or half-integer stored as twice its value.

    Construct from the doubled integer with ``HalfInt(3)`` (= 3/2), or from a
    value with :func:`half` / :meth:`HalfInt.of`, which accept ints,
    Fractions, exact floats and strings such as ``"3/2"``.
    """

    __slots__ = ("twice",)

    def __init__(self, twice: int):
        if isinstance(twice, bool) or not isinstance(twice, (int, np.integer)):
            raise TypeError(f"HalfInt expects an integer (doubled value), got {twice!r}")
        object.__setattr__(self, "twice", int(twice))

    def __setattr__(self, name, value):
        raise AttributeError("HalfInt is immutable")

    @classmethod
    def of(cls, value: Union["HalfInt", int, float, str, Rational]) -> "HalfInt":
        if isinstance(value, HalfInt):
            return value
        if isinstance(value, str):
            value = Fraction(value.strip())
        doubled = Fraction(value) * 2
        if doubled.denominator != 1:
            raise ValueError(f"{value!r} is not an integer or half-integer")
        return cls(int(doubled))

    @property
    def value(self) -> Fraction:
        return Fraction(self.twice, 2)

    @property
    def is_integer(self) -> bool:
        return self.twice % 2 == 0

    def __float__(self):
        return self.twice / 2

    def __add__(self, other):
        other = HalfInt.of(other)
        return HalfInt(self.twice + other.twice)

    __radd__ = __add__

    def __sub__(self, other):
        return HalfInt(self.twice - HalfInt.of(other).twice)

    def __rsub__(self, other):
        return HalfInt(HalfInt.of(other).twice - self.twice)

    def __neg__(self):
        return HalfInt(-self.twice)

    def __abs__(self):
        return HalfInt(abs(self.twice))

    def __eq__(self, other):
        if isinstance(other, HalfInt):
            return self.twice == other.twice
        try:
            return self.twice == HalfInt.of(other).twice
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other):
        return self.twice < HalfInt.of(other).twice

    def __hash__(self):
        return hash(("HalfInt", self.twice))

    def __repr__(self):
        return f"HalfInt({self})"

    def __str__(self):
        return str(self.twice // 2) if self.is_integer else f"{self.twice}/2"

    def __reduce__(self):
        return (HalfInt, (self.twice,))


def half(value) -> HalfInt:
    """Shorthand for :meth:`HalfInt.of`."""
    return HalfInt.of(value)


def _check_magnitude(j: HalfInt, name="j"):
    if j.twice < 0:
        raise PreconditionError(f"{name} must be non-negative, got {j}")


def _check_projection(j: HalfInt, m: HalfInt, name="m"):
    _check_magnitude(j)
    if (j.twice - m.twice) % 2:
        raise PreconditionError(f"{name}={m} has the wrong parity for j={j}")
    if abs(m.twice) > j.twice:
        raise PreconditionError(f"|{name}|={abs(m)} exceeds j={j}")


def projections(j) -> list[HalfInt]:
    """All projections of ``j`` in descending order."""
    j = half(j)
    _check_magnitude(j)
    return [HalfInt(t) for t in range(j.twice, -j.twice - 1, -2)]


@lru_cache(maxsize=None)
def _cg_twice(j1, m1, j2, m2, J, M) -> float:
    if m1 + m2 != M:
        return 0.0
    if J < abs(j1 - j2) or J > j1 + j2 or abs(M) > J:
        return 0.0
    if (j1 + j2 + J) % 2:
        # J must differ from j1 + j2 by an integer
        return 0.0

    def f(twice):
        return factorial(twice // 2)

    pref = Fraction(
        (J + 1) * f(J + j1 - j2) * f(J - j1 + j2) * f(j1 + j2 - J),
        f(j1 + j2 + J + 2),
    )
    pref *= f(J + M) * f(J - M) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2)

    # summation index k in doubled units, step 2
    total = Fraction(0)
    k = 0
    while True:
        args = (j1 + j2 - J - k, j1 - m1 - k, j2 + m2 - k,
                J - j2 + m1 + k, J - j1 - m2 + k)
        if any(a < 0 for a in args[:3]):
            break
        if min(args[3:]) >= 0:
            denom = f(k)
            for a in args:
                denom *= f(a)
            total += Fraction((-1) ** (k // 2), denom)
        k += 2
    if total == 0:
        return 0.0
    return float(total) * sqrt(pref)


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient ``<j1 m1; j2 m2 | J M>``.

    Racah's closed form, evaluated with exact rational arithmetic and converted
    to float at the end. Returns 0 when ``M != m1 + m2`` or when the triangle
    rule fails. Arguments may be :class:`HalfInt` or anything :func:`half`
    accepts.

    Raises
    ------
    PreconditionError
        If a projection does not belong to its magnitude (parity or range).
    """
    j1, m1, j2, m2, J, M = (half(x) for x in (j1, m1, j2, m2, J, M))
    _check_projection(j1, m1, "m1")
    _check_projection(j2, m2, "m2")
    _check_magnitude(J, "J")
    if (J.twice - M.twice) % 2:
        raise PreconditionError(f"M={M} has the wrong parity for J={J}")
    return _cg_twice(j1.twice, m1.twice, j2.twice, m2.twice, J.twice, M.twice)


def ladder_element(j, m, direction: str) -> float:
    """Matrix element ``<j, m±1 | J± | j, m>``; zero past the ends of the ladder."""
    j, m = half(j), half(m)
    _check_projection(j, m)
    jj, mm = j.twice / 2, m.twice / 2
    if direction == "raise":
        val = (jj - mm) * (jj + mm + 1)
    elif direction == "lower":
        val = (jj + mm) * (jj - mm + 1)
    else:
        raise ValueError(f"direction must be 'raise' or 'lower', got {direction!r}")
    return sqrt(val) if val > 0 else 0.0


def product_basis(J, I) -> list[tuple[HalfInt, HalfInt]]:
    """Uncoupled ``(m_j, m_I)`` pairs, m_j descending then m_I descending."""
    return [(mj, mi) for mj in projections(J) for mi in projections(I)]


def idotj_matrix(J, I) -> LabeledMatrix:
    """Dimensionless ``I·J`` in the uncoupled basis ``|m_j, m_I>``.

    ``I·J = Iz Jz + (I+ J- + I- J+) / 2``. Eigenvalues are the Landé values
    ``[F(F+1) - J(J+1) - I(I+1)] / 2``.
    """
    J, I = half(J), half(I)
    _check_magnitude(J, "J")
    _check_magnitude(I, "I")
    labels = product_basis(J, I)
    pos = {lab: k for k, lab in enumerate(labels)}
    mat = np.zeros((len(labels), len(labels)))
    for a, (mj, mi) in enumerate(labels):
        mat[a, a] = float(mj) * float(mi)
        # J+ I- flip-flop; the mirror term fills the transpose
        target = (mj + HalfInt(2), mi - HalfInt(2))
        b = pos.get(target)
        if b is not None:
            val = 0.5 * ladder_element(J, mj, "raise") * ladder_element(I, mi, "lower")
            mat[a, b] = mat[b, a] = val
    return LabeledMatrix(labels, mat)


def lande_energy(F, J, I) -> float:
    """``[F(F+1) - J(J+1) - I(I+1)] / 2``; multiply by A for the level energy."""
    F, J, I = (float(half(x)) for x in (F, J, I))
    return 0.5 * (F * (F + 1) - J * (J + 1) - I * (I + 1))
