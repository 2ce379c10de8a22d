"""Wigner 3j/6j symbols and Clebsch-Gordan coefficients.

All angular momenta are handled internally as *twice* their value so that
half-integers stay exact.  The Racah sums are evaluated in exact rational
arithmetic; a symbol is returned as ``sign * sqrt(rational)``, which allows
both an exact squared value and a float.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial, sqrt
from numbers import Real

__all__ = [
    "AngularMomentum",
    "twice",
    "wigner3j",
    "wigner6j",
    "clebsch_gordan",
    "wigner3j_squared",
    "wigner6j_squared",
    "clebsch_gordan_squared",
]


def twice(x) -> int:
    """Return ``2*x`` as an int, rejecting values that are not half-integers."""
    if isinstance(x, AngularMomentum):
        return x.twice_j
    if isinstance(x, bool):
        raise TypeError("booleans are not angular momenta")
    if isinstance(x, int):
        return 2 * x
    if isinstance(x, str):
        x = Fraction(x)
    if isinstance(x, Fraction):
        t = 2 * x
        if t.denominator != 1:
            raise ValueError(f"{x} is not a half-integer")
        return int(t)
    if isinstance(x, Real):
        t = 2.0 * float(x)
        r = round(t)
        if abs(t - r) > 1e-9:
            raise ValueError(f"{x} is not a half-integer")
        return int(r)
    raise TypeError(f"cannot interpret {x!r} as an angular momentum")


@dataclass(frozen=True, order=True)
class AngularMomentum:
    """A non-negative angular momentum quantum number stored as ``2j``."""

    twice_j: int

    def __post_init__(self):
        if not isinstance(self.twice_j, int) or self.twice_j < 0:
            raise ValueError(f"twice_j must be a non-negative int, got {self.twice_j!r}")

    @classmethod
    def of(cls, j) -> "AngularMomentum":
        return cls(twice(j))

    @property
    def j(self) -> Fraction:
        return Fraction(self.twice_j, 2)

    @property
    def multiplicity(self) -> int:
        return self.twice_j + 1

    def projections(self) -> tuple[int, ...]:
        """All allowed ``2m`` values, ascending."""
        return tuple(range(-self.twice_j, self.twice_j + 1, 2))

    def __str__(self):
        return str(self.j)


def _triangle(ta: int, tb: int, tc: int) -> bool:
    return (ta + tb + tc) % 2 == 0 and abs(ta - tb) <= tc <= ta + tb


def _delta_sq(ta: int, tb: int, tc: int) -> Fraction:
    # triangle coefficient; arguments are twice-values with (ta+tb+tc) even
    return Fraction(
        factorial((ta + tb - tc) // 2) * factorial((ta - tb + tc) // 2) * factorial((-ta + tb + tc) // 2),
        factorial((ta + tb + tc) // 2 + 1),
    )


def _valid_projection(tj: int, tm: int) -> bool:
    return abs(tm) <= tj and (tj - tm) % 2 == 0


@lru_cache(maxsize=None)
def _racah_3j(tj1, tj2, tj3, tm1, tm2, tm3) -> tuple[Fraction, Fraction]:
    """3j symbol as (rational sum with phase, rational under the root)."""
    zero = (Fraction(0), Fraction(0))
    if tj1 < 0 or tj2 < 0 or tj3 < 0:
        return zero
    if not (_valid_projection(tj1, tm1) and _valid_projection(tj2, tm2) and _valid_projection(tj3, tm3)):
        return zero
    if tm1 + tm2 + tm3 != 0 or not _triangle(tj1, tj2, tj3):
        return zero

    j1mj2mm3 = (tj1 - tj2 - tm3) // 2
    pref = _delta_sq(tj1, tj2, tj3)
    for tj, tm in ((tj1, tm1), (tj2, tm2), (tj3, tm3)):
        pref *= factorial((tj + tm) // 2) * factorial((tj - tm) // 2)

    a = (tj3 - tj2 + tm1) // 2
    b = (tj3 - tj1 - tm2) // 2
    c = (tj1 + tj2 - tj3) // 2
    d = (tj1 - tm1) // 2
    e = (tj2 + tm2) // 2
    kmin = max(0, -a, -b)
    kmax = min(c, d, e)
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = factorial(k) * factorial(a + k) * factorial(b + k) * factorial(c - k) * factorial(d - k) * factorial(e - k)
        total += Fraction((-1) ** k, den)
    if j1mj2mm3 % 2:
        total = -total
    return total, pref


@lru_cache(maxsize=None)
def _racah_6j(tj1, tj2, tj3, tj4, tj5, tj6) -> tuple[Fraction, Fraction]:
    zero = (Fraction(0), Fraction(0))
    if min(tj1, tj2, tj3, tj4, tj5, tj6) < 0:
        return zero
    triads = ((tj1, tj2, tj3), (tj1, tj5, tj6), (tj4, tj2, tj6), (tj4, tj5, tj3))
    if not all(_triangle(*t) for t in triads):
        return zero
    pref = Fraction(1)
    for t in triads:
        pref *= _delta_sq(*t)
    a = [sum(t) // 2 for t in triads]
    b = [
        (tj1 + tj2 + tj4 + tj5) // 2,
        (tj2 + tj3 + tj5 + tj6) // 2,
        (tj3 + tj1 + tj6 + tj4) // 2,
    ]
    total = Fraction(0)
    for t in range(max(a), min(b) + 1):
        den = 1
        for ai in a:
            den *= factorial(t - ai)
        for bi in b:
            den *= factorial(bi - t)
        total += Fraction((-1) ** t * factorial(t + 1), den)
    return total, pref


def _as_float(pair: tuple[Fraction, Fraction]) -> float:
    s, p = pair
    if s == 0:
        return 0.0
    return float(s) * sqrt(p)


def _as_square(pair: tuple[Fraction, Fraction]) -> Fraction:
    s, p = pair
    return s * s * p


def _3j_args(j1, j2, j3, m1, m2, m3):
    return tuple(twice(x) for x in (j1, j2, j3, m1, m2, m3))


def wigner3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3j symbol ``(j1 j2 j3; m1 m2 m3)``.

    Arguments may be ints, Fractions, floats or strings such as ``"3/2"``.
    Returns exactly 0 whenever a selection rule is violated.
    """
    return _as_float(_racah_3j(*_3j_args(j1, j2, j3, m1, m2, m3)))


def wigner3j_squared(j1, j2, j3, m1, m2, m3) -> Fraction:
    return _as_square(_racah_3j(*_3j_args(j1, j2, j3, m1, m2, m3)))


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol ``{j1 j2 j3; j4 j5 j6}``; 0 if any triad is not triangular."""
    return _as_float(_racah_6j(*(twice(x) for x in (j1, j2, j3, j4, j5, j6))))


def wigner6j_squared(j1, j2, j3, j4, j5, j6) -> Fraction:
    return _as_square(_racah_6j(*(twice(x) for x in (j1, j2, j3, j4, j5, j6))))


def _cg_pair(tj1, tm1, tj2, tm2, tJ, tM) -> tuple[Fraction, Fraction]:
    s, p = _racah_3j(tj1, tj2, tJ, tm1, tm2, -tM)
    if s == 0:
        return s, p
    # <j1 m1 j2 m2|J M> = (-1)^(j1-j2+M) sqrt(2J+1) (j1 j2 J; m1 m2 -M)
    if ((tj1 - tj2 + tM) // 2) % 2:
        s = -s
    return s, p * (tJ + 1)


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient ``<j1 m1 j2 m2 | J M>`` (Condon-Shortley phase)."""
    return _as_float(_cg_pair(*(twice(x) for x in (j1, m1, j2, m2, J, M))))


def clebsch_gordan_squared(j1, m1, j2, m2, J, M) -> Fraction:
    return _as_square(_cg_pair(*(twice(x) for x in (j1, m1, j2, m2, J, M))))
