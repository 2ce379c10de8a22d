"""Level schemes, squared dipole matrix elements and transition tables."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy import constants as C

from .angular import AngularMomentum, clebsch_gordan_squared, twice, wigner6j_squared

__all__ = [
    "GroundState",
    "ExcitedState",
    "LevelScheme",
    "Transition",
    "TransitionTable",
    "SpeciesFileError",
    "squared_dipole",
    "squared_dipole_exact",
    "build_rb87_d1",
    "rb87_d1",
    "load_scheme",
    "scheme_from_dict",
    "scheme_to_dict",
    "lande_g_f",
    "absorption_scale",
    "POLARIZATIONS",
    "sas_reference_lines",
]

POLARIZATIONS = (-1, 0, 1)


class SpeciesFileError(ValueError):
    """A species data file is missing keys or holds inconsistent values."""


@dataclass(frozen=True, order=True)
class GroundState:
    """Ground sublevel |F, mF>, stored as twice-values."""

    twice_f: int
    twice_m: int

    def __post_init__(self):
        if self.twice_f < 0 or abs(self.twice_m) > self.twice_f or (self.twice_f - self.twice_m) % 2:
            raise ValueError(f"invalid sublevel 2F={self.twice_f}, 2mF={self.twice_m}")

    @classmethod
    def of(cls, f, m_f) -> "GroundState":
        return cls(twice(f), twice(m_f))

    @property
    def f(self) -> Fraction:
        return Fraction(self.twice_f, 2)

    @property
    def m_f(self) -> Fraction:
        return Fraction(self.twice_m, 2)

    def mirrored(self) -> "GroundState":
        return type(self)(self.twice_f, -self.twice_m)

    def label(self) -> str:
        return f"|{self.f},{'+' if self.twice_m > 0 else ''}{self.m_f}>"


@dataclass(frozen=True, order=True)
class ExcitedState:
    twice_f: int
    twice_m: int

    def __post_init__(self):
        if self.twice_f < 0 or abs(self.twice_m) > self.twice_f or (self.twice_f - self.twice_m) % 2:
            raise ValueError(f"invalid sublevel 2F'={self.twice_f}, 2mF'={self.twice_m}")

    @property
    def f(self) -> Fraction:
        return Fraction(self.twice_f, 2)

    @property
    def m_f(self) -> Fraction:
        return Fraction(self.twice_m, 2)

    def label(self) -> str:
        return f"|{self.f}',{'+' if self.twice_m > 0 else ''}{self.m_f}'>"


@dataclass(frozen=True)
class LevelScheme:
    """Species description for a J -> J' optical line.

    Hyperfine energies are offsets in Hz from the fine-structure centroid of
    each level; line frequencies are therefore detunings from
    ``reference_frequency_hz``.
    """

    name: str
    nuclear_spin: AngularMomentum
    j_ground: AngularMomentum
    j_excited: AngularMomentum
    ground_hyperfine_hz: tuple[tuple[int, float], ...]  # (2F, offset)
    excited_hyperfine_hz: tuple[tuple[int, float], ...]
    reference_frequency_hz: float
    dipole_prefactor: float = 1.0
    reduced_dipole_ea0: float = 1.0
    excited_decay_rate: float = 3.6129e7
    mass_amu: float = 86.909180527
    g_j_ground: float = 2.00233113
    g_j_excited: float = 0.666
    provenance: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    def __post_init__(self):
        for label, levels, tj in (
            ("ground", self.ground_hyperfine_hz, self.j_ground.twice_j),
            ("excited", self.excited_hyperfine_hz, self.j_excited.twice_j),
        ):
            ti = self.nuclear_spin.twice_j
            allowed = set(range(abs(tj - ti), tj + ti + 1, 2))
            got = {tf for tf, _ in levels}
            if got != allowed:
                raise SpeciesFileError(
                    f"{label} hyperfine levels 2F={sorted(got)} do not match |J-I|..J+I = {sorted(allowed)}"
                )

    @property
    def ground_levels(self) -> dict[int, float]:
        return dict(self.ground_hyperfine_hz)

    @property
    def excited_levels(self) -> dict[int, float]:
        return dict(self.excited_hyperfine_hz)

    def ground_states(self) -> tuple[GroundState, ...]:
        """All ground sublevels ordered by F then mF (the column order everywhere)."""
        return tuple(
            GroundState(tf, tm) for tf in sorted(self.ground_levels) for tm in range(-tf, tf + 1, 2)
        )

    def excited_states(self) -> tuple[ExcitedState, ...]:
        return tuple(
            ExcitedState(tf, tm) for tf in sorted(self.excited_levels) for tm in range(-tf, tf + 1, 2)
        )

    def pair_frequency(self, twice_f: int, twice_fp: int) -> float:
        """Zeeman-degenerate line centre of F -> F' (Hz detuning)."""
        return self.excited_levels[twice_fp] - self.ground_levels[twice_f]

    def hyperfine_pairs(self) -> tuple[tuple[int, int], ...]:
        """All (2F, 2F') pairs with |F - F'| <= 1, ordered by F then F'."""
        return tuple(
            (tf, tfp)
            for tf in sorted(self.ground_levels)
            for tfp in sorted(self.excited_levels)
            if abs(tf - tfp) <= 2
        )

    @property
    def ground_splitting_hz(self) -> float:
        v = sorted(self.ground_levels.values())
        return v[-1] - v[0]

    def with_scaled_splittings(self, factor: float) -> "LevelScheme":
        """Copy with every hyperfine offset multiplied by ``factor`` (0 collapses all lines)."""
        if factor < 0:
            raise ValueError("scale factor must be non-negative")
        return replace(
            self,
            ground_hyperfine_hz=tuple((k, v * factor) for k, v in self.ground_hyperfine_hz),
            excited_hyperfine_hz=tuple((k, v * factor) for k, v in self.excited_hyperfine_hz),
        )

    @cached_property
    def table(self) -> "TransitionTable":
        return TransitionTable.build(self)


def squared_dipole_exact(g: GroundState, twice_fp: int, q: int, scheme: LevelScheme) -> Fraction:
    """Squared dipole of |F,mF> -> |F', mF+q> in units of the dipole prefactor squared.

    Uses (2F'+1)(2J+1) {J J' 1; F' F I}^2 <F' mF' 1 -q | F mF>^2, which sums to
    1 over all F' and q for every ground sublevel of a J=1/2 -> J'=1/2 line.
    """
    if q not in POLARIZATIONS:
        raise ValueError(f"polarization must be -1, 0 or +1, got {q}")
    tfp = twice_fp
    tmp = g.twice_m + 2 * q
    if abs(tmp) > tfp:
        return Fraction(0)
    tj, tjp, ti = scheme.j_ground.twice_j, scheme.j_excited.twice_j, scheme.nuclear_spin.twice_j
    six = wigner6j_squared(Fraction(tj, 2), Fraction(tjp, 2), 1, Fraction(tfp, 2), Fraction(g.twice_f, 2), Fraction(ti, 2))
    if six == 0:
        return Fraction(0)
    cg = clebsch_gordan_squared(Fraction(tfp, 2), Fraction(tmp, 2), 1, -q, g.f, g.m_f)
    return (tfp + 1) * (tj + 1) * six * cg


def squared_dipole(g: GroundState, twice_fp: int, q: int, scheme: LevelScheme) -> float:
    return float(squared_dipole_exact(g, twice_fp, q, scheme)) * scheme.dipole_prefactor**2


@dataclass(frozen=True)
class Transition:
    ground: GroundState
    excited: ExcitedState
    q: int
    strength_exact: Fraction
    frequency_hz: float

    @property
    def strength(self) -> float:
        return float(self.strength_exact)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.ground.twice_f, self.excited.twice_f)


@dataclass(frozen=True)
class TransitionTable:
    """Every allowed |F,mF> -> |F',mF+q> line with its squared dipole."""

    scheme: LevelScheme
    transitions: tuple[Transition, ...]

    @classmethod
    def build(cls, scheme: LevelScheme) -> "TransitionTable":
        out = []
        for g in scheme.ground_states():
            for tfp in sorted(scheme.excited_levels):
                if abs(g.twice_f - tfp) > 2:
                    continue
                for q in POLARIZATIONS:
                    s = squared_dipole_exact(g, tfp, q, scheme) * Fraction(scheme.dipole_prefactor) ** 2
                    if s == 0:
                        continue
                    e = ExcitedState(tfp, g.twice_m + 2 * q)
                    out.append(Transition(g, e, q, s, scheme.pair_frequency(g.twice_f, tfp)))
        return cls(scheme, tuple(out))

    def __iter__(self) -> Iterator[Transition]:
        return iter(self.transitions)

    def __len__(self):
        return len(self.transitions)

    def select(self, q: int | None = None, ground: GroundState | None = None,
               pair: tuple[int, int] | None = None) -> tuple[Transition, ...]:
        return tuple(
            t for t in self.transitions
            if (q is None or t.q == q) and (ground is None or t.ground == ground) and (pair is None or t.pair == pair)
        )

    def strength(self, g: GroundState, twice_fp: int, q: int) -> Fraction:
        for t in self.select(q=q, ground=g):
            if t.excited.twice_f == twice_fp:
                return t.strength_exact
        return Fraction(0)

    def xi_matrix_exact(self, twice_f: int, polarizations=(1, -1)) -> list[list[Fraction]]:
        """Reduced coupling rows xi_F^{F',q} versus the sublevels of manifold F.

        Rows are ordered polarization-major, then F' ascending, so that for
        F=1 and (+1, -1) the rows read (F'=1,+), (F'=2,+), (F'=1,-), (F'=2,-).
        """
        states = [g for g in self.scheme.ground_states() if g.twice_f == twice_f]
        rows = []
        for q in polarizations:
            for tf, tfp in self.scheme.hyperfine_pairs():
                if tf != twice_f:
                    continue
                rows.append([self.strength(g, tfp, q) for g in states])
        return rows

    def xi_matrix(self, twice_f: int, polarizations=(1, -1)) -> np.ndarray:
        return np.array(self.xi_matrix_exact(twice_f, polarizations), dtype=float)


def lande_g_f(twice_f: int, twice_j: int, twice_i: int, g_j: float) -> float:
    """Hyperfine Lande factor, neglecting the nuclear g-factor."""
    if twice_f == 0:
        return 0.0
    f, j, i = twice_f / 2, twice_j / 2, twice_i / 2
    return g_j * (f * (f + 1) - i * (i + 1) + j * (j + 1)) / (2 * f * (f + 1))


def absorption_scale(scheme: LevelScheme) -> float:
    """Prefactor 4*pi*omega*mu0^2/(c*hbar) in cgs units, per Hz of lineshape.

    Multiplying by a density (1/cm^3), a squared dipole in units of mu0^2 and a
    lineshape normalised per Hz gives an absorption coefficient in 1/cm.  The
    angular frequency is taken at the fixed reference frequency.
    """
    e_esu = C.e * C.c * 10  # statcoulomb
    a0_cm = C.physical_constants["Bohr radius"][0] * 100
    mu0 = scheme.reduced_dipole_ea0 * e_esu * a0_cm
    hbar = C.hbar * 1e7
    c_cm = C.c * 100
    omega = 2 * np.pi * scheme.reference_frequency_hz
    # lineshape per angular frequency = per Hz / (2 pi)
    return 4 * np.pi * omega * mu0**2 / (c_cm * hbar) / (2 * np.pi)


def scheme_from_dict(d: dict) -> LevelScheme:
    try:
        def levels(key):
            return tuple(sorted((twice(Fraction(k)), float(v)) for k, v in d[key].items()))

        return LevelScheme(
            name=str(d["name"]),
            nuclear_spin=AngularMomentum.of(Fraction(str(d["nuclear_spin"]))),
            j_ground=AngularMomentum.of(Fraction(str(d["j_ground"]))),
            j_excited=AngularMomentum.of(Fraction(str(d["j_excited"]))),
            ground_hyperfine_hz=levels("ground_hyperfine_hz"),
            excited_hyperfine_hz=levels("excited_hyperfine_hz"),
            reference_frequency_hz=float(d["reference_frequency_hz"]),
            dipole_prefactor=float(d.get("dipole_prefactor", 1.0)),
            reduced_dipole_ea0=float(d.get("reduced_dipole_ea0", 1.0)),
            excited_decay_rate=float(d.get("excited_decay_rate_per_s", 3.6129e7)),
            mass_amu=float(d.get("mass_amu", 86.909180527)),
            g_j_ground=float(d.get("g_j_ground", 2.00233113)),
            g_j_excited=float(d.get("g_j_excited", 0.666)),
            provenance=tuple(sorted((str(k), str(v)) for k, v in d.get("provenance", {}).items())),
        )
    except KeyError as exc:
        raise SpeciesFileError(f"species file is missing key {exc}") from exc
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, SpeciesFileError):
            raise
        raise SpeciesFileError(f"bad species file value: {exc}") from exc


def scheme_to_dict(s: LevelScheme) -> dict:
    def levels(pairs):
        return {str(Fraction(tf, 2)): v for tf, v in pairs}

    return {
        "schema": "groundpop.species/1",
        "name": s.name,
        "nuclear_spin": str(s.nuclear_spin.j),
        "j_ground": str(s.j_ground.j),
        "j_excited": str(s.j_excited.j),
        "ground_hyperfine_hz": levels(s.ground_hyperfine_hz),
        "excited_hyperfine_hz": levels(s.excited_hyperfine_hz),
        "reference_frequency_hz": s.reference_frequency_hz,
        "dipole_prefactor": s.dipole_prefactor,
        "reduced_dipole_ea0": s.reduced_dipole_ea0,
        "excited_decay_rate_per_s": s.excited_decay_rate,
        "mass_amu": s.mass_amu,
        "g_j_ground": s.g_j_ground,
        "g_j_excited": s.g_j_excited,
        "provenance": dict(s.provenance),
    }


def load_scheme(path: str | Path) -> LevelScheme:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpeciesFileError(f"cannot read species file {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise SpeciesFileError("species file must hold a JSON object")
    return scheme_from_dict(d)


def _bundled(name: str) -> dict:
    return json.loads(resources.files("groundpop.data").joinpath(name).read_text())


def rb87_d1() -> LevelScheme:
    """The bundled rubidium-87 D1 level scheme."""
    return scheme_from_dict(_bundled("rb87_d1.json"))


def build_rb87_d1() -> tuple[LevelScheme, TransitionTable]:
    s = rb87_d1()
    return s, s.table


def sas_reference_lines(include_crossovers: bool = False) -> list[dict]:
    lines = _bundled("rb87_d1_sas.json")["lines"]
    return [ln for ln in lines if include_crossovers or not ln["crossover"]]
