"""Forward absorption model: populations -> absorption spectra.

Absorption coefficients are per unit length (1/cm).  Frequencies are
detunings in Hz from the scheme's reference frequency.
"""
from __future__ import annotations

import math

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .lineshape import VoigtParams, voigt_batch
from .structure import (
    GroundState,
    LevelScheme,
    Transition,
    absorption_scale,
    lande_g_f,
)

__all__ = [
    "PopulationDistribution",
    "ProbeConfig",
    "Spectrum",
    "CouplingMatrix",
    "excitation_spectrum",
    "synthesize",
    "coupling_matrix",
    "reduced_xi",
    "xi_vector",
    "add_noise",
    "linear_zeeman_offsets",
    "Q_ISOTROPIC",
]

#: sum over F' and q = +/-1 of the squared dipoles of any D1 ground sublevel
Q_ISOTROPIC = 2.0 / 3.0

LineOffset = Callable[[Transition], float]
MHZ_PER_GAUSS = 1.39962449361  # Bohr magneton / h


@dataclass(frozen=True)
class PopulationDistribution:
    """Probabilities over the ground sublevels in ``scheme.ground_states()`` order."""

    p: np.ndarray
    scheme: LevelScheme = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).copy()
        n = len(self.scheme.ground_states())
        if p.shape != (n,):
            raise ValueError(f"expected {n} populations, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("populations must be finite")
        if np.any(p < -1e-12):
            raise ValueError(f"populations must be non-negative, got min {p.min():.3g}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"populations must sum to 1, got {p.sum():.12g}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def thermal(cls, scheme: LevelScheme) -> "PopulationDistribution":
        n = len(scheme.ground_states())
        return cls(np.full(n, 1.0 / n), scheme)

    @classmethod
    def delta(cls, scheme: LevelScheme, state: GroundState) -> "PopulationDistribution":
        states = scheme.ground_states()
        p = np.zeros(len(states))
        p[states.index(state)] = 1.0
        return cls(p, scheme)

    @classmethod
    def from_mapping(cls, scheme: LevelScheme, m: Mapping[GroundState, float]) -> "PopulationDistribution":
        states = scheme.ground_states()
        return cls(np.array([m.get(g, 0.0) for g in states]), scheme)

    def __getitem__(self, g: GroundState) -> float:
        return float(self.p[self.scheme.ground_states().index(g)])

    def manifold(self, twice_f: int) -> np.ndarray:
        return np.array([self.p[i] for i, g in enumerate(self.scheme.ground_states()) if g.twice_f == twice_f])

    def manifold_total(self, twice_f: int) -> float:
        return float(self.manifold(twice_f).sum())

    def mirrored(self) -> "PopulationDistribution":
        states = self.scheme.ground_states()
        return type(self)(np.array([self[g.mirrored()] for g in states]), self.scheme)


@dataclass(frozen=True)
class ProbeConfig:
    """One probe polarization scanned over a frequency axis.

    ``line_offset`` optionally shifts each Zeeman line (Hz); with the default
    of ``None`` all Zeeman lines of an F -> F' pair share one centre.
    """

    q: int
    axis: np.ndarray
    n0: float
    voigt: VoigtParams
    path_length: float = 5.0
    line_offset: LineOffset | None = field(default=None, compare=False)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.ndim != 1:
            raise ValueError("frequency axis must be one-dimensional")
        if axis.size > 1 and not np.all(np.diff(axis) > 0):
            raise ValueError("frequency axis must be strictly increasing")
        if self.q not in (-1, 0, 1):
            raise ValueError(f"polarization must be -1, 0 or +1, got {self.q}")
        if not self.n0 > 0:
            raise ValueError("atomic density must be positive")
        if not self.path_length > 0:
            raise ValueError("path length must be positive")
        object.__setattr__(self, "axis", axis)

    def with_axis(self, axis) -> "ProbeConfig":
        return replace(self, axis=np.asarray(axis, dtype=float))

    def with_q(self, q: int) -> "ProbeConfig":
        return replace(self, q=q)


@dataclass(frozen=True)
class Spectrum:
    axis: np.ndarray
    alpha: np.ndarray
    q: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        if axis.shape != alpha.shape or axis.ndim != 1:
            raise ValueError("axis and alpha must be 1-D arrays of equal length")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("absorption samples must be finite")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "alpha", alpha)

    def transmission(self, path_length: float) -> np.ndarray:
        return np.exp(-self.alpha * path_length)


@dataclass(frozen=True)
class CouplingMatrix:
    """Stacked per-state excitation spectra; ``matrix @ P`` gives the stacked absorption."""

    matrix: np.ndarray
    frequencies: np.ndarray
    polarizations: np.ndarray
    states: tuple[GroundState, ...]

    def __matmul__(self, p):
        if isinstance(p, PopulationDistribution):
            p = p.p
        return self.matrix @ np.asarray(p, dtype=float)

    @property
    def shape(self):
        return self.matrix.shape

    def rows_for(self, q: int) -> np.ndarray:
        return self.matrix[self.polarizations == q]


def _line_profile(t: Transition, cfg: ProbeConfig, omega: np.ndarray) -> np.ndarray:
    centre = t.frequency_hz + (cfg.line_offset(t) if cfg.line_offset is not None else 0.0)
    return voigt_batch(omega, cfg.voigt.shifted(centre))


def excitation_spectrum(g: GroundState, q: int, omega, cfg: ProbeConfig, scheme: LevelScheme):
    """Absorption per unit population of sublevel ``g`` at frequencies ``omega``."""
    omega_arr = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.zeros_like(omega_arr)
    for t in scheme.table.select(q=q, ground=g):
        out += t.strength * _line_profile(t, cfg, omega_arr)
    out *= cfg.n0 * absorption_scale(scheme)
    return float(out[0]) if np.ndim(omega) == 0 else out


def synthesize(P: PopulationDistribution, cfg: ProbeConfig) -> Spectrum:
    """Absorption spectrum of the population ``P`` for one probe.

    Line weights sharing a centre are summed exactly (``math.fsum``) and the
    profiles are added in order of centre, so mirror-image populations give
    bit-identical sigma+ / sigma- spectra.
    """
    scheme = P.scheme
    weights = dict(zip(scheme.ground_states(), P.p))
    by_centre: dict[float, list[float]] = {}
    for t in scheme.table.select(q=cfg.q):
        w = weights[t.ground]
        if w == 0.0:
            continue
        centre = t.frequency_hz + (cfg.line_offset(t) if cfg.line_offset is not None else 0.0)
        by_centre.setdefault(centre, []).append(w * t.strength)
    alpha = np.zeros_like(cfg.axis)
    for centre in sorted(by_centre):
        alpha += math.fsum(by_centre[centre]) * voigt_batch(cfg.axis, cfg.voigt.shifted(centre))
    alpha *= cfg.n0 * absorption_scale(scheme)
    return Spectrum(cfg.axis.copy(), alpha, cfg.q)


def coupling_matrix(configs: Sequence[ProbeConfig], scheme: LevelScheme) -> CouplingMatrix:
    """Build the stacked coupling matrix for several probes (typically sigma+ and sigma-)."""
    configs = list(configs)
    if not configs:
        raise ValueError("at least one probe configuration is required")
    ref = configs[0]
    for c in configs[1:]:
        if c.voigt.gamma != ref.voigt.gamma or c.voigt.sigma_fwhm != ref.voigt.sigma_fwhm or c.n0 != ref.n0:
            raise ValueError("all probes must share Voigt widths and density")
    states = scheme.ground_states()
    blocks, freqs, pols = [], [], []
    for c in configs:
        if c.axis.size == 0:
            continue
        block = np.column_stack([excitation_spectrum(g, c.q, c.axis, c, scheme) for g in states])
        blocks.append(block)
        freqs.append(c.axis)
        pols.append(np.full(c.axis.size, c.q))
    if not blocks:
        return CouplingMatrix(np.zeros((0, len(states))), np.zeros(0), np.zeros(0, dtype=int), states)
    return CouplingMatrix(np.vstack(blocks), np.concatenate(freqs), np.concatenate(pols), states)


def reduced_xi(P: PopulationDistribution, q: int) -> dict[tuple[int, int], float]:
    """Summed line strengths xi_F^{F',q} keyed by (2F, 2F')."""
    scheme = P.scheme
    out = {pair: 0.0 for pair in scheme.hyperfine_pairs()}
    weights = dict(zip(scheme.ground_states(), P.p))
    for t in scheme.table.select(q=q):
        out[t.pair] += t.strength * weights[t.ground]
    return out


def xi_vector(P: PopulationDistribution, twice_f: int, polarizations=(1, -1)) -> np.ndarray:
    """xi values of manifold F in the row order of ``TransitionTable.xi_matrix``."""
    vals = []
    for q in polarizations:
        xi = reduced_xi(P, q)
        vals.extend(xi[pair] for pair in P.scheme.hyperfine_pairs() if pair[0] == twice_f)
    return np.array(vals)


def add_noise(s: Spectrum, relative_sigma: float, seed: int | None = None) -> Spectrum:
    """Add white Gaussian noise with std ``relative_sigma * max|alpha|``."""
    if relative_sigma < 0:
        raise ValueError("noise level must be non-negative")
    if relative_sigma == 0:
        return Spectrum(s.axis.copy(), s.alpha.copy(), s.q, dict(s.meta))
    rng = np.random.default_rng(seed)
    sd = relative_sigma * float(np.max(np.abs(s.alpha)))
    return Spectrum(s.axis.copy(), s.alpha + rng.normal(0.0, sd, s.alpha.shape), s.q, dict(s.meta))


def linear_zeeman_offsets(scheme: LevelScheme, field_gauss: float) -> LineOffset:
    """Per-line frequency shift from the linear Zeeman effect at ``field_gauss``."""
    ti = scheme.nuclear_spin.twice_j
    gg = {tf: lande_g_f(tf, scheme.j_ground.twice_j, ti, scheme.g_j_ground) for tf in scheme.ground_levels}
    ge = {tf: lande_g_f(tf, scheme.j_excited.twice_j, ti, scheme.g_j_excited) for tf in scheme.excited_levels}
    k = MHZ_PER_GAUSS * 1e6 * field_gauss

    def offset(t: Transition) -> float:
        return k * (ge[t.excited.twice_f] * t.excited.twice_m - gg[t.ground.twice_f] * t.ground.twice_m) / 2

    return offset
