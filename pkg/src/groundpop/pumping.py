"""Steady-state optical pumping of the ground manifold.

Population rate equations over all ground and excited sublevels, with the
optical coherences adiabatically eliminated:

* excitation / stimulated emission between |g> and |e> at a rate
  ``sigma(Delta) * photon_flux`` where the cross-section carries the squared
  dipole and a homogeneous Lorentzian evaluated at each velocity group's
  Doppler-shifted detuning;
* spontaneous (and quenching) decay with branching ratios proportional to
  the squared dipoles of the decay channels;
* uniform relaxation of the ground sublevels towards equal populations.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import constants as C

from .forward import PopulationDistribution
from .lineshape import lorentzian
from .structure import LevelScheme, absorption_scale, rb87_d1

__all__ = [
    "PumpField",
    "EnsembleConfig",
    "PumpCurve",
    "SteadyStateError",
    "SteadyState",
    "steady_state",
    "solve_rate_equations",
    "sweep",
    "log_grid",
    "doppler_fwhm",
    "scenario_experiment1",
    "scenario_experiment2",
    "UW_PER_MM2_CGS",
]

#: 1 uW/mm^2 in erg s^-1 cm^-2
UW_PER_MM2_CGS = 1e3


class SteadyStateError(RuntimeError):
    pass


def doppler_fwhm(scheme: LevelScheme, temperature_k: float) -> float:
    """Doppler FWHM (Hz) of the optical line at ``temperature_k``."""
    m = scheme.mass_amu * C.atomic_mass
    sd = scheme.reference_frequency_hz * np.sqrt(C.k * temperature_k / m) / C.c
    return float(2 * np.sqrt(2 * np.log(2)) * sd)


@dataclass(frozen=True)
class PumpField:
    """Pump laser: a carrier plus optional sidebands, all with polarization ``q``.

    ``carrier_detuning_hz`` is measured from the F -> F' line named by
    ``reference_pair`` (twice-values).  Sidebands are (offset Hz, relative
    field amplitude); power is shared in proportion to amplitude squared.
    """

    q: int
    intensity: float  # uW/mm^2, total over all components
    reference_pair: tuple[int, int] = (4, 4)
    carrier_detuning_hz: float = 0.0
    sidebands: tuple[tuple[float, float], ...] = ()
    carrier_amplitude: float = 1.0
    linewidth_hz: float = 0.0  # Lorentzian laser linewidth (FWHM)

    def __post_init__(self):
        if self.q not in (-1, 0, 1):
            raise ValueError(f"polarization must be -1, 0 or +1, got {self.q}")
        if self.intensity < 0:
            raise ValueError("intensity must be non-negative")
        if self.linewidth_hz < 0:
            raise ValueError("laser linewidth must be non-negative")
        if self.carrier_amplitude < 0 or any(a < 0 for _, a in self.sidebands):
            raise ValueError("component amplitudes must be non-negative")

    def with_intensity(self, intensity: float) -> "PumpField":
        return replace(self, intensity=float(intensity))

    def components(self, scheme: LevelScheme) -> list[tuple[float, float]]:
        """(frequency detuning Hz, intensity uW/mm^2) of each spectral component."""
        f0 = scheme.pair_frequency(*self.reference_pair) + self.carrier_detuning_hz
        comps = [(f0, self.carrier_amplitude)] + [(f0 + off, a) for off, a in self.sidebands]
        w = np.array([a * a for _, a in comps])
        if w.sum() == 0:
            return []
        w = w / w.sum()
        return [(f, self.intensity * wi) for (f, _), wi in zip(comps, w) if wi > 0]


@dataclass(frozen=True)
class EnsembleConfig:
    scheme: LevelScheme = field(default_factory=rb87_d1)
    n_velocity_groups: int = 11
    doppler_fwhm_hz: float = 5.0e8
    homogeneous_fwhm_hz: float = 1.03e8
    excited_decay_rate: float = 3.6129e7
    ground_relaxation_rate: float = 300.0
    excited_mixing_rate: float = 0.0
    include_nonresonant: bool = True
    velocity_mixing: bool = True
    resonance_window_hz: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_velocity_groups < 1:
            raise ValueError("need at least one velocity group")
        for name in ("excited_decay_rate", "ground_relaxation_rate", "homogeneous_fwhm_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.excited_mixing_rate < 0:
            raise ValueError("excited_mixing_rate must be non-negative")
        if self.doppler_fwhm_hz < 0:
            raise ValueError("Doppler width must be non-negative")

    def velocity_groups(self) -> tuple[np.ndarray, np.ndarray]:
        """Doppler shifts (Hz) and weights from Gauss-Hermite quadrature."""
        if self.n_velocity_groups == 1 or self.doppler_fwhm_hz == 0:
            return np.zeros(1), np.ones(1)
        x, w = np.polynomial.hermite.hermgauss(self.n_velocity_groups)
        sd = self.doppler_fwhm_hz / (2 * np.sqrt(2 * np.log(2)))
        return np.sqrt(2) * sd * x, w / np.sqrt(np.pi)


@dataclass(frozen=True)
class SteadyState:
    populations: PopulationDistribution  # ground sublevels, renormalised
    excited_fraction: float
    full: np.ndarray  # ground then excited, summing to 1
    clipped: bool


@dataclass(frozen=True)
class PumpCurve:
    intensities: np.ndarray
    populations: np.ndarray  # (n_points, n_ground)
    scheme: LevelScheme = field(repr=False)

    def column(self, twice_f: int, twice_m: int) -> np.ndarray:
        states = self.scheme.ground_states()
        i = [k for k, g in enumerate(states) if (g.twice_f, g.twice_m) == (twice_f, twice_m)][0]
        return self.populations[:, i]

    def manifold_total(self, twice_f: int) -> np.ndarray:
        idx = [k for k, g in enumerate(self.scheme.ground_states()) if g.twice_f == twice_f]
        return self.populations[:, idx].sum(axis=1)


def _branching(scheme: LevelScheme) -> np.ndarray:
    ground, excited = scheme.ground_states(), scheme.excited_states()
    B = np.zeros((len(excited), len(ground)))
    gi = {g: i for i, g in enumerate(ground)}
    ei = {e: i for i, e in enumerate(excited)}
    for t in scheme.table:
        B[ei[t.excited], gi[t.ground]] += t.strength
    return B / B.sum(axis=1, keepdims=True)


def _excitation_rates(cfg: EnsembleConfig, pump: PumpField) -> np.ndarray:
    """Per-velocity-group excitation rates, shape (n_groups, n_ground, n_excited)."""
    scheme = cfg.scheme
    ground, excited = scheme.ground_states(), scheme.excited_states()
    gi = {g: i for i, g in enumerate(ground)}
    ei = {e: i for i, e in enumerate(excited)}
    shifts, _ = cfg.velocity_groups()
    R = np.zeros((shifts.size, len(ground), len(excited)))
    comps = pump.components(scheme)
    if not comps or pump.intensity == 0:
        return R
    sigma0 = absorption_scale(scheme)
    photon_energy = C.h * 1e7 * scheme.reference_frequency_hz
    pairs = scheme.hyperfine_pairs()
    # Lorentzian laser line convolved with the homogeneous line
    width = cfg.homogeneous_fwhm_hz + pump.linewidth_hz
    window = cfg.resonance_window_hz
    if window is None:
        window = max(width, cfg.doppler_fwhm_hz)
    for f, inten in comps:
        flux = inten * UW_PER_MM2_CGS / photon_energy
        allowed = None
        if not cfg.include_nonresonant:
            d = [abs(f - scheme.pair_frequency(*p)) for p in pairs]
            k = int(np.argmin(d))
            if d[k] > window:
                continue
            allowed = pairs[k]
        for t in scheme.table.select(q=pump.q):
            if allowed is not None and t.pair != allowed:
                continue
            lor = lorentzian(f - t.frequency_hz - shifts, width)
            R[:, gi[t.ground], ei[t.excited]] += sigma0 * t.strength * lor * flux
    return R


def _rate_matrix(R: np.ndarray, B: np.ndarray, gamma_e: float, gamma_g: float, kappa_e: float = 0.0) -> np.ndarray:
    ng, ne = R.shape
    n = ng + ne
    M = np.zeros((n, n))
    G = slice(0, ng)
    E = slice(ng, n)
    M[G, G] -= np.diag(R.sum(axis=1))
    M[G, E] += R
    M[E, E] -= np.diag(R.sum(axis=0))
    M[E, G] += R.T
    M[E, E] -= gamma_e * np.eye(ne)
    M[G, E] += gamma_e * B.T
    M[G, G] += gamma_g / ng
    M[G, G] -= gamma_g * np.eye(ng)
    # collisional redistribution among excited sublevels
    M[E, E] += kappa_e / ne
    M[E, E] -= kappa_e * np.eye(ne)
    return M


def _null_vector(M: np.ndarray, ng: int) -> np.ndarray:
    """Normalised steady state of ``dp/dt = M p``.

    The excited block decays at optical rates, many orders of magnitude above
    the ground relaxation, so it is eliminated first (Schur complement) and
    the null vector of the reduced ground-state generator is found from its
    SVD.  This keeps the weak ground dynamics from drowning in round-off.
    """
    A, Bm = M[:ng, :ng], M[:ng, ng:]
    Cm, D = M[ng:, :ng], M[ng:, ng:]
    try:
        X = np.linalg.solve(D, Cm)  # e = -X g
    except np.linalg.LinAlgError as exc:
        raise SteadyStateError("singular excited-state block") from exc
    K = A - Bm @ X
    scale = np.abs(K).max(initial=0.0)
    if scale == 0:
        raise SteadyStateError("ground generator vanishes")
    _, s, vt = np.linalg.svd(K / scale)
    g = vt[-1]
    g = g / g.sum()
    e = -X @ g
    p = np.concatenate([g, e])
    p = p / p.sum()
    res = np.linalg.norm(M @ p) / np.abs(M).max()
    if not np.all(np.isfinite(p)) or s[-2] < 1e-13 or res > 1e-10:
        raise SteadyStateError(f"steady-state solve failed (residual {res:.2e}, gap {s[-2]:.2e})")
    return p


def solve_rate_equations(cfg: EnsembleConfig, pump: PumpField) -> tuple[np.ndarray, bool]:
    """Full steady-state vector (ground then excited), summing to 1."""
    scheme = cfg.scheme
    B = _branching(scheme)
    R = _excitation_rates(cfg, pump)
    _, weights = cfg.velocity_groups()
    ng = len(scheme.ground_states())
    rates = (B, cfg.excited_decay_rate, cfg.ground_relaxation_rate, cfg.excited_mixing_rate)
    if cfg.velocity_mixing:
        p = _null_vector(_rate_matrix(np.tensordot(weights, R, axes=1), *rates), ng)
    else:
        p = sum(w * _null_vector(_rate_matrix(R[k], *rates), ng) for k, w in enumerate(weights))
    clipped = False
    if np.any(p < 0):
        if np.min(p) < -1e-12:
            raise SteadyStateError(f"negative steady-state population {np.min(p):.3g}")
        p = np.clip(p, 0.0, None)
        clipped = True
    return p / p.sum(), clipped


def steady_state(cfg: EnsembleConfig, field: PumpField, full: bool = False):
    """Velocity-averaged steady state of the ground manifold.

    Returns a :class:`PopulationDistribution` over the ground sublevels, or a
    :class:`SteadyState` with the excited fraction when ``full`` is true.
    """
    p, clipped = solve_rate_equations(cfg, field)
    ng = len(cfg.scheme.ground_states())
    g = p[:ng]
    dist = PopulationDistribution(g / g.sum(), cfg.scheme)
    if not full:
        return dist
    return SteadyState(dist, float(p[ng:].sum()), p, clipped)


def log_grid(start: float, stop: float, n: int) -> np.ndarray:
    if not (start > 0 and stop > start and n >= 2):
        raise ValueError("log grid needs 0 < start < stop and n >= 2")
    return np.logspace(np.log10(start), np.log10(stop), n)


def sweep(cfg: EnsembleConfig, field: PumpField, intensities: Sequence[float]) -> PumpCurve:
    intensities = np.asarray(intensities, dtype=float)
    pops = np.array([steady_state(cfg, field.with_intensity(i)).p for i in intensities])
    return PumpCurve(intensities, pops, cfg.scheme)


# --------------------------------------------------------------------------
# scenarios


def scenario_experiment1(scheme: LevelScheme | None = None) -> tuple[EnsembleConfig, PumpField]:
    """sigma+ pump locked to F=2 -> F'=2; room-temperature cell with 10 Torr neon."""
    scheme = scheme or rb87_d1()
    cfg = EnsembleConfig(
        scheme=scheme,
        n_velocity_groups=11,
        doppler_fwhm_hz=doppler_fwhm(scheme, 295.0),
        homogeneous_fwhm_hz=103e6,
        excited_decay_rate=scheme.excited_decay_rate,
        ground_relaxation_rate=300.0,
        meta={"scenario": 1, "buffer_gas": "10 Torr Ne", "temperature_K": 295.0, "n0_per_cm3": 1e10,
              "cell_length_cm": 5.0},
    )
    return cfg, PumpField(q=1, intensity=0.0, reference_pair=(4, 4))


def scenario_experiment2(
    scheme: LevelScheme | None = None,
    modulation_hz: float = 3.0e9,
    laser_linewidth_hz: float = 2.0e8,
) -> tuple[EnsembleConfig, PumpField]:
    """pi-polarized, current-modulated pump whose +1 / -1 sidebands address
    F=1 -> F'=1 and F=2 -> F'=2; 58 C cell with 10 Torr nitrogen.

    The carrier sits midway between the two addressed lines.  The
    modulated-VCSEL linewidth is a tuned value; it sets how strongly the dark
    clock states leak through the far-detuned F' lines.
    """
    scheme = scheme or rb87_d1()
    f11 = scheme.pair_frequency(2, 2)
    f22 = scheme.pair_frequency(4, 4)
    mid = 0.5 * (f11 + f22)
    cfg = EnsembleConfig(
        scheme=scheme,
        n_velocity_groups=11,
        doppler_fwhm_hz=doppler_fwhm(scheme, 331.15),
        homogeneous_fwhm_hz=193e6,
        excited_decay_rate=scheme.excited_decay_rate + 9.0e7,
        ground_relaxation_rate=300.0,
        meta={"scenario": 2, "buffer_gas": "10 Torr N2", "temperature_K": 331.15, "n0_per_cm3": 1e11,
              "cell_length_cm": 5.0, "excited_quenching_per_s": 9.0e7,
              "laser_linewidth_hz": laser_linewidth_hz},
    )
    field = PumpField(
        q=0,
        intensity=0.0,
        reference_pair=(4, 4),
        carrier_detuning_hz=mid - f22,
        sidebands=((+modulation_hz, 1.0), (-modulation_hz, 1.0)),
        carrier_amplitude=1.0,
        linewidth_hz=laser_linewidth_hz,
    )
    return cfg, field
