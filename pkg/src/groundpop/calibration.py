"""Frequency-axis calibration of scanned probe traces.

A scan is described by three simultaneously recorded channels: the probe
photodiode, a Fabry-Perot (FP) transmission giving equally spaced frequency
markers, and a saturated-absorption (SAS) trace whose sub-Doppler features
sit at tabulated frequencies.  The FP markers fix the scan shape, the SAS
anchors fix the absolute scale and offset; both enter one linear
least-squares problem for the polynomial sample -> frequency map.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import find_peaks

from .forward import Spectrum

__all__ = [
    "RawTrace",
    "RawBundle",
    "Anchor",
    "FrequencyMap",
    "ScanTruth",
    "CalibrationError",
    "AmbiguousAssignmentError",
    "NonPeriodicFringesWarning",
    "detect_fp_peaks",
    "detect_sas_anchors",
    "fit_frequency_axis",
    "apply_map",
    "calibrate",
    "generate_raw_bundle",
]

CHANNELS = ("probe", "fp", "sas")


class CalibrationError(ValueError):
    pass


class AmbiguousAssignmentError(CalibrationError):
    def __init__(self, message: str, candidates: list):
        super().__init__(message)
        self.candidates = candidates


class NonPeriodicFringesWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RawTrace:
    values: np.ndarray
    channel: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        if v.ndim != 1 or v.size < 16:
            raise ValueError("a raw trace needs at least 16 samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("raw trace contains non-finite samples")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class RawBundle:
    probe: RawTrace | None
    fp: RawTrace | None
    sas: RawTrace | None
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        for t in (self.probe, self.fp, self.sas):
            if t is not None:
                return len(t)
        return 0


@dataclass(frozen=True)
class Anchor:
    index: float
    frequency_hz: float
    label: str = ""


# --------------------------------------------------------------------------
# peak finding


def _parabolic(y: np.ndarray, i: int) -> float:
    if i <= 0 or i >= y.size - 1:
        return float(i)
    a, b, c = y[i - 1], y[i], y[i + 1]
    den = a - 2 * b + c
    if den >= 0:
        return float(i)
    return i + 0.5 * (a - c) / den


def detect_fp_peaks(fp: RawTrace, prominence: float = 0.3, periodicity_tol: float = 0.35) -> np.ndarray:
    """Sub-sample centres of the FP transmission fringes, increasing."""
    y = fp.values
    rng = float(y.max() - y.min())
    if rng <= 0:
        raise CalibrationError("FP trace is flat")
    idx, _ = find_peaks(y, prominence=prominence * rng)
    if idx.size < 3:
        raise CalibrationError(f"found {idx.size} FP fringes, at least 3 are required")
    peaks = np.array([_parabolic(y, int(i)) for i in idx])
    gaps = np.diff(peaks)
    if np.any(np.abs(gaps / np.median(gaps) - 1) > periodicity_tol):
        warnings.warn("FP fringe spacing is not close to periodic", NonPeriodicFringesWarning, stacklevel=2)
    return peaks


def _sas_features(y: np.ndarray, prominence: float, window: int) -> tuple[np.ndarray, np.ndarray]:
    baseline = median_filter(y, size=window, mode="nearest")
    hp = y - baseline
    scale = float(np.max(np.abs(hp)))
    if scale == 0:
        return np.zeros(0), np.zeros(0)
    # sub-Doppler features are transmission peaks on the Doppler dip
    idx, props = find_peaks(hp, prominence=prominence * scale)
    return np.array([_parabolic(hp, int(i)) for i in idx]), props["prominences"]


def detect_sas_anchors(
    sas: RawTrace,
    lines: Sequence[dict],
    approx_hz_per_sample: float | None = None,
    tol: float = 0.10,
    prominence: float = 0.2,
    window: int = 31,
) -> list[Anchor]:
    """Locate SAS features and assign them to tabulated reference lines.

    Assignments are monotone matchings of the detected features to the sorted
    line table; a matching is accepted when every normalised spacing agrees
    with the table within ``tol`` (and, if ``approx_hz_per_sample`` is given,
    the overall scale does too).  Several acceptable matchings raise
    :class:`AmbiguousAssignmentError`.
    """
    pos, prom = _sas_features(sas.values, prominence, window)
    if pos.size < 2:
        raise CalibrationError(f"found {pos.size} SAS feature(s), at least 2 are required")
    table = sorted(lines, key=lambda d: d["frequency_hz"])
    if pos.size > len(table):
        keep = np.sort(np.argsort(prom)[::-1][: len(table)])
        pos = pos[keep]
    freqs = np.array([d["frequency_hz"] for d in table])

    scored = []
    for combo in itertools.combinations(range(len(table)), pos.size):
        f = freqs[list(combo)]
        dx, df = np.diff(pos), np.diff(f)
        dev = 0.0
        if pos.size > 2:
            dev = float(np.max(np.abs((dx / dx.sum()) / (df / df.sum()) - 1)))
        if approx_hz_per_sample is not None:
            dev = max(dev, abs(dx.sum() * approx_hz_per_sample / df.sum() - 1))
        elif pos.size == 2:
            dev = 0.0
        if dev <= tol:
            scored.append((dev, combo))
    if not scored:
        raise CalibrationError("no assignment of SAS features to the line table is consistent")
    if len(scored) > 1:
        cands = [[table[i]["label"] for i in c] for _, c in sorted(scored)]
        raise AmbiguousAssignmentError(f"{len(scored)} consistent SAS assignments: {cands}", cands)
    combo = scored[0][1]
    return [Anchor(float(x), float(table[i]["frequency_hz"]), table[i].get("label", "")) for x, i in zip(pos, combo)]


# --------------------------------------------------------------------------
# frequency map


@dataclass(frozen=True)
class FrequencyMap:
    """Polynomial sample-index -> frequency (Hz) map.

    The polynomial variable is ``u = 2 i / (n_samples - 1) - 1``.
    """

    coefficients: np.ndarray
    n_samples: int
    fsr_hz: float
    fp_offset_hz: float
    anchor_residuals_hz: np.ndarray
    fp_residual_rms_hz: float
    consistent: bool = True

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def anchor_rms_hz(self) -> float:
        r = np.asarray(self.anchor_residuals_hz)
        return float(np.sqrt(np.mean(r**2))) if r.size else 0.0

    def _u(self, index):
        return 2.0 * np.asarray(index, dtype=float) / (self.n_samples - 1) - 1.0

    def __call__(self, index):
        return np.polynomial.polynomial.polyval(self._u(index), self.coefficients)

    def derivative(self, index):
        d = np.polynomial.polynomial.polyder(self.coefficients)
        return np.polynomial.polynomial.polyval(self._u(index), d) * 2.0 / (self.n_samples - 1)

    def is_monotone(self, n_check: int = 4096) -> bool:
        d = self.derivative(np.linspace(0, self.n_samples - 1, n_check))
        return bool(np.all(d > 0) or np.all(d < 0))

    def to_dict(self) -> dict:
        return {
            "schema": "groundpop.frequency_map/1",
            "coefficients_hz": [float(c) for c in self.coefficients],
            "variable": "u = 2*index/(n_samples-1) - 1",
            "n_samples": int(self.n_samples),
            "degree": self.degree,
            "fsr_hz": float(self.fsr_hz),
            "fp_offset_hz": float(self.fp_offset_hz),
            "anchor_residuals_hz": [float(r) for r in self.anchor_residuals_hz],
            "anchor_rms_hz": self.anchor_rms_hz,
            "fp_residual_rms_hz": float(self.fp_residual_rms_hz),
            "consistent": bool(self.consistent),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyMap":
        return cls(
            np.array(d["coefficients_hz"], dtype=float),
            int(d["n_samples"]),
            float(d["fsr_hz"]),
            float(d["fp_offset_hz"]),
            np.array(d["anchor_residuals_hz"], dtype=float),
            float(d["fp_residual_rms_hz"]),
            bool(d.get("consistent", True)),
        )


def _fringe_orders(peaks: np.ndarray) -> np.ndarray:
    gaps = np.diff(peaks)
    orders = [0]
    for k, g in enumerate(gaps):
        lo, hi = max(0, k - 3), min(gaps.size, k + 4)
        ref = np.median(gaps[lo:hi])
        orders.append(orders[-1] + max(1, int(round(g / ref))))
    return np.array(orders, dtype=float)


def fit_frequency_axis(
    fp_peaks: Sequence[float],
    anchors: Sequence[Anchor],
    n_samples: int,
    degree: int = 3,
    consistency_fraction: float = 0.1,
) -> FrequencyMap:
    """Joint least-squares fit of the scan polynomial, FP spacing and offset.

    FP fringes must land on an equally spaced comb (free spectral range and
    comb offset are unknowns); anchors must land on their tabulated
    frequencies.  The map is rejected if it is not monotone.
    """
    peaks = np.sort(np.asarray(fp_peaks, dtype=float))
    if len(anchors) < 2:
        raise CalibrationError("at least two SAS anchors are required")
    if degree < 1:
        raise CalibrationError("polynomial degree must be at least 1")
    if peaks.size < 2 and degree > 1:
        raise CalibrationError("at least two FP fringes are required for a nonlinear map")
    orders = _fringe_orders(peaks) if peaks.size else np.zeros(0)

    def u(i):
        return 2.0 * np.asarray(i, dtype=float) / (n_samples - 1) - 1.0

    ncoef = degree + 1
    ax = np.array([a.index for a in anchors])
    af = np.array([a.frequency_hz for a in anchors])
    fp_rows = np.hstack([np.vander(u(peaks), ncoef, increasing=True), -np.ones((peaks.size, 1)), -orders[:, None]])
    an_rows = np.hstack([np.vander(u(ax), ncoef, increasing=True), np.zeros((ax.size, 2))])
    A = np.vstack([fp_rows, an_rows])
    b = np.concatenate([np.zeros(peaks.size), af])
    col = np.linalg.norm(A, axis=0)
    col[col == 0] = 1.0
    sol, *_ = np.linalg.lstsq(A / col, b, rcond=None)
    sol = sol / col
    coef, offset, fsr = sol[:ncoef], sol[ncoef], sol[ncoef + 1]
    if peaks.size < 2:
        fsr = np.nan
    fp_res = fp_rows @ sol if peaks.size else np.zeros(0)
    an_res = an_rows @ sol - af
    fp_rms = float(np.sqrt(np.mean(fp_res**2))) if fp_res.size else 0.0
    m = FrequencyMap(coef, n_samples, float(fsr), float(offset), an_res, fp_rms)
    if not m.is_monotone():
        raise CalibrationError(
            f"fitted frequency map is not monotone (degree {degree}, anchor rms {m.anchor_rms_hz / 1e6:.1f} MHz)"
        )
    ok = np.isfinite(fsr) and m.anchor_rms_hz < consistency_fraction * abs(fsr)
    if not ok:
        warnings.warn(
            f"anchor residual rms {m.anchor_rms_hz / 1e6:.1f} MHz is large compared with the FSR",
            UserWarning,
            stacklevel=2,
        )
    return FrequencyMap(coef, n_samples, float(fsr), float(offset), an_res, fp_rms, bool(ok))


def _edge_baseline(values: np.ndarray, edge_fraction: float) -> np.ndarray:
    n = values.size
    k = max(2, int(round(edge_fraction * n)))
    idx = np.concatenate([np.arange(k), np.arange(n - k, n)])
    c = np.polyfit(idx.astype(float), values[idx], 1)
    return np.polyval(c, np.arange(n, dtype=float))


def apply_map(
    fmap: FrequencyMap,
    probe: RawTrace,
    path_length: float,
    q: int = 1,
    grid: np.ndarray | None = None,
    baseline: np.ndarray | float | None = None,
    edge_fraction: float = 0.05,
) -> Spectrum:
    """Convert a probe transmission trace to absorption on a uniform frequency grid.

    ``I0`` defaults to a straight line through the outermost ``edge_fraction``
    of samples at each end of the scan.
    """
    if not fmap.is_monotone():
        raise CalibrationError("frequency map is not monotone")
    if not path_length > 0:
        raise CalibrationError("path length must be positive")
    I = probe.values
    if np.any(I <= 0):
        raise CalibrationError("probe trace has zero or negative transmission samples")
    I0 = _edge_baseline(I, edge_fraction) if baseline is None else np.broadcast_to(np.asarray(baseline, float), I.shape)
    if np.any(I0 <= 0):
        raise CalibrationError("baseline intensity must be positive")
    alpha = -np.log(I / I0) / path_length
    f = fmap(np.arange(I.size))
    if f[-1] < f[0]:
        f, alpha = f[::-1], alpha[::-1]
    if grid is None:
        grid = np.linspace(f[0], f[-1], I.size)
    grid = np.asarray(grid, dtype=float)
    return Spectrum(grid, np.interp(grid, f, alpha), q)


def calibrate(
    bundle: RawBundle,
    lines: Sequence[dict],
    degree: int = 3,
    path_length: float | None = None,
    q: int | None = None,
    approx_hz_per_sample: float | None = None,
) -> tuple[FrequencyMap, Spectrum | None]:
    """FP + SAS calibration of one raw bundle; returns the map and, if a probe
    channel is present, the calibrated spectrum."""
    if bundle.fp is None:
        raise CalibrationError("raw bundle has no FP channel")
    if bundle.sas is None:
        raise CalibrationError("raw bundle has no SAS channel")
    peaks = detect_fp_peaks(bundle.fp)
    anchors = detect_sas_anchors(bundle.sas, lines, approx_hz_per_sample=approx_hz_per_sample)
    fmap = fit_frequency_axis(peaks, anchors, bundle.n_samples, degree=degree)
    spec = None
    if bundle.probe is not None:
        L = path_length if path_length is not None else float(bundle.meta.get("path_length_cm", 5.0))
        qq = q if q is not None else int(bundle.meta.get("q", 1))
        spec = apply_map(fmap, bundle.probe, L, q=qq)
    return fmap, spec


# --------------------------------------------------------------------------
# synthetic raw data


@dataclass(frozen=True)
class ScanTruth:
    """Ground-truth scan: ``f(i) = start + span * (x + chirp x^2) / (1 + chirp)``, x = i/(n-1)."""

    n_samples: int = 2500
    start_hz: float = -5.5e9
    span_hz: float = 12e9
    chirp: float = 0.1

    def frequencies(self, index=None) -> np.ndarray:
        i = np.arange(self.n_samples, dtype=float) if index is None else np.asarray(index, dtype=float)
        x = i / (self.n_samples - 1)
        return self.start_hz + self.span_hz * (x + self.chirp * x * x) / (1 + self.chirp)


def _airy(f, fsr, finesse, phase_hz):
    coef = (2 * finesse / np.pi) ** 2
    return 1.0 / (1.0 + coef * np.sin(np.pi * (f - phase_hz) / fsr) ** 2)


def generate_raw_bundle(
    truth: ScanTruth,
    lines: Sequence[dict],
    alpha_fn=None,
    path_length: float = 5.0,
    q: int = 1,
    fsr_hz: float = 400e6,
    finesse: float = 12.0,
    fp_phase_hz: float = 37e6,
    sas_width_hz: float = 18e6,
    sas_doppler_fwhm_hz: float = 500e6,
    noise: float = 0.0,
    seed: int | None = None,
    fp_slope: float = 0.0,
) -> RawBundle:
    """Simulated photodiode channels for a scan with known frequency map.

    ``alpha_fn(f)`` gives the probe absorption coefficient (1/cm) at
    frequencies ``f``; the probe channel is ``I0(i) exp(-alpha L)`` with a
    slowly ramping ``I0``.
    """
    rng = np.random.default_rng(seed)
    f = truth.frequencies()
    n = truth.n_samples
    i = np.arange(n, dtype=float)
    fp = _airy(f, fsr_hz, finesse, fp_phase_hz) + fp_slope * i / n
    centres = np.array([d["frequency_hz"] for d in lines])
    sg = sas_doppler_fwhm_hz / (2 * np.sqrt(2 * np.log(2)))
    hw = 0.5 * sas_width_hz
    od = sum(0.6 * np.exp(-0.5 * ((f - c) / sg) ** 2) for c in centres)
    dips = sum(0.25 * np.exp(-0.5 * ((f - c) / sg) ** 2) * hw**2 / ((f - c) ** 2 + hw**2) for c in centres)
    sas = np.exp(-(od - dips))
    I0 = 1.0 + 0.08 * (i / n - 0.5)
    alpha = np.zeros(n) if alpha_fn is None else np.asarray(alpha_fn(f), dtype=float)
    probe = I0 * np.exp(-alpha * path_length)
    if noise > 0:
        fp = fp + rng.normal(0, noise, n)
        sas = sas + rng.normal(0, noise, n)
        probe = probe + rng.normal(0, noise, n)
    meta = {
        "path_length_cm": path_length,
        "q": q,
        "truth": {"n_samples": n, "start_hz": truth.start_hz, "span_hz": truth.span_hz, "chirp": truth.chirp},
        "fsr_hz": fsr_hz,
    }
    return RawBundle(RawTrace(probe, "probe"), RawTrace(fp, "fp"), RawTrace(sas, "sas"), meta)
