"""Area-normalised Voigt profiles.

Widths are full widths at half maximum in Hz: ``gamma`` for the Lorentzian
(homogeneous) part and ``sigma_fwhm`` for the Gaussian (inhomogeneous) part.
The profile is normalised per Hz of ordinary frequency.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import wofz

__all__ = [
    "VoigtParams",
    "voigt",
    "voigt_batch",
    "lorentzian",
    "gaussian",
    "voigt_fwhm_estimate",
    "FWHM_PER_STD",
]

FWHM_PER_STD = 2.0 * np.sqrt(2.0 * np.log(2.0))
_SQRT2 = np.sqrt(2.0)
_SQRT2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class VoigtParams:
    gamma: float
    sigma_fwhm: float
    center: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and np.isfinite(self.sigma_fwhm)):
            raise ValueError("Voigt widths must be finite")
        if self.gamma < 0 or self.sigma_fwhm < 0:
            raise ValueError(f"Voigt widths must be non-negative, got gamma={self.gamma}, sigma={self.sigma_fwhm}")
        if self.gamma == 0 and self.sigma_fwhm == 0:
            raise ValueError("at least one of gamma and sigma_fwhm must be positive")

    @property
    def sigma_std(self) -> float:
        return self.sigma_fwhm / FWHM_PER_STD

    @property
    def gamma_hwhm(self) -> float:
        return 0.5 * self.gamma

    def shifted(self, center: float) -> "VoigtParams":
        return replace(self, center=center)

    @classmethod
    def from_hwhm_and_std(cls, gamma_hwhm: float, sigma_std: float, center: float = 0.0) -> "VoigtParams":
        """Build from a Lorentzian half width and a Gaussian standard deviation."""
        return cls(2.0 * gamma_hwhm, sigma_std * FWHM_PER_STD, center)


def lorentzian(x, fwhm: float):
    hw = 0.5 * fwhm
    return (hw / np.pi) / (np.asarray(x, dtype=float) ** 2 + hw * hw)


def gaussian(x, fwhm: float):
    s = fwhm / FWHM_PER_STD
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / s) ** 2) / (s * _SQRT2PI)


def _profile(x: np.ndarray, p: VoigtParams) -> np.ndarray:
    if p.sigma_fwhm == 0:
        return lorentzian(x, p.gamma)
    if p.gamma == 0:
        return gaussian(x, p.sigma_fwhm)
    s = p.sigma_std
    z = (x + 1j * p.gamma_hwhm) / (s * _SQRT2)
    return wofz(z).real / (s * _SQRT2PI)


def voigt(omega, p: VoigtParams):
    """Voigt profile value(s) at frequency ``omega`` (Hz); units 1/Hz."""
    x = np.asarray(omega, dtype=float) - p.center
    out = _profile(np.atleast_1d(x), p)
    return float(out[0]) if np.ndim(omega) == 0 else out.reshape(np.shape(x))


def voigt_batch(axis, p: VoigtParams) -> np.ndarray:
    """Sample the profile on a monotone frequency grid."""
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1:
        raise ValueError("frequency axis must be one-dimensional")
    if axis.size > 1:
        d = np.diff(axis)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("frequency axis must be strictly monotone")
    return _profile(axis - p.center, p)


def voigt_fwhm_estimate(p: VoigtParams) -> float:
    """Olivero-Longbothum approximation of the total FWHM (about 0.02% accurate)."""
    fl, fg = p.gamma, p.sigma_fwhm
    return 0.5346 * fl + np.sqrt(0.2166 * fl * fl + fg * fg)
