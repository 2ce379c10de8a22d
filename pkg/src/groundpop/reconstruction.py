"""Spectra -> ground-state populations.

The main route fits the summed hyperfine line strengths (xi) of
Zeeman-degenerate spectra and inverts them manifold by manifold; the
alternative route regresses all sublevel populations at once through the
pseudoinverse of the full coupling matrix.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from .forward import Q_ISOTROPIC, CouplingMatrix, ProbeConfig, Spectrum, coupling_matrix
from .lineshape import VoigtParams, voigt_batch
from .nnls import least_distance, nnls
from .structure import GroundState, LevelScheme, absorption_scale

__all__ = [
    "F1_INVERSE",
    "PinvResult",
    "ConditioningReport",
    "XiFitResult",
    "F2Estimate",
    "DensityEstimate",
    "ReconstructionOptions",
    "ReconstructionReport",
    "ReconstructionError",
    "XiFitError",
    "InconsistentDataWarning",
    "TruncatedScanWarning",
    "solve_pseudoinverse",
    "conditioning_report",
    "fit_xi",
    "invert_f1",
    "invert_f1_lstsq",
    "estimate_f2_nnls",
    "estimate_density",
    "reconstruct",
]

# Exact inverse of the (F'=1,+), (F'=2,+), (F'=1,-) rows of the Rb-87 D1 F=1
# coupling matrix, acting on (xi_1^{1,+}, xi_1^{2,+}, xi_1^{1,-}).
F1_INVERSE = tuple(
    tuple(Fraction(3 * v) for v in row) for row in ((3, 1, -6), (1, -1, 6), (-1, 1, -2))
)
_F1_INVERSE_F = np.array(F1_INVERSE, dtype=float)


class ReconstructionError(RuntimeError):
    """A pipeline stage failed; ``stage`` names which one."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class XiFitError(RuntimeError):
    pass


class InconsistentDataWarning(UserWarning):
    pass


class TruncatedScanWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# pseudoinverse and conditioning


@dataclass(frozen=True)
class PinvResult:
    p: np.ndarray
    residual_norm: float
    singular_values: np.ndarray
    rank: int
    rcond: float


def _matrix(C) -> np.ndarray:
    return C.matrix if isinstance(C, CouplingMatrix) else np.asarray(C, dtype=float)


def solve_pseudoinverse(C, alpha, rcond: float = 1e-10, weights=None) -> PinvResult:
    """Least-squares populations ``P = C^+ alpha`` via a truncated SVD.

    Singular values below ``rcond * s_max`` are discarded, so in rank-deficient
    cases the minimum-norm solution is returned.
    """
    A = _matrix(C)
    b = np.asarray(alpha, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != b.size:
        raise ValueError(f"shape mismatch: C {A.shape}, alpha {b.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("coupling matrix must be finite")
    if not np.any(A):
        raise ValueError("coupling matrix is identically zero")
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=float))
        A, b = A * w[:, None], b * w
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rcond * s[0]
    coef = (U[:, keep].T @ b) / s[keep]
    p = Vt[keep].T @ coef
    return PinvResult(p, float(np.linalg.norm(A @ p - b)), s, int(keep.sum()), rcond)


@dataclass(frozen=True)
class ConditioningReport:
    singular_values: np.ndarray
    rank: int
    null_dimension: int
    condition_number: float
    regime: str
    threshold: float

    @property
    def gram_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of C^T C (squares of the singular values)."""
        return self.singular_values**2

    def small_count(self) -> int:
        return self.null_dimension


def conditioning_report(C, threshold: float = 1e-6, polarizations=None) -> ConditioningReport:
    """Singular-value diagnostics of a coupling matrix.

    Regimes: ``resolved`` when every column is identifiable (full column rank);
    ``degenerate`` when the rank does not exceed the number of probe
    polarizations, i.e. each probe sees a single indistinguishable line shape;
    ``intermediate`` otherwise (e.g. hyperfine-resolved, Zeeman-degenerate).
    """
    A = _matrix(C)
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return ConditioningReport(s, 0, A.shape[1], np.inf, "degenerate", threshold)
    rank = int(np.sum(s > threshold * s[0]))
    ncol = A.shape[1]
    if polarizations is None:
        polarizations = np.unique(C.polarizations) if isinstance(C, CouplingMatrix) else [0]
    npol = len(polarizations)
    if rank == ncol:
        regime = "resolved"
    elif rank <= npol:
        regime = "degenerate"
    else:
        regime = "intermediate"
    cond = float(s[0] / s[rank - 1]) if rank == ncol else np.inf
    return ConditioningReport(s, rank, ncol - rank, cond, regime, threshold)


# --------------------------------------------------------------------------
# xi fit (variable projection over the Voigt widths)


@dataclass(frozen=True)
class XiFitResult:
    """Fitted hyperfine line amplitudes.

    ``amplitudes[(2F, 2F', q)]`` is the area of the F -> F' line in the q
    spectrum, i.e. ``n0 * scale * xi``.
    """

    amplitudes: dict
    stderr: dict
    voigt: VoigtParams
    pair_voigt: dict | None
    residual_norm: float
    nfev: int
    success: bool

    def normalization(self) -> float:
        """``n0 * scale`` implied by sum(P) = 1 through the isotropic sum rule."""
        tot = sum(v for (tf, tfp, q), v in self.amplitudes.items() if q in (1, -1))
        return tot / Q_ISOTROPIC

    def xi(self, normalization: float | None = None) -> dict:
        norm = self.normalization() if normalization is None else normalization
        return {k: v / norm for k, v in self.amplitudes.items()}

    def xi_stderr(self, normalization: float | None = None) -> dict:
        norm = self.normalization() if normalization is None else normalization
        return {k: v / norm for k, v in self.stderr.items()}


def _pair_profiles(axis, scheme, pairs, widths) -> np.ndarray:
    cols = []
    for pair, (g, s) in zip(pairs, widths):
        cols.append(voigt_batch(axis, VoigtParams(g, s, scheme.pair_frequency(*pair))))
    return np.column_stack(cols)


def fit_xi(
    spectra: Sequence[Spectrum],
    scheme: LevelScheme,
    voigt: VoigtParams | None = None,
    init: tuple[float, float] | None = None,
    shared_widths: bool = True,
    weights: Mapping[int, np.ndarray] | None = None,
    max_nfev: int = 400,
    fallback_threshold: float = 0.05,
) -> XiFitResult:
    """Fit every spectrum as a sum of Zeeman-degenerate hyperfine Voigt lines.

    The line amplitudes are solved exactly (non-negative least squares) for
    any trial widths; only the widths are searched nonlinearly.  If ``voigt``
    is given the widths are held fixed.
    """
    spectra = list(spectra)
    if not spectra:
        raise XiFitError("no spectra to fit")
    pairs = scheme.hyperfine_pairs()
    total = np.sqrt(sum(float(np.sum(s.alpha**2)) for s in spectra))
    if not np.isfinite(total) or total == 0:
        raise XiFitError("degenerate fit: spectra carry no absorption")
    wts = [np.sqrt(np.asarray(weights[s.q], dtype=float)) if weights and s.q in weights else None for s in spectra]
    npair = len(pairs)

    def widths_of(theta):
        e = np.exp(theta)
        if shared_widths:
            return [(e[0], e[1])] * npair
        return [(e[2 * i], e[2 * i + 1]) for i in range(npair)]

    def solve_linear(theta):
        widths = widths_of(theta)
        amps, res, designs = [], [], []
        cache = {}
        for s, w in zip(spectra, wts):
            key = id(s.axis)
            if key not in cache:
                cache[key] = _pair_profiles(s.axis, scheme, pairs, widths)
            X = cache[key]
            Xw, yw = (X, s.alpha) if w is None else (X * w[:, None], s.alpha * w)
            a, _ = nnls(Xw, yw)
            amps.append(a)
            res.append(Xw @ a - yw)
            designs.append(Xw)
        return amps, np.concatenate(res), designs

    def residual(theta):
        return solve_linear(theta)[1] / total

    if voigt is not None:
        theta = np.log([voigt.gamma, voigt.sigma_fwhm] * (1 if shared_widths else npair))
        nfev, success = 1, True
    else:
        span = max(float(s.axis[-1] - s.axis[0]) for s in spectra)
        base = np.array(init if init is not None else (span / 40, span / 40), dtype=float)
        best = None
        for factor in (1.0, 1 / 3, 3.0):
            x0 = np.log(base * factor)
            if not shared_widths:
                x0 = np.tile(x0, npair)
            try:
                r = least_squares(residual, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                  max_nfev=max_nfev, x_scale=1.0)
            except (ValueError, FloatingPointError):
                continue
            if best is None or r.cost < best.cost:
                best = r
            if r.success and np.sqrt(2 * r.cost) < fallback_threshold:
                break
        if best is None or not np.all(np.isfinite(best.x)):
            raise XiFitError("line-width search did not converge")
        if not best.success and best.status == 0:
            raise XiFitError(f"line-width search did not converge in {max_nfev} evaluations")
        theta, nfev, success = best.x, int(best.nfev), bool(best.success)

    amps, res, designs = solve_linear(theta)
    rnorm = float(np.linalg.norm(res))
    amplitudes, stderr = {}, {}
    for s, w, a, X in zip(spectra, wts, amps, designs):
        dof = max(X.shape[0] - X.shape[1] - (0 if voigt is not None else len(theta)), 1)
        r = X @ a - (s.alpha if w is None else s.alpha * w)
        sig2 = float(r @ r) / dof
        cov = sig2 * np.linalg.pinv(X.T @ X)
        for i, pair in enumerate(pairs):
            key = (pair[0], pair[1], s.q)
            amplitudes[key] = amplitudes.get(key, 0.0) + float(a[i])
            stderr[key] = float(np.sqrt(max(cov[i, i], 0.0)))
    if max(amplitudes.values()) <= 1e-12 * max(float(np.max(np.abs(s.alpha))) for s in spectra):
        raise XiFitError("degenerate fit: all line amplitudes vanish")
    widths = widths_of(theta)
    shared = VoigtParams(*widths[0])
    pair_voigt = None if shared_widths else {p: VoigtParams(g, sg) for p, (g, sg) in zip(pairs, widths)}
    return XiFitResult(amplitudes, stderr, shared, pair_voigt, rnorm, nfev, success)


# --------------------------------------------------------------------------
# manifold inversions


def invert_f1(xi_11_plus: float, xi_12_plus: float, xi_11_minus: float, tol: float = 1e-9) -> np.ndarray:
    """Exact F=1 populations (mF = -1, 0, +1) from three summed line strengths.

    Arguments are xi_F^{F',q} for (F=1, F'=1, +), (F=1, F'=2, +) and
    (F=1, F'=1, -).  Negative results beyond ``tol`` raise an
    :class:`InconsistentDataWarning`.
    """
    p = _F1_INVERSE_F @ np.array([xi_11_plus, xi_12_plus, xi_11_minus], dtype=float)
    if np.any(p < -tol):
        warnings.warn(f"F=1 inversion gave negative populations {p}", InconsistentDataWarning, stacklevel=2)
    return p


def invert_f1_lstsq(xi_f1: Sequence[float], scheme: LevelScheme) -> np.ndarray:
    """F=1 populations from all four sigma+/- line strengths by least squares."""
    A = scheme.table.xi_matrix(2)
    return np.linalg.lstsq(A, np.asarray(xi_f1, dtype=float), rcond=None)[0]


@dataclass(frozen=True)
class F2Estimate:
    populations: np.ndarray  # mF = -2..+2
    total: float
    reliable: bool
    null_dimension: int
    residual_norm: float
    dominant_state: int  # 2mF of the heaviest sublevel

    @property
    def stretched_fraction(self) -> float:
        if self.total <= 0:
            return 0.0
        return float(max(self.populations[0], self.populations[-1]) / self.populations.sum())


def _min_norm_point(A, x0, rank):
    """Smallest-norm p >= 0 with A p = A x0, or ``x0`` if that fails numerically."""
    _, _, Vt = np.linalg.svd(A)
    N = Vt[rank:].T
    if N.shape[1] == 0:
        return x0
    b = A @ x0
    p_mn = np.linalg.pinv(A) @ b
    z = least_distance(N, -p_mn)
    if z is None:
        return x0
    p = p_mn + N @ z
    scale = max(float(np.abs(x0).max()), 1e-300)
    if p.min() < -1e-9 * scale or np.linalg.norm(A @ p - b) > 1e-9 * max(np.linalg.norm(b), 1e-300):
        return x0
    return np.clip(p, 0.0, None)


def estimate_f2_nnls(
    xi_f2: Sequence[float],
    scheme: LevelScheme,
    reliable_fraction: float = 0.9,
    selection: str = "min_norm",
) -> F2Estimate:
    """Non-negative estimate of the F=2 sublevel populations.

    Only three combinations of the five populations are identified, so the
    non-negative least-squares minimiser is generally a set.  With
    ``selection="min_norm"`` the point of smallest norm in that set is
    returned (uniform populations map back to themselves); ``"first"`` keeps
    the raw active-set vertex.  The estimate is flagged reliable when at least
    ``reliable_fraction`` of the weight sits on one stretched state.  The
    manifold total is always identified and is returned exactly.
    """
    if selection not in ("min_norm", "first"):
        raise ValueError(f"unknown selection {selection!r}")
    A = scheme.table.xi_matrix(4)
    b = np.asarray(xi_f2, dtype=float)
    if b.shape != (A.shape[0],):
        raise ValueError(f"expected {A.shape[0]} xi values, got {b.shape}")
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    null_dim = A.shape[1] - rank
    total = float(b.sum() / Q_ISOTROPIC)
    if not np.any(b):
        return F2Estimate(np.zeros(A.shape[1]), 0.0, False, null_dim, 0.0, 0)
    x, rnorm = nnls(A, b)
    if selection == "min_norm":
        x = _min_norm_point(A, x, rank)
        rnorm = float(np.linalg.norm(A @ x - b))
    frac = max(x[0], x[-1]) / x.sum() if x.sum() > 0 else 0.0
    tm = [g.twice_m for g in scheme.ground_states() if g.twice_f == 4]
    return F2Estimate(x, total, bool(frac >= reliable_fraction), null_dim, rnorm, int(tm[int(np.argmax(x))]))


# --------------------------------------------------------------------------
# density


@dataclass(frozen=True)
class DensityEstimate:
    n0: float
    integral: float
    truncation_bias: float  # estimated missing area, same units as integral

    @property
    def relative_bias(self) -> float:
        return self.truncation_bias / self.integral if self.integral else np.inf


def _trapezoid(y, x) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def estimate_density(
    spectra: Sequence[Spectrum],
    scheme: LevelScheme,
    wing_correction: bool = False,
    warn_above: float = 0.01,
) -> DensityEstimate:
    """Atomic density from the area of the sigma+ plus sigma- spectra.

    The area of each truncated Lorentzian wing is estimated as
    ``alpha_edge * |edge - nearest line|`` and optionally added back.
    """
    qs = {s.q for s in spectra}
    if not {1, -1} <= qs:
        raise ValueError("density estimate needs both sigma+ and sigma- spectra")
    centres = np.array([scheme.pair_frequency(*p) for p in scheme.hyperfine_pairs()])
    integral, bias = 0.0, 0.0
    for s in spectra:
        if s.q not in (1, -1):
            continue
        integral += _trapezoid(s.alpha, s.axis)
        for edge_f, edge_a in ((s.axis[0], s.alpha[0]), (s.axis[-1], s.alpha[-1])):
            d = np.min(np.abs(centres - edge_f))
            bias += max(float(edge_a), 0.0) * d
    if integral > 0 and bias / integral > warn_above and not wing_correction:
        warnings.warn(
            f"scan truncates the line wings; estimated density bias {100 * bias / integral:.2f}%",
            TruncatedScanWarning,
            stacklevel=2,
        )
    area = integral + (bias if wing_correction else 0.0)
    n0 = area / (Q_ISOTROPIC * absorption_scale(scheme))
    return DensityEstimate(n0, integral, bias)


# --------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class ReconstructionOptions:
    method: str = "xi"  # "xi" (manifold inversion) or "pinv" (full regression)
    nnls_f2: bool = True
    voigt: VoigtParams | None = None
    shared_widths: bool = True
    rcond: float = 1e-10
    weights: Mapping[int, np.ndarray] | None = None
    wing_correction: bool = False
    condition_threshold: float = 1e-6


@dataclass
class ReconstructionReport:
    f1: np.ndarray
    f2_total: float
    f2_estimate: F2Estimate | None
    populations: np.ndarray | None
    population_sum_raw: float
    n0: float
    n0_integral: float
    density_bias: float
    voigt: VoigtParams
    xi: dict
    xi_stderr: dict
    singular_values: np.ndarray
    rank: int
    regime: str
    residual_norm: float
    method: str
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def key(k):
            tf, tfp, q = k
            return f"F={tf // 2},F'={tfp // 2},q={q:+d}"

        est = self.f2_estimate
        return {
            "method": self.method,
            "populations": None if self.populations is None else [float(v) for v in self.populations],
            "f1": [float(v) for v in self.f1],
            "f2_total": float(self.f2_total),
            "f2_estimate": None if est is None else {
                "populations": [float(v) for v in est.populations],
                "reliable": est.reliable,
                "null_dimension": est.null_dimension,
                "residual_norm": est.residual_norm,
                "dominant_2mF": est.dominant_state,
            },
            "population_sum_raw": float(self.population_sum_raw),
            "n0_per_cm3": float(self.n0),
            "n0_integral_per_cm3": float(self.n0_integral),
            "density_relative_bias": float(self.density_bias),
            "voigt": {"gamma_hz": self.voigt.gamma, "sigma_fwhm_hz": self.voigt.sigma_fwhm},
            "xi": {key(k): float(v) for k, v in sorted(self.xi.items())},
            "xi_stderr": {key(k): float(v) for k, v in sorted(self.xi_stderr.items())},
            "singular_values": [float(v) for v in self.singular_values],
            "rank": int(self.rank),
            "regime": self.regime,
            "residual_norm": float(self.residual_norm),
            "flags": list(self.flags),
        }


def _as_spectra(spectra) -> list[Spectrum]:
    if isinstance(spectra, Mapping):
        return list(spectra.values())
    return list(spectra)


def reconstruct(spectra, scheme: LevelScheme, options: ReconstructionOptions = ReconstructionOptions()) -> ReconstructionReport:
    """Full population reconstruction from calibrated sigma+/sigma- spectra."""
    spectra = _as_spectra(spectra)
    if options.method not in ("xi", "pinv"):
        raise ReconstructionError("input", f"unknown method {options.method!r}")
    qs = {s.q for s in spectra}
    if not {1, -1} <= qs:
        raise ReconstructionError("input", "both sigma+ and sigma- spectra are required")
    flags: list[str] = []
    scale = absorption_scale(scheme)

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            dens = estimate_density(spectra, scheme, wing_correction=options.wing_correction)
        for w in caught:
            flags.append(f"density: {w.message}")
    except Exception as exc:  # noqa: BLE001 - relabel with stage
        raise ReconstructionError("density", str(exc)) from exc

    try:
        fit = fit_xi(spectra, scheme, voigt=options.voigt, shared_widths=options.shared_widths, weights=options.weights)
    except XiFitError as exc:
        raise ReconstructionError("fit_xi", str(exc)) from exc
    if not fit.success:
        flags.append("fit_xi: width search stopped before full convergence")

    norm = fit.normalization()
    xi = fit.xi(norm)
    xi_err = fit.xi_stderr(norm)
    n0 = norm / scale

    probes = [
        ProbeConfig(s.q, s.axis, n0, fit.voigt) for s in spectra
    ]
    C = coupling_matrix(probes, scheme)
    cond = conditioning_report(C, options.condition_threshold)
    states = scheme.ground_states()
    f1_idx = [i for i, g in enumerate(states) if g.twice_f == 2]
    f2_idx = [i for i, g in enumerate(states) if g.twice_f == 4]
    xi_f2 = [xi.get((4, tfp, q), 0.0) for q in (1, -1) for tfp in (2, 4)]

    if options.method == "xi":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            f1 = invert_f1(xi[(2, 2, 1)], xi[(2, 4, 1)], xi[(2, 2, -1)])
        for w in caught:
            flags.append(f"invert_f1: {w.message}")
        f2_total = float(sum(xi_f2) / Q_ISOTROPIC)
    else:
        alpha = np.concatenate([s.alpha for s in spectra if s.axis.size])
        pr = solve_pseudoinverse(C, alpha, rcond=options.rcond)
        f1 = pr.p[f1_idx]
        f2_total = float(pr.p[f2_idx].sum())
        if pr.rank < len(states):
            flags.append(f"pinv: rank {pr.rank} < {len(states)}; F=2 detail is the minimum-norm solution")

    f2_est = estimate_f2_nnls(xi_f2, scheme) if options.nnls_f2 else None
    raw_sum = float(f1.sum() + f2_total)
    if raw_sum <= 0:
        raise ReconstructionError("normalize", "reconstructed populations do not have a positive sum")
    f1n = f1 / raw_sum
    f2n = f2_total / raw_sum
    populations = None
    if f2_est is not None:
        populations = np.zeros(len(states))
        populations[f1_idx] = f1n
        est = f2_est.populations
        populations[f2_idx] = est * (f2n / est.sum()) if est.sum() > 0 else 0.0
        if not f2_est.reliable:
            flags.append("f2: NNLS detail is not identified (no dominant stretched state)")

    return ReconstructionReport(
        f1=f1n,
        f2_total=f2n,
        f2_estimate=f2_est,
        populations=populations,
        population_sum_raw=raw_sum,
        n0=n0,
        n0_integral=dens.n0,
        density_bias=dens.relative_bias,
        voigt=fit.voigt,
        xi=xi,
        xi_stderr=xi_err,
        singular_values=cond.singular_values,
        rank=cond.rank,
        regime=cond.regime,
        residual_norm=fit.residual_norm,
        method=options.method,
        flags=flags,
    )
