import warnings
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_population
from groundpop.forward import (
    PopulationDistribution,
    ProbeConfig,
    Spectrum,
    add_noise,
    coupling_matrix,
    linear_zeeman_offsets,
    reduced_xi,
    synthesize,
    xi_vector,
)
from groundpop.lineshape import VoigtParams
from groundpop.reconstruction import (
    F1_INVERSE,
    InconsistentDataWarning,
    ReconstructionError,
    ReconstructionOptions,
    TruncatedScanWarning,
    XiFitError,
    conditioning_report,
    estimate_density,
    estimate_f2_nnls,
    fit_xi,
    invert_f1,
    invert_f1_lstsq,
    reconstruct,
    solve_pseudoinverse,
)
from groundpop.structure import GroundState

seeds = st.integers(0, 2**32 - 1)


def _spectra(P, axis, voigt, n0=1e10, qs=(1, -1), **kw):
    return [synthesize(P, ProbeConfig(q, axis, n0, voigt, **kw)) for q in qs]


def _xi_f2(xi):
    return [xi[(4, tfp, q)] for q in (1, -1) for tfp in (2, 4)]


@pytest.fixture(scope="module")
def resolved(scheme):
    off = linear_zeeman_offsets(scheme, 300.0)
    axis = np.linspace(-6e9, 7e9, 20001)
    v = VoigtParams(1e6, 3e6)
    cfgs = [ProbeConfig(q, axis, 1e10, v, line_offset=off) for q in (1, -1)]
    return cfgs, coupling_matrix(cfgs, scheme)


# pseudoinverse


def test_pinv_resolved_round_trip(scheme, resolved):
    cfgs, C = resolved
    rng = np.random.default_rng(0)
    for _ in range(5):
        P = random_population(scheme, rng)
        alpha = np.concatenate([synthesize(P, c).alpha for c in cfgs])
        r = solve_pseudoinverse(C, alpha)
        assert r.rank == 8
        np.testing.assert_allclose(r.p, P.p, atol=1e-9)
        # normal-equation form agrees
        M = C.matrix
        ne = np.linalg.solve(M.T @ M, M.T @ alpha)
        np.testing.assert_allclose(ne, P.p, atol=1e-8)


def test_pinv_is_linear(scheme, resolved):
    cfgs, C = resolved
    P = random_population(scheme, np.random.default_rng(1))
    alpha = np.concatenate([synthesize(P, c).alpha for c in cfgs])
    np.testing.assert_allclose(solve_pseudoinverse(C, 3.5 * alpha).p, 3.5 * solve_pseudoinverse(C, alpha).p, rtol=1e-10)


def test_pinv_degenerate_limit_and_errors(scheme, voigt):
    axis = np.linspace(-3e9, 3e9, 801)
    s0 = scheme.with_scaled_splittings(0.0)
    C = coupling_matrix([ProbeConfig(q, axis, 1e10, voigt) for q in (1, -1)], s0)
    r = solve_pseudoinverse(C, C @ PopulationDistribution.thermal(s0))
    # every line shares one centre: one profile per polarization, rank 2
    assert r.rank == 2
    assert int(np.sum(r.singular_values < 1e-6 * r.singular_values[0])) == 6
    with pytest.raises(ValueError, match="zero"):
        solve_pseudoinverse(np.zeros((4, 8)), np.zeros(4))
    with pytest.raises(ValueError):
        solve_pseudoinverse(np.ones((4, 8)), np.zeros(3))


def test_conditioning_regimes(scheme, voigt, axis, resolved):
    _, Cr = resolved
    rep = conditioning_report(Cr)
    assert (rep.regime, rep.rank) == ("resolved", 8)
    assert rep.condition_number < 1e3
    C = coupling_matrix([ProbeConfig(q, axis, 1e10, voigt) for q in (1, -1)], scheme)
    rep = conditioning_report(C)
    assert rep.regime == "intermediate"
    assert rep.small_count() == 2
    np.testing.assert_allclose(rep.gram_eigenvalues, rep.singular_values**2)
    s0 = scheme.with_scaled_splittings(0.0)
    C0 = coupling_matrix([ProbeConfig(q, axis, 1e10, voigt) for q in (1, -1)], s0)
    assert conditioning_report(C0).regime == "degenerate"


def test_f2_block_rank_three_with_pi(scheme, voigt, axis):
    C = coupling_matrix([ProbeConfig(q, axis, 1e10, voigt) for q in (1, -1, 0)], scheme)
    f2 = [i for i, g in enumerate(scheme.ground_states()) if g.twice_f == 4]
    rep = conditioning_report(C.matrix[:, f2], polarizations=(1, -1, 0))
    assert rep.rank == 3


# xi fit


def test_fit_xi_with_known_widths(scheme, axis, voigt):
    P = random_population(scheme, np.random.default_rng(2))
    fit = fit_xi(_spectra(P, axis, voigt), scheme, voigt=voigt)
    xi = fit.xi()
    for q in (1, -1):
        for (tf, tfp), v in reduced_xi(P, q).items():
            assert xi[(tf, tfp, q)] == pytest.approx(v, abs=1e-8)
    assert fit.normalization() == pytest.approx(1e10 * fit.normalization() / 1e10)


def test_fit_xi_free_widths(scheme, axis, voigt):
    P = random_population(scheme, np.random.default_rng(3))
    fit = fit_xi(_spectra(P, axis, voigt), scheme)
    assert fit.voigt.gamma == pytest.approx(voigt.gamma, rel=0.01)
    assert fit.voigt.sigma_fwhm == pytest.approx(voigt.sigma_fwhm, rel=0.01)
    assert all(v >= 0 for v in fit.amplitudes.values())


def test_fit_xi_per_pair_widths(scheme, axis, voigt):
    P = PopulationDistribution.thermal(scheme)
    fit = fit_xi(_spectra(P, axis, voigt), scheme, shared_widths=False)
    for v in fit.pair_voigt.values():
        assert v.gamma == pytest.approx(voigt.gamma, rel=0.02)
        assert v.sigma_fwhm == pytest.approx(voigt.sigma_fwhm, rel=0.02)


def test_fit_xi_zero_spectrum(scheme, axis):
    zero = [Spectrum(axis, np.zeros_like(axis), q) for q in (1, -1)]
    with pytest.raises(XiFitError, match="degenerate"):
        fit_xi(zero, scheme)
    with pytest.raises(XiFitError):
        fit_xi([], scheme)


# F=1


def test_f1_inverse_times_forward_rows_is_identity(scheme):
    E = scheme.table.xi_matrix_exact(2)
    rows = [E[0], E[1], E[2]]
    prod = [[sum(F1_INVERSE[i][k] * rows[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
    assert prod == [[Fr(int(i == j)) for j in range(3)] for i in range(3)]


def test_invert_f1_examples(scheme):
    xi = reduced_xi(PopulationDistribution.thermal(scheme), 1)
    xm = reduced_xi(PopulationDistribution.thermal(scheme), -1)
    np.testing.assert_allclose(invert_f1(xi[(2, 2)], xi[(2, 4)], xm[(2, 2)]), [1 / 8] * 3, atol=1e-15)
    np.testing.assert_allclose(invert_f1(1 / 12, 1 / 4, 1 / 12), [0, 1, 0], atol=1e-15)


@given(seeds)
def test_invert_f1_exact_for_physical_states(seed):
    from groundpop.structure import rb87_d1

    scheme = rb87_d1()
    P = random_population(scheme, np.random.default_rng(seed))
    xp, xm = reduced_xi(P, 1), reduced_xi(P, -1)
    np.testing.assert_allclose(invert_f1(xp[(2, 2)], xp[(2, 4)], xm[(2, 2)]), P.manifold(2), atol=1e-12)
    np.testing.assert_allclose(invert_f1_lstsq(xi_vector(P, 2), scheme), P.manifold(2), atol=1e-12)


def test_invert_f1_warns_on_inconsistent_data():
    with pytest.warns(InconsistentDataWarning):
        invert_f1(0.1, 0.0, 0.0)


# F=2


def test_f2_null_space_is_invisible(scheme):
    A = scheme.table.xi_matrix(4)
    null = np.linalg.svd(A)[2][-2:]
    base = PopulationDistribution.thermal(scheme).p
    f2 = [i for i, g in enumerate(scheme.ground_states()) if g.twice_f == 4]
    for v in null:
        p = base.copy()
        step = v / np.abs(v).max() * 0.1
        p[f2] += step
        assert abs(step.sum()) < 1e-12
        p /= p.sum()
        Q = PopulationDistribution(p, scheme)
        np.testing.assert_allclose(xi_vector(Q, 4), xi_vector(PopulationDistribution(base, scheme), 4), atol=1e-12)


def test_nnls_examples(scheme):
    d = PopulationDistribution.delta(scheme, GroundState.of(2, 2))
    est = estimate_f2_nnls(xi_vector(d, 4), scheme)
    assert est.populations[-1] / est.populations.sum() >= 0.95
    assert est.reliable and est.dominant_state == 4 and est.null_dimension == 2
    p = np.zeros(8)
    p[3:] = 0.2 * 0.7
    p[:3] = 0.1
    u = PopulationDistribution(p, scheme)
    est = estimate_f2_nnls(xi_vector(u, 4), scheme)
    assert est.total == pytest.approx(0.7, abs=1e-6)
    assert est.populations.sum() == pytest.approx(0.7, abs=1e-6)
    assert not est.reliable
    z = estimate_f2_nnls(np.zeros(4), scheme)
    np.testing.assert_array_equal(z.populations, 0.0)
    with pytest.raises(ValueError):
        estimate_f2_nnls(np.zeros(3), scheme)


# density


def test_density_examples(scheme, voigt):
    axis = np.linspace(-20e9, 20e9, 8001)
    P1 = random_population(scheme, np.random.default_rng(4))
    perm = np.random.default_rng(5).permutation(8)
    P2 = PopulationDistribution(P1.p[perm], scheme)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncatedScanWarning)
        a = estimate_density(_spectra(P1, axis, voigt), scheme)
        b = estimate_density(_spectra(P2, axis, voigt), scheme)
        c = estimate_density(_spectra(P1, axis, voigt, n0=2e10), scheme)
        w = estimate_density(_spectra(P1, axis, voigt), scheme, wing_correction=True)
    assert a.n0 == pytest.approx(1e10, rel=5e-3)
    assert b.n0 == pytest.approx(a.n0, rel=1e-3)
    assert c.n0 == pytest.approx(2 * a.n0, rel=1e-12)
    assert abs(w.n0 - 1e10) < abs(a.n0 - 1e10)


def test_density_warns_on_short_scan(scheme, axis, voigt):
    P = PopulationDistribution.thermal(scheme)
    short = np.linspace(-4.5e9, 3.5e9, 1500)
    with pytest.warns(TruncatedScanWarning):
        estimate_density(_spectra(P, short, voigt), scheme)
    with pytest.raises(ValueError):
        estimate_density(_spectra(P, axis, voigt, qs=(1,)), scheme)


# pipeline


def test_reconstruct_thermal(scheme, axis, voigt):
    rep = reconstruct(_spectra(PopulationDistribution.thermal(scheme), axis, voigt), scheme)
    np.testing.assert_allclose(rep.f1, 1 / 8, atol=0.005)
    assert rep.f2_total == pytest.approx(5 / 8, abs=0.005)
    np.testing.assert_allclose(rep.populations, 1 / 8, atol=0.005)
    assert rep.rank == 6 and rep.regime == "intermediate"
    d = rep.to_dict()
    assert d["method"] == "xi" and len(d["singular_values"]) == 8


def test_reconstruct_pumped_state(scheme, axis, voigt):
    p = np.zeros(8)
    p[:3] = [0.01, 0.03, 0.06]
    p[7] = 0.9
    P = PopulationDistribution(p, scheme)
    rep = reconstruct(_spectra(P, axis, voigt), scheme)
    np.testing.assert_allclose(rep.populations, p, atol=0.01)
    assert rep.f2_estimate.reliable
    assert rep.n0 == pytest.approx(1e10, rel=1e-6)


def test_pinv_and_xi_routes_agree(scheme, axis, voigt):
    P = random_population(scheme, np.random.default_rng(7))
    spectra = _spectra(P, axis, voigt)
    a = reconstruct(spectra, scheme)
    b = reconstruct(spectra, scheme, ReconstructionOptions(method="pinv"))
    np.testing.assert_allclose(a.f1, P.manifold(2), atol=1e-6)
    np.testing.assert_allclose(b.f1, a.f1, atol=1e-6)
    assert b.f2_total == pytest.approx(a.f2_total, abs=1e-6)
    assert any("pinv: rank" in f for f in b.flags)


def test_reconstruct_noisy_f1(scheme, axis, voigt):
    errs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        P = random_population(scheme, rng)
        spectra = [add_noise(s, 0.01, seed=seed * 7 + i) for i, s in enumerate(_spectra(P, axis, voigt))]
        rep = reconstruct(spectra, scheme)
        errs.append(np.abs(rep.f1 - P.manifold(2)).max())
    assert np.median(errs) < 0.02


def test_reconstruct_errors(scheme, axis, voigt):
    P = PopulationDistribution.thermal(scheme)
    with pytest.raises(ReconstructionError) as e:
        reconstruct(_spectra(P, axis, voigt, qs=(1,)), scheme)
    assert e.value.stage == "input"
    with pytest.raises(ReconstructionError) as e:
        reconstruct(_spectra(P, axis, voigt), scheme, ReconstructionOptions(method="magic"))
    assert e.value.stage == "input"
    zero = [Spectrum(axis, np.zeros_like(axis), q) for q in (1, -1)]
    with pytest.raises(ReconstructionError) as e:
        reconstruct(zero, scheme)
    assert e.value.stage == "fit_xi"


def test_nnls_selection_modes(scheme):
    xi = xi_vector(PopulationDistribution.thermal(scheme), 4)
    mn = estimate_f2_nnls(xi, scheme)
    first = estimate_f2_nnls(xi, scheme, selection="first")
    np.testing.assert_allclose(mn.populations, 1 / 8, atol=1e-12)
    # both reproduce the data, the raw vertex is just not the smallest one
    A = scheme.table.xi_matrix(4)
    np.testing.assert_allclose(A @ first.populations, xi, atol=1e-14)
    assert np.linalg.norm(mn.populations) < np.linalg.norm(first.populations)
    with pytest.raises(ValueError):
        estimate_f2_nnls(xi, scheme, selection="other")
