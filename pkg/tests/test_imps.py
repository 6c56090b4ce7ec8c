import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from decotopo.couplings import ATCouplings, selfdual_couplings
from decotopo.imps import (CHI_LADDER, build_row_mpo, chi_ladder, entanglement_entropy,
                           expand_mps, fit_central_charge, fixed_point_mps, kappa,
                           mps_correlation_length, onsager_free_energy)
from decotopo.models import (at_model, coupled_model, ising_model, nflavor_model,
                             onsager_critical_coupling)
from decotopo.transfer import build_transfer, sector_correlation_length

CATALAN = 0.915965594177219015


def _exact_ring(m, L):
    t = build_transfer(m, L)
    return t.matrix()


@pytest.mark.parametrize("m", [
    at_model(selfdual_couplings(0.3)),
    at_model(ATCouplings(0.4, 0.05)),
    coupled_model(0.2, 0.3),
    ising_model(0.6),
], ids=["at-sd", "at", "coupled", "ising"])
def test_spin_ring_equals_transfer(m):
    mpo = build_row_mpo(m, "spin")
    for L in (2,) if m.d == 16 else (2, 3, 4):
        ring = mpo.ring(L)
        ref = _exact_ring(m, L)
        assert np.max(np.abs(ring - ref)) < 1e-12 * max(1.0, np.abs(ref).max())


@pytest.mark.parametrize("m", [at_model(selfdual_couplings(0.3)), coupled_model(0.2, 0.45)],
                         ids=["psd", "indefinite"])
def test_symmetric_ring_is_similar(m):
    mpo = build_row_mpo(m)
    L = 3 if m.d == 4 else 2
    ring = mpo.ring(L)
    ref = np.sort_complex(np.linalg.eigvals(_exact_ring(m, L)))
    got = np.sort_complex(np.linalg.eigvals(ring))
    assert_allclose(np.abs(got)[-4:], np.abs(ref)[-4:], rtol=1e-10)
    assert_allclose(ring, ring.T, atol=1e-12 * np.abs(ring).max())


def test_symmetric_form_dtype():
    assert build_row_mpo(at_model(selfdual_couplings(0.3))).dtype == np.float64
    assert build_row_mpo(coupled_model(0.2, 0.45)).dtype == np.complex128


def test_mpo_ranks():
    assert build_row_mpo(at_model(ATCouplings(0.0, 0.0))).D == 1
    assert build_row_mpo(at_model(ATCouplings(0.3, 0.2))).D == 4
    r = build_row_mpo(coupled_model(0.2, 0.3)).rank
    assert 1 <= r <= 16


def test_mpo_form_rejected():
    with pytest.raises(ValueError):
        build_row_mpo(ising_model(0.3), "bogus")


def test_product_weights_give_product_state():
    psi = fixed_point_mps(build_row_mpo(at_model(ATCouplings(0.0, 0.0))), 2)
    assert entanglement_entropy(psi) < 1e-10
    assert_allclose(psi.free_energy, math.log(4.0), rtol=1e-12)


def test_entropy_trivial_spectra():
    assert entanglement_entropy(np.array([1.0])) == 0.0
    assert_allclose(entanglement_entropy(np.array([1, 1]) / math.sqrt(2)), math.log(2))


def test_onsager_reference_at_criticality():
    # ln Z / N = ln(2)/2 + 2G/pi at the critical point
    assert_allclose(onsager_free_energy(onsager_critical_coupling()),
                    0.5 * math.log(2) + 2 * CATALAN / math.pi, rtol=1e-12)


def test_ising_free_energy_below_critical():
    J = 0.9 * onsager_critical_coupling()
    psi = fixed_point_mps(build_row_mpo(ising_model(J)), 16)
    assert psi.converged
    assert abs(psi.free_energy - onsager_free_energy(J)) < 1e-6
    assert psi.canonical_residual() < 1e-10


def test_gapped_free_energy_chi_convergence():
    mpo = build_row_mpo(at_model(selfdual_couplings(0.3)))
    f16 = fixed_point_mps(mpo, 16).free_energy
    f32 = fixed_point_mps(mpo, 32).free_energy
    assert abs(f16 - f32) < 1e-8


def test_variational_monotone_and_entropy_bound():
    mpo = build_row_mpo(at_model(selfdual_couplings(0.5)))
    rows, states = chi_ladder(mpo, (8, 12, 16, 24))
    f = [r.free_energy for r in rows]
    assert np.all(np.diff(f) > -1e-10)
    s = [r.S for r in rows]
    assert np.all(np.diff(s) > 0)
    for r in rows:
        assert r.S <= math.log(r.chi) + 1e-12
    for psi in states:
        sch = psi.schmidt
        assert np.all(sch > 0) and np.all(np.diff(sch) <= 1e-14)
        assert_allclose(np.sum(sch**2), 1.0, rtol=1e-12)


def test_critical_xi_grows_as_power():
    mpo = build_row_mpo(ising_model(onsager_critical_coupling()))
    rows, _ = chi_ladder(mpo, (8, 12, 16, 24))
    chis = np.array([r.chi for r in rows], float)
    xis = np.array([r.xi for r in rows])
    slope = np.polyfit(np.log(chis), np.log(xis), 1)[0]
    assert 1.0 < slope < 2.5
    assert np.all(np.diff(np.log(xis)) > 0)


def test_gapped_xi_matches_width_extrapolation():
    m = at_model(selfdual_couplings(0.3))
    x4, x5, x6 = (sector_correlation_length(build_transfer(m, L)) for L in (4, 5, 6))
    shanks = (x6 * x4 - x5**2) / (x6 + x4 - 2 * x5)
    xi = mps_correlation_length(fixed_point_mps(build_row_mpo(m), 32))
    assert abs(xi - shanks) / shanks < 0.10


def test_product_state_xi_zero():
    psi = fixed_point_mps(build_row_mpo(at_model(ATCouplings(0.0, 0.0))), 1)
    assert mps_correlation_length(psi) == 0.0


def test_expand_preserves_state():
    mpo = build_row_mpo(at_model(selfdual_couplings(0.4)))
    psi = fixed_point_mps(mpo, 8)
    big = expand_mps(psi, 12)
    psi2 = fixed_point_mps(mpo, 12, init=big)
    assert psi2.converged
    assert psi2.free_energy >= psi.free_energy - 1e-10


def test_sign_indefinite_complex_flag():
    psi = fixed_point_mps(build_row_mpo(coupled_model(0.2, 0.45)), 8)
    assert psi.complex_flag
    assert math.isfinite(psi.free_energy)


def test_determinism():
    mpo = build_row_mpo(nflavor_model(0.2, 0.2, 2))
    a = fixed_point_mps(mpo, 8, seed=3)
    b = fixed_point_mps(mpo, 8, seed=3)
    assert a.free_energy == b.free_energy
    assert_allclose(a.schmidt, b.schmidt, rtol=0, atol=0)


def test_kappa_values():
    assert_allclose(kappa(1.0), 6 / (math.sqrt(12) + 1), rtol=1e-15)
    assert_allclose(kappa(1.0), 1.3441, atol=1e-4)
    assert_allclose(kappa(2.0), 0.8697, atol=1e-4)


def test_fit_synthetic_exact():
    chis = [8, 12, 16, 24, 32, 48]
    xis = [2.0 * c**1.3 for c in chis]
    samples = [(c, x, 2 / 6 * math.log(x) + 0.3) for c, x in zip(chis, xis)]
    fit = fit_central_charge(samples)
    assert abs(fit.c - 2.0) < 1e-10
    assert abs(fit.intercept - 0.3) < 1e-10
    assert fit.residual < 1e-12
    assert_allclose(fit.kappa_pred, kappa(fit.c))
    assert_allclose(fit.kappa_fit, 1.3, rtol=1e-10)


def test_fit_window():
    chis = CHI_LADDER
    samples = [(c, float(c), 0.25 * math.log(c) + (0.1 if c == 8 else 0.0)) for c in chis]
    fit = fit_central_charge(samples, window=(12, 48))
    assert_allclose(fit.c, 1.5, rtol=1e-10)
    assert tuple(fit.chis) == (12, 16, 24, 32, 48)


@pytest.mark.parametrize("samples", [
    [(8, 1.0, 0.1), (12, 2.0, 0.2), (16, 3.0, 0.3)],
    [(8, 1.0, 0.1), (12, 2.0, 0.2), (12, 3.0, 0.3), (16, 4.0, 0.4)],
    [(12, 1.0, 0.1), (8, 2.0, 0.2), (16, 3.0, 0.3), (24, 4.0, 0.4)],
    [(8, 1.0, 0.1), (12, math.inf, 0.2), (16, 3.0, 0.3), (24, 4.0, 0.4)],
])
def test_fit_rejects_bad_samples(samples):
    with pytest.raises(ValueError):
        fit_central_charge(samples)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(-1.0, 1.0))
def test_fit_recovers_any_c(c, b):
    chis = [8, 12, 16, 24]
    samples = [(k, 1.5 * k, c / 6 * math.log(1.5 * k) + b) for k in chis]
    assert_allclose(fit_central_charge(samples).c, c, rtol=1e-8)
