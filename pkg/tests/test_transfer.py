import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from decotopo.brute import brute_partition
from decotopo.couplings import ATCouplings, general_couplings, selfdual_couplings
from decotopo.models import (at_model, column_path, coupled_model, detour_path, ising_model,
                             nflavor_model, onsager_critical_coupling)
from decotopo.transfer import (CapExceeded, build_transfer, correlation_length,
                               default_sector_masks, disorder_parameter, dominant_spectrum,
                               fit_decay, log_partition_torus, sector_correlation_length,
                               sector_eigenvalues, torus_two_point, two_point_order)


def kaufman_lambda0(K, L):
    """Largest eigenvalue of the periodic width-``L`` isotropic Ising transfer matrix."""
    Ks = math.atanh(math.exp(-2 * K))
    gam = [math.acosh(math.cosh(2 * Ks) * math.cosh(2 * K)
                      - math.sinh(2 * Ks) * math.sinh(2 * K) * math.cos(math.pi * k / L))
           for k in range(1, 2 * L, 2)]
    return (2 * math.sinh(2 * K)) ** (L / 2) * math.exp(0.5 * sum(gam))


def test_uniform_at_all_ones():
    t = build_transfer(at_model(ATCouplings(0.0, 0.0)), 2)
    assert_allclose(t.matrix(), np.ones((16, 16)))
    spec = dominant_spectrum(t, 3)
    assert_allclose(spec.eigenvalues, [16.0, 0.0, 0.0], atol=1e-12)
    assert correlation_length(t, spec) == 0.0


def test_row_partition_sum():
    m = at_model(selfdual_couplings(0.3))
    t = build_transfer(m, 3)
    w = m.weight
    ref = 0.0
    for a in np.ndindex(4, 4, 4):
        for b in np.ndindex(4, 4, 4):
            h = np.prod([w[a[x], a[(x + 1) % 3]] for x in range(3)])
            v = np.prod([w[a[x], b[x]] for x in range(3)])
            ref += h * v
    assert_allclose(t.row_partition_sum(), ref, rtol=1e-12)


@pytest.mark.parametrize("L", [3, 4, 6, 8])
def test_ising_finite_width_lambda0(L):
    K = onsager_critical_coupling()
    t = build_transfer(ising_model(K), L)
    assert_allclose(dominant_spectrum(t, 1).eigenvalues[0], kaufman_lambda0(K, L), rtol=1e-12)


def test_dense_and_matrix_free_agree():
    m = at_model(selfdual_couplings(0.35))
    dense = dominant_spectrum(build_transfer(m, 4, "dense"), 3)
    free = dominant_spectrum(build_transfer(m, 4, "matrix-free"), 3)
    assert_allclose(np.abs(free.eigenvalues), np.abs(dense.eigenvalues), rtol=1e-10)


def test_spectrum_real_descending_and_perron():
    t = build_transfer(at_model(ATCouplings(0.23, 0.11)), 4)
    spec = dominant_spectrum(t, 6)
    vals = spec.eigenvalues
    assert np.isrealobj(vals)
    assert np.all(np.diff(np.abs(vals)) <= 1e-12 * vals[0])
    assert vals[0] > 0
    assert np.all(spec.right > 0) and np.all(spec.left > 0)


def test_gapped_selfdual_p03():
    spec = dominant_spectrum(build_transfer(at_model(selfdual_couplings(0.3)), 4), 2)
    assert abs(spec.eigenvalues[1]) / spec.eigenvalues[0] < 1.0
    assert not spec.degenerate


def test_spectrum_k_bounds():
    t = build_transfer(at_model(ATCouplings(0.1, 0.1)), 2)
    with pytest.raises(ValueError):
        dominant_spectrum(t, 9)


def test_cap():
    with pytest.raises(CapExceeded):
        build_transfer(coupled_model(0.2, 0.3), 7)


def test_correlation_length_small():
    assert correlation_length(build_transfer(ising_model(0.1), 4)) < 1.0


def test_correlation_length_degenerate_infinite():
    # p = 0 locks s tau: two exactly degenerate sectors
    t = build_transfer(at_model(selfdual_couplings(0.0)), 3)
    assert math.isinf(correlation_length(t))


def test_xi_grows_near_bkt():
    m = at_model(selfdual_couplings(0.49))
    xis = [correlation_length(build_transfer(m, L)) for L in (4, 5, 6)]
    assert np.all(np.diff(xis) > 0)
    assert xis[0] > 4.0


def test_two_point_r0():
    t = build_transfer(at_model(selfdual_couplings(0.3)), 4)
    assert two_point_order(t, 1, 0) == 1.0


def test_topological_pattern_lx4():
    t = build_transfer(at_model(selfdual_couplings(0.3)), 4)
    spec = dominant_spectrum(t, 2)
    st20 = two_point_order(t, 3, 20, spec=spec)
    s20 = two_point_order(t, 1, 20, spec=spec)
    assert st20 > 0.1
    assert s20 < 1e-3
    # the residual s tau decay is the finite-width tunnelling gap
    ratio = two_point_order(t, 3, 30, spec=spec) / two_point_order(t, 3, 20, spec=spec)
    lam = spec.eigenvalues
    assert_allclose(ratio, (abs(lam[1]) / lam[0]) ** 10, rtol=1e-6)
    assert fit_decay(range(1, 21), [two_point_order(t, 1, r, spec=spec) for r in range(1, 21)]).rate > 0.05


def test_disorder_empty_and_paramagnet():
    t = build_transfer(at_model(selfdual_couplings(0.3)), 4)
    assert disorder_parameter(t, (), 1) == 1.0
    assert disorder_parameter(t, column_path(0, 0, 16), 1) < 1e-3
    deep = build_transfer(at_model(ATCouplings(0.01, 0.01)), 4)
    assert_allclose(disorder_parameter(deep, column_path(0, 0, 16), 1), 1.0, atol=1e-5)


@pytest.mark.parametrize("L", [4, 5, 6])
def test_kramers_wannier_duality(L):
    t = build_transfer(at_model(selfdual_couplings(0.5)), L)
    spec = dominant_spectrum(t, 2)
    for r in (1, 2, 4, 8):
        assert_allclose(disorder_parameter(t, column_path(0, 0, r), 1, spec),
                        two_point_order(t, 1, r, spec=spec), atol=1e-8)


@pytest.mark.parametrize("mask", [1, 2, 3])
def test_deformation_independence(mask):
    t = build_transfer(at_model(selfdual_couplings(0.3)), 5)
    spec = dominant_spectrum(t, 2)
    a = disorder_parameter(t, column_path(1, 0, 4), mask, spec)
    b = disorder_parameter(t, detour_path(1, 0, 4, 2), mask, spec)
    assert_allclose(a, b, atol=1e-10)


def test_deformation_independence_coupled():
    t = build_transfer(coupled_model(0.3, 0.2), 3)
    spec = dominant_spectrum(t, 2)
    a = disorder_parameter(t, column_path(0, 0, 3), 5, spec)
    b = disorder_parameter(t, detour_path(0, 0, 3, 1), 5, spec)
    assert_allclose(a, b, atol=1e-10)


ORACLE_CASES = [
    ("selfdual-at 3x3", at_model(selfdual_couplings(0.3)), 3, 3),
    ("general-at 3x4", at_model(general_couplings(0.2, 1.0)), 3, 4),
    ("at locked 4x3", at_model(selfdual_couplings(0.0)), 4, 3),
    ("coupled 2x3", coupled_model(0.5, 0.2), 2, 3),
    ("coupled 3x2", coupled_model(0.2, 0.3), 3, 2),
    ("nflavor n=2 3x3", nflavor_model(0.2, 0.1, 2), 3, 3),
    ("nflavor n=3 2x4", nflavor_model(0.3, 0.2, 3), 2, 4),
    ("ising 4x5", ising_model(0.4), 4, 5),
]


@pytest.mark.parametrize("name, m, Lx, Ly", ORACLE_CASES, ids=[c[0] for c in ORACLE_CASES])
def test_oracle_equivalence(name, m, Lx, Ly):
    logz_t, sign = log_partition_torus(build_transfer(m, Lx), Ly)
    ref = brute_partition(m, Lx, Ly)
    assert sign == ref.sign == 1.0
    assert abs(logz_t - ref.log_z) < 1e-10


def test_oracle_matrix_free_contraction():
    m = coupled_model(0.5, 0.2)
    t = build_transfer(m, 2, "matrix-free")
    v = np.eye(t.dim)
    for _ in range(3):
        v = t.apply(v)
    assert_allclose(math.log(np.trace(v)), brute_partition(m, 2, 3).log_z, rtol=0, atol=1e-10)


@pytest.mark.parametrize("mask, r", [(1, 1), (3, 2), (2, 3)])
def test_torus_two_point_vs_brute(mask, r):
    m = at_model(selfdual_couplings(0.3))
    t = build_transfer(m, 3)
    exact = torus_two_point(t, 4, mask, [r])[r]
    ref = brute_partition(m, 3, 4, pairs=[((0, 0), (0, r), mask)]).correlators
    assert_allclose(exact, list(ref.values())[0], rtol=1e-10)


def test_h1_p_independence_lx3():
    ts = [build_transfer(coupled_model(1.0, p), 3) for p in (0.0, 0.4)]
    specs = [dominant_spectrum(t, 2) for t in ts]
    xi = [correlation_length(t, s) for t, s in zip(ts, specs)]
    assert_allclose(xi[0], xi[1], rtol=1e-8)
    for mask in (1, 3, 5, 15):
        a, b = (two_point_order(t, mask, 3, spec=s) for t, s in zip(ts, specs))
        assert_allclose(a, b, atol=1e-8)


def test_sector_masks():
    assert default_sector_masks(at_model(ATCouplings(0.1, 0.1))) == (1,)
    assert default_sector_masks(coupled_model(0.2, 0.1)) == (1, 4)
    assert default_sector_masks(nflavor_model(0.2, 0.1, 3)) == (1, 2, 4)


def test_sector_spectrum_partitions_full():
    t = build_transfer(at_model(selfdual_couplings(0.3)), 3)
    full = np.sort(np.abs(np.linalg.eigvals(t.matrix())))[::-1][:6]
    even = sector_eigenvalues(t, 1, 1, 6)
    odd = sector_eigenvalues(t, 1, -1, 6)
    merged = np.sort(np.abs(np.concatenate([even, odd])))[::-1][:6]
    assert_allclose(merged, full, rtol=1e-10)


def test_sector_removes_tunnelling_partner():
    t = build_transfer(at_model(selfdual_couplings(0.3)), 4)
    assert correlation_length(t) > 10.0
    assert sector_correlation_length(t) < 3.0


def test_sector_xi_increases_with_p_at():
    xis = [sector_correlation_length(build_transfer(at_model(selfdual_couplings(p)), 4))
           for p in (0.0, 0.1, 0.25, 0.3, 0.4, 0.5)]
    assert np.all(np.diff(xis) > 0)


def test_fit_decay_synthetic():
    rs = np.arange(1, 21)
    f = fit_decay(rs, 0.7 * np.exp(-0.2 * rs))
    assert_allclose(f.rate, 0.2, rtol=1e-10)
    assert not f.plateau
    assert fit_decay(rs, np.full(20, 0.4)).plateau
