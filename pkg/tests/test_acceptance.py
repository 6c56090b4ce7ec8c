"""End-to-end acceptance checks, one test group per criterion.

The terminal summary prints one PASS/FAIL line per criterion.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from decotopo.brute import brute_partition
from decotopo.channels import (build_edge_channel, chamon_purity, compose_check,
                               convex_decomposition, partial_transpose_check, Y)
from decotopo.couplings import (ATCouplings, chamon_couplings, general_couplings,
                                selfdual_couplings, selfduality_residual)
from decotopo.imps import build_row_mpo, chi_ladder, fit_central_charge
from decotopo.lattice import TorusLattice
from decotopo.models import (ObservableSpec, at_model, column_path, coupled_model, ising_model,
                             nflavor_model, onsager_critical_coupling)
from decotopo.montecarlo import MCConfig, mc_run
from decotopo.pauli import emd_identities
from decotopo.scan import DEFAULT_FES_WINDOW
from decotopo.transfer import (build_transfer, disorder_parameter, dominant_spectrum,
                               fit_decay, log_partition_torus, sector_correlation_length,
                               torus_two_point, two_point_order)

P20 = np.linspace(0.0, 0.5, 20)
# 1/xi threshold marking the critical plateau at width 5 (the finite-width floor is ~0.16)
INV_XI_PLATEAU = 0.2


def _fes(m, max_iters=500):
    rows, _ = chi_ladder(build_row_mpo(m), max_iters=max_iters)
    return fit_central_charge([(r.chi, r.xi, r.S) for r in rows], window=DEFAULT_FES_WINDOW)


# 1. coupling anchors

@pytest.mark.criterion(1)
def test_c1_selfdual_anchor():
    c = selfdual_couplings(0.5)
    assert_allclose(c.K, math.atanh(2 - math.sqrt(3)), rtol=1e-15)
    assert_allclose(c.K4, c.K, rtol=1e-14)
    assert round(c.K, 3) == 0.275


@pytest.mark.criterion(1)
def test_c1_residual_grid():
    for p in np.linspace(0.0, 0.5, 50)[1:]:
        assert selfduality_residual(selfdual_couplings(p)) < 1e-12


@pytest.mark.criterion(1)
def test_c1_p0_limit():
    c = selfdual_couplings(0.0)
    assert c.K == 0.0 and math.isinf(c.K4)


# 2. channel algebra

@pytest.mark.criterion(2)
def test_c2_compose():
    assert max(compose_check(p) for p in P20) < 1e-12


@pytest.mark.criterion(2)
def test_c2_partial_transpose():
    for p in P20:
        e = build_edge_channel(p, math.pi / 4, 2)
        assert partial_transpose_check(e.dagger() @ e) < 1e-12
    ey = build_edge_channel(0.3, kraus=Y, n_edges=1)
    assert partial_transpose_check(ey.dagger() @ ey) > 1e-3


@pytest.mark.criterion(2)
def test_c2_emd_identities():
    lat = TorusLattice(4, 4)
    for verts in ([(0, 0), (1, 0), (2, 0)], [(1, 1), (1, 2), (2, 2), (3, 2)]):
        ident = emd_identities(lat, lat.lattice_path(verts))
        assert all(ident.values()), ident


# 3. oracle equivalence

ORACLE = [
    (at_model(selfdual_couplings(0.3)), 3, 3),
    (at_model(general_couplings(0.2, 1.0)), 3, 4),
    (coupled_model(0.5, 0.2), 2, 3),
    (coupled_model(0.2, 0.3), 3, 2),
    (nflavor_model(0.2, 0.1, 2), 3, 3),
    (nflavor_model(0.3, 0.2, 3), 2, 4),
    (ising_model(0.4), 4, 5),
]


@pytest.mark.criterion(3)
@pytest.mark.parametrize("k", range(len(ORACLE)))
def test_c3_oracle_equivalence(k):
    m, Lx, Ly = ORACLE[k]
    assert Lx * Ly * m.n_flavors <= 24
    logz, _ = log_partition_torus(build_transfer(m, Lx), Ly)
    assert abs(logz - brute_partition(m, Lx, Ly).log_z) < 1e-10


# 4. convex decomposition at p = 1/2

@pytest.mark.criterion(4)
def test_c4_convex_decomposition():
    cd = convex_decomposition(0.5, TorusLattice(2, 2))
    assert abs(cd.total - 1.0) < 1e-12
    assert abs(cd.purity - cd.sum_p2) < 1e-10
    assert cd.off_diagonal < 1e-10


# 5. Ising calibration

@pytest.mark.criterion(5)
def test_c5_ising_central_charge():
    fit = _fes(ising_model(onsager_critical_coupling()))
    assert abs(fit.c - 0.5) <= 0.05, fit


# 6. central charges and the 1/xi shape

@pytest.mark.criterion(6)
@pytest.mark.parametrize("h, p, lo, hi", [
    (0.0, 0.5, 0.8, 1.1),
    (0.5, 0.0, 1.75, 2.15),
    (0.2, 0.45, 1.7, 2.3),
    (0.5, 0.3, 1.7, 2.3),
])
def test_c6_central_charge(h, p, lo, hi):
    m = at_model(selfdual_couplings(p)) if h == 0 else coupled_model(h, p)
    fit = _fes(m)
    assert lo <= fit.c <= hi, fit


@pytest.mark.criterion(6)
def test_c6_inverse_xi_shape():
    ps = np.linspace(0.0, 0.5, 11)
    onset = {}
    for h in (0.2, 0.3):
        inv = np.array([1 / sector_correlation_length(build_transfer(coupled_model(h, p), 5))
                        for p in ps])
        assert np.all(np.diff(inv) < 1e-3), inv
        below = np.nonzero(inv < INV_XI_PLATEAU)[0]
        assert len(below) and np.all(inv[below[0]:] < INV_XI_PLATEAU)
        # flat beyond the onset
        assert np.ptp(inv[below[0]:]) < 0.05
        onset[h] = ps[below[0]]
    assert onset[0.3] < onset[0.2]


# 7. h = 1 is independent of p

@pytest.mark.criterion(7)
def test_c7_h1_weights_proportional():
    a, b = coupled_model(1.0, 0.0).weight, coupled_model(1.0, 0.4).weight
    i = np.unravel_index(np.argmax(np.abs(a)), a.shape)
    assert_allclose(b, a * (b[i] / a[i]), rtol=0, atol=1e-12 * np.abs(b).max())


@pytest.mark.criterion(7)
def test_c7_h1_observables():
    ta, tb = build_transfer(coupled_model(1.0, 0.0), 3), build_transfer(coupled_model(1.0, 0.4), 3)
    sa, sb = dominant_spectrum(ta, 2), dominant_spectrum(tb, 2)
    assert_allclose(sector_correlation_length(ta), sector_correlation_length(tb), rtol=1e-8)
    assert_allclose(abs(sa.eigenvalues[1] / sa.eigenvalues[0]),
                    abs(sb.eigenvalues[1] / sb.eigenvalues[0]), rtol=0, atol=1e-8)
    for mask in range(1, 16):
        for r in (1, 2, 4):
            assert abs(two_point_order(ta, mask, r, spec=sa)
                       - two_point_order(tb, mask, r, spec=sb)) < 1e-8
        path = column_path(0, 0, 2)
        assert abs(disorder_parameter(ta, path, mask, sa)
                   - disorder_parameter(tb, path, mask, sb)) < 1e-8


# 8. topological-phase pattern at p = 0.3

@pytest.fixture(scope="module")
def at03_lx6():
    t = build_transfer(at_model(selfdual_couplings(0.3)), 6)
    return t, dominant_spectrum(t, 2)


@pytest.mark.criterion(8)
def test_c8_s_tau_plateau(at03_lx6):
    t, spec = at03_lx6
    rs = range(1, 41)
    fit = fit_decay(rs, [two_point_order(t, 3, r, spec=spec) for r in rs])
    assert fit.rate < 1e-3, fit


@pytest.mark.criterion(8)
def test_c8_s_and_disorder_decay(at03_lx6):
    t, spec = at03_lx6
    rs = range(1, 21)
    assert fit_decay(rs, [two_point_order(t, 1, r, spec=spec) for r in rs]).rate > 0.05
    rd = range(1, 13)
    dis = [disorder_parameter(t, column_path(0, 0, r), 1, spec) for r in rd]
    assert fit_decay(rd, dis).rate > 0.05


# 9. Monte Carlo against exact transfer on the 8x8 torus

# <s tau(0) s tau(r)> on the 8x8 torus at p = 0.3 from torus_two_point with Lx = 8
TORUS8_EXACT = {2: 0.8855205135479414, 4: 0.8801976433817807}


@pytest.mark.criterion(9)
def test_c9_mc_vs_exact():
    m = at_model(selfdual_couplings(0.3))
    cfg = MCConfig(8, 8, sweeps=12000, thermalization=1000, seed=9, chains=8)
    ests = mc_run(m, cfg, [ObservableSpec("order", 3, label="st")], (2, 4))
    for est, r in zip(ests, (2, 4)):
        assert est.z_score(TORUS8_EXACT[r]) < 3.0, (r, est, TORUS8_EXACT[r])


@pytest.mark.criterion(9)
def test_c9_exact_torus_small_width_consistency():
    # the frozen values come from the same routine checked here against enumeration
    m = at_model(selfdual_couplings(0.3))
    t = build_transfer(m, 3)
    ex = torus_two_point(t, 4, 3, [1, 2])
    ref = brute_partition(m, 3, 4, [((0, 0), (0, r), 3) for r in (1, 2)])
    for r in (1, 2):
        assert_allclose(ex[r], ref.correlators[((0, 0), (0, r), 3)], rtol=0, atol=1e-12)


# 10. n-flavor mapping

@pytest.mark.criterion(10)
@pytest.mark.parametrize("h, p", [(0.2, 0.1), (0.5, 0.3), (0.0, 0.25)])
def test_c10_nflavor_equals_at(h, p):
    K, K4 = chamon_couplings(h, p)
    a = brute_partition(nflavor_model(h, p, 2), 3, 3).log_z
    b = brute_partition(at_model(ATCouplings(K, K4)), 3, 3).log_z
    assert abs(a - b) < 1e-10


@pytest.mark.criterion(10)
@pytest.mark.parametrize("h, p", [(0.2, 0.1), (0.5, 0.3), (0.1, 0.45), (0.3, 0.2)])
def test_c10_purity(h, p):
    K, K4 = chamon_couplings(h, p)
    assert_allclose(K4, -math.log(1 - 2 * p), rtol=1e-14)
    assert_allclose(K, math.log((1 + h) / (1 - h)), rtol=1e-14, atol=0)
    z_at = brute_partition(at_model(ATCouplings(K, K4)), 2, 2).log_z
    z_is = brute_partition(ising_model(K), 2, 2).log_z
    pred = math.exp(z_at - 8 * K4 - 2 * z_is)
    assert abs(chamon_purity(TorusLattice(2, 2), h, p) - pred) < 1e-8
