import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from decotopo.couplings import ATCouplings, selfdual_couplings
from decotopo.models import (ObservableSpec, anyon_observable, at_model, column_path,
                             coupled_model, insert_disorder_line, ising_model)
from decotopo.montecarlo import (ConstraintSamplingError, MCConfig, SignProblemError,
                                 boltzmann_distribution, estimate_two_point, integrated_time,
                                 mc_histogram, mc_run, positivity_audit)
from decotopo.transfer import build_transfer, torus_two_point


def test_audit_witness():
    bad = positivity_audit(coupled_model(0.2, 0.45))
    assert not bad.passed
    a, b, v = bad.witness
    assert v < 0 and coupled_model(0.2, 0.45).weight[a, b] == v
    assert bad.min_weight < 0
    good = positivity_audit(coupled_model(0.2, 0.3))
    assert good.passed and good.witness is None


def test_audit_raw_table():
    r = positivity_audit(np.array([[1.0, 0.5], [-0.25, 1.0]]))
    assert r.witness == (1, 0, -0.25)
    with pytest.raises(ValueError):
        positivity_audit(np.ones((2, 3)))


def test_refusals():
    cfg = MCConfig(4, 4, sweeps=40, thermalization=8, bins=8)
    with pytest.raises(SignProblemError):
        mc_run(coupled_model(0.2, 0.45), cfg, [1])
    with pytest.raises(ConstraintSamplingError):
        mc_run(at_model(selfdual_couplings(0.0)), cfg, [1])
    m = insert_disorder_line(at_model(selfdual_couplings(0.3), Lx=4), column_path(0, 0, 2), 1)
    with pytest.raises(ValueError):
        mc_run(m, cfg, [1])
    with pytest.raises(ValueError):
        mc_run(at_model(selfdual_couplings(0.3)), cfg,
               [anyon_observable("I.I", "m.m", reduced=True)])


@pytest.mark.parametrize("kw", [
    dict(sweeps=10, thermalization=10),
    dict(bins=4),
    dict(seed=-1),
    dict(stride=0),
    dict(sweeps=20, thermalization=15, bins=8),
])
def test_config_validation(kw):
    base = dict(Lx=4, Ly=4, sweeps=200, thermalization=20)
    base.update(kw)
    with pytest.raises(ValueError):
        MCConfig(**base)


def test_determinism():
    m = at_model(selfdual_couplings(0.3))
    cfg = MCConfig(4, 4, sweeps=300, thermalization=50, seed=11, chains=2)
    a = mc_run(m, cfg, [3], (1, 2))
    b = mc_run(m, cfg, [3], (1, 2))
    assert [e.mean for e in a] == [e.mean for e in b]
    c = mc_run(m, MCConfig(4, 4, sweeps=300, thermalization=50, seed=12, chains=2), [3], (1, 2))
    assert [e.mean for e in a] != [e.mean for e in c]


def test_binning_constant():
    est = estimate_two_point(np.full(160, 0.7), bins=16)
    assert est.mean == 0.7 and est.stderr == 0.0 and est.tau_int == 1.0


def test_binning_iid():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 40000))
    est = estimate_two_point(x, bins=16)
    assert_allclose(est.stderr, 1 / math.sqrt(x.size), rtol=0.25)
    assert_allclose(est.tau_int, 1.0, atol=0.1)


def test_binning_ar1():
    phi = 0.9
    rng = np.random.default_rng(2)
    n = 200000
    eps = rng.normal(size=n)
    x = np.empty(n)
    x[0] = eps[0]
    for i in range(1, n):
        x[i] = phi * x[i - 1] + eps[i]
    tau = (1 + phi) / (1 - phi)
    assert_allclose(integrated_time(x), tau, rtol=0.15)
    est = estimate_two_point(x, bins=16)
    sigma = math.sqrt(tau / (1 - phi**2) / n)
    assert_allclose(est.stderr, sigma, rtol=0.4)


def test_binning_requires_enough_samples():
    with pytest.raises(ValueError):
        estimate_two_point(np.ones(5), bins=8)
    with pytest.raises(ValueError):
        estimate_two_point(np.ones(50), bins=4)


def test_z_score():
    from decotopo.montecarlo import MCEstimate
    assert MCEstimate(1.0, 0.5, 1.0, 10).z_score(2.0) == 2.0
    assert math.isinf(MCEstimate(1.0, 0.0, 1.0, 10).z_score(2.0))


def test_detailed_balance_histogram():
    m = at_model(ATCouplings(0.3, 0.15))
    cfg = MCConfig(2, 2, sweeps=4200, thermalization=200, stride=5, seed=3, chains=16)
    counts = mc_histogram(m, cfg)
    p = boltzmann_distribution(m, 2, 2)
    n = counts.sum()
    expected = n * p
    z = (counts - expected) / np.sqrt(expected)
    assert np.mean(z**2) < 1.6
    assert np.max(np.abs(z)) < 5.0


def test_boltzmann_distribution_ising():
    p = boltzmann_distribution(ising_model(0.4), 2, 2)
    assert_allclose(p.sum(), 1.0)
    assert_allclose(p[0], p[-1])


def test_against_exact_torus_4x4():
    m = at_model(selfdual_couplings(0.3))
    exact = torus_two_point(build_transfer(m, 4), 4, 3, [1, 2])
    cfg = MCConfig(4, 4, sweeps=6000, thermalization=500, seed=5, chains=8)
    ests = mc_run(m, cfg, [ObservableSpec("order", 3, label="st")], (1, 2))
    for est, r in zip(ests, (1, 2)):
        assert est.z_score(exact[r]) < 3.0, (r, est, exact[r])
