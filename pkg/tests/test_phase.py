import math

import numpy as np
import pytest

from dollardlab.errors import DomainError, OutsideClosedFormError, UnsupportedConfigurationError
from dollardlab.phase import (
    PhaseFunction,
    homogeneous_decomposition,
    multiplier_correction,
    phase,
    phase_gradient,
    phase_hessian,
    verify_lemma7,
    write_phase_table,
)
from dollardlab.symbols import ConformalMetric, FlatMetric, HomogeneousField, PotentialSpec, PowerField, SymbolModel

from oracles import BlendOracle, potential_integral_1d, remainder_1d


def bump_model(d=2):
    h = HomogeneousField(d, 1.25, (1.0, 0.2), (0.0, 0.1) if d == 2 else (), r0=1.0)
    return SymbolModel(ConformalMetric(d, 0.2, 0.75), PotentialSpec(h, PowerField(d, 0.3, -1.6), mu=0.75, nu=3.6))


def homog_1d(beta, r0=1.0):
    return SymbolModel(FlatMetric(1, 2.0 - beta), PotentialSpec.homogeneous_only(1, beta, (1.0,), r0=r0))


def test_psi_flat_is_kinetic():  # [TRIVIAL]
    pf = PhaseFunction(SymbolModel(FlatMetric(2), PotentialSpec.zero(2)), "psi")
    assert pf.value(2.0, [1.0, 3.0]) == pytest.approx(10.0, abs=1e-15)
    np.testing.assert_array_equal(pf.gradient(2.0, [1.0, 3.0]), [2.0, 6.0])


def test_phi_flat_zero_potential_gradient():  # [TRIVIAL]
    pf = PhaseFunction(SymbolModel(FlatMetric(1), PotentialSpec.zero(1)), "phi")
    assert pf.gradient(-1.5, [2.0])[0] == -3.0
    assert pf.hessian(-1.5, [2.0])[0, 0] == -1.5


def test_psi_scaling_identity():  # [DERIVED]
    # substituting u = lam s in the time integral gives Psi(t, lam xi) = lam Psi(lam t, xi)
    pf = PhaseFunction(bump_model(), "psi", tol=1e-13, memo=False)
    rng = np.random.default_rng(1)
    for _ in range(5):
        t = rng.uniform(-3, 3)
        xi = rng.normal(size=2)
        lam = rng.uniform(1.5, 6.0)
        assert pf.value(t, lam * xi) == pytest.approx(lam * pf.value(lam * t, xi), rel=1e-11, abs=1e-11)


def test_phi_lambda_is_linear_in_potential_weight():  # [DERIVED]
    m = bump_model()
    psi = PhaseFunction(m, "psi", tol=1e-13)
    phi = PhaseFunction(m, "phi", tol=1e-13)
    lam = 7.0
    phl = PhaseFunction(m, "phi_lambda", lam=lam, tol=1e-13)
    t, xi = 1.7, np.array([0.4, -1.1])
    expected = psi.value(t, xi) + (phi.value(t, xi) - psi.value(t, xi)) / lam**2
    assert phl.value(t, xi) == pytest.approx(expected, abs=1e-12)
    ge = psi.gradient(t, xi) + (phi.gradient(t, xi) - psi.gradient(t, xi)) / lam**2
    np.testing.assert_allclose(phl.gradient(t, xi), ge, atol=1e-12)


@pytest.mark.parametrize("t", [-2.5, 0.7, 3.0])
def test_gradient_and_hessian_match_finite_differences(t):  # [DERIVED]
    pf = PhaseFunction(bump_model(), "phi", tol=1e-13, memo=False)
    xi = np.array([1.3, -0.6])
    h = 1e-5
    g = pf.gradient(t, xi)
    H = pf.hessian(t, xi)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (pf.value(t, xi + e) - pf.value(t, xi - e)) / (2 * h)
        assert g[j] == pytest.approx(fd, abs=1e-7)
        fdg = (pf.gradient(t, xi + e) - pf.gradient(t, xi - e)) / (2 * h)
        np.testing.assert_allclose(H[:, j], fdg, atol=1e-6)
    np.testing.assert_allclose(H, H.T, atol=1e-12)


def test_time_derivatives_match_finite_differences():  # [DERIVED]
    pf = PhaseFunction(bump_model(), "phi", tol=1e-13, memo=False)
    t, xi, h = 1.9, np.array([0.8, 0.5]), 1e-5
    fd = (pf.value(t + h, xi) - pf.value(t - h, xi)) / (2 * h)
    assert pf.dt(t, xi) == pytest.approx(fd, abs=1e-7)
    fdg = (pf.gradient(t + h, xi) - pf.gradient(t - h, xi)) / (2 * h)
    np.testing.assert_allclose(pf.dt_gradient(t, xi), fdg, atol=1e-6)


def test_jet_agrees_with_separate_orders():
    pf = PhaseFunction(bump_model(), "phi", tol=1e-13, memo=False)
    g, H = pf.deviation_jet(2.0, [0.7, 1.4])
    np.testing.assert_allclose(g, pf.deviation(2.0, [0.7, 1.4], 1), atol=1e-12)
    np.testing.assert_allclose(H, pf.deviation(2.0, [0.7, 1.4], 2), atol=1e-12)


def test_functional_wrappers_and_memo():
    pf = PhaseFunction(bump_model(), "phi")
    t, xi = np.array([1.0, -1.0]), np.array([[1.0, 0.0], [0.0, 2.0]])
    v1 = phase(pf, t, xi)
    v2 = phase(pf, t, xi)
    np.testing.assert_array_equal(v1, v2)
    assert phase_gradient(pf, t, xi).shape == (2, 2)
    assert phase_hessian(pf, t, xi).shape == (2, 2, 2)


def test_rejects_bad_arguments():
    m = bump_model()
    with pytest.raises(DomainError):
        PhaseFunction(m, "chi")
    with pytest.raises(DomainError):
        PhaseFunction(m, "phi_lambda", lam=0.5)
    with pytest.raises(DomainError):
        PhaseFunction(m).value(1.0, [np.inf, 0.0])


@pytest.mark.parametrize("beta", [1.0, 1.25])
@pytest.mark.parametrize("t,xi", [(2.0, 3.0), (-1.5, 2.0), (4.0, -0.5), (-0.3, -10.0)])
def test_potential_integral_against_scipy(beta, t, xi):  # [DERIVED]
    oracle = BlendOracle(1, beta, (1.0,))
    pf = PhaseFunction(homog_1d(beta), "phi", tol=1e-13, memo=False)
    ref = 0.5 * t * xi * xi + potential_integral_1d(lambda x: oracle([x]), t, xi)
    assert pf.value(t, [xi]) == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("beta", [1.0, 1.25])
def test_decomposition_example(beta):  # [DERIVED]
    oracle = BlendOracle(1, beta, (1.0,))
    model = homog_1d(beta)
    t, xi = -2.0, 3.0
    dec = homogeneous_decomposition(model.potential, t, [xi])
    assert dec.sigma == pytest.approx(2.0 ** (1 + beta) / (1 + beta), rel=1e-15)
    assert dec.leading == pytest.approx(-dec.sigma * 3.0**beta, rel=1e-14)
    R = remainder_1d(lambda x: oracle([x]), beta, t, xi)
    assert dec.R == pytest.approx(R, abs=1e-12)
    assert dec.F == pytest.approx(dec.R, abs=1e-11)


def test_decomposition_outside_region():
    with pytest.raises(OutsideClosedFormError):
        homogeneous_decomposition(homog_1d(1.0).potential, 0.5, [1.0])
    with pytest.raises(UnsupportedConfigurationError):
        homogeneous_decomposition(PotentialSpec.zero(1), 2.0, [1.0])


def test_multiplier_correction_equals_remainder():
    model = homog_1d(1.25)
    pf = PhaseFunction(model, "phi", tol=1e-13)
    for t, xi in [(2.0, 3.0), (-1.0, -4.0)]:
        dec = homogeneous_decomposition(model.potential, t, [xi])
        assert float(multiplier_correction(pf, t, [xi])) == pytest.approx(dec.R, abs=1e-11)


def test_deviation_bounds_trivial_model():  # [TRIVIAL]
    pf = PhaseFunction(SymbolModel(FlatMetric(1), PotentialSpec.zero(1)), "phi")
    rep = verify_lemma7(pf, [1.0], np.geomspace(1, 1e3, 8))
    assert rep.passed
    assert all(e.slope == -math.inf for e in rep.entries)


def test_deviation_bounds_grid_must_span():
    pf = PhaseFunction(homog_1d(1.0), "phi")
    with pytest.raises(DomainError):
        verify_lemma7(pf, [1.0], np.geomspace(1, 10, 5))


def test_phase_table(tmp_path):
    pf = PhaseFunction(homog_1d(1.0), "phi")
    p = tmp_path / "phase.csv"
    write_phase_table(p, pf, 1.0, np.linspace(-2, 2, 5))
    rows = p.read_text().splitlines()
    assert rows[0] == "xi0,phase"
    assert len(rows) == 6
