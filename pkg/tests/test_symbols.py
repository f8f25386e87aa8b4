import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dollardlab.errors import ConfigurationError, DomainError
from dollardlab.symbols import (
    CallbackField,
    ConformalMetric,
    FlatMetric,
    HomogeneousField,
    PotentialSpec,
    PowerField,
    SampleBox,
    SymbolModel,
    ZeroField,
    eval_kinetic,
    eval_symbol,
    hamilton_field,
    model_from_config,
    smooth_step,
    verify_decay,
)

from oracles import BlendOracle


def abs_model(dim=1, r0=1.0):
    return SymbolModel(FlatMetric(dim, 1.0), PotentialSpec.homogeneous_only(dim, 1.0, (1.0,), r0=r0))


def free_model(dim=2):
    return SymbolModel(FlatMetric(dim), PotentialSpec.zero(dim))


# -- eval_kinetic ------------------------------------------------------------------------


def test_kinetic_flat_unit_covector():  # [TRIVIAL]
    assert eval_kinetic(free_model(), [0.3, -2.0], [1.0, 0.0]) == 0.5


def test_kinetic_zero_covector():  # [TRIVIAL]
    assert eval_kinetic(free_model(), [1.0, 1.0], [0.0, 0.0]) == 0.0


def test_kinetic_conformal_at_origin():  # [TRIVIAL]
    m = SymbolModel(ConformalMetric(2, 1.0, 1.0), PotentialSpec.zero(2))
    assert eval_kinetic(m, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0, abs=1e-15)


def test_kinetic_rejects_nonfinite():
    with pytest.raises(DomainError):
        eval_kinetic(free_model(), [np.nan, 0.0], [1.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2), st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_kinetic_positive_for_nonzero_covector(x, xi):
    m = SymbolModel(ConformalMetric(2, 0.2, 0.75), PotentialSpec.zero(2, mu=0.75))
    val = eval_kinetic(m, x, xi)
    n2 = float(np.dot(xi, xi))
    assert val >= 0
    if n2 > 1e-200:
        assert val > 0
    elif n2 == 0:
        assert val == 0


# -- eval_symbol -------------------------------------------------------------------------------


def test_symbol_variants_agree_without_potential():  # [TRIVIAL]
    m = SymbolModel(ConformalMetric(2, 0.2, 0.75), PotentialSpec.zero(2, mu=0.75))
    x, xi = [0.4, 1.3], [-0.7, 2.0]
    k = eval_kinetic(m, x, xi)
    for v in ("full", "kinetic", "long_range"):
        assert eval_symbol(m, x, xi, v) == k


def test_symbol_abs_potential_homogeneity_region():  # [TRIVIAL]
    assert eval_symbol(abs_model(), [2.0], [1.0], "long_range") == pytest.approx(2.5, abs=1e-15)


def test_symbol_variants_split_long_and_short_range():
    h = HomogeneousField(1, 1.0)
    m = SymbolModel(FlatMetric(1), PotentialSpec(h, PowerField(1, 0.5, -2.0), mu=1.0, nu=4.0))
    x, xi = [3.0], [1.0]
    vs = 0.5 * 10.0**-1
    assert eval_symbol(m, x, xi, "kinetic") == 0.5
    assert eval_symbol(m, x, xi, "long_range") == pytest.approx(3.5)
    assert eval_symbol(m, x, xi, "full") == pytest.approx(3.5 + vs)


@pytest.mark.parametrize(
    "dim,beta,cos,sin,r0",
    [(1, 1.0, (1.0,), (), 1.0), (1, 1.25, (1.0, 0.3), (), 2.0), (2, 1.25, (1.0, 0.2), (0.0, 0.1), 1.0), (2, 1.0, (0.5, 0.0, 0.3), (0.0, 0.2, 0.0), 1.5)],
)
def test_blend_matches_symbolic_formula(dim, beta, cos, sin, r0):  # [DERIVED]
    h = HomogeneousField(dim, beta, cos, sin, r0)
    oracle = BlendOracle(dim, beta, cos, sin, r0)
    rng = np.random.default_rng(3)
    radii = np.concatenate([np.linspace(0.02, 1.3 * r0, 17), [0.25 * r0, 0.75 * r0, 0.9 * r0]])
    for r in radii:
        if dim == 1:
            x = np.array([r * rng.choice([-1.0, 1.0])])
        else:
            th = rng.uniform(0, 2 * np.pi)
            x = r * np.array([np.cos(th), np.sin(th)])
        assert h.value(x[None])[0] == pytest.approx(oracle(x), abs=1e-13, rel=1e-12)


def test_homogeneity_identity():
    h = HomogeneousField(2, 1.25, (1.0, 0.2), (0.0, 0.1), r0=1.5)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    x = 1.5 * x / np.linalg.norm(x, axis=1, keepdims=True) * rng.uniform(1.0, 3.0, size=(50, 1))
    for lam in (1.0, 2.0, 10.0, 1e3):
        np.testing.assert_allclose(h.value(lam * x), lam**1.25 * h.value(x), rtol=1e-13)


# -- hamilton_field ----------------------------------------------------------------------------------


def test_field_free():  # [TRIVIAL]
    v, f = hamilton_field(free_model(), [1.0, 2.0], [0.3, -0.4])
    np.testing.assert_array_equal(v, [0.3, -0.4])
    np.testing.assert_array_equal(f, [0.0, 0.0])


def test_field_abs_potential():  # [TRIVIAL]
    v, f = hamilton_field(abs_model(), [2.0], [0.7])
    np.testing.assert_allclose(v, [0.7])
    np.testing.assert_allclose(f, [-1.0], atol=1e-15)


def _fd_field(m, x, xi, h=1e-5):
    d = len(x)
    v = np.zeros(d)
    f = np.zeros(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        v[j] = (eval_symbol(m, x, xi + e) - eval_symbol(m, x, xi - e)) / (2 * h)
        f[j] = -(eval_symbol(m, x + e, xi) - eval_symbol(m, x - e, xi)) / (2 * h)
    return v, f


@pytest.mark.parametrize("seed", range(5))
def test_field_matches_finite_differences(seed):  # [DERIVED]
    h = HomogeneousField(2, 1.25, (1.0, 0.2), (0.0, 0.1))
    m = SymbolModel(ConformalMetric(2, 0.2, 0.75), PotentialSpec(h, PowerField(2, 0.3, -1.6), mu=0.75, nu=3.6))
    rng = np.random.default_rng(seed)
    x = rng.normal(size=2) * 2 + np.array([2.5, 0.0])
    xi = rng.normal(size=2)
    v, f = hamilton_field(m, x, xi)
    vf, ff = _fd_field(m, x, xi)
    np.testing.assert_allclose(v, vf, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(f, ff, rtol=1e-6, atol=1e-8)


def test_field_near_blend_seam():
    m = abs_model(2)
    for r in (0.55, 0.8, 0.95):
        x = np.array([r * 0.6, r * 0.8])
        xi = np.array([0.2, 1.0])
        v, f = hamilton_field(m, x, xi)
        vf, ff = _fd_field(m, x, xi)
        np.testing.assert_allclose(f, ff, rtol=1e-4, atol=1e-6)


def test_callback_field_needs_derivatives():
    fld = CallbackField(1, lambda x: np.sum(x * x, axis=-1))
    with pytest.raises(ConfigurationError):
        fld.gradient(np.array([[1.0]]))
    fd = CallbackField(1, lambda x: np.sum(x * x, axis=-1), allow_fd=True)
    np.testing.assert_allclose(fd.gradient(np.array([[1.5]])), [[3.0]], rtol=1e-7)


# -- smooth step -----------------------------------------------------------------------------------


def test_smooth_step_endpoints_and_derivatives():
    s = np.linspace(-0.5, 1.5, 4001)
    S = smooth_step(s, 3)
    assert np.all(S[0][s <= 0] == 0) and np.all(S[0][s >= 1] == 1)
    assert np.all(np.diff(S[0]) >= 0)
    ds = s[1] - s[0]
    for k in range(3):
        fd = np.gradient(S[k], ds)
        inner = (s > 0.05) & (s < 0.95)
        np.testing.assert_allclose(S[k + 1][inner], fd[inner], rtol=2e-3, atol=2e-3 * np.max(np.abs(S[k + 1])))


# -- decay audit -----------------------------------------------------------------------------------


def test_decay_trivial_model():  # [TRIVIAL]
    rep = verify_decay(free_model())
    assert rep.passed
    assert all(e.constant == 0.0 for e in rep.entries)


def test_decay_metric_bump_slope():  # [DERIVED]
    m = SymbolModel(ConformalMetric(2, 0.2, 0.75), PotentialSpec.zero(2, mu=0.75))
    rep = verify_decay(m, SampleBox(fit_range=(10.0, 1e3)))
    assert abs(rep.entry("metric", 0).slope + 0.75) <= 0.1
    assert rep.passed


def test_decay_abs_potential_slope():  # [DERIVED]
    rep = verify_decay(abs_model(1), SampleBox(fit_range=(10.0, 1e3)))
    assert abs(rep.entry("long_range", 0).slope - 1.0) <= 0.1
    assert rep.passed


def test_decay_flags_violation():
    # a potential growing like <x>^1.5 breaks the mu = 1 long-range bound
    m = SymbolModel(FlatMetric(1, 1.0), PotentialSpec(PowerField(1, 1.0, 1.5), ZeroField(1), mu=1.0, nu=2.0))
    assert not verify_decay(m).passed


def test_decay_requires_large_box():
    with pytest.raises(DomainError):
        verify_decay(free_model(), SampleBox(radius=50.0))


def test_metric_positive_definite_constraint():
    with pytest.raises(ConfigurationError):
        ConformalMetric(2, -1.0, 0.75)


# -- configuration -----------------------------------------------------------------------------------


def test_model_from_config_families():
    m = model_from_config(
        {
            "dimension": 2,
            "mu": 0.75,
            "nu": 3.6,
            "metric": {"family": "bump", "amplitude": 0.2, "exponent": 0.75},
            "long_range": {"family": "homogeneous", "beta": 1.25, "cos": [1.0, 0.2], "sin": [0.0, 0.1]},
            "short_range": {"family": "power", "amplitude": 0.3, "kappa": -1.6},
        }
    )
    assert not m.is_flat
    assert m.potential.beta == 1.25
    assert m.potential.nu == 3.6
    with pytest.raises(ConfigurationError):
        model_from_config({"dimension": 1, "metric": {"family": "wavy"}})
    with pytest.raises(ConfigurationError):
        model_from_config({"mu": 1.0})


def test_model_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        SymbolModel(FlatMetric(2), PotentialSpec.zero(1))


def test_homogeneous_sine_rejected_in_one_dimension():
    with pytest.raises(ConfigurationError):
        HomogeneousField(1, 1.0, (1.0,), (0.5,))


def test_sigma_values():
    assert HomogeneousField(1, 1.0).sigma(3.0) == pytest.approx(4.5)
    assert HomogeneousField(1, 1.25).sigma(1.0) == pytest.approx(1 / 2.25)
    assert math.isclose(HomogeneousField(1, 1.0).sigma(-2.0), 2.0)
