import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dollardlab.errors import BandError, DomainError, UnsupportedConfigurationError
from dollardlab.flow import PhasePoint
from dollardlab.propagator import GridState, PropagatorConfig, gaussian_state
from dollardlab.symbols import FlatMetric, HomogeneousField, PotentialSpec, SymbolModel
from dollardlab.wavefront import (
    CoherentProbe,
    ShiftMap,
    localize,
    probe_coefficients,
    probe_decay,
    verify_shift_law,
    verify_smoothing,
    write_samples_csv,
)

from oracles import gaussian_overlap, jump_exponent

LADDER = [16.0, 32.0, 64.0, 128.0, 256.0]


def step_state(n=4096, L=16.0):
    g = GridState(np.zeros(n), (L,))
    x = g.axes()[0]
    return g.with_values(((x > 0) & (x < L / 4)).astype(float))


def abs_model():
    return SymbolModel(FlatMetric(1, 1.0), PotentialSpec.homogeneous_only(1, 1.0))


def smoothing_model():
    return SymbolModel(FlatMetric(1, 0.75), PotentialSpec.homogeneous_only(1, 1.25, gradient_nonvanishing=True))


# -- probes ------------------------------------------------------------------------------------------


def test_probe_self_overlap():  # [TRIVIAL]
    g = GridState(np.zeros(1024), (32.0,))
    p = CoherentProbe([1.0], [2.0], 16.0)
    assert abs(p.coefficient(p.on(g))) == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("w,k", [(1.0, 0.0), (0.5, 3.0), (2.0, -1.0)])
def test_probe_overlap_with_gaussian(w, k):  # [DERIVED]
    u = gaussian_state(2048, 32.0, [0.5], [k], w)
    lam, xi0 = 16.0, 0.25
    c = CoherentProbe([0.5], [xi0], lam).coefficient(u)
    assert abs(c) == pytest.approx(gaussian_overlap(lam**-0.5, lam * xi0, w, k), abs=1e-12)


def test_probe_overlap_with_offset_centre():  # [DERIVED]
    u = gaussian_state(2048, 32.0, [1.2], [4.0], 0.25)
    c = CoherentProbe([0.5], [0.25], 16.0).coefficient(u)
    assert abs(c) == pytest.approx(gaussian_overlap(0.25, 4.0, 0.25, 4.0, dx=0.7), abs=1e-12)


def test_correlation_matches_single_probe():
    u = gaussian_state(1024, 32.0, [2.0], [3.0], 0.7)
    c = probe_coefficients(u, [0.2], 16.0)
    x = u.axes()[0]
    for j in (300, 512, 600):
        single = CoherentProbe([x[j]], [0.2], 16.0).coefficient(u)
        assert c[j] == pytest.approx(single, abs=1e-13)


def test_translation_covariance():
    u = gaussian_state(1024, 32.0, [2.0], [3.0], 0.7)
    c = probe_coefficients(u, [0.2], 16.0)
    shifted = u.with_values(np.roll(u.values, 37))
    np.testing.assert_allclose(probe_coefficients(shifted, [0.2], 16.0), np.roll(c, 37), atol=1e-13)


def test_modulation_covariance():
    u = gaussian_state(1024, 32.0, [2.0], [3.0], 0.7)
    k = 2 * math.pi * 8 / 32.0  # a lattice frequency, so the product stays periodic
    lam = 16.0
    mod = u.with_values(u.values * np.exp(1j * k * u.axes()[0]))
    a = np.abs(probe_coefficients(u, [0.2], lam))
    b = np.abs(probe_coefficients(mod, [0.2 + k / lam], lam))
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_band_guard():
    u = gaussian_state(256, 32.0, [0.0], [0.0])
    with pytest.raises(BandError):
        CoherentProbe([0.0], [1.0], 64.0).coefficient(u)
    with pytest.raises(DomainError):
        CoherentProbe([0.0], [0.0], 4.0)


# -- decay verdicts -----------------------------------------------------------------------------------


def test_gaussian_is_regular():  # [TRIVIAL]
    u = gaussian_state(4096, 16.0, [0.0], [0.0], 1.0)
    s = probe_decay(u, PhasePoint([0.0], [1.0]), LADDER)
    assert s.verdict == "regular"


def test_jump_exponent_matches_oracle():  # [DERIVED]
    s = probe_decay(step_state(), PhasePoint([0.0], [1.0]), LADDER)
    assert s.exponent == pytest.approx(jump_exponent(LADDER, 1.0), abs=0.05)
    assert s.exponent == pytest.approx(-0.75, abs=0.05)
    assert s.verdict == "singular"


def test_jump_away_from_discontinuity_is_regular():
    s = probe_decay(step_state(), PhasePoint([2.0], [1.0]), LADDER)
    assert s.verdict == "regular"


def test_ladder_validation():
    u = step_state()
    with pytest.raises(DomainError):
        probe_decay(u, PhasePoint([0.0], [1.0]), LADDER[:4])
    with pytest.raises(DomainError):
        probe_decay(u, PhasePoint([0.0], [1.0]), [16.0, 32.0, 48.0, 64.0, 80.0])


def test_samples_csv(tmp_path):
    s = probe_decay(step_state(), PhasePoint([0.0], [1.0]), LADDER)
    write_samples_csv(tmp_path / "wf.csv", [s])
    rows = (tmp_path / "wf.csv").read_text().splitlines()
    assert rows[0] == "x0,xi0,lam,coefficient,exponent,verdict"
    assert len(rows) == 6 and rows[1].endswith(",singular")


# -- shift maps --------------------------------------------------------------------------------------------


def test_shift_map_zero_sigma():  # [TRIVIAL]
    p = PhasePoint([0.3], [-2.0])
    q = ShiftMap(1, 0.0, HomogeneousField(1, 1.0))(p)
    np.testing.assert_array_equal(q.x, p.x)


def test_shift_map_abs_potential():  # [TRIVIAL]
    h = HomogeneousField(1, 1.0)
    assert ShiftMap(1, 2.0, h)(PhasePoint([0.0], [3.0])).x[0] == pytest.approx(2.0)
    assert ShiftMap(1, 2.0, h)(PhasePoint([0.0], [-3.0])).x[0] == pytest.approx(-2.0)
    assert ShiftMap(-1, 2.0, h)(PhasePoint([0.0], [3.0])).x[0] == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-5, 5),
    st.floats(-5, 5),
    st.floats(0.1, 10) | st.floats(-10, -0.1),
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.sampled_from([1, -1]),
)
def test_shift_map_group_properties(x0, x1, r, s1, s2, sign):
    h = HomogeneousField(2, 1.25, (1.0, 0.2), (0.0, 0.1))
    p = PhasePoint([x0, x1], [r, 0.5 * r])
    a = ShiftMap(sign, s1, h)
    b = ShiftMap(sign, s2, h)
    np.testing.assert_allclose(a.inverse()(a(p)).x, p.x, atol=1e-12)
    np.testing.assert_allclose(a(b(p)).x, ShiftMap(sign, s1 + s2, h)(p).x, atol=1e-12)
    # xi is untouched and the shift only depends on the direction of xi
    np.testing.assert_array_equal(a(p).xi, p.xi)
    q = PhasePoint(p.x, 3.0 * p.xi)
    np.testing.assert_allclose(a(q).x, a(p).x, atol=1e-12)


def test_shift_map_rejects_zero_covector():
    with pytest.raises(DomainError):
        ShiftMap(1, 1.0, HomogeneousField(1, 1.0))(PhasePoint([0.0], [0.0]))
    with pytest.raises(DomainError):
        ShiftMap(0, 1.0, HomogeneousField(1, 1.0))


# -- localisation and the shift law ------------------------------------------------------------------------


def test_localize_gaussian():  # [DERIVED]
    lam = 64.0
    u = gaussian_state(2048, 32.0, [3.3], [lam * 0.25], 1.0)
    loc = localize(u, lam, 0.25)
    assert abs(loc.x[0] - 3.3) <= u.spacing[0]
    assert abs(loc.xi[0] - 0.25) <= lam**-0.5 / 10


def test_localize_needs_one_dimension():
    with pytest.raises(UnsupportedConfigurationError):
        localize(gaussian_state((16, 16), 8.0, [0.0, 0.0], [0.0, 0.0]), 4.0, 0.0)


def test_shift_law_without_potential():  # [TRIVIAL]
    m = SymbolModel(FlatMetric(1), PotentialSpec.zero(1))
    lam = 64.0
    u = gaussian_state(2048, 32.0, [-2.0], [8.0], 1.0)
    rep = verify_shift_law(u, m, None, 1.0, PropagatorConfig(dt=0.01), PhasePoint([-2.0], [8.0 / lam]), lam)
    assert rep.error_cells <= 1.0 and rep.passed and rep.passed_flow


def test_shift_law_positive_time_sign():
    # for t > 0 the packet moves along +grad V, opposite to the displayed formula
    lam = 256.0
    u = gaussian_state(4096, 64.0, [5.0], [12.0], 1.0)
    rep = verify_shift_law(u, abs_model(), None, 1.0, PropagatorConfig(dt=1e-3), PhasePoint([5.0], [12.0 / lam]), lam)
    assert rep.predicted_flow.x[0] == pytest.approx(5.5)
    assert rep.predicted.x[0] == pytest.approx(4.5)
    assert rep.passed_flow
    assert not rep.passed


def test_shift_law_negative_time():
    # the packet starts on the negative axis moving right, so it never crosses the blended core
    lam, t = 256.0, -1.0
    u = gaussian_state(4096, 64.0, [-5.0], [12.0], 1.0)
    rep = verify_shift_law(u, abs_model(), None, t, PropagatorConfig(dt=1e-3), PhasePoint([-5.0], [12.0 / lam]), lam)
    # grad V = -1 on the packet's side, so transport moves it to -5 - 1/2; for t < 0
    # the displayed formula and the flow transport coincide
    assert rep.predicted_flow.x[0] == pytest.approx(-5.5)
    assert rep.predicted.x[0] == pytest.approx(-5.5)
    assert rep.error_cells_flow <= 3.0 and rep.passed
    assert rep.xi_error <= rep.xi_cell


def test_shift_law_requires_degree_one():
    m = smoothing_model()
    u = gaussian_state(256, 32.0, [0.0], [1.0])
    with pytest.raises(UnsupportedConfigurationError):
        verify_shift_law(u, m, None, 1.0, PropagatorConfig(), PhasePoint([0.0], [0.1]), 16.0)


# -- smoothing ---------------------------------------------------------------------------------------------


PANEL = [PhasePoint([x], [xi]) for x in (-2.0, 0.0, 2.0) for xi in (-1.0, 0.5, 1.0)]


def test_smoothing_baseline_at_time_zero():  # [TRIVIAL]
    u = gaussian_state(4096, 64.0, [0.0], [0.0], 1.0)
    rep = verify_smoothing(u, smoothing_model(), None, 0.0, PropagatorConfig(), PANEL[:1], [8.0, 16.0, 32.0, 64.0, 128.0], [0.1, 0.2], (1,))
    assert rep.sigma == 0.0 and rep.baseline and rep.passed


def test_smoothing_singular_input_control():
    # at sigma = 0 a jump is seen as singular; the smoothing claim is not made there
    u = step_state(4096, 64.0)
    rep = verify_smoothing(u, smoothing_model(), None, 0.0, PropagatorConfig(), [PhasePoint([0.0], [1.0])], [8.0, 16.0, 32.0, 64.0, 128.0], [0.1], (1,))
    assert rep.samples[0].verdict == "singular"
    assert not rep.all_regular and rep.passed


def test_smoothing_requires_superlinear_degree():
    u = gaussian_state(256, 32.0, [0.0], [0.0])
    with pytest.raises(UnsupportedConfigurationError):
        verify_smoothing(u, abs_model(), None, 1.0, PropagatorConfig(), PANEL, LADDER, [0.1], (1,))


def test_smoothing_ratio_ordering():
    u = gaussian_state(4096, 64.0, [0.0], [0.0], 1.0)
    rep = verify_smoothing(
        u, smoothing_model(), None, 1.0, PropagatorConfig(), PANEL[:1], [8.0, 16.0, 32.0, 64.0, 128.0], [0.1, 0.3], (1,), translates=[-1.0, 0.0, 1.0]
    )
    assert rep.ratios[1].shape == (6,)
    assert rep.s_values[1] == pytest.approx(0.25)
    assert rep.ratio_spread[1] == pytest.approx(rep.ratios[1].max() / rep.ratios[1].min())
