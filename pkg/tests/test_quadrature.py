import math

import numpy as np
import pytest

from dollardlab.errors import QuadratureError
from dollardlab.quadrature import GK15_NODES, GK15_WEIGHTS, G7_WEIGHTS, gk15_batch

from oracles import quad


def test_rule_weights_sum_to_interval_length():
    assert GK15_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-15)
    assert G7_WEIGHTS.sum() == pytest.approx(2.0, abs=1e-15)
    assert np.all(G7_WEIGHTS[::2] == 0)


@pytest.mark.parametrize("deg", range(0, 23))
def test_kronrod_exact_for_polynomials(deg):
    vals = np.sum(GK15_WEIGHTS * GK15_NODES**deg)
    exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
    assert vals == pytest.approx(exact, abs=1e-14)


def test_batch_matches_scipy():  # [DERIVED]
    a = np.array([0.0, -1.0, 0.5])
    b = np.array([3.0, 2.0, 7.0])
    k = np.array([1.0, 4.0, 0.3])

    def f(s, owner):
        return np.sin(k[owner] * s) * np.exp(-0.1 * s * s) + np.abs(s - 1.0)

    res, err = gk15_batch(f, a, b, 1e-13, breakpoints=[[1.0]] * 3)
    for i in range(3):
        ref, _ = quad(lambda s: math.sin(k[i] * s) * math.exp(-0.1 * s * s) + abs(s - 1.0), a[i], b[i], points=[1.0], epsabs=1e-14, epsrel=1e-14, limit=200)
        assert res[i] == pytest.approx(ref, abs=1e-12)
        assert err[i] <= 1e-12


def test_vector_valued_integrand():
    def f(s, owner):
        return np.stack([s, s * s], axis=-1)

    res, _ = gk15_batch(f, [0.0], [2.0], 1e-13, value_shape=(2,))
    np.testing.assert_allclose(res[0], [2.0, 8.0 / 3.0], atol=1e-14)


def test_empty_interval_is_zero():  # [TRIVIAL]
    res, err = gk15_batch(lambda s, o: np.ones_like(s), [1.0], [1.0], 1e-12)
    assert res[0] == 0.0 and err[0] == 0.0


def test_singular_integrand_reports_failure():
    with pytest.raises(QuadratureError):
        gk15_batch(lambda s, o: 1.0 / s, [0.0], [1.0], 1e-12, max_levels=8)


def test_nonfinite_integrand_reports_owner():
    with pytest.raises(QuadratureError):
        gk15_batch(lambda s, o: np.where(s > 0.5, np.nan, 1.0), [0.0], [1.0], 1e-12)
