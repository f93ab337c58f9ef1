import math

import numpy as np
import pytest

from fwdstraddle import Measure, MeasureError, decompose
from fwdstraddle import fixtures as fx
from fwdstraddle.lower_coupling import CouplingMap, primal_price
from fwdstraddle.upper_coupling import (
    F_u,
    UpperCouplingMap,
    build_upper,
    check_strengthened,
    jensen_bound,
    sample_upper,
    upper_pair,
    upper_price,
    upper_pushforward_cdf,
)

SEP = decompose(*fx.separated())


@pytest.fixture(scope="module")
def upper_map():
    return build_upper(SEP)


def test_check_verdicts():
    assert check_strengthened(SEP)
    v = check_strengthened(decompose(*fx.uniform()))
    assert not v and "common mass" in v.reason
    assert check_strengthened(upper_pair(Measure.dirac(0.0), Measure.discrete([-1.0, 1.0]))).trivial


def test_F_u_quadratic_form():
    for u in (0.1, 0.5, 0.9):
        x = 2 * u - 1
        ys = np.linspace(1, 3, 11)
        expect = (1 - 2 * x * x - 2 * ys + 4 * x * ys - ys * ys) / 8
        assert np.max(np.abs(F_u(SEP, u, ys) - expect)) <= 1e-14
    with pytest.raises(MeasureError):
        F_u(SEP, 0.0, 1.0)


def test_F_u_tangency_at_H(upper_map):
    # the slope of F_u at H(u) is the bi-tangent slope
    h = 1e-6
    for u in (0.2, 0.6):
        rec = upper_map.evaluate(u)
        H = rec.H[0]
        slope = (F_u(SEP, u, H + h) - F_u(SEP, u, H - h)) / (2 * h)
        assert slope == pytest.approx(rec.phi[0], abs=1e-8)
        assert rec.phi[0] == pytest.approx((2 * u - 1 - 3) / 4, abs=1e-14)


def test_G_H_shifts(upper_map):
    us = np.linspace(0.005, 0.995, 200)
    r = upper_map.evaluate(us)
    x = 2 * us - 1
    assert np.max(np.abs(r.G - (x - 2))) <= 1e-12
    assert np.max(np.abs(r.H - (x + 2))) <= 1e-12
    assert np.all(np.diff(r.G) >= -1e-15) and np.all(np.diff(r.H) >= -1e-15)


def test_price_and_jensen(upper_map):
    assert upper_price(upper_map) == pytest.approx(2.0, abs=1e-12)
    assert jensen_bound(SEP) == pytest.approx(math.sqrt(13 / 3 - 1 / 3), abs=1e-15)


def test_point_mass_trivial():
    pair = upper_pair(Measure.dirac(0.0), Measure.discrete([-1.0, 1.0]))
    m = UpperCouplingMap(pair)
    assert m.trivial
    assert upper_price(m) == pytest.approx(1.0, abs=1e-15)
    xy = sample_upper(m, 0, 1000)
    assert np.all(xy[:, 0] == 0.0) and set(np.unique(xy[:, 1])) == {-1.0, 1.0}


def test_rejects_common_mass():
    with pytest.raises(MeasureError):
        UpperCouplingMap(decompose(*fx.uniform()))


def test_pushforward(upper_map):
    nu = SEP.nu
    ys = nu.quantile_function.left((np.arange(50) + 0.5) / 50)
    assert np.max(np.abs(upper_pushforward_cdf(upper_map, ys) - nu.cdf(ys))) <= 1e-8


def test_upper_above_lower(upper_map):
    lower = primal_price(CouplingMap(SEP))
    assert upper_price(upper_map) >= lower - 1e-12


def test_asymmetric_separated_pair():
    mu = Measure(pieces=((-1.0, 0.0, 0.3), (0.0, 1.0, 0.7)))
    left = Measure.uniform(-3.0, -1.5)
    right = Measure.uniform(1.0, 2.0)
    ga = (right.mean - mu.mean) / (right.mean - left.mean)
    nu = left.scaled(ga) + right.scaled(1 - ga)
    pair = decompose(mu, nu)
    m = UpperCouplingMap(pair)
    price = upper_price(m)
    assert price <= jensen_bound(pair) + 1e-9
    assert price >= primal_price(CouplingMap(pair)) - 1e-12
    ys = nu.quantile_function.left((np.arange(40) + 0.5) / 40)
    assert np.max(np.abs(upper_pushforward_cdf(m, ys) - nu.cdf(ys))) <= 1e-8
