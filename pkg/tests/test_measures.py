import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fwdstraddle import (
    ConvexOrderError,
    DispersionError,
    Measure,
    MeasureError,
    convex_order_leq,
    decompose,
    parse_measure,
)
from fwdstraddle import fixtures as fx
from fwdstraddle.measures import discretize_to_pieces, integrate_function

U11 = Measure.uniform(-1, 1)
U22 = Measure.uniform(-2, 2)
ATOM_MU = fx.atoms()[0]
SPLIT = fx.separated()[1]


def test_cdf_values():
    assert U22.cdf(0.0) == pytest.approx(0.5, abs=1e-15)
    assert ATOM_MU.cdf(-0.5) == pytest.approx(0.5, abs=1e-15)
    assert ATOM_MU.cdf_left(-0.5) == 0.0
    assert U11.cdf(0.5) == pytest.approx(0.75, abs=1e-15)


def test_quantiles():
    assert U11.quantile_left(0.5) == pytest.approx(0.0, abs=1e-15)
    assert ATOM_MU.quantile_left(0.25) == -0.5
    assert U11.quantile_left(0.75) == pytest.approx(0.5, abs=1e-15)
    # right quantile jumps over the atom plateau
    assert ATOM_MU.quantile_right(0.5) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(u):
    with pytest.raises(MeasureError):
        U11.quantile_left(u)


def test_moments():
    assert U22.mean == pytest.approx(0.0, abs=1e-15)
    assert U11.second_moment == pytest.approx(1 / 3, abs=1e-15)
    oracle = 0.5 * integrate.quad(lambda x: x * x / 2, -3, -1)[0] + 0.5 * integrate.quad(lambda x: x * x / 2, 1, 3)[0]
    assert SPLIT.second_moment == pytest.approx(oracle, abs=1e-13)
    assert SPLIT.second_moment == pytest.approx(13 / 3, abs=1e-13)


def test_power_tail_moments():
    nu = fx.atoms()[1]
    assert nu.mass == pytest.approx(1.0, abs=1e-15)
    assert nu.mean == pytest.approx(0.0, abs=1e-15)
    oracle = 2 * integrate.quad(lambda x: x / x**3, 1, np.inf)[0]
    assert nu.abs_moment(0.0) == pytest.approx(oracle, abs=1e-12)


def test_call_values():
    assert U22.call(0.0) == pytest.approx(integrate.quad(lambda y: y / 4, 0, 2)[0], abs=1e-14)
    assert U11.call(1.0) == 0.0
    assert SPLIT.call(1.0) == pytest.approx((3 - 1) ** 2 / 8, abs=1e-15)


def test_call_asymptotics():
    assert U22.call(1e6) == 0.0
    assert U22.call(-1e6) - (U22.mean - (-1e6) * U22.mass) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(-5, 5), st.floats(1e-3, 3))
def test_call_convex_decreasing(x, h):
    m = fx.moduniform()[1] + Measure.dirac(0.3, 0.2)
    c0, c1, c2 = m.call(x - h), m.call(x), m.call(x + h)
    assert c1 >= c2 - 1e-14
    assert c0 + c2 - 2 * c1 >= -1e-13


def test_convex_order_cases():
    assert convex_order_leq(U11, U22)
    v = convex_order_leq(U22, U11)
    assert not v and v.witness == 0.0
    assert convex_order_leq(U11, U11)


def test_convex_order_unequal_means():
    v = convex_order_leq(U11, Measure.uniform(0, 2))
    assert not v and math.isinf(v.witness)


def test_decompose_cases():
    p = decompose(U11, U22)
    assert (p.kappa, p.a, p.b, p.gamma_a) == pytest.approx((0.5, -1.0, 1.0, 0.5), abs=1e-15)
    assert decompose(U11, U11).identical
    mu, nu = fx.moduniform()
    p = decompose(mu, nu)
    assert (p.kappa, p.a, p.b) == pytest.approx((0.0, -1.0, 1.0), abs=1e-15)


def test_decompose_errors():
    with pytest.raises(ConvexOrderError):
        decompose(U22, U11)
    # excess target mass strictly inside the source excess hull
    mu = Measure.discrete([-1.0, 1.0])
    nu = Measure(atoms=((-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)))
    with pytest.raises(DispersionError) as err:
        decompose(mu, nu)
    lo, hi = err.value.interval
    assert lo <= 0.0 <= hi


def test_parse_round_trip():
    data = {"atoms": [{"x": -0.5, "w": 0.5}], "uniform": [{"lo": 0.0, "hi": 1.0, "w": 0.5}]}
    m = parse_measure(data)
    assert m == ATOM_MU
    assert parse_measure(json.loads(json.dumps(m.to_dict()))) == m


def test_parse_power_null_edges():
    m = parse_measure({"power": [{"lo": None, "hi": -1, "k": 2, "w": 0.5}, {"lo": 1, "hi": None, "k": 2, "w": 0.5}]})
    assert m.support == (-math.inf, math.inf)


@pytest.mark.parametrize(
    "bad",
    [
        {"atom": []},
        {"atoms": [{"x": 1.0}]},
        {"atoms": [{"x": 1.0, "w": 1.0, "y": 0}]},
        {"uniform": [{"lo": 1.0, "hi": 0.0, "w": 1.0}]},
        {"uniform": [{"lo": 0.0, "hi": 1.0, "w": -1.0}]},
        {"atoms": [{"x": "a", "w": 1.0}]},
    ],
)
def test_parse_rejects(bad):
    with pytest.raises(MeasureError):
        parse_measure(bad)


def test_integrate_function_matches_quad():
    m = fx.moduniform()[1]
    val = integrate_function(np.exp, m)
    oracle = 0.625 * integrate.quad(np.exp, -2, -1)[0] + 0.375 / 3 * integrate.quad(np.exp, 1, 4)[0]
    assert val == pytest.approx(oracle, abs=1e-12)


def test_discretize_to_pieces_mass_and_mean():
    m = discretize_to_pieces(lambda x: 0.75 * (1 - x * x), -1, 1, tol=1e-4)
    assert m.mass == pytest.approx(1.0, abs=1e-12)
    assert abs(m.mean) <= 1e-4


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6))
def test_quantile_inverts_cdf(u):
    m = fx.moduniform()[1] + Measure.dirac(0.0, 0.5)
    m = m.normalized()
    x = m.quantile_left(u)
    assert m.cdf(x) >= u - 1e-12
    assert m.cdf_left(x) <= u + 1e-12
