import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwdstraddle import Measure, MeasureError, decompose
from fwdstraddle import fixtures as fx
from fwdstraddle.lower_coupling import (
    CouplingMap,
    E_u,
    bound_report,
    down_probability,
    ode_residual,
    phi,
    primal_price,
    pushforward_law,
    sample,
    zeta,
)

SQ3 = math.sqrt(3.0)


def uniform_pq(x):
    r = np.sqrt(12 - 3 * x**2)
    return (-x - r) / 2, (-x + r) / 2


def test_E_u_uniform(uniform_bundle):
    pair = uniform_bundle[0]
    # normalized parts: eta = U[-1,1], gamma = (U[-2,-1] + U[1,2]) / 2, so D(0) = 3/4 - 1/4
    assert E_u(pair, 0.5, 2.0) == pytest.approx(0.5, abs=1e-15)
    assert E_u(pair, 0.5, 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("u", [0.1, 0.37, 0.8])
def test_E_u_vanishes_at_quantile(bundle, u):
    pair = bundle[0]
    x = pair.eta_bar.quantile_left(u)
    assert E_u(pair, u, x) == pytest.approx(0.0, abs=1e-14)


def test_E_u_domain(uniform_bundle):
    with pytest.raises(MeasureError):
        E_u(uniform_bundle[0], 1.0, 0.0)


def test_phi_uniform_half(uniform_bundle):
    _, P, Q = phi(uniform_bundle[0], 0.5)
    assert (P, Q) == pytest.approx((-SQ3, SQ3), abs=1e-12)


def test_boundary_limits(uniform_bundle, moduniform_bundle):
    c = uniform_bundle[1]
    rec = c.evaluate(1e-12)
    assert rec.Q[0] == pytest.approx(2.0, abs=1e-6)
    assert rec.P[0] == pytest.approx(-1.0, abs=1e-6)
    rec = moduniform_bundle[1].evaluate(1e-12)
    assert (rec.P[0], rec.Q[0]) == pytest.approx((-1.0, 4.0), abs=1e-6)


def test_atoms_quarter(atoms_bundle):
    u = 0.25
    _, P, Q = phi(atoms_bundle[0], u)
    assert P == pytest.approx(-1.75 / 1.265625, abs=1e-12)
    assert Q == pytest.approx(1.75 / 0.265625, abs=1e-12)


def test_zeta_symmetry(uniform_bundle):
    pair = uniform_bundle[0]
    assert zeta(pair, 0.5) == pytest.approx(-phi(pair, 0.5)[0], abs=1e-14)


def test_down_probability_near_zero(uniform_bundle):
    # p(-1) = -1 and q(-1) = 2, so the whole unit goes down in the limit
    assert down_probability(uniform_bundle[1], 1e-12) == pytest.approx(1.0, abs=1e-6)
    x = 0.3
    p, q = uniform_pq(x)
    u = 0.65
    assert down_probability(uniform_bundle[1], u) == pytest.approx((q - x) / (q - p), abs=1e-12)


def test_uniform_map(uniform_bundle):
    c = uniform_bundle[1]
    xs = np.linspace(-0.99, 0.99, 200)
    p, q = c.pq(xs)
    ep, eq = uniform_pq(xs)
    assert np.max(np.abs(p - ep)) <= 1e-10
    assert np.max(np.abs(q - eq)) <= 1e-10


def test_invariants(bundle):
    pair, c, _ = bundle
    r = c.evaluate(c.u_grid)
    assert np.all(r.P <= pair.a + 1e-12) and np.all(r.Q >= pair.b - 1e-12)
    assert np.all((r.x >= pair.a - 1e-12) & (r.x <= pair.b + 1e-12))
    for arr in (r.P, r.Q, r.phi, r.zeta):
        assert np.all(np.diff(arr) <= 1e-12)
    assert np.max(np.abs(r.phi + r.zeta - (pair.gamma_a - r.u))) <= 1e-12
    assert np.all(np.diff(r.phi) >= -np.diff(r.u) - 1e-12)


def test_identical_marginals():
    pair = decompose(Measure.uniform(-1, 1), Measure.uniform(-1, 1))
    c = CouplingMap(pair)
    assert primal_price(c) == 0.0
    xy = sample(c, 3, 100)
    assert np.array_equal(xy[:, 0], xy[:, 1])


def test_primal_uniform_against_mpmath(uniform_bundle):
    mp.mp.dps = 30
    # (1 - kappa) * density of eta * int 2 sqrt(3) (1 - x^2) / sqrt(4 - x^2)
    oracle = mp.quad(lambda x: 2 * mp.sqrt(3) * (1 - x * x) / mp.sqrt(4 - x * x), [-1, 1]) / 4
    assert primal_price(uniform_bundle[1]) == pytest.approx(float(oracle), abs=1e-12)


def test_primal_moduniform_against_mpmath(moduniform_bundle):
    mp.mp.dps = 30

    def f(x):
        r = mp.sqrt(25 - 8 * x - 8 * x * x)
        p = -(5 + 4 * x + r) / 6
        q = -(5 + 4 * x - 5 * r) / 6
        return (x - p) * (q - x) / (q - p)

    oracle = mp.quad(f, [-1, 1])
    assert primal_price(moduniform_bundle[1]) == pytest.approx(float(oracle), abs=1e-12)


def test_pushforward_targets(bundle):
    pair, c, _ = bundle
    law = pushforward_law(c)
    levels = (np.arange(200) + 0.5) / 200
    ys = pair.nu.quantile_function.left(levels)
    ys = ys[np.isfinite(ys)]
    assert np.max(np.abs(law.cdf(ys) - pair.nu.cdf(ys))) <= 1e-8


def test_pushforward_discrete_atoms(discrete_bundle):
    law = pushforward_law(discrete_bundle[1])
    for y in (-2.0, -1.0, 3.0):
        assert law.atom_mass(y) == pytest.approx(1 / 3, abs=1e-8)


def test_sampler_deterministic(uniform_bundle):
    a = sample(uniform_bundle[1], 11, 500)
    b = sample(uniform_bundle[1], 11, 500)
    assert np.array_equal(a, b)


def test_sampler_martingale(moduniform_bundle):
    xy = sample(moduniform_bundle[1], 5, 200_000)
    # E[Y - X | X in bin] ~ 0
    bins = np.digitize(xy[:, 0], np.linspace(-1, 1, 9))
    for k in np.unique(bins):
        d = xy[bins == k, 1] - xy[bins == k, 0]
        assert abs(d.mean()) <= 5 * d.std() / math.sqrt(len(d)) + 1e-12


def test_ode_residuals(uniform_bundle, moduniform_bundle, atoms_bundle):
    for pair, c, _ in (uniform_bundle, moduniform_bundle):
        r = ode_residual(pair, c)
        assert r.applicable and r.max <= 1e-6
    assert not ode_residual(atoms_bundle[0], atoms_bundle[1]).applicable


def test_bound_report(uniform_bundle):
    rep = bound_report(uniform_bundle[0], grid=50)
    assert abs(rep.gap) <= 1e-6
    assert rep.min_lagrangian >= -1e-9
    assert set(rep.to_dict()) >= {"primal_price", "dual_value", "gap", "min_lagrangian", "marginal_error", "kappa"}


def test_selection_opposite_same_price(discrete_bundle):
    pair, c, _ = discrete_bundle
    other = CouplingMap(pair, selection="opposite")
    assert primal_price(other) == pytest.approx(primal_price(c), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_pairs_lipschitz(seed):
    mu, nu = fx.random_dispersed_pair(np.random.default_rng(seed))
    pair = decompose(mu, nu)
    r = CouplingMap(pair, grid_points=128).evaluate(np.linspace(0.005, 0.995, 100))
    dphi, du = np.diff(r.phi), np.diff(r.u)
    assert np.all(dphi <= 1e-10)
    assert np.all(dphi >= -du - 1e-10)
    assert np.max(np.abs(r.phi + r.zeta - (pair.gamma_a - r.u))) <= 1e-10
