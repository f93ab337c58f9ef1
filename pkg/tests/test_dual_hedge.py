import math

import numpy as np
import pytest

from fwdstraddle import Measure, MeasureError, decompose
from fwdstraddle.dual_hedge import (
    alpha,
    build_hedge,
    delta,
    dual_value,
    hedge_value,
    lagrangian,
    psi,
    support_points,
    theta,
    verify_subhedge,
)
from fwdstraddle.lower_coupling import CouplingMap, primal_price

SQ3 = math.sqrt(3.0)
X_STAR = 3 - 4 * math.sqrt(2 / 3)


def theta_exact(x):
    return 2 / SQ3 * np.arcsin(np.asarray(x) / 2)


def alpha_exact(x):
    x = np.asarray(x)
    return 2 * x / SQ3 * np.arcsin(x / 2) + (2 - np.sqrt(4 - x * x)) / SQ3


def test_uniform_theta_alpha(uniform_bundle):
    h = uniform_bundle[2]
    xs = np.linspace(-1, 1, 101)
    assert np.max(np.abs(theta(h, xs) - theta_exact(xs))) <= 1e-12
    assert np.max(np.abs(alpha(h, xs) - alpha_exact(xs))) <= 1e-12
    assert alpha(h, 0.0) == pytest.approx(0.0, abs=1e-16)


def test_normalization_at_x0(bundle):
    h = bundle[2]
    assert abs(theta(h, h.x0)) <= 1e-15
    assert abs(alpha(h, h.x0)) <= 1e-15
    assert abs(psi(h, h.x0)) <= 1e-15


def test_custom_x0(uniform_bundle):
    c = uniform_bundle[1]
    h = build_hedge(c, x0=-0.5)
    # moving x0 shifts theta by a constant and psi by an affine function; L is unchanged
    assert theta(h, 0.3) - theta(uniform_bundle[2], 0.3) == pytest.approx(-theta_exact(-0.5), abs=1e-12)
    xs = np.linspace(-3, 3, 13)
    L1 = lagrangian(h, xs[:, None], xs[None, :])
    L0 = lagrangian(uniform_bundle[2], xs[:, None], xs[None, :])
    assert np.max(np.abs(L1 - L0)) <= 1e-12
    with pytest.raises(MeasureError):
        build_hedge(c, x0=2.0)


def test_theta_domain(uniform_bundle):
    with pytest.raises(MeasureError):
        theta(uniform_bundle[2], 1.5)


def test_psi_at_two(uniform_bundle):
    h = uniform_bundle[2]
    expect = alpha_exact(-1.0) + (-1.0 - 2.0) * (-1.0 - theta_exact(-1.0))
    assert psi(h, 2.0) == pytest.approx(float(expect), abs=1e-12)
    assert h.q_inverse(np.array([2.0]))[0] == -1.0


def test_psi_outside_closed_form(uniform_bundle):
    h = uniform_bundle[2]
    ys = np.linspace(1.01, 1.99, 40)
    z = (-ys + np.sqrt(12 - 3 * ys**2)) / 2  # q(z) = y
    expect = alpha_exact(z) + (z - ys) * (-1 - theta_exact(z))
    assert np.max(np.abs(psi(h, ys) - expect)) <= 1e-10
    assert np.max(np.abs(delta(h, ys) - theta_exact(z))) <= 1e-10


def test_symmetry(uniform_bundle):
    h = uniform_bundle[2]
    xs = np.linspace(0, 4, 81)
    assert np.max(np.abs(psi(h, xs) - psi(h, -xs))) <= 1e-12
    assert np.max(np.abs(delta(h, xs) + delta(h, -xs))) <= 1e-12


def test_plateau_invariance(discrete_bundle):
    h = discrete_bundle[2]
    # q = 3 on all of E, so every z in E is an inverse of y = 3
    y = 3.0
    vals = [alpha(h, z) + (z - y) * (-1 - theta(h, z)) for z in np.linspace(-1, 1, 9)]
    assert np.ptp(vals) <= 1e-12
    assert psi(h, y) == pytest.approx(vals[0], abs=1e-12)
    # p = -2 on (x*, 1]
    vals = [alpha(h, z) + (z + 2) * (1 - theta(h, z)) for z in np.linspace(X_STAR, 1, 9)]
    assert np.ptp(vals) <= 1e-12


def test_lagrangian_zero_set(uniform_bundle):
    h = uniform_bundle[2]
    xs = np.linspace(-4, 4, 33)
    assert np.max(np.abs(lagrangian(h, xs, xs))) <= 1e-15
    assert abs(lagrangian(h, 0.0, SQ3)) <= 1e-12
    assert abs(lagrangian(h, 0.0, -SQ3)) <= 1e-12
    assert lagrangian(h, 0.0, 1.0) > 1e-3


def test_jump_gap_discrete(discrete_bundle):
    h = discrete_bundle[2]
    ys = np.linspace(-2, -1, 11)
    assert np.max(np.abs(lagrangian(h, X_STAR, ys))) <= 1e-9
    sx, sy = support_points(h)
    gap = (np.abs(sx - X_STAR) <= 1e-9) & (sy > -2 + 1e-6) & (sy < -1 - 1e-6)
    assert gap.any()


def test_delta_bounded(bundle):
    h = bundle[2]
    xs = np.linspace(-10, 10, 2001)
    assert np.max(np.abs(delta(h, xs))) <= 1 + 1e-12


def test_verify_uniform_grid(uniform_bundle):
    cert = verify_subhedge(uniform_bundle[2], 400, 400)
    assert cert.passed
    assert cert.window == (-4.0, 4.0)
    with pytest.raises(ValueError):
        verify_subhedge(uniform_bundle[2], 1, 10)


def test_dual_equals_primal(bundle):
    _, c, h = bundle
    assert dual_value(h) == pytest.approx(primal_price(c), abs=1e-9)


def test_dual_identical():
    pair = decompose(Measure.uniform(-1, 1), Measure.uniform(-1, 1))
    assert dual_value(build_hedge(CouplingMap(pair))) == 0.0


def test_hedge_value_direct_integral(uniform_bundle):
    pair, _, h = uniform_bundle
    direct = hedge_value(h.psi, pair.mu, pair.nu)
    assert direct == pytest.approx(dual_value(h), abs=1e-9)
