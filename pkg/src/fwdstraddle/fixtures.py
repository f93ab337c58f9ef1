"""Reference marginal pairs with known optimal couplings, plus a random generator
of pairs that satisfy the dispersion assumption by construction."""

from __future__ import annotations

import math

import numpy as np

from .measures import Measure

INF = math.inf


def uniform() -> tuple[Measure, Measure]:
    return Measure.uniform(-1, 1), Measure.uniform(-2, 2)


def moduniform() -> tuple[Measure, Measure]:
    return Measure.uniform(-1, 1), Measure(pieces=((-2.0, -1.0, 5 / 8), (1.0, 4.0, 3 / 8)))


def atoms() -> tuple[Measure, Measure]:
    """Half an atom at -1/2 plus half U[0, 1], against density |x|^-3 on |x| > 1."""
    mu = Measure(atoms=((-0.5, 0.5),), pieces=((0.0, 1.0, 0.5),))
    nu = Measure(powers=((-INF, -1.0, 2.0, 0.5), (1.0, INF, 2.0, 0.5)))
    return mu, nu


def discrete_target() -> tuple[Measure, Measure]:
    return Measure.uniform(-1, 1), Measure.discrete([-2.0, -1.0, 3.0])


def separated() -> tuple[Measure, Measure]:
    return Measure.uniform(-1, 1), Measure(pieces=((-3.0, -1.0, 0.5), (1.0, 3.0, 0.5)))


LOWER = {
    "uniform": uniform,
    "moduniform": moduniform,
    "atoms": atoms,
    "discrete": discrete_target,
}


def _random_part(rng: np.random.Generator, lo: float, hi: float, n_atoms: int, n_pieces: int) -> Measure:
    atoms = [(float(rng.uniform(lo, hi)), float(rng.uniform(0.1, 1.0))) for _ in range(n_atoms)]
    pieces = []
    for _ in range(n_pieces):
        a, b = sorted(rng.uniform(lo, hi, 2))
        if b - a > 1e-3:
            pieces.append((float(a), float(b), float(rng.uniform(0.1, 1.0))))
    m = Measure(tuple(atoms), tuple(pieces))
    if m.mass == 0:
        m = Measure(atoms=((0.5 * (lo + hi), 1.0),))
    return m.normalized()


def random_dispersed_pair(rng: np.random.Generator) -> tuple[Measure, Measure]:
    """Random atoms+pieces pair whose excess masses are dispersed around an interval.

    The source residual lives in ``[a, b]``, the target residual splits between
    ``[a - L, a - g]`` and ``[b + g, b + R]`` with weights fixing the mean, and an
    optional common part is added to both.
    """
    a = float(rng.uniform(-1.0, 0.0))
    b = a + float(rng.uniform(0.5, 2.0))
    eta = _random_part(rng, a, b, int(rng.integers(0, 3)), int(rng.integers(1, 3)))
    gap = float(rng.uniform(0.0, 0.3))
    left = _random_part(rng, a - float(rng.uniform(0.5, 2.0)), a - gap, int(rng.integers(0, 3)), int(rng.integers(0, 3)))
    right = _random_part(rng, b + gap, b + float(rng.uniform(0.5, 2.0)), int(rng.integers(0, 3)), int(rng.integers(0, 3)))
    m = eta.mean
    ga = (right.mean - m) / (right.mean - left.mean)
    gamma = left.scaled(ga) + right.scaled(1.0 - ga)
    kappa = float(rng.choice([0.0, rng.uniform(0.1, 0.6)]))
    if kappa > 0:
        common = _random_part(rng, a - 3.0, b + 3.0, int(rng.integers(0, 2)), int(rng.integers(1, 3)))
        mu = common.scaled(kappa) + eta.scaled(1 - kappa)
        nu = common.scaled(kappa) + gamma.scaled(1 - kappa)
    else:
        mu, nu = eta, gamma
    return mu, nu
