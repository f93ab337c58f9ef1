"""Maximal martingale coupling when the marginals are fully separated.

Requires zero common mass, ``supp(mu)`` inside ``E = [a, b]`` and ``supp(nu)``
outside ``(a, b)``.  The source quantile ``x_u`` is split between
``G(u) <= a`` and ``H(u) >= b`` with ``G``, ``H`` non-decreasing.  In level
space ``s = F_nu(G(u))`` solves

    m(s) + m(gamma_a + u - s) = m(gamma_a) + int_0^u F_mu^{-1}

and ``H(u)`` sits at level ``gamma_a + u - s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._split import LevelSolver, first_true
from .measures import MarginalPair, Measure, MeasureError, decompose
from .quadrature import fixed_legendre, integrate


@dataclass(frozen=True)
class StrengthenedVerdict:
    ok: bool
    reason: str = ""
    trivial: bool = False

    def __bool__(self) -> bool:
        return self.ok


def check_strengthened(pair: MarginalPair) -> StrengthenedVerdict:
    mu = pair.mu
    if len(mu.merged_atoms) == 1 and not mu.cells:
        return StrengthenedVerdict(True, "source is a point mass", trivial=True)
    if pair.kappa > 0:
        return StrengthenedVerdict(False, f"common mass {pair.kappa!r} > 0")
    lo, hi = mu.support
    if lo < pair.a or hi > pair.b:
        return StrengthenedVerdict(False, "source support leaves E")
    nu = pair.nu
    for c in nu.cells:
        if max(c.lo, pair.a) < min(c.hi, pair.b):
            return StrengthenedVerdict(False, "target charges the interior of E")
    for x, _ in nu.merged_atoms:
        if pair.a < x < pair.b:
            return StrengthenedVerdict(False, "target charges the interior of E")
    return StrengthenedVerdict(True)


def F_u(pair: MarginalPair, u: float, y):
    """``C_mu(x_u) + (y - x_u)(u - 1) + C_nu(b) + (y - b) C_nu'(b+) - C_nu(y)``."""
    if not 0 < u < 1:
        raise MeasureError("u must lie strictly inside (0, 1)")
    mu, nu, b = pair.mu, pair.nu, pair.b
    xu = mu.quantile_function.left(u)
    y = np.asarray(y, dtype=float)
    slope = nu.cdf(b) - 1.0
    return mu.call(xu) + (y - xu) * (u - 1.0) + nu.call(b) + (y - b) * slope - nu.call(y)


@dataclass(frozen=True)
class UpperRecord:
    u: np.ndarray
    x: np.ndarray
    G: np.ndarray
    H: np.ndarray
    phi: np.ndarray
    w: np.ndarray


class UpperCouplingMap:
    def __init__(self, pair: MarginalPair, grid_points: int = 512):
        verdict = check_strengthened(pair)
        if not verdict:
            raise MeasureError(f"separation assumption violated: {verdict.reason}")
        self.pair = pair
        self.trivial = verdict.trivial
        if self.trivial:
            self.x0 = pair.mu.merged_atoms[0][0]
            return
        self.a, self.b, self.gamma_a = pair.a, pair.b, pair.gamma_a
        self.F = pair.mu.quantile_function
        self.G = pair.nu.quantile_function
        F, G, ga = self.F, self.G, self.gamma_a
        mga = G.partial(ga)
        self.solver = LevelSolver(
            G,
            K=lambda u: mga + F.partial(u),
            c=lambda u: ga + u,
            bounds=lambda u: (np.maximum(0.0, ga + u - 1.0), np.minimum(ga, u)),
        )
        self.events = self._find_events()
        knots = np.concatenate([F.breaks, self.events])
        knots = knots[(knots > 0) & (knots < 1)]
        self.knots = np.unique(np.concatenate([[0.0], knots, [1.0]]))
        self.u_grid = np.unique(np.concatenate([knots, np.linspace(0, 1, grid_points + 2)[1:-1]]))

    def _find_events(self) -> np.ndarray:
        from scipy.optimize import brentq

        ga = self.gamma_a
        f = lambda u: float(self.solver.solve(u)[0])
        ev = []
        for v in self.G.breaks:
            if 0 < v < ga:
                g = lambda u, v=v: f(u) - v
            elif ga < v < 1:
                g = lambda u, v=v: (ga + u - f(u)) - v
            else:
                continue
            if g(0.0) * g(1.0) < 0:
                ev.append(brentq(g, 0.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200))
        return np.unique(np.array(ev, dtype=float))

    def evaluate(self, u) -> UpperRecord:
        if self.trivial:
            raise MeasureError("point-mass source: no split map")
        u = np.atleast_1d(np.asarray(u, dtype=float))
        s = self.solver.solve(u)
        r = self.gamma_a + u - s
        G = np.minimum(self.G.right(s), self.a)
        H = np.maximum(np.where(r >= 1.0, self.G.left(r), self.G.right(r)), self.b)
        x = self.F.left(u)
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(H > G, (H - x) / (H - G), 1.0)
        return UpperRecord(u, x, G, H, s - 1.0, w)

    def gh(self, x):
        rec = self.evaluate(np.clip(self.pair.mu.cdf(np.atleast_1d(x)), 0.0, 1.0))
        return rec.G, rec.H


def build_upper(pair: MarginalPair) -> UpperCouplingMap:
    return UpperCouplingMap(pair)


def upper_price(m: UpperCouplingMap, tol: float = 1e-12) -> float:
    if m.trivial:
        return float(m.pair.nu.abs_moment(m.x0))

    def f(u):
        rec = m.evaluate(u)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = 2.0 * (rec.x - rec.G) * (rec.H - rec.x) / (rec.H - rec.G)
        return np.where(rec.H > rec.G, v, 0.0)

    return integrate(f, m.knots, tol)


def sample_upper(m: UpperCouplingMap, seed: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u, v = rng.random((2, n))
    out = np.empty((n, 2))
    if m.trivial:
        nu = m.pair.nu
        out[:, 0] = m.x0
        out[:, 1] = nu.quantile_function.left(u)
        return out
    rec = m.evaluate(u)
    out[:, 0] = rec.x
    out[:, 1] = np.where(v <= rec.w, rec.G, rec.H)
    return out


def upper_pushforward_cdf(m: UpperCouplingMap, y, tol: float = 1e-13):
    """CDF of ``Y`` under the upper coupling."""
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    nu = m.pair.nu
    if m.trivial:
        out = np.asarray(nu.cdf(ys), dtype=float)
        return float(out[0]) if np.ndim(y) == 0 else out
    W = _w_table(m, tol)
    total_down = float(W(np.array([1.0]))[0])
    out = np.empty_like(ys)
    lo = ys < m.b
    if lo.any():
        level = np.where(ys[lo] >= m.a, m.gamma_a, np.asarray(nu.cdf(ys[lo]), dtype=float))
        # G(u) <= y  <=>  s(u) <= F(y); s increases with u
        ustar = first_true(lambda uu: ~m.solver.level_at_most(uu, level), len(level))
        out[lo] = W(ustar)
    hi = ~lo
    if hi.any():
        level = np.asarray(nu.cdf(ys[hi]), dtype=float)
        # H(u) <= y  <=>  r(u) <= F(y)  <=>  s(u) >= gamma_a + u - F(y)
        ustar = first_true(lambda uu: m.solver.level_below(uu, m.gamma_a + uu - level), len(level))
        out[hi] = total_down + ustar - W(ustar)
    return float(out[0]) if np.ndim(y) == 0 else out


def _w_table(m: UpperCouplingMap, tol: float, subdiv: int = 64):
    """``u -> int_0^u w``: adaptive quadrature on a knot grid, fixed Gauss-Legendre in between."""
    cached = getattr(m, "_w_cache", None)
    if cached is not None:
        return cached
    grid = np.unique(np.concatenate([m.knots, np.linspace(0.0, 1.0, subdiv + 1)]))
    w = lambda u: m.evaluate(u).w
    cum = np.concatenate([[0.0], np.cumsum([integrate(w, [grid[i], grid[i + 1]], tol) for i in range(len(grid) - 1)])])

    def W(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        i = np.clip(np.searchsorted(grid, u, side="right") - 1, 0, len(grid) - 2)
        return cum[i] + fixed_legendre(w, grid[i], u)

    m._w_cache = W
    return W


def jensen_bound(pair: MarginalPair) -> float:
    """``sqrt(E Y^2 - E X^2)``, an upper bound on ``E|Y - X|`` for any martingale coupling."""
    return math.sqrt(max(pair.nu.second_moment - pair.mu.second_moment, 0.0))


def upper_pair(mu: Measure, nu: Measure) -> MarginalPair:
    """Validate a pair for the upper bound; point-mass sources skip the dispersion check."""
    if len(mu.merged_atoms) == 1 and not mu.cells:
        from .measures import convex_order_leq, ConvexOrderError

        v = convex_order_leq(mu, nu)
        if not v:
            raise ConvexOrderError(v.witness)
        x = mu.merged_atoms[0][0]
        return MarginalPair(mu, nu, 0.0, Measure(), mu, nu.normalized(), x, x, float(nu.cdf(x)))
    return decompose(mu, nu)
