"""Minimal martingale coupling for the forward-start straddle.

The residual pair ``(eta_bar, gamma_bar)`` of a :class:`MarginalPair` is
transported along a bi-tangent construction: the source quantile
``x_u = F^{-1}(u)`` moves down to ``P(u) <= a`` with probability ``w(u)`` and
up to ``Q(u) >= b`` otherwise.  The common mass stays put.

Everything is computed in level space.  With ``G`` the quantile function of
``gamma_bar`` and ``m(v) = int_0^v G``, the down-level ``phi(u) = F_gamma(P(u))``
solves

    m(gamma_a) - m(phi) + m(1) - m(1 + gamma_a - u - phi) = int_0^u F^{-1},

which is the tangency condition of a common line touching the normalized
potential below ``a`` and ``E_u`` above ``b``.  The up-level is
``1 + zeta(u)`` with ``phi + zeta = gamma_a - u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from ._split import LevelSolver, first_true
from .measures import MarginalPair, Measure, MeasureError
from .potential import Potential
from .quadrature import fixed_legendre, integrate


@dataclass(frozen=True)
class CouplingRecord:
    """Values of the construction on a batch of levels ``u``."""

    u: np.ndarray
    x: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    phi: np.ndarray
    zeta: np.ndarray
    w: np.ndarray


def _down_weight(x, P, Q):
    with np.errstate(invalid="ignore", divide="ignore"):
        w = (Q - x) / (Q - P)
    w = np.where(np.isinf(Q) & np.isfinite(P), 1.0, w)
    w = np.where(np.isinf(P) & np.isfinite(Q), 0.0, w)
    return np.where(Q > P, w, 1.0)


def _straddle_integrand(x, P, Q):
    """``E|Y - X|`` given ``X = x`` under the two-point law on ``{P, Q}``."""
    with np.errstate(invalid="ignore", divide="ignore"):
        v = 2.0 * (x - P) * (Q - x) / (Q - P)
    v = np.where(np.isinf(Q), 2.0 * (x - P), v)
    v = np.where(np.isinf(P), 2.0 * (Q - x), v)
    return np.where(Q > P, v, 0.0)


class CouplingMap:
    """The lower-bound coupling of a validated pair.

    ``selection='extremal'`` picks the largest ``P`` and smallest ``Q`` when
    the tangency points are not unique; ``'opposite'`` picks the other ends.
    """

    def __init__(self, pair: MarginalPair, selection: str = "extremal", grid_points: int = 512):
        if selection not in ("extremal", "opposite"):
            raise ValueError("selection must be 'extremal' or 'opposite'")
        self.pair = pair
        self.kappa = pair.kappa
        self.selection = selection
        self.degenerate = pair.identical
        if self.degenerate:
            self.events = np.array([])
            self.u_grid = np.linspace(0, 1, grid_points + 2)[1:-1]
            return
        self.a, self.b, self.gamma_a = pair.a, pair.b, pair.gamma_a
        self.F = pair.eta_bar.quantile_function
        self.G = pair.gamma_bar.quantile_function
        G, F, ga = self.G, self.F, self.gamma_a
        mga, m1 = G.partial(ga), G.partial(1.0)
        self.solver = LevelSolver(
            G,
            K=lambda u: mga + m1 - F.partial(u),
            c=lambda u: 1.0 + ga - u,
            bounds=lambda u: (np.maximum(0.0, ga - u), np.minimum(ga, 1.0 - u)),
        )
        self.events = self._find_events()
        knots = np.concatenate([F.breaks, self.events])
        knots = knots[(knots > 0) & (knots < 1)]
        self.knots = np.unique(np.concatenate([[0.0], knots, [1.0]]))
        self.u_grid = np.unique(np.concatenate([knots, np.linspace(0, 1, grid_points + 2)[1:-1]]))

    # -- level maps ----------------------------------------------------------

    def phi(self, u):
        """Down-level ``phi(u)``, the slope of the bi-tangent line."""
        self._need_residual()
        return self.solver.solve(u)

    def _find_events(self) -> np.ndarray:
        """Levels ``u`` where ``phi`` or the up-level crosses a breakpoint of ``gamma_bar``."""
        ga = self.gamma_a
        ev = []
        f = lambda u: float(self.solver.solve(u)[0])
        for v in self.G.breaks:
            if 1e-14 < v < ga - 1e-14:
                target = v
                g = lambda u: f(u) - target
            elif ga + 1e-14 < v < 1 - 1e-14:
                target = v
                g = lambda u: (1.0 + ga - u - f(u)) - target
            else:
                continue
            lo, hi = 0.0, 1.0
            if g(lo) * g(hi) < 0:
                ev.append(brentq(g, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200))
        return np.unique(np.array(ev, dtype=float))

    def _need_residual(self):
        if self.degenerate:
            raise MeasureError("identical marginals: the coupling is the identity")

    def evaluate(self, u) -> CouplingRecord:
        self._need_residual()
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if np.any((u < 0) | (u > 1)):
            raise MeasureError("u must lie in [0, 1]")
        s = self.solver.solve(u)
        ga = self.gamma_a
        r = 1.0 + ga - u - s
        G = self.G
        if self.selection == "extremal":
            P = np.minimum(G.right(s), self.a)
            Q = np.maximum(G.left(r), self.b)
        else:
            P = G.left(s)
            Q = np.where(r >= 1.0, G.left(r), G.right(r))
        x = self.F.left(u)
        return CouplingRecord(u, x, P, Q, s, ga - u - s, _down_weight(x, P, Q))

    def pq(self, x):
        """``(p(x), q(x)) = (P(F(x)), Q(F(x)))`` for ``x`` in E."""
        rec = self.evaluate(np.clip(self.pair.eta_bar.cdf(np.atleast_1d(x)), 0.0, 1.0))
        return rec.P, rec.Q


def build_coupling(pair: MarginalPair, selection: str = "extremal") -> CouplingMap:
    return CouplingMap(pair, selection)


def _check_u(u):
    ua = np.asarray(u, dtype=float)
    if np.any((ua <= 0) | (ua >= 1)):
        raise MeasureError("u must lie strictly inside (0, 1)")


def E_u(pair: MarginalPair, u: float, x):
    """``D(x_u) + (x - x_u)(gamma_a - u) - D(x)`` for the normalized potential."""
    _check_u(u)
    pot = Potential.from_pair(pair, normalized=True)
    xu = pair.eta_bar.quantile_function.left(u)
    return pot.D(xu) + (np.asarray(x, dtype=float) - xu) * (pair.gamma_a - u) - pot.D(x)


def phi(pair: MarginalPair, u) -> tuple:
    """``(phi(u), P(u), Q(u))``."""
    _check_u(u)
    rec = CouplingMap(pair, grid_points=0).evaluate(u)
    if np.ndim(u) == 0:
        return float(rec.phi[0]), float(rec.P[0]), float(rec.Q[0])
    return rec.phi, rec.P, rec.Q


def zeta(pair: MarginalPair, u):
    _check_u(u)
    rec = CouplingMap(pair, grid_points=0).evaluate(u)
    return float(rec.zeta[0]) if np.ndim(u) == 0 else rec.zeta


def down_probability(c: CouplingMap, u):
    _check_u(u)
    w = c.evaluate(u).w
    return float(w[0]) if np.ndim(u) == 0 else w


def primal_price(c: CouplingMap, tol: float = 1e-12) -> float:
    """``(1 - kappa) int_0^1 2 (x_u - P)(Q - x_u) / (Q - P) du``."""
    if c.degenerate:
        return 0.0

    def f(u):
        rec = c.evaluate(u)
        return _straddle_integrand(rec.x, rec.P, rec.Q)

    return (1.0 - c.kappa) * integrate(f, c.knots, tol)


def sample(c: CouplingMap, seed: int, n: int) -> np.ndarray:
    """``n`` draws of ``(X, Y)`` as an ``(n, 2)`` array."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    z, u0, u, v = rng.random((4, n))
    out = np.empty((n, 2))
    stay = z < c.kappa
    if stay.any():
        common = c.pair.common.normalized() if not c.degenerate else c.pair.mu
        xs = common.quantile_function.left(u0[stay] * common.mass)
        out[stay, 0] = xs
        out[stay, 1] = xs
    move = ~stay
    if move.any():
        rec = c.evaluate(u[move])
        out[move, 0] = rec.x
        out[move, 1] = np.where(v[move] <= rec.w, rec.P, rec.Q)
    return out


# -- law of Y ---------------------------------------------------------------


class PushforwardLaw:
    """Distribution of ``Y`` under a coupling, obtained by integrating ``w``
    over the set of ``u`` sent below (or above) a level.

    ``W(u) = int_0^u w`` is tabulated once on a knot grid; off-grid values add a
    fixed Gauss-Legendre piece from the nearest knot to the left.
    """

    def __init__(self, c: CouplingMap, tol: float = 1e-13, subdiv: int = 64):
        self.c = c
        self.tol = tol
        if c.degenerate:
            return
        grid = np.unique(np.concatenate([c.knots, np.linspace(0.0, 1.0, subdiv + 1)]))
        self._grid = grid
        steps = [integrate(self._w, [grid[i], grid[i + 1]], tol) for i in range(len(grid) - 1)]
        self._W = np.concatenate([[0.0], np.cumsum(steps)])

    def _w(self, u):
        return self.c.evaluate(u).w

    def W(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        i = np.clip(np.searchsorted(self._grid, u, side="right") - 1, 0, len(self._grid) - 2)
        return self._W[i] + fixed_legendre(self._w, self._grid[i], u)

    def _cdf(self, ys: np.ndarray, strict: bool) -> np.ndarray:
        c, pair = self.c, self.c.pair
        common = pair.common
        if common.mass > 0:
            fc = np.asarray(common.cdf_left(ys) if strict else common.cdf(ys), dtype=float)
        else:
            fc = np.zeros_like(ys)
        if c.degenerate:
            return fc
        rest = 1.0 - c.kappa
        ga = c.gamma_a
        gb = pair.gamma_bar
        level = np.asarray(gb.cdf_left(ys) if strict else gb.cdf(ys), dtype=float)
        total_down = float(self._W[-1])
        out = fc + rest * total_down

        lo = ys <= c.a
        if lo.any():
            lv = level[lo]
            if strict:
                # P(u) < y  <=>  phi(u) < F(y-)
                ustar = first_true(lambda uu: c.solver.level_below(uu, lv), len(lv))
            else:
                ustar = first_true(lambda uu: c.solver.level_at_most(uu, lv), len(lv))
            out[lo] = fc[lo] + rest * (total_down - self.W(ustar))

        hi = ys >= c.b
        if hi.any():
            lv = level[hi]
            # Q(u) > y  <=>  r(u) > level  <=>  phi(u) < 1 + ga - u - level
            ustar = first_true(lambda uu: ~c.solver.level_below(uu, 1.0 + ga - uu - lv), len(lv))
            up_mass = rest * (ustar - self.W(ustar))
            out[hi] = 1.0 - (common.mass - fc[hi]) - up_mass
        return out

    def cdf(self, y) -> np.ndarray | float:
        ys = np.atleast_1d(np.asarray(y, dtype=float))
        out = self._cdf(ys, strict=False)
        return float(out[0]) if np.ndim(y) == 0 else out

    def cdf_left(self, y) -> np.ndarray | float:
        ys = np.atleast_1d(np.asarray(y, dtype=float))
        out = self._cdf(ys, strict=True)
        return float(out[0]) if np.ndim(y) == 0 else out

    def atom_mass(self, y: float) -> float:
        return float(self.cdf(y) - self.cdf_left(y))


def pushforward_law(c: CouplingMap) -> PushforwardLaw:
    return PushforwardLaw(c)


def marginal_error(c: CouplingMap, n_quantiles: int = 200) -> float:
    """Largest CDF gap between the law of ``Y`` and ``nu`` at breakpoints and quantiles of ``nu``."""
    nu = c.pair.nu
    levels = (np.arange(n_quantiles) + 0.5) / n_quantiles
    ys = np.concatenate([np.asarray(nu.breakpoints), nu.quantile_function.left(levels)])
    ys = ys[np.isfinite(ys)]
    law = PushforwardLaw(c)
    return float(np.max(np.abs(law.cdf(ys) - nu.cdf(ys)), initial=0.0))


# -- differential check -----------------------------------------------------


@dataclass(frozen=True)
class OdeResidual:
    applicable: bool
    p_residual: float = math.nan
    q_residual: float = math.nan

    @property
    def max(self) -> float:
        return max(self.p_residual, self.q_residual)


def ode_residual(pair: MarginalPair, c: CouplingMap, grid=None, h: float = 1e-5) -> OdeResidual:
    """Central-difference residuals of the differential system satisfied by ``p`` and ``q``:

        p' = -(q - x)/(q - p) * f_eta(x) / f_gamma(p)
        q' = -(x - p)/(q - p) * f_eta(x) / f_gamma(q)
    """
    if pair.mu.merged_atoms or pair.nu.merged_atoms or pair.identical:
        return OdeResidual(False)
    a, b = pair.a, pair.b
    if grid is None:
        grid = np.linspace(a, b, 202)[1:-1]
    x = np.asarray(grid, dtype=float)
    x = x[(x - h > a) & (x + h < b)]
    brk = np.asarray(pair.eta_bar.breakpoints)
    x = x[np.all(np.abs(x[:, None] - brk[None, :]) > 2 * h, axis=1)]
    p, q = c.pq(x)
    pp, qp = c.pq(x + h)
    pm, qm = c.pq(x - h)
    dp = (pp - pm) / (2 * h)
    dq = (qp - qm) / (2 * h)
    fe = pair.eta_bar.density(x)
    gb = pair.gamma_bar
    rp = dp + (q - x) / (q - p) * fe / gb.density(p)
    rq = dq + (x - p) / (q - p) * fe / gb.density(q)
    return OdeResidual(True, float(np.max(np.abs(rp))), float(np.max(np.abs(rq))))


# -- report -----------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    primal_price: float
    dual_value: float
    gap: float
    min_lagrangian: float
    marginal_error: float
    kappa: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "primal_price": self.primal_price,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "min_lagrangian": self.min_lagrangian,
            "marginal_error": self.marginal_error,
            "kappa": self.kappa,
        }
        d.update(self.extra)
        return d


def bound_report(pair: MarginalPair, grid: int = 200, with_dual: bool = True) -> BoundReport:
    """Price, dual value, Lagrangian certificate and marginal check for one pair."""
    from .dual_hedge import build_hedge, dual_value, verify_subhedge

    c = CouplingMap(pair)
    price = primal_price(c)
    if not with_dual:
        return BoundReport(price, math.nan, math.nan, math.nan, math.nan, pair.kappa)
    h = build_hedge(c)
    dual = dual_value(h)
    cert = verify_subhedge(h, grid, grid)
    err = 0.0 if c.degenerate else marginal_error(c)
    return BoundReport(price, dual, price - dual, cert.min_value, err, pair.kappa, {"E": [pair.a, pair.b]})
