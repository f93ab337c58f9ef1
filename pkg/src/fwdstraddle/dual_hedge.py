"""Semi-static subhedge ``(psi, delta)`` matching the lower coupling.

On ``E = [a, b]``::

    theta(x) = int_{x0}^x 2 / (q - p) dz
    alpha(x) = x theta(x) - int_{x0}^x (q + p) / (q - p) dz

with ``p = P o F``, ``q = Q o F``.  Off ``E`` the pair is extended through the
generalized inverses ``p_R^{-1}(y) = inf{x in E : p(x) <= y}`` (below ``a``)
and ``q_L^{-1}(y) = sup{x in E : q(x) >= y}`` (above ``b``).  The Lagrangian

    L(x, y) = |y - x| + psi(x) - psi(y) + delta(x)(y - x)

is then non-negative and vanishes on the support of the coupling, so
``int psi dnu - int psi dmu`` equals the coupling's price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._split import first_true
from .lower_coupling import CouplingMap
from .measures import MeasureError, integrate_function
from .quadrature import fixed_legendre, integrate

_SUBDIV = 64


class HedgePair:
    def __init__(self, c: CouplingMap, x0: float | None = None, tol: float = 1e-13):
        self.c = c
        self.degenerate = c.degenerate
        if self.degenerate:
            self.a = self.b = self.x0 = 0.0
            return
        pair = c.pair
        self.a, self.b = pair.a, pair.b
        self.x0 = 0.5 * (self.a + self.b) if x0 is None else float(x0)
        if not self.a <= self.x0 <= self.b:
            raise MeasureError("x0 must lie in E")
        eta = pair.eta_bar
        knots = {self.a, self.b, self.x0}
        knots.update(x for x in eta.breakpoints if self.a <= x <= self.b)
        ev = c.events
        if len(ev):
            knots.update(np.asarray(eta.quantile_function.left(ev)).tolist())
            knots.update(np.minimum(np.asarray(eta.quantile_function.right(ev)), self.b).tolist())
        if self.b > self.a:
            knots.update(np.linspace(self.a, self.b, _SUBDIV + 1).tolist())
        self.knots = np.array(sorted(k for k in knots if self.a <= k <= self.b))
        self._theta_k, self._beta_k = self._accumulate(tol)

    # -- integrands ------------------------------------------------------------

    def _pq(self, z):
        return self.c.pq(z)

    def _theta_density(self, z):
        p, q = self._pq(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.isinf(q - p), 0.0, 2.0 / (q - p))

    def _beta_density(self, z):
        p, q = self._pq(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = (q + p) / (q - p)
        v = np.where(np.isinf(q) & np.isfinite(p), 1.0, v)
        v = np.where(np.isinf(p) & np.isfinite(q), -1.0, v)
        return v

    def _accumulate(self, tol):
        k = self.knots
        i0 = int(np.searchsorted(k, self.x0))
        th = np.zeros(len(k))
        be = np.zeros(len(k))
        for i in range(len(k) - 1):
            th[i + 1] = integrate(self._theta_density, [k[i], k[i + 1]], tol)
            be[i + 1] = integrate(self._beta_density, [k[i], k[i + 1]], tol)
        th = np.cumsum(th)
        be = np.cumsum(be)
        return th - th[i0], be - be[i0]

    def _from_knots(self, x, cum, dens):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any((x < self.a) | (x > self.b)):
            raise MeasureError("theta/alpha are defined on E only; use psi/delta elsewhere")
        i = np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, len(self.knots) - 1)
        base = self.knots[i]
        return cum[i] + fixed_legendre(dens, base, x)

    # -- multipliers on E ------------------------------------------------------

    def theta(self, x):
        if self.degenerate:
            return np.zeros_like(np.asarray(x, dtype=float))
        out = self._from_knots(x, self._theta_k, self._theta_density)
        return float(out[0]) if np.ndim(x) == 0 else out

    def beta(self, x):
        out = self._from_knots(x, self._beta_k, self._beta_density)
        return float(out[0]) if np.ndim(x) == 0 else out

    def alpha(self, x):
        if self.degenerate:
            return np.zeros_like(np.asarray(x, dtype=float))
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = xa * self._from_knots(xa, self._theta_k, self._theta_density) - self._from_knots(
            xa, self._beta_k, self._beta_density
        )
        return float(out[0]) if np.ndim(x) == 0 else out

    # -- generalized inverses ----------------------------------------------------

    def p_inverse(self, y):
        """``inf{x in E : p(x) <= y}`` for ``y < a`` (``b`` when empty)."""
        c = self.c
        y = np.atleast_1d(np.asarray(y, dtype=float))
        level = np.asarray(c.pair.gamma_bar.cdf(y), dtype=float)
        u = first_true(lambda uu: c.solver.level_at_most(uu, level), len(y))
        # below the support the set is {b}; bisection there is ill-conditioned
        return np.where(level <= 0.0, self.b, self._eta_left(u))

    def q_inverse(self, y):
        """``sup{x in E : q(x) >= y}`` for ``y > b`` (``a`` when empty)."""
        c = self.c
        y = np.atleast_1d(np.asarray(y, dtype=float))
        level = np.asarray(c.pair.gamma_bar.cdf_left(y), dtype=float)
        ga = c.gamma_a
        # q(x) >= y  <=>  r(u) > F(y-)  <=>  phi(u) < 1 + ga - u - F(y-)
        u = first_true(lambda uu: ~c.solver.level_below(uu, 1.0 + ga - uu - level), len(y))
        eta = c.pair.eta_bar.quantile_function
        z = np.clip(np.where(u <= 0, self.a, eta.right(u)), self.a, self.b)
        return np.where(level >= c.pair.gamma_bar.mass, self.a, z)

    def _eta_left(self, u):
        eta = self.c.pair.eta_bar.quantile_function
        return np.clip(np.where(u <= 0, self.a, eta.left(u)), self.a, self.b)

    # -- extended hedge ----------------------------------------------------------

    def psi(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.degenerate:
            out = np.zeros_like(y)
            return float(out[0]) if out.size == 1 and np.ndim(y) == 0 else out
        out = np.empty_like(y)
        mid = (y >= self.a) & (y <= self.b)
        lo, hi = y < self.a, y > self.b
        if mid.any():
            out[mid] = self.alpha(y[mid])
        if lo.any():
            z = self.p_inverse(y[lo])
            out[lo] = self.alpha(z) + (z - y[lo]) * (1.0 - self.theta(z))
        if hi.any():
            z = self.q_inverse(y[hi])
            out[hi] = self.alpha(z) + (z - y[hi]) * (-1.0 - self.theta(z))
        return out

    def delta(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.degenerate:
            return np.zeros_like(x)
        out = np.empty_like(x)
        mid = (x >= self.a) & (x <= self.b)
        lo, hi = x < self.a, x > self.b
        if mid.any():
            out[mid] = self.theta(x[mid])
        if lo.any():
            out[lo] = self.theta(self.p_inverse(x[lo]))
        if hi.any():
            out[hi] = self.theta(self.q_inverse(x[hi]))
        return out


def build_hedge(c: CouplingMap, x0: float | None = None) -> HedgePair:
    return HedgePair(c, x0)


def theta(h: HedgePair, x):
    return h.theta(x)


def alpha(h: HedgePair, x):
    return h.alpha(x)


def psi(h: HedgePair, y):
    out = h.psi(y)
    return float(out[0]) if np.ndim(y) == 0 else out


def delta(h: HedgePair, x):
    out = h.delta(x)
    return float(out[0]) if np.ndim(x) == 0 else out


def lagrangian(h: HedgePair, x, y):
    """``|y - x| + psi(x) - psi(y) + delta(x)(y - x)`` (broadcasting)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xb, yb = np.broadcast_arrays(x, y)
    ux, ix = np.unique(xb, return_inverse=True)
    uy, iy = np.unique(yb, return_inverse=True)
    px, dx = h.psi(ux)[ix], h.delta(ux)[ix]
    py = h.psi(uy)[iy]
    out = np.abs(yb - xb) + px - py + dx * (yb - xb)
    out = out.reshape(xb.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SubhedgeCertificate:
    min_value: float
    argmin: tuple[float, float]
    max_abs_support: float
    passed: bool
    window: tuple[float, float]


def _window(h: HedgePair, pad: float, cap: float) -> tuple[float, float]:
    pair = h.c.pair
    lo = min(pair.mu.support[0], pair.nu.support[0])
    hi = max(pair.mu.support[1], pair.nu.support[1])
    return max(lo - pad, -cap), min(hi + pad, cap)


def support_points(h: HedgePair, n: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Pairs on which ``L`` must vanish: ``(x, p(x)), (x, x), (x, q(x))`` for ``x``
    in an E-grid, plus pairs across jumps of ``p`` and ``q``."""
    if h.degenerate:
        x = np.linspace(-1, 1, n)
        return x, x
    c = h.c
    a, b = h.a, h.b
    xs = np.unique(np.concatenate([np.linspace(a, b, n), h.knots]))
    p, q = c.pq(xs)
    X = [xs, xs, xs]
    Y = [p, xs, q]
    # across a jump of p or q the hedge is flat in y between the one-sided values
    eps = 1e-9 * max(1.0, b - a)
    jumps = np.unique(np.concatenate([h.knots]))
    for z in jumps:
        zl, zr = max(z - eps, a), min(z + eps, b)
        pl, ql = c.pq(np.array([zl]))
        pr, qr = c.pq(np.array([zr]))
        for lo_v, hi_v in ((pr[0], pl[0]), (qr[0], ql[0])):
            if np.isfinite(lo_v) and np.isfinite(hi_v) and hi_v - lo_v > 1e-6:
                ys = np.linspace(lo_v, hi_v, 9)[1:-1]
                X.append(np.full_like(ys, z))
                Y.append(ys)
    # jump points of the level maps themselves
    if len(c.events):
        eta = c.pair.eta_bar.quantile_function
        for ue in c.events:
            z = float(np.clip(eta.left(ue), a, b))
            below = c.evaluate(np.array([max(ue - 1e-12, 0.0)]))
            above = c.evaluate(np.array([min(ue + 1e-12, 1.0)]))
            for lo_v, hi_v in ((above.P[0], below.P[0]), (above.Q[0], below.Q[0])):
                if np.isfinite(lo_v) and np.isfinite(hi_v) and hi_v - lo_v > 1e-6:
                    ys = np.linspace(lo_v, hi_v, 9)[1:-1]
                    X.append(np.full_like(ys, z))
                    Y.append(ys)
    X = np.concatenate(X)
    Y = np.concatenate(Y)
    keep = np.isfinite(Y)
    return X[keep], Y[keep]


def verify_subhedge(
    h: HedgePair, grid_nx: int = 1000, grid_ny: int = 1000, pad: float = 2.0, cap: float = 10.0, tol: float = 1e-9
) -> SubhedgeCertificate:
    """Minimum of ``L`` over a product grid on the padded hull of the supports
    (clipped to ``[-cap, cap]``), and the largest ``|L|`` on support pairs."""
    if grid_nx < 2 or grid_ny < 2:
        raise ValueError("grids need at least two points")
    lo, hi = _window(h, pad, cap)
    xs = np.linspace(lo, hi, grid_nx)
    ys = np.linspace(lo, hi, grid_ny)
    px, dx = h.psi(xs), h.delta(xs)
    py = h.psi(ys)
    L = np.abs(ys[None, :] - xs[:, None]) + px[:, None] - py[None, :] + dx[:, None] * (ys[None, :] - xs[:, None])
    i, j = np.unravel_index(int(np.argmin(L)), L.shape)
    sx, sy = support_points(h)
    Ls = lagrangian(h, sx, sy)
    m_support = float(np.max(np.abs(Ls))) if len(Ls) else 0.0
    min_val = min(float(L[i, j]), float(np.min(Ls)) if len(Ls) else math.inf)
    return SubhedgeCertificate(min_val, (float(xs[i]), float(ys[j])), m_support, min_val >= -tol and m_support <= tol, (lo, hi))


def hedge_value(f, mu, nu, tol: float = 1e-12) -> float:
    """``int f dnu - int f dmu`` for a vectorized function ``f``."""
    return integrate_function(f, nu, tol) - integrate_function(f, mu, tol)


def dual_value(h: HedgePair, tol: float = 1e-12) -> float:
    """``int psi dnu - int psi dmu``.

    The common mass contributes equally to both integrals, so the value is
    computed as ``(1 - kappa)(int psi dgamma_bar - int alpha deta_bar)``.
    """
    if h.degenerate:
        return 0.0
    pair = h.c.pair
    up = integrate_function(h.psi, pair.gamma_bar, tol)
    down = integrate_function(h.alpha, pair.eta_bar, tol)
    return (1.0 - pair.kappa) * (up - down)
