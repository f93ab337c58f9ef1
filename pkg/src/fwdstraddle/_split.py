"""Shared level-space solver for the bi-tangent constructions.

Both couplings reduce to finding, for each ``u``, the level ``s`` with

    h(s) = K(u) - m(s) - m(c(u) - s) = 0,    s in [lo(u), hi(u)],

where ``m`` is the partial quantile integral of the target residual.  ``h`` is
non-decreasing in ``s`` because its derivative is ``G(c - s) - G(s) >= 0``.
Between consecutive level breakpoints ``h`` is a quadratic (atoms and flat
cells) and is solved in closed form; segments involving power-law cells fall
back to vectorized bisection.
"""

from __future__ import annotations

import numpy as np

from .measures import QuantileFunction

_CHUNK = 1 << 15


class LevelSolver:
    def __init__(self, G: QuantileFunction, K, c, bounds):
        self.G = G
        self.K = K
        self.c = c
        self.bounds = bounds
        self._breaks = np.concatenate([[0.0], G.v1])

    def h(self, s, u):
        K, c = self.K(u), self.c(u)
        return K - self.G.partial(s) - self.G.partial(c - s)

    def _h_rows(self, s, K, c):
        return K - self.G.partial(s) - self.G.partial(c - s)

    def solve(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.empty_like(u)
        for start in range(0, len(u), _CHUNK):
            sl = slice(start, start + _CHUNK)
            out[sl] = self._solve(u[sl])
        return out

    def _solve(self, u: np.ndarray) -> np.ndarray:
        G = self.G
        K, c = self.K(u), self.c(u)
        lo, hi = self.bounds(u)
        hi = np.maximum(hi, lo)
        br = self._breaks[None, :]
        cand = np.concatenate([lo[:, None], hi[:, None], np.broadcast_to(br, (len(u), br.shape[1])), c[:, None] - br], axis=1)
        cand = np.clip(cand, lo[:, None], hi[:, None])
        H = self._h_rows(cand, K[:, None], c[:, None])
        neg = H < 0
        s_left = np.where(neg, cand, lo[:, None]).max(axis=1)
        s_right = np.where(neg, hi[:, None], cand).min(axis=1)
        s_right = np.maximum(s_right, s_left)

        mid = 0.5 * (s_left + s_right)
        iL = G.index(mid)
        iR = G.index(c - mid)
        bL, bR = G.slopes[iL], G.slopes[iR]
        h0 = self._h_rows(s_left, K, c)
        a1 = G.value_in(iL, s_left)
        a2 = G.value_in(iR, c - s_left)
        A = 0.5 * (bL + bR)
        B = a2 - a1
        with np.errstate(invalid="ignore", divide="ignore"):
            disc = np.sqrt(np.maximum(B * B + 4.0 * A * h0, 0.0))
            d = np.where(h0 >= 0, 0.0, -2.0 * h0 / (B + disc))
        d = np.where(np.isfinite(d), d, 0.0)
        s = np.clip(s_left + d, s_left, s_right)

        curved = ~(np.isfinite(bL) & np.isfinite(bR)) & (s_right > s_left)
        if curved.any():
            s[curved] = self._bisect(s_left[curved], s_right[curved], K[curved], c[curved])
        return s

    def _bisect(self, lo, hi, K, c, iters: int = 200):
        lo, hi = lo.copy(), hi.copy()
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            pos = self._h_rows(mid, K, c) >= 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
            if np.all(hi - lo <= 1e-17 + 2e-16 * np.abs(hi)):
                break
        return 0.5 * (lo + hi)

    # predicates used to invert the level map --------------------------------

    def level_at_most(self, u, level):
        """``s(u) <= level``."""
        lo, hi = self.bounds(u)
        hi = np.maximum(hi, lo)
        inside = (level >= lo) & (level < hi)
        t = np.clip(level, lo, hi)
        return (level >= hi) | (inside & (self.h(t, u) >= 0))

    def level_below(self, u, level):
        """``s(u) < level``."""
        lo, hi = self.bounds(u)
        hi = np.maximum(hi, lo)
        inside = (level > lo) & (level <= hi)
        t = np.clip(level, lo, hi)
        return (level > hi) | (inside & (self.h(t, u) > 0))


def first_true(pred, n: int, iters: int = 64) -> np.ndarray:
    """Vectorized ``inf{u in [0, 1] : pred(u)[i]}`` for predicates monotone false -> true in u.

    ``pred`` maps an array of ``n`` u-values to booleans; rows where the
    predicate is false at u = 1 return 1.
    """
    lo = np.zeros(n)
    hi = np.ones(n)
    at0 = pred(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = pred(mid)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return np.where(at0, 0.0, hi)
