"""The potential ``D = C_nu - C_mu`` and its conjugates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .measures import MarginalPair, Measure, MeasureError, difference_structure, stationary_points

_SIDES = ("left", "right")


@dataclass(frozen=True)
class ShapeVerdict:
    ok: bool
    x: float | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


class Potential:
    """``D(x) = C_nu(x) - C_mu(x)`` for a pair of measures of equal mass.

    ``Potential.from_pair(pair, normalized=True)`` builds ``D / (1 - kappa)``,
    i.e. the potential of the residual pair ``(eta_bar, gamma_bar)``.
    """

    def __init__(self, mu: Measure, nu: Measure, a: float | None = None, b: float | None = None):
        self.mu = mu
        self.nu = nu
        self.spans, self.jumps = difference_structure(mu, nu)
        if a is None or b is None:
            a, b = self._excess_hull()
        self.a = a
        self.b = b

    @classmethod
    def from_pair(cls, pair: MarginalPair, normalized: bool = False) -> "Potential":
        if normalized:
            if pair.identical:
                raise MeasureError("identical marginals have no residual potential")
            return cls(pair.eta_bar, pair.gamma_bar, pair.a, pair.b)
        return cls(pair.mu, pair.nu, pair.a, pair.b)

    def _excess_hull(self) -> tuple[float, float]:
        pts = [x for x, j in self.jumps.items() if j < 0]
        for l, h, d in self.spans:
            if d is not None and d.coef < 0:
                pts += [l, h]
        if not pts:
            return math.nan, math.nan
        return min(pts), max(pts)

    @cached_property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.mu.breakpoints) | set(self.nu.breakpoints)))

    def D(self, x):
        return self.nu.call(x) - self.mu.call(x)

    __call__ = D

    def D_prime(self, x, side: str):
        if side == "left":
            return self.nu.cdf_left(x) - self.mu.cdf_left(x)
        if side == "right":
            return self.nu.cdf(x) - self.mu.cdf(x)
        raise ValueError(f"side must be one of {_SIDES}")

    def shape_check(self, tol: float = 1e-12) -> ShapeVerdict:
        """Concave on (a, b), convex off [a, b], judged from density and atom signs."""
        a, b = self.a, self.b
        for l, h, d in self.spans:
            if d is None:
                continue
            inside = a <= l and h <= b
            if inside and d.coef > tol:
                return ShapeVerdict(False, _mid(l, h), "convex inside E")
            if not inside and d.coef < -tol:
                return ShapeVerdict(False, _mid(l, h), "concave outside E")
        for x, j in self.jumps.items():
            if a < x < b and j > tol:
                return ShapeVerdict(False, x, "convex kink inside E")
            if (x < a or x > b) and j < -tol:
                return ShapeVerdict(False, x, "concave kink outside E")
        return ShapeVerdict(True)

    def _candidates(self, theta: float, lo: float, hi: float) -> np.ndarray:
        pts = {x for x in self.breakpoints if lo <= x <= hi}
        pts.update(x for x in stationary_points(self.mu, self.nu, theta, self.spans) if lo <= x <= hi)
        pts.update(x for x in (lo, hi) if math.isfinite(x))
        return np.array(sorted(pts))

    def conjugate(self, region: str, theta: float) -> tuple[float, float]:
        """Optimum of ``D(x) - theta x`` over a region, with its optimizer.

        ``below_a``: inf over x <= a (theta >= 0); ``above_b``: inf over
        x >= b (theta <= 0); ``inside``: sup over [a, b].  Ties go to the
        optimizer closest to E from outside, and to the leftmost point inside.
        """
        a, b = self.a, self.b
        if region == "below_a":
            if theta < 0:
                raise MeasureError("below_a conjugate needs theta >= 0")
            xs = self._candidates(theta, -math.inf, a)
            vals = self.D(xs) - theta * xs
            best = float(np.min(vals))
            x = float(xs[np.flatnonzero(vals <= best + 1e-15).max()])
            lo_tail = self.mu.support[0] == -math.inf or self.nu.support[0] == -math.inf
            if theta == 0 and lo_tail and best > 0:
                return 0.0, -math.inf
            return best, x
        if region == "above_b":
            if theta > 0:
                raise MeasureError("above_b conjugate needs theta <= 0")
            xs = self._candidates(theta, b, math.inf)
            vals = self.D(xs) - theta * xs
            best = float(np.min(vals))
            x = float(xs[np.flatnonzero(vals <= best + 1e-15).min()])
            hi_tail = self.mu.support[1] == math.inf or self.nu.support[1] == math.inf
            if theta == 0 and hi_tail and best > 0:
                return 0.0, math.inf
            return best, x
        if region == "inside":
            # supporting slopes at the ends of E include the outer one-sided derivatives
            lo, hi = float(self.D_prime(b, "right")), float(self.D_prime(a, "left"))
            if not lo - 1e-12 <= theta <= hi + 1e-12:
                raise MeasureError(f"theta {theta} outside the slope range [{lo}, {hi}] of D on E")
            xs = self._candidates(theta, a, b)
            vals = self.D(xs) - theta * xs
            best = float(np.max(vals))
            return best, float(xs[np.flatnonzero(vals >= best - 1e-15).min()])
        raise ValueError("region must be below_a, above_b or inside")

    def sup(self) -> tuple[float, float]:
        """Maximum of D and a maximizer."""
        xs = self._candidates(0.0, -math.inf, math.inf)
        vals = self.D(xs)
        i = int(np.argmax(vals))
        return float(vals[i]), float(xs[i])


def _mid(l: float, h: float) -> float:
    if math.isfinite(l) and math.isfinite(h):
        return 0.5 * (l + h)
    return l if math.isfinite(l) else h
