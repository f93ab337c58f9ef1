"""Piecewise-analytic measures on the real line.

A :class:`Measure` is a finite mixture of point masses, uniform pieces and
power-law pieces.  A power-law piece carries density proportional to
``|x|**-(k+1)`` on an interval that stays away from the origin; the interval
may be unbounded on the far side, which gives Pareto-type tails.

Every quantity used downstream has a closed form on this class: distribution
functions, left and right quantiles, partial quantile integrals
``m(v) = int_0^v F^{-1}``, call prices and moments.  Internally a measure is
refined into non-overlapping *cells* (flat or power density) plus merged atoms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

MASS_TOL = 1e-12
ORDER_TOL = 1e-12
_DROP = 1e-15  # cells/atoms lighter than this are discarded


class MeasureError(ValueError):
    """Invalid measure or unsupported construction."""


class ConvexOrderError(MeasureError):
    def __init__(self, witness: float, message: str = ""):
        self.witness = witness
        super().__init__(message or f"convex_order violated_at {witness!r}")


class DispersionError(MeasureError):
    """Excess target mass found strictly inside the hull of the excess source mass."""

    def __init__(self, interval: tuple[float, float], message: str = ""):
        self.interval = interval
        super().__init__(message or f"dispersion violated on [{interval[0]!r}, {interval[1]!r}]")


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class FlatCell:
    """Constant density ``rho`` on ``[lo, hi]`` (rho may be negative for signed differences)."""

    lo: float
    hi: float
    rho: float

    @property
    def mass(self) -> float:
        return self.rho * (self.hi - self.lo)

    @property
    def quantile_slope(self) -> float:
        return 1.0 / self.rho

    def shape(self):
        return ("flat",)

    def density(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.rho)

    def mass_to(self, y):
        return self.rho * (y - self.lo)

    def moment_to(self, y):
        return 0.5 * self.rho * (y - self.lo) * (y + self.lo)

    def moment2_to(self, y):
        return self.rho * (y**3 - self.lo**3) / 3.0

    def inverse(self, m):
        return self.lo + m / self.rho

    def partial(self, d):
        # first moment of the lowest d units of mass
        return d * (self.lo + 0.5 * d / self.rho)

    def with_coef(self, coef: float, lo: float, hi: float) -> "FlatCell":
        return FlatCell(lo, hi, coef)

    @property
    def coef(self) -> float:
        return self.rho


@dataclass(frozen=True)
class PowerCell:
    """Density ``coef * |y|**-(k+1)`` on ``[lo, hi]``; the interval excludes 0.

    On the negative side ``lo`` may be ``-inf``; on the positive side ``hi``
    may be ``+inf``.
    """

    lo: float
    hi: float
    coef: float
    k: float

    def __post_init__(self):
        if not (self.lo > 0 or self.hi < 0):
            raise MeasureError("power-law cell must not contain the origin")

    @property
    def positive(self) -> bool:
        return self.lo > 0

    def shape(self):
        return ("power", self.k)

    @property
    def quantile_slope(self) -> float:
        return math.nan

    @property
    def mass(self) -> float:
        return float(self.mass_to(self.hi))

    def density(self, y):
        return self.coef * np.abs(np.asarray(y, dtype=float)) ** (-self.k - 1.0)

    def mass_to(self, y):
        k, c = self.k, self.coef
        if self.positive:
            return c / k * (self.lo ** -k - np.asarray(y, dtype=float) ** -k)
        return c / k * (np.abs(y) ** -k - abs(self.lo) ** -k)

    def moment_to(self, y):
        k, c = self.k, self.coef
        if self.positive:
            return c / (k - 1.0) * (self.lo ** (1.0 - k) - np.asarray(y, dtype=float) ** (1.0 - k))
        return -c / (k - 1.0) * (np.abs(y) ** (1.0 - k) - abs(self.lo) ** (1.0 - k))

    def moment2_to(self, y):
        k, c = self.k, self.coef
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            if self.positive:
                if k == 2.0:
                    return c * np.log(y / self.lo)
                return c / (2.0 - k) * (y ** (2.0 - k) - self.lo ** (2.0 - k))
            if k == 2.0:
                return c * np.log(abs(self.lo) / np.abs(y))
            return c / (2.0 - k) * (abs(self.lo) ** (2.0 - k) - np.abs(y) ** (2.0 - k))

    def inverse(self, m):
        k, c = self.k, self.coef
        m = np.asarray(m, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.positive:
                base = self.lo ** -k - m * k / c
                return np.where(base > 0, np.abs(base) ** (-1.0 / k), np.inf)
            base = m * k / c + abs(self.lo) ** -k
            return np.where(base > 0, -(np.abs(base) ** (-1.0 / k)), -np.inf)

    def partial(self, d):
        return self.moment_to(self.inverse(d))

    def with_coef(self, coef: float, lo: float, hi: float) -> "PowerCell":
        return PowerCell(lo, hi, coef, self.k)


Cell = FlatCell | PowerCell


def _power_norm(lo: float, hi: float, k: float) -> float:
    """Integral of |y|**-(k+1) over [lo, hi]."""
    near, far = (lo, hi) if lo > 0 else (abs(hi), abs(lo))
    return (near**-k - far**-k) / k


# ---------------------------------------------------------------------------
# measure


@dataclass(frozen=True)
class Measure:
    """Mixture of atoms ``(x, w)``, uniform pieces ``(lo, hi, w)`` and power pieces ``(lo, hi, k, w)``.

    Weights are absolute masses, so ``Measure(pieces=((0, 1, 0.5),))`` is half of U[0, 1].
    """

    atoms: tuple[tuple[float, float], ...] = ()
    pieces: tuple[tuple[float, float, float], ...] = ()
    powers: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((float(x), float(w)) for x, w in self.atoms))
        object.__setattr__(self, "pieces", tuple((float(a), float(b), float(w)) for a, b, w in self.pieces))
        object.__setattr__(
            self, "powers", tuple((float(a), float(b), float(k), float(w)) for a, b, k, w in self.powers)
        )
        for x, w in self.atoms:
            if not math.isfinite(x) or not (w >= 0 and math.isfinite(w)):
                raise MeasureError(f"bad atom ({x}, {w})")
        for lo, hi, w in self.pieces:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise MeasureError(f"bad uniform piece [{lo}, {hi}]")
            if not (w >= 0 and math.isfinite(w)):
                raise MeasureError(f"bad uniform weight {w}")
        for lo, hi, k, w in self.powers:
            if not (lo < hi) or not (k > 1 and math.isfinite(k)):
                raise MeasureError(f"bad power piece [{lo}, {hi}] with index {k}")
            if not (lo > 0 and math.isfinite(lo)) and not (hi < 0 and math.isfinite(hi)):
                raise MeasureError("power piece must stay on one side of the origin with a finite near end")
            if not (w >= 0 and math.isfinite(w)):
                raise MeasureError(f"bad power weight {w}")

    # -- construction helpers ------------------------------------------------

    @classmethod
    def uniform(cls, lo: float, hi: float, w: float = 1.0) -> "Measure":
        return cls(pieces=((lo, hi, w),))

    @classmethod
    def dirac(cls, x: float, w: float = 1.0) -> "Measure":
        return cls(atoms=((x, w),))

    @classmethod
    def discrete(cls, xs: Iterable[float], ws: Iterable[float] | None = None) -> "Measure":
        xs = list(xs)
        ws = [1.0 / len(xs)] * len(xs) if ws is None else list(ws)
        return cls(atoms=tuple(zip(xs, ws)))

    def __add__(self, other: "Measure") -> "Measure":
        return Measure(self.atoms + other.atoms, self.pieces + other.pieces, self.powers + other.powers)

    def scaled(self, c: float) -> "Measure":
        return Measure(
            tuple((x, c * w) for x, w in self.atoms),
            tuple((a, b, c * w) for a, b, w in self.pieces),
            tuple((a, b, k, c * w) for a, b, k, w in self.powers),
        )

    def normalized(self) -> "Measure":
        return self.scaled(1.0 / self.mass)

    # -- canonical layout ----------------------------------------------------

    @cached_property
    def _layout(self) -> tuple[tuple[Cell, ...], tuple[tuple[float, float], ...]]:
        pts: set[float] = set()
        for lo, hi, _ in self.pieces:
            pts.update((lo, hi))
        for lo, hi, _, _ in self.powers:
            pts.update(v for v in (lo, hi) if math.isfinite(v))
        merged: dict[float, float] = {}
        for x, w in self.atoms:
            merged[x] = merged.get(x, 0.0) + w
        pts.update(merged)
        grid = sorted(pts)
        spans = list(zip(grid[:-1], grid[1:]))
        if any(lo == -math.inf for lo, _, _, _ in self.powers):
            spans.insert(0, (-math.inf, grid[0]))
        if any(hi == math.inf for _, hi, _, _ in self.powers):
            spans.append((grid[-1], math.inf))

        cells: list[Cell] = []
        for l, h in spans:
            rho = sum(w / (b - a) for a, b, w in self.pieces if a <= l and h <= b)
            coefs: dict[float, float] = {}
            for a, b, k, w in self.powers:
                if a <= l and h <= b and w > 0:
                    coefs[k] = coefs.get(k, 0.0) + w / _power_norm(a, b, k)
            if coefs and rho > 0:
                raise MeasureError("uniform and power-law pieces may not overlap")
            if len(coefs) > 1:
                raise MeasureError("power-law pieces with different indices may not overlap")
            cell: Cell | None = None
            if coefs:
                (k, c), = coefs.items()
                cell = PowerCell(l, h, c, k)
            elif rho > 0:
                cell = FlatCell(l, h, rho)
            if cell is not None and cell.mass > _DROP:
                cells.append(cell)
        atoms = tuple((x, w) for x, w in sorted(merged.items()) if w > _DROP)
        return tuple(cells), atoms

    @property
    def cells(self) -> tuple[Cell, ...]:
        return self._layout[0]

    @property
    def merged_atoms(self) -> tuple[tuple[float, float], ...]:
        return self._layout[1]

    @cached_property
    def segments(self) -> tuple[tuple[str, object], ...]:
        """Cells and atoms in increasing spatial order (the order of the quantile function)."""
        items = [((c.lo, 1), ("cell", c)) for c in self.cells]
        items += [((x, 0), ("atom", (x, w))) for x, w in self.merged_atoms]
        items.sort(key=lambda t: t[0])
        return tuple(it for _, it in items)

    @cached_property
    def breakpoints(self) -> tuple[float, ...]:
        pts = {x for x, _ in self.merged_atoms}
        for c in self.cells:
            pts.update(v for v in (c.lo, c.hi) if math.isfinite(v))
        return tuple(sorted(pts))

    # -- scalar summaries ----------------------------------------------------

    @cached_property
    def mass(self) -> float:
        return math.fsum([w for _, w in self.merged_atoms] + [c.mass for c in self.cells])

    @cached_property
    def mean(self) -> float:
        return math.fsum([x * w for x, w in self.merged_atoms] + [float(c.moment_to(c.hi)) for c in self.cells])

    @cached_property
    def second_moment(self) -> float:
        return math.fsum(
            [x * x * w for x, w in self.merged_atoms] + [float(c.moment2_to(c.hi)) for c in self.cells]
        )

    @property
    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= MASS_TOL

    @cached_property
    def support(self) -> tuple[float, float]:
        lo = [x for x, _ in self.merged_atoms] + [c.lo for c in self.cells]
        hi = [x for x, _ in self.merged_atoms] + [c.hi for c in self.cells]
        if not lo:
            raise MeasureError("empty measure has no support")
        return min(lo), max(hi)

    # -- functions of x ------------------------------------------------------

    def cdf(self, x):
        """Right-continuous ``m((-inf, x])``."""
        return self._cdf(x, strict=False)

    def cdf_left(self, x):
        """Left limit ``m((-inf, x))``."""
        return self._cdf(x, strict=True)

    def _cdf(self, x, strict: bool):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for xa, w in self.merged_atoms:
            out += w * ((x > xa) if strict else (x >= xa))
        for c in self.cells:
            out += c.mass_to(np.clip(x, c.lo, c.hi))
        return out if out.ndim else float(out)

    def density(self, x):
        """Density of the continuous part (right-continuous at cell edges)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c in self.cells:
            inside = (x >= c.lo) & (x < c.hi)
            out = np.where(inside, c.density(np.where(inside, x, c.lo if math.isfinite(c.lo) else c.hi)), out)
        return out if out.ndim else float(out)

    def call(self, x):
        """``int (y - x)^+ m(dy)``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for xa, w in self.merged_atoms:
            out += w * np.maximum(xa - x, 0.0)
        for c in self.cells:
            z = np.clip(x, c.lo, c.hi)
            out += (c.moment_to(c.hi) - c.moment_to(z)) - x * (c.mass_to(c.hi) - c.mass_to(z))
        return out if out.ndim else float(out)

    def put(self, x):
        """``int (x - y)^+ m(dy)``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for xa, w in self.merged_atoms:
            out += w * np.maximum(x - xa, 0.0)
        for c in self.cells:
            z = np.clip(x, c.lo, c.hi)
            out += x * c.mass_to(z) - c.moment_to(z)
        return out if out.ndim else float(out)

    def abs_moment(self, x) -> float:
        """``int |y - x| m(dy)``."""
        return self.call(x) + self.put(x)

    # -- quantiles -----------------------------------------------------------

    @cached_property
    def quantile_function(self) -> "QuantileFunction":
        return QuantileFunction(self)

    def quantile_left(self, u):
        """``inf{x : F(x) >= u}`` for ``u`` in (0, 1) (scaled by mass for sub-probability measures)."""
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr <= 0) | (u_arr >= self.mass)):
            raise MeasureError("quantile level must lie strictly inside (0, mass)")
        return self.quantile_function.left(u)

    def quantile_right(self, u):
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr <= 0) | (u_arr >= self.mass)):
            raise MeasureError("quantile level must lie strictly inside (0, mass)")
        return self.quantile_function.right(u)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        out: dict = {
            "atoms": [{"x": x, "w": w} for x, w in self.atoms],
            "uniform": [{"lo": a, "hi": b, "w": w} for a, b, w in self.pieces],
        }
        if self.powers:
            out["power"] = [
                {"lo": None if a == -math.inf else a, "hi": None if b == math.inf else b, "k": k, "w": w}
                for a, b, k, w in self.powers
            ]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Measure":
        return parse_measure(data)


def _require_fields(obj, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise MeasureError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise MeasureError(f"{where}: unknown field(s) {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise MeasureError(f"{where}: missing field(s) {sorted(missing)}")


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MeasureError(f"{where}: expected a number, got {v!r}")
    return float(v)


def parse_measure(data: dict) -> Measure:
    """Build a measure from its JSON form; unknown fields are rejected.

    ``{"atoms": [{"x", "w"}], "uniform": [{"lo", "hi", "w"}], "power": [{"lo", "hi", "k", "w"}]}``
    where a ``null`` power endpoint means unbounded.
    """
    _require_fields(data, {"atoms", "uniform", "power"}, set(), "measure")
    atoms, pieces, powers = [], [], []
    for i, a in enumerate(data.get("atoms", [])):
        _require_fields(a, {"x", "w"}, {"x", "w"}, f"atoms[{i}]")
        atoms.append((_num(a["x"], f"atoms[{i}].x"), _num(a["w"], f"atoms[{i}].w")))
    for i, p in enumerate(data.get("uniform", [])):
        _require_fields(p, {"lo", "hi", "w"}, {"lo", "hi", "w"}, f"uniform[{i}]")
        pieces.append(tuple(_num(p[f], f"uniform[{i}].{f}") for f in ("lo", "hi", "w")))
    for i, p in enumerate(data.get("power", [])):
        _require_fields(p, {"lo", "hi", "k", "w"}, {"lo", "hi", "k", "w"}, f"power[{i}]")
        lo = -math.inf if p["lo"] is None else _num(p["lo"], f"power[{i}].lo")
        hi = math.inf if p["hi"] is None else _num(p["hi"], f"power[{i}].hi")
        powers.append((lo, hi, _num(p["k"], f"power[{i}].k"), _num(p["w"], f"power[{i}].w")))
    return Measure(tuple(atoms), tuple(pieces), tuple(powers))


def load_measure(path: str) -> Measure:
    with open(path) as fh:
        return parse_measure(json.load(fh))


# ---------------------------------------------------------------------------
# quantile function


class QuantileFunction:
    """Vectorized quantile calculus of a measure.

    Levels run over ``[0, mass]``.  ``left`` and ``right`` are the left- and
    right-continuous inverses of the CDF, ``partial(v)`` is ``int_0^v left``.
    """

    def __init__(self, m: Measure):
        self.total = m.mass
        kinds, items, widths, moments = [], [], [], []
        for kind, item in m.segments:
            kinds.append(kind)
            items.append(item)
            if kind == "atom":
                x, w = item
                widths.append(w)
                moments.append(x * w)
            else:
                widths.append(item.mass)
                moments.append(float(item.moment_to(item.hi)))
        self.kinds = kinds
        self.items = items
        self.v1 = np.cumsum(widths)
        if len(self.v1):
            self.v1[-1] = self.total
        self.v0 = np.concatenate(([0.0], self.v1[:-1]))
        self.m0 = np.concatenate(([0.0], np.cumsum(moments)[:-1]))
        self.slopes = np.array([0.0 if k == "atom" else it.quantile_slope for k, it in zip(kinds, items)])
        self.bottom = m.support[0]
        self.top = m.support[1]

    @property
    def breaks(self) -> np.ndarray:
        """Interior level breakpoints."""
        return self.v1[:-1].copy()

    def index(self, v, side: str = "left"):
        """Segment index: first segment with v1 >= v ('left') or v1 > v ('right')."""
        idx = np.searchsorted(self.v1, v, side=side)
        return np.minimum(idx, len(self.v1) - 1)

    def value_in(self, idx, v):
        """Evaluate segment ``idx``'s own quantile formula at level ``v`` (no clamping to the segment)."""
        idx = np.asarray(idx)
        v = np.asarray(v, dtype=float)
        idx, v = np.broadcast_arrays(idx, v)
        out = np.empty(v.shape)
        for i in np.unique(idx):
            mask = idx == i
            d = v[mask] - self.v0[i]
            if self.kinds[i] == "atom":
                out[mask] = self.items[i][0]
            else:
                out[mask] = self.items[i].inverse(d)
        return out

    def partial_in(self, idx, v):
        idx = np.asarray(idx)
        v = np.asarray(v, dtype=float)
        idx, v = np.broadcast_arrays(idx, v)
        out = np.empty(v.shape)
        for i in np.unique(idx):
            mask = idx == i
            d = v[mask] - self.v0[i]
            if self.kinds[i] == "atom":
                out[mask] = self.m0[i] + self.items[i][0] * d
            else:
                out[mask] = self.m0[i] + self.items[i].partial(d)
        return out

    def left(self, v):
        v = np.asarray(v, dtype=float)
        out = self.value_in(self.index(v, "left"), v)
        out = np.where(v <= 0, self.bottom, out)
        return out if out.ndim else float(out)

    def right(self, v):
        v = np.asarray(v, dtype=float)
        out = self.value_in(self.index(v, "right"), v)
        out = np.where(v >= self.total, self.top, out)
        return out if out.ndim else float(out)

    def partial(self, v):
        v = np.clip(np.asarray(v, dtype=float), 0.0, self.total)
        out = self.partial_in(self.index(v, "left"), v)
        return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# pairs of measures


def _cover(m: Measure, l: float, h: float) -> Cell | None:
    """The canonical cell of ``m`` containing the span (l, h), if any."""
    if math.isfinite(l) and math.isfinite(h):
        mid = 0.5 * (l + h)
    elif math.isfinite(l):
        mid = l + 1.0 if l > 0 else 1.0 + abs(l)
    else:
        mid = h - 1.0 if h < 0 else -1.0 - abs(h)
    for c in m.cells:
        if c.lo <= mid <= c.hi and c.lo <= l and h <= c.hi:
            return c
    return None


def joint_spans(mu: Measure, nu: Measure) -> list[tuple[float, float, Cell | None, Cell | None]]:
    """Common refinement of two measures: ``(l, h, cell_mu, cell_nu)`` restricted to each span."""
    pts = sorted(set(mu.breakpoints) | set(nu.breakpoints))
    spans = list(zip(pts[:-1], pts[1:]))
    lows = [c.lo for m in (mu, nu) for c in m.cells]
    highs = [c.hi for m in (mu, nu) for c in m.cells]
    if pts and -math.inf in lows:
        spans.insert(0, (-math.inf, pts[0]))
    if pts and math.inf in highs:
        spans.append((pts[-1], math.inf))
    out = []
    for l, h in spans:
        cm, cn = _cover(mu, l, h), _cover(nu, l, h)
        out.append((l, h, cm and cm.with_coef(cm.coef, l, h), cn and cn.with_coef(cn.coef, l, h)))
    return out


def _cell_min(a: Cell | None, b: Cell | None) -> Cell | None:
    if a is None or b is None:
        return None
    if a.shape() != b.shape():
        raise MeasureError("cannot compare a uniform density against a power-law density on the same span")
    return a.with_coef(min(a.coef, b.coef), a.lo, a.hi)


def _cell_diff(a: Cell | None, b: Cell | None) -> Cell | None:
    """Signed cell ``a - b`` (either may be absent)."""
    if a is None and b is None:
        return None
    if a is None:
        return b.with_coef(-b.coef, b.lo, b.hi)
    if b is None:
        return a
    if a.shape() != b.shape():
        raise MeasureError("cannot compare a uniform density against a power-law density on the same span")
    return a.with_coef(a.coef - b.coef, a.lo, a.hi)


def _near_zero(c: float, ref: float) -> bool:
    return abs(c) <= 1e-13 * max(abs(ref), 1.0)


def _cells_to_measure(cells: Sequence[Cell], atoms: Sequence[tuple[float, float]]) -> Measure:
    pieces, powers = [], []
    for c in cells:
        if isinstance(c, FlatCell):
            pieces.append((c.lo, c.hi, c.mass))
        else:
            powers.append((c.lo, c.hi, c.k, c.mass))
    return Measure(tuple(atoms), tuple(pieces), tuple(powers))


@dataclass(frozen=True)
class OrderVerdict:
    holds: bool
    witness: float | None = None
    gap: float = 0.0  # min of C_nu - C_mu found

    def __bool__(self) -> bool:
        return self.holds


def _atom_map(m: Measure) -> dict[float, float]:
    return dict(m.merged_atoms)


def difference_structure(mu: Measure, nu: Measure):
    """Spans with signed density ``nu - mu`` and signed atom jumps ``nu({x}) - mu({x})``."""
    spans = []
    for l, h, cm, cn in joint_spans(mu, nu):
        d = _cell_diff(cn, cm)
        ref = max(abs(cm.coef) if cm else 0.0, abs(cn.coef) if cn else 0.0)
        if d is not None and _near_zero(d.coef, ref):
            d = None
        spans.append((l, h, d))
    am, an = _atom_map(mu), _atom_map(nu)
    jumps = {}
    for x in sorted(set(am) | set(an)):
        j = an.get(x, 0.0) - am.get(x, 0.0)
        if not _near_zero(j, max(an.get(x, 0.0), am.get(x, 0.0))):
            jumps[x] = j
    return spans, jumps


def stationary_points(mu: Measure, nu: Measure, slope: float, spans=None) -> list[float]:
    """Interior points of each span where ``D' = F_nu - F_mu`` equals ``slope``."""
    if spans is None:
        spans, _ = difference_structure(mu, nu)
    out = []
    for l, h, d in spans:
        if d is None:
            continue
        if math.isfinite(l):
            base = float(nu.cdf(l) - mu.cdf(l))
            x = float(d.inverse(slope - base))
        else:
            # span (-inf, h]: integrate the density from the left end
            base = float(nu.cdf_left(h) - mu.cdf_left(h)) - float(d.mass_to(h))
            x = float(d.inverse(slope - base))
        if l < x < h:
            out.append(x)
    return out


def convex_order_leq(mu: Measure, nu: Measure, tol: float = ORDER_TOL) -> OrderVerdict:
    """Exact check of ``mu <=_cx nu`` by minimizing ``C_nu - C_mu`` over candidate points."""
    if abs(mu.mass - nu.mass) > MASS_TOL:
        return OrderVerdict(False, math.nan, -abs(mu.mass - nu.mass))
    dm = nu.mean - mu.mean
    if abs(dm) > tol:
        return OrderVerdict(False, -math.inf if dm < 0 else math.inf, -abs(dm))
    spans, _ = difference_structure(mu, nu)
    cands = set(mu.breakpoints) | set(nu.breakpoints)
    cands.update(stationary_points(mu, nu, 0.0, spans))
    if not cands:
        return OrderVerdict(True)
    xs = np.array(sorted(cands))
    vals = np.asarray(nu.call(xs) - mu.call(xs))
    i = int(np.argmin(vals))
    gap = float(vals[i])
    if gap < -tol:
        return OrderVerdict(False, float(xs[i]), gap)
    return OrderVerdict(True, None, min(gap, 0.0))


@dataclass(frozen=True)
class MarginalPair:
    """Validated pair with its common-mass decomposition.

    ``mu = common + (1 - kappa) eta_bar`` and ``nu = common + (1 - kappa) gamma_bar``;
    ``eta_bar`` lives on ``[a, b]`` and ``gamma_bar`` off ``(a, b)``.
    """

    mu: Measure
    nu: Measure
    kappa: float
    common: Measure
    eta_bar: Measure | None
    gamma_bar: Measure | None
    a: float
    b: float
    gamma_a: float

    @property
    def identical(self) -> bool:
        return self.eta_bar is None


def decompose(mu: Measure, nu: Measure, tol: float = ORDER_TOL) -> MarginalPair:
    """Split off the common mass and check that the excess masses are dispersed."""
    for name, m in (("mu", mu), ("nu", nu)):
        if not m.is_probability:
            raise MeasureError(f"{name} is not a probability measure (mass {m.mass!r})")
    verdict = convex_order_leq(mu, nu, tol)
    if not verdict:
        raise ConvexOrderError(verdict.witness)

    common_cells, eta_cells, gamma_cells = [], [], []
    for l, h, cm, cn in joint_spans(mu, nu):
        lo = _cell_min(cm, cn)
        if lo is not None and lo.mass > _DROP:
            common_cells.append(lo)
        for src, dst in ((cm, eta_cells), (cn, gamma_cells)):
            if src is None:
                continue
            ex = src.with_coef(src.coef - (lo.coef if lo is not None else 0.0), l, h)
            if not _near_zero(ex.coef, src.coef) and ex.mass > _DROP:
                dst.append(ex)
    am, an = _atom_map(mu), _atom_map(nu)
    common_atoms, eta_atoms, gamma_atoms = [], [], []
    for x in sorted(set(am) | set(an)):
        p, q = am.get(x, 0.0), an.get(x, 0.0)
        c = min(p, q)
        if c > _DROP:
            common_atoms.append((x, c))
        if p - c > _DROP and not _near_zero(p - c, p):
            eta_atoms.append((x, p - c))
        if q - c > _DROP and not _near_zero(q - c, q):
            gamma_atoms.append((x, q - c))

    common = _cells_to_measure(common_cells, common_atoms)
    kappa = min(common.mass, 1.0)
    if 1.0 - kappa <= MASS_TOL or not (eta_cells or eta_atoms):
        m = mu.support
        return MarginalPair(mu, nu, 1.0, common, None, None, m[0], m[1], 0.0)
    eta = _cells_to_measure(eta_cells, eta_atoms)
    gamma = _cells_to_measure(gamma_cells, gamma_atoms)
    eta_bar = eta.scaled(1.0 / eta.mass)
    gamma_bar = gamma.scaled(1.0 / gamma.mass)
    a, b = eta_bar.support
    for c in gamma_bar.cells:
        lo, hi = max(c.lo, a), min(c.hi, b)
        if hi > lo:
            raise DispersionError((lo, hi))
    for x, _ in gamma_bar.merged_atoms:
        if a < x < b:
            raise DispersionError((x, x))
    gamma_a = float(gamma_bar.cdf(a))
    return MarginalPair(mu, nu, kappa, common, eta_bar, gamma_bar, a, b, gamma_a)


# ---------------------------------------------------------------------------
# integration against a measure


def integrate_function(f: Callable[[np.ndarray], np.ndarray], m: Measure, tol: float = 1e-12) -> float:
    """``int f dm`` with atoms summed exactly and cells integrated piecewise.

    Unbounded power cells are mapped onto (0, 1] by ``y = edge / t``.
    """
    from .quadrature import integrate

    total = [w * float(f(np.array([x]))[0]) for x, w in m.merged_atoms]
    for c in m.cells:
        if math.isfinite(c.lo) and math.isfinite(c.hi):
            total.append(integrate(lambda y, c=c: f(y) * c.density(y), [c.lo, c.hi], tol))
        else:
            edge = c.lo if math.isfinite(c.lo) else c.hi
            k, coef = c.k, c.coef

            def g(t, edge=edge, k=k, coef=coef):
                return f(edge / t) * coef * abs(edge) ** -k * t ** (k - 1.0)

            total.append(integrate(g, [0.0, 1.0], tol))
    return math.fsum(total)


def discretize_to_pieces(
    pdf: Callable[[float], float], lo: float, hi: float, tol: float = 1e-6, max_cells: int = 1 << 16
) -> Measure:
    """Approximate a density on ``[lo, hi]`` by uniform pieces carrying the cell masses.

    Cells are halved until the total first-moment error
    ``sum_i |int_cell (x - mid_i) pdf(x) dx|`` (a bound on the mean displacement)
    drops below ``tol``.  Cell integrals use 24-point Gauss-Legendre.
    """
    from .quadrature import fixed_legendre

    f = np.vectorize(lambda x: float(pdf(float(x))), otypes=[float])
    n = 8
    while True:
        edges = np.linspace(lo, hi, n + 1)
        left, right = edges[:-1], edges[1:]
        mid = 0.5 * (left + right)
        ws = fixed_legendre(f, left, right)
        m1 = fixed_legendre(lambda x: x * f(x), left, right)
        if float(np.sum(np.abs(m1 - ws * mid))) <= tol or n >= max_cells:
            break
        n *= 2
    return Measure(pieces=tuple((float(left[i]), float(right[i]), float(ws[i])) for i in range(n) if ws[i] > 0))
