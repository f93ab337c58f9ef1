"""Brute-force check: discretize both marginals and solve the martingale transport LP."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .measures import FlatCell, Measure


class InfeasibleError(RuntimeError):
    """The discretized problem has no martingale coupling at this slack."""

    def __init__(self, family: str, message: str = ""):
        self.family = family
        super().__init__(message or f"infeasible ({family}); try a larger epsilon")


class UnboundedError(RuntimeError):
    pass


def discretize(m: Measure, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split every continuous cell into ``n`` equal-mass cells, each collapsed to
    its conditional mean; atoms are kept.  Returns sorted ``(locations, weights)``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    locs = [x for x, _ in m.merged_atoms]
    wts = [w for _, w in m.merged_atoms]
    for c in m.cells:
        mass = c.mass
        edges = [c.lo] + [float(c.inverse(mass * j / n)) for j in range(1, n)] + [c.hi]
        for j in range(n):
            lo, hi = edges[j], edges[j + 1]
            if isinstance(c, FlatCell):
                locs.append(0.5 * (lo + hi))
            else:
                locs.append(float(c.moment_to(hi) - c.moment_to(lo)) / (mass / n))
            wts.append(mass / n)
    order = np.argsort(locs, kind="stable")
    x = np.asarray(locs)[order]
    w = np.asarray(wts)[order]
    ux, inv = np.unique(x, return_inverse=True)
    uw = np.zeros(len(ux))
    np.add.at(uw, inv, w)
    return ux, uw


def max_cell_width(m: Measure, n: int) -> float:
    widths = []
    for c in m.cells:
        edges = [c.lo] + [float(c.inverse(c.mass * j / n)) for j in range(1, n)] + [c.hi]
        widths.extend(e for e in np.diff(edges) if math.isfinite(e))
    return max(widths, default=0.0)


@dataclass(frozen=True)
class DiscreteLP:
    x: np.ndarray
    mu: np.ndarray
    y: np.ndarray
    nu: np.ndarray
    sense: str = "min"
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")

    def matrices(self):
        nx, ny = len(self.x), len(self.y)
        cost = np.abs(self.y[None, :] - self.x[:, None]).ravel()
        rows = sparse.kron(sparse.eye(nx), np.ones((1, ny)))
        cols = sparse.kron(np.ones((1, nx)), sparse.eye(ny))
        A_eq = sparse.vstack([rows, cols]).tocsr()
        b_eq = np.concatenate([self.mu, self.nu])
        disp = (self.y[None, :] - self.x[:, None])
        mart = sparse.csr_matrix(
            (disp.ravel(), (np.repeat(np.arange(nx), ny), np.arange(nx * ny))), shape=(nx, nx * ny)
        )
        A_ub = sparse.vstack([mart, -mart]).tocsr()
        b_ub = np.concatenate([self.epsilon * self.mu, self.epsilon * self.mu])
        return cost, A_eq, b_eq, A_ub, b_ub


@dataclass(frozen=True)
class LPResult:
    value: float
    plan: np.ndarray
    epsilon: float


def solve_lp(p: DiscreteLP, method: str = "highs") -> LPResult:
    """Optimal value and plan.  ``method`` is ``'highs'`` or ``'simplex'`` (dense, Bland's rule)."""
    cost, A_eq, b_eq, A_ub, b_ub = p.matrices()
    sign = 1.0 if p.sense == "min" else -1.0
    if method == "simplex":
        val, z = simplex(sign * cost, A_eq.toarray(), b_eq, A_ub.toarray(), b_ub)
    elif method == "highs":
        res = linprog(sign * cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:
            raise InfeasibleError("martingale")
        if res.status != 0:
            raise RuntimeError(res.message)
        val, z = res.fun, res.x
    else:
        raise ValueError("method must be 'highs' or 'simplex'")
    return LPResult(sign * val, z.reshape(len(p.x), len(p.y)), p.epsilon)


def oracle_price(mu: Measure, nu: Measure, n: int = 120, sense: str = "min", epsilon: float = 1e-12, method: str = "highs") -> LPResult:
    """Discretize and solve; on infeasibility retry once with ``2 * (max cell width)**2``."""
    x, wx = discretize(mu, n)
    y, wy = discretize(nu, n)
    try:
        return solve_lp(DiscreteLP(x, wx, y, wy, sense, epsilon), method)
    except InfeasibleError:
        eps = 2.0 * max(max_cell_width(mu, n), max_cell_width(nu, n)) ** 2
        return solve_lp(DiscreteLP(x, wx, y, wy, sense, eps), method)


# ---------------------------------------------------------------------------
# dense two-phase simplex


def simplex(c, A_eq, b_eq, A_ub=None, b_ub=None, tol: float = 1e-11, max_iter: int = 100000):
    """Minimize ``c @ z`` subject to ``A_eq z = b_eq``, ``A_ub z <= b_ub``, ``z >= 0``.

    Dense tableau, two phases, Bland's rule for both entering and leaving
    variables.  Returns ``(value, z)``.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    m_ub = len(b_ub)
    A = np.block([[A_eq, np.zeros((len(b_eq), m_ub))], [A_ub, np.eye(m_ub)]])
    b = np.concatenate([b_eq, b_ub])
    cost = np.concatenate([c, np.zeros(m_ub)])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    m, nv = A.shape

    # phase 1 tableau: [A | I | b], objective = sum of artificials
    T = np.zeros((m + 1, nv + m + 1))
    T[:m, :nv] = A
    T[:m, nv : nv + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(nv, nv + m))
    T[m, :] = 0.0
    T[m, nv : nv + m] = 1.0
    for i in range(m):
        T[m] -= T[i]
    _run(T, basis, nv + m, tol, max_iter)
    if T[m, -1] < -1e-9 * max(1.0, np.abs(b).max(initial=0)):
        raise InfeasibleError("equality/inequality system")

    # drive artificials out of the basis
    keep_rows = []
    for i in range(m):
        if basis[i] >= nv:
            cols = np.flatnonzero(np.abs(T[i, :nv]) > tol)
            if len(cols):
                _pivot(T, basis, i, int(cols[0]))
                keep_rows.append(i)
        else:
            keep_rows.append(i)
    T = np.vstack([T[keep_rows][:, list(range(nv)) + [T.shape[1] - 1]], np.zeros(nv + 1)])
    basis = [basis[i] for i in keep_rows]
    k = len(basis)
    T[k, :nv] = cost
    for i, j in enumerate(basis):
        T[k] -= cost[j] * T[i]
    _run(T, basis, nv, tol, max_iter)
    z = np.zeros(nv)
    for i, j in enumerate(basis):
        z[j] = T[i, -1]
    return float(c @ z[:n]), z[:n]


def _pivot(T, basis, r, e):
    T[r] /= T[r, e]
    col = T[:, e].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    basis[r] = e


def _run(T, basis, ncols, tol, max_iter):
    k = len(basis)
    for _ in range(max_iter):
        red = T[k, :ncols]
        cand = np.flatnonzero(red < -tol)
        if not len(cand):
            return
        e = int(cand[0])
        col = T[:k, e]
        pos = np.flatnonzero(col > tol)
        if not len(pos):
            raise UnboundedError("objective unbounded below")
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(T, basis, r, e)
    raise RuntimeError("simplex iteration limit reached")
