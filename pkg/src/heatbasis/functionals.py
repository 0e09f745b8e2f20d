"""Iterated integrals, moment functionals and the transfer to (0, 1].

For f supported in (-inf, 0]::

    I^m f(x) = 1/(m-1)! int_{-inf}^x (x-y)^(m-1) f(y) dy
    J^m f    = 1/(m-1)! int_{-inf}^0 (-y)^(m-1) f(y) dy

Both are evaluated exactly on piecewise-constant data.  The transfer
``(S f)(s) = f(log s) w(log s) / s`` identifies the weighted L^1 space of the
half-line with L^1(0, 1); on the grid it is realised cell by cell, so that
J^m f = int_0^1 (S f) g ds with the representer g stored per cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DataError, DomainError, PreconditionError
from .grid import (HALFLINE, PANEL_WIDTH, QUAD_ORDER, UNIT, DyadicGrid, GridFunction,
                   Weight, _panels, gauss_legendre, grid_masses, weighted_norm)


def _power_difference(big, small, m: int):
    """(big^m - small^m) written as (big - small) * sum big^(m-1-l) small^l."""
    acc = np.zeros(np.broadcast(big, small).shape)
    for l in range(m):
        acc = acc + big ** (m - 1 - l) * small ** l
    return (big - small) * acc


def cell_moments(edges, m: int) -> np.ndarray:
    """J^m of the indicator of each cell (edges[i], edges[i+1]] in x <= 0."""
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    return _power_difference(-a, -b, m) / math.factorial(m)


def _halfline(f: GridFunction, what: str):
    if f.side != HALFLINE:
        raise DataError(f"{what} expects a negative-halfline function")


def iterated_integral(f: GridFunction, m: int, x):
    """I^m f at the points x <= 0 (exact for piecewise-constant f)."""
    if m < 1:
        raise DomainError("m must be >= 1")
    _halfline(f, "iterated_integral")
    x = np.asarray(x, dtype=float)
    if np.any(x > 0):
        raise DomainError("iterated_integral is defined here for x <= 0 only")
    scalar = x.ndim == 0
    xs = np.atleast_1d(x)
    a, b = f.edges[:-1], f.edges[1:]
    out = np.empty(xs.shape)
    for idx, xv in enumerate(xs.ravel()):
        live = a < xv
        if not np.any(live):
            out.flat[idx] = 0.0
            continue
        upper = np.minimum(b[live], xv)
        terms = _power_difference(xv - a[live], xv - upper, m)
        out.flat[idx] = np.dot(f.values[live], terms) / math.factorial(m)
    return float(out[0]) if scalar else out


def moment(f: GridFunction, m: int) -> float:
    """J^m f."""
    if m < 1:
        raise DomainError("m must be >= 1")
    _halfline(f, "J")
    return float(np.dot(f.values, cell_moments(f.edges, m)))


J = moment


def moment_bound_scale(f: GridFunction, m: int) -> float:
    """J^m |f|, the natural scale for deciding whether J^m f vanishes."""
    return float(np.dot(np.abs(f.values), cell_moments(f.edges, m)))


# ---------------------------------------------------------------------------
# transfer S : L^p_w(R^-) -> L^p(0, 1)
# ---------------------------------------------------------------------------


def transfer_masses_between(xa, xb, w: Weight, order: int = QUAD_ORDER) -> np.ndarray:
    """int_{e^xa}^{e^xb} w(log s)/s ds, integrated in the s variable."""
    xa = np.atleast_1d(np.asarray(xa, dtype=float))
    xb = np.atleast_1d(np.asarray(xb, dtype=float))
    lo, hi, owner = _panels(xa, xb, PANEL_WIDTH)
    sa, sb = np.exp(lo), np.exp(hi)
    nodes, weights = gauss_legendre(order)
    half = 0.5 * (sb - sa)
    s = (0.5 * (sb + sa))[:, None] + half[:, None] * nodes[None, :]
    vals = (np.exp(w.log(np.log(s))) / s * weights[None, :]).sum(axis=1) * half
    return np.bincount(owner, weights=vals, minlength=xa.size)


@lru_cache(maxsize=32)
def _transfer_masses(level: int, x_lo: float, w: Weight) -> np.ndarray:
    nodes = DyadicGrid(level, x_lo).log_nodes
    out = transfer_masses_between(nodes[:-1], nodes[1:], w)
    out.setflags(write=False)
    return out


def transfer_masses(grid: DyadicGrid, w: Weight) -> np.ndarray:
    """Mass of S(1_cell) for every log-cell of the grid."""
    return _transfer_masses(grid.level, grid.x_lo, w)


def transfer_factors(grid: DyadicGrid, w: Weight, p: float = 1.0) -> np.ndarray:
    """Cellwise factor turning half-line cell values into (0, 1] cell values."""
    return (transfer_masses(grid, w) / grid.cell_width) ** (1.0 / p)


def grid_of(f: GridFunction) -> DyadicGrid:
    level = f.values.size.bit_length() - 1
    if f.values.size != 1 << level:
        raise DataError("function does not live on a dyadic grid")
    if f.side == UNIT:
        return DyadicGrid(level)
    return DyadicGrid(level, float(f.edges[0]))


def transfer(f: GridFunction, w: Weight, grid: DyadicGrid | None = None,
             p: float = 1.0) -> GridFunction:
    """Cell averages of S f on (0, 1] (L^p cell means for p > 1)."""
    _halfline(f, "transfer")
    if grid is None:
        grid = grid_of(f)
    if f.is_on(grid):
        return grid.function(f.values * transfer_factors(grid, w, p), UNIT)
    if p != 1:
        raise DataError("off-grid data can only be transferred for p = 1")
    nodes = grid.log_nodes
    if f.edges[0] < nodes[0] - 1e-15:
        raise DataError("function is supported below the truncation point of the grid")
    edges = np.union1d(f.edges, nodes)
    edges = edges[(edges >= nodes[0]) & (edges <= 0.0)]
    mids = 0.5 * (edges[:-1] + edges[1:])
    vals = f(mids)
    piece_mass = transfer_masses_between(edges[:-1], edges[1:], w)
    owner = np.searchsorted(nodes, mids) - 1
    sums = np.bincount(owner, weights=vals * piece_mass, minlength=grid.size)
    return grid.function(sums / grid.cell_width, UNIT)


def transfer_inverse(h: GridFunction, w: Weight, grid: DyadicGrid | None = None,
                     p: float = 1.0) -> GridFunction:
    """f(x) = h(e^x) e^x / w(x), realised on the log-cells of the grid."""
    if h.side != UNIT:
        raise DataError("transfer_inverse expects a unit-interval function")
    if grid is None:
        grid = grid_of(h)
    return grid.function(h.values / transfer_factors(grid, w, p), HALFLINE)


# ---------------------------------------------------------------------------
# representer of J^m
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MomentFunctional:
    """J^m in the transferred picture: J^m f = int_0^1 (S f)(s) g(s) ds.

    ``values`` are the cell values of g, taken as averages against the
    transfer density of each cell so that the pairing is exact on the grid.
    """

    order: int
    weight: Weight
    grid: DyadicGrid
    values: np.ndarray
    cell_moments: np.ndarray

    def evaluate(self, s) -> np.ndarray:
        """g(s) = (-log s)^(m-1) / ((m-1)! w(log s)), with g(0) = 0."""
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        pos = s > 0
        x = np.log(s[pos])
        out[pos] = np.exp((self.order - 1) * np.log(np.maximum(-x, 1e-300))
                          - self.weight.log(x) - math.lgamma(self.order))
        if self.order == 1:
            out[pos] = np.exp(-self.weight.log(x))
        return out

    @property
    def function(self) -> GridFunction:
        return self.grid.function(self.values, UNIT)

    def pair(self, h: GridFunction) -> float:
        """Phi_g(h) = int_0^1 h g ds."""
        return float(np.dot(h.values, self.values) * self.grid.cell_width)

    def pairing_vector(self, p: float = 1.0) -> np.ndarray:
        """gamma with J^m f = gamma . (S_p f) for cell values of S_p f."""
        if p == 1:
            return self.values * self.grid.cell_width
        return self.cell_moments / transfer_factors(self.grid, self.weight, p)

    def __call__(self, f: GridFunction) -> float:
        return moment(f, self.order)


def representer(m: int, w: Weight, grid: DyadicGrid) -> MomentFunctional:
    if m < 1:
        raise DomainError("m must be >= 1")
    moments = cell_moments(grid.log_nodes, m)
    g = moments / transfer_masses(grid, w)
    moments.setflags(write=False)
    g.setflags(write=False)
    return MomentFunctional(m, w, grid, g, moments)


# ---------------------------------------------------------------------------
# checks of the decay and support statements
# ---------------------------------------------------------------------------


def _evaluation_nodes(f: GridFunction, per_cell: int = 64) -> np.ndarray:
    a, b = f.edges[:-1], f.edges[1:]
    t = np.linspace(0.0, 1.0, per_cell + 1)
    pts = (a[:, None] + (b - a)[:, None] * t[None, :]).ravel()
    return np.unique(np.concatenate([pts, [0.0]]))


@dataclass(frozen=True)
class DecayBoundEntry:
    k: int
    supremum: float
    argmax: float
    constant: float  # supremum / ||f||_{p,w}


@dataclass(frozen=True)
class RapidDecayReport:
    m: int
    entries: tuple[DecayBoundEntry, ...]
    stabilised: bool

    @property
    def passed(self) -> bool:
        return self.stabilised and all(np.isfinite(e.supremum) for e in self.entries)


def rapid_decay_check(f: GridFunction, m: int, k_max: int, w: Weight | None = None,
                      p: float = 1.0, per_cell: int = 64) -> RapidDecayReport:
    """sup_{x <= 0} (1+|x|)^k |I^m f(x)| for k = 1..k_max, over refined nodes."""
    if m < 1 or k_max < 1:
        raise DomainError("m and k_max must be >= 1")
    w = w or Weight.gauss_exp()
    x = _evaluation_nodes(f, per_cell)
    vals = np.abs(iterated_integral(f, m, x))
    norm = weighted_norm(f, p, w)
    radius = float(-x.min())
    entries, stable = [], True
    for k in range(1, k_max + 1):
        prod = (1 + np.abs(x)) ** k * vals
        i = int(np.argmax(prod))
        sup, arg = float(prod[i]), float(x[i])
        lo, hi = x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]
        if sup > 0 and hi > lo:
            res = minimize_scalar(
                lambda z, k=k: -(1 + abs(z)) ** k * abs(iterated_integral(f, m, z)),
                bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            if -res.fun > sup:
                sup, arg = float(-res.fun), float(res.x)
        inner = prod[x >= -0.5 * radius].max() if radius > 0 else sup
        wider = prod[x >= -radius].max()
        # beyond the support I^m f vanishes on the left, so the sup cannot move
        left = prod[x < f.edges[0]]
        stable &= bool(left.size == 0 or left.max() == 0.0) and np.isfinite(wider) and wider >= inner
        entries.append(DecayBoundEntry(k, sup, arg, sup / norm if norm > 0 else 0.0))
    return RapidDecayReport(m, tuple(entries), bool(stable))


@dataclass(frozen=True)
class SupportReport:
    m: int
    holds: bool
    moments: tuple[float, ...]
    at_zero: tuple[float, ...]
    l1_norms: tuple[float, ...]
    failing_orders: tuple[int, ...] = ()


def _abs_integral_piecewise(f: GridFunction, k: int, per_cell: int = 16) -> float:
    """int_{-inf}^0 |I^k f| dy, composite Gauss-Legendre on subdivided cells."""
    nodes, weights = gauss_legendre(QUAD_ORDER)
    a, b = f.edges[:-1], f.edges[1:]
    t = np.linspace(0, 1, per_cell + 1)
    lo = (a[:, None] + (b - a)[:, None] * t[None, :-1]).ravel()
    hi = (a[:, None] + (b - a)[:, None] * t[None, 1:]).ravel()
    half = 0.5 * (hi - lo)
    pts = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
    vals = np.abs(iterated_integral(f, k, pts.ravel())).reshape(pts.shape)
    return float(((vals * weights).sum(axis=1) * half).sum())


def support_check(f: GridFunction, m: int, tol: float = 1e-10,
                  zero_tol: float = 1e-9) -> SupportReport:
    """Check that I^k f vanishes on x >= 0 for k <= m when J^1..J^m f vanish.

    Raises :class:`PreconditionError` naming the non-vanishing moments when
    the hypothesis fails.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    _halfline(f, "support_check")
    moments = [moment(f, k) for k in range(1, m + 1)]
    scales = [max(moment_bound_scale(f, k), 1e-300) for k in range(1, m + 1)]
    bad = tuple(k for k, (v, s) in enumerate(zip(moments, scales), 1) if abs(v) > tol * s)
    if bad:
        raise PreconditionError(
            "moments J^k f do not vanish for k in " + ", ".join(map(str, bad)),
            {"moments": moments, "failing_orders": bad})
    at_zero = [iterated_integral(f, k, 0.0) for k in range(1, m + 1)]
    # continuation to x > 0: I^k f(x) = sum_j I^j f(0) x^(k-j)/(k-j)!
    probe = np.array([0.5, 1.0, 4.0])
    holds = True
    for k in range(1, m + 1):
        cont = sum(at_zero[j - 1] * probe ** (k - j) / math.factorial(k - j) for j in range(1, k + 1))
        holds &= bool(np.all(np.abs(cont) <= zero_tol * scales[k - 1] * (1 + probe) ** k))
    norms = [_abs_integral_piecewise(f, k) for k in range(1, m + 1)]
    return SupportReport(m, holds, tuple(moments), tuple(at_zero), tuple(norms))
