"""Dyadic discretisation of (0, 1], weights and weighted L^p norms.

Every object of the package lives on the level-K dyadic partition of (0, 1].
The negative half-line is reached through ``x = log(s)``, so a grid of
``2**K`` cells on (0, 1] corresponds to ``2**K`` log-spaced cells on a
truncated half-line ``[x_lo, 0]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataError, DomainError

UNIT = "unit-interval"
HALFLINE = "negative-halfline"
SIDES = (UNIT, HALFLINE)

MAX_LEVEL = 24
QUAD_ORDER = 8
# panels wider than this (in x) are split before Gauss-Legendre is applied
PANEL_WIDTH = 0.25

WEIGHT_KINDS = ("gauss-exp", "exp-linear", "polynomial-product", "tabulated")


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(order)


def _panels(a: np.ndarray, b: np.ndarray, max_width: float = PANEL_WIDTH):
    """Split each [a_i, b_i] into equal panels of width <= max_width.

    Returns the panel endpoints and the owning cell index of every panel.
    """
    width = b - a
    counts = np.maximum(1, np.ceil(width / max_width).astype(np.int64))
    owner = np.repeat(np.arange(a.size), counts)
    start = np.cumsum(counts) - counts
    local = np.arange(owner.size) - np.repeat(start, counts)
    step = (width / counts)[owner]
    lo = a[owner] + local * step
    return lo, lo + step, owner


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Weight:
    """Symmetric positive weight on the real line.

    ``gauss-exp``: exp(a x^2 / 2), params ``[a]`` (default a = 1).
    ``exp-linear``: exp(a |x|), params ``[a]`` (default a = 1).
    ``polynomial-product``: the per-axis factor of a product weight,
    params ``[N, p, B_1, ..., B_kmax]``.
    ``tabulated``: log-linear interpolation of ``(x, w)`` samples given for
    x >= 0 or for a symmetric range; constant outside the table.
    """

    kind: str
    params: tuple[float, ...] = ()
    table_x: tuple[float, ...] | None = field(default=None, repr=False)
    table_w: tuple[float, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ConfigurationError(f"unknown weight kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if self.kind == "tabulated":
            if self.table_x is None or self.table_w is None:
                raise ConfigurationError("tabulated weight needs x and w columns")
            x = np.asarray(self.table_x, dtype=float)
            w = np.asarray(self.table_w, dtype=float)
            if x.ndim != 1 or x.shape != w.shape or x.size < 2:
                raise ConfigurationError("tabulated weight needs two equal columns of length >= 2")
            if not np.all(np.diff(x) > 0):
                raise ConfigurationError("tabulated weight: x must be strictly increasing")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ConfigurationError("tabulated weight: w must be finite and positive")
            object.__setattr__(self, "table_x", tuple(x.tolist()))
            object.__setattr__(self, "table_w", tuple(w.tolist()))
        if self.kind == "polynomial-product":
            if len(self.params) < 3:
                raise ConfigurationError("polynomial-product weight needs [N, p, B_1, ...]")
            if np.any(~np.isfinite(self.params)) or self.params[1] < 1:
                raise ConfigurationError("polynomial-product weight has invalid parameters")

    # -- constructors -------------------------------------------------------

    @classmethod
    def gauss_exp(cls, a: float = 1.0) -> "Weight":
        return cls("gauss-exp", (a,))

    @classmethod
    def exp_linear(cls, a: float = 1.0) -> "Weight":
        return cls("exp-linear", (a,))

    @classmethod
    def tabulated(cls, x: Sequence[float], w: Sequence[float]) -> "Weight":
        return cls("tabulated", (), tuple(map(float, x)), tuple(map(float, w)))

    @classmethod
    def from_csv(cls, path) -> "Weight":
        xs, ws = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    xs.append(float(row[0]))
                    ws.append(float(row[1]))
                except (ValueError, IndexError):
                    if xs:
                        raise DataError(f"malformed weight row {row!r} in {path}")
                    # header line
        return cls.tabulated(xs, ws)

    @classmethod
    def from_dict(cls, spec: dict) -> "Weight":
        kind = spec.get("kind")
        params = spec.get("parameters", spec.get("params", ()))
        if kind == "tabulated":
            if "csv" in spec:
                return cls.from_csv(spec["csv"])
            return cls.tabulated(spec["x"], spec["w"])
        return cls(kind, tuple(params))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "parameters": list(self.params)}
        if self.kind == "tabulated":
            out["x"] = list(self.table_x)
            out["w"] = list(self.table_w)
        return out

    # -- evaluation ---------------------------------------------------------

    def _param(self, i: int, default: float) -> float:
        return self.params[i] if len(self.params) > i else default

    def log(self, x) -> np.ndarray:
        """log w(x), evaluated without overflow."""
        x = np.abs(np.asarray(x, dtype=float))
        if self.kind == "gauss-exp":
            return 0.5 * self._param(0, 1.0) * x * x
        if self.kind == "exp-linear":
            return self._param(0, 1.0) * x
        if self.kind == "polynomial-product":
            return np.log(product_axis_factor(x, self.params))
        # |x| is looked up, so a symmetric table is read through its x >= 0 half
        return np.interp(x, np.asarray(self.table_x), np.log(np.asarray(self.table_w)))

    def __call__(self, x) -> np.ndarray:
        return np.exp(self.log(x))

    def integrate(self, a, b, order: int = QUAD_ORDER) -> np.ndarray:
        """Composite Gauss-Legendre approximation of int_a^b w(x) dx, per cell."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.kind == "tabulated" and order == QUAD_ORDER:
            # integrate the log-linear pieces exactly enough: split at table knots
            return self._integrate_tabulated(a, b)
        lo, hi, owner = _panels(a, b)
        nodes, weights = gauss_legendre(order)
        half = 0.5 * (hi - lo)
        x = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
        vals = (self(x) * weights[None, :]).sum(axis=1) * half
        return np.bincount(owner, weights=vals, minlength=a.size)

    def _integrate_tabulated(self, a, b):
        knots = np.asarray(self.table_x)
        knots = np.unique(np.concatenate([knots, -knots]))
        out = np.zeros(a.size)
        for i in range(a.size):
            inner = knots[(knots > a[i]) & (knots < b[i])]
            pts = np.concatenate([[a[i]], inner, [b[i]]])
            lo, hi, owner = _panels(pts[:-1], pts[1:])
            nodes, weights = gauss_legendre(QUAD_ORDER)
            half = 0.5 * (hi - lo)
            x = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
            out[i] = ((self(x) * weights[None, :]).sum(axis=1) * half).sum()
        return out


def product_axis_factor(x, params) -> np.ndarray:
    """Per-axis factor of the product weight built from the suprema B_k.

    ``params = [N, p, B_1, ..., B_kmax]``; for p > 1 the factor carries the
    integrability correction ``(1 + |x|)^(-2/p')``.
    """
    n_dim, p = params[0], params[1]
    b = np.asarray(params[2:], dtype=float)
    k = np.arange(1, b.size + 1)
    r = 1.0 + np.abs(np.asarray(x, dtype=float))
    lr = np.log(r)[..., None]
    terms = np.exp(-k * math.log(2.0) - np.log(b) / n_dim + lr * k / n_dim)
    series = terms.sum(axis=-1)
    if p == 1:
        return series
    dual = p / (p - 1.0)
    return series ** (1.0 / p) * r ** (-2.0 / dual)


# ---------------------------------------------------------------------------
# fast growth
# ---------------------------------------------------------------------------

PROBE_POINTS = 2048
PROBE_RADIUS = 40.0


def probe_grid(points: int = PROBE_POINTS, radius: float = PROBE_RADIUS) -> np.ndarray:
    return np.linspace(-radius, radius, points)


@dataclass(frozen=True)
class GrowthEntry:
    m: int
    supremum: float
    argmax: float
    passed: bool


@dataclass(frozen=True)
class GrowthReport:
    entries: tuple[GrowthEntry, ...]
    symmetric: bool
    positive: bool

    @property
    def passed(self) -> bool:
        return self.symmetric and self.positive and all(e.passed for e in self.entries)

    @property
    def first_failure(self) -> int | None:
        for e in self.entries:
            if not e.passed:
                return e.m
        return None


def check_fast_growth(w: Weight, m_max: int, points: int = PROBE_POINTS,
                      radius: float = PROBE_RADIUS) -> GrowthReport:
    """Probe sup (1+|x|)^m / w(x) for m = 1..m_max.

    An order passes when the supremum is finite, attained away from the edge
    of the probe window and the ratio does not increase beyond the argmax.
    """
    if m_max < 1:
        raise ConfigurationError("m_max must be >= 1")
    x = probe_grid(points, radius)
    lw = w.log(x)
    lw_mirror = w.log(-x)
    symmetric = bool(np.allclose(np.exp(lw - lw_mirror), 1.0, rtol=1e-12, atol=0))
    positive = bool(np.all(np.isfinite(lw)))
    half = x >= 0
    xr, lwr = x[half], lw[half]
    entries = []
    for m in range(1, m_max + 1):
        log_ratio = m * np.log1p(xr) - lwr
        top = log_ratio.max()
        # smallest |x| attaining the maximum (up to rounding)
        i = int(np.flatnonzero(log_ratio >= top - 1e-12)[0])
        tail = log_ratio[i:]
        ok = bool(np.isfinite(top) and i < xr.size - 1
                  and np.all(np.diff(tail) <= 1e-12))
        entries.append(GrowthEntry(m, float(np.exp(top)), float(xr[i]), ok))
    return GrowthReport(tuple(entries), symmetric, positive)


# ---------------------------------------------------------------------------
# grid and grid functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DyadicGrid:
    """The 2**level cells ((i-1)/2**level, i/2**level] of (0, 1].

    ``x_lo`` is where the pull-back of the first cell is truncated; it
    defaults to log(2**-(level+1)) so that the first log-cell has the same
    length as the second one.
    """

    level: int
    x_lo: float | None = None

    def __post_init__(self):
        if not isinstance(self.level, (int, np.integer)) or not 1 <= self.level <= MAX_LEVEL:
            raise ConfigurationError(f"grid level must be an integer in [1, {MAX_LEVEL}], got {self.level!r}")
        first = -self.level * math.log(2.0)
        if self.x_lo is None:
            object.__setattr__(self, "x_lo", first - math.log(2.0))
        elif not self.x_lo < first:
            raise ConfigurationError(f"x_lo must lie below log(2**-level) = {first:.6g}")

    @property
    def size(self) -> int:
        return 1 << self.level

    @property
    def cell_width(self) -> float:
        return 1.0 / self.size

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.size + 1) / self.size

    @property
    def cells(self) -> list[tuple[float, float]]:
        e = self.edges
        return list(zip(e[:-1].tolist(), e[1:].tolist()))

    @property
    def log_nodes(self) -> np.ndarray:
        nodes = np.empty(self.size + 1)
        nodes[0] = self.x_lo
        nodes[1:] = np.log(np.arange(1, self.size + 1) / self.size)
        nodes[-1] = 0.0
        return nodes

    def function(self, values, side: str = UNIT) -> "GridFunction":
        edges = self.edges if side == UNIT else self.log_nodes
        return GridFunction(edges, values, side)

    def zeros(self, side: str = UNIT) -> "GridFunction":
        return self.function(np.zeros(self.size), side)


def make_dyadic_grid(level: int, x_lo: float | None = None) -> DyadicGrid:
    return DyadicGrid(level, x_lo)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-constant function: ``values[i]`` on ``(edges[i], edges[i+1]]``."""

    edges: np.ndarray
    values: np.ndarray
    side: str = UNIT

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigurationError(f"unknown side {self.side!r}")
        edges = np.array(self.edges, dtype=float)
        values = np.array(self.values, dtype=float)
        if edges.ndim != 1 or values.ndim != 1 or edges.size != values.size + 1:
            raise DataError("a grid function needs len(edges) == len(values) + 1")
        if not np.all(np.isfinite(values)):
            raise DataError("grid function values must be finite")
        if not np.all(np.isfinite(edges)) or not np.all(np.diff(edges) > 0):
            raise DataError("grid function edges must be finite and strictly increasing")
        if self.side == HALFLINE and edges[-1] > 0:
            raise DataError("a negative-halfline function must be supported in x <= 0")
        edges.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)

    @classmethod
    def indicator(cls, a: float, b: float, side: str = HALFLINE) -> "GridFunction":
        return cls(np.array([a, b]), np.array([1.0]), side)

    @classmethod
    def from_pieces(cls, edges, values, side: str = HALFLINE) -> "GridFunction":
        return cls(np.asarray(edges, float), np.asarray(values, float), side)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def __len__(self):
        return self.values.size

    def scaled(self, c: float) -> "GridFunction":
        return GridFunction(self.edges, c * self.values, self.side)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.edges, values, self.side)

    def __call__(self, x) -> np.ndarray:
        """Point evaluation with half-open cells (a, b]; zero outside."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="left") - 1
        inside = (idx >= 0) & (idx < self.values.size)
        out = np.zeros(x.shape)
        out[inside] = self.values[idx[inside]]
        return out

    def refined(self, edges) -> "GridFunction":
        """The same function on a finer edge set containing the current one."""
        edges = np.asarray(edges, dtype=float)
        mids = 0.5 * (edges[:-1] + edges[1:])
        return GridFunction(edges, self(mids), self.side)

    def is_on(self, grid: DyadicGrid) -> bool:
        ref = grid.edges if self.side == UNIT else grid.log_nodes
        return self.edges.size == ref.size and bool(np.array_equal(self.edges, ref))

    def add(self, other: "GridFunction") -> "GridFunction":
        if self.side != other.side:
            raise DataError("cannot add functions living on different sides")
        if self.edges.size == other.edges.size and np.array_equal(self.edges, other.edges):
            return GridFunction(self.edges, self.values + other.values, self.side)
        edges = np.union1d(self.edges, other.edges)
        mids = 0.5 * (edges[:-1] + edges[1:])
        return GridFunction(edges, self(mids) + other(mids), self.side)

    def __add__(self, other):
        return self.add(other)

    def __sub__(self, other):
        return self.add(other.scaled(-1.0))

    def __mul__(self, c):
        return self.scaled(float(c))

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------


def cell_masses(edges, w: Weight, order: int = QUAD_ORDER) -> np.ndarray:
    """int_{cell} w(x) dx for consecutive cells given by ``edges``."""
    edges = np.asarray(edges, dtype=float)
    return w.integrate(edges[:-1], edges[1:], order)


@lru_cache(maxsize=32)
def _grid_masses(level: int, x_lo: float, w: Weight, order: int) -> np.ndarray:
    m = cell_masses(DyadicGrid(level, x_lo).log_nodes, w, order)
    m.setflags(write=False)
    return m


def grid_masses(grid: DyadicGrid, w: Weight, order: int = QUAD_ORDER) -> np.ndarray:
    """Cached weight masses of the log-cells of ``grid``."""
    return _grid_masses(grid.level, grid.x_lo, w, order)


def weighted_norm(f: GridFunction, p: float, w: Weight, order: int = QUAD_ORDER) -> float:
    """(int |f|^p w dx)^(1/p) for a piecewise-constant f on the negative half-line."""
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if f.side != HALFLINE:
        raise DataError("weighted_norm expects a negative-halfline function")
    mass = cell_masses(f.edges, w, order)
    return float(np.sum(np.abs(f.values) ** p * mass) ** (1.0 / p))
