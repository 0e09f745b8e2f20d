"""Separable data in several space dimensions.

The heat semigroup factorises over the axes, so a finite sum of products
sum_k lambda_k f_1^k (x) ... (x) f_N^k evolves termwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .basis import BasisState, basis_projection
from .errors import ConfigurationError, DataError, DomainError, PreconditionError
from .functionals import transfer_factors
from .grid import PROBE_RADIUS, GridFunction, Weight
from .heat import TimeSchedule, fit_decay, heat_evolve, vanishing_moments

K_MAX = 40


# ---------------------------------------------------------------------------
# product weight
# ---------------------------------------------------------------------------


def growth_suprema(w: Weight, k_max: int = K_MAX) -> np.ndarray:
    """B_k = sup_{r >= 0} (1+r)^k / w(r) for k = 1..k_max (radial weight)."""
    radius = max(PROBE_RADIUS, 2.0 * k_max)
    r = np.linspace(0.0, radius, 20001)
    lw = w.log(r)
    out = np.empty(k_max)
    for k in range(1, k_max + 1):
        vals = k * np.log1p(r) - lw
        i = int(np.argmax(vals))
        if i == r.size - 1 or not np.isfinite(vals[i]):
            raise ConfigurationError(f"(1+|x|)^{k}/w(x) is not bounded on the probe range")
        lo, hi = r[max(i - 1, 0)], r[min(i + 1, r.size - 1)]
        res = minimize_scalar(lambda s: -(k * math.log1p(s) - float(w.log(s))),
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        out[k - 1] = math.exp(max(vals[i], -res.fun))
    return out


@dataclass(frozen=True)
class ProductWeight:
    base: Weight
    dimension: int
    p: float
    suprema: np.ndarray
    axis: Weight  # per-axis factor v

    def log_v_tilde(self, x: np.ndarray) -> np.ndarray:
        """log of prod_j sum_k 2^-k B_k^{-1/N} (1+|x_j|)^{k/N}; x has shape (..., N)."""
        series = Weight("polynomial-product", (self.dimension, 1.0, *self.suprema))
        return series.log(x).sum(axis=-1)

    def log_w_tilde(self, x: np.ndarray) -> np.ndarray:
        return self.axis.log(x).sum(axis=-1)


@dataclass(frozen=True)
class ProductWeightReport:
    weight: ProductWeight
    probe_points: int
    dominated: bool          # v~ <= w on the probe points
    max_log_excess: float
    embedding_constant: float
    embedding_ratio: float   # worst ||f||_{1,w~} / ||f||_{p,v~} over test functions

    @property
    def passed(self) -> bool:
        return self.dominated and self.embedding_ratio <= self.embedding_constant * (1 + 1e-9)


def build_product_weight(w: Weight, N: int, p: float = 1.0, k_max: int = K_MAX,
                         probes: int = 10_000, seed: int = 0) -> ProductWeightReport:
    if N < 2:
        raise DomainError("product weights need N >= 2")
    if p < 1:
        raise DomainError("p must be >= 1")
    B = growth_suprema(w, k_max)
    axis = Weight("polynomial-product", (N, p, *B))
    pw = ProductWeight(w, N, float(p), B, axis)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-PROBE_RADIUS / 2, PROBE_RADIUS / 2, size=(probes, N))
    pts[: min(probes, 200)] *= rng.random((min(probes, 200), 1)) * 0.1
    excess = pw.log_v_tilde(pts) - w.log(np.linalg.norm(pts, axis=1))
    dominated = bool(np.all(excess <= 1e-12))
    # separable test functions on a bounded box; both norms factor over the axes
    dual = np.inf if p == 1 else p / (p - 1)
    const = 1.0 if p == 1 else 2.0 ** (N / dual)
    series = Weight("polynomial-product", (N, 1.0, *B))
    edges = np.linspace(-6.0, 0.0, 61)
    worst = 0.0
    for _ in range(20):
        one, pth = 1.0, 1.0
        for _ in range(N):
            vals = rng.standard_normal(edges.size - 1) * (rng.random(edges.size - 1) < 0.5)
            one *= np.abs(vals) @ axis.integrate(edges[:-1], edges[1:])
            pth *= (np.abs(vals) ** p @ series.integrate(edges[:-1], edges[1:])) ** (1 / p)
        if pth > 0:
            worst = max(worst, one / pth)
    return ProductWeightReport(pw, probes, dominated, float(excess.max()), const, worst)


# ---------------------------------------------------------------------------
# separable functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TensorFunction:
    terms: tuple[tuple[float, tuple[GridFunction, ...]], ...]

    def __post_init__(self):
        if not self.terms:
            raise DataError("a tensor function needs at least one term")
        dims = {len(f) for _, f in self.terms}
        if len(dims) != 1:
            raise DataError("all terms need the same number of factors")
        if not np.isfinite(sum(abs(l) for l, _ in self.terms)):
            raise DataError("coefficients must be finite")

    @classmethod
    def product(cls, *factors: GridFunction, coefficient: float = 1.0) -> "TensorFunction":
        return cls(((float(coefficient), tuple(factors)),))

    @property
    def dimension(self) -> int:
        return len(self.terms[0][1])

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        out = np.zeros(pts.shape[0])
        for lam, fs in self.terms:
            term = np.full(pts.shape[0], lam)
            for j, fj in enumerate(fs):
                term *= fj(pts[:, j])
            out += term
        return out


def _axis_grid(factors: list[GridFunction], t: float, density: float) -> np.ndarray:
    lo = min(float(f.edges[0]) for f in factors)
    hi = max(float(f.edges[-1]) for f in factors)
    r = 8 * math.sqrt(t)
    h = math.sqrt(t) / density
    return np.linspace(lo - r, hi + r, int(math.ceil((hi - lo + 2 * r) / h)) + 1)


def tensor_sup_norm(f: TensorFunction, t: float, density: float | None = None) -> float:
    """sup over R^N of |e^{t Delta} f|."""
    N = f.dimension
    if len(f.terms) == 1:
        lam, fs = f.terms[0]
        from .heat import sup_norm_at
        return abs(lam) * math.prod(sup_norm_at(fj, t) for fj in fs)
    density = density or (50.0 if N == 2 else 12.0)
    grids = [_axis_grid([fs[j] for _, fs in f.terms], t, density) for j in range(N)]
    total = None
    for lam, fs in f.terms:
        prod = np.array(lam)
        for j, fj in enumerate(fs):
            u = heat_evolve(fj, t, grids[j])
            prod = np.multiply.outer(prod, u)
        total = prod if total is None else total + prod
    return float(np.abs(total).max())


def _in_tail(f: GridFunction, m: int, basis: BasisState | None, threshold: int | None) -> bool:
    if basis is None or threshold is None:
        return vanishing_moments(f, m) >= m
    if not f.is_on(basis.grid):
        return vanishing_moments(f, m) >= m
    h = f.values * transfer_factors(basis.grid, basis.weight, basis.p)
    z = basis.coordinates(h)
    head = np.abs(z[: threshold - 1]).max(initial=0.0)
    return bool(head <= 1e-10 * max(np.abs(z).max(), 1e-300))


def tensor_heat_decay(f: TensorFunction, schedule: TimeSchedule, m: int,
                      axis_bases: list[BasisState] | None = None,
                      thresholds: list[int] | None = None, label: str = ""):
    """Decay of the N-dimensional solution against -(1+m)/2 - (N-1)/2."""
    N = f.dimension
    if m > 0:
        for i, (lam, fs) in enumerate(f.terms):
            ok = any(_in_tail(fj, m,
                              axis_bases[j] if axis_bases else None,
                              thresholds[j] if thresholds else None)
                     for j, fj in enumerate(fs))
            if not ok:
                raise PreconditionError(f"term {i} has no factor in the tail span for m={m}",
                                        {"term": i})
    norms = [tensor_sup_norm(f, t) for t in schedule.times]
    exponent = -(1 + m) / 2 - (N - 1) / 2
    return fit_decay(schedule.times, norms, exponent, schedule, label=label)


def tensor_projection_split(f: TensorFunction, n: int, bases) -> dict[tuple[str, ...], TensorFunction]:
    """Termwise split into the 2^N - 1 products with at least one Q_n factor.

    The key ``('P',)*N`` is included as well so that the components sum to f.
    """
    N = f.dimension
    if isinstance(bases, BasisState):
        bases = [bases] * N
    if len(bases) != N:
        raise DataError("one basis per axis is required")
    if any(n > b.dimension for b in bases):
        raise DomainError("n exceeds the basis dimension")
    parts = []
    for lam, fs in f.terms:
        pq = []
        for j, fj in enumerate(fs):
            pf = basis_projection(fj, n, bases[j])
            pq.append({"P": pf, "Q": fj.with_values(fj.values - pf.values)})
        parts.append((lam, pq))
    out = {}
    for sigma in itertools.product("PQ", repeat=N):
        terms = tuple((lam, tuple(pq[j][s] for j, s in enumerate(sigma))) for lam, pq in parts)
        out[sigma] = TensorFunction(terms)
    return out
