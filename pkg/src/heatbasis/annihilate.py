"""Rank-one annihilation of moment functionals and the inductive build.

A functional is handled as a covector ``gamma`` on unit-interval cell
values, so y(h) = gamma . h.  Index sets of basis elements are half-open
ranges (lo, hi] in 1-based numbering.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import haar
from .basis import BasisState, basis_constant_estimate, dual_hnorm, hnorm
from .errors import (ConfigurationError, DomainError, InternalError, PreconditionError,
                     ResolutionExhausted)
from .functionals import cell_moments, representer
from .grid import DyadicGrid, Weight, grid_masses

log = logging.getLogger(__name__)

ZERO_TOL = 1e-13


# ---------------------------------------------------------------------------
# restricted dual norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualNorm:
    value: float
    exact: bool
    element: np.ndarray | None = field(default=None, repr=False)  # norming x, ||x|| = 1
    samples: int = 0


def _haar_columns(size: int, lo: int, hi: int) -> sp.csc_matrix:
    """Sparse Haar synthesis columns for indices lo+1..hi."""
    rows, cols, vals = [], [], []
    for c, n in enumerate(range(lo + 1, hi + 1)):
        if n == 1:
            r = np.arange(size)
            v = np.ones(size)
        else:
            k = (n - 1).bit_length() - 1
            j = n - (1 << k)
            width = size >> k
            r = np.arange((j - 1) * width, j * width)
            v = np.where(np.arange(width) < width // 2, 1.0, -1.0)
        rows.append(r)
        vals.append(v)
        cols.append(np.full(r.size, c))
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(size, hi - lo))


def _dual_norm_l2(basis: BasisState, q: np.ndarray, lo: int, hi: int) -> tuple[float, np.ndarray]:
    """Gram-matrix solve through the diagonal-plus-low-rank structure."""
    d = basis.dimension
    b = q[lo:hi]
    lam = haar.support_sizes(d)[lo:hi] / d
    r = basis.rank
    if r == 0:
        y = b / lam
    else:
        U, V = basis.U[lo:hi], basis.V[lo:hi]
        Lm = np.column_stack([lam[:, None] * U, V])
        B = basis.X.T @ basis.X / d
        Minv = np.block([[-B, np.eye(r)], [np.eye(r), np.zeros((r, r))]])
        Li = Lm / lam[:, None]
        S = Minv + Lm.T @ Li
        y = b / lam - Li @ np.linalg.solve(S, Li.T @ b)
    val = float(b @ y)
    z = np.zeros(d)
    z[lo:hi] = y
    return np.sqrt(max(val, 0.0)), z


def _dual_norm_l1(basis: BasisState, q: np.ndarray, lo: int, hi: int) -> tuple[float, np.ndarray]:
    """LP: maximise y(H z + X c) subject to mean|H z + X c| <= 1, c = V^T z."""
    d, r, nz = basis.dimension, basis.rank, hi - lo
    Hz = _haar_columns(d, lo, hi)
    Xs = sp.csc_matrix(basis.X)
    eye = sp.identity(d, format="csc")
    top = sp.hstack([Hz, Xs, -eye])
    bottom = sp.hstack([-Hz, -Xs, -eye])
    mean = sp.hstack([sp.csc_matrix((1, nz + r)), sp.csc_matrix(np.full((1, d), 1.0 / d))])
    A_ub = sp.vstack([top, bottom, mean], format="csc")
    b_ub = np.concatenate([np.zeros(2 * d), [1.0]])
    cost = np.concatenate([-q[lo:hi], np.zeros(r + d)])
    kw = {}
    if r:
        kw["A_eq"] = sp.hstack([sp.csc_matrix(basis.V[lo:hi].T), -sp.identity(r),
                                sp.csc_matrix((r, d))], format="csc")
        kw["b_eq"] = np.zeros(r)
    bounds = [(None, None)] * (nz + r) + [(0, None)] * d
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs", **kw)
    if res.status != 0:
        raise InternalError(f"dual-norm linear program failed: {res.message}")
    z = np.zeros(d)
    z[lo:hi] = res.x[:nz]
    return float(-res.fun), z


def sampled_dual_norm(basis: BasisState, gamma: np.ndarray, lo: int, hi: int,
                      samples: int = 10_000, seed: int = 0) -> float:
    """Best |y(x)|/||x|| over random x in span{E_n : lo < n <= hi}."""
    rng = np.random.default_rng(seed)
    q = basis.functional_values(gamma)
    best = 0.0
    batch = 250
    for start in range(0, samples, batch):
        m = min(batch, samples - start)
        z = np.zeros((basis.dimension, m))
        z[lo:hi] = rng.standard_normal((hi - lo, m)) * rng.random((hi - lo, 1)) ** 3
        x = basis.combine(z)
        nx = hnorm(x, basis.p)
        ok = nx > 0
        if np.any(ok):
            best = max(best, float(np.max(np.abs(q @ z)[ok] / nx[ok])))
    return best


def restricted_dual_norm(basis: BasisState, gamma: np.ndarray, lo: int, hi: int | None = None,
                         p: float | None = None, samples: int = 10_000) -> DualNorm:
    """Norm of y restricted to span{E_n : lo < n <= hi}, with a norming element."""
    d = basis.dimension
    hi = d if hi is None else hi
    p = basis.p if p is None else p
    if p != basis.p:
        raise DomainError("the basis lives in a different L^p space")
    if not 0 <= lo < hi <= d:
        raise DomainError(f"need 0 <= lo < hi <= {d}, got ({lo}, {hi}]")
    gamma = np.asarray(gamma, dtype=float)
    q = basis.functional_values(gamma)
    if not np.any(q[lo:hi]):
        return DualNorm(0.0, True, None)
    if p == 2:
        val, z = _dual_norm_l2(basis, q, lo, hi)
    elif p == 1:
        val, z = _dual_norm_l1(basis, q, lo, hi)
    else:
        return DualNorm(sampled_dual_norm(basis, gamma, lo, hi, samples), False, None, samples)
    x = basis.combine(z)
    nx = float(hnorm(x, p))
    if nx == 0 or val == 0:
        return DualNorm(0.0, True, None)
    x = x / nx
    if gamma @ x < 0:
        x = -x
    return DualNorm(val, True, x)


def composed_norm(basis: BasisState, gamma: np.ndarray, n: int) -> float:
    """||y o (id - P_n)|| on the whole space."""
    if n >= basis.dimension:
        return 0.0
    return dual_hnorm(basis.composed_covector(gamma, n), basis.p)


# ---------------------------------------------------------------------------
# operator distances
# ---------------------------------------------------------------------------


def distance_from_haar(basis: BasisState) -> tuple[float, float]:
    """||id - T|| where T maps the Haar system onto the basis, as (lower, upper).

    id - T = -X R with R = V^T H^{-1}; both bounds are exact for p in {1, 2}.
    """
    if basis.rank == 0:
        return 0.0, 0.0
    R = haar.adjoint_inverse(basis.V).T  # r x D
    if basis.p == 1:
        col = np.abs(basis.X @ R).sum(axis=0).max()
        return float(col), float(col)
    if basis.p == 2:
        gram = (basis.X.T @ basis.X) @ (R @ R.T)
        val = float(np.sqrt(max(np.linalg.eigvals(gram).real.max(), 0.0)))
        return val, val
    A = basis.X @ R
    col = np.abs(A).sum(axis=0).max()
    row = np.abs(A).sum(axis=1).max()
    upper = col ** (1 / basis.p) * row ** (1 - 1 / basis.p)  # Riesz-Thorin
    lower = (np.abs(A) ** basis.p).sum(axis=0).max() ** (1 / basis.p)  # on unit vectors
    return float(lower), float(upper)


# ---------------------------------------------------------------------------
# the induction
# ---------------------------------------------------------------------------


SCHEDULES = ("dyadic-split", "geometric")


def default_delta(epsilon: float, n: int, k_hat: float) -> float:
    return epsilon * 2.0 ** (-2 * n) / k_hat


def split_exponents(level: int, m_max: int) -> list[int]:
    """Block boundaries 2^e_m spreading the available levels evenly over the steps."""
    out, prev = [], 0
    for m in range(1, m_max + 1):
        e = max(-(-m * (level - 1) // m_max), prev + 1)
        out.append(e)
        prev = e
    return out


@dataclass(frozen=True)
class PerturbationPlan:
    """How the induction picks delta_m and the candidate block boundaries.

    ``geometric``: delta_m = eps 4^-m / K with every dyadic N allowed (the
    smallest admissible N wins).  ``dyadic-split``: step m may only use
    N_m = 2^ceil(m (K-1)/m_max), delta_m = 1/K; the bound ||id - T|| < eps is
    then enforced on the measured distance instead of through the schedule.
    """

    epsilon: float
    m_max: int
    schedule: str = "dyadic-split"
    delta_schedule: tuple[float, ...] | None = None
    block_structure: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ConfigurationError("epsilon must lie in (0, 1)")
        if self.m_max < 0:
            raise ConfigurationError("m_max must be >= 0")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")
        if self.delta_schedule is not None:
            if len(self.delta_schedule) < self.m_max or min(self.delta_schedule, default=1) <= 0:
                raise ConfigurationError("delta schedule needs m_max positive entries")

    def delta(self, n: int, k_hat: float) -> float:
        if self.delta_schedule is not None:
            return float(self.delta_schedule[n - 1])
        if self.schedule == "dyadic-split":
            return 1.0 / k_hat
        return default_delta(self.epsilon, n, k_hat)

    def check(self, k_hat: float) -> None:
        """The two schedule conditions, with K the supplied constant."""
        total = 0.0
        for n in range(1, self.m_max + 1):
            s = k_hat * 2 ** (n - 1) * self.delta(n, k_hat)
            if s >= 1 or (1 + s) / (1 - s) > 2:
                raise ConfigurationError(f"delta_{n} too large for basis constant {k_hat:g}")
            total += s
        if total > self.epsilon:
            raise ConfigurationError("delta schedule exceeds the epsilon budget")

    def candidates(self, m: int, L: int, dimension: int) -> list[int]:
        if self.block_structure is not None:
            pool = self.block_structure
        elif self.schedule == "dyadic-split":
            level = dimension.bit_length() - 1
            pool = (1 << split_exponents(level, self.m_max)[m - 1],)
        else:
            pool = tuple(1 << j for j in range(dimension.bit_length()))
        return sorted(n for n in pool if L < n < dimension)


@dataclass(frozen=True)
class StepRecord:
    order: int
    L: int
    N: int
    rho: float
    delta: float
    head_norm: float
    tail_norm: float
    step_distance: float
    constant_bound: float
    unchanged: bool = False


def perturbation_step(basis: BasisState, gamma: np.ndarray, L: int, delta: float,
                      k_hat: float | None = None, candidates: list[int] | None = None,
                      order: int = 0) -> tuple[BasisState, int, StepRecord]:
    """Annihilate y = gamma . h on all elements past some dyadic N > L.

    Returns the new basis, N and a record.  Elements 1..N are unchanged.
    """
    d = basis.dimension
    k_hat = basis.basis_constant if k_hat is None else k_hat
    q = basis.functional_values(gamma)
    scale = np.abs(q).max() if q.size else 0.0
    if scale == 0 or np.abs(q[L:]).max() <= ZERO_TOL * scale:
        N = L + 1
        rec = StepRecord(order, L, N, 0.0, delta, 0.0, 0.0, 0.0, k_hat, True)
        return (BasisState(basis.grid, basis.p, basis.weight, basis.X, basis.V,
                           basis.thresholds + (N + 1,), basis.basis_constant,
                           basis.transform_distance), N, rec)
    if basis.p not in (1, 2):
        raise DomainError("certified annihilation needs p in {1, 2}")
    cands = candidates if candidates is not None else [
        n for n in (1 << j for j in range(d.bit_length())) if L < n < d]
    cache: dict[int, tuple[float, float, DualNorm]] = {}

    def rho(N):
        if N not in cache:
            tail = restricted_dual_norm(basis, gamma, N, d).value
            head = restricted_dual_norm(basis, gamma, L, N)
            r = tail / head.value if head.value > 0 else np.inf
            cache[N] = (r, tail, head)
            log.debug("order %d: N=%d rho=%.3e", order, N, r)
        return cache[N][0]

    def admissible(N):
        r = rho(N)
        return r < delta and k_hat * r < 1

    # rho is non-increasing in N (nested ranges), so bisect
    lo, hi = 0, len(cands)
    while lo < hi:
        mid = (lo + hi) // 2
        if admissible(cands[mid]):
            hi = mid
        else:
            lo = mid + 1
    if not cands:
        raise ResolutionExhausted(
            f"no dyadic block boundary left in ({L}, {d}) for order {order}; "
            f"increase the grid level")
    if lo == len(cands):
        best = min(cache[n][0] for n in cache)
        raise ResolutionExhausted(
            f"no block boundary N < {d} gives rho < {delta:.3e} for order {order} "
            f"(best rho {best:.3e}); increase the grid level")
    N = cands[lo]
    r, tail, head = cache[N]
    x = head.element
    dval = float(gamma @ x)
    v = np.zeros(d)
    v[N:] = -q[N:] / dval
    step = composed_norm(basis, gamma, N) / dval
    bound = k_hat * (1 + step) / (1 - step) if step < 1 else np.inf
    new = basis.appended(x, v, thresholds=basis.thresholds + (N + 1,),
                         basis_constant=basis.basis_constant,
                         transform_distance=basis.transform_distance)
    return new, N, StepRecord(order, L, N, r, delta, dval, tail, step, bound)


@dataclass
class AnnihilationCertificate:
    thresholds: list[int]
    residuals: list[list[float]]       # residuals[k-1][n - n_k] = |J^k(E_n)|
    element_norms: list[float]
    transform_distance: float
    transform_distance_lower: float
    basis_constant_before: float
    basis_constant_after: float
    basis_constant_bound: float
    epsilon: float
    p: float
    level: int
    weight: dict
    steps: list[dict] = field(default_factory=list)
    constant_samples: int = 0

    def violations(self, tol: float = 1e-10) -> list[str]:
        out = []
        for k, row in enumerate(self.residuals, 1):
            n0 = self.thresholds[k - 1]
            for i, r in enumerate(row):
                n = n0 + i
                if not r <= tol * self.element_norms[n - 1]:
                    out.append(f"residual (k={k}, n={n}) = {r:.3e} exceeds {tol:g}*||e_n||")
                    break
        if not self.transform_distance < self.epsilon:
            out.append(f"transform distance {self.transform_distance:.3e} >= epsilon {self.epsilon}")
        if not self.basis_constant_after <= self.basis_constant_bound + 1e-9:
            out.append("basis constant exceeds the perturbation bound")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            out.append("thresholds are not strictly increasing")
        return out

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "residuals": self.residuals,
            "element_norms": self.element_norms,
            "transform_distance": self.transform_distance,
            "transform_distance_lower": self.transform_distance_lower,
            "basis_constant_before": self.basis_constant_before,
            "basis_constant_after": self.basis_constant_after,
            "basis_constant_bound": self.basis_constant_bound,
            "constant_samples": self.constant_samples,
            "epsilon": self.epsilon,
            "p": self.p,
            "level": self.level,
            "weight": self.weight,
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnihilationCertificate":
        keys = cls.__dataclass_fields__
        return cls(**{k: data[k] for k in keys if k in data})


def residual_table(basis: BasisState, m_max: int) -> tuple[list[list[float]], list[float]]:
    rows = basis.halfline_rows()
    norms = hnorm(basis.element_matrix(), basis.p)
    table = []
    for k in range(1, m_max + 1):
        n0 = basis.thresholds[k - 1]
        vals = np.abs(rows[n0 - 1:] @ cell_moments(basis.grid.log_nodes, k))
        table.append([float(v) for v in vals])
    return table, [float(v) for v in norms]


def build_annihilating_basis(initial: BasisState, plan: PerturbationPlan,
                             constant_samples: int = 16, seed: int = 0,
                             check_shrinking: bool = True
                             ) -> tuple[BasisState, AnnihilationCertificate]:
    """Annihilate J^1..J^m_max one after the other."""
    if initial.p not in (1, 2):
        raise DomainError("certified annihilation needs p in {1, 2}")
    grid = initial.grid
    gammas = [representer(m, initial.weight, grid).pairing_vector(initial.p)
              for m in range(1, plan.m_max + 1)]
    if check_shrinking:
        for m, g in enumerate(gammas, 1):
            rep = shrinking_check(initial, g)
            if not rep.passed:
                raise PreconditionError(
                    f"initial basis is not shrinking for J^{m}: tail norms {rep.norms}",
                    {"order": m, "norms": rep.norms})
    k0 = initial.basis_constant
    if plan.schedule == "geometric" and plan.delta_schedule is None:
        plan.check(k0)
    k_hat = k0
    basis, L, steps = initial, 0, []
    for m, g in enumerate(gammas, 1):
        delta = plan.delta(m, k_hat)
        try:
            basis, N, rec = perturbation_step(basis, g, L, delta, k_hat,
                                              plan.candidates(m, L, grid.size), order=m)
        except ResolutionExhausted as exc:
            exc.partial = {"thresholds": list(basis.thresholds), "steps": steps}
            raise
        k_hat = rec.constant_bound
        steps.append(rec.__dict__ | {"rho": float(rec.rho)})
        log.info("J^%d annihilated past N=%d (rho=%.3e, step distance %.3e)",
                 m, N, rec.rho, rec.step_distance)
        L = N
    lower, upper = distance_from_haar(basis)
    if upper >= plan.epsilon:
        log.warning("measured ||id - T|| = %.3f is not below epsilon = %.3f", upper, plan.epsilon)
    est = basis_constant_estimate(basis, constant_samples, seed)
    basis = BasisState(grid, basis.p, basis.weight, basis.X, basis.V, basis.thresholds,
                       max(est.value, 1.0), upper)
    residuals, norms = residual_table(basis, plan.m_max)
    cert = AnnihilationCertificate(
        thresholds=list(basis.thresholds), residuals=residuals, element_norms=norms,
        transform_distance=upper, transform_distance_lower=lower,
        basis_constant_before=k0, basis_constant_after=est.value,
        basis_constant_bound=k_hat, epsilon=plan.epsilon, p=basis.p, level=grid.level,
        weight=basis.weight.to_dict(), steps=steps, constant_samples=est.samples)
    return basis, cert


# ---------------------------------------------------------------------------
# shrinking, Gram-Schmidt, reflection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShrinkingReport:
    schedule: tuple[int, ...]
    norms: tuple[float, ...]
    strictly_decreasing: bool    # over the whole schedule
    eventually_decreasing: bool  # strictly decreasing from its maximum on
    reaches_zero: bool
    relative_at_half: float

    @property
    def passed(self) -> bool:
        """Finite-model form of shrinking: decays from its peak down to zero."""
        return self.eventually_decreasing and self.reaches_zero


def _decreasing(vals) -> bool:
    return all(b < a or a == b == 0 for a, b in zip(vals, vals[1:]))


def shrinking_check(basis: BasisState, functional, n_schedule=None) -> ShrinkingReport:
    """||y o (id - P_n)|| along an increasing schedule (dyadic by default)."""
    gamma = functional.pairing_vector(basis.p) if hasattr(functional, "pairing_vector") \
        else np.asarray(functional, dtype=float)
    d = basis.dimension
    if n_schedule is None:
        n_schedule = [1 << j for j in range(d.bit_length())]
    sched = tuple(int(n) for n in n_schedule)
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise DomainError("n_schedule must be increasing")
    norms = tuple(composed_norm(basis, gamma, n) for n in sched)
    live = any(v > 0 for v in norms)
    peak = int(np.argmax(norms))
    rel = float("nan")
    if d // 2 in sched and norms[0] > 0:
        rel = norms[sched.index(d // 2)] / norms[0]
    return ShrinkingReport(sched, norms, bool(live and _decreasing(norms)),
                           bool(live and _decreasing(norms[peak:])),
                           sched[-1] < d or norms[-1] == 0.0, rel)


def gram_schmidt_annihilating(w: Weight, m_max: int, grid: DyadicGrid) -> BasisState:
    """Orthonormal basis of the weighted L^2 model whose elements past m_max
    are orthogonal to the Riesz representers of J^1..J^m_max.

    The representers come first, then the Haar system; modified Gram-Schmidt
    (two passes) in the normalised inner product.  Thresholds are n_m = m+1,
    i.e. J^m vanishes on all elements with index > m.
    """
    d = grid.size
    reps = [d * representer(m, w, grid).pairing_vector(2.0) for m in range(1, m_max + 1)]
    cols = np.column_stack(reps + [haar.synthesis(np.eye(d))]) if reps \
        else haar.synthesis(np.eye(d))
    Q = np.zeros((d, d))
    kept = 0
    for c in range(cols.shape[1]):
        v = cols[:, c].copy()
        for _ in range(2):
            v -= Q[:, :kept] @ (Q[:, :kept].T @ v) / d
        nv = np.sqrt(v @ v / d)
        ref = np.sqrt(cols[:, c] @ cols[:, c] / d)
        if nv <= 1e-10 * ref:
            if c < m_max:
                raise PreconditionError(
                    f"representers of J^1..J^{m_max} are linearly dependent at this level")
            continue
        Q[:, kept] = v / nv
        kept += 1
        if kept == d:
            break
    if kept < d:
        raise InternalError("Gram-Schmidt lost rank")
    # store as Haar + correction: E = H + (Q - H) with X = Q - H, V = I
    X = Q - haar.synthesis(np.eye(d))
    return BasisState(grid, 2.0, w, X, np.eye(d),
                      thresholds=tuple(range(2, m_max + 2)))


@dataclass(frozen=True)
class MirroredBasis:
    """Elements on (0, inf): E_n^+(x) = E_n^-(-x), stored on reflected cells."""

    source: BasisState
    edges: np.ndarray
    rows: np.ndarray  # half-line values, row n-1 for element n, cells ascending in x

    def reflect(self) -> np.ndarray:
        """Back to the negative half-line rows."""
        return self.rows[:, ::-1].copy()


def mirror_basis(basis: BasisState | MirroredBasis):
    if isinstance(basis, MirroredBasis):
        return basis.source
    edges = -basis.grid.log_nodes[::-1]
    return MirroredBasis(basis, edges, basis.halfline_rows()[:, ::-1].copy())


def mirrored_moments(mb: MirroredBasis, m: int) -> np.ndarray:
    """1/(m-1)! int_0^inf y^(m-1) E_n^+(y) dy for all n."""
    a, b = mb.edges[:-1], mb.edges[1:]
    from math import factorial
    from .functionals import _power_difference
    cm = _power_difference(b, a, m) / factorial(m)
    return mb.rows @ cm


def mirrored_norms(mb: MirroredBasis, w: Weight, p: float) -> np.ndarray:
    mass = w.integrate(mb.edges[:-1], mb.edges[1:])
    return (np.abs(mb.rows) ** p @ mass) ** (1.0 / p)


def halfline_norms(basis: BasisState) -> np.ndarray:
    mass = grid_masses(basis.grid, basis.weight)
    return (np.abs(basis.halfline_rows()) ** basis.p @ mass) ** (1.0 / basis.p)
