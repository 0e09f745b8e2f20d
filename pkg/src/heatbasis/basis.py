"""Finite bases of the transferred weighted L^p model.

Everything is stored on the unit-interval side: a vector ``h`` holds the cell
values of S_p f, with norm (mean |h|^p)^(1/p) equal to the weighted norm of
f.  A basis is the Haar system plus a low-rank correction::

    E = H + X V^T        (element n is column n)

so its coordinate matrix is C = H^{-1} E = I + U V^T with U = H^{-1} X.
Each rank-one annihilation step appends one column to X and V.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import haar
from .errors import BasisIndexError, ConfigurationError, DataError, InternalError, ParseError
from .functionals import transfer_factors
from .grid import HALFLINE, UNIT, DyadicGrid, GridFunction, Weight


def hnorm(h: np.ndarray, p: float) -> np.ndarray:
    """Normalised l^p norm of cell values along axis 0."""
    h = np.asarray(h, dtype=float)
    if p == 1:
        return np.abs(h).mean(axis=0)
    if p == 2:
        return np.sqrt((h * h).mean(axis=0))
    return (np.abs(h) ** p).mean(axis=0) ** (1.0 / p)


def dual_hnorm(u: np.ndarray, p: float) -> float:
    """Norm of h -> u.h with respect to :func:`hnorm`."""
    u = np.asarray(u, dtype=float)
    d = u.size
    if p == 1:
        return float(d * np.abs(u).max()) if d else 0.0
    q = p / (p - 1)
    return float(d ** (1.0 / p) * np.linalg.norm(u, ord=q))


@dataclass(frozen=True, eq=False)
class BasisState:
    grid: DyadicGrid
    p: float
    weight: Weight
    X: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    thresholds: tuple[int, ...] = ()
    basis_constant: float = 1.0
    transform_distance: float = 0.0

    def __post_init__(self):
        d = self.grid.size
        X = np.ascontiguousarray(self.X, dtype=float).reshape(d, -1)
        V = np.ascontiguousarray(self.V, dtype=float).reshape(d, -1)
        if X.shape != V.shape:
            raise DataError("X and V must have the same shape")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise DataError("thresholds must be strictly increasing")
        if self.basis_constant < 1 - 1e-12:
            raise DataError("basis constant is at least 1")
        U = haar.analysis(X)
        core = np.eye(X.shape[1]) + V.T @ U
        for a in (X, V, U, core):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "_U", U)
        object.__setattr__(self, "_core", core)

    # -- construction ------------------------------------------------------

    @classmethod
    def haar(cls, grid: DyadicGrid, p: float = 1.0, weight: Weight | None = None) -> "BasisState":
        """Haar basis of L^p(0,1), i.e. S_p^{-1} of it in the weighted space."""
        empty = np.zeros((grid.size, 0))
        return cls(grid, float(p), weight or Weight.gauss_exp(), empty, empty)

    def appended(self, x: np.ndarray, v: np.ndarray, **changes) -> "BasisState":
        return BasisState(self.grid, self.p, self.weight,
                          np.column_stack([self.X, x]), np.column_stack([self.V, v]),
                          **changes)

    # -- basic views -------------------------------------------------------

    @property
    def dimension(self) -> int:
        return self.grid.size

    @property
    def rank(self) -> int:
        return self.X.shape[1]

    @property
    def U(self) -> np.ndarray:
        return self._U

    def element_values(self, n) -> np.ndarray:
        """Cell values of E_n (1-based n; an array of n gives columns)."""
        idx = np.atleast_1d(np.asarray(n)) - 1
        if idx.size and (idx.min() < 0 or idx.max() >= self.dimension):
            raise BasisIndexError("basis index out of range")
        unit = np.zeros((self.dimension, idx.size))
        unit[idx, np.arange(idx.size)] = 1.0
        out = self._corrected(haar.synthesis(unit), idx)
        return out[:, 0] if np.ndim(n) == 0 else out

    def element(self, n: int) -> GridFunction:
        return self.grid.function(self.element_values(n), UNIT)

    def element_matrix(self) -> np.ndarray:
        """Dense D x D matrix with the elements as columns."""
        return self._corrected(haar.synthesis(np.eye(self.dimension)), slice(None))

    def _corrected(self, out: np.ndarray, idx) -> np.ndarray:
        # one column at a time: a zero weight leaves the values bit-identical
        for k in range(self.rank):
            out += np.outer(self.X[:, k], self.V[idx, k])
        return out

    def halfline_rows(self) -> np.ndarray:
        """Elements as rows of half-line cell values (f = S_p^{-1} E_n)."""
        factors = transfer_factors(self.grid, self.weight, self.p)
        return (self.element_matrix() / factors[:, None]).T

    # -- coordinates and projections --------------------------------------

    def coordinates(self, h: np.ndarray) -> np.ndarray:
        """z with sum_n z_n E_n = h (column-wise on 2-D input)."""
        a = haar.analysis(h)
        if self.rank == 0:
            return a
        try:
            s = np.linalg.solve(self._core, self.V.T @ a)
        except np.linalg.LinAlgError as exc:
            raise InternalError("basis coordinate system is singular") from exc
        return a - self.U @ s

    def combine(self, z: np.ndarray) -> np.ndarray:
        """sum_n z_n E_n."""
        return haar.synthesis(z) + self.X @ (self.V.T @ z)

    def coordinates_adjoint(self, q: np.ndarray) -> np.ndarray:
        """C^{-T} q."""
        if self.rank == 0:
            return np.asarray(q, dtype=float)
        s = np.linalg.solve(self._core.T, self.U.T @ q)
        return q - self.V @ s

    def functional_values(self, gamma: np.ndarray) -> np.ndarray:
        """y(E_n) for the covector gamma, all n."""
        return haar.adjoint(gamma) + self.V @ (self.X.T @ gamma)

    def project(self, h: np.ndarray, n: int) -> np.ndarray:
        """P_n h = sum_{k <= n} z_k E_k."""
        if not 0 <= n <= self.dimension:
            raise BasisIndexError(f"projection index {n} out of range")
        z = self.coordinates(h)
        z[n:] = 0.0
        return self.combine(z)

    def composed_covector(self, gamma: np.ndarray, n: int) -> np.ndarray:
        """Covector of y o (id - P_n)."""
        q = self.functional_values(gamma)
        q[n:] = 0.0
        return gamma - haar.adjoint_inverse(self.coordinates_adjoint(q))

    # -- norms -------------------------------------------------------------

    def norm(self, h: np.ndarray) -> np.ndarray:
        return hnorm(h, self.p)

    def all_projection_norms(self, h: np.ndarray, chunk: int = 512) -> np.ndarray:
        """||P_n h|| for n = 1..D."""
        h = np.asarray(h, dtype=float)
        if self.rank == 0:
            return haar.projection_norms(h, self.p)
        z = self.coordinates(h)
        haar_part = haar.synthesis(z)
        cum = np.cumsum(self.V * z[:, None], axis=0)  # row n-1: first n terms
        out = np.empty(self.dimension)
        out[0] = hnorm(np.full(self.dimension, np.mean(haar_part)) + self.X @ cum[0], self.p)
        d = self.dimension
        means = [haar_part]
        while means[-1].size > 1:
            a = means[-1]
            means.append(0.5 * (a[0::2] + a[1::2]))
        means = means[::-1]
        for k in range(self.grid.level):
            width = d >> k
            block = np.arange(d) // width
            fine = np.repeat(means[k + 1], width // 2)
            coarse = np.repeat(means[k], width)
            for start in range(0, 1 << k, chunk):
                j = np.arange(start + 1, min(start + chunk, 1 << k) + 1)
                rows = np.where(block[None, :] < j[:, None], fine[None, :], coarse[None, :])
                n = (1 << k) + j
                rows += cum[n - 1] @ self.X.T
                out[n - 1] = hnorm(rows.T, self.p)
        return out


def basis_projection(f: GridFunction, n: int, basis: BasisState) -> GridFunction:
    """P_n f, for f given on either side of the transfer."""
    if not f.is_on(basis.grid):
        raise DataError("function does not live on the basis grid")
    if f.side == HALFLINE:
        factors = transfer_factors(basis.grid, basis.weight, basis.p)
        return f.with_values(basis.project(f.values * factors, n) / factors)
    return f.with_values(basis.project(f.values, n))


@dataclass(frozen=True)
class BasisConstantEstimate:
    value: float
    samples: int
    argmax_index: int


def basis_constant_estimate(basis: BasisState, samples: int = 32, seed: int = 0,
                            extra: np.ndarray | None = None) -> BasisConstantEstimate:
    """Sampled lower bound of sup_n ||P_n||, with all n checked per sample.

    Test vectors are random sign/scale mixtures, the correction vectors X and
    optionally ``extra`` columns.
    """
    if samples < 1:
        raise DataError("samples must be >= 1")
    d = basis.dimension
    if d == 1:
        return BasisConstantEstimate(1.0, samples, 1)
    rng = np.random.default_rng(seed)
    tests = [rng.standard_normal(d) * rng.random(d) ** 4 for _ in range(samples)]
    for i in range(basis.rank):
        tests.append(basis.X[:, i])
        tests.append(basis.X[:, i] + 0.5 * tests[i % samples])
    if extra is not None:
        tests.extend(np.asarray(extra, dtype=float).reshape(d, -1).T)
    best, where = 1.0, d
    for h in tests:
        nh = basis.norm(h)
        if nh == 0:
            continue
        norms = basis.all_projection_norms(h) / nh
        i = int(np.argmax(norms))
        if norms[i] > best:
            best, where = float(norms[i]), i + 1
    return BasisConstantEstimate(best, len(tests), where)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

MAGIC = b"HBASIS01"
_HEADER = struct.Struct("<8sqdqq")


@dataclass(frozen=True)
class BasisFile:
    dimension: int
    p: float
    level: int
    thresholds: tuple[int, ...]
    rows: np.ndarray  # rows are elements as half-line cell values


def write_basis(path, basis: BasisState) -> None:
    rows = np.ascontiguousarray(basis.halfline_rows(), dtype="<f8")
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, basis.dimension, basis.p, basis.grid.level,
                           len(basis.thresholds)))
    buf.write(np.asarray(basis.thresholds, dtype="<i8").tobytes())
    buf.write(rows.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_basis(path) -> BasisFile:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read basis file {path}: {exc.strerror}") from exc
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: file too short for a basis header")
    magic, dim, p, level, nthr = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"{path}: not a basis file")
    if dim != 1 << level or nthr < 0 or nthr > dim:
        raise ParseError(f"{path}: inconsistent header")
    off = _HEADER.size
    thr = np.frombuffer(raw, "<i8", nthr, off)
    off += 8 * nthr
    need = off + 8 * dim * dim
    if len(raw) != need:
        raise ParseError(f"{path}: expected {need} bytes, found {len(raw)}")
    rows = np.frombuffer(raw, "<f8", dim * dim, off).reshape(dim, dim)
    return BasisFile(int(dim), float(p), int(level), tuple(int(t) for t in thr), rows)


def write_basis_csv(path, basis: BasisState) -> None:
    np.savetxt(path, basis.halfline_rows(), delimiter=",", fmt="%.17g")


def read_basis_csv(path) -> np.ndarray:
    try:
        rows = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if rows.shape[0] != rows.shape[1]:
        raise ParseError(f"{path}: basis matrix is not square")
    return rows
