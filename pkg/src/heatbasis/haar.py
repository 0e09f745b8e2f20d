"""The Haar system on (0, 1) and fast transforms on the dyadic grid.

Haar functions are kept with the +-1 normalisation: ``e_1 = 1`` and
``e_{2^k+j}`` is +1 on the left half and -1 on the right half of the j-th
block of length 2^-k.  Coefficient arrays are 0-based, so ``c[n-1]`` belongs
to ``e_n`` and level k occupies ``c[2**k : 2**(k+1)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BasisIndexError
from .grid import UNIT, DyadicGrid, GridFunction


@dataclass(frozen=True)
class HaarIndex:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise BasisIndexError(f"Haar index must be a positive integer, got {self.n!r}")

    @property
    def k(self) -> int | None:
        return None if self.n == 1 else (self.n - 1).bit_length() - 1

    @property
    def j(self) -> int | None:
        return None if self.n == 1 else self.n - (1 << self.k)

    @classmethod
    def from_kj(cls, k: int, j: int) -> "HaarIndex":
        if not 1 <= j <= (1 << k):
            raise BasisIndexError(f"j must lie in [1, 2**k], got k={k}, j={j}")
        return cls((1 << k) + j)


def support_sizes(size: int) -> np.ndarray:
    """Number of grid cells in the support of each e_n (the squared l2 norms)."""
    level = int(size).bit_length() - 1
    out = np.empty(size)
    out[0] = size
    for k in range(level):
        out[1 << k: 2 << k] = size >> k
    return out


def levels(size: int) -> np.ndarray:
    """Level k of each index (level -1 for e_1)."""
    out = np.full(size, -1, dtype=np.int64)
    for k in range(int(size).bit_length() - 1):
        out[1 << k: 2 << k] = k
    return out


def haar(n: int | HaarIndex, grid: DyadicGrid) -> GridFunction:
    idx = n if isinstance(n, HaarIndex) else HaarIndex(n)
    if idx.n > grid.size:
        raise BasisIndexError(f"e_{idx.n} is not resolved by a grid with {grid.size} cells")
    if idx.n == 1:
        return grid.function(np.ones(grid.size), UNIT)
    k, j = idx.k, idx.j
    mids = (np.arange(grid.size) + 0.5) / grid.size
    h = 2.0 ** (-k - 1)
    vals = np.where((mids > (2 * j - 2) * h) & (mids < (2 * j - 1) * h), 1.0, 0.0)
    vals -= np.where((mids > (2 * j - 1) * h) & (mids < 2 * j * h), 1.0, 0.0)
    return grid.function(vals, UNIT)


def synthesis(coef: np.ndarray) -> np.ndarray:
    """Cell values of sum_n c_n e_n; works column-wise on 2-D input."""
    coef = np.asarray(coef, dtype=float)
    size = coef.shape[0]
    level = size.bit_length() - 1
    a = coef[:1].copy()
    for k in range(level):
        d = coef[1 << k: 2 << k]
        nxt = np.empty((2 * a.shape[0],) + a.shape[1:])
        nxt[0::2] = a + d
        nxt[1::2] = a - d
        a = nxt
    return a


def adjoint(values: np.ndarray) -> np.ndarray:
    """q_n = sum_i values_i e_n(i), the transpose of :func:`synthesis`."""
    a = np.asarray(values, dtype=float)
    size = a.shape[0]
    level = size.bit_length() - 1
    out = np.empty_like(a)
    for k in range(level - 1, -1, -1):
        left, right = a[0::2], a[1::2]
        out[1 << k: 2 << k] = left - right
        a = left + right
    out[0] = a[0]
    return out


def analysis(values: np.ndarray) -> np.ndarray:
    """Coefficients c with synthesis(c) == values."""
    values = np.asarray(values, dtype=float)
    s = support_sizes(values.shape[0])
    q = adjoint(values)
    return q / s.reshape((-1,) + (1,) * (q.ndim - 1))


def adjoint_inverse(q: np.ndarray) -> np.ndarray:
    """Solve adjoint(x) = q, i.e. apply H^{-T}."""
    q = np.asarray(q, dtype=float)
    s = support_sizes(q.shape[0])
    return synthesis(q / s.reshape((-1,) + (1,) * (q.ndim - 1)))


def indicator_in_haar(m: int, grid: DyadicGrid) -> np.ndarray:
    """Haar coefficients of the indicator of A_m, A_{2^k+j-1} = [(j-1)/2^k, j/2^k]."""
    if m < 1 or m > grid.size:
        raise BasisIndexError(f"A_{m} is not resolved by a grid with {grid.size} cells")
    if m == 1:
        lo, hi = 0, grid.size
    else:
        k = m.bit_length() - 1
        j = m - (1 << k) + 1
        width = grid.size >> k
        lo, hi = (j - 1) * width, j * width
    vals = np.zeros(grid.size)
    vals[lo:hi] = 1.0
    return analysis(vals)


def projection_norms(h: np.ndarray, p: float = 1.0) -> np.ndarray:
    """||P_n h||_{L^p(0,1)} for n = 1..size under the Haar basis, all at once.

    ``h`` holds cell values, one function per column when 2-D.  Uses that
    P_{2^k+j} h equals the level-(k+1) block means on the first j blocks of
    level k and the level-k means elsewhere.
    """
    h = np.asarray(h, dtype=float)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[:, None]
    size = h.shape[0]
    level = size.bit_length() - 1
    means = [h]
    for _ in range(level):
        a = means[-1]
        means.append(0.5 * (a[0::2] + a[1::2]))
    means = means[::-1]  # means[k] has 2**k rows
    out = np.empty((size, h.shape[1]))
    out[0] = np.abs(means[0][0]) ** p
    for k in range(level):
        coarse = np.abs(means[k]) ** p * 2.0 ** (-k)
        fine = np.abs(means[k + 1]) ** p * 2.0 ** (-k - 1)
        refined = fine[0::2] + fine[1::2]
        base = coarse.sum(axis=0)
        out[1 << k: 2 << k] = base + np.cumsum(refined - coarse, axis=0)
    out = out ** (1.0 / p)
    return out[:, 0] if squeeze else out


def haar_level_of(n: int) -> int:
    return -1 if n == 1 else int(math.floor(math.log2(n - 1)))
