"""Re-check an annihilation certificate from the exported basis alone.

Nothing here reuses the build path: moments come from Gauss-Legendre
quadrature of (-y)^(k-1)/(k-1)! over each cell, norms from the x-side weight
masses, and ||id - T|| from dense matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import haar
from .annihilate import AnnihilationCertificate
from .basis import read_basis
from .errors import ConfigurationError, ParseError
from .functionals import transfer_factors
from .grid import DyadicGrid, Weight, gauss_legendre, grid_masses

RESIDUAL_TOL = 1e-10


def quadrature_moments(edges: np.ndarray, k: int, order: int = 8) -> np.ndarray:
    nodes, weights = gauss_legendre(order)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    y = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
    return ((-y) ** (k - 1) * weights).sum(axis=1) * half / math.factorial(k - 1)


def dense_distance(rows: np.ndarray, factors: np.ndarray, p: float, iters: int = 200) -> float:
    """||(E - H) H^{-1}|| with E built from the file rows."""
    d = rows.shape[0]
    M = rows.T * factors[:, None]               # elements as unit-side columns
    M -= haar.synthesis(np.eye(d))
    M /= haar.support_sizes(d)[None, :]
    A = haar.synthesis(M.T).T                   # (E - H) diag(1/s) H^T
    if p == 1:
        return float(np.abs(A).sum(axis=0).max())
    rng = np.random.default_rng(0)
    v = rng.standard_normal(d)
    val = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new = math.sqrt(nw)
        if abs(new - val) <= 1e-14 * new:
            val = new
            break
        val = new
    return float(val)


@dataclass
class VerificationReport:
    passed: bool
    violations: list[str] = field(default_factory=list)
    max_relative_residual: float = 0.0
    transform_distance: float = float("nan")

    def first(self) -> str | None:
        return self.violations[0] if self.violations else None


def load_certificate(path) -> AnnihilationCertificate:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read certificate {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise ParseError(f"{path}: unreadable certificate ({exc})") from exc
    try:
        return AnnihilationCertificate.from_dict(data)
    except (ValueError, TypeError, KeyError) as exc:
        raise ParseError(f"{path}: unreadable certificate ({exc})") from exc


def verify(basis_path, certificate_path) -> VerificationReport:
    bf = read_basis(basis_path)
    cert = load_certificate(certificate_path)
    out: list[str] = []
    if bf.level != cert.level or bf.p != cert.p:
        out.append("basis file and certificate disagree on level or p")
    if list(bf.thresholds) != list(cert.thresholds):
        out.append("basis file and certificate disagree on thresholds")
    if len(cert.residuals) != len(cert.thresholds):
        out.append("residual table does not match the thresholds")
    if out:
        return VerificationReport(False, out)
    grid = DyadicGrid(bf.level)
    weight = Weight.from_dict(cert.weight)
    mass = grid_masses(grid, weight)
    norms = (np.abs(bf.rows) ** bf.p @ mass) ** (1.0 / bf.p)
    worst = 0.0
    for k, n0 in enumerate(cert.thresholds, 1):
        recomputed = np.abs(bf.rows[n0 - 1:] @ quadrature_moments(grid.log_nodes, k))
        claimed = np.asarray(cert.residuals[k - 1], dtype=float)
        if claimed.size != recomputed.size:
            out.append(f"residual row k={k} has {claimed.size} entries, expected {recomputed.size}")
            continue
        scale = norms[n0 - 1:]
        rel = recomputed / scale
        worst = max(worst, float(rel.max(initial=0.0)))
        for i in range(recomputed.size):
            n = n0 + i
            if not rel[i] <= RESIDUAL_TOL:
                out.append(f"residual (k={k}, n={n}) = {recomputed[i]:.3e} exceeds "
                           f"{RESIDUAL_TOL:g}*||e_n||")
                break
            if not claimed[i] <= RESIDUAL_TOL * scale[i] or \
                    abs(claimed[i] - recomputed[i]) > RESIDUAL_TOL * scale[i]:
                out.append(f"certificate residual (k={k}, n={n}) = {claimed[i]:.3e} "
                           f"does not match recomputed {recomputed[i]:.3e}")
                break
    dist = dense_distance(bf.rows, transfer_factors(grid, weight, bf.p), bf.p) \
        if cert.thresholds else 0.0
    if not dist < cert.epsilon:
        out.append(f"||id - T|| = {dist:.6f} is not below epsilon = {cert.epsilon}")
    if abs(dist - cert.transform_distance) > 1e-6 * max(1.0, dist):
        out.append(f"certificate distance {cert.transform_distance:.9f} does not match "
                   f"recomputed {dist:.9f}")
    if not cert.basis_constant_after <= cert.basis_constant_bound + 1e-9:
        out.append("basis constant exceeds the perturbation bound")
    if any(b <= a for a, b in zip(cert.thresholds, cert.thresholds[1:])):
        out.append("thresholds are not strictly increasing")
    return VerificationReport(not out, out, worst, dist)
