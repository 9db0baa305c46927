"""Gaussian log-permeability field via a truncated Karhunen-Loeve expansion.

The covariance operator is discretized on the mesh nodes (Nystrom with the
dual-cell quadrature weights) and eigendecomposed; a realization is the
weighted sum of the leading eigenfunctions with standard-normal coefficients.
For nested meshes the basis is built once on the finest mesh and restricted
to coarser ones by subsampling, so calibration differences across mesh levels
are attributable to the mesh alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.special import gamma as _gamma_fn, kv as _bessel_kv, ndtri

if TYPE_CHECKING:
    from .darcy import Mesh

__all__ = [
    "MaternCovariance",
    "KlBasis",
    "FieldRealization",
    "CovarianceNotPositiveDefinite",
    "build_kl",
    "restrict_basis",
    "truncate_basis",
    "sample_field",
    "uniform_to_gaussian",
    "clamped_uniform_to_gaussian",
    "save_basis",
    "load_basis",
]

DENSE_EIG_LIMIT = 4500
PD_REL_TOL = 1e-8


class CovarianceNotPositiveDefinite(ValueError):
    def __init__(self, most_negative: float):
        self.most_negative = most_negative
        super().__init__(
            f"covariance matrix is numerically indefinite (most negative eigenvalue {most_negative:.6e})"
        )


@dataclass(frozen=True)
class MaternCovariance:
    """Isotropic Matern covariance of the log-permeability field.

    variance is the field variance (value at zero distance), correlation
    length is in meters, smoothness is the Matern nu. Half-integer nu use the
    closed forms; other nu fall back to the Bessel expression.
    """

    variance: float = 1.0
    correlation_length: float = 50.0
    smoothness: float = 1.5

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be >= 0")
        if self.correlation_length <= 0:
            raise ValueError("correlation_length must be positive")
        if self.smoothness <= 0:
            raise ValueError("smoothness (nu) must be positive")

    def __call__(self, dist) -> np.ndarray:
        d = np.asarray(dist, dtype=float)
        nu, rho, var = self.smoothness, self.correlation_length, self.variance
        if nu == 0.5:
            return var * np.exp(-d / rho)
        if nu == 1.5:
            t = np.sqrt(3.0) * d / rho
            return var * (1.0 + t) * np.exp(-t)
        if nu == 2.5:
            t = np.sqrt(5.0) * d / rho
            return var * (1.0 + t + t * t / 3.0) * np.exp(-t)
        t = np.sqrt(2.0 * nu) * d / rho
        out = np.full_like(t, var)
        pos = t > 0
        tp = t[pos]
        out[pos] = var * (2.0 ** (1.0 - nu) / _gamma_fn(nu)) * tp**nu * _bessel_kv(nu, tp)
        return out


@dataclass(frozen=True)
class KlBasis:
    """Leading eigenpairs of the discretized covariance operator.

    Eigenvalues are sorted non-increasing; eigenfunctions (columns) are
    orthonormal under the weighted inner product sum_k w_k f(x_k) g(x_k).
    """

    eigenvalues: np.ndarray  # (s,)
    eigenfunctions: np.ndarray  # (n_nodes, s)
    node_weights: np.ndarray  # (n_nodes,)
    mesh: "Mesh"
    covariance: MaternCovariance

    @property
    def truncation(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class FieldRealization:
    """A sampled field: values = sum_j sqrt(lambda_j) phi_j z_j at the nodes."""

    values: np.ndarray
    coefficients: np.ndarray

    @property
    def truncation(self) -> int:
        return len(self.coefficients)


def build_kl(cov: MaternCovariance, mesh: "Mesh", s: int) -> KlBasis:
    """Top-s eigenpairs of the covariance operator discretized on the mesh.

    Nystrom scheme: eigendecompose W^(1/2) C W^(1/2) with C the node
    covariance matrix and W the quadrature weights, then unweight the
    eigenvectors. A numerically indefinite C is rejected with the most
    negative eigenvalue as the diagnostic.
    """
    n = mesh.n_nodes
    if not 1 <= s <= n:
        raise ValueError(f"truncation s={s} must be in [1, {n}]")
    pts = mesh.node_coordinates()
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    C = cov(dist)
    w = mesh.node_quadrature_weights()
    sw = np.sqrt(w)
    B = C * np.outer(sw, sw)
    B = 0.5 * (B + B.T)

    if n <= DENSE_EIG_LIMIT:
        lam, vec = scipy.linalg.eigh(B)
        lam_max = max(lam[-1], 0.0)
        neg_tol = PD_REL_TOL * max(lam_max, np.finfo(float).tiny)
        if lam[0] < -neg_tol:
            raise CovarianceNotPositiveDefinite(float(lam[0]))
        lam = np.clip(lam[::-1][:s], 0.0, None)
        vec = vec[:, ::-1][:, :s]
    else:
        # Lanczos for the leading block; positive-definiteness is then only
        # certified for the computed eigenvalues.
        lam, vec = scipy.sparse.linalg.eigsh(B, k=s, which="LA")
        order = np.argsort(lam)[::-1]
        lam, vec = lam[order], vec[:, order]
        if lam[-1] < -PD_REL_TOL * max(lam[0], np.finfo(float).tiny):
            raise CovarianceNotPositiveDefinite(float(lam[-1]))
        lam = np.clip(lam, 0.0, None)

    phi = vec / sw[:, None]
    return KlBasis(eigenvalues=lam, eigenfunctions=phi, node_weights=w, mesh=mesh, covariance=cov)


def restrict_basis(basis: KlBasis, coarse_mesh: "Mesh") -> KlBasis:
    """Restrict eigenfunctions to a nested coarser mesh by node subsampling.

    The coarse mesh must divide the fine one and share the domain. The
    eigenvalues are kept; orthonormality then holds only approximately on the
    coarse nodes, which is immaterial for sampling realizations.
    """
    fine = basis.mesh
    if coarse_mesh.side_length != fine.side_length:
        raise ValueError("meshes cover different domains")
    if coarse_mesh.d > fine.d or fine.d % coarse_mesh.d != 0:
        raise ValueError(f"mesh d={coarse_mesh.d} is not a nested coarsening of d={fine.d}")
    if coarse_mesh.d == fine.d:
        return basis
    step = fine.d // coarse_mesh.d
    nf = fine.d + 1
    grid = basis.eigenfunctions.reshape(nf, nf, -1)
    phi = grid[::step, ::step, :].reshape(coarse_mesh.n_nodes, -1)
    return KlBasis(
        eigenvalues=basis.eigenvalues,
        eigenfunctions=phi,
        node_weights=coarse_mesh.node_quadrature_weights(),
        mesh=coarse_mesh,
        covariance=basis.covariance,
    )


def truncate_basis(basis: KlBasis, s: int) -> KlBasis:
    """Keep the s leading eigenpairs. Sampling with a z prefix through the
    truncated basis couples realizations across truncation levels."""
    if not 1 <= s <= basis.truncation:
        raise ValueError(f"truncation s={s} must be in [1, {basis.truncation}]")
    if s == basis.truncation:
        return basis
    return KlBasis(
        eigenvalues=basis.eigenvalues[:s],
        eigenfunctions=basis.eigenfunctions[:, :s],
        node_weights=basis.node_weights,
        mesh=basis.mesh,
        covariance=basis.covariance,
    )


def sample_field(basis: KlBasis, z: np.ndarray) -> FieldRealization:
    """Realize the field from a coefficient vector of length equal to the
    basis truncation: values = sum_j sqrt(lambda_j) phi_j z_j."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.ndim != 1 or len(z) != basis.truncation:
        raise ValueError(f"coefficient vector has length {len(z)}, basis holds {basis.truncation} terms")
    values = basis.eigenfunctions @ (np.sqrt(basis.eigenvalues) * z)
    return FieldRealization(values=values, coefficients=z)


def uniform_to_gaussian(u):
    """Standard-normal quantile Phi^{-1}(u) for u strictly inside (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("Phi^{-1} is unbounded at 0 and 1; inputs must lie strictly inside (0, 1)")
    out = ndtri(arr)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


def clamped_uniform_to_gaussian(u, eps: float = 2.0**-32):
    """Phi^{-1} after clamping into [eps, 1-eps]; guards lattice origin points."""
    arr = np.clip(np.asarray(u, dtype=float), eps, 1.0 - eps)
    out = ndtri(arr)
    return float(out) if np.isscalar(u) or arr.ndim == 0 else out


def save_basis(basis: KlBasis, path: str | Path) -> None:
    """Persist a basis to a self-describing .npz archive."""
    meta = {
        "mesh_d": basis.mesh.d,
        "mesh_side_length": basis.mesh.side_length,
        "variance": basis.covariance.variance,
        "correlation_length": basis.covariance.correlation_length,
        "smoothness": basis.covariance.smoothness,
    }
    np.savez(
        path,
        eigenvalues=basis.eigenvalues,
        eigenfunctions=basis.eigenfunctions,
        node_weights=basis.node_weights,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
    )


def load_basis(path: str | Path) -> KlBasis:
    from .darcy import Mesh  # deferred: darcy imports this module at load time

    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        return KlBasis(
            eigenvalues=data["eigenvalues"],
            eigenfunctions=data["eigenfunctions"],
            node_weights=data["node_weights"],
            mesh=Mesh(d=int(meta["mesh_d"]), side_length=float(meta["mesh_side_length"])),
            covariance=MaternCovariance(
                variance=float(meta["variance"]),
                correlation_length=float(meta["correlation_length"]),
                smoothness=float(meta["smoothness"]),
            ),
        )
