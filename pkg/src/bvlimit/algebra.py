"""Small dense SPD operators with weighted-norm evaluation.

Target dimensions are tiny (n <= ~10), so everything is dense and every
matrix keeps its eigendecomposition and Cholesky factor around.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite, NotSymmetric

SYM_RTOL = 1e-12
FACTOR_RTOL = 1e-10


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive definite matrix with cached factorizations.

    Immutable after construction; all methods are pure.  Use
    :func:`spd_from_entries` or the named constructors rather than calling
    the dataclass directly with unvalidated input.
    """

    dim: int
    entries: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    cho: tuple = field(repr=False)

    @staticmethod
    def from_entries(dim: int, entries) -> "SpdMatrix":
        m = np.asarray(entries, dtype=float)
        if m.size == dim * dim:
            m = m.reshape(dim, dim)
        if m.shape != (dim, dim):
            raise DimensionMismatch(f"expected {dim}x{dim} entries, got shape {m.shape}")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > SYM_RTOL * scale:
            raise NotSymmetric(f"asymmetry {np.abs(m - m.T).max():.3e} exceeds {SYM_RTOL:.0e} relative")
        m = 0.5 * (m + m.T)  # absorb round-trip noise
        w, v = eig_sym(m)
        if w.min() <= 0.0:
            raise NotPositiveDefinite(f"smallest eigenvalue {w.min():.6g} is not positive")
        recon = (v * w) @ v.T
        if np.abs(recon - m).max() > FACTOR_RTOL * scale:
            raise NoConvergence("factorization does not reproduce the matrix")
        cho = scipy.linalg.cho_factor(m, lower=True)
        return SpdMatrix(dim=dim, entries=m, eigenvalues=w, eigenvectors=v, cho=cho)

    @staticmethod
    def identity(dim: int) -> "SpdMatrix":
        return SpdMatrix.from_entries(dim, np.eye(dim))

    @staticmethod
    def scalar(dim: int, value: float) -> "SpdMatrix":
        return SpdMatrix.from_entries(dim, value * np.eye(dim))

    def _check_dim(self, z: np.ndarray):
        if z.shape[-1] != self.dim:
            raise DimensionMismatch(f"vector of length {z.shape[-1]} against dim {self.dim}")

    def matvec(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        self._check_dim(z)
        return z @ self.entries.T

    def solve(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        self._check_dim(z)
        return scipy.linalg.cho_solve(self.cho, np.atleast_1d(z).T).T.reshape(z.shape)

    def q_norm(self, z) -> float:
        z = np.asarray(z, dtype=float)
        self._check_dim(z)
        return float(np.sqrt(max(z @ self.matvec(z), 0.0)))

    def q_inv_norm(self, z) -> float:
        z = np.asarray(z, dtype=float)
        self._check_dim(z)
        return float(np.sqrt(max(z @ self.solve(z), 0.0)))

    def inv_entries(self) -> np.ndarray:
        """Dense inverse, cached; for hot right-hand-side loops only
        (the weighted norms go through the factorization)."""
        cached = getattr(self, "_inv_cache", None)
        if cached is None:
            cached = scipy.linalg.cho_solve(self.cho, np.eye(self.dim))
            object.__setattr__(self, "_inv_cache", cached)
        return cached

    def sqrt(self) -> np.ndarray:
        """Principal square root."""
        return (self.eigenvectors * np.sqrt(self.eigenvalues)) @ self.eigenvectors.T

    def inv_sqrt(self) -> np.ndarray:
        return (self.eigenvectors / np.sqrt(self.eigenvalues)) @ self.eigenvectors.T

    @property
    def operator_norm(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def coercivity(self) -> float:
        """Smallest eigenvalue."""
        return float(self.eigenvalues[0])


def spd_from_entries(dim: int, entries) -> SpdMatrix:
    return SpdMatrix.from_entries(dim, entries)


def q_norm(q: SpdMatrix, z) -> float:
    return q.q_norm(z)


def q_inv_norm(q: SpdMatrix, z) -> float:
    return q.q_inv_norm(z)


def eig_sym(m):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    Accepts an SpdMatrix or a raw array.  Eigenvectors come back orthonormal
    in columns.  Backed by LAPACK; an iteration failure surfaces as
    NoConvergence.
    """
    if isinstance(m, SpdMatrix):
        return m.eigenvalues.copy(), m.eigenvectors.copy()
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > 1e-10 * scale:
        raise NotSymmetric("eig_sym requires a symmetric matrix")
    try:
        w, v = np.linalg.eigh(0.5 * (a + a.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        raise NoConvergence(str(exc)) from exc
    return w, v
