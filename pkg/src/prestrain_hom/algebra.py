"""Symmetric-matrix bases and isotropic quadratic forms.

Matrices are stored as trailing ``(d, d)`` axes so that every routine
broadcasts over arbitrary leading grid or quadrature axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UnsupportedDimension


def check_dim(d: int) -> int:
    if d not in (2, 3):
        raise UnsupportedDimension(f"dimension must be 2 or 3, got {d}")
    return int(d)


def sym(F: np.ndarray) -> np.ndarray:
    return 0.5 * (F + np.swapaxes(F, -1, -2))


def trace(F: np.ndarray) -> np.ndarray:
    return np.trace(F, axis1=-2, axis2=-1)


def ddot(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Frobenius product over the trailing two axes."""
    return np.einsum("...ij,...ij->...", F, G)


def _basis_matrices(d: int) -> np.ndarray:
    if d == 3:
        G = np.zeros((6, 3, 3))
        G[0] = np.eye(3) / 3.0
        G[1] = np.diag([2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0])
        G[2] = np.diag([0.0, -0.5, 0.5])
        for k, (i, j) in enumerate([(0, 1), (0, 2), (1, 2)]):
            G[3 + k, i, j] = G[3 + k, j, i] = 0.5
        return G
    G = np.zeros((3, 2, 2))
    G[0] = np.diag([0.5, 0.5])
    G[1] = np.diag([0.5, -0.5])
    G[2, 0, 1] = G[2, 1, 0] = 0.5
    return G


@dataclass(frozen=True, eq=False)
class SymBasis:
    """Basis of the symmetric d x d matrices with its dual basis.

    ``emb`` maps coefficients to matrices and ``emb_inv`` maps a matrix to
    the coefficients of its symmetric part.  For d = 3 the first basis
    element is a multiple of the identity, the next two span the remaining
    diagonal, and the last three are the off-diagonal shears.
    """

    dim: int
    matrices: np.ndarray
    dual: np.ndarray

    @property
    def size(self) -> int:
        return self.matrices.shape[0]

    def emb(self, xi: np.ndarray) -> np.ndarray:
        return np.tensordot(np.asarray(xi, dtype=float), self.matrices, axes=(-1, 0))

    def emb_inv(self, F: np.ndarray) -> np.ndarray:
        return np.einsum("sij,...ij->...s", self.dual, sym(np.asarray(F, dtype=float)))

    def projector(self) -> np.ndarray:
        """Matrix P with ``emb_inv(F) = P @ F.ravel()``."""
        s, d = self.size, self.dim
        return sym(self.dual).reshape(s, d * d)


@lru_cache(maxsize=None)
def build_sym_basis(d: int) -> SymBasis:
    d = check_dim(d)
    G = _basis_matrices(d)
    gram = np.einsum("aij,bij->ab", G, G)
    dual = np.einsum("ab,bij->aij", np.linalg.inv(gram), G)
    G.setflags(write=False)
    dual.setflags(write=False)
    return SymBasis(d, G, dual)


def lq_apply(lam, mu, G: np.ndarray) -> np.ndarray:
    """Isotropic stress ``lam tr(G) I + 2 mu sym(G)``; lam, mu broadcast over leading axes."""
    G = np.asarray(G, dtype=float)
    d = G.shape[-1]
    lam = np.asarray(lam, dtype=float)[..., None, None]
    mu = np.asarray(mu, dtype=float)[..., None, None]
    return lam * trace(G)[..., None, None] * np.eye(d) + 2.0 * mu * sym(G)


def q_value(lam, mu, G: np.ndarray) -> np.ndarray:
    """Quadratic form ``lam tr(G)^2 + 2 mu |sym G|^2``."""
    G = np.asarray(G, dtype=float)
    S = sym(G)
    return np.asarray(lam) * trace(G) ** 2 + 2.0 * np.asarray(mu) * ddot(S, S)


@dataclass(frozen=True)
class IsotropicModuli:
    """Lame pair with the ellipticity constants of the associated form."""

    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must be positive, got {self.mu}")
        for d in (2, 3):
            if not d * self.lam + 2 * self.mu > 0:
                raise ValueError("d*lam + 2*mu must be positive")

    def alpha(self, d: int) -> float:
        return min(2 * self.mu, d * self.lam + 2 * self.mu)

    def beta(self, d: int) -> float:
        return max(2 * self.mu, d * self.lam + 2 * self.mu)


def ellipticity_bounds(lam, mu, d: int) -> tuple[float, float]:
    """Pointwise constants with ``alpha |sym G|^2 <= Q(G) <= beta |sym G|^2``."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    lo = np.minimum(2 * mu, d * lam + 2 * mu)
    hi = np.maximum(2 * mu, d * lam + 2 * mu)
    return float(lo.min()), float(hi.max())


def polar_stretch(F: np.ndarray) -> np.ndarray:
    """Symmetric positive factor U of F = R U."""
    w, V = np.linalg.eigh(np.swapaxes(F, -1, -2) @ F)
    return (V * np.sqrt(np.maximum(w, 0.0))[..., None, :]) @ np.swapaxes(V, -1, -2)
