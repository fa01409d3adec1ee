"""Trilinear/bilinear (Q1) finite elements on uniform voxel grids.

Nodal fields have shape ``node_shape + (m,)`` with grid axis k holding
the k-th coordinate.  Quadrature fields have shape ``(nq,) + elem_shape
+ trailing``.  Gather and scatter use ``np.roll`` on periodic grids and
slicing otherwise, so every reduction happens in a fixed order and the
results are bit-reproducible.
"""
from __future__ import annotations

import itertools

import numpy as np

from .algebra import check_dim

_GAUSS_1D = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def _shape_values(corner, xi):
    return np.prod([x if c else 1.0 - x for c, x in zip(corner, xi)])


def _shape_gradient(corner, xi, h):
    d = len(corner)
    g = np.empty(d)
    for k in range(d):
        f = (1.0 if corner[k] else -1.0) / h
        for j in range(d):
            if j != k:
                f *= xi[j] if corner[j] else 1.0 - xi[j]
        g[k] = f
    return g


class VoxelMesh:
    """Uniform grid of ``n**dim`` cubes of side ``length / n``.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    n : int
        Elements per axis.
    periodic : bool
        Periodic grids identify opposite faces and carry ``n**dim`` nodes;
        otherwise the grid has ``(n + 1)**dim`` nodes.
    length : float
        Side of the domain.
    """

    def __init__(self, dim: int, n: int, periodic: bool = True, length: float = 1.0):
        self.dim = check_dim(dim)
        if n < 1:
            raise ValueError("need at least one element per axis")
        self.n = int(n)
        self.periodic = bool(periodic)
        self.length = float(length)
        self.h = self.length / self.n
        self.corners = list(itertools.product((0, 1), repeat=self.dim))
        self.qpoints = np.array(list(itertools.product(_GAUSS_1D, repeat=self.dim)))
        self.nq = len(self.qpoints)
        self.qweight = self.h ** self.dim / self.nq
        self.dN = np.array(
            [[_shape_gradient(c, xi, self.h) for c in self.corners] for xi in self.qpoints]
        )
        self.N = np.array([[_shape_values(c, xi) for c in self.corners] for xi in self.qpoints])
        self._axes = tuple(range(self.dim))

    @property
    def elem_shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def node_shape(self) -> tuple:
        return self.elem_shape if self.periodic else (self.n + 1,) * self.dim

    def node_coordinates(self) -> np.ndarray:
        x = np.arange(self.node_shape[0]) * self.h
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"), axis=-1)

    def element_centers(self) -> np.ndarray:
        x = (np.arange(self.n) + 0.5) * self.h
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"), axis=-1)

    def quadrature_points(self) -> np.ndarray:
        """Physical coordinates, shape ``(nq,) + elem_shape + (dim,)``."""
        x0 = np.stack(
            np.meshgrid(*([np.arange(self.n) * self.h] * self.dim), indexing="ij"), axis=-1
        )
        return x0[None] + self.h * self.qpoints.reshape((self.nq,) + (1,) * self.dim + (self.dim,))

    def corner(self, u: np.ndarray, a: int) -> np.ndarray:
        off = self.corners[a]
        if self.periodic:
            return np.roll(u, shift=tuple(-o for o in off), axis=self._axes)
        return u[tuple(slice(o, o + self.n) for o in off)]

    def _scatter(self, out: np.ndarray, fa: np.ndarray, a: int) -> None:
        off = self.corners[a]
        if self.periodic:
            out += np.roll(fa, shift=off, axis=self._axes)
        else:
            out[tuple(slice(o, o + self.n) for o in off)] += fa

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Gradient at quadrature points, shape ``(nq,) + elem_shape + (m, dim)``."""
        m = u.shape[-1]
        out = np.zeros((self.nq,) + self.elem_shape + (m, self.dim))
        bshape = (self.nq,) + (1,) * self.dim + (1, self.dim)
        for a in range(len(self.corners)):
            ua = self.corner(u, a)
            out += ua[None, ..., :, None] * self.dN[:, a, :].reshape(bshape)
        return out

    def values(self, u: np.ndarray) -> np.ndarray:
        """Interpolated values at quadrature points, shape ``(nq,) + elem_shape + (m,)``."""
        m = u.shape[-1]
        out = np.zeros((self.nq,) + self.elem_shape + (m,))
        bshape = (self.nq,) + (1,) * self.dim + (1,)
        for a in range(len(self.corners)):
            out += self.corner(u, a)[None] * self.N[:, a].reshape(bshape)
        return out

    def divergence(self, P: np.ndarray) -> np.ndarray:
        """Nodal vector ``f_a = sum_q w_q P_q grad N_a(q)``, the transpose of ``gradient``."""
        m = P.shape[-2]
        out = np.zeros(self.node_shape + (m,))
        for a in range(len(self.corners)):
            fa = np.einsum("q...ik,qk->...i", P, self.dN[:, a, :]) * self.qweight
            self._scatter(out, fa, a)
        return out

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f) * self.qweight)

    def center_gradient(self, u: np.ndarray) -> np.ndarray:
        """Gradient at element centres; equals the quadrature average for Q1."""
        return self.gradient(u).mean(axis=0)

    def locate(self, x: np.ndarray):
        """Element index and local coordinates in [0, 1] for points ``x``."""
        x = np.asarray(x, dtype=float)
        s = x / self.h
        idx = np.clip(np.floor(s).astype(int), 0, self.n - 1)
        return idx, s - idx

    def gradient_at(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Exact Q1 gradient at arbitrary points ``x`` of shape ``(..., dim)``."""
        idx, xi = self.locate(x)
        m = u.shape[-1]
        out = np.zeros(x.shape[:-1] + (m, self.dim))
        for c in self.corners:
            node = idx + np.array(c)
            if self.periodic:
                node %= self.n
            ua = u[tuple(node[..., k] for k in range(self.dim))]
            g = np.empty(x.shape[:-1] + (self.dim,))
            for k in range(self.dim):
                f = np.full(x.shape[:-1], (1.0 if c[k] else -1.0) / self.h)
                for j in range(self.dim):
                    if j != k:
                        f = f * (xi[..., j] if c[j] else 1.0 - xi[..., j])
                g[..., k] = f
            out += ua[..., :, None] * g[..., None, :]
        return out
