"""Periodic material cells and stress-free joints on the unit cell.

A stress-free joint is a periodic prestrain field ``A`` that is the
gradient of a continuous potential ``a`` with ``a(y + k) = a(y) + Abar k``
for integer vectors ``k``.  Cells store per-voxel Lame moduli, joint ``A``
and incremental prestrain ``B``; smooth quantities are sampled at voxel
centres.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .algebra import check_dim
from .errors import (
    ConstraintViolation,
    GeometryMismatch,
    NonPositiveDeterminant,
    RankOneViolation,
    UnsupportedDimension,
)
from .fem import VoxelMesh

RANK_ONE_TOL = 1e-10


# ---------------------------------------------------------------- joints


class StressFreeJoint:
    """Base class; subclasses provide ``gradient`` and ``piece_potential``."""

    dim: int
    Abar: np.ndarray
    name: str = "joint"
    interfaces: tuple = ()

    def gradient(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def region(self, y: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(y)[:-1], dtype=int)

    def piece_potential(self, r: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Potential of piece ``r`` evaluated at ``y`` (no periodic reduction)."""
        raise NotImplementedError

    def potential(self, y: np.ndarray) -> np.ndarray:
        """``a(y)`` on all of R^d through ``a(y + k) = a(y) + Abar k``."""
        y = np.asarray(y, dtype=float)
        k = np.floor(y)
        z = y - k
        return self.piece_potential(self.region(z), z) + k @ self.Abar.T

    def periodic_part(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.potential(y) - y @ self.Abar.T

    def sample(self, n: int) -> np.ndarray:
        """Voxel-centre samples of ``A``, shape ``(n,)*dim + (dim, dim)``."""
        return self.gradient(VoxelMesh(self.dim, n).element_centers())


class PiecewiseAffineJoint(StressFreeJoint):
    """Joint with ``a = A_i y + c_i`` on region ``i``.

    Parameters
    ----------
    matrices : (K, d, d) array
    region_fn : callable mapping points in [0, 1)^d to piece indices
    interfaces : sequence of ``(i, j, normal, point)``; ``point`` is a point of
        the shared face inside the unit cell, or ``None`` for faces that
        only meet across the periodic wrap.
    fractions : volume fraction of each piece, used for the analytic mean.
    """

    def __init__(self, matrices, region_fn, interfaces, fractions, name="piecewise"):
        self.matrices = np.asarray(matrices, dtype=float)
        self.dim = check_dim(self.matrices.shape[-1])
        self._region_fn = region_fn
        self.interfaces = tuple(
            (int(i), int(j), np.asarray(n, dtype=float) / np.linalg.norm(n),
             None if p is None else np.asarray(p, dtype=float))
            for i, j, n, p in interfaces
        )
        self.fractions = np.asarray(fractions, dtype=float)
        self.name = name
        dets = np.linalg.det(self.matrices)
        if np.any(dets <= 0):
            k = int(np.argmin(dets))
            raise NonPositiveDeterminant(f"piece {k} has det {dets[k]:.3g} <= 0")
        self.Abar = np.einsum("k,kij->ij", self.fractions, self.matrices)
        self.offsets = self._propagate_offsets()

    def _propagate_offsets(self) -> np.ndarray:
        K, d = len(self.matrices), self.dim
        c = np.full((K, d), np.nan)
        r0 = int(self.region(np.zeros((1, d)))[0])
        c[r0] = 0.0
        changed = True
        while changed:
            changed = False
            for i, j, _, p in self.interfaces:
                if p is None:
                    continue
                for a, b in ((i, j), (j, i)):
                    if np.isnan(c[b, 0]) and not np.isnan(c[a, 0]):
                        c[b] = c[a] + (self.matrices[a] - self.matrices[b]) @ p
                        changed = True
        if np.isnan(c).any():
            raise GeometryMismatch("joint pieces are not connected through interfaces")
        return c

    def region(self, y):
        return np.asarray(self._region_fn(np.asarray(y, dtype=float)), dtype=int)

    def gradient(self, y):
        return self.matrices[self.region(np.asarray(y, dtype=float) % 1.0)]

    def piece_potential(self, r, y):
        return np.einsum("...ij,...j->...i", self.matrices[r], y) + self.offsets[r]

    def rank_one_residual(self) -> float:
        """max |(A_i - A_j) v| over unit v spanning each interface plane."""
        worst = 0.0
        for i, j, n, _ in self.interfaces:
            D = self.matrices[i] - self.matrices[j]
            P = np.eye(self.dim) - np.outer(n, n)
            worst = max(worst, float(np.linalg.norm(D @ P, 2)))
        return worst


class SmoothJoint(StressFreeJoint):
    """``a(y) = y + s * sum_i sin(2 pi y_i) * ones``, so ``Abar = I``."""

    def __init__(self, amplitude: float, dim: int = 3):
        self.dim = check_dim(dim)
        self.amplitude = float(amplitude)
        self.name = "smooth"
        self.Abar = np.eye(self.dim)
        # det(I + u v^T) = 1 + 2 pi s sum cos(2 pi y_i), minimised at y = 1/2
        worst = 1.0 - 2 * np.pi * abs(self.amplitude) * self.dim
        if worst <= 0:
            raise NonPositiveDeterminant(
                f"amplitude {amplitude} gives det A <= 0 (minimum {worst:.3g})"
            )

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        w = 2 * np.pi * self.amplitude * np.cos(2 * np.pi * y)
        return np.eye(self.dim) + np.ones(self.dim)[:, None] * w[..., None, :]

    def piece_potential(self, r, y):
        y = np.asarray(y, dtype=float)
        s = self.amplitude * np.sin(2 * np.pi * y).sum(axis=-1)
        return y + s[..., None]


def make_laminate_sfj(layers: Sequence[tuple[float, np.ndarray]]) -> PiecewiseAffineJoint:
    """Laminate in y_1 from ``(fraction, matrix)`` pairs; zero-width layers are dropped."""
    layers = [(float(t), np.asarray(A, dtype=float)) for t, A in layers if t > 0]
    if not layers:
        raise ValueError("need at least one layer of positive width")
    t = np.array([l[0] for l in layers])
    if abs(t.sum() - 1.0) > 1e-12:
        raise ValueError(f"layer fractions sum to {t.sum()}, expected 1")
    mats = np.stack([l[1] for l in layers])
    d = check_dim(mats.shape[-1])
    K = len(layers)
    for k in range(K):
        j = (k + 1) % K
        D = mats[k] - mats[j]
        if np.abs(D[:, 1:]).max() > RANK_ONE_TOL:
            raise RankOneViolation(
                f"layers {k} and {j} are not rank-one connected along e1 "
                f"(jump in columns 2..d: {np.abs(D[:, 1:]).max():.3g})"
            )
    edges = np.concatenate([[0.0], np.cumsum(t)[:-1]])
    e1 = np.eye(d)[0]
    interfaces = [(k, k + 1, e1, edges[k + 1] * e1) for k in range(K - 1)]
    if K > 1:
        interfaces.append((K - 1, 0, e1, None))

    def region(y):
        return np.clip(np.searchsorted(edges, y[..., 0], side="right") - 1, 0, K - 1)

    joint = PiecewiseAffineJoint(mats, region, interfaces, t, name="laminate")
    joint.edges = edges
    return joint


def appendix_laminate_sfj() -> PiecewiseAffineJoint:
    A1 = np.array([[1.0, 1, 0], [0, 1, 0], [0, 0, 1]])
    A2 = np.array([[2.0, 1, 0], [0, 1, 0], [0, 0, 1]])
    return make_laminate_sfj([(0.5, A1), (0.5, A2)])


def make_checkerboard_sfj() -> PiecewiseAffineJoint:
    """Four quadrants in (y_1, y_2), counter-clockwise from the origin."""
    h = 0.5
    A = np.array([
        [[1, h, 0], [0, 1, 0], [0, 0, 1]],
        [[1, h, 0], [h, 1, 0], [0, 0, 1]],
        [[1, -h, 0], [h, 1, 0], [0, 0, 1]],
        [[1, -h, 0], [0, 1, 0], [0, 0, 1]],
    ], dtype=float)
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    interfaces = [
        (0, 1, e1, [0.5, 0.25, 0]),
        (1, 2, e2, [0.75, 0.5, 0]),
        (2, 3, e1, [0.5, 0.75, 0]),
        (3, 0, e2, [0.25, 0.5, 0]),
        (1, 0, e1, None),
        (2, 3, e1, None),
        (3, 0, e2, None),
        (2, 1, e2, None),
    ]

    def region(y):
        right = y[..., 0] >= 0.5
        top = y[..., 1] >= 0.5
        return np.where(top, np.where(right, 2, 3), np.where(right, 1, 0))

    return PiecewiseAffineJoint(A, region, interfaces, [0.25] * 4, name="checkerboard")


def make_smooth_sfj(amplitude: float = 1.0 / 20.0) -> SmoothJoint:
    return SmoothJoint(amplitude, dim=3)


def single_material_matrices(alpha: float, c: Sequence[float]) -> np.ndarray:
    """The four matrices of the single-material joint, shape (4, 3, 3)."""
    c = np.asarray(c, dtype=float)
    if not 0 < alpha <= 1 or c.shape != (3,) or np.any(c <= 0):
        raise ConstraintViolation("need alpha in (0, 1] and a positive 3-vector c")
    lhs = c[1] ** -2
    rhs = c[0] ** -2 * alpha ** 2 + c[2] ** -2 * (1 - alpha ** 2)
    if abs(lhs - rhs) > 1e-12 * max(1.0, abs(lhs)):
        raise ConstraintViolation(
            f"c_2^-2 = {lhs:.15g} differs from c_1^-2 alpha^2 + c_3^-2 (1-alpha^2) = {rhs:.15g}"
        )
    s = np.sqrt(max(1 - alpha ** 2, 0.0))
    e1, e2, e3 = np.eye(3)
    b = [alpha * e1 + s * e3, e2, alpha * e3 - s * e1]
    A1 = sum(ci * np.outer(bi, bi) for ci, bi in zip(c, b))
    num = 2 * alpha * (c[1] ** 2 / c[0] ** 2 - 1)
    if abs(num) <= 1e-14:
        kappa = 0.0
    elif s == 0:
        raise ConstraintViolation("alpha = 1 requires c_2 = c_1")
    else:
        kappa = num / (np.sqrt(2) * s)
    r2 = 1 / np.sqrt(2)
    n2, n3 = np.array([r2, r2, 0]), np.array([r2, -r2, 0])
    A2 = A1 @ (np.eye(3) + kappa * np.outer(e3, n2))
    A3 = A1 @ (np.eye(3) + kappa * np.outer(e3, n3))
    A4 = A1 @ (np.eye(3) + np.sqrt(2) * kappa * np.outer(e3, e1))
    return np.stack([A1, A2, A3, A4])


def make_single_material_sfj(alpha: float = 1 / np.sqrt(2),
                             c: Sequence[float] = (np.sqrt(0.75), 1.0, np.sqrt(1.5))
                             ) -> PiecewiseAffineJoint:
    """Diamond decomposition of the (y_1, y_2) square into four rotated copies of one material."""
    mats = single_material_matrices(alpha, c)
    r2 = 1 / np.sqrt(2)
    n2, n3, e1, e2 = [r2, r2, 0], [r2, -r2, 0], [1, 0, 0], [0, 1, 0]
    interfaces = [
        (0, 1, n2, [0.25, 0.25, 0]),
        (0, 2, n3, [0.25, 0.75, 0]),
        (1, 2, e2, [0.5, 0.5, 0]),
        (1, 3, n3, [0.75, 0.25, 0]),
        (2, 3, n2, [0.75, 0.75, 0]),
        (3, 0, e1, None),
    ]

    def region(y):
        y1, y2 = y[..., 0], y[..., 1]
        r = np.full(y1.shape, 0)
        in2 = (y2 <= 0.5) & (y2 > np.abs(y1 - 0.5))
        in3 = (y2 > 0.5) & (1 - np.abs(y1 - 0.5) > y2)
        in4 = y1 >= 1 - np.abs(y2 - 0.5)
        r = np.where(in2, 1, r)
        r = np.where(in3, 2, r)
        return np.where(in4 & ~in2 & ~in3, 3, r)

    return PiecewiseAffineJoint(mats, region, interfaces, [0.25] * 4, name="single_material")


def rotation_factors(Ai: np.ndarray, A1: np.ndarray):
    """Rotations R, Q with ``Ai = R A1 Q`` when both share singular values."""
    def polar(F):
        U, s, Vt = np.linalg.svd(F)
        return U @ Vt, Vt.T @ np.diag(s) @ Vt

    Ri, Ui = polar(Ai)
    R1, U1 = polar(A1)
    wi, Vi = np.linalg.eigh(Ui)
    w1, V1 = np.linalg.eigh(U1)
    if np.linalg.det(Vi) < 0:
        Vi[:, 0] *= -1
    if np.linalg.det(V1) < 0:
        V1[:, 0] *= -1
    P = Vi @ V1.T
    return Ri @ P @ R1.T, P.T


# ---------------------------------------------------------------- bilayer


@dataclass(frozen=True, eq=False)
class BilayerSpec:
    """Two-phase laminate with ``A1 = A2 + c e1^T``; phase 1 occupies y_1 < theta."""

    theta: float
    lam1: float
    mu1: float
    lam2: float
    mu2: float
    A2: np.ndarray = field(default_factory=lambda: np.eye(3))
    c: np.ndarray = field(default_factory=lambda: np.zeros(3))
    B1: np.ndarray = field(default_factory=lambda: -np.eye(3))
    B2: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        for name in ("A2", "c", "B1", "B2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        d = check_dim(self.A2.shape[-1])
        if self.c.shape != (d,) or self.B1.shape != (d, d) or self.B2.shape != (d, d):
            raise ValueError("inconsistent bilayer shapes")
        if not 0 <= self.theta <= 1:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        for k, A in ((1, self.A1), (2, self.A2)):
            if np.linalg.det(A) <= 0:
                raise NonPositiveDeterminant(f"det A{k} = {np.linalg.det(A):.3g} <= 0")

    @property
    def dim(self) -> int:
        return self.A2.shape[-1]

    @property
    def A1(self) -> np.ndarray:
        return self.A2 + np.outer(self.c, np.eye(self.dim)[0])

    @property
    def Abar(self) -> np.ndarray:
        return self.theta * self.A1 + (1 - self.theta) * self.A2

    def joint(self) -> PiecewiseAffineJoint:
        return make_laminate_sfj([(self.theta, self.A1), (1 - self.theta, self.A2)])


def theta_hat(spec: BilayerSpec) -> float:
    """Phase-1 fraction after pulling the bilayer back through its joint potential."""
    g = float(np.linalg.solve(spec.A2, spec.c)[0])
    th = spec.theta
    return th * (1 + g) / (1 + th * g)


def abeta_spec(beta: float, lam1=1.0, mu1=1.0, lam2=2.0, mu2=2.0, B1=None, B2=None) -> BilayerSpec:
    """``diag(beta,1,1)`` on the first half, ``diag(2-beta,1,1)`` on the second."""
    if not 0 < beta < 2:
        raise ConstraintViolation(f"beta must lie in (0, 2), got {beta}")
    return BilayerSpec(
        0.5, lam1, mu1, lam2, mu2,
        A2=np.diag([2 - beta, 1.0, 1.0]), c=np.array([2 * beta - 2, 0.0, 0.0]),
        B1=-np.eye(3) if B1 is None else B1, B2=np.eye(3) if B2 is None else B2,
    )


# ---------------------------------------------------------------- cells


@dataclass(frozen=True, eq=False)
class MicrostructureCell:
    """Per-voxel material data on a periodic ``N**dim`` grid.

    Arrays are indexed ``[i_1, ..., i_d]`` with ``i_k`` the voxel index along
    y_k; matrix fields carry two trailing axes.  ``abar_nodes`` optionally
    holds the periodic part of the joint potential at grid nodes.
    """

    dim: int
    N: int
    lam: np.ndarray
    mu: np.ndarray
    A: np.ndarray
    B: np.ndarray
    family: str = "custom"
    params: dict = field(default_factory=dict)
    abar_nodes: np.ndarray | None = None

    def __post_init__(self):
        d = check_dim(self.dim)
        if self.N < 2:
            raise ValueError("need N >= 2")
        grid = (self.N,) * d
        shapes = {"lam": grid, "mu": grid, "A": grid + (d, d), "B": grid + (d, d)}
        for name, shape in shapes.items():
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), shape).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.mu <= 0) or np.any(d * self.lam + 2 * self.mu <= 0):
            raise ValueError("moduli violate mu > 0 and d lam + 2 mu > 0")
        dets = np.linalg.det(self.A)
        if np.any(dets <= 0):
            idx = np.unravel_index(int(np.argmin(dets)), grid)
            raise NonPositiveDeterminant(f"det A <= 0 in voxel {tuple(int(i) for i in idx)}")

    @cached_property
    def Ainv(self) -> np.ndarray:
        return np.linalg.inv(self.A)

    @cached_property
    def Abar(self) -> np.ndarray:
        return self.A.reshape(-1, self.dim, self.dim).mean(axis=0)

    @cached_property
    def mesh(self) -> VoxelMesh:
        return VoxelMesh(self.dim, self.N)

    def with_B(self, B) -> "MicrostructureCell":
        return MicrostructureCell(self.dim, self.N, self.lam, self.mu, self.A, B,
                                  self.family, dict(self.params), self.abar_nodes)

    def to_json(self, include_fields: bool = True) -> dict:
        """JSON record; voxel arrays are flattened with y_1 varying fastest."""
        out = {"dim": self.dim, "N": self.N, "family": self.family, "params": self.params}
        if include_fields:
            d = self.dim
            flat = lambda a, tail: np.asarray(a).reshape((self.N ** d,) + tail, order="F")
            out["fields"] = {
                "lambda": flat(self.lam, ()).tolist(),
                "mu": flat(self.mu, ()).tolist(),
                "A": flat(self.A.reshape(self.lam.shape + (d * d,)), (d * d,)).tolist(),
                "B": flat(self.B.reshape(self.lam.shape + (d * d,)), (d * d,)).tolist(),
            }
        return out


def _unflatten(values, N, d, tail=()):
    arr = np.asarray(values, dtype=float)
    return arr.reshape((N,) * d + tail, order="F") if not tail else \
        arr.reshape((N ** d,) + tail).reshape((N,) * d + tail, order="F")


def cell_from_json(data: dict) -> MicrostructureCell:
    d, N = int(data["dim"]), int(data["N"])
    check_dim(d)
    family = data.get("family", "custom")
    params = dict(data.get("params", {}))
    fields = data.get("fields")
    if fields is None:
        return build_cell(family, d, N, params)
    return MicrostructureCell(
        d, N,
        _unflatten(fields["lambda"], N, d),
        _unflatten(fields["mu"], N, d),
        _unflatten(fields["A"], N, d, (d * d,)).reshape((N,) * d + (d, d)),
        _unflatten(fields["B"], N, d, (d * d,)).reshape((N,) * d + (d, d)),
        family, params,
    )


def cell_from_joint(joint: StressFreeJoint, N: int,
                    lam: float | Callable = 1.0, mu: float | Callable = 1.0,
                    B: np.ndarray | Callable | None = None,
                    family: str = "joint", params: dict | None = None) -> MicrostructureCell:
    """Sample a joint and material functions of y at voxel centres."""
    d = joint.dim
    mesh = VoxelMesh(d, N)
    y = mesh.element_centers()

    def ev(f, default_shape=()):
        if callable(f):
            return np.asarray(f(y), dtype=float)
        return np.broadcast_to(np.asarray(f, dtype=float), (N,) * d + default_shape)

    Bf = np.zeros((d, d)) if B is None else B
    abar = joint.periodic_part(mesh.node_coordinates())
    return MicrostructureCell(d, N, ev(lam), ev(mu), joint.sample(N), ev(Bf, (d, d)),
                              family, dict(params or {}), abar)


def homogeneous_cell(dim: int, N: int, lam: float = 1.0, mu: float = 1.0,
                     B: np.ndarray | None = None, A: np.ndarray | None = None) -> MicrostructureCell:
    A = np.eye(dim) if A is None else np.asarray(A, dtype=float)
    B = np.zeros((dim, dim)) if B is None else np.asarray(B, dtype=float)
    params = {"lam": lam, "mu": mu, "B": B.tolist(), "A": A.tolist()}
    return MicrostructureCell(dim, N, lam, mu, A, B, "homogeneous", params,
                              np.zeros((N,) * dim + (dim,)))


def bilayer_cell(spec: BilayerSpec, N: int) -> MicrostructureCell:
    """Sample a bilayer; exact when ``theta * N`` is an integer."""
    joint = spec.joint()

    def phase(y):
        return y[..., 0] < spec.theta

    params = {
        "theta": spec.theta, "lam1": spec.lam1, "mu1": spec.mu1, "lam2": spec.lam2,
        "mu2": spec.mu2, "A2": spec.A2.tolist(), "c": spec.c.tolist(),
        "B1": spec.B1.tolist(), "B2": spec.B2.tolist(),
    }
    return cell_from_joint(
        joint, N,
        lam=lambda y: np.where(phase(y), spec.lam1, spec.lam2),
        mu=lambda y: np.where(phase(y), spec.mu1, spec.mu2),
        B=lambda y: np.where(phase(y)[..., None, None], spec.B1, spec.B2),
        family="bilayer", params=params,
    )


def _matrix(params, key, d, default):
    v = params.get(key)
    return np.asarray(default if v is None else v, dtype=float).reshape(d, d)


def build_cell(family: str, dim: int, N: int, params: dict) -> MicrostructureCell:
    """Construct a built-in family from JSON-style parameters."""
    p = dict(params)
    if family == "homogeneous":
        return homogeneous_cell(dim, N, p.get("lam", 1.0), p.get("mu", 1.0),
                                _matrix(p, "B", dim, np.zeros((dim, dim))),
                                _matrix(p, "A", dim, np.eye(dim)))
    if family == "bilayer":
        spec = BilayerSpec(
            p.get("theta", 0.5), p.get("lam1", 1.0), p.get("mu1", 1.0),
            p.get("lam2", 2.0), p.get("mu2", 2.0),
            _matrix(p, "A2", dim, np.eye(dim)),
            np.asarray(p.get("c", np.zeros(dim)), dtype=float),
            _matrix(p, "B1", dim, -np.eye(dim)), _matrix(p, "B2", dim, np.eye(dim)),
        )
        return bilayer_cell(spec, N)
    if family == "abeta":
        if dim != 3:
            raise UnsupportedDimension("the A_beta family is three-dimensional")
        spec = abeta_spec(p.get("beta", 1.0), p.get("lam1", 1.0), p.get("mu1", 1.0),
                          p.get("lam2", 2.0), p.get("mu2", 2.0),
                          _matrix(p, "B1", 3, -np.eye(3)), _matrix(p, "B2", 3, np.eye(3)))
        cell = bilayer_cell(spec, N)
        return MicrostructureCell(3, N, cell.lam, cell.mu, cell.A, cell.B, "abeta", p,
                                  cell.abar_nodes)
    joints = {
        "laminate_a": appendix_laminate_sfj,
        "checkerboard": make_checkerboard_sfj,
        "smooth": lambda: make_smooth_sfj(p.get("amplitude", 1.0 / 20.0)),
        "single_material": lambda: make_single_material_sfj(
            p.get("alpha", 1 / np.sqrt(2)), p.get("c", (np.sqrt(0.75), 1.0, np.sqrt(1.5)))),
    }
    if family in joints:
        if dim != 3:
            raise UnsupportedDimension(f"family {family!r} is three-dimensional")
        B = _matrix(p, "B", 3, np.zeros((3, 3)))
        return cell_from_joint(joints[family](), N, p.get("lam", 1.0), p.get("mu", 1.0), B,
                               family=family, params=p)
    raise ValueError(f"unknown cell family {family!r}")


# ---------------------------------------------------------------- hat transform


@dataclass(frozen=True, eq=False)
class LaminateProfile:
    """Piecewise-constant pulled-back laminate data on [0, 1).

    ``widths`` are the hat-variable segment widths; ``lam``, ``mu`` and
    ``B`` hold the transformed moduli and prestrain per segment.
    """

    widths: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    B: np.ndarray
    Abar: np.ndarray

    @property
    def dim(self) -> int:
        return self.Abar.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return np.linalg.solve(self.Abar.T, np.eye(self.dim)[0])

    @property
    def K(self) -> np.ndarray:
        return self.lam + 2.0 * self.mu / 3.0

    @property
    def M(self) -> np.ndarray:
        return self.lam + 2.0 * self.mu

    def mean(self, f) -> float:
        return float(np.dot(self.widths, f))

    def hmean(self, f) -> float:
        return 1.0 / float(np.dot(self.widths, 1.0 / np.asarray(f)))

    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.widths)])


def profile_from_layers(widths, lam, mu, A, B) -> LaminateProfile:
    """Hat transform of layers given in the original variable y_1."""
    widths = np.asarray(widths, dtype=float)
    keep = widths > 0
    widths, lam, mu = widths[keep], np.asarray(lam, float)[keep], np.asarray(mu, float)[keep]
    A, B = np.asarray(A, float)[keep], np.asarray(B, float)[keep]
    K = len(widths)
    for k in range(K):
        D = A[k] - A[(k + 1) % K]
        if np.abs(D[:, 1:]).max() > RANK_ONE_TOL:
            raise GeometryMismatch(f"layers {k} and {(k + 1) % K} are not a laminate joint")
    Abar = np.einsum("k,kij->ij", widths, A)
    ratio = np.linalg.det(A) / np.linalg.det(Abar)
    return LaminateProfile(widths * ratio, lam / ratio, mu / ratio, B.copy(), Abar)


def bilayer_profile(spec: BilayerSpec) -> LaminateProfile:
    return profile_from_layers(
        [spec.theta, 1 - spec.theta], [spec.lam1, spec.lam2], [spec.mu1, spec.mu2],
        [spec.A1, spec.A2], [spec.B1, spec.B2],
    )


def hat_transform(cell: MicrostructureCell, tol: float = 1e-12) -> LaminateProfile:
    """Pull back a y_1-laminate cell; one segment per voxel layer."""
    d = cell.dim
    lam = cell.lam.reshape(cell.N, -1)
    mu = cell.mu.reshape(cell.N, -1)
    A = cell.A.reshape(cell.N, -1, d, d)
    B = cell.B.reshape(cell.N, -1, d, d)
    for arr in (lam, mu, A, B):
        if np.abs(arr - arr[:, :1]).max() > tol:
            raise GeometryMismatch("cell data varies in directions other than y_1")
    w = np.full(cell.N, 1.0 / cell.N)
    return profile_from_layers(w, lam[:, 0], mu[:, 0], A[:, 0], B[:, 0])


# ---------------------------------------------------------------- validation


@dataclass
class JointReport:
    min_det: float
    min_det_index: tuple
    lipschitz: float
    continuity: float | None
    rank_one: float
    Abar_quadrature: np.ndarray
    Abar: np.ndarray
    passed: bool
    failures: list

    def to_json(self) -> dict:
        return {
            "min_det": self.min_det, "min_det_index": list(self.min_det_index),
            "L": self.lipschitz, "continuity_residual": self.continuity,
            "rank_one_residual": self.rank_one, "Abar": self.Abar.tolist(),
            "Abar_quadrature": self.Abar_quadrature.tolist(), "passed": self.passed,
            "failures": self.failures,
        }


def _continuity_residual(joint: StressFreeJoint, N: int, delta: float = 1e-9) -> float:
    """Spread of piece potentials at each grid vertex over all adjacent pieces.

    Neighbouring pieces are found by probing tiny offsets; every piece is
    evaluated at the vertex itself, shifted through the periodic wrap.
    """
    v = VoxelMesh(joint.dim, N).node_coordinates().reshape(-1, joint.dim)
    vals = []
    for s in itertools.product((-1.0, 1.0), repeat=joint.dim):
        p = v + delta * np.asarray(s)
        k = np.floor(p)
        r = joint.region(p - k)
        vals.append(joint.piece_potential(r, v - k) + k @ joint.Abar.T)
    vals = np.stack(vals)
    return float(np.abs(vals - vals[:1]).max())


def _face_jump_residual(A: np.ndarray) -> float:
    """Compatibility of a voxel field across faces: tangential columns must agree."""
    d = A.shape[-1]
    worst = 0.0
    for k in range(d):
        D = np.roll(A, -1, axis=k) - A
        tang = [j for j in range(d) if j != k]
        worst = max(worst, float(np.abs(D[..., :, tang]).max()))
    return worst


def validate_sfj(joint, N: int = 16, tol: float = 1e-12) -> JointReport:
    """Check positivity, bounds, potential continuity and rank-one conditions.

    Accepts a ``StressFreeJoint`` or a ``MicrostructureCell``; for a cell the
    continuity check is replaced by face compatibility of the voxel field and
    determinant failures are reported with the voxel index instead of raised.
    """
    failures = []
    if isinstance(joint, MicrostructureCell):
        A = np.asarray(joint.A)
        d = joint.dim
        Abar = A.reshape(-1, d, d).mean(axis=0)
        continuity = None
        rank_one = _face_jump_residual(A)
        Abar_exact = Abar
    else:
        A = joint.sample(N)
        d = joint.dim
        continuity = _continuity_residual(joint, N)
        rank_one = joint.rank_one_residual() if hasattr(joint, "rank_one_residual") else 0.0
        Abar = A.reshape(-1, d, d).mean(axis=0)
        Abar_exact = joint.Abar
        if continuity > tol:
            failures.append(f"potential continuity residual {continuity:.3g} > {tol:g}")
    return _finish_report(A, Abar, Abar_exact, continuity, rank_one, tol, failures)


def validate_voxel_field(A: np.ndarray, tol: float = 1e-12) -> JointReport:
    """Voxel-level checks for a raw A field that may be invalid."""
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    Abar = A.reshape(-1, d, d).mean(axis=0)
    return _finish_report(A, Abar, Abar, None, _face_jump_residual(A), tol, [])


def _finish_report(A, Abar, Abar_exact, continuity, rank_one, tol, failures):
    d = A.shape[-1]
    grid = A.shape[:-2]
    dets = np.linalg.det(A)
    k = int(np.argmin(dets))
    idx = tuple(int(i) for i in np.unravel_index(k, grid))
    if dets.flat[k] <= 0:
        failures.append(f"det A = {dets.flat[k]:.3g} <= 0 in voxel {idx}")
        L = np.inf
    else:
        flatA = A.reshape(-1, d, d)
        L = float(max(np.linalg.norm(flatA, 2, axis=(1, 2)).max(),
                      np.linalg.norm(np.linalg.inv(flatA), 2, axis=(1, 2)).max()))
    if rank_one > tol:
        failures.append(f"rank-one residual {rank_one:.3g} > {tol:g}")
    return JointReport(float(dets.flat[k]), idx, L, continuity, rank_one,
                       Abar, np.asarray(Abar_exact), not failures, failures)
