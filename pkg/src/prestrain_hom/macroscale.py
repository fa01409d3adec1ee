"""Two-dimensional macroscopic solvers for the oscillating and the homogenised problem.

The domain is the unit square meshed by ``M x M`` bilinear elements with
``M = N / eps`` so that every element sits in exactly one voxel of the
rescaled cell.  Dirichlet data ``g(x) = Dg x + g0`` is imposed nodally on
the selected edges; the rest of the boundary is traction free.  Prestrain
enters with a minus sign: the integrand is ``Q(x/eps, Du A^-1 - B)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import build_sym_basis, ddot, lq_apply
from .cellsolver import RTOL, EffectiveQuantities, assemble_effective, conjugate_gradient
from .errors import UnsupportedDimension
from .fem import VoxelMesh
from .microstructure import MicrostructureCell
from .nonlinear import svk_energy

DEFAULT_DG = 0.05 * np.array([[0.0, 1.0], [0.0, 0.0]])
EDGES = ("left", "right", "bottom", "top")


def unfolding_map(x: np.ndarray, y: np.ndarray, eps: float) -> np.ndarray:
    """``T_eps(x, y) = eps * floor(x / eps) + eps * y``."""
    x = np.asarray(x, dtype=float)
    return eps * np.floor(x / eps) + eps * np.asarray(y, dtype=float)


def unfold(f: Callable[[np.ndarray], np.ndarray], eps: float, x: np.ndarray, y: np.ndarray):
    """Samples ``f(T_eps(x_i, y_j))`` on the product grid, shape ``(len(x), len(y), ...)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pts = unfolding_map(x[:, None, :], y[None, :, :], eps)
    return f(pts)


@dataclass
class MacroProblem:
    """Unit-square problem with an eps-periodic cell and affine Dirichlet data."""

    cell: MicrostructureCell
    eps: float
    gamma: Sequence[str] = ("left",)
    Dg: np.ndarray = field(default_factory=lambda: DEFAULT_DG.copy())
    g0: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if self.cell.dim != 2:
            raise UnsupportedDimension("the macroscopic solver is two-dimensional")
        if isinstance(self.gamma, str):
            self.gamma = ("left", "right", "bottom", "top") if self.gamma == "all" else (self.gamma,)
        bad = [e for e in self.gamma if e not in EDGES]
        if bad or not self.gamma:
            raise ValueError(f"unknown boundary selector {bad or self.gamma}")
        k = 1.0 / self.eps
        if abs(k - round(k)) > 1e-12 or round(k) < 1:
            raise ValueError(f"1/eps must be a positive integer, got eps = {self.eps}")
        self.Dg = np.asarray(self.Dg, dtype=float)
        self.g0 = np.asarray(self.g0, dtype=float)

    @property
    def cells_per_axis(self) -> int:
        return int(round(1.0 / self.eps))

    @property
    def M(self) -> int:
        return self.cells_per_axis * self.cell.N

    @property
    def mesh(self) -> VoxelMesh:
        return VoxelMesh(2, self.M, periodic=False)

    def dirichlet_mask(self) -> np.ndarray:
        n = self.M + 1
        mask = np.zeros((n, n), dtype=bool)
        sel = {"left": (0, slice(None)), "right": (-1, slice(None)),
               "bottom": (slice(None), 0), "top": (slice(None), -1)}
        for e in self.gamma:
            mask[sel[e]] = True
        return mask

    def g(self, x: np.ndarray) -> np.ndarray:
        return x @ self.Dg.T + self.g0

    def tiled(self, arr: np.ndarray) -> np.ndarray:
        k = self.cells_per_axis
        return np.tile(arr, (k, k) + (1,) * (arr.ndim - 2))


@dataclass
class MacroSolution:
    u: np.ndarray
    energy: float
    iterations: int
    residual: float
    galerkin_residual: float


def _solve_quadratic(problem: MacroProblem, Ainv, E0, stress: Callable, const: float,
                     rtol: float) -> MacroSolution:
    """Minimise ``int E : stress(E) + const`` with ``E = Du Ainv + E0`` under the Dirichlet data."""
    mesh = problem.mesh
    mask = problem.dirichlet_mask()[..., None]
    free = (~mask).astype(float)
    AinvT = np.swapaxes(Ainv, -1, -2)
    uD = np.where(mask, problem.g(mesh.node_coordinates()), 0.0)

    def apply(z):
        return free * mesh.divergence(stress(mesh.gradient(z) @ Ainv) @ AinvT)

    E_D = mesh.gradient(uD) @ Ainv + E0
    b = -(free * mesh.divergence(stress(E_D) @ AinvT))
    project = lambda v: v * free
    cap = 20 * mesh.n ** 2 * 2
    z, info = conjugate_gradient(apply, b, None, rtol, cap, project)
    u = uD + z
    E = mesh.gradient(u) @ Ainv + E0
    energy = mesh.integrate(ddot(E, stress(E))) + const
    r = apply(z) - b
    rel = float(np.linalg.norm(r) / max(np.linalg.norm(b), 1e-300))
    return MacroSolution(u, energy, info.iterations, info.residual, rel)


def solve_lin_eps(problem: MacroProblem, rtol: float = RTOL) -> MacroSolution:
    """Minimise ``int Q(x/eps, Du A(x/eps)^-1 - B(x/eps)) dx``."""
    c = problem.cell
    lam, mu = problem.tiled(c.lam), problem.tiled(c.mu)
    Ainv = problem.tiled(c.Ainv)
    E0 = -problem.tiled(np.asarray(c.B))
    stress = lambda E: lq_apply(lam, mu, E)
    return _solve_quadratic(problem, Ainv, E0, stress, 0.0, rtol)


def hom_stiffness(eff: EffectiveQuantities) -> np.ndarray:
    """Matrix ``C`` on vectorised d x d matrices with ``vec(E) . C vec(E) = xi^T Q xi``."""
    P = build_sym_basis(eff.dim).projector()
    return P.T @ eff.Qmat @ P


def solve_lin_hom(problem: MacroProblem, eff: EffectiveQuantities,
                  rtol: float = RTOL, include_residual: bool = True) -> MacroSolution:
    """Minimise ``int Q^A_hom(Du - B_hom Abar) dx + |Omega| R``."""
    C = hom_stiffness(eff)
    d = eff.dim
    stress = lambda E: (E.reshape(E.shape[:-2] + (d * d,)) @ C).reshape(E.shape)
    Ainv = np.linalg.inv(eff.Abar)
    const = eff.Rres if include_residual else 0.0
    return _solve_quadratic(problem, Ainv, -eff.Bhom, stress, const, rtol)


def energy_eps(problem: MacroProblem, u: np.ndarray) -> float:
    """``I^lin_eps`` at an arbitrary nodal field."""
    c = problem.cell
    mesh = problem.mesh
    E = mesh.gradient(u) @ problem.tiled(c.Ainv) - problem.tiled(np.asarray(c.B))
    return mesh.integrate(ddot(E, lq_apply(problem.tiled(c.lam), problem.tiled(c.mu), E)))


def nonlinear_energy_eps(problem: MacroProblem, v: np.ndarray, h: float) -> float:
    """``h^-2 int W^h(x/eps, Dv) dx`` for a nodal deformation ``v`` (evaluation only)."""
    c = problem.cell
    mesh = problem.mesh
    IhB = np.eye(2) + h * problem.tiled(np.asarray(c.B))
    Ahinv = np.linalg.inv(IhB @ problem.tiled(np.asarray(c.A)))
    F = mesh.gradient(v) @ Ahinv
    return mesh.integrate(svk_energy(problem.tiled(c.lam), problem.tiled(c.mu), F)) / h ** 2


def _cell_data(cell: MicrostructureCell, eff: EffectiveQuantities):
    if eff.correctors is None:
        raise ValueError("effective quantities must keep their correctors")
    return eff.correctors, eff.prestrain_corrector


def unfolding_gap(problem: MacroProblem, sol_eps: MacroSolution, sol_hom: MacroSolution,
                  eff: EffectiveQuantities) -> float:
    """``|| T_eps Du_eps - (Du* + D_y phi) ||_{L^2(Omega x Y)}`` by element-centre sampling.

    For a macro element with centre ``x`` and a cell element with centre
    ``y``, ``T_eps(x, y)`` is the centre of the macro element in the same
    eps-cell at local position ``y``.  The reference uses the macroscopic
    gradient of the homogenised solution at ``x`` (piecewise constant per
    element) and the cell correctors at ``y``.
    """
    cell = problem.cell
    N, k = cell.N, problem.cells_per_axis
    mesh = problem.mesh
    cmesh = cell.mesh
    basis = build_sym_basis(2)
    Due = mesh.center_gradient(sol_eps.u)
    Dus = mesh.center_gradient(sol_hom.u)
    Abar_inv = np.linalg.inv(eff.Abar)
    corr, corrB = _cell_data(cell, eff)
    Dphi = np.stack([cmesh.center_gradient(c.u) for c in corr]).reshape(basis.size, N * N, 2, 2)
    DphiB = cmesh.center_gradient(corrB.u).reshape(N * N, 2, 2)
    Acell = np.asarray(cell.A).reshape(N * N, 2, 2)
    # (c1, m1, c2, m2) -> (c1, c2, m1, m2)
    T = Due.reshape(k, N, k, N, 2, 2).transpose(0, 2, 1, 3, 4, 5).reshape(k * k, N * N, 2, 2)
    G = (Dus @ Abar_inv).reshape(k, N, k, N, 2, 2).transpose(0, 2, 1, 3, 4, 5)
    G = G.reshape(k * k, N * N, 2, 2)
    xi = basis.emb_inv(G)
    total = 0.0
    for c in range(k * k):
        ref = np.einsum("eab,mbc->emac", G[c], Acell) \
            + np.einsum("es,smac->emac", xi[c], Dphi) + DphiB[None]
        diff = T[c][None] - ref
        total += float(np.sum(diff * diff))
    return float(np.sqrt(total / (mesh.n ** 2 * N * N)))


def recovery_field(problem: MacroProblem, sol_hom: MacroSolution,
                   eff: EffectiveQuantities) -> np.ndarray:
    """Two-scale recovery ``u* + eps phi(x, x/eps)`` with nodal-averaged macro gradients."""
    cell = problem.cell
    mesh = problem.mesh
    N = cell.N
    corr, corrB = _cell_data(cell, eff)
    Dc = mesh.center_gradient(sol_hom.u)
    Dp = np.pad(Dc, ((1, 1), (1, 1), (0, 0), (0, 0)), mode="edge")
    Hn = 0.25 * (Dp[:-1, :-1] + Dp[1:, :-1] + Dp[:-1, 1:] + Dp[1:, 1:])
    Gn = Hn @ np.linalg.inv(eff.Abar)
    xi = build_sym_basis(2).emb_inv(Gn)
    idx = np.arange(mesh.n + 1) % N
    I, J = np.meshgrid(idx, idx, indexing="ij")
    phi = corrB.u[I, J]
    for s, c in enumerate(corr):
        phi = phi + xi[..., s, None] * c.u[I, J]
    if cell.abar_nodes is not None:
        phi = phi - np.einsum("...ij,...j->...i", Gn, cell.abar_nodes[I, J])
    u = sol_hom.u + problem.eps * phi
    mask = problem.dirichlet_mask()[..., None]
    return np.where(mask, sol_hom.u, u)


def gamma_diagram_report(cell: MicrostructureCell, eps_list: Sequence[float],
                         Dg: np.ndarray | None = None, gamma="left", rtol: float = RTOL) -> dict:
    """Energies of the oscillating and homogenised problems and the unfolding gap per eps."""
    if len(eps_list) < 3:
        raise ValueError("need at least three values of eps")
    eff = assemble_effective(cell, rtol, keep_correctors=True)
    Dg = DEFAULT_DG if Dg is None else np.asarray(Dg, dtype=float)
    E_eps, E_hom, gaps, ugaps, Ms = [], [], [], [], []
    for eps in eps_list:
        prob = MacroProblem(cell, eps, gamma, Dg)
        se = solve_lin_eps(prob, rtol)
        sh = solve_lin_hom(prob, eff, rtol)
        E_eps.append(se.energy)
        E_hom.append(sh.energy)
        gaps.append(abs(se.energy - sh.energy))
        ugaps.append(unfolding_gap(prob, se, sh, eff))
        Ms.append(prob.M)
    return {
        "epsilons": [float(e) for e in eps_list],
        "energies_eps": E_eps,
        "energy_hom": E_hom[-1],
        "energies_hom": E_hom,
        "gaps": gaps,
        "unfold_gaps": ugaps,
        "grid": {"cell_N": cell.N, "macro_M": Ms, "gamma": list(MacroProblem(cell, eps_list[0], gamma).gamma),
                 "Dg": Dg.tolist()},
        "Bhom": eff.Bhom.tolist(),
        "Rres": eff.Rres,
    }


# ---------------------------------------------------------------- field dumps

_MAGIC = b"PHFD"


def write_field(path, arr: np.ndarray) -> None:
    """Flat little-endian dump: magic, uint32 ndim, uint64 dims, then row-major float64."""
    arr = np.ascontiguousarray(arr, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_field(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a field dump")
        (nd,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{nd}Q", fh.read(8 * nd))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(dims).astype(float)
