"""Periodic corrector problems and effective quantities on voxel cells.

The generic problem is: find a periodic, zero-mean, Q1 field ``u`` that
minimises ``int_Y Q(y, E0 + Du A^-1)`` for a load ``E0`` given as a constant
matrix, a per-voxel field or a per-quadrature-point field.  Correctors
for the basis directions and for the prestrain are special cases.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import build_sym_basis, ddot, lq_apply, sym
from .errors import SingularQ, SolverDivergence
from .microstructure import MicrostructureCell

log = logging.getLogger(__name__)

RTOL = 1e-10
COND_MAX = 1e12


@dataclass
class CGInfo:
    iterations: int
    residual: float
    converged: bool
    history: list = field(default_factory=list)


def conjugate_gradient(apply: Callable, b: np.ndarray, x0: np.ndarray | None = None,
                       rtol: float = RTOL, maxiter: int = 1000,
                       project: Callable | None = None, ref: float | None = None):
    """Conjugate gradients for a symmetric semidefinite operator.

    ``project`` maps onto the subspace where the operator is definite and
    is applied to the iterate and residual after every step.  Convergence
    is declared when the residual norm drops below ``rtol * ref`` where
    ``ref`` defaults to the norm of ``b``.
    """
    P = project or (lambda v: v)
    x = np.zeros_like(b) if x0 is None else P(x0.copy())
    r = P(b - apply(x)) if x0 is not None else P(b.copy())
    ref = float(np.linalg.norm(b)) if ref is None else ref
    tol = rtol * ref
    rr = float(np.vdot(r, r))
    hist = [np.sqrt(rr)]
    if np.sqrt(rr) <= tol:
        return x, CGInfo(0, np.sqrt(rr), True, hist)
    p = r.copy()
    for it in range(1, maxiter + 1):
        Ap = apply(p)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0:
            raise SolverDivergence("operator not positive on search direction", it, np.sqrt(rr))
        a = rr / pAp
        x = P(x + a * p)
        r = P(r - a * Ap)
        rr_new = float(np.vdot(r, r))
        hist.append(np.sqrt(rr_new))
        if np.sqrt(rr_new) <= tol:
            return x, CGInfo(it, np.sqrt(rr_new), True, hist)
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise SolverDivergence(
        f"CG did not reach rtol {rtol:g} in {maxiter} iterations "
        f"(residual {np.sqrt(rr):.3g}, target {tol:.3g})", maxiter, np.sqrt(rr))


def iteration_cap(d: int, N: int) -> int:
    return int(50 * N ** (d / 2) * d)


def _project_mean(u: np.ndarray) -> np.ndarray:
    axes = tuple(range(u.ndim - 1))
    return u - u.mean(axis=axes, keepdims=True)


def _load_field(cell: MicrostructureCell, load) -> np.ndarray:
    """Broadcast a load to quadrature shape ``(nq,) + grid + (d, d)``."""
    load = np.asarray(load, dtype=float)
    d, mesh = cell.dim, cell.mesh
    if load.shape == (d, d):
        return np.broadcast_to(load, (mesh.nq,) + mesh.elem_shape + (d, d))
    if load.shape == mesh.elem_shape + (d, d):
        return np.broadcast_to(load, (mesh.nq,) + load.shape)
    return np.broadcast_to(load, (mesh.nq,) + mesh.elem_shape + (d, d))


def strain(cell: MicrostructureCell, u: np.ndarray, load=None) -> np.ndarray:
    """``E0 + Du A^-1`` at quadrature points."""
    E = cell.mesh.gradient(u) @ cell.Ainv
    return E if load is None else E + _load_field(cell, load)


def stress(cell: MicrostructureCell, E: np.ndarray) -> np.ndarray:
    return lq_apply(cell.lam, cell.mu, E)


def energy(cell: MicrostructureCell, u: np.ndarray | None, load) -> float:
    """``int_Y Q(y, E0 + Du A^-1) dy``."""
    E = _load_field(cell, load) if u is None else strain(cell, u, load)
    return cell.mesh.integrate(ddot(E, stress(cell, E)))


def operator(cell: MicrostructureCell) -> Callable:
    """Matrix-free stiffness ``u -> div(L(Du A^-1) A^-T)``."""
    AinvT = np.swapaxes(cell.Ainv, -1, -2)

    def apply(u):
        return cell.mesh.divergence(stress(cell, strain(cell, u)) @ AinvT)

    return apply


@dataclass
class CorrectorField:
    """Nodal values of a periodic zero-mean corrector with its solver record."""

    u: np.ndarray
    load: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list, repr=False)

    def gradient(self, cell: MicrostructureCell) -> np.ndarray:
        return cell.mesh.gradient(self.u)


def solve_periodic(cell: MicrostructureCell, load, rtol: float = RTOL,
                   x0: np.ndarray | None = None, maxiter: int | None = None) -> CorrectorField:
    """Minimise ``int_Y Q(y, E0 + Du A^-1)`` over periodic zero-mean Q1 fields."""
    d, mesh = cell.dim, cell.mesh
    E0 = _load_field(cell, load)
    AinvT = np.swapaxes(cell.Ainv, -1, -2)
    S0 = stress(cell, E0) @ AinvT
    b = -mesh.divergence(S0)
    # the assembled load cancels exactly for fields that are constant in y;
    # compare against the unassembled element forces to detect that
    scale = np.sqrt(mesh.qweight * mesh.integrate(ddot(S0, S0))) * mesh.n
    apply = operator(cell)
    bn = float(np.linalg.norm(b))
    if bn <= 1e-13 * max(scale, 1e-300) and x0 is None:
        u = np.zeros(mesh.node_shape + (d,))
        return CorrectorField(u, np.asarray(load), 0, bn, [bn])
    cap = iteration_cap(d, cell.N) if maxiter is None else maxiter
    u, info = conjugate_gradient(apply, b, x0, rtol, cap, _project_mean, ref=max(bn, 1e-13 * scale))
    log.debug("corrector solved in %d iterations, residual %.3e", info.iterations, info.residual)
    return CorrectorField(u, np.asarray(load), info.iterations, info.residual, info.history)


def solve_corrector(cell: MicrostructureCell, G: np.ndarray, rtol: float = RTOL,
                    x0: np.ndarray | None = None) -> CorrectorField:
    return solve_periodic(cell, np.asarray(G, dtype=float), rtol, x0)


@dataclass
class EffectiveQuantities:
    """Effective matrix, prestrain vector, homogenised prestrain and residual energy."""

    dim: int
    N: int
    Abar: np.ndarray
    Qmat: np.ndarray
    bvec: np.ndarray
    Bhom: np.ndarray
    Rres: float
    iterations: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    Qmat_alt: np.ndarray | None = field(default=None, repr=False)
    correctors: list | None = field(default=None, repr=False)
    prestrain_corrector: CorrectorField | None = field(default=None, repr=False)
    single_min: float = 0.0

    @property
    def basis(self):
        return build_sym_basis(self.dim)

    @property
    def xi_hom(self) -> np.ndarray:
        return np.linalg.solve(self.Qmat, self.bvec)

    def to_json(self) -> dict:
        return {
            "Abar": self.Abar.tolist(),
            "Qmat": self.Qmat.tolist(),
            "bvec": self.bvec.tolist(),
            "Bhom": self.Bhom.tolist(),
            "Rres": float(self.Rres),
            "solver": {"iterations": self.iterations, "residuals": self.residuals},
            "grid": {"d": self.dim, "N": self.N},
        }


def _solve_all(cell, loads, names, rtol, threads, maxiter=None):
    def run(item):
        name, L = item
        try:
            return solve_periodic(cell, L, rtol, maxiter=maxiter)
        except SolverDivergence as exc:
            raise SolverDivergence(f"corrector {name}: {exc}", exc.iterations, exc.residual) from exc

    items = list(zip(names, loads))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, items))
    return [run(it) for it in items]


def assemble_effective(cell: MicrostructureCell, rtol: float = RTOL, threads: int = 1,
                       keep_correctors: bool = False,
                       maxiter: int | None = None) -> EffectiveQuantities:
    """Solve the basis and prestrain correctors and assemble all effective quantities."""
    basis = build_sym_basis(cell.dim)
    loads = list(basis.matrices) + [-np.asarray(cell.B)]
    names = [f"G{i + 1}" for i in range(basis.size)] + ["B"]
    sols = _solve_all(cell, loads, names, rtol, threads, maxiter)
    mesh = cell.mesh
    E = [strain(cell, s.u, G) for s, G in zip(sols[:-1], basis.matrices)]
    S = [stress(cell, e) for e in E]
    s_ = basis.size
    Q = np.empty((s_, s_))
    Qalt = np.empty((s_, s_))
    Bq = _load_field(cell, cell.B)
    b = np.empty(s_)
    for i in range(s_):
        for j in range(s_):
            Q[i, j] = mesh.integrate(ddot(E[i], S[j]))
            Qalt[i, j] = mesh.integrate(ddot(S[i], _load_field(cell, basis.matrices[j])))
        b[i] = mesh.integrate(ddot(S[i], Bq))
    cond = np.linalg.cond(Q)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise SingularQ(f"effective matrix is singular (condition number {cond:.3g})")
    xi = np.linalg.solve(Q, b)
    Bhom = sym(basis.emb(xi))
    single = energy(cell, sols[-1].u, -np.asarray(cell.B))
    R = max(single - float(b @ xi), 0.0)
    return EffectiveQuantities(
        cell.dim, cell.N, cell.Abar.copy(), Q, b, Bhom, R,
        iterations={n: s.iterations for n, s in zip(names, sols)},
        residuals={n: s.residual for n, s in zip(names, sols)},
        Qmat_alt=Qalt,
        correctors=sols[:-1] if keep_correctors else None,
        prestrain_corrector=sols[-1] if keep_correctors else None,
        single_min=single,
    )


def residual_energy(cell: MicrostructureCell, rtol: float = RTOL) -> float:
    return assemble_effective(cell, rtol).Rres


def qhom_eval(eff: EffectiveQuantities, G: np.ndarray) -> float:
    """``Q^A_hom(G Abar)``: only the symmetric part of ``G`` enters."""
    xi = build_sym_basis(eff.dim).emb_inv(G)
    return float(np.einsum("...i,ij,...j->...", xi, eff.Qmat, xi))


def qhom_A(eff: EffectiveQuantities, H: np.ndarray) -> float:
    """``Q^A_hom(H)`` for an arbitrary matrix ``H``."""
    return qhom_eval(eff, np.asarray(H) @ np.linalg.inv(eff.Abar))


def limit_energy(eff: EffectiveQuantities, H: np.ndarray) -> float:
    """``Q^A_hom(H - B_hom Abar) + R``: limit of the scaled cell energy at mean ``Abar + h H``."""
    return qhom_eval(eff, np.asarray(H) @ np.linalg.inv(eff.Abar) - eff.Bhom) + eff.Rres


def two_scale_gradient(cell: MicrostructureCell, eff: EffectiveQuantities, H: np.ndarray,
                       at: str = "center") -> np.ndarray:
    """``H + D_y phi(H, .)``: the optimal total gradient in the cell for macro gradient H.

    Requires ``eff`` assembled with ``keep_correctors=True``.  Returned at
    element centres, shape ``grid + (d, d)``.
    """
    if eff.correctors is None:
        raise ValueError("assemble_effective(..., keep_correctors=True) is required")
    H = np.asarray(H, dtype=float)
    G = H @ np.linalg.inv(eff.Abar)
    xi = build_sym_basis(cell.dim).emb_inv(G)
    mesh = cell.mesh
    grad = mesh.center_gradient(eff.prestrain_corrector.u)
    for x, c in zip(xi, eff.correctors):
        grad = grad + x * mesh.center_gradient(c.u)
    return G @ cell.A + grad


@dataclass
class RefinementRecord:
    N: int
    eff: EffectiveQuantities
    dQ: float | None
    dB: float | None
    dR: float | None


def refine_study(builder: Callable[[int], MicrostructureCell], resolutions: Sequence[int],
                 rtol: float = RTOL, threads: int = 1) -> list[RefinementRecord]:
    """Effective quantities over a resolution ladder with successive relative differences."""
    if len(resolutions) < 2:
        raise ValueError("refine_study needs at least two resolutions")
    out = []
    prev = None
    for N in resolutions:
        eff = assemble_effective(builder(N), rtol, threads)
        if prev is None:
            out.append(RefinementRecord(N, eff, None, None, None))
        else:
            rel = lambda a, b: float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
            dR = abs(eff.Rres - prev.Rres) / max(abs(prev.Rres), 1e-300) if prev.Rres else abs(eff.Rres)
            out.append(RefinementRecord(N, eff, rel(eff.Qmat, prev.Qmat),
                                        rel(eff.Bhom, prev.Bhom) if np.any(prev.Bhom) else
                                        float(np.linalg.norm(eff.Bhom)), dR))
        prev = eff
    return out
