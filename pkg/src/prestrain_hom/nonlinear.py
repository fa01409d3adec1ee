"""Frame-indifferent stored energy with multiplicative prestrain and its cell problem.

The stored energy is ``W(F) = lam (tr E)^2 + 2 mu |E|^2`` with Green strain
``E = (F^T F - I) / 2``; its second-order expansion at the identity is the
isotropic form ``lam tr(G)^2 + 2 mu |sym G|^2``.  Prestrain enters through
``W^h(y, F) = W(F A_h(y)^-1)`` with ``A_h = (I + h B) A``.

The cell problem is parametrised around the joint: the deformation gradient
is ``F = A + h (G + Du)`` with periodic ``u``.  Since ``A = Abar + D abar``
this is the same minimisation as over ``Abar + h G + D phi`` with
``phi = abar + h u``, but the unknown stays of order one as ``h -> 0``.
Energies are evaluated in the scaled form ``h^-2 W^h`` without cancellation.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .algebra import ddot, polar_stretch, sym, trace
from .cellsolver import (
    EffectiveQuantities,
    assemble_effective,
    limit_energy,
    solve_periodic,
)
from .errors import LineSearchFailure, NonConvergence
from .microstructure import MicrostructureCell

log = logging.getLogger(__name__)

H_MAX = 0.2


def green_strain(F: np.ndarray) -> np.ndarray:
    d = F.shape[-1]
    return 0.5 * (np.swapaxes(F, -1, -2) @ F - np.eye(d))


def svk_energy(lam, mu, F: np.ndarray) -> np.ndarray:
    E = green_strain(np.asarray(F, dtype=float))
    return np.asarray(lam) * trace(E) ** 2 + 2.0 * np.asarray(mu) * ddot(E, E)


def svk_stress(lam, mu, F: np.ndarray) -> np.ndarray:
    """First Piola stress ``dW/dF = F S`` with ``S = 2 lam tr(E) I + 4 mu E``."""
    F = np.asarray(F, dtype=float)
    E = green_strain(F)
    lam = np.asarray(lam, dtype=float)[..., None, None]
    mu = np.asarray(mu, dtype=float)[..., None, None]
    S = 2.0 * lam * trace(E)[..., None, None] * np.eye(F.shape[-1]) + 4.0 * mu * E
    return F @ S


class PrestrainedEnergy:
    """``W^h`` on a voxel cell for fixed ``h``; arrays broadcast over the voxel grid."""

    def __init__(self, cell: MicrostructureCell, h: float):
        if h < 0:
            raise ValueError("h must be non-negative")
        self.cell = cell
        self.h = float(h)
        d = cell.dim
        IhB = np.eye(d) + self.h * cell.B
        self.Ah = IhB @ cell.A
        self.Ahinv = np.linalg.inv(self.Ah)
        # (I + hB)^-1 = I - h B (I + hB)^-1, so F A_h^-1 = I + h Z with Z below
        self.Bt = cell.B @ np.linalg.inv(IhB)

    def value(self, F: np.ndarray) -> np.ndarray:
        """``W^h(y, F)`` per voxel for ``F`` of shape ``grid + (d, d)`` (or broadcastable)."""
        return svk_energy(self.cell.lam, self.cell.mu, F @ self.Ahinv)

    def gradient(self, F: np.ndarray) -> np.ndarray:
        return svk_stress(self.cell.lam, self.cell.mu, F @ self.Ahinv) @ np.swapaxes(self.Ahinv, -1, -2)

    def at(self, index: tuple, F: np.ndarray) -> float:
        c = self.cell
        return float(svk_energy(c.lam[index], c.mu[index], F @ self.Ahinv[index]))

    def scaled(self, X: np.ndarray):
        """Scaled energy density ``h^-2 W^h(A + h X)`` and its derivative in ``X``.

        Returns ``(density, dX, detF)`` on the quadrature grid.
        """
        c, h = self.cell, self.h
        Z = X @ self.Ahinv - self.Bt
        Eh = sym(Z) + 0.5 * h * (np.swapaxes(Z, -1, -2) @ Z)
        trE = trace(Eh)
        dens = c.lam * trE ** 2 + 2.0 * c.mu * ddot(Eh, Eh)
        d = c.dim
        S = 2.0 * c.lam[..., None, None] * trE[..., None, None] * np.eye(d) + 4.0 * c.mu[..., None, None] * Eh
        P = np.eye(d) + h * Z
        return dens, P @ S @ np.swapaxes(self.Ahinv, -1, -2), np.linalg.det(P)


@dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    gnorm: float
    iterations: int
    evaluations: int
    status: str
    history: list = field(default_factory=list, repr=False)


def lbfgs(fun, x0: np.ndarray, gtol: float, maxiter: int = 2000, memory: int = 20,
          gnorm=None, c1: float = 1e-4, ftol: float = 1e-14) -> LBFGSResult:
    """Limited-memory BFGS with backtracking Armijo line search.

    ``fun(x)`` returns ``(f, g)``; non-finite ``f`` is treated as an
    infeasible trial point and backtracked from.  Accepted iterates never
    increase ``f``.  Besides ``gnorm(g) <= gtol`` the run stops with status
    ``"roundoff"`` once the predicted decrease falls below ``ftol * |f|``,
    the level at which energy differences are no longer resolvable.
    """
    gnorm = gnorm or (lambda g: float(np.linalg.norm(g)))
    x = x0.copy()
    f, g = fun(x)
    nev = 1
    if not np.isfinite(f):
        raise LineSearchFailure("initial point is infeasible")
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    hist = [f]
    for it in range(maxiter + 1):
        gn = gnorm(g)
        if gn <= gtol:
            return LBFGSResult(x, f, g, gn, it, nev, "gtol", hist)
        if it == maxiter:
            break
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(S, Y))):
            rho = 1.0 / np.vdot(y, s)
            a = rho * np.vdot(s, q)
            alphas.append((rho, a, s, y))
            q -= a * y
        if S:
            q *= np.vdot(S[-1], Y[-1]) / np.vdot(Y[-1], Y[-1])
        else:
            q /= max(np.linalg.norm(g), 1e-300)
        for rho, a, s, y in reversed(alphas):
            q += (a - rho * np.vdot(y, q)) * s
        p = -q
        slope = float(np.vdot(g, p))
        if slope >= 0:
            S.clear(), Y.clear()
            p = -g / max(np.linalg.norm(g), 1e-300)
            slope = float(np.vdot(g, p))
        if -slope <= ftol * max(abs(f), 1e-300):
            return LBFGSResult(x, f, g, gn, it, nev, "roundoff", hist)
        t = 1.0
        for _ in range(60):
            fn, gnew = fun(x + t * p)
            nev += 1
            if np.isfinite(fn) and fn <= f + c1 * t * slope:
                break
            t *= 0.5
        else:
            if -slope <= 1e3 * ftol * max(abs(f), 1e-300):
                return LBFGSResult(x, f, g, gn, it, nev, "roundoff", hist)
            raise LineSearchFailure(f"no decrease along search direction at iteration {it}")
        s = t * p
        y = gnew - g
        if np.vdot(s, y) > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, f, g = x + s, fn, gnew
        hist.append(f)
    raise NonConvergence(f"L-BFGS hit {maxiter} iterations with gradient norm {gnorm(g):.3g}")


@dataclass
class CellMinimizeResult:
    """Minimum of the scaled cell energy with the minimising displacement."""

    value: float
    energy: float
    h: float
    G: np.ndarray
    u: np.ndarray
    iterations: int
    gnorm: float
    status: str
    history: list = field(default_factory=list, repr=False)

    def mean_gradient(self, cell: MicrostructureCell) -> np.ndarray:
        """Average deformation gradient ``Abar + h G``."""
        return cell.Abar + self.h * self.G


def _objective(cell: MicrostructureCell, energy: PrestrainedEnergy, G, free_mean: bool):
    mesh = cell.mesh
    d = cell.dim
    nu = int(np.prod(mesh.node_shape)) * d

    def fun(x):
        u = x[:nu].reshape(mesh.node_shape + (d,))
        Gx = x[nu:].reshape(d, d) if free_mean else G
        X = mesh.gradient(u) + Gx
        dens, dX, detF = energy.scaled(X)
        if np.any(detF <= 0):
            return np.inf, None
        f = mesh.integrate(dens)
        gu = mesh.divergence(dX).ravel()
        if free_mean:
            gG = dX.sum(axis=tuple(range(dX.ndim - 2))) * mesh.qweight
            return f, np.concatenate([gu, gG.ravel()])
        return f, gu

    return fun, nu


def cell_min_nonlinear(cell: MicrostructureCell, G: np.ndarray | None, h: float,
                       init="linear", gtol: float | None = None, maxiter: int = 3000,
                       free_mean: bool = False, h_max: float = H_MAX) -> CellMinimizeResult:
    """Minimise ``h^-2 int_Y W^h(y, A + h (G + Du))`` over periodic ``u``.

    Parameters
    ----------
    G : (d, d) array
        Macroscopic perturbation; the mean deformation gradient is
        ``Abar + h G``.  With ``free_mean=True`` it is an initial guess and
        is optimised together with ``u``.
    init : ``"linear"``, ``"zero"`` or a nodal array
        ``"linear"`` warm-starts from the linearised corrector problem.
    gtol : float
        Tolerance on the nodal gradient norm rescaled by the element volume;
        defaults to ``1e-10 * N**(d/2)``.
    """
    if not 0 < h <= h_max:
        raise ValueError(f"h = {h} outside (0, {h_max}]")
    d = cell.dim
    G = np.zeros((d, d)) if G is None else np.asarray(G, dtype=float)
    mesh = cell.mesh
    energy = PrestrainedEnergy(cell, h)
    if isinstance(init, str):
        if init == "linear":
            load = G @ cell.Ainv - cell.B
            u0 = solve_periodic(cell, load).u
        elif init == "zero":
            u0 = np.zeros(mesh.node_shape + (d,))
        else:
            raise ValueError(f"unknown init {init!r}")
    else:
        u0 = np.asarray(init, dtype=float)
    fun, nu = _objective(cell, energy, G, free_mean)
    x0 = u0.ravel()
    if free_mean:
        x0 = np.concatenate([x0, G.ravel()])
    scale = 1.0 / mesh.h ** d
    gtol = 1e-10 * cell.N ** (d / 2) if gtol is None else gtol
    res = lbfgs(fun, x0, gtol, maxiter, gnorm=lambda g: float(np.linalg.norm(g)) * scale)
    u = res.x[:nu].reshape(mesh.node_shape + (d,))
    u = u - u.mean(axis=tuple(range(d)))
    Gf = res.x[nu:].reshape(d, d) if free_mean else G
    log.info("cell minimisation h=%g: %d iterations, status %s, value %.12g",
             h, res.iterations, res.status, res.f)
    return CellMinimizeResult(res.f, res.f * h * h, h, Gf, u, res.iterations, res.gnorm,
                              res.status, res.history)


def expansion_check(cell: MicrostructureCell, G: np.ndarray, h_list,
                    eff: EffectiveQuantities | None = None, init: str = "linear") -> dict:
    """Compare scaled cell minima with their quadratic limit along decreasing ``h``."""
    h_list = [float(h) for h in h_list]
    if any(h <= 0 for h in h_list) or any(a <= b for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be positive and strictly decreasing")
    G = np.asarray(G, dtype=float)
    eff = assemble_effective(cell) if eff is None else eff
    limit = limit_energy(eff, G)
    values, iters, status = [], [], []
    for h in h_list:
        r = cell_min_nonlinear(cell, G, h, init=init)
        values.append(r.value)
        iters.append(r.iterations)
        status.append(r.status)
    errors = [abs(v - limit) for v in values]
    ratios = [b / a if a > 0 else float("nan") for a, b in zip(errors, errors[1:])]
    return {
        "G": G.tolist(), "h_list": h_list, "values": values, "errors": errors,
        "ratios": ratios, "limit_prediction": limit, "corrector_warmstart": init == "linear",
        "iterations": iters, "status": status,
    }


def polar_check(cell: MicrostructureCell, h: float, eff: EffectiveQuantities | None = None) -> dict:
    """Minimise over the mean gradient too and compare its stretch with ``I + h B_hom``.

    The minimising average gradient ``F`` is mapped to ``F Abar^-1`` whose
    symmetric polar factor should equal ``I + h B_hom`` up to ``o(h)``.
    """
    eff = assemble_effective(cell) if eff is None else eff
    G0 = eff.Bhom @ eff.Abar
    r = cell_min_nonlinear(cell, G0, h, free_mean=True)
    F = r.mean_gradient(cell)
    U = polar_stretch(F @ np.linalg.inv(eff.Abar))
    d = cell.dim
    dev = float(np.linalg.norm(U - (np.eye(d) + h * eff.Bhom)) / h)
    return {"h": h, "F": F.tolist(), "U": U.tolist(), "deviation": dev, "value": r.value,
            "status": r.status, "iterations": r.iterations}
