"""Closed-form and one-dimensional effective quantities for isotropic laminates.

All routines work on a ``LaminateProfile``: piecewise-constant data in the
pulled-back variable, where the joint is replaced by its constant mean
and the moduli are rescaled by ``det Abar / det A``.  Correctors then
depend on the first coordinate only and ``Dphi Abar^-1 = v alpha^T`` with
``alpha = Abar^-T e_1``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .algebra import build_sym_basis, ddot, lq_apply, sym
from .cellsolver import EffectiveQuantities
from .errors import ConstraintViolation, GeometryMismatch, SingularQ, UnsupportedDimension
from .microstructure import BilayerSpec, LaminateProfile, abeta_spec, bilayer_profile


def _require_3d(profile: LaminateProfile):
    if profile.dim != 3:
        raise UnsupportedDimension("closed-form laminate formulas are three-dimensional")


def _betas(p: LaminateProfile):
    mu, M = p.mu, p.M
    b1 = p.hmean(mu) / mu - 1.0
    b2 = p.hmean(M) * p.mean(mu / M) / M - p.hmean(mu) / mu + 1.0 - mu / M
    return b1, b2


def corrector_gradients(profile: LaminateProfile, i: int) -> np.ndarray:
    """Gradient of the pulled-back corrector for basis direction ``G_i`` (i = 1..6).

    Returns one ``3 x 3`` matrix per segment; each has the form ``g e_1^T``.
    """
    _require_3d(profile)
    a = profile.alpha
    a2 = a @ a
    K, M = profile.K, profile.M
    b1, b2 = _betas(profile)
    e1 = np.eye(3)[0]
    if i == 1:
        g = ((profile.hmean(M) * profile.mean(K / M) - K) / (a2 * M))[:, None] * a
    else:
        first, second = {
            2: (4 / 3 * np.array([a[0], -a[1] / 2, -a[2] / 2]),
                (4 * a[0] ** 2 - 2 * a[1] ** 2 - 2 * a[2] ** 2) / 3),
            3: (np.array([0.0, -a[1], a[2]]), a[2] ** 2 - a[1] ** 2),
            4: (np.array([a[1], a[0], 0.0]), 2 * a[0] * a[1]),
            5: (np.array([a[2], 0.0, a[0]]), 2 * a[0] * a[2]),
            6: (np.array([0.0, a[2], a[1]]), 2 * a[1] * a[2]),
        }[i]
        g = (b1 / a2)[:, None] * first + (second / a2 ** 2 * b2)[:, None] * a
    return g[:, :, None] * e1[None, None, :]


def solve_1d(profile: LaminateProfile, E0: np.ndarray):
    """Minimise ``sum_k t_k Q_k(E0_k + v_k alpha^T)`` subject to ``sum_k t_k v_k = 0``.

    ``E0`` is one matrix per segment.  Returns the per-segment vectors
    ``v_k`` and the minimal energy.
    """
    a = profile.alpha
    d = profile.dim
    t = profile.widths
    C = (profile.lam + profile.mu)[:, None, None] * np.outer(a, a) \
        + (profile.mu * (a @ a))[:, None, None] * np.eye(d)
    r = lq_apply(profile.lam, profile.mu, E0) @ a
    Ci = np.linalg.inv(C)
    c = np.linalg.solve(np.einsum("k,kij->ij", t, Ci), np.einsum("k,kij,kj->i", t, Ci, r))
    v = np.einsum("kij,kj->ki", Ci, c[None] - r)
    E = E0 + v[:, :, None] * a[None, None, :]
    return v, float(np.dot(t, ddot(E, lq_apply(profile.lam, profile.mu, E))))


@dataclass
class LaminateEffective:
    """Block data of the effective matrix for profiles with ``alpha`` parallel to ``e_1``."""

    A1block: np.ndarray
    A2block: np.ndarray
    Bcoeffs: np.ndarray
    gamma: np.ndarray

    @property
    def Qmat(self) -> np.ndarray:
        Q = np.zeros((6, 6))
        Q[:2, :2] = self.A1block
        Q[2:, 2:] = np.diag(self.A2block)
        return Q

    @property
    def Bhom(self) -> np.ndarray:
        return build_sym_basis(3).emb(self.Bcoeffs)


def effective_blocks(profile: LaminateProfile, tol: float = 1e-12) -> LaminateEffective:
    """Closed-form effective matrix blocks and prestrain coefficients."""
    _require_3d(profile)
    a = profile.alpha
    if np.abs(a[1:]).max() > tol * np.abs(a).max():
        raise GeometryMismatch("closed-form blocks need Abar^-T e_1 parallel to e_1")
    p = profile
    K, M, mu, lam, B = p.K, p.M, p.mu, p.lam, p.B
    mean, hmean = p.mean, p.hmean
    gamma = (mean(K / M) * hmean(M) - K) / M
    gm = mean(gamma * mu)
    A1 = np.array([
        [mean(K / M) * hmean(M) - 4 / 3 * gm, 4 / 3 * gm],
        [4 / 3 * gm, 4 / 3 * mean(mu / M) * hmean(M) - 4 / 3 * gm],
    ])
    A2 = np.array([mean(mu), hmean(mu), hmean(mu), mean(mu)])
    B22_33 = B[:, 1, 1] + B[:, 2, 2]
    first = mean(B[:, 0, 0] + lam / M * B22_33)
    kmm = mean(B22_33 * K * mu / M)
    Bc = np.array([
        first + 2 * kmm * mean(mu / M) / mean(K * mu / M),
        first - 1.5 * kmm * mean(K / M) / mean(K * mu / M),
        mean(mu * (B[:, 2, 2] - B[:, 1, 1])) / mean(mu),
        mean(B[:, 0, 1] + B[:, 1, 0]),
        mean(B[:, 0, 2] + B[:, 2, 0]),
        mean(mu * (B[:, 1, 2] + B[:, 2, 1])) / mean(mu),
    ])
    return LaminateEffective(A1, A2, Bc, gamma)


def _residual(profile: LaminateProfile, b: np.ndarray, xi: np.ndarray) -> tuple[float, float]:
    _, single = solve_1d(profile, -profile.B)
    return max(single - float(b @ xi), 0.0), single


def _package(profile, Q, b, xi, route) -> EffectiveQuantities:
    R, single = _residual(profile, b, xi)
    d = profile.dim
    return EffectiveQuantities(
        d, 0, profile.Abar.copy(), Q, b, sym(build_sym_basis(d).emb(xi)), R,
        iterations={"route": route}, residuals={}, Qmat_alt=None, single_min=single,
    )


def laminate_effective(profile: LaminateProfile, route: str = "auto") -> EffectiveQuantities:
    """Effective quantities of a laminate profile.

    ``route`` selects the closed-form blocks (``"closed"``, needs ``alpha``
    parallel to ``e_1``), the integrated closed-form correctors
    (``"correctors"``, any ``alpha``) or the generic one-dimensional solve
    (``"generic"``, any dimension).  ``"auto"`` picks the first that applies.
    The residual energy always comes from the one-dimensional solve.
    """
    d = profile.dim
    if route == "auto":
        if d != 3:
            route = "generic"
        else:
            a = profile.alpha
            route = "closed" if np.abs(a[1:]).max() <= 1e-12 * np.abs(a).max() else "correctors"
    basis = build_sym_basis(d)
    t = profile.widths
    if route == "closed":
        blocks = effective_blocks(profile)
        Q = blocks.Qmat
        return _package(profile, Q, Q @ blocks.Bcoeffs, blocks.Bcoeffs, route)
    if route == "correctors":
        _require_3d(profile)
        Abar_inv = np.linalg.inv(profile.Abar)
        E = [G[None] + corrector_gradients(profile, i + 1) @ Abar_inv
             for i, G in enumerate(basis.matrices)]
    elif route == "generic":
        E = []
        for G in basis.matrices:
            E0 = np.broadcast_to(G, (len(t), d, d))
            v, _ = solve_1d(profile, E0)
            E.append(E0 + v[:, :, None] * profile.alpha[None, None, :])
    else:
        raise ValueError(f"unknown route {route!r}")
    S = [lq_apply(profile.lam, profile.mu, e) for e in E]
    Q = np.array([[np.dot(t, ddot(E[i], S[j])) for j in range(len(E))] for i in range(len(E))])
    b = np.array([np.dot(t, ddot(S[i], profile.B)) for i in range(len(E))])
    if np.linalg.cond(Q) > 1e12:
        raise SingularQ("laminate effective matrix is singular")
    return _package(profile, Q, b, np.linalg.solve(Q, b), route)


# ---------------------------------------------------------------- sweeps

SWEEP_DEFAULTS = {"theta": 0.5, "lam1": 1.0, "mu1": 1.0, "lam2": 2.0, "mu2": 2.0, "beta": 1.0}


def sweep_spec(family: str, value: float, fixed: dict | None = None) -> BilayerSpec:
    p = dict(SWEEP_DEFAULTS)
    p.update(fixed or {})
    B1 = np.asarray(p.get("B1", -np.eye(3)), dtype=float)
    B2 = np.asarray(p.get("B2", np.eye(3)), dtype=float)
    if family == "theta":
        if not 0 <= value <= 1:
            raise ConstraintViolation(f"theta = {value} outside [0, 1]")
        p["theta"] = value
    elif family == "mu2":
        if not value > 0:
            raise ConstraintViolation(f"mu2 = {value} must be positive")
        p["mu2"] = value
    elif family == "beta":
        return abeta_spec(value, p["lam1"], p["mu1"], p["lam2"], p["mu2"], B1, B2)
    else:
        raise ValueError(f"unknown sweep family {family!r}")
    return BilayerSpec(p["theta"], p["lam1"], p["mu1"], p["lam2"], p["mu2"], B1=B1, B2=B2)


def sweep(family: str, values: Iterable[float], fixed: dict | None = None) -> list[dict]:
    """Closed-form coefficients along a one-parameter bilayer family."""
    rows = []
    for v in values:
        blocks = effective_blocks(bilayer_profile(sweep_spec(family, float(v), fixed)))
        row = {"parameter": float(v)}
        row.update({f"B{i + 1}": float(x) for i, x in enumerate(blocks.Bcoeffs)})
        Q = blocks.Qmat
        row.update({f"Q{i + 1}{j + 1}": float(Q[i, j]) for i in range(6) for j in range(6)})
        rows.append(row)
    return rows


SWEEP_HEADER = ["parameter"] + [f"B{i}" for i in range(1, 7)] + \
    [f"Q{i}{j}" for i in range(1, 7) for j in range(1, 7)]


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_HEADER, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(r[k]) for k in SWEEP_HEADER})
    return buf.getvalue()
