"""Acceptance gate: numbered checks with measured values and pass/fail verdicts.

``run_suite`` executes the checks in order and returns one ``CheckResult``
each.  The bilayer resolution ``N`` can be lowered for quick runs; laminate
comparisons stay exact on any grid that resolves the layers, while the
macroscopic gaps grow (informational).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra import build_sym_basis, ellipticity_bounds
from .cellsolver import EffectiveQuantities, assemble_effective, qhom_eval
from .laminate import laminate_effective
from .microstructure import (BilayerSpec, abeta_spec, bilayer_cell, bilayer_profile,
                             build_cell, homogeneous_cell, theta_hat, validate_sfj)
from .nonlinear import PrestrainedEnergy, expansion_check, polar_check, svk_energy, svk_stress
from .macroscale import gamma_diagram_report
from . import runner

FAULTS = ("oracle_A1_sign",)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict
    runtime: float
    failures: list = field(default_factory=list)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        tail = f" [{'; '.join(self.failures)}]" if self.failures else ""
        return f"{verdict} criterion {self.number} ({self.name}): {vals}, t={self.runtime:.1f}s{tail}"

    def to_json(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "measured": self.measured, "failures": self.failures}


def _fail(condition, message: str) -> list:
    return [message] if condition else []


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def rel_error(a, b, floor: float = 1e-12) -> float:
    """Largest entrywise relative error; entries of ``b`` below ``floor * max|b|`` count absolutely.

    Absolute errors of those near-zero entries are scaled by ``max|b|``.
    """
    a, b = np.atleast_1d(np.asarray(a, float)), np.atleast_1d(np.asarray(b, float))
    scale = max(float(np.abs(b).max()), 1e-300)
    denom = np.where(np.abs(b) > floor * scale, np.abs(b), scale)
    return float((np.abs(a - b) / denom).max())


class Suite:
    """Lazily computed shared data for the numbered checks."""

    def __init__(self, N: int = 16, fault: str | None = None, threads: int = 1, seed: int = 0):
        if fault is not None and fault not in FAULTS:
            raise ValueError(f"unknown fault {fault!r}")
        self.N, self.fault, self.threads = N, fault, threads
        self.rng = np.random.default_rng(seed)
        self._cache: dict = {}

    def cached(self, key, fn: Callable):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def oracle(self, spec: BilayerSpec) -> EffectiveQuantities:
        eff = laminate_effective(bilayer_profile(spec), "closed")
        if self.fault == "oracle_A1_sign":
            eff.Qmat[0, 1] *= -1
            eff.Qmat[1, 0] *= -1
        return eff

    def _laminate(self, key, spec):
        def build():
            cell = bilayer_cell(spec, self.N)
            return spec, cell, assemble_effective(cell, threads=self.threads)
        return self.cached(key, build)

    def bilayer(self):
        return self._laminate("bilayer", BilayerSpec(0.5, 1.0, 1.0, 2.0, 2.0))

    def abeta(self, beta):
        return self._laminate(("abeta", beta), abeta_spec(beta))

    # -- checks ---------------------------------------------------------------

    def c1(self, res):
        cell = homogeneous_cell(3, 8)
        eff = assemble_effective(cell, keep_correctors=True, threads=self.threads)
        err = float(np.abs(eff.Qmat - np.diag([5 / 3, 4 / 3, 1, 1, 1, 1])).max())
        sup = max(float(np.abs(c.u).max()) for c in eff.correctors)
        res["Q_err"], res["corrector_sup"] = err, sup
        return _fail(err > 1e-10, f"Q error {err:.3g}") + _fail(sup > 1e-10, f"corrector sup {sup:.3g}")

    def _compare(self, eff, ref, res, prefix=""):
        errs = {f"{prefix}Q_rel": rel_error(eff.Qmat, ref.Qmat),
                f"{prefix}Bhom_rel": rel_error(eff.Bhom, ref.Bhom),
                f"{prefix}R_rel": rel_error(eff.Rres, ref.Rres)}
        res.update(errs)
        return [f"{k} {v:.3g} > 1e-8" for k, v in errs.items() if not v <= 1e-8]

    def c2(self, res):
        spec, _, eff = self.bilayer()
        return self._compare(eff, self.oracle(spec), res)

    def c3(self, res):
        fails, B = [], []
        for beta in (0.5, 1.0, 1.5):
            spec, _, eff = self.abeta(beta)
            fails += self._compare(eff, self.oracle(spec), res, f"b{beta}_")
            B.append(eff.xi_hom)
        _, _, eff2 = self.bilayer()
        _, _, eff1 = self.abeta(1.0)
        same = max(rel_error(eff1.Qmat, eff2.Qmat), rel_error(eff1.Bhom, eff2.Bhom),
                   rel_error(eff1.Rres, eff2.Rres))
        col = float(np.abs(B[0] - 2 * B[1] + B[2]).max() / np.abs(B).max())
        res["beta1_vs_bilayer"], res["collinearity"] = same, col
        fails += _fail(same > 1e-10, f"beta=1 differs from bilayer by {same:.3g}")
        fails += _fail(col > 1e-8, f"B coefficients not collinear ({col:.3g})")
        return fails

    def c4(self, res):
        fails = []
        effs = [self.bilayer()[2]] + [self.abeta(b)[2] for b in (0.5, 1.5)]
        sym_err = max(float(np.abs(e.Qmat - e.Qmat.T).max() / np.abs(e.Qmat).max()) for e in effs)
        min_eig = min(float(np.linalg.eigvalsh(0.5 * (e.Qmat + e.Qmat.T)).min()) for e in effs)
        cross = max(float(np.abs(e.Qmat[:2, 2:]).max() / np.abs(e.Qmat).max()) for e in effs)
        bsym = max(float(np.abs(e.Bhom - e.Bhom.T).max()) for e in effs)
        Bc = self.rng.standard_normal((3, 3))
        cell = homogeneous_cell(3, 4, 1.3, 0.7, Bc, np.diag([1.2, 0.9, 1.1]))
        eff = assemble_effective(cell)
        hom_err = float(np.abs(eff.Bhom - 0.5 * (Bc + Bc.T)).max())
        res.update(Q_sym=sym_err, min_eig=min_eig, cross=cross, Bhom_sym=bsym,
                   const_B_err=hom_err, const_B_R=float(eff.Rres))
        fails += _fail(sym_err > 1e-10, f"Q asymmetry {sym_err:.3g}")
        fails += _fail(min_eig <= 0, f"Q not positive definite ({min_eig:.3g})")
        fails += _fail(cross > 1e-10, f"cross block {cross:.3g}")
        fails += _fail(bsym > 1e-10, f"Bhom asymmetry {bsym:.3g}")
        fails += _fail(hom_err > 1e-10, f"Bhom != sym B ({hom_err:.3g})")
        fails += _fail(abs(eff.Rres) > 1e-10, f"R != 0 ({eff.Rres:.3g})")
        return fails

    def c5(self, res):
        board = build_cell("checkerboard", 3, min(self.N, 8), {"lam": 1.5, "mu": 0.8})
        cases = [(board, assemble_effective(board, threads=self.threads)), self.abeta(1.5)[1:]]
        worst_low, worst_high = np.inf, np.inf
        for cell, eff in cases:
            lo, hi = coercivity_margins(cell, eff, self.rng, 100)
            worst_low, worst_high = min(worst_low, lo), min(worst_high, hi)
        res["lower_margin"], res["upper_margin"] = worst_low, worst_high
        return _fail(worst_low < 0, f"lower bound violated ({worst_low:.3g})") + \
            _fail(worst_high < 0, f"upper bound violated ({worst_high:.3g})")

    def c6(self, res):
        _, cell, eff = self.bilayer()
        G2 = build_sym_basis(3).matrices[1]
        rep = expansion_check(cell, G2, [1e-1, 5e-2, 2.5e-2, 1.25e-2], eff)
        pol = polar_check(cell, 1.25e-2, eff)
        res["ratios"], res["polar_deviation"] = rep["ratios"], pol["deviation"]
        fails = [f"ratio {r:.3g} > 0.6" for r in rep["ratios"] if not r <= 0.6]
        return fails + _fail(not pol["deviation"] <= 0.1, f"polar deviation {pol['deviation']:.3g} > 0.1")

    def c7(self, res):
        cell = build_cell("bilayer", 2, max(2, self.N // 2), {})
        rep = gamma_diagram_report(cell, [1 / 4, 1 / 8, 1 / 16])
        g, u = rep["gaps"], rep["unfold_gaps"]
        res["gaps"], res["unfold_gaps"] = g, u
        fails = _fail(not all(b < a for a, b in zip(g, g[1:])), "energy gaps not strictly decreasing")
        return fails + _fail(not all(b < a for a, b in zip(u, u[1:])),
                             "unfolding gaps not strictly decreasing")

    def c8(self, res):
        fails = []
        worst = {"continuity": 0.0, "rank_one": 0.0}
        for name, make in runner.JOINTS.items():
            rep = validate_sfj(make(), 16)
            worst["continuity"] = max(worst["continuity"], rep.continuity or 0.0)
            worst["rank_one"] = max(worst["rank_one"], rep.rank_one)
            fails += [f"{name}: {f}" for f in rep.failures]
        th, mn = bilayer_identity_errors(self.rng, 100)
        res.update(continuity=worst["continuity"], rank_one=worst["rank_one"],
                   theta_hat_err=th, mean_err=mn)
        fails += _fail(th > 1e-12, f"theta-hat identity error {th:.3g}")
        return fails + _fail(mn > 1e-12, f"mean identity error {mn:.3g}")

    def c9(self, res):
        fi, gr, rest = nonlinear_property_errors(self.rng)
        res.update(frame_indifference=fi, gradient_rel=gr, rest_state=rest)
        return _fail(fi > 1e-12, f"frame indifference {fi:.3g}") + \
            _fail(gr > 1e-6, f"gradient error {gr:.3g}") + _fail(rest > 1e-24, f"W(R A_h) = {rest:.3g}")

    def c10(self, res):
        cfg = {"cell": {"family": "bilayer-fig2", "dim": 2, "N": 6, "params": {"theta": 0.5}}}
        a = runner.dump_json(runner.homogenize(cfg, self.threads))
        b = runner.dump_json(runner.homogenize(cfg, self.threads))
        res["identical"] = a == b
        return [] if a == b else ["JSON differs between runs"]


CHECKS = {
    1: ("homogeneous cell", Suite.c1),
    2: ("aligned bilayer vs oracle", Suite.c2),
    3: ("A_beta family", Suite.c3),
    4: ("symmetry and structure", Suite.c4),
    5: ("coercivity bounds", Suite.c5),
    6: ("expansion and polar check", Suite.c6),
    7: ("macro Gamma diagram", Suite.c7),
    8: ("stress-free joint validators", Suite.c8),
    9: ("nonlinear energy properties", Suite.c9),
    10: ("determinism", Suite.c10),
}


def coercivity_margins(cell, eff, rng, samples: int = 100):
    """Smallest relative slack of the lower and upper coercivity bounds over random G.

    With ``a = alpha_el det Abar / (max det A |Abar|^2)`` and
    ``b = beta_el |Abar^-1|^2`` the bounds read
    ``a |(sym G) Abar|^2 <= Qtilde_hom(G) <= b |(sym G) Abar|^2``.
    """
    d = cell.dim
    lo_el, hi_el = ellipticity_bounds(cell.lam, cell.mu, d)
    Abar = eff.Abar
    dets = np.linalg.det(cell.A)
    a = lo_el * np.linalg.det(Abar) / (dets.max() * np.linalg.norm(Abar, 2) ** 2)
    b = hi_el * np.linalg.norm(np.linalg.inv(Abar), 2) ** 2
    lo, hi = np.inf, np.inf
    for _ in range(samples):
        G = rng.standard_normal((d, d))
        n2 = float(np.sum((0.5 * (G + G.T) @ Abar) ** 2))
        q = qhom_eval(eff, G)
        lo = min(lo, (q - a * n2) / (a * n2))
        hi = min(hi, (b * n2 - q) / (b * n2))
    return lo, hi


def random_bilayer_spec(rng) -> BilayerSpec:
    while True:
        A2 = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
        c = 0.3 * rng.standard_normal(3)
        A1 = A2 + np.outer(c, np.eye(3)[0])
        if np.linalg.det(A2) > 0.1 and np.linalg.det(A1) > 0.1:
            break
    lam = rng.uniform(0.1, 3.0, 2)
    mu = rng.uniform(0.1, 3.0, 2)
    return BilayerSpec(rng.uniform(0.05, 0.95), lam[0], mu[0], lam[1], mu[1], A2, c,
                       rng.standard_normal((3, 3)), rng.standard_normal((3, 3)))


def bilayer_identity_errors(rng, samples: int = 100) -> tuple[float, float]:
    """Worst errors of the distorted-fraction and mean-modulus identities."""
    th_err = mean_err = 0.0
    for _ in range(samples):
        s = random_bilayer_spec(rng)
        th, t = theta_hat(s), s.theta
        dA = np.linalg.det(s.Abar)
        th_err = max(th_err, abs(t / th - dA / np.linalg.det(s.A1)),
                     abs((1 - t) / (1 - th) - dA / np.linalg.det(s.A2)))
        p = bilayer_profile(s)
        th_err = max(th_err, abs(p.widths[0] - th))
        mean_err = max(mean_err, abs(p.mean(p.mu) - (t * s.mu1 + (1 - t) * s.mu2)),
                       abs(p.mean(p.lam) - (t * s.lam1 + (1 - t) * s.lam2)))
    return th_err, mean_err


def random_rotation(rng, d: int = 3) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def nonlinear_property_errors(rng, n_frame: int = 1000, n_grad: int = 100):
    """Frame indifference, finite-difference gradient and rest-state errors of the energy."""
    fi = 0.0
    for _ in range(n_frame):
        lam, mu = rng.uniform(0.1, 3.0, 2)
        F = rng.standard_normal((3, 3))
        R = random_rotation(rng)
        diff = abs(float(svk_energy(lam, mu, R @ F) - svk_energy(lam, mu, F)))
        fi = max(fi, diff / (1 + np.sum(F * F) ** 2))
    gr = 0.0
    step = 1e-6
    for _ in range(n_grad):
        lam, mu = rng.uniform(0.1, 3.0, 2)
        F = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
        P = svk_stress(lam, mu, F)
        fd = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                E = np.zeros((3, 3))
                E[i, j] = step
                fd[i, j] = (svk_energy(lam, mu, F + E) - svk_energy(lam, mu, F - E)) / (2 * step)
        gr = max(gr, float(np.linalg.norm(fd - P) / max(np.linalg.norm(P), 1e-12)))
    spec = BilayerSpec(0.5, 1.0, 1.0, 2.0, 2.0, np.diag([1.1, 0.9, 1.0]), np.array([0.2, 0.1, 0.0]))
    cell = bilayer_cell(spec, 4)
    W = PrestrainedEnergy(cell, 0.05)
    R = random_rotation(rng)
    rest = float(np.abs(W.value(R @ W.Ah)).max())
    return fi, gr, rest


def run_suite(N: int = 16, fault: str | None = None, criteria=None, threads: int = 1,
              seed: int = 0, echo: Callable[[str], None] | None = None) -> list[CheckResult]:
    suite = Suite(N, fault, threads, seed)
    out = []
    for k in sorted(criteria or CHECKS):
        name, fn = CHECKS[k]
        measured: dict = {}
        t0 = time.perf_counter()
        failures = fn(suite, measured)
        r = CheckResult(k, name, not failures, measured, time.perf_counter() - t0, failures)
        if echo is not None:
            echo(r.line())
        out.append(r)
    return out
