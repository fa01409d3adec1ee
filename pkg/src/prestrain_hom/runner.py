"""Command implementations shared by the command-line front end and the verify suite.

Each function takes an already validated configuration dictionary and
returns a plain document (JSON-ready dict or CSV text); no file or
process handling happens here.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import build_sym_basis
from .cellsolver import RTOL, assemble_effective
from .errors import ConfigError, UnsupportedDimension
from .laminate import sweep, sweep_csv
from .macroscale import (DEFAULT_DG, MacroProblem, gamma_diagram_report, recovery_field,
                         solve_lin_eps, solve_lin_hom, write_field)
from .microstructure import (MicrostructureCell, appendix_laminate_sfj, build_cell,
                             cell_from_json, make_checkerboard_sfj, make_single_material_sfj,
                             make_smooth_sfj, validate_sfj)
from .nonlinear import expansion_check, polar_check

# builtin names accepted in addition to the families of ``build_cell``
ALIASES = {"bilayer-fig2": "bilayer"}
FAMILIES = ["homogeneous", "bilayer", "bilayer-fig2", "abeta", "laminate_a", "checkerboard",
            "smooth", "single_material"]
JOINTS = {
    "laminate_a": appendix_laminate_sfj,
    "checkerboard": make_checkerboard_sfj,
    "smooth": make_smooth_sfj,
    "single_material": make_single_material_sfj,
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def provenance(config: dict) -> dict:
    return {"config_digest": config_digest(config), "tool_version": __version__}


def dump_json(doc: dict) -> str:
    """Deterministic serialisation: sorted keys, fixed indentation, repr floats."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n"


def load_cell(spec: dict, base: Path | None = None) -> MicrostructureCell:
    """Cell from ``{"family", "dim", "N", "params"}`` or ``{"file": path}``."""
    if "file" in spec:
        path = Path(spec["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read cell file {path}: {exc}") from exc
        return cell_from_json(data)
    family = ALIASES.get(spec["family"], spec["family"])
    return build_cell(family, int(spec.get("dim", 3)), int(spec.get("N", 8)),
                      dict(spec.get("params", {})))


def homogenize(config: dict, threads: int = 1, base: Path | None = None) -> dict:
    cell = load_cell(config["cell"], base)
    eff = assemble_effective(cell, config.get("rtol", RTOL), threads=threads,
                             maxiter=config.get("maxiter"))
    doc = eff.to_json()
    doc["cell"] = {"family": cell.family, "dim": cell.dim, "N": cell.N}
    doc["Bcoeffs"] = np.linalg.solve(eff.Qmat, eff.bvec).tolist()
    doc["provenance"] = provenance(config)
    return doc


def sweep_values(config: dict) -> np.ndarray:
    if "values" in config:
        return np.asarray(config["values"], dtype=float)
    r = config["range"]
    start, stop = float(r["start"]), float(r["stop"])
    if "num" in r:
        num = int(r["num"])
    else:
        step = float(r["step"])
        if step <= 0:
            raise ConfigError("range step must be positive")
        num = int(round((stop - start) / step)) + 1
    if stop < start or num < 1:
        raise ConfigError(f"empty or reversed range {start}..{stop}")
    return np.linspace(start, stop, num)


def laminate_sweep(config: dict) -> str:
    """CSV text of the closed-form coefficients, preceded by one provenance comment."""
    rows = sweep(config["family"], sweep_values(config), config.get("fixed"))
    p = provenance(config)
    head = f"# config_digest={p['config_digest']} tool_version={p['tool_version']}\n"
    return head + sweep_csv(rows)


def _load_matrix(config: dict, d: int) -> np.ndarray:
    if "G" in config:
        G = np.asarray(config["G"], dtype=float)
        if G.shape != (d, d):
            raise ConfigError(f"G must be {d}x{d}")
        return G
    i = int(config.get("G_index", 2))
    basis = build_sym_basis(d)
    if not 1 <= i <= basis.size:
        raise ConfigError(f"G_index must lie in 1..{basis.size}")
    return basis.matrices[i - 1]


def expand_check(config: dict, threads: int = 1, base: Path | None = None) -> dict:
    cell = load_cell(config["cell"], base)
    eff = assemble_effective(cell, threads=threads)
    G = _load_matrix(config, cell.dim)
    h_list = config.get("h_list", [1e-1, 5e-2, 2.5e-2, 1.25e-2])
    report = expansion_check(cell, G, h_list, eff, init=config.get("init", "linear"))
    doc = {"expansion": report, "Bhom": eff.Bhom.tolist(), "Rres": eff.Rres}
    if config.get("polar_h") is not None:
        doc["polar"] = polar_check(cell, float(config["polar_h"]), eff)
    doc["provenance"] = provenance(config)
    return doc


def macro_diagram(config: dict, base: Path | None = None) -> dict:
    cell = load_cell(config["cell"], base)
    if cell.dim != 2:
        raise UnsupportedDimension("the macroscopic comparison is two-dimensional")
    Dg = np.asarray(config.get("Dg", DEFAULT_DG), dtype=float)
    gamma = config.get("gamma", "left")
    eps_list = config.get("eps_list", [1 / 4, 1 / 8, 1 / 16])
    doc = gamma_diagram_report(cell, eps_list, Dg, gamma, config.get("rtol", RTOL))
    dump = config.get("dump_dir")
    if dump:
        out = Path(dump)
        if base is not None and not out.is_absolute():
            out = base / out
        out.mkdir(parents=True, exist_ok=True)
        eff = assemble_effective(cell, keep_correctors=True)
        prob = MacroProblem(cell, eps_list[-1], gamma, Dg)
        se, sh = solve_lin_eps(prob), solve_lin_hom(prob, eff)
        write_field(out / "u_eps.phfd", se.u)
        write_field(out / "u_hom.phfd", sh.u)
        write_field(out / "u_recovery.phfd", recovery_field(prob, sh, eff))
        doc["fields"] = ["u_eps.phfd", "u_hom.phfd", "u_recovery.phfd"]
    doc["provenance"] = provenance(config)
    return doc


def validate_joints(config: dict) -> dict:
    names = config.get("joints", sorted(JOINTS))
    N = int(config.get("N", 16))
    tol = float(config.get("tol", 1e-12))
    reports = {n: validate_sfj(JOINTS[n](), N, tol).to_json() for n in names}
    return {"reports": reports, "passed": all(r["passed"] for r in reports.values()),
            "provenance": provenance(config)}
