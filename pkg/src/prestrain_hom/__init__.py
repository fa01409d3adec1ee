"""Homogenisation of prestrained elastic composites around stress-free joints.

The package computes effective stiffness, effective incremental prestrain
and residual energy for periodic voxel microstructures, with closed-form
laminate oracles, a nonlinear cell minimiser and a two-dimensional
macroscopic comparison.
"""
from .algebra import IsotropicModuli, SymBasis, build_sym_basis, lq_apply, q_value, sym
from .cellsolver import (EffectiveQuantities, assemble_effective, limit_energy, qhom_A,
                         qhom_eval, solve_corrector)
from .laminate import laminate_effective, sweep
from .microstructure import (BilayerSpec, MicrostructureCell, abeta_spec, bilayer_cell,
                             bilayer_profile, build_cell, hat_transform, homogeneous_cell,
                             theta_hat, validate_sfj)
from .nonlinear import cell_min_nonlinear, expansion_check, polar_check
from .macroscale import MacroProblem, gamma_diagram_report

__version__ = "0.1.0"

__all__ = [
    "BilayerSpec", "EffectiveQuantities", "IsotropicModuli", "MacroProblem",
    "MicrostructureCell", "SymBasis", "abeta_spec", "assemble_effective", "bilayer_cell",
    "bilayer_profile", "build_cell", "build_sym_basis", "cell_min_nonlinear",
    "expansion_check", "gamma_diagram_report", "hat_transform", "homogeneous_cell",
    "laminate_effective", "limit_energy", "lq_apply", "polar_check", "q_value", "qhom_A",
    "qhom_eval", "solve_corrector", "sweep", "sym", "theta_hat", "validate_sfj",
]
