"""Small-strain limit of the nonlinear cell energy.

For a prestrained bilayer the minimal nonlinear cell energy divided by h^2
approaches the homogenised quadratic energy plus the residual energy.  The
error should roughly halve with h.  The last block compares the stretch of
the optimal mean gradient with I + h B_hom.
"""
import numpy as np

from prestrain_hom import (BilayerSpec, assemble_effective, bilayer_cell, build_sym_basis,
                           expansion_check, polar_check)

cell = bilayer_cell(BilayerSpec(0.5, 1.0, 1.0, 2.0, 2.0), 4)
eff = assemble_effective(cell)
G = build_sym_basis(3).matrices[1]

rep = expansion_check(cell, G, [0.1, 0.05, 0.025, 0.0125], eff)
print(f"limit prediction {rep['limit_prediction']:.8f}")
for h, v, e in zip(rep["h_list"], rep["values"], rep["errors"]):
    print(f"  h = {h:<7} E/h^2 = {v:.8f}   error = {e:.3e}")
print("error ratios", np.round(rep["ratios"], 3))

pol = polar_check(cell, 0.0125, eff)
print(f"\npolar stretch deviation |U - (I + h B_hom)| / h = {pol['deviation']:.4f}")
