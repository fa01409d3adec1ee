"""Oscillating versus homogenised plate energies in two dimensions.

A unit square made of eps-periodic bilayer cells is clamped on the left
edge with a small affine displacement.  As eps shrinks, the minimal energy
of the oscillating problem approaches that of the homogenised problem, and
the unfolded strain approaches the two-scale limit built from the cell
correctors.  A coarse cell keeps this quick; the acceptance run uses N = 8.
"""
from prestrain_hom import build_cell, gamma_diagram_report

cell = build_cell("bilayer", 2, 4, {})
rep = gamma_diagram_report(cell, [1 / 2, 1 / 4, 1 / 8])
print(f"homogenised prestrain {rep['Bhom']}, residual energy {rep['Rres']:.6f}")
print(f"{'eps':>7} {'E_eps':>10} {'E_hom':>10} {'gap':>9} {'unfold':>9}")
for eps, ee, eh, g, u in zip(rep["epsilons"], rep["energies_eps"], rep["energies_hom"],
                             rep["gaps"], rep["unfold_gaps"]):
    print(f"{eps:7.4f} {ee:10.6f} {eh:10.6f} {g:9.5f} {u:9.5f}")
