"""The four example stress-free joints and their compatibility checks.

Each joint is a periodic field of matrices that is the gradient of a
continuous map.  The validator reports the smallest determinant, how well
neighbouring affine pieces glue together, and the rank-one residual across
interfaces.
"""
from prestrain_hom.microstructure import (appendix_laminate_sfj, make_checkerboard_sfj,
                                          make_single_material_sfj, make_smooth_sfj, validate_sfj)

for make in (appendix_laminate_sfj, make_checkerboard_sfj, make_smooth_sfj, make_single_material_sfj):
    joint = make()
    rep = validate_sfj(joint, N=16)
    cont = "n/a" if rep.continuity is None else f"{rep.continuity:.1e}"
    print(f"{joint.name:16s} min det {rep.min_det:.4f}  continuity {cont}  "
          f"rank-one {rep.rank_one:.1e}  passed {rep.passed}")
    print("   mean gradient", rep.Abar.round(4).tolist())
