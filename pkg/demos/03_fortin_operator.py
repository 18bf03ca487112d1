# %% [markdown]
# # The Fortin operator
#
# ``Pi v = R v + bubble correction`` combines a Clement interpolant with a
# local bubble projection.  It maps fields from the refined mesh onto the
# coarse velocity space and commutes with the divergence when tested
# against coarse pressures.

# %%
from stokes_precond import build_mesh
from stokes_precond.fortin import (
    commuting_residual, fortin_operator, operator_norms, random_samples)

for element in ("mini", "taylor_hood"):
    fo = fortin_operator(build_mesh("lshape", 2), element)
    res = commuting_residual(fo, random_samples(fo, 20, seed=0))
    print(f"{element:12s} Pi: {fo.shape[1]} sample dofs -> {fo.shape[0]} velocity dofs, "
          f"max commuting residual {res.max():.2e}")

# %% [markdown]
# Operator norms in L2 and H1 settle as the mesh is refined, the discrete
# trace of uniform boundedness.

# %%
for element in ("mini", "taylor_hood"):
    for level in (1, 2, 3, 4):
        n = operator_norms(fortin_operator(build_mesh("square", level), element))
        print(f"{element:12s} level {level}: |Pi|_L2 = {n['L2']:.4f}  |Pi|_H1 = {n['H1']:.4f}")
