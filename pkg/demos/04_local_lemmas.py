# %% [markdown]
# # Exact local lemma checks
#
# The stability of the bubble-to-Nedelec pairing rests on small local
# matrices.  With dyadic vertex coordinates every entry is a rational
# number, so the identities hold exactly.

# %%
from fractions import Fraction

from stokes_precond import build_mesh, classify, macroelements
from stokes_precond.fortin import lemma_matrix, lemma_suite, macro_constants, orth_check

mesh = build_mesh("square", 2)
t = int(classify(mesh).interior_tris[0])
L = lemma_matrix("interior_M", mesh, t)
print("interior triangle, |T| =", mesh.exact_area(t))
for row in L.exact:
    print("  ", [str(x) for x in row])

# %% [markdown]
# On a macroelement the constant ``beta`` makes the modified bubbles
# orthogonal to the Whitney forms of the corner triangle; any other value
# breaks it.

# %%
me = macroelements(mesh)[0]
beta = macro_constants(mesh, me).beta
print("beta =", beta, " orthogonality defect:", orth_check(mesh, me))
print("beta + 1/10 defect:", orth_check(mesh, me, beta + Fraction(1, 10)))

# %%
checks = lemma_suite(build_mesh("slit", 3))
print(len(checks), "checks,", sum(c.ok for c in checks), "passed")
