# %% [markdown]
# # The discrete inf-sup constant in eps-dependent norms
#
# Velocities are measured in ``L2 cap eps H1_0`` and pressures in the sum
# space ``H1 + eps^{-1} L2``.  The constant ``alpha_h(eps)`` is the square
# root of the smallest eigenvalue of ``S q = alpha^2 N_eps q`` on
# mean-zero pressures.

# %%
import numpy as np

from stokes_precond import build_mesh, build_saddle
from stokes_precond.infsup import EpsNormContext, discrete_infsup, sum_norm
from stokes_precond.spaces import mean_zero_project

for element in ("taylor_hood", "mini"):
    for eps in (1.0, 0.1, 0.01):
        alphas = [discrete_infsup(eps, build_mesh("slit", l), element) for l in (1, 2, 3, 4)]
        print(f"{element:12s} eps={eps:<5g} alpha = " + " ".join(f"{a:.4f}" for a in alphas))

# %% [markdown]
# The sum norm interpolates between the H1 norm (small eps) and
# ``eps^{-1}`` times the L2 norm (large eps).

# %%
system = build_saddle(1.0, build_mesh("square", 3))
ctx = EpsNormContext.from_system(system)
q = mean_zero_project(np.random.default_rng(0).standard_normal(system.n_pressure), ctx.weights)
for eps in (1e-3, 0.1, 1.0, 10.0):
    print(f"eps={eps:<6g} |q| = {sum_norm(q, eps, ctx):.5f}")
print("H1 norm:", np.sqrt(q @ ctx.H @ q), " L2 norm:", np.sqrt(q @ ctx.Mp @ q))
