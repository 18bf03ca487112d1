# %% [markdown]
# # Condition numbers of the preconditioned system
#
# The perturbed Stokes operator ``[[M + eps^2 K, B^T], [B, 0]]`` is
# preconditioned by ``diag((M + eps^2 K)^{-1}, K_p^+ + eps^2 M_p^{-1})``.
# Its condition number stays bounded in both ``eps`` and ``h``.

# %%
from stokes_precond import build_mesh, build_saddle, condition_number

EPS = (1.0, 0.1, 0.01)
LEVELS = (2, 3, 4)

for element in ("taylor_hood", "mini"):
    for domain in ("square", "lshape", "slit"):
        print(f"\n{element}, {domain}")
        print("eps \\ h " + "".join(f"{2.0 ** -l:>9.4f}" for l in LEVELS))
        for eps in EPS:
            row = []
            for level in LEVELS:
                system = build_saddle(eps, build_mesh(domain, level), element)
                row.append(condition_number(system))
            print(f"{eps:<8g}" + "".join(f"{k:9.2f}" for k in row))

# %% [markdown]
# The default reduction uses the Schur complement; the dense congruence
# and a Lanczos iteration on the full block operator give the same value.

# %%
system = build_saddle(0.1, build_mesh("lshape", 2), "mini")
for method in ("schur", "dense", "lanczos"):
    print(f"{method:8s} {condition_number(system, method=method):.10f}")
