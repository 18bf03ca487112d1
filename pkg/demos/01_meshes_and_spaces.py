# %% [markdown]
# # Meshes and finite element spaces
#
# Three benchmark domains on uniform right-triangle grids: the unit square,
# the L-shaped domain and the slit domain.  The slit duplicates the
# vertices on the cut so the velocity can vanish on both sides.

# %%
import numpy as np

from stokes_precond import build_mesh, build_space, classify, macroelements
from stokes_precond.spaces import dimension_identity

for domain in ("square", "lshape", "slit"):
    mesh = build_mesh(domain, 2)
    cls = classify(mesh)
    print(f"{domain:7s} V={mesh.n_vertices:3d} E={mesh.n_edges:3d} T={mesh.n_triangles:3d} "
          f"interior={len(cls.interior_tris)} one-edge={len(cls.boundary1_tris)} "
          f"corner={len(cls.boundary2_tris)}")

# %% [markdown]
# Corner triangles (two boundary edges) pair with their interior neighbour
# to form macroelements.  Each corner triangle adds one normal edge bubble
# and one circulation-free Nedelec field, so the two spaces stay equal in
# dimension.

# %%
mesh = build_mesh("square", 3)
for me in macroelements(mesh):
    print("corner", me.boundary_tri, "partner", me.partner_tri, "vertices", me.vertex_ids)
for level in (1, 2, 3, 4):
    print("level", level, "dim V_b, dim Z_0 =", dimension_identity(build_mesh("lshape", level)))

# %% [markdown]
# Degrees of freedom: velocity spaces keep Dirichlet dofs in a mask; the
# pressure space on the slit identifies the two copies of each slit vertex
# unless asked to keep them separate.

# %%
mesh = build_mesh("slit", 2)
for kind in ("P2_vec", "mini_vec", "P1_scalar"):
    V = build_space(kind, mesh)
    print(f"{kind:10s} total={V.n_dofs:4d} free={V.dim:4d}")
print("continuous slit pressure:",
      build_space("P1_scalar", mesh, slit_pressure="continuous").n_nodes, "nodes")
