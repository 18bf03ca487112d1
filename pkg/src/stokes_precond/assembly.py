"""
Global matrices for the perturbed Stokes system.

Element matrices come from exact barycentric reference tensors scaled by
the element geometry; no quadrature rule is involved.  Velocity matrices
are returned on free (non-Dirichlet) dofs only.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem_basis import reference_tensors
from .spaces import build_space

ELEMENTS = {"taylor_hood": "P2_vec", "mini": "mini_vec"}
_LOCAL = {"P1_scalar": "p1", "P1_vec": "p1", "P2_vec": "p2", "mini_vec": "mini"}


def element_geometry(mesh):
    """Barycentric gradients ``(nt, 3, 2)`` and areas ``(nt,)``."""
    p = mesh.vertices[mesh.triangles]
    det = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
           - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    grads = np.empty((len(p), 3, 2))
    for k in range(3):
        a, b = p[:, (k + 1) % 3], p[:, (k + 2) % 3]
        grads[:, k, 0] = (a[:, 1] - b[:, 1]) / det
        grads[:, k, 1] = (b[:, 0] - a[:, 0]) / det
    return grads, 0.5 * det


def _basis_scaling(space, area):
    """Per-element scaling of the local basis (the Mini bubble is normalized
    to unit integral)."""
    nloc = space.cell_nodes.shape[1]
    s = np.ones((len(area), nloc))
    if space.kind == "mini_vec":
        s[:, 3] = 60.0 / area
    return s


def _scatter(rows, cols, vals, shape):
    m = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
    return m.tocsr()


def local_matrices(space, kind):
    mesh = space.mesh
    grads, area = element_geometry(mesh)
    mass, stiff, div, _ = reference_tensors(_LOCAL[space.kind])
    s = _basis_scaling(space, area)
    ss = s[:, :, None] * s[:, None, :]
    if kind == "mass":
        return area[:, None, None] * mass[None] * ss
    if kind == "stiff":
        G = np.einsum("tkd,tld->tkl", grads, grads)
        return area[:, None, None] * np.einsum("tkl,abkl->tab", G, stiff) * ss
    raise ValueError(kind)


def scalar_matrix(space, kind):
    """Scalar ``mass`` or ``stiff`` matrix on all nodes of ``space``."""
    loc = local_matrices(space, kind)
    nodes = space.cell_nodes
    rows = np.broadcast_to(nodes[:, :, None], loc.shape)
    cols = np.broadcast_to(nodes[:, None, :], loc.shape)
    return _scatter(rows, cols, loc, (space.n_nodes, space.n_nodes))


def _restrict(mat, space):
    free = space.free
    return mat[free][:, free].tocsr()


def assemble(kind, space, pressure_space=None):
    """Assemble one of ``mass_v, stiff_v, div, mass_p, stiff_p``.

    ``div`` has pressure rows and free velocity columns and represents
    ``<div v, q>``.
    """
    if kind in ("mass_v", "stiff_v"):
        if space.ncomp != 2:
            raise ValueError("velocity matrix requested on a scalar space")
        scalar = scalar_matrix(space, kind.split("_")[0])
        return _restrict(sp.block_diag([scalar, scalar]).tocsr(), space)
    if kind in ("mass_p", "stiff_p"):
        if space.kind != "P1_scalar":
            raise ValueError("pressure matrices need a P1_scalar space")
        return scalar_matrix(space, kind.split("_")[0])
    if kind == "div":
        if pressure_space is None or pressure_space.mesh is not space.mesh:
            raise ValueError("div needs a pressure space on the same mesh")
        return divergence(space, pressure_space)
    raise ValueError(f"unknown matrix kind {kind!r}")


def divergence(space, pressure_space):
    mesh = space.mesh
    grads, area = element_geometry(mesh)
    _, _, div, _ = reference_tensors(_LOCAL[space.kind])
    s = _basis_scaling(space, area)
    blocks = []
    for d in range(2):
        # loc[t, q, a] = int d_d phi_a * lambda_q
        loc = area[:, None, None] * np.einsum("tk,akq->tqa", grads[:, :, d], div) * s[:, None, :]
        rows = np.broadcast_to(pressure_space.cell_nodes[:, :, None], loc.shape)
        cols = np.broadcast_to(space.cell_dofs(d)[:, None, :], loc.shape)
        blocks.append(_scatter(rows, cols, loc, (pressure_space.n_nodes, space.n_dofs)))
    full = (blocks[0] + blocks[1]).tocsc()
    return full[:, space.free].tocsr()


def interpolate(space, func):
    """Nodal interpolant (all dofs) of a vector field ``func(x) -> (m, 2)``."""
    mesh = space.mesh
    if space.kind == "P2_vec":
        pts = np.vstack([mesh.vertices, mesh.vertices[mesh.edges].mean(axis=1)])
    elif space.kind == "P1_vec":
        pts = mesh.vertices
    else:
        raise ValueError(f"interpolation not provided for {space.kind}")
    vals = np.asarray(func(pts), dtype=float)
    return np.concatenate([vals[:, 0], vals[:, 1]])


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """Blocks of ``[[M + eps^2 K, B^T], [B, 0]]`` on free velocity dofs."""

    M: sp.csr_matrix
    K: sp.csr_matrix
    B: sp.csr_matrix
    Mp: sp.csr_matrix
    Kp: sp.csr_matrix
    eps: float
    velocity: object
    pressure: object

    @property
    def null_vec(self):
        nv, npr = self.M.shape[0], self.B.shape[0]
        return np.concatenate([np.zeros(nv), np.ones(npr)])

    @property
    def n_velocity(self):
        return self.M.shape[0]

    @property
    def n_pressure(self):
        return self.B.shape[0]

    @property
    def velocity_block(self):
        return (self.M + self.eps ** 2 * self.K).tocsr()

    @property
    def pressure_weights(self):
        return np.asarray(self.Mp.sum(axis=1)).ravel()

    def matrix(self):
        return sp.bmat([[self.velocity_block, self.B.T], [self.B, None]]).tocsr()

    def with_eps(self, eps):
        _check_eps(eps)
        return SaddleSystem(self.M, self.K, self.B, self.Mp, self.Kp, float(eps),
                            self.velocity, self.pressure)


def _check_eps(eps):
    if not eps > 0:
        raise ValueError("eps must be positive")


def build_saddle(eps, mesh, element="taylor_hood", slit_pressure="continuous"):
    """Discrete operator for ``(I - eps^2 Laplace) u - grad p = f, div u = g``.

    On the slit domain the pressure is continuous across the slit unless
    ``slit_pressure="cut"``; the velocity vanishes on both slit sides either
    way.
    """
    _check_eps(eps)
    if element not in ELEMENTS:
        raise ValueError(f"unknown element {element!r}; expected one of {tuple(ELEMENTS)}")
    V = build_space(ELEMENTS[element], mesh)
    Q = build_space("P1_scalar", mesh, slit_pressure=slit_pressure)
    return SaddleSystem(
        M=assemble("mass_v", V), K=assemble("stiff_v", V), B=assemble("div", V, Q),
        Mp=assemble("mass_p", Q), Kp=assemble("stiff_p", Q), eps=float(eps),
        velocity=V, pressure=Q)


def export_coo(mat, fh):
    """Write ``row col value`` lines for every stored entry."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
