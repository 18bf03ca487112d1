"""
Global finite element spaces and degree-of-freedom maps.

Node-based spaces number vector dofs component-major:
``dof = component * n_nodes + node``.  Subspaces that are not node based
(edge bubbles, the constrained Nedelec space) carry a sparse ``basis`` whose
columns express each basis function in a parent coefficient space.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import MeshError, classify, macroelements

KINDS = ("P1_scalar", "P1_vec", "P2_vec", "mini_vec", "mini_bubble_vec",
         "th_edge_bubble", "nedelec", "nedelec_z0")


@dataclass(frozen=True, eq=False)
class FeSpace:
    kind: str
    mesh: object
    n_nodes: int
    ncomp: int
    cell_nodes: np.ndarray = None
    dirichlet: np.ndarray = None
    basis: sp.csr_matrix = None

    @property
    def n_dofs(self):
        return self.n_nodes * self.ncomp

    @property
    def free(self):
        if self.dirichlet is None:
            return np.arange(self.n_dofs)
        return np.flatnonzero(~self.dirichlet)

    @property
    def dim(self):
        if self.basis is not None:
            return self.basis.shape[1]
        return len(self.free)

    def cell_dofs(self, comp=0):
        return comp * self.n_nodes + self.cell_nodes

    def restrict(self, full):
        """Free-dof subvector of a full coefficient vector."""
        return np.asarray(full)[..., self.free]

    def extend(self, reduced):
        out = np.zeros(reduced.shape[:-1] + (self.n_dofs,))
        out[..., self.free] = reduced
        return out


def edge_signs(mesh):
    """``sign[t, k] = +1`` when the global orientation (low to high vertex
    index) of the edge opposite local vertex ``k`` agrees with the
    counterclockwise traversal of triangle ``t``."""
    tri = mesh.triangles
    a = tri[:, [1, 2, 0]]
    b = tri[:, [2, 0, 1]]
    return np.where(a < b, 1, -1)


def vertex_identification(mesh):
    """Map merging vertices that share a location (the two slit sides)."""
    _, inverse = np.unique(mesh.grid, axis=0, return_inverse=True)
    return inverse.ravel()


def build_space(kind, mesh, slit_pressure="cut"):
    """Build a space of the given kind.

    ``slit_pressure="continuous"`` makes the ``P1_scalar`` space continuous
    across the slit by identifying duplicated vertices; it has no effect on
    meshes without duplicated vertices.
    """
    nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    bv = mesh.boundary_vertex
    be = mesh.boundary_edge
    if kind == "P1_scalar":
        if slit_pressure == "continuous":
            ident = vertex_identification(mesh)
            nn = int(ident.max()) + 1
            return FeSpace(kind, mesh, nn, 1, ident[mesh.triangles], np.zeros(nn, dtype=bool))
        if slit_pressure != "cut":
            raise ValueError("slit_pressure must be 'cut' or 'continuous'")
        return FeSpace(kind, mesh, nv, 1, mesh.triangles.copy(), np.zeros(nv, dtype=bool))
    if kind == "P1_vec":
        return FeSpace(kind, mesh, nv, 2, mesh.triangles.copy(), np.tile(bv, 2))
    if kind == "P2_vec":
        nodes = np.hstack([mesh.triangles, nv + mesh.tri_edges])
        return FeSpace(kind, mesh, nv + ne, 2, nodes, np.tile(np.concatenate([bv, be]), 2))
    if kind == "mini_vec":
        nodes = np.hstack([mesh.triangles, nv + np.arange(nt)[:, None]])
        return FeSpace(kind, mesh, nv + nt, 2, nodes,
                       np.tile(np.concatenate([bv, np.zeros(nt, dtype=bool)]), 2))
    if kind == "mini_bubble_vec":
        return FeSpace(kind, mesh, nt, 2, np.arange(nt)[:, None], np.zeros(2 * nt, dtype=bool))
    if kind == "nedelec":
        return FeSpace(kind, mesh, ne, 1, mesh.tri_edges.copy(), np.zeros(ne, dtype=bool))
    if kind == "th_edge_bubble":
        return FeSpace(kind, mesh, nv + ne, 2, basis=edge_bubble_basis(mesh))
    if kind == "nedelec_z0":
        macroelements(mesh)  # raises when a corner partner is not interior
        return FeSpace(kind, mesh, ne, 1, mesh.tri_edges.copy(), basis=z0_basis(mesh))
    raise ValueError(f"unknown space kind {kind!r}; expected one of {KINDS}")


def edge_tangents(mesh):
    v = mesh.vertices
    return v[mesh.edges[:, 1]] - v[mesh.edges[:, 0]]


def edge_bubble_vectors(mesh, cls=None):
    """Vectors ``w`` of the bubble basis ``6 l_i l_j w``: the edge tangent for
    every interior edge, then the rotated tangent (normal) for each edge
    shared by a corner triangle and its partner."""
    cls = classify(mesh) if cls is None else cls
    t = edge_tangents(mesh)
    edges = np.concatenate([cls.interior_edges, cls.interior_edges_2])
    w = np.vstack([t[cls.interior_edges],
                   np.column_stack([-t[cls.interior_edges_2, 1], t[cls.interior_edges_2, 0]])])
    return edges, w


def edge_bubble_basis(mesh, cls=None):
    """Columns are edge bubbles expressed in total ``P2_vec`` coefficients.

    ``6 l_i l_j w`` is a quadratic that vanishes at every P2 node except the
    midpoint of its edge, where it equals ``1.5 w``.
    """
    edges, w = edge_bubble_vectors(mesh, cls)
    nn = mesh.n_vertices + mesh.n_edges
    cols = np.arange(len(edges))
    rows = np.concatenate([mesh.n_vertices + edges, nn + mesh.n_vertices + edges])
    vals = 1.5 * np.concatenate([w[:, 0], w[:, 1]])
    return sp.csr_matrix((vals, (rows, np.concatenate([cols, cols]))), shape=(2 * nn, len(edges)))


def z0_basis(mesh, cls=None):
    """Basis of the Nedelec subspace with zero curl on boundary triangles.

    One column per interior edge (its Whitney form, corrected on adjacent
    boundary triangles) followed by one column per corner triangle (the
    circulation-free combination of its two boundary edges).  Rows are
    global Whitney coefficients with low-to-high edge orientation.
    """
    cls = classify(mesh) if cls is None else cls
    sign = edge_signs(mesh)
    kind = mesh.edge_kind
    rows, cols, vals = [], [], []

    def local(t, e):
        return int(np.flatnonzero(mesh.tri_edges[t] == e)[0])

    def bnd_edges(t):
        return [int(e) for e in mesh.tri_edges[t] if kind[e] == 1]

    for col, e in enumerate(cls.interior_edges):
        rows.append(e)
        cols.append(col)
        vals.append(1.0)
        for t in mesh.edge_tris[e]:
            if mesh.tri_kind[t] == 0:
                continue
            b = bnd_edges(t)[0]
            rows.append(b)
            cols.append(col)
            vals.append(-float(sign[t, local(t, e)] * sign[t, local(t, b)]))
    offset = len(cls.interior_edges)
    for m, t in enumerate(cls.boundary2_tris):
        b1, b2 = bnd_edges(t)
        rows += [b1, b2]
        cols += [offset + m, offset + m]
        vals += [float(sign[t, local(t, b1)]), -float(sign[t, local(t, b2)])]
    shape = (mesh.n_edges, offset + len(cls.boundary2_tris))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)


def z0_boundary_coeffs(mesh, interior_coeffs, corner_coeffs=None, cls=None):
    """Full Whitney coefficient vector of the Z0 field with the given
    interior-edge coefficients (and corner parameters, default zero)."""
    cls = classify(mesh) if cls is None else cls
    a = np.asarray(interior_coeffs, dtype=float)
    c = np.zeros(len(cls.boundary2_tris)) if corner_coeffs is None else np.asarray(corner_coeffs)
    return z0_basis(mesh, cls) @ np.concatenate([a, c])


def circulation(mesh, coeffs):
    """Boundary circulation of each triangle for Whitney coefficients."""
    return (edge_signs(mesh) * np.asarray(coeffs)[mesh.tri_edges]).sum(axis=1)


def gradient_coeffs(mesh):
    """Sparse map from nodal P1 values to Whitney coefficients of the gradient:
    ``q(x_j) - q(x_i)`` on the edge ``(x_i, x_j)``, ``i < j``."""
    ne = mesh.n_edges
    rows = np.repeat(np.arange(ne), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], ne)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, mesh.n_vertices))


def mean_zero_weights(space):
    """``m_i = int phi_i dx`` for the hat functions of a ``P1_scalar`` space."""
    if space.kind != "P1_scalar":
        raise ValueError("mean-zero weights need a P1_scalar space")
    m = np.zeros(space.n_nodes)
    np.add.at(m, space.cell_nodes.ravel(), np.repeat(space.mesh.tri_area / 3.0, 3))
    return m


def mean_zero_project(q, m):
    """Subtract the constant that makes ``m . q = 0``."""
    q = np.asarray(q, dtype=float)
    return q - (m @ q) / m.sum()


def mean_zero_projector(space):
    """Weights ``m`` and the projection ``q -> q - (m.q / m.1) 1``."""
    m = mean_zero_weights(space)
    return m, lambda q: mean_zero_project(q, m)


def dimension_identity(mesh):
    """``(dim V_h^b, dim Z_h^0)`` computed independently."""
    cls = classify(mesh)
    dim_vb = len(cls.interior_edges) + len(cls.interior_edges_2)
    # Z0 = kernel of the circulation constraints on boundary triangles
    bt = cls.boundary_tris
    rows = np.repeat(np.arange(len(bt)), 3)
    con = sp.csr_matrix((edge_signs(mesh)[bt].ravel().astype(float),
                         (rows, mesh.tri_edges[bt].ravel())), shape=(len(bt), mesh.n_edges))
    rank = np.linalg.matrix_rank(con.toarray()) if len(bt) else 0
    dim_z0 = int(mesh.n_edges - rank)
    return dim_vb, dim_z0


__all__ = ["FeSpace", "KINDS", "build_space", "MeshError", "edge_signs", "z0_basis",
           "z0_boundary_coeffs", "gradient_coeffs", "mean_zero_weights",
           "mean_zero_project", "mean_zero_projector", "edge_bubble_basis", "edge_bubble_vectors",
           "circulation", "dimension_identity"]
