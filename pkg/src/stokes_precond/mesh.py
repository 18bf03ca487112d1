"""
Structured triangulations of the three benchmark domains.

All meshes are uniform right-triangle grids on the unit square with grid
step ``1/n``, ``n = 2**level``.  Each grid square is split along its
lower-left to upper-right diagonal.  The L-shaped domain removes the upper
right quarter, and the slit domain cuts the segment from (1/2, 1/2) to
(1, 1/2) by duplicating the vertices strictly to the right of the tip.
"""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

DOMAINS = ("square", "lshape", "slit")

INTERIOR, ONE_BOUNDARY_EDGE, TWO_BOUNDARY_EDGES = 0, 1, 2


class MeshError(ValueError):
    """Raised for meshes that violate a structural assumption."""


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulation with edge connectivity and boundary classification.

    Attributes
    ----------
    vertices : (nv, 2) float array
    grid : (nv, 2) int array
        Integer grid coordinates; ``vertices == grid / n`` exactly.
    triangles : (nt, 3) int array, counterclockwise
    edges : (ne, 2) int array, ``edges[:, 0] < edges[:, 1]``
    tri_edges : (nt, 3) int array
        ``tri_edges[t, k]`` is the edge opposite local vertex ``k``.
    edge_tris : (ne, 2) int array
        Adjacent triangles, ``-1`` in the second slot for boundary edges.
    """

    domain: str
    level: int
    n: int
    vertices: np.ndarray
    grid: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    edge_tris: np.ndarray
    edge_kind: np.ndarray = field(repr=False)
    tri_kind: np.ndarray = field(repr=False)
    tri_area: np.ndarray = field(repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def boundary_edge(self):
        return self.edge_kind == 1

    @property
    def boundary_vertex(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edge].ravel()] = True
        return mask

    @property
    def h(self):
        return float(self.tri_diameter.max())

    @property
    def tri_diameter(self):
        p = self.vertices[self.triangles]
        d = np.stack([np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
                      np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
                      np.linalg.norm(p[:, 0] - p[:, 1], axis=1)], axis=1)
        return d.max(axis=1)

    @property
    def edge_length(self):
        v = self.vertices
        return np.linalg.norm(v[self.edges[:, 1]] - v[self.edges[:, 0]], axis=1)

    @property
    def area(self):
        return float(self.tri_area.sum())

    def exact_vertex(self, i):
        """Vertex ``i`` as a pair of Fractions."""
        return (Fraction(int(self.grid[i, 0]), self.n),
                Fraction(int(self.grid[i, 1]), self.n))

    def exact_area(self, t):
        a, b, c = (self.exact_vertex(i) for i in self.triangles[t])
        return ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) / 2

    def edge_id(self, i, j):
        key = (min(i, j), max(i, j))
        return self._edge_lookup[key]

    @property
    def _edge_lookup(self):
        cache = self.__dict__.get("_edge_lookup_cache")
        if cache is None:
            cache = {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}
            object.__setattr__(self, "_edge_lookup_cache", cache)
        return cache


def build_mesh(domain, level):
    """Uniform triangulation of ``domain`` with ``2**level`` cells per side."""
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    level = int(level)
    if level < 1:
        raise ValueError("level must be >= 1 (level 0 has no interior pressure dof)")
    n = 2 ** level
    half = n // 2

    def keep_cell(i, j):
        if domain == "lshape":
            return not (i >= half and j >= half)
        return True

    # key: (gx, gy, side); side=1 marks the copy above the slit
    def vkey(gx, gy, above):
        if domain == "slit" and gy == half and gx > half and above:
            return (gx, gy, 1)
        return (gx, gy, 0)

    tri_keys = []
    for j in range(n):
        for i in range(n):
            if not keep_cell(i, j):
                continue
            above = j >= half
            ll = vkey(i, j, above)
            lr = vkey(i + 1, j, above)
            ur = vkey(i + 1, j + 1, above)
            ul = vkey(i, j + 1, above)
            tri_keys.append((ll, lr, ur))
            tri_keys.append((ll, ur, ul))

    keys = sorted({k for t in tri_keys for k in t})
    index = {k: m for m, k in enumerate(keys)}
    grid = np.array([(k[0], k[1]) for k in keys], dtype=np.int64)
    vertices = grid / float(n)
    triangles = np.array([[index[k] for k in t] for t in tri_keys], dtype=np.int64)
    # deterministic triangle order: by sorted vertex tuple
    order = np.lexsort(np.sort(triangles, axis=1).T[::-1])
    triangles = triangles[order]
    return _finalize(domain, level, n, vertices, grid, triangles)


def _finalize(domain, level, n, vertices, grid, triangles):
    nt = len(triangles)
    local = [(1, 2), (2, 0), (0, 1)]
    edge_index = {}
    edges = []
    tri_edges = np.empty((nt, 3), dtype=np.int64)
    incidence = []
    for t, tri in enumerate(triangles):
        for k, (a, b) in enumerate(local):
            i, j = int(tri[a]), int(tri[b])
            key = (min(i, j), max(i, j))
            if key not in edge_index:
                edge_index[key] = None
                edges.append(key)
            incidence.append((key, t, k))
    edges.sort()
    for m, key in enumerate(edges):
        edge_index[key] = m
    edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
    for key, t, k in incidence:
        m = edge_index[key]
        tri_edges[t, k] = m
        if edge_tris[m, 0] < 0:
            edge_tris[m, 0] = t
        elif edge_tris[m, 1] < 0:
            edge_tris[m, 1] = t
        else:
            raise MeshError(f"edge {key} shared by more than two triangles")
    edges = np.array(edges, dtype=np.int64)
    edge_kind = (edge_tris[:, 1] < 0).astype(np.int8)
    tri_kind = edge_kind[tri_edges].sum(axis=1).astype(np.int8)

    p = vertices[triangles]
    tri_area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    if np.any(tri_area <= 0):
        raise MeshError("degenerate or clockwise triangle")
    if np.any(tri_kind == 3):
        raise MeshError("triangle with three boundary edges")
    return TriMesh(domain, level, n, vertices, grid, triangles, edges, tri_edges,
                   edge_tris, edge_kind, tri_kind, tri_area)


def check_invariants(mesh):
    """Raise ``MeshError`` if any structural invariant fails."""
    counts = np.bincount(mesh.edge_tris[mesh.edge_tris >= 0], minlength=0)
    if mesh.n_vertices - mesh.n_edges + mesh.n_triangles != 1:
        raise MeshError("Euler characteristic is not 1")
    if np.any(mesh.tri_area <= 0):
        raise MeshError("non-positive triangle area")
    if not np.array_equal(mesh.tri_kind, mesh.edge_kind[mesh.tri_edges].sum(axis=1)):
        raise MeshError("tri_kind inconsistent with boundary edges")
    if np.any(counts != 3):
        raise MeshError("edge incidence inconsistent")


@dataclass(frozen=True)
class Classification:
    """Triangle and edge partitions used by the Fortin constructions."""

    interior_tris: np.ndarray
    boundary1_tris: np.ndarray
    boundary2_tris: np.ndarray
    interior_edges: np.ndarray
    boundary_edges: np.ndarray
    interior_edges_1: np.ndarray
    interior_edges_2: np.ndarray

    @property
    def boundary_tris(self):
        return np.sort(np.concatenate([self.boundary1_tris, self.boundary2_tris]))


def classify(mesh):
    kind = mesh.tri_kind
    if np.any(kind > 2):
        raise MeshError("triangle with three boundary edges")
    b2 = np.flatnonzero(kind == TWO_BOUNDARY_EDGES)
    interior_edges = np.flatnonzero(mesh.edge_kind == 0)
    e2 = []
    for t in b2:
        inner = [e for e in mesh.tri_edges[t] if mesh.edge_kind[e] == 0]
        e2.append(inner[0])
    e2 = np.array(sorted(e2), dtype=np.int64)
    if len(set(e2.tolist())) != len(e2):
        raise MeshError("interior edge shared by two corner triangles")
    return Classification(
        interior_tris=np.flatnonzero(kind == INTERIOR),
        boundary1_tris=np.flatnonzero(kind == ONE_BOUNDARY_EDGE),
        boundary2_tris=b2,
        interior_edges=interior_edges,
        boundary_edges=np.flatnonzero(mesh.edge_kind == 1),
        interior_edges_1=np.setdiff1d(interior_edges, e2),
        interior_edges_2=e2,
    )


@dataclass(frozen=True)
class Macroelement:
    """A corner triangle ``T`` joined with its interior neighbour ``T^-``.

    Vertex labels: ``x1, x2`` span the shared edge, ``x0`` is the remaining
    vertex of ``T`` and ``x3`` the remaining vertex of ``T^-``.
    """

    boundary_tri: int
    partner_tri: int
    shared_edge: int
    vertex_ids: tuple  # (x0, x1, x2, x3)
    hat_x0: np.ndarray


def macroelements(mesh, cls=None):
    cls = classify(mesh) if cls is None else cls
    out = []
    for t in cls.boundary2_tris:
        e = next(int(e) for e in mesh.tri_edges[t] if mesh.edge_kind[e] == 0)
        a, b = mesh.edge_tris[e]
        partner = int(b if a == t else a)
        if mesh.tri_kind[partner] != INTERIOR:
            raise MeshError(
                f"assumption violated: partner of corner triangle {t} is a boundary triangle")
        x1, x2 = (int(v) for v in mesh.edges[e])
        x0 = int(next(v for v in mesh.triangles[t] if v not in (x1, x2)))
        x3 = int(next(v for v in mesh.triangles[partner] if v not in (x1, x2)))
        v = mesh.vertices
        out.append(Macroelement(int(t), partner, e, (x0, x1, x2, x3),
                                v[x1] + v[x2] - v[x3]))
    return out


def barycentric(points, tri_vertices):
    """Barycentric coordinates of ``points`` (m, 2) w.r.t. a triangle (3, 2),
    extended affinely to the whole plane."""
    p0, p1, p2 = np.asarray(tri_vertices, dtype=float)
    mat = np.array([[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]])
    rhs = np.atleast_2d(points) - p0
    l12 = np.linalg.solve(mat, rhs.T).T
    return np.column_stack([1.0 - l12.sum(axis=1), l12])


def shape_metrics(mesh, macros=None):
    """Shape-regularity constants: gamma0, gamma1 and the corner constant alpha."""
    diam = mesh.tri_diameter
    if np.any(mesh.tri_area <= 0):
        raise MeshError("degenerate triangle")
    gamma0 = float(np.max(diam ** 2 / mesh.tri_area))
    gamma1 = float(np.min(diam) / mesh.h)
    macros = macroelements(mesh) if macros is None else macros
    alphas = []
    for me in macros:
        x0, x1, x2, _ = me.vertex_ids
        tri = mesh.vertices[[x0, x1, x2]]
        lam = barycentric(me.hat_x0, tri)[0]
        alphas.append(1.0 - lam[1] - lam[2])
    alpha_min = float(min(alphas)) if alphas else float("nan")
    return {"gamma0": gamma0, "gamma1": gamma1, "alpha_min": alpha_min}


def export_mesh(mesh, fh):
    """Write the plain-text mesh format: ``v x y``, ``t i j k``, ``e i j kind``."""
    for x, y in mesh.vertices:
        fh.write(f"v {float(x)!r} {float(y)!r}\n")
    for i, j, k in mesh.triangles:
        fh.write(f"t {i} {j} {k}\n")
    for (i, j), kind in zip(mesh.edges, mesh.edge_kind):
        fh.write(f"e {i} {j} {'boundary' if kind else 'interior'}\n")
