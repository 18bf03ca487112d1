"""
Fortin operators ``Pi = Pi_b (I - R) + R`` for the Mini and Taylor-Hood
elements, the maps between edge bubbles and Nedelec fields used in their
stability proof, and exact checks of the local matrices involved.

Operators act on the sample space: continuous P2 vector fields on the
once-refined mesh that vanish on the boundary.  Coarse discrete functions
restricted to a fine triangle are polynomials, so every pairing between
the two meshes is computed exactly from reference tensors.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import ELEMENTS, assemble, divergence, element_geometry, scalar_matrix
from .fem_basis import (LocalField, Triangle, edge_bubble, grad_lambda, local_gram,
                        reference_cross, reference_tensors, eval_basis, whitney)
from .mesh import MeshError, build_mesh, classify, macroelements
from .spaces import build_space, edge_bubble_basis, edge_signs, z0_basis

log = logging.getLogger(__name__)

_KIND = {"P1_scalar": "p1", "P1_vec": "p1", "P2_vec": "p2"}


class FortinError(np.linalg.LinAlgError):
    pass


# ---------------------------------------------------------------------------
# nested meshes

def _cell_keys(mesh, n):
    """Key of the coarse grid half-cell containing each triangle centroid."""
    c = mesh.vertices[mesh.triangles].mean(axis=1) * n
    ij = np.floor(c).astype(np.int64)
    frac = c - ij
    upper = (frac[:, 1] > frac[:, 0]).astype(np.int64)
    return (ij[:, 0] * n + ij[:, 1]) * 2 + upper


@dataclass(frozen=True, eq=False)
class Refinement:
    """A mesh and its uniform refinement.

    ``lam[t, a]`` holds the barycentric coordinates, in the parent triangle
    ``parent[t]``, of the local P2 node ``a`` of fine triangle ``t`` (three
    vertices, then the midpoints opposite them).
    """

    coarse: object
    fine: object
    parent: np.ndarray
    lam: np.ndarray


def refine(coarse):
    fine = build_mesh(coarse.domain, coarse.level + 1)
    kc = _cell_keys(coarse, coarse.n)
    kf = _cell_keys(fine, coarse.n)
    order = np.argsort(kc)
    pos = np.clip(np.searchsorted(kc[order], kf), 0, len(kc) - 1)
    parent = order[pos]
    if np.any(kc[parent] != kf):
        raise MeshError("meshes are not nested")
    P = coarse.vertices[coarse.triangles[parent]]
    X = fine.vertices[fine.triangles]
    mat = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)
    l12 = np.linalg.solve(mat[:, None], (X - P[:, None, 0])[..., None])[..., 0]
    lv = np.concatenate([1.0 - l12.sum(axis=2, keepdims=True), l12], axis=2)
    mids = np.stack([(lv[:, (k + 1) % 3] + lv[:, (k + 2) % 3]) / 2 for k in range(3)], axis=1)
    return Refinement(coarse, fine, parent, np.concatenate([lv, mids], axis=1))


def prolongation(ref, coarse_space, fine_space):
    """Nodal matrix (fine nodes x coarse nodes) embedding a continuous P1 or
    P2 space on the coarse mesh into a P1 or P2 space on the fine mesh."""
    nloc = fine_space.cell_nodes.shape[1]
    lam = ref.lam[:, :nloc]
    vals = eval_basis(_KIND[coarse_space.kind], lam.reshape(-1, 3))
    vals = vals.reshape(lam.shape[0], nloc, -1)
    fnodes = fine_space.cell_nodes.ravel()
    _, first = np.unique(fnodes, return_index=True)
    tri, loc = np.divmod(first, nloc)
    cols = coarse_space.cell_nodes[ref.parent[tri]]
    v = vals[tri, loc]
    rows = np.broadcast_to(np.arange(len(first))[:, None], v.shape)
    keep = np.abs(v) > 1e-14
    return sp.csr_matrix((v[keep], (rows[keep], cols[keep])),
                         shape=(fine_space.n_nodes, coarse_space.n_nodes))


def _vec(mat):
    return sp.block_diag([mat, mat]).tocsr()


# ---------------------------------------------------------------------------
# broken linear fields: index d * 3 nt + 3 t + k

def nedelec_to_broken(mesh):
    """Whitney coefficients -> vertex values of the field on each triangle."""
    grads, _ = element_geometry(mesh)
    sign = edge_signs(mesh)
    nt = mesh.n_triangles
    rows, cols, vals = [], [], []
    t = np.arange(nt)
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        e = mesh.tri_edges[:, k]
        s = sign[:, k]
        for d in range(2):
            # phi = l_i grad l_j - l_j grad l_i: grad l_j at x_i, -grad l_i at x_j
            rows += [d * 3 * nt + 3 * t + i, d * 3 * nt + 3 * t + j]
            cols += [e, e]
            vals += [s * grads[:, j, d], -s * grads[:, i, d]]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(6 * nt, mesh.n_edges))


def broken_prolongation(ref):
    """Coarse broken P1 values -> fine broken P1 values."""
    nf, nc = ref.fine.n_triangles, ref.coarse.n_triangles
    lam = ref.lam[:, :3]
    t = np.arange(nf)
    rows, cols, vals = [], [], []
    for d in range(2):
        for l in range(3):
            for k in range(3):
                rows.append(d * 3 * nf + 3 * t + l)
                cols.append(d * 3 * nc + 3 * ref.parent + k)
                vals.append(lam[:, l, k])
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    keep = np.abs(vals) > 1e-14
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(6 * nf, 6 * nc))


def broken_cross_mass(space):
    """``<u, w>`` between all dofs of a P2_vec/P1_vec space (rows) and
    broken P1 vector fields (columns) on the same mesh."""
    mesh = space.mesh
    nt = mesh.n_triangles
    kind = _KIND[space.kind]
    cross = reference_cross(kind, "p1")
    nloc = cross.shape[0]
    area = mesh.tri_area
    t = np.arange(nt)
    rows, cols, vals = [], [], []
    for d in range(2):
        for a in range(nloc):
            for l in range(3):
                rows.append(d * space.n_nodes + space.cell_nodes[:, a])
                cols.append(d * 3 * nt + 3 * t + l)
                vals.append(area * cross[a, l])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(space.n_dofs, 6 * nt))


def broken_mass(mesh):
    mass = reference_tensors("p1")[0]
    nt = mesh.n_triangles
    blocks = [mesh.tri_area[t] * mass for t in range(nt)]
    one = sp.block_diag(blocks)
    return sp.block_diag([one, one]).tocsr()


# ---------------------------------------------------------------------------
# Clement interpolant

def clement(ref, sample):
    """Clement interpolant from the sample space (all dofs) into P1_vec on the
    coarse mesh (all dofs, zero rows at boundary vertices).

    The value at vertex ``x_i`` is the patchwise L2 projection onto
    ``span{1, x - x_i, y - y_i}`` evaluated at ``x_i``.
    """
    coarse, fine = ref.coarse, ref.fine
    nv = coarse.n_vertices
    counts = np.bincount(coarse.triangles.ravel(), minlength=nv)
    if np.any(counts == 0):
        raise MeshError(f"empty patch at vertex {int(np.flatnonzero(counts == 0)[0])}")
    V = coarse.vertices
    P = V[coarse.triangles]
    mass1 = reference_tensors("p1")[0]
    G = np.zeros((nv, 3, 3))
    for k0 in range(3):
        xi = P[:, k0]
        m = np.concatenate([np.ones((len(P), 3, 1)), P - xi[:, None]], axis=2)
        loc = coarse.tri_area[:, None, None] * np.einsum("tka,kl,tlb->tab", m, mass1, m)
        np.add.at(G, coarse.triangles[:, k0], loc)
    g = np.linalg.solve(G, np.broadcast_to(np.eye(3)[0], (nv, 3))[..., None])[..., 0]

    cross = reference_cross("p2", "p1")
    X = fine.vertices[fine.triangles]
    par = coarse.triangles[ref.parent]
    rows, cols, vals = [], [], []
    for k0 in range(3):
        i = par[:, k0]
        w = g[i, 0][:, None] + np.einsum("td,tld->tl", g[i, 1:], X - V[i][:, None])
        W = fine.tri_area[:, None] * (w @ cross.T)
        rows.append(np.broadcast_to(i[:, None], W.shape))
        cols.append(sample.cell_nodes)
        vals.append(W)
    R = sp.csr_matrix((np.concatenate([v.ravel() for v in vals]),
                       (np.concatenate([r.ravel() for r in rows]),
                        np.concatenate([c.ravel() for c in cols]))),
                      shape=(nv, sample.n_nodes))
    R = sp.diags((~coarse.boundary_vertex).astype(float)) @ R
    return _vec(R)


# ---------------------------------------------------------------------------
# bubble projections

def mini_bubble_proj(ref, sample):
    """``c_T = int_T u dx`` per coarse triangle and component, as a matrix on
    all sample dofs; ``c_T`` multiplies the unit-integral bubble ``b_T``."""
    mean = reference_tensors("p2")[3]
    nf, nc = ref.fine.n_triangles, ref.coarse.n_triangles
    W = ref.fine.tri_area[:, None] * mean[None]
    rows = np.broadcast_to(ref.parent[:, None], W.shape)
    one = sp.csr_matrix((W.ravel(), (rows.ravel(), sample.cell_nodes.ravel())),
                        shape=(nc, sample.n_nodes))
    return _vec(one)


def _macro_names(mesh, bad):
    return ", ".join(f"T={m.boundary_tri}/T-={m.partner_tri}" for m in bad)


def th_gram(mesh, cls=None):
    """``G[j, k] = <psi_k, z_j>`` for the edge-bubble basis of the extended
    bubble space and the constrained Nedelec basis."""
    cls = classify(mesh) if cls is None else cls
    V = build_space("P2_vec", mesh)
    Eb = edge_bubble_basis(mesh, cls)
    Z = z0_basis(mesh, cls)
    Cz = nedelec_to_broken(mesh)
    X = broken_cross_mass(V)
    G = (Z.T @ (Cz.T @ (X.T @ Eb))).tocsc()
    if G.shape[0] != G.shape[1]:
        raise FortinError(f"bubble and Nedelec spaces differ in dimension: {G.shape}")
    return G


class _GramSolver:
    def __init__(self, mesh, G, cls):
        try:
            self.lu = spla.splu(G)
            ok = np.all(np.isfinite(self.lu.U.diagonal())) and np.all(self.lu.U.diagonal() != 0)
        except RuntimeError:
            ok = False
        if not ok:
            raise FortinError("singular bubble Gram matrix near macroelements "
                              + _macro_names(mesh, macroelements(mesh, cls)))

    def solve(self, b, trans="N"):
        return self.lu.solve(b, trans=trans)


@dataclass(frozen=True, eq=False)
class FortinOperator:
    """``Pi v = L_R R v + L_b S (v - E R v)`` with ``S = Gs^{-1} H``.

    ``R`` is the Clement matrix, ``E`` embeds its range in the sample space,
    ``H`` computes bubble right-hand sides, ``Gs`` is the bubble Gram solver
    (identity for Mini) and ``L_R, L_b`` lift into the coarse velocity space.
    Vectors in and out are on free dofs.
    """

    element: str
    ref: Refinement
    sample: object
    target: object
    R: sp.csr_matrix
    E: sp.csr_matrix
    H: sp.csr_matrix
    L_R: sp.csr_matrix
    L_b: sp.csr_matrix
    gram: object = None

    @property
    def shape(self):
        return (self.target.dim, self.sample.dim)

    def bubble(self, u):
        r = self.H @ u
        return r if self.gram is None else self.gram.solve(r)

    def apply(self, v):
        rv = self.R @ v
        c = self.bubble(v - self.E @ rv)
        return self.L_R @ rv + self.L_b @ c

    __call__ = apply

    def apply_T(self, w):
        a = self.L_b.T @ w
        if self.gram is not None:
            a = self.gram.solve(a, trans="T")
        u = self.H.T @ a
        return self.R.T @ (self.L_R.T @ w - self.E.T @ u) + u

    def as_operator(self):
        return spla.LinearOperator(self.shape, matvec=self.apply, rmatvec=self.apply_T,
                                   dtype=float)

    def bubble_part(self, v):
        rv = self.R @ v
        return self.bubble(v - self.E @ rv)


def _p1_to_p2(mesh):
    """Nodal embedding of continuous P1 into continuous P2 (scalar)."""
    nv, ne = mesh.n_vertices, mesh.n_edges
    rows = np.concatenate([np.arange(nv), nv + np.repeat(np.arange(ne), 2)])
    cols = np.concatenate([np.arange(nv), mesh.edges.ravel()])
    vals = np.concatenate([np.ones(nv), np.full(2 * ne, 0.5)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nv + ne, nv))


def fortin_operator(mesh, element="taylor_hood", ref=None):
    if element not in ELEMENTS:
        raise ValueError(f"unknown element {element!r}; expected one of {tuple(ELEMENTS)}")
    ref = refine(mesh) if ref is None else ref
    sample = build_space("P2_vec", ref.fine)
    target = build_space(ELEMENTS[element], mesh)
    p1c = build_space("P1_vec", mesh)
    sf = sample.free
    R_all = clement(ref, sample)
    R = R_all[:, sf]
    E = _vec(prolongation(ref, p1c, sample))[sf]
    nv, nt = mesh.n_vertices, mesh.n_triangles
    gram = None
    if element == "mini":
        H = mini_bubble_proj(ref, sample)[:, sf]
        nn = nv + nt
        L_R = sp.csr_matrix((np.ones(2 * nv), (np.r_[np.arange(nv), nn + np.arange(nv)],
                                               np.arange(2 * nv))), shape=(2 * nn, 2 * nv))
        L_b = sp.csr_matrix((np.ones(2 * nt), (np.r_[nv + np.arange(nt), nn + nv + np.arange(nt)],
                                               np.arange(2 * nt))), shape=(2 * nn, 2 * nt))
    else:
        cls = classify(mesh)
        macroelements(mesh, cls)
        Z = z0_basis(mesh, cls)
        Cz = broken_prolongation(ref) @ nedelec_to_broken(mesh)
        X = broken_cross_mass(sample)
        H = (Z.T @ Cz.T @ X.T).tocsr()[:, sf]
        gram = _GramSolver(mesh, th_gram(mesh, cls), cls)
        L_R = _vec(_p1_to_p2(mesh))
        L_b = edge_bubble_basis(mesh, cls)
    tf = target.free
    return FortinOperator(element, ref, sample, target, R, E, H.tocsr(),
                          L_R.tocsr()[tf], L_b.tocsr()[tf], gram)


# ---------------------------------------------------------------------------
# verification on the sample space

def _pressure_pair(fortin, slit_pressure):
    ref = fortin.ref
    Qc = build_space("P1_scalar", ref.coarse, slit_pressure=slit_pressure)
    Qf = build_space("P1_scalar", ref.fine, slit_pressure=slit_pressure)
    return Qc, Qf, prolongation(ref, Qc, Qf)


def commuting_residual(fortin, v, slit_pressure="continuous"):
    """``max_q |<div(Pi v - v), q>| / |v|_{H^1}`` over pressure basis functions.

    Accepts a single sample vector or a matrix with one sample per column.
    """
    Qc, Qf, Pp = _pressure_pair(fortin, slit_pressure)
    Bc = divergence(fortin.target, Qc)
    PBf = (Pp.T @ divergence(fortin.sample, Qf)).tocsr()
    N = assemble("mass_v", fortin.sample) + assemble("stiff_v", fortin.sample)
    v = np.asarray(v, dtype=float)
    V = v[:, None] if v.ndim == 1 else v
    norm = np.sqrt(np.einsum("ij,ij->j", V, N @ V))
    diff = Bc @ fortin.apply(V) - PBf @ V
    res = np.abs(diff).max(axis=0) / np.where(norm > 0, norm, 1.0)
    res[norm == 0] = 0.0
    return float(res[0]) if v.ndim == 1 else res


def _sample_norms(space):
    M = assemble("mass_v", space)
    return {"L2": M, "H1": M + assemble("stiff_v", space)}


def operator_norms(fortin, which=("L2", "H1"), tol=1e-8):
    """Largest ``sqrt(lambda)`` of ``Pi^T N_c Pi x = lambda N_f x`` over the
    sample space, for ``N`` the L2 and the full H1 inner products."""
    Nf = _sample_norms(fortin.sample)
    Nc = _sample_norms(fortin.target)
    out = {}
    n = fortin.sample.dim
    for name in which:
        A, Ac = Nf[name].tocsc(), Nc[name]
        op = spla.LinearOperator((n, n), dtype=float,
                                 matvec=lambda x, Ac=Ac: fortin.apply_T(Ac @ fortin.apply(x)))
        Minv = spla.factorized(A)
        Minv_op = spla.LinearOperator((n, n), matvec=Minv, dtype=float)
        v0 = np.random.default_rng(0).standard_normal(n)
        lam = spla.eigsh(op, k=1, M=A, Minv=Minv_op, which="LA", tol=tol, v0=v0,
                         return_eigenvectors=False)
        out[name] = float(np.sqrt(lam[0]))
    return out


def random_samples(fortin, count, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((fortin.sample.dim, count))


# ---------------------------------------------------------------------------
# bubble-to-Nedelec maps and local lemma matrices (exact arithmetic)

def _exact_tri(mesh, ids):
    return Triangle(*(mesh.exact_vertex(int(i)) for i in ids))


def _sub(p, q):
    return (p[0] - q[0], p[1] - q[1])


@dataclass(frozen=True)
class MacroConstants:
    beta: Fraction
    gamma: float
    alpha: Fraction
    area: Fraction
    area_minus: Fraction
    hat_lambda: tuple


def macro_constants(mesh, macro):
    x0, x1, x2, x3 = macro.vertex_ids
    T = _exact_tri(mesh, (x0, x1, x2))
    Tm = _exact_tri(mesh, (x1, x2, x3))
    p = [mesh.exact_vertex(i) for i in (x0, x1, x2, x3)]
    hat = (p[1][0] + p[2][0] - p[3][0], p[1][1] + p[2][1] - p[3][1])
    lam = T.to_bary(hat)
    a, am = T.area, Tm.area
    beta = 6 * am / (5 * a + 4 * am)
    g2 = (2 * am + 5 * a * lam[1]) / (2 * am + 5 * a * lam[2])
    if g2 <= 0:
        raise MeshError("macroelement too distorted for the gamma scaling")
    return MacroConstants(beta, math.sqrt(g2), 1 - lam[1] - lam[2], a, am, tuple(lam))


def _psi_minus(Tm, i, beta):
    """``6 l_i l_3 (x_3 - x_i) + beta (-1)^i l_1 l_2 (x_2 - x_1)`` on ``T^-``
    with local vertices ``(x_1, x_2, x_3)``."""
    li = i - 1
    field = edge_bubble(Tm, li, 2)
    sign = -1 if i == 1 else 1
    t = Tm.vec(0, 1)
    return field + LocalField(Tm, {(1, 1, 0): (sign * beta * t[0], sign * beta * t[1])})


@dataclass
class LemmaMatrix:
    kind: str
    matrix: np.ndarray
    exact: list
    lam_min: float
    bound: float
    expected: np.ndarray = None

    @property
    def ok(self):
        return self.lam_min >= self.bound * (1 - 1e-13)


def _sym_min(M):
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def lemma_matrix(kind, mesh, index):
    """Exact local matrix of one stability lemma.

    ``index`` is a triangle id for ``interior_M`` and ``boundary1`` and a
    :class:`Macroelement` for ``Mminus`` and ``macro_M``.
    """
    if kind == "interior_M":
        tri = _exact_tri(mesh, mesh.triangles[index])
        pairs = [((k + 1) % 3, (k + 2) % 3) for k in range(3)]
        ex = local_gram([edge_bubble(tri, i, j) for i, j in pairs],
                        [whitney(tri, i, j) for i, j in pairs])
        M = _float(ex)
        a = float(tri.area)
        expected = a / 10 * np.where(np.eye(3) > 0, 4.0, np.sign(M))
        return LemmaMatrix(kind, M, ex, _sym_min(M), a / 5, expected)
    if kind == "boundary1":
        tri = _exact_tri(mesh, mesh.triangles[index])
        local = [k for k in range(3) if mesh.edge_kind[mesh.tri_edges[index, k]] == 0]
        kb = next(k for k in range(3) if k not in local)
        pairs = [((k + 1) % 3, (k + 2) % 3) for k in local]
        wb = whitney(tri, (kb + 1) % 3, (kb + 2) % 3)
        # a counterclockwise unit circulation on e_k is cancelled on the boundary edge
        ex = local_gram([edge_bubble(tri, i, j) for i, j in pairs],
                        [whitney(tri, i, j) - wb for i, j in pairs])
        M = _float(ex)
        a = float(tri.area)
        return LemmaMatrix(kind, M, ex, _sym_min(M), a / 2, a / 2 * np.eye(2))
    macro = index
    x0, x1, x2, x3 = macro.vertex_ids
    c = macro_constants(mesh, macro)
    T = _exact_tri(mesh, (x0, x1, x2))
    Tm = _exact_tri(mesh, (x1, x2, x3))
    if kind == "Mminus":
        ex = local_gram([_psi_minus(Tm, i, c.beta) for i in (1, 2)],
                        [whitney(Tm, i - 1, 2) for i in (1, 2)])
        M = _float(ex)
        b, am = float(c.beta), float(c.area_minus)
        expected = am / 60 * np.array([[24 - b, 6 + b], [6 + b, 24 - b]])
        return LemmaMatrix(kind, M, ex, _sym_min(M), am / 4, expected)
    if kind == "macro_M":
        ex = _macro_unscaled(mesh, macro, T, Tm)
        g = np.array([c.gamma, 1 / c.gamma])
        M = g[:, None] * _float(ex)
        a, am = float(c.area), float(c.area_minus)
        l1, l2 = float(c.hat_lambda[1]), float(c.hat_lambda[2])
        expected = np.array([
            [c.gamma * (a / 2 * (1 - l1) + am / 5), -c.gamma * (a / 2 * l2 + am / 5)],
            [-(a / 2 * l1 + am / 5) / c.gamma, (a / 2 * (1 - l2) + am / 5) / c.gamma]])
        bound = float(c.alpha) * min(c.gamma, 1 / c.gamma) * a / 2
        return LemmaMatrix(kind, M, ex, _sym_min(M), bound, expected)
    raise ValueError(f"unknown lemma matrix {kind!r}")


def _float(mat):
    return np.array([[float(x) for x in row] for row in mat])


def _macro_unscaled(mesh, macro, T, Tm):
    """``int_{T*} 6 l_1 l_2 w_i . phi_j`` with ``w_1 = x_3 - x_2``,
    ``w_2 = x_3 - x_1`` (before the gamma scaling)."""
    x0, x1, x2, x3 = (mesh.exact_vertex(i) for i in macro.vertex_ids)
    w = [_sub(x3, x2), _sub(x3, x1)]
    on_T = [LocalField(T, {(0, 1, 1): (6 * wi[0], 6 * wi[1])}) for wi in w]
    on_Tm = [LocalField(Tm, {(1, 1, 0): (6 * wi[0], 6 * wi[1])}) for wi in w]
    phi_T = [grad_lambda(T, 1), grad_lambda(T, 2)]
    wT = whitney(Tm, 0, 1)
    phi_Tm = [wT * -1, wT]
    A = local_gram(on_T, phi_T)
    B = local_gram(on_Tm, phi_Tm)
    return [[A[i][j] + B[i][j] for j in range(2)] for i in range(2)]


def orth_check(mesh, macro, beta=None):
    """``max_{i,j} |int_{T*} psi_i^- . phi_j dx|``; exact for rational beta."""
    x0, x1, x2, x3 = macro.vertex_ids
    c = macro_constants(mesh, macro)
    beta = c.beta if beta is None else beta
    T = _exact_tri(mesh, (x0, x1, x2))
    Tm = _exact_tri(mesh, (x1, x2, x3))
    t = T.vec(1, 2)
    wT = whitney(Tm, 0, 1)
    worst = 0
    for i in (1, 2):
        s = -1 if i == 1 else 1
        on_T = LocalField(T, {(0, 1, 1): (s * beta * t[0], s * beta * t[1])})
        on_Tm = _psi_minus(Tm, i, beta)
        for j in (1, 2):
            sj = -1 if j == 1 else 1
            val = (on_T.dot_poly(grad_lambda(T, j)).integrate(T.area)
                   + on_Tm.dot_poly(wT * sj).integrate(Tm.area))
            worst = max(worst, abs(val))
    return worst


# ---------------------------------------------------------------------------
# the global bubble-to-Nedelec map with macroelement blocks

@dataclass(frozen=True, eq=False)
class PhiMap:
    """Basis of the extended bubble space (columns of ``psi`` in total P2_vec
    coefficients) and images under the map into the constrained Nedelec
    space (columns of ``phi`` in Whitney coefficients).

    Columns for a macroelement edge ``e_T`` carry the factor ``C`` of that
    macroelement; with ``C = 1`` the map is the untilded one.
    """

    psi: sp.csr_matrix
    phi: sp.csr_matrix
    kinds: tuple
    macros: tuple
    constants: tuple
    C: tuple


def _local_macro_block(mesh, macro, C):
    """Symmetric part of ``int_{T*} psi_a . Phi~(psi_b)`` for the basis
    ``(psi_1, psi_2, psi_1^-, psi_2^-)``."""
    M = lemma_matrix("macro_M", mesh, macro).matrix
    Mm = lemma_matrix("Mminus", mesh, macro).matrix
    x0, x1, x2, x3 = macro.vertex_ids
    c = macro_constants(mesh, macro)
    Tm = _exact_tri(mesh, (x1, x2, x3))
    p = [mesh.exact_vertex(i) for i in (x1, x2, x3)]
    w = [_sub(p[2], p[1]), _sub(p[2], p[0])]
    psi = [LocalField(Tm, {(1, 1, 0): (6 * wi[0], 6 * wi[1])}) for wi in w]
    K = _float(local_gram(psi, [whitney(Tm, 0, 2), whitney(Tm, 1, 2)]))
    K = np.array([c.gamma, 1 / c.gamma])[:, None] * K
    A = np.block([[C * M, K], [np.zeros((2, 2)), Mm]])
    return 0.5 * (A + A.T)


def choose_C(mesh, macro, max_power=30):
    """Smallest power of two making the local pairing positive definite."""
    for p in range(max_power + 1):
        C = 2.0 ** p
        if np.linalg.eigvalsh(_local_macro_block(mesh, macro, C)).min() > 0:
            return C
    raise FortinError(f"no scaling C <= 2^{max_power} for macroelement "
                      f"T={macro.boundary_tri}")


def phi_map(mesh, C=None):
    """Build :class:`PhiMap`; ``C=None`` picks ``C`` per macroelement with
    :func:`choose_C`, a number applies it to all macroelements."""
    cls = classify(mesh)
    macros = macroelements(mesh, cls)
    Z = z0_basis(mesh, cls).tocsc()
    zcol = {int(e): Z[:, k] for k, e in enumerate(cls.interior_edges)}
    nv, ne = mesh.n_vertices, mesh.n_edges
    nn = nv + ne
    V = mesh.vertices
    owner, minus = {}, {}
    consts, Cs = [], []
    for m, me in enumerate(macros):
        x0, x1, x2, x3 = me.vertex_ids
        for i, xi in ((1, x1), (2, x2)):
            e = mesh.edge_id(xi, x3)
            if e in minus or e in owner:
                raise MeshError("macroelements overlap")
            minus[e] = (m, i)
        owner[me.shared_edge] = m
        consts.append(macro_constants(mesh, me))
        Cs.append(choose_C(mesh, me) if C is None else float(C))
    if set(owner) & set(minus):
        raise MeshError("macroelements overlap")

    def bubble(e, w):
        col = np.zeros(2 * nn)
        col[nv + e] += 1.5 * w[0]
        col[nn + nv + e] += 1.5 * w[1]
        return col

    psi_cols, phi_cols, kinds = [], [], []
    for e in cls.interior_edges:
        e = int(e)
        a, b = mesh.edges[e]
        if e in owner:
            me = macros[owner[e]]
            x0, x1, x2, x3 = me.vertex_ids
            c, Cm = consts[owner[e]], Cs[owner[e]]
            for i, (w, g) in enumerate(((V[x3] - V[x2], c.gamma), (V[x3] - V[x1], 1 / c.gamma)), 1):
                psi_cols.append(bubble(e, g * w))
                z = np.zeros(ne)
                z[e] = -1.0 if i == 1 else 1.0
                xi = x1 if i == 1 else x2
                for eb in mesh.tri_edges[me.boundary_tri]:
                    if mesh.edge_kind[eb]:
                        p, q = mesh.edges[eb]
                        z[eb] = float(q == xi) - float(p == xi)
                phi_cols.append(Cm * z)
                kinds.append("macro")
        elif e in minus:
            m, i = minus[e]
            me = macros[m]
            x0, x1, x2, x3 = me.vertex_ids
            xi = x1 if i == 1 else x2
            s = -1.0 if i == 1 else 1.0
            col = bubble(e, V[x3] - V[xi])
            col += bubble(me.shared_edge, s * float(consts[m].beta) / 6 * (V[x2] - V[x1]))
            psi_cols.append(col)
            orient = 1.0 if xi < x3 else -1.0
            phi_cols.append(orient * zcol[e].toarray().ravel())
            kinds.append("minus")
        else:
            psi_cols.append(bubble(e, V[b] - V[a]))
            phi_cols.append(zcol[e].toarray().ravel())
            kinds.append("edge")
    psi = sp.csr_matrix(np.column_stack(psi_cols)) if psi_cols else sp.csr_matrix((2 * nn, 0))
    phi = sp.csr_matrix(np.column_stack(phi_cols)) if phi_cols else sp.csr_matrix((ne, 0))
    return PhiMap(psi, phi, tuple(kinds), tuple(macros), tuple(consts), tuple(Cs))


def bubble_pairing(mesh, pm):
    """Dense ``(A, Mv, Mz)``: ``A[a, b] = <psi_a, Phi(psi_b)>`` and the Gram
    matrices of the bubble basis and of its images."""
    V = build_space("P2_vec", mesh)
    Cz = nedelec_to_broken(mesh)
    X = broken_cross_mass(V)
    A = (pm.psi.T @ X @ Cz @ pm.phi).toarray()
    Mp2 = _vec(scalar_matrix(V, "mass"))
    Mv = (pm.psi.T @ Mp2 @ pm.psi).toarray()
    Mz = (pm.phi.T @ Cz.T @ broken_mass(mesh) @ Cz @ pm.phi).toarray()
    return A, Mv, Mz


def bubble_infsup(mesh, C=None):
    """Measured constants of the bubble inf-sup lemma.

    ``c_phi`` is a lower bound of ``<v, Phi~ v> / (|v| |Phi~ v|)`` over the
    bubble space, ``sqrt(lmin(A_s, Mv) lmin(A_s, Mz))``; ``c0`` is the exact
    discrete constant ``inf_v sup_z <v, z> / (|v| |z|)`` over ``Z_h^0``.
    """
    pm = phi_map(mesh, C)
    A, Mv, Mz = bubble_pairing(mesh, pm)
    As = 0.5 * (A + A.T)
    lv = sla.eigvalsh(As, Mv).min()
    lz = sla.eigvalsh(As, Mz).min()
    c_phi = math.sqrt(lv * lz) if lv > 0 and lz > 0 else 0.0
    return {"c_phi": c_phi, "c0": bubble_c0(mesh), "C": pm.C,
            "lam_v": float(lv), "lam_z": float(lz)}


def bubble_c0(mesh, method="eig"):
    """``inf_v sup_z <v, z> / (|v| |z|)`` for the extended bubble space and
    the constrained Nedelec space."""
    cls = classify(mesh)
    V = build_space("P2_vec", mesh)
    Eb = edge_bubble_basis(mesh, cls)
    Z = z0_basis(mesh, cls)
    Cz = nedelec_to_broken(mesh)
    G = (Z.T @ Cz.T @ broken_cross_mass(V).T @ Eb).toarray()
    Mv = (Eb.T @ _vec(scalar_matrix(V, "mass")) @ Eb).toarray()
    Mz = (Z.T @ Cz.T @ broken_mass(mesh) @ Cz @ Z).toarray()
    if method == "svd":
        Lz = sla.cholesky(Mz, lower=True)
        Lv = sla.cholesky(Mv, lower=True)
        S = sla.solve_triangular(Lz, G, lower=True)
        S = sla.solve_triangular(Lv, S.T, lower=True).T
        return float(sla.svdvals(S).min())
    lam = sla.eigvalsh(G.T @ np.linalg.solve(Mz, G), Mv)
    return float(np.sqrt(max(lam.min(), 0.0)))


def norm_equivalence(mesh):
    """Ranges of ``|z|^2 / sum a_e^2`` and ``|v|^2 / sum |T|^2 a_e^2`` over the
    bubble space and its images, with sums over triangles in each support."""
    pm = phi_map(mesh, C=1)
    _, Mv, Mz = bubble_pairing(mesh, pm)
    # number of triangles and their areas in the support of each column
    cls = classify(mesh)
    counts, area2 = [], []
    for k, e in enumerate(cls.interior_edges):
        tris = mesh.edge_tris[e]
        reps = 2 if pm.kinds[len(counts)] == "macro" else 1
        for _ in range(reps):
            counts.append(len(tris))
            area2.append(float(np.sum(mesh.tri_area[tris] ** 2)))
    wz, wv = np.array(counts, float), np.array(area2)
    lz = sla.eigvalsh(Mz, np.diag(wz))
    lv = sla.eigvalsh(Mv, np.diag(wv))
    return {"z": (float(lz.min()), float(lz.max())), "v": (float(lv.min()), float(lv.max()))}


# ---------------------------------------------------------------------------
# lemma suite

@dataclass(frozen=True)
class LemmaCheck:
    lemma: str
    item: str
    measured: float
    expected: float
    ok: bool


def _rel_close(a, b, tol):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale), bool(np.abs(a - b).max() <= tol * scale)


def lemma_suite(mesh, tol=1e-13, seed=0):
    """Run every local lemma check on every element/macroelement of ``mesh``."""
    cls = classify(mesh)
    out = []
    for t in cls.interior_tris:
        L = lemma_matrix("interior_M", mesh, int(t))
        err, ok = _rel_close(L.matrix, L.expected, tol)
        sym = L.exact[0][1] == L.exact[1][0] and L.exact[0][2] == L.exact[2][0] \
            and L.exact[1][2] == L.exact[2][1]
        out.append(LemmaCheck("interior_M", f"T{t}", err, 0.0, ok and sym and L.ok))
    rng = np.random.default_rng(seed)
    for t in cls.boundary1_tris:
        L = lemma_matrix("boundary1", mesh, int(t))
        a = [Fraction(int(x), 7) for x in rng.integers(-20, 21, size=2)]
        val = sum(a[i] * L.exact[i][j] * a[j] for i in range(2) for j in range(2))
        target = Fraction(1, 2) * (a[0] ** 2 + a[1] ** 2) * mesh.exact_area(int(t))
        err = abs(float(val - target)) / max(float(abs(target)), 1e-300)
        out.append(LemmaCheck("boundary1", f"T{t}", err, 0.0,
                              err <= tol and _rel_close(L.matrix, L.expected, tol)[1]))
    for me in macroelements(mesh, cls):
        name = f"T*{me.boundary_tri}"
        L = lemma_matrix("Mminus", mesh, me)
        err, ok = _rel_close(L.matrix, L.expected, tol)
        out.append(LemmaCheck("Mminus", name, err, 0.0, ok))
        out.append(LemmaCheck("Mminus_lmin", name, L.lam_min, L.bound,
                              L.lam_min > L.bound))
        val = orth_check(mesh, me)
        out.append(LemmaCheck("orth", name, float(val), 0.0, val == 0))
        L = lemma_matrix("macro_M", mesh, me)
        err_sym = abs(L.matrix[0, 1] - L.matrix[1, 0]) / np.abs(L.matrix).max()
        err_form, _ = _rel_close(L.matrix, L.expected, tol)
        out.append(LemmaCheck("macro_M_sym", name, err_sym, 0.0,
                              err_sym <= tol and err_form <= tol))
        out.append(LemmaCheck("macro_M_lmin", name, L.lam_min, L.bound, L.ok))
    return out
