from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp

from stokes_precond.assembly import interpolate
from stokes_precond.mesh import DOMAINS, MeshError, barycentric, build_mesh, classify, macroelements
from stokes_precond.fortin import (
    FortinError, _GramSolver, bubble_c0, bubble_infsup, choose_C, clement, commuting_residual,
    fortin_operator, lemma_matrix, lemma_suite, macro_constants, mini_bubble_proj,
    norm_equivalence, operator_norms, orth_check, phi_map, prolongation, random_samples, refine)
from stokes_precond.spaces import build_space

ADMISSIBLE = [(d, l) for d in DOMAINS for l in (1, 2, 3) if not (d != "square" and l == 1)]
F = Fraction


@pytest.mark.parametrize("domain", DOMAINS)
def test_refinement_parents(domain):
    ref = refine(build_mesh(domain, 2))
    assert ref.fine.n_triangles == 4 * ref.coarse.n_triangles
    assert np.all(np.bincount(ref.parent) == 4)
    c = ref.fine.vertices[ref.fine.triangles].mean(axis=1)
    for t in range(0, ref.fine.n_triangles, 5):
        lam = barycentric(c[t], ref.coarse.vertices[ref.coarse.triangles[ref.parent[t]]])
        assert lam.min() > 0
    assert np.all(ref.lam >= -1e-15)
    assert np.allclose(ref.lam.sum(axis=2), 1)


def test_prolongation_reproduces_quadratics():
    ref = refine(build_mesh("lshape", 2))
    Vc = build_space("P2_vec", ref.coarse)
    Vf = build_space("P2_vec", ref.fine)
    f = lambda p: np.column_stack([p[:, 0] ** 2 - p[:, 0] * p[:, 1], p[:, 1]])
    P = prolongation(ref, Vc, Vf)
    uc = interpolate(Vc, f)
    uf = interpolate(Vf, f)
    assert np.allclose(P @ uc[:Vc.n_nodes], uf[:Vf.n_nodes], atol=1e-14)
    assert np.allclose(P @ uc[Vc.n_nodes:], uf[Vf.n_nodes:], atol=1e-14)


@pytest.mark.parametrize("domain", DOMAINS)
def test_clement_preserves_linears_and_vanishes_on_boundary(domain):
    ref = refine(build_mesh(domain, 2))
    sample = build_space("P2_vec", ref.fine)
    R = clement(ref, sample)
    nv = ref.coarse.n_vertices
    interior = ~ref.coarse.boundary_vertex
    X = ref.coarse.vertices
    for f in (lambda p: np.column_stack([np.ones(len(p)), np.zeros(len(p))]),
              lambda p: np.column_stack([3 * p[:, 0] - p[:, 1], 2 + p[:, 1]])):
        r = R @ interpolate(sample, f)
        expected = f(X)
        assert np.allclose(r[:nv][interior], expected[interior, 0], atol=1e-13)
        assert np.allclose(r[nv:][interior], expected[interior, 1], atol=1e-13)
        assert np.all(r[:nv][~interior] == 0) and np.all(r[nv:][~interior] == 0)


def test_clement_remainder_vanishes_on_interior_elements():
    ref = refine(build_mesh("square", 3))
    fo = fortin_operator(ref.coarse, "mini", ref)
    sample = fo.sample
    full = interpolate(sample, lambda p: np.column_stack([p[:, 0] + 2 * p[:, 1], -p[:, 0]]))
    v = full[sample.free]
    rem = sample.extend(v - fo.E @ (fo.R @ v))
    coarse = ref.coarse
    # triangles whose vertex patches do not touch the (zeroed) boundary
    touches = coarse.boundary_vertex[coarse.triangles].any(axis=1)
    near = np.zeros(coarse.n_vertices, dtype=bool)
    near[coarse.triangles[touches].ravel()] = True
    away = ~near[coarse.triangles].any(axis=1)
    assert away.sum() > 0
    fine_tris = np.flatnonzero(away[ref.parent])
    nodes = sample.cell_nodes[fine_tris].ravel()
    assert np.abs(rem[nodes]).max() < 1e-13
    assert np.abs(rem[sample.n_nodes + nodes]).max() < 1e-13


def test_mini_bubble_moments():
    ref = refine(build_mesh("square", 2))
    sample = build_space("P2_vec", ref.fine)
    H = mini_bubble_proj(ref, sample)
    assert np.all(H @ np.zeros(sample.n_dofs) == 0)
    c = H @ interpolate(sample, lambda p: np.column_stack([np.ones(len(p)), np.zeros(len(p))]))
    nt = ref.coarse.n_triangles
    assert np.allclose(c[:nt], ref.coarse.tri_area)
    assert np.allclose(c[nt:], 0)


def test_mini_bubble_is_local():
    ref = refine(build_mesh("square", 2))
    fo = fortin_operator(ref.coarse, "mini", ref)
    v = np.zeros(fo.sample.dim)
    v[fo.sample.dim // 4] = 1.0
    c = fo.bubble_part(v)
    assert 0 < np.count_nonzero(np.abs(c) > 1e-15) <= 2 * 6


@pytest.mark.parametrize("element", ["mini", "taylor_hood"])
def test_apply_T_is_adjoint(element):
    fo = fortin_operator(build_mesh("slit", 2), element)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(fo.sample.dim)
    w = rng.standard_normal(fo.target.dim)
    assert w @ fo.apply(v) == pytest.approx(fo.apply_T(w) @ v, rel=1e-11)
    assert fo.as_operator().shape == fo.shape


@pytest.mark.parametrize("element", ["mini", "taylor_hood"])
@pytest.mark.parametrize("domain", ["square", "lshape"])
def test_commuting_property(element, domain):
    fo = fortin_operator(build_mesh(domain, 2), element)
    res = commuting_residual(fo, random_samples(fo, 20, seed=1))
    assert res.shape == (20,)
    assert res.max() < 1e-10
    assert commuting_residual(fo, np.zeros(fo.sample.dim)) == 0.0
    assert commuting_residual(fo, random_samples(fo, 3), slit_pressure="cut").max() < 1e-10


@pytest.mark.parametrize("domain", ["lshape", "slit"])
def test_taylor_hood_requires_admissible_mesh(domain):
    with pytest.raises(MeshError):
        fortin_operator(build_mesh(domain, 1), "taylor_hood")
    assert fortin_operator(build_mesh(domain, 1), "mini").shape[0] > 0


def test_unknown_element():
    with pytest.raises(ValueError):
        fortin_operator(build_mesh("square", 1), "p2p0")


def test_singular_gram_names_macroelements():
    mesh = build_mesh("square", 2)
    cls = classify(mesh)
    n = len(cls.interior_edges) + len(cls.interior_edges_2)
    G = sp.csc_matrix((n, n))
    with pytest.raises(FortinError, match="T=.*/T-="):
        _GramSolver(mesh, G, cls)


def test_operator_norm_of_identity_is_one():
    mesh = build_mesh("square", 2)
    V = build_space("P2_vec", mesh)
    stub = SimpleNamespace(sample=V, target=V, apply=lambda x: x, apply_T=lambda x: x)
    norms = operator_norms(stub)
    assert norms["L2"] == pytest.approx(1.0, rel=1e-8)
    assert norms["H1"] == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("element,level,l2,h1", [
    ("mini", 1, 1.1272108922488264, 2.527133081103656),
    ("mini", 2, 1.1272108922488264, 2.7930560895988115),
    ("taylor_hood", 1, 1.6505162434906402, 2.6895029806793715),
    ("taylor_hood", 2, 1.6858282488275271, 3.437286961948813),
])
def test_operator_norms_frozen(element, level, l2, h1):
    norms = operator_norms(fortin_operator(build_mesh("square", level), element))
    assert norms["L2"] == pytest.approx(l2, rel=1e-6)
    assert norms["H1"] == pytest.approx(h1, rel=1e-6)


def test_macro_constants_equal_areas():
    mesh = build_mesh("square", 2)
    for me in macroelements(mesh):
        c = macro_constants(mesh, me)
        assert c.beta == F(2, 3)
        assert c.area == c.area_minus
        assert c.gamma > 0 and c.alpha > 0


def test_lemma_matrix_values():
    mesh = build_mesh("square", 3)
    cls = classify(mesh)
    t = int(cls.interior_tris[0])
    area = mesh.exact_area(t)
    L = lemma_matrix("interior_M", mesh, t)
    assert all(L.exact[k][k] == 2 * area / 5 for k in range(3))
    assert all(abs(L.exact[i][j]) == area / 10 for i in range(3) for j in range(3) if i != j)
    assert L.lam_min >= float(area) / 5 * (1 - 1e-13)
    me = macroelements(mesh)[0]
    Lm = lemma_matrix("Mminus", mesh, me)
    b = F(2, 3)
    am = macro_constants(mesh, me).area_minus
    assert Lm.exact[0][0] == am * (24 - b) / 60 and Lm.exact[0][1] == am * (6 + b) / 60
    assert Lm.lam_min == pytest.approx(float((9 - b) * am / 30), rel=1e-13)
    assert Lm.lam_min > float(am) / 4
    Lmac = lemma_matrix("macro_M", mesh, me)
    assert Lmac.matrix[0, 1] == pytest.approx(Lmac.matrix[1, 0], rel=1e-13)
    assert Lmac.ok
    with pytest.raises(ValueError):
        lemma_matrix("nope", mesh, me)


def test_boundary1_identity_random():
    mesh = build_mesh("lshape", 3)
    rng = np.random.default_rng(4)
    for t in classify(mesh).boundary1_tris[:6]:
        L = lemma_matrix("boundary1", mesh, int(t))
        a = [F(int(x), 3) for x in rng.integers(-9, 10, size=2)]
        val = sum(a[i] * L.exact[i][j] * a[j] for i in range(2) for j in range(2))
        assert val == F(1, 2) * (a[0] ** 2 + a[1] ** 2) * mesh.exact_area(int(t))


def test_orthogonality_exact_and_negative_control():
    mesh = build_mesh("square", 1)
    for me in macroelements(mesh):
        assert orth_check(mesh, me) == 0
        assert orth_check(mesh, me, F(2, 3) + F(1, 10)) != 0


@pytest.mark.parametrize("domain,level", ADMISSIBLE)
def test_lemma_suite_passes(domain, level):
    checks = lemma_suite(build_mesh(domain, level))
    assert checks and all(c.ok for c in checks)
    assert {c.lemma for c in checks} >= {"interior_M", "boundary1", "Mminus", "orth", "macro_M_lmin"}


def test_phi_map_and_scaling():
    mesh = build_mesh("square", 3)
    pm = phi_map(mesh)
    assert pm.psi.shape[1] == pm.phi.shape[1]
    assert all(C == 1.0 for C in pm.C)
    assert pm.kinds.count("macro") == 2 * len(pm.macros)
    assert choose_C(mesh, pm.macros[0]) == 1.0


@pytest.mark.parametrize("level,c_phi,c0", [
    (2, 0.33557748704851476, 0.5272763681867688),
    (3, 0.33564411303712466, 0.5274037140704012),
])
def test_bubble_infsup_frozen(level, c_phi, c0):
    r = bubble_infsup(build_mesh("square", level))
    assert r["c_phi"] == pytest.approx(c_phi, rel=1e-10)
    assert r["c0"] == pytest.approx(c0, rel=1e-10)
    assert r["c_phi"] <= r["c0"]


@pytest.mark.parametrize("domain", DOMAINS)
def test_c0_eig_matches_svd(domain):
    mesh = build_mesh(domain, 3)
    assert bubble_c0(mesh, "eig") == pytest.approx(bubble_c0(mesh, "svd"), rel=1e-10)


def test_norm_equivalence_is_mesh_independent():
    r2, r3 = norm_equivalence(build_mesh("square", 2)), norm_equivalence(build_mesh("square", 3))
    for key in ("z", "v"):
        assert r2[key][0] > 0
        assert r3[key][0] == pytest.approx(r2[key][0], rel=0.05)
        assert r3[key][1] == pytest.approx(r2[key][1], rel=0.05)
