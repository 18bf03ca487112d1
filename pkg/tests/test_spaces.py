import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stokes_precond.fem_basis import eval_basis
from stokes_precond.mesh import DOMAINS, MeshError, build_mesh, classify
from stokes_precond.spaces import (
    build_space, circulation, dimension_identity, edge_bubble_basis, edge_bubble_vectors,
    gradient_coeffs, mean_zero_project, mean_zero_projector, mean_zero_weights, z0_basis,
    z0_boundary_coeffs)

from oracles import integrate_triangle

ADMISSIBLE = [(d, l) for d in DOMAINS for l in (1, 2, 3) if not (d != "square" and l == 1)]


def test_p2_counts_square_level1():
    V = build_space("P2_vec", build_mesh("square", 1))
    assert V.n_dofs == 50
    assert V.dim == 18


def test_other_counts():
    mesh = build_mesh("square", 1)
    assert build_space("nedelec", mesh).dim == 16
    assert build_space("P1_vec", mesh).dim == 2
    assert build_space("mini_vec", mesh).dim == 2 + 16
    assert build_space("mini_bubble_vec", mesh).dim == 16
    assert build_space("P1_scalar", mesh).dim == 9
    with pytest.raises(ValueError):
        build_space("P3_vec", mesh)
    with pytest.raises(ValueError):
        build_space("P1_scalar", mesh, slit_pressure="glued")


def test_slit_pressure_identification():
    mesh = build_mesh("slit", 2)
    assert build_space("P1_scalar", mesh).n_nodes == 27
    Q = build_space("P1_scalar", mesh, slit_pressure="continuous")
    assert Q.n_nodes == 25
    assert mean_zero_weights(Q).sum() == pytest.approx(1.0)
    sq = build_mesh("square", 2)
    assert build_space("P1_scalar", sq, slit_pressure="continuous").n_nodes == 25


def test_extend_restrict_roundtrip():
    V = build_space("P2_vec", build_mesh("lshape", 2))
    x = np.arange(V.dim, dtype=float)
    full = V.extend(x)
    assert full.shape == (V.n_dofs,)
    assert np.array_equal(V.restrict(full), x)
    assert np.all(full[~np.isin(np.arange(V.n_dofs), V.free)] == 0)


@pytest.mark.parametrize("domain,level", [("square", 1), ("square", 2), ("lshape", 2), ("slit", 3)])
def test_z0_zero_interior_gives_zero(domain, level):
    mesh = build_mesh(domain, level)
    cls = classify(mesh)
    assert np.all(z0_boundary_coeffs(mesh, np.zeros(len(cls.interior_edges))) == 0)


@pytest.mark.parametrize("domain,level", ADMISSIBLE)
def test_z0_zero_curl_on_boundary_triangles(domain, level):
    mesh = build_mesh(domain, level)
    cls = classify(mesh)
    rng = np.random.default_rng(level)
    a = rng.standard_normal(len(cls.interior_edges))
    c = rng.standard_normal(len(cls.boundary2_tris))
    coeffs = z0_boundary_coeffs(mesh, a, c)
    assert np.allclose(coeffs[cls.interior_edges], a)
    circ = circulation(mesh, coeffs)
    assert np.max(np.abs(circ[cls.boundary_tris])) < 1e-13


@pytest.mark.parametrize("domain,level", ADMISSIBLE)
def test_z0_basis_full_rank(domain, level):
    mesh = build_mesh(domain, level)
    Z = z0_basis(mesh).toarray()
    assert np.linalg.matrix_rank(Z) == Z.shape[1]


@pytest.mark.parametrize("domain", ["lshape", "slit"])
def test_z0_rejects_inadmissible_mesh(domain):
    with pytest.raises(MeshError):
        build_space("nedelec_z0", build_mesh(domain, 1))


@pytest.mark.parametrize("domain", DOMAINS)
@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_dimension_identity(domain, level):
    mesh = build_mesh(domain, level)
    dim_vb, dim_z0 = dimension_identity(mesh)
    assert dim_vb == dim_z0
    assert build_space("th_edge_bubble", mesh).dim == dim_vb
    if (domain, level) in ADMISSIBLE:
        assert build_space("nedelec_z0", mesh).dim == dim_z0


def test_gradients_are_curl_free():
    mesh = build_mesh("slit", 3)
    q = np.random.default_rng(0).standard_normal(mesh.n_vertices)
    assert np.allclose(circulation(mesh, gradient_coeffs(mesh) @ q), 0, atol=1e-13)


def test_edge_bubble_basis_matches_formula():
    mesh = build_mesh("square", 2)
    edges, w = edge_bubble_vectors(mesh)
    Bb = edge_bubble_basis(mesh)
    V = build_space("P2_vec", mesh)
    lam = np.random.default_rng(1).dirichlet(np.ones(3), size=5)
    phi = eval_basis("p2", lam)
    for col in (0, len(edges) - 1):
        e = edges[col]
        full = Bb[:, col].toarray().ravel()
        for t in mesh.edge_tris[e]:
            i, j = (int(np.flatnonzero(mesh.triangles[t] == v)[0]) for v in mesh.edges[e])
            vals = np.stack([phi @ full[V.cell_dofs(d)[t]] for d in range(2)], axis=1)
            expected = 6 * lam[:, i, None] * lam[:, j, None] * w[col]
            assert np.allclose(vals, expected)


def test_mean_zero_examples():
    mesh = build_mesh("square", 2)
    Q = build_space("P1_scalar", mesh)
    m, proj = mean_zero_projector(Q)
    assert np.allclose(proj(np.ones(Q.n_nodes)), 0)
    x = mesh.vertices[:, 0]
    px = proj(x)
    # exact integral of the P1 interpolant by quadrature
    total = sum(integrate_triangle(lambda lam: lam @ px[tri], *mesh.vertices[tri])
                for tri in mesh.triangles)
    assert abs(total) < 1e-15
    assert np.allclose(proj(px), px)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=25, max_size=25))
def test_mean_zero_idempotent(values):
    Q = build_space("P1_scalar", build_mesh("square", 2))
    m = mean_zero_weights(Q)
    q = mean_zero_project(np.array(values), m)
    assert abs(m @ q) <= 1e-12 * max(1.0, np.abs(values).max())
    assert np.allclose(mean_zero_project(q, m), q, atol=1e-9)


def test_mean_zero_weights_need_p1():
    with pytest.raises(ValueError):
        mean_zero_weights(build_space("P2_vec", build_mesh("square", 1)))
