import io

import numpy as np
import pytest

from stokes_precond.mesh import (
    DOMAINS, MeshError, barycentric, build_mesh, check_invariants, classify, export_mesh,
    macroelements, shape_metrics)

LEVELS = [1, 2, 3, 4]


@pytest.mark.parametrize("domain,level,nv,nt,ne", [
    ("square", 1, 9, 8, 16),
    ("lshape", 2, 21, 24, 44),
    ("slit", 2, 27, 32, 58),
])
def test_counts(domain, level, nv, nt, ne):
    mesh = build_mesh(domain, level)
    assert (mesh.n_vertices, mesh.n_triangles, mesh.n_edges) == (nv, nt, ne)


@pytest.mark.parametrize("domain", DOMAINS)
@pytest.mark.parametrize("level", LEVELS)
def test_invariants(domain, level):
    mesh = build_mesh(domain, level)
    check_invariants(mesh)
    assert mesh.n_vertices - mesh.n_edges + mesh.n_triangles == 1
    assert np.all(mesh.tri_area > 0)
    assert np.array_equal(mesh.vertices, mesh.grid / mesh.n)
    assert np.all(mesh.edges[:, 0] < mesh.edges[:, 1])
    expected_area = {"square": 1.0, "lshape": 0.75, "slit": 1.0}[domain]
    assert mesh.area == pytest.approx(expected_area, rel=1e-14)
    assert mesh.h == pytest.approx(np.sqrt(2) / mesh.n)
    # tri_edges[t, k] is opposite local vertex k
    for t in range(0, mesh.n_triangles, 7):
        for k in range(3):
            assert mesh.triangles[t, k] not in mesh.edges[mesh.tri_edges[t, k]]


def test_deterministic():
    a, b = build_mesh("slit", 3), build_mesh("slit", 3)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.edges, b.edges)


def test_slit_duplicates_vertices():
    mesh = build_mesh("slit", 2)
    _, counts = np.unique(mesh.grid, axis=0, return_counts=True)
    assert counts.max() == 2 and (counts == 2).sum() == 2
    # the slit edges are boundary edges on both sides
    mid = mesh.vertices[mesh.edges].mean(axis=1)
    on_slit = (np.abs(mid[:, 1] - 0.5) < 1e-14) & (mid[:, 0] > 0.5)
    assert on_slit.sum() == 4
    assert np.all(mesh.boundary_edge[on_slit])


@pytest.mark.parametrize("domain,level", [("x", 2), ("square", 0), ("square", -1)])
def test_invalid_arguments(domain, level):
    with pytest.raises(ValueError):
        build_mesh(domain, level)


def test_classification_square_level1():
    cls = classify(build_mesh("square", 1))
    # with lower-left to upper-right diagonals only two corner triangles exist
    assert len(cls.boundary2_tris) == 2
    assert (len(cls.interior_tris), len(cls.boundary1_tris)) == (2, 4)


@pytest.mark.parametrize("domain", DOMAINS)
@pytest.mark.parametrize("level", LEVELS)
def test_classification_partitions(domain, level):
    mesh = build_mesh(domain, level)
    cls = classify(mesh)
    parts = np.concatenate([cls.interior_tris, cls.boundary1_tris, cls.boundary2_tris])
    assert np.array_equal(np.sort(parts), np.arange(mesh.n_triangles))
    assert len(cls.boundary_tris) + len(cls.interior_tris) == mesh.n_triangles
    assert np.array_equal(np.sort(np.concatenate([cls.interior_edges_1, cls.interior_edges_2])),
                          cls.interior_edges)


def test_interior_triangle_kind():
    mesh = build_mesh("square", 3)
    centroid = mesh.vertices[mesh.triangles].mean(axis=1)
    t = int(np.argmin(np.linalg.norm(centroid - 0.5, axis=1)))
    assert mesh.tri_kind[t] == 0


def test_three_boundary_edges_rejected():
    mesh = build_mesh("square", 1)
    kind = mesh.tri_kind.copy()
    kind[0] = 3
    broken = type(mesh)(**{**mesh.__dict__, "tri_kind": kind})
    with pytest.raises(MeshError):
        classify(broken)


@pytest.mark.parametrize("domain,level", [(d, l) for d in DOMAINS for l in LEVELS
                                          if not (d != "square" and l == 1)])
def test_macroelements(domain, level):
    mesh = build_mesh(domain, level)
    macros = macroelements(mesh)
    assert len(macros) == len(classify(mesh).boundary2_tris)
    for me in macros:
        x0, x1, x2, x3 = me.vertex_ids
        assert mesh.tri_kind[me.partner_tri] == 0
        assert set(mesh.edges[me.shared_edge]) == {x1, x2}
        assert set(mesh.triangles[me.boundary_tri]) == {x0, x1, x2}
        assert set(mesh.triangles[me.partner_tri]) == {x1, x2, x3}
        # the reflected vertex makes (x1, hat_x0, x2, x3) a parallelogram
        v = mesh.vertices
        assert np.allclose(me.hat_x0 + v[x3], v[x1] + v[x2])


@pytest.mark.parametrize("domain", ["lshape", "slit"])
def test_macroelements_assumption_violated(domain):
    with pytest.raises(MeshError, match="assumption violated"):
        macroelements(build_mesh(domain, 1))


def test_macroelements_empty_list():
    mesh = build_mesh("square", 2)
    kind = np.where(mesh.tri_kind == 2, 1, mesh.tri_kind).astype(np.int8)
    assert macroelements(type(mesh)(**{**mesh.__dict__, "tri_kind": kind})) == []


@pytest.mark.parametrize("level", [2, 3, 4])
def test_shape_metrics(level):
    m = shape_metrics(build_mesh("square", level))
    assert m["gamma0"] == pytest.approx(4.0)
    assert m["gamma1"] == pytest.approx(1.0)
    assert 0 < m["alpha_min"] <= 1


def test_barycentric_roundtrip():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    lam = barycentric([[0.25, 0.5], [2.0, 2.0]], tri)
    assert np.allclose(lam.sum(axis=1), 1)
    assert np.allclose(lam @ tri, [[0.25, 0.5], [2.0, 2.0]])


def test_exact_area():
    mesh = build_mesh("lshape", 2)
    assert sum(mesh.exact_area(t) for t in range(mesh.n_triangles)) == pytest.approx(0.75)
    assert str(mesh.exact_area(0)) == "1/32"


def test_export_format():
    mesh = build_mesh("square", 1)
    buf = io.StringIO()
    export_mesh(mesh, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 9 + 8 + 16
    assert lines[0] == "v 0.0 0.0"
    assert sum(l.startswith("t ") for l in lines) == 8
    kinds = [l.split()[-1] for l in lines if l.startswith("e ")]
    assert kinds.count("boundary") == 8 and kinds.count("interior") == 8
