"""Independent reference computations used by the tests."""
import numpy as np


def triangle_rule(order=10):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1):
    exact for polynomials of degree <= 2 * order - 2."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    w = w / 2
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([u.ravel(), (v * (1 - u)).ravel()])
    wts = (wu * wv * (1 - u)).ravel()
    return pts, wts


def integrate_triangle(f, p0, p1, p2, order=10):
    """Quadrature of ``f(lam)`` over a triangle, where ``lam`` is (m, 3)."""
    p0, p1, p2 = (np.asarray(p, float) for p in (p0, p1, p2))
    pts, wts = triangle_rule(order)
    lam = np.column_stack([1 - pts.sum(axis=1), pts])
    jac = abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    return jac * np.tensordot(wts, f(lam), axes=(0, 0))


def gauss_segment(f, order=10):
    """Quadrature of ``f(s)`` over [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * np.tensordot(w, f((x + 1) / 2), axes=(0, 0))


def dense_generalized_eig(A, B):
    """Eigenvalues of ``B A`` for symmetric ``A`` and SPD ``B`` by a plain
    non-symmetric eigensolver."""
    return np.sort(np.linalg.eigvals(B @ A).real)
