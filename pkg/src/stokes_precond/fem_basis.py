"""
Polynomials in barycentric coordinates and their exact integrals.

A scalar polynomial on a triangle is stored as a mapping from exponent
triples ``(a1, a2, a3)`` to coefficients.  Vector fields carry 2-tuples as
coefficients.  Coefficients may be ``Fraction``s (exact path, used with the
dyadic grid coordinates) or floats.  Every integral reduces to

    int_T l1^a1 l2^a2 l3^a3 dx = 2 a! / (2 + |a|)! * |T|.
"""
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np


@lru_cache(maxsize=None)
def bary_factor(alpha):
    """Exact ``int_T lambda^alpha dx / |T|``."""
    a1, a2, a3 = alpha
    if min(alpha) < 0:
        raise ValueError("exponents must be nonnegative")
    num = 2 * factorial(a1) * factorial(a2) * factorial(a3)
    return Fraction(num, factorial(2 + a1 + a2 + a3))


def bary_moment(alpha, area):
    """``int_T lambda^alpha dx``; exact if ``area`` is rational, else float."""
    if area <= 0:
        raise ValueError("area must be positive")
    f = bary_factor(tuple(int(a) for a in alpha))
    if isinstance(area, (Fraction, int)):
        return f * area
    return float(f) * float(area)


@lru_cache(maxsize=None)
def edge_factor(alpha, opposite):
    """Exact ``int_e lambda^alpha ds / |e|`` for the edge opposite vertex
    ``opposite`` (where that coordinate vanishes)."""
    if alpha[opposite] > 0:
        return Fraction(0)
    i, j = (k for k in range(3) if k != opposite)
    a, b = alpha[i], alpha[j]
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 1))


def _unit(k):
    return tuple(1 if m == k else 0 for m in range(3))


def _add_alpha(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


class BaryPoly:
    """Scalar polynomial sum_alpha c_alpha lambda^alpha."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        for alpha, c in (terms or {}).items():
            if c != 0:
                self.terms[tuple(alpha)] = c

    @classmethod
    def monomial(cls, alpha, coeff=1):
        return cls({tuple(alpha): coeff})

    @classmethod
    def coordinate(cls, k):
        return cls.monomial(_unit(k))

    @property
    def degree(self):
        return max((sum(a) for a in self.terms), default=0)

    def __add__(self, other):
        out = dict(self.terms)
        for a, c in other.terms.items():
            out[a] = out.get(a, 0) + c
        return BaryPoly(out)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, other):
        if isinstance(other, BaryPoly):
            out = {}
            for a, c in self.terms.items():
                for b, d in other.terms.items():
                    k = _add_alpha(a, b)
                    out[k] = out.get(k, 0) + c * d
            return BaryPoly(out)
        return BaryPoly({a: c * other for a, c in self.terms.items()})

    __rmul__ = __mul__

    def dlambda(self, k):
        """Formal partial derivative with respect to lambda_k."""
        out = {}
        for a, c in self.terms.items():
            if a[k] > 0:
                b = tuple(a[m] - (m == k) for m in range(3))
                out[b] = out.get(b, 0) + c * a[k]
        return BaryPoly(out)

    def integrate(self, area):
        return sum((c * bary_factor(a) for a, c in self.terms.items()), Fraction(0)) * area

    def edge_integrate(self, opposite, length):
        return sum((c * edge_factor(a, opposite) for a, c in self.terms.items()),
                   Fraction(0)) * length

    def __call__(self, lam):
        return sum(c * lam[0] ** a[0] * lam[1] ** a[1] * lam[2] ** a[2]
                   for a, c in self.terms.items())

    def __repr__(self):
        return f"BaryPoly({self.terms})"


class Triangle:
    """Affine triangle geometry in generic arithmetic (floats or Fractions)."""

    def __init__(self, p0, p1, p2):
        self.points = (tuple(p0), tuple(p1), tuple(p2))
        (x0, y0), (x1, y1), (x2, y2) = self.points
        det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if det == 0:
            raise ValueError("degenerate triangle")
        self.area = det / 2
        self.signed = det > 0
        # signed det keeps the formula valid for either orientation
        grads = []
        for k in range(3):
            (xa, ya), (xb, yb) = self.points[(k + 1) % 3], self.points[(k + 2) % 3]
            grads.append(((ya - yb) / det, (xb - xa) / det))
        self.grads = tuple(grads)
        if det < 0:
            self.area = -self.area

    def point(self, k):
        return self.points[k]

    def vec(self, i, j):
        """x_j - x_i."""
        (a, b), (c, d) = self.points[i], self.points[j]
        return (c - a, d - b)

    def edge_length(self, opposite):
        i, j = ((opposite + 1) % 3, (opposite + 2) % 3)
        dx, dy = self.vec(i, j)
        return float(np.hypot(float(dx), float(dy)))

    def to_bary(self, x):
        lam = []
        for k in range(3):
            (xa, ya) = self.points[k]
            gx, gy = self.grads[k]
            # lambda_k(x) = 1 + grad . (x - x_k)
            lam.append(1 + gx * (x[0] - xa) + gy * (x[1] - ya))
        return tuple(lam)

    def from_bary(self, lam):
        return (sum(l * p[0] for l, p in zip(lam, self.points)),
                sum(l * p[1] for l, p in zip(lam, self.points)))


def _vadd(u, v):
    return (u[0] + v[0], u[1] + v[1])


def _vscale(c, u):
    return (c * u[0], c * u[1])


def dot(u, v):
    return u[0] * v[0] + u[1] * v[1]


class LocalField:
    """Vector polynomial sum_alpha c_alpha lambda^alpha on one triangle,
    with c_alpha in R^2."""

    __slots__ = ("tri", "terms")

    def __init__(self, tri, terms=None):
        self.tri = tri
        self.terms = {}
        for a, c in (terms or {}).items():
            if c[0] != 0 or c[1] != 0:
                self.terms[tuple(a)] = tuple(c)

    @classmethod
    def from_poly(cls, tri, poly, vector):
        return cls(tri, {a: _vscale(c, vector) for a, c in poly.terms.items()})

    @property
    def degree(self):
        return max((sum(a) for a in self.terms), default=0)

    def __add__(self, other):
        out = dict(self.terms)
        for a, c in other.terms.items():
            out[a] = _vadd(out.get(a, (0, 0)), c)
        return LocalField(self.tri, out)

    def __mul__(self, s):
        return LocalField(self.tri, {a: _vscale(s, c) for a, c in self.terms.items()})

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + other * -1

    def __call__(self, lam):
        x = y = 0
        for a, c in self.terms.items():
            m = lam[0] ** a[0] * lam[1] ** a[1] * lam[2] ** a[2]
            x += c[0] * m
            y += c[1] * m
        return (x, y)

    def component(self, d):
        return BaryPoly({a: c[d] for a, c in self.terms.items()})

    def dot_poly(self, other):
        """Scalar polynomial ``self . other``."""
        out = {}
        for a, c in self.terms.items():
            for b, d in other.terms.items():
                k = _add_alpha(a, b)
                out[k] = out.get(k, 0) + dot(c, d)
        return BaryPoly(out)

    def dot_vector(self, w):
        return BaryPoly({a: dot(c, w) for a, c in self.terms.items()})

    def partial(self, d):
        """Componentwise derivative along coordinate direction ``d``."""
        out = {}
        for a, c in self.terms.items():
            for k in range(3):
                if a[k] == 0:
                    continue
                b = tuple(a[m] - (m == k) for m in range(3))
                g = self.tri.grads[k][d] * a[k]
                out[b] = _vadd(out.get(b, (0, 0)), _vscale(g, c))
        return LocalField(self.tri, out)

    def curl(self):
        """2D curl, d z1/dx2 - d z2/dx1, as a BaryPoly."""
        return self.partial(1).component(0) - self.partial(0).component(1)

    def div(self):
        return self.partial(0).component(0) + self.partial(1).component(1)

    def integrate(self):
        return (self.component(0).integrate(self.tri.area),
                self.component(1).integrate(self.tri.area))



def cell_bubble(tri):
    """Scalar bubble ``b_T = (60/|T|) l1 l2 l3``, normalized to unit integral."""
    return BaryPoly.monomial((1, 1, 1), 60 / tri.area)


def edge_bubble(tri, i, j):
    """Tangential edge bubble ``6 l_i l_j (x_j - x_i)`` for local vertices i, j."""
    alpha = _add_alpha(_unit(i), _unit(j))
    return LocalField(tri, {alpha: _vscale(6, tri.vec(i, j))})


def normal_edge_bubble(tri, i, j):
    """``6 l_i l_j n`` with ``n`` the tangent ``x_j - x_i`` rotated by +90 degrees."""
    tx, ty = tri.vec(i, j)
    alpha = _add_alpha(_unit(i), _unit(j))
    return LocalField(tri, {alpha: (-6 * ty, 6 * tx)})


def whitney(tri, i, j):
    """Whitney form ``l_i grad l_j - l_j grad l_i`` for local vertices i, j."""
    gi, gj = tri.grads[i], tri.grads[j]
    return LocalField(tri, {_unit(i): gj, _unit(j): _vscale(-1, gi)})


def grad_lambda(tri, k):
    return LocalField(tri, {(0, 0, 0): tri.grads[k]})


def constant_field(tri, vector):
    return LocalField(tri, {(0, 0, 0): tuple(vector)})


def local_gram(A, B, tri=None):
    """Matrix of ``int_T a_i . b_j dx``.

    Entries are Fractions when all coefficients and the area are rational.
    """
    if tri is None:
        tri = (A[0] if A else B[0]).tri
    out = [[a.dot_poly(b).integrate(tri.area) for b in B] for a in A]
    return out


def to_float(mat):
    return np.array([[float(x) for x in row] for row in mat])


def field_edge_moment(field, tri, i, j):
    """``int_e field . (x_j - x_i) ds`` on the edge joining local vertices i, j."""
    opposite = 3 - i - j
    t = tri.vec(i, j)
    length = tri.edge_length(opposite)
    return field.dot_vector(t).edge_integrate(opposite, 1) * length


# ---------------------------------------------------------------------------
# reference tensors for vectorized global assembly

def p1_basis():
    return [BaryPoly.coordinate(k) for k in range(3)]


def p2_basis():
    """Quadratic Lagrange basis: three vertices, then midpoints of the edges
    opposite vertices 0, 1, 2."""
    lam = [BaryPoly.coordinate(k) for k in range(3)]
    verts = [lam[k] * (lam[k] * 2 - BaryPoly.monomial((0, 0, 0))) for k in range(3)]
    mids = [lam[(k + 1) % 3] * lam[(k + 2) % 3] * 4 for k in range(3)]
    return verts + mids


def mini_basis():
    """Linear basis plus the unscaled cubic bubble ``l1 l2 l3``."""
    return p1_basis() + [BaryPoly.monomial((1, 1, 1))]


_BASES = {"p1": p1_basis, "p2": p2_basis, "mini": mini_basis}


@lru_cache(maxsize=None)
def reference_tensors(kind):
    """Area-normalized exact integrals for a local basis ``kind``.

    Returns float arrays ``mass[a, b]``, ``stiff[a, b, k, l]`` (coefficient of
    ``grad l_k . grad l_l``), ``div[a, k, q]`` (coefficient of
    ``d l_k / dx_d`` against pressure basis ``l_q``) and ``mean[a]``.
    """
    basis = _BASES[kind]()
    nb = len(basis)
    dphi = [[b.dlambda(k) for k in range(3)] for b in basis]
    q = p1_basis()
    mass = np.array([[float((a * b).integrate(1)) for b in basis] for a in basis])
    stiff = np.zeros((nb, nb, 3, 3))
    div = np.zeros((nb, 3, 3))
    for a in range(nb):
        for k in range(3):
            for b in range(nb):
                for l in range(3):
                    stiff[a, b, k, l] = float((dphi[a][k] * dphi[b][l]).integrate(1))
            for m in range(3):
                div[a, k, m] = float((dphi[a][k] * q[m]).integrate(1))
    mean = np.array([float(b.integrate(1)) for b in basis])
    return mass, stiff, div, mean


def eval_basis(kind, lam):
    """Values of the local basis ``kind`` at barycentric points ``lam`` (m, 3)."""
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    cols = []
    for b in _BASES[kind]():
        v = np.zeros(len(lam))
        for a, c in b.terms.items():
            v += float(c) * lam[:, 0] ** a[0] * lam[:, 1] ** a[1] * lam[:, 2] ** a[2]
        cols.append(v)
    return np.column_stack(cols)


@lru_cache(maxsize=None)
def reference_cross(kind_a, kind_b):
    """Area-normalized ``int_T a_i b_j dx`` between two local bases."""
    A, B = _BASES[kind_a](), _BASES[kind_b]()
    return np.array([[float((a * b).integrate(1)) for b in B] for a in A])
