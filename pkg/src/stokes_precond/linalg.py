"""
Sparse SPD factorizations, the block diagonal preconditioner and extreme
eigenvalues of preconditioned symmetric operators.
"""
import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class FactorizationError(np.linalg.LinAlgError):
    pass


class SPDSolver:
    """Direct solver for a sparse SPD matrix, optionally on the complement of
    a one-dimensional kernel.

    With a kernel vector ``null`` the matrix is grounded at the largest
    entry of ``null``; right-hand sides are first made orthogonal to
    ``null`` and solutions are normalized so that ``weight . x = 0``.
    """

    def __init__(self, A, null=None, weight=None):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.n = A.shape[0]
        self.null = None if null is None else np.asarray(null, dtype=float)
        self.weight = self.null if weight is None or null is None else np.asarray(weight, float)
        if self.null is not None:
            self.pin = int(np.argmax(np.abs(self.null)))
            keep = np.setdiff1d(np.arange(self.n), [self.pin])
            self.keep = keep
            A = A[keep][:, keep]
        self.lu = self._factor(A)

    @staticmethod
    def _factor(A):
        if A.shape[0] == 0:
            return None
        # symmetric ordering without row pivoting: diag(U) holds the LDL^T pivots
        lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A",
                       diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        piv = lu.U.diagonal()
        if not np.all(piv > 0):
            raise FactorizationError(f"non-positive pivot {piv.min():.3e}")
        return lu

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.null is None:
            return self.lu.solve(b) if self.lu is not None else b * 0.0
        z = self.null
        # project the right-hand side onto range(A) = null^perp
        b = b - np.multiply.outer(z, z @ b / (z @ z)) if b.ndim > 1 else b - z * (z @ b) / (z @ z)
        x = np.zeros_like(b)
        if self.lu is not None:
            x[self.keep] = self.lu.solve(b[self.keep])
        w = self.weight
        if x.ndim > 1:
            return x - np.multiply.outer(z, w @ x / (w @ z))
        return x - z * (w @ x) / (w @ z)

    __call__ = solve


def factorize_spd(A, null=None, weight=None):
    return SPDSolver(A, null=null, weight=weight)


class BlockPrecond:
    """``diag((M + eps^2 K)^{-1}, K_p^+ + eps^2 M_p^{-1})`` for a saddle system."""

    def __init__(self, system):
        self.system = system
        self.eps = system.eps
        ones = np.ones(system.n_pressure)
        m = system.pressure_weights
        self.velocity_solver = factorize_spd(system.velocity_block)
        self.pressure_lap_solver = factorize_spd(system.Kp, null=ones, weight=m)
        self.pressure_mass_solver = factorize_spd(system.Mp)

    @property
    def shape(self):
        n = self.system.n_velocity + self.system.n_pressure
        return (n, n)

    def apply_pressure(self, g):
        # restrict the dual residual to zero sum so both terms are mean zero
        g = g - np.multiply.outer(self.system.pressure_weights, g.sum(axis=0) / self.system.Mp.sum()) \
            if g.ndim > 1 else g - self.system.pressure_weights * g.sum() / self.system.Mp.sum()
        return self.pressure_lap_solver.solve(g) + self.eps ** 2 * self.pressure_mass_solver.solve(g)

    def apply(self, r):
        nv = self.system.n_velocity
        return np.concatenate([self.velocity_solver.solve(r[:nv]), self.apply_pressure(r[nv:])])

    __call__ = apply

    def as_operator(self):
        return spla.LinearOperator(self.shape, matvec=self.apply, dtype=float)

    def pressure_dense(self):
        """Dense SPD matrix acting as the pressure block on zero-sum residuals
        and mapping constants to constants."""
        s = self.system
        m = s.pressure_weights
        lap = np.linalg.inv((s.Kp + sp.csr_matrix(np.outer(m, m))).toarray())
        return lap + self.eps ** 2 * np.linalg.inv(s.Mp.toarray())


def _dense(op, n):
    if sp.issparse(op):
        return op.toarray()
    if isinstance(op, np.ndarray):
        return op
    if callable(op) and not hasattr(op, "matmat"):
        return np.column_stack([op(e) for e in np.eye(n)])
    return np.asarray(op @ np.eye(n))


def _complement_basis(vectors, n):
    """Orthonormal basis of the orthogonal complement of ``vectors``."""
    if vectors is None or len(vectors) == 0:
        return None
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    q, _ = np.linalg.qr(V.T, mode="complete")
    return q[:, V.shape[0]:]


def eig_extremes_sym(A, B, deflate=None, method="dense", **kw):
    """Extreme eigenvalue magnitudes ``(min |lam|, max |lam|)`` of ``B A``.

    ``A`` is symmetric, ``B`` symmetric positive definite; ``deflate`` holds
    kernel vectors of ``A`` whose zero eigenvalues are excluded.
    """
    lam = eigvals_sym(A, B, deflate=deflate, method=method, **kw)
    mag = np.abs(lam)
    return float(mag.min()), float(mag.max())


def eigvals_sym(A, B, deflate=None, method="dense", **kw):
    n = A.shape[0]
    if hasattr(B, "shape") and B.shape[0] != n:
        raise ValueError(f"size mismatch: A is {A.shape}, B is {B.shape}")
    if method == "dense":
        Ad = _dense(A, n)
        Bd = _dense(B, n)
        L = sla.cholesky(0.5 * (Bd + Bd.T), lower=True)
        C = L.T @ Ad @ L
        C = 0.5 * (C + C.T)
        if deflate is not None:
            z = np.atleast_2d(deflate)
            # null vectors of L^T A L are L^{-1} z
            y = sla.solve_triangular(L, z.T, lower=True).T
            Q = _complement_basis(y, n)
            C = Q.T @ C @ Q
        return sla.eigvalsh(C)
    if method == "lanczos":
        return lanczos_eigvals(A, B, deflate=deflate, **kw)
    raise ValueError(f"unknown method {method!r}")


def _matvec(op):
    if callable(op) and not hasattr(op, "shape"):
        return op
    return lambda x: op @ x


def lanczos_eigvals(A, B, deflate=None, steps=200, seed=0, tol=1e-10):
    """Ritz values of ``A B`` in the ``B`` inner product (same spectrum as
    ``B A``) by Lanczos with full reorthogonalization.

    The start vector lies in ``range(A)``; kernel modes given in ``deflate``
    are not amplified and near-zero Ritz values (``|theta| < tol * max``)
    are discarded as deflated.
    """
    n = A.shape[0]
    Amv, Bmv = _matvec(A), _matvec(B)
    Z = None if deflate is None else np.atleast_2d(np.asarray(deflate, dtype=float))

    def project(x):
        if Z is not None:
            for z in Z:
                x = x - z * (z @ x) / (z @ z)
        return x

    rng = np.random.default_rng(seed)
    v = project(Amv(rng.standard_normal(n)))
    Bv = Bmv(v)
    nrm = np.sqrt(v @ Bv)
    V, BV = [v / nrm], [Bv / nrm]
    alphas, betas = [], []
    m = min(steps, n)
    for k in range(m):
        w = Amv(BV[k])
        a = w @ BV[k]
        alphas.append(a)
        w0 = np.sqrt(max(w @ Bmv(w), 0.0))
        # two passes of full reorthogonalization in the B inner product
        for _ in range(2):
            Vm = np.array(V)
            coeffs = np.array(BV) @ w
            w = w - coeffs @ Vm
        w = project(w)
        Bw = Bmv(w)
        b = np.sqrt(max(w @ Bw, 0.0))
        # near-total cancellation: the Krylov space is invariant, and what is
        # left is rounding noise that would pollute the Ritz values
        if b < 1e-8 * max(w0, 1e-300) or k == m - 1:
            break
        betas.append(b)
        V.append(w / b)
        BV.append(Bw / b)
    theta = sla.eigvalsh_tridiagonal(np.array(alphas), np.array(betas[:len(alphas) - 1]))
    big = np.abs(theta).max()
    return theta[np.abs(theta) > tol * big]


def schur_spectrum(system, precond=None):
    """Eigenvalues ``mu`` of ``P S`` on mean-zero pressures, where
    ``S = B (M + eps^2 K)^{-1} B^T`` and ``P`` is the pressure block of the
    preconditioner."""
    precond = BlockPrecond(system) if precond is None else precond
    Bd = system.B.toarray()
    X = precond.velocity_solver.solve(Bd.T)
    S = Bd @ X
    S = 0.5 * (S + S.T)
    P = precond.pressure_dense()
    L = sla.cholesky(0.5 * (P + P.T), lower=True)
    C = L.T @ S @ L
    mu = sla.eigvalsh(0.5 * (C + C.T))
    # drop the constant-pressure mode
    return np.sort(mu)[1:]


def condition_number(system, precond=None, method="schur", **kw):
    """``max |lam| / min |lam|`` over the nonzero spectrum of ``B A``.

    ``method="schur"`` uses the exact reduction ``lam (lam - 1) = mu`` with
    ``mu`` the spectrum of the preconditioned Schur complement, plus the
    eigenvalue 1 carried by the kernel of the divergence.  ``"dense"`` and
    ``"lanczos"`` work on the full block operator.
    """
    precond = BlockPrecond(system) if precond is None else precond
    if method == "schur":
        mu = schur_spectrum(system, precond)
        if mu[0] <= 0:
            raise np.linalg.LinAlgError("singular preconditioned operator after deflation")
        lam_max = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * mu[-1]))
        lam_neg = 0.5 * (np.sqrt(1.0 + 4.0 * mu[0]) - 1.0)
        lam_min = min(1.0, lam_neg) if system.n_velocity > system.n_pressure - 1 else lam_neg
        return float(lam_max / lam_min)
    A = system.matrix()
    if method == "dense":
        n = A.shape[0]
        nv = system.n_velocity
        Bd = np.zeros((n, n))
        Bd[:nv, :nv] = np.linalg.inv(system.velocity_block.toarray())
        Bd[nv:, nv:] = precond.pressure_dense()
        lo, hi = eig_extremes_sym(A, Bd, deflate=system.null_vec, method="dense")
    elif method == "lanczos":
        lo, hi = eig_extremes_sym(A, precond.apply, deflate=system.null_vec,
                                  method="lanczos", **kw)
    else:
        raise ValueError(f"unknown method {method!r}")
    if lo <= 0:
        raise np.linalg.LinAlgError("singular preconditioned operator after deflation")
    return hi / lo
