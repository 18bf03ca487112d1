"""
Epsilon-dependent norms and the discrete uniform inf-sup constant.

Velocities are measured in ``L2 cap eps H1_0``,
``|v|^2 = |v|_{L2}^2 + eps^2 |grad v|^2``, pressures in the sum space
``H1 + eps^{-1} L2``,

    |q|^2 = inf_{q1 + q2 = q} |q1|_{H1}^2 + eps^{-2} |q2|_{L2}^2,

whose matrix is ``N_eps = (H^{-1} + eps^2 Mp^{-1})^{-1}`` with the full H1
matrix ``H = Kp + Mp``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import build_saddle
from .linalg import _complement_basis, factorize_spd


def intersection_norm(v, eps, M, K):
    """``sqrt(v^T M v + eps^2 v^T K v)``."""
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v @ (M @ v) + eps ** 2 * (v @ (K @ v))))


@dataclass(frozen=True, eq=False)
class EpsNormContext:
    """Pressure matrices for the sum norm.  ``weights`` (``m_i = int phi_i``)
    enables the mean-zero check; ``None`` skips it."""

    eps: float
    Mp: object
    Kp: object
    weights: np.ndarray = None

    @classmethod
    def from_system(cls, system):
        return cls(system.eps, system.Mp, system.Kp, system.pressure_weights)

    @property
    def H(self):
        return self.Kp + self.Mp

    def split(self, q, eps=None):
        """Optimal ``q1`` of the splitting, from ``(H + eps^-2 Mp) q1 = eps^-2 Mp q``."""
        eps = self.eps if eps is None else eps
        w = eps ** -2
        A = sp.csc_matrix(self.H + w * self.Mp) if sp.issparse(self.Mp) \
            else np.asarray(self.H + w * self.Mp)
        rhs = w * (self.Mp @ q)
        if sp.issparse(A):
            return factorize_spd(A).solve(rhs)
        return np.linalg.solve(A, rhs)

    def matrix(self, eps=None):
        """Dense ``N_eps``."""
        eps = self.eps if eps is None else eps
        H = _dense(self.H)
        Mp = _dense(self.Mp)
        return np.linalg.inv(np.linalg.inv(H) + eps ** 2 * np.linalg.inv(Mp))


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.atleast_2d(np.asarray(A, dtype=float))


def split_value(q1, q, eps, ctx):
    """``|q1|_{H1}^2 + eps^-2 |q - q1|_{L2}^2``."""
    q2 = q - q1
    return float(q1 @ (ctx.H @ q1) + eps ** -2 * (q2 @ (ctx.Mp @ q2)))


def sum_norm(q, eps, ctx):
    """Discrete ``|q|_{H1 + eps^-1 L2}``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if ctx.weights is not None:
        m = ctx.weights
        if abs(m @ q) > 1e-10 * np.linalg.norm(m) * max(np.linalg.norm(q), 1e-300):
            raise ValueError("q must have mean zero")
    q1 = ctx.split(q, eps)
    return float(np.sqrt(max(split_value(q1, q, eps, ctx), 0.0)))


def schur_dense(system):
    """Dense ``S = B (M + eps^2 K)^{-1} B^T``."""
    Bd = system.B.toarray()
    X = factorize_spd(system.velocity_block).solve(Bd.T)
    S = Bd @ X
    return 0.5 * (S + S.T)


def discrete_infsup(eps, mesh, element="taylor_hood", slit_pressure="continuous",
                    system=None):
    """``alpha_h(eps)``: ``alpha^2`` is the smallest eigenvalue of
    ``S q = alpha^2 N_eps q`` on mean-zero pressures."""
    system = build_saddle(eps, mesh, element, slit_pressure) if system is None \
        else system.with_eps(eps)
    ctx = EpsNormContext.from_system(system)
    S = schur_dense(system)
    try:
        N = ctx.matrix()
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular sum-norm matrix: {exc}") from exc
    Q = _complement_basis(ctx.weights[None], len(ctx.weights))
    Ns = Q.T @ N @ Q
    try:
        lam = sla.eigvalsh(Q.T @ S @ Q, 0.5 * (Ns + Ns.T))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"sum-norm matrix not positive on mean-zero space: {exc}") from exc
    return float(np.sqrt(max(lam.min(), 0.0)))
