"""Cheap backward-error estimates and bounds.

Contains the regularized-norm estimate nu (exact and sketched), the stable
rank-one closed form, the sketched lower-bound pipeline (direction solve,
iterative refinement, recycling), and two upper bounds built from an
approximate eigenvector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TOL_RANK, is_sparse
from .errors import BothZero, ShiftNotPD, ZeroDeflator
from .exact import mu_exact


@dataclass(frozen=True, eq=False)
class KWFactorization:
    """Retained SVD data of A (or of a sketch SA): singular values and the
    full set of right singular vectors.

    This is the O(n^2)-per-evaluation backend for the regularized-norm
    estimate and the lower-bound direction solves.  Immutable; safe to
    share across threads.
    """

    singular_values: np.ndarray
    right_vectors: np.ndarray
    source: str  # "exact_A" or "sketched_SA"

    @property
    def n(self) -> int:
        return self.right_vectors.shape[0]


def kw_factorization(M, source: str = "exact_A") -> KWFactorization:
    """Build the factorization from a k x n matrix.

    When k < n the matrix is padded with zero rows so the returned right
    singular vectors always span all of R^n (the Gram matrix M'M is
    unchanged by the padding).
    """
    if is_sparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    k, n = M.shape
    if k < n:
        M = np.vstack([M, np.zeros((n - k, n))])
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    return KWFactorization(singular_values=s, right_vectors=Vt.T,
                           source=source)


@dataclass(frozen=True, eq=False)
class RecycledDirection:
    """A frozen unit direction p with its product Ap, reusable across
    residuals without touching A."""

    p: np.ndarray
    Ap: np.ndarray
    born_at: int = 0
    mu_est_used: float = 0.0

    def __post_init__(self):
        if abs(float(np.linalg.norm(self.p)) - 1.0) > 1e-12:
            raise ValueError("recycled direction must be unit-normalized")


def mu_rank_one(a, r) -> float:
    """Backward error of a pair of vectors: 2 |a'r| / (||a+r|| + ||a-r||).

    This is the cancellation-free form; raises BothZero when both vectors
    vanish (the value is undefined there).
    """
    a = np.asarray(a, dtype=float).ravel()
    r = np.asarray(r, dtype=float).ravel()
    num = 2.0 * abs(float(a @ r))
    den = float(np.linalg.norm(a + r) + np.linalg.norm(a - r))
    if den == 0.0:
        raise BothZero("mu(a, r) is undefined for a = r = 0")
    return num / den


def _kw_eval(kwf: KWFactorization, At_r, norm_r: float) -> float:
    """Evaluate ||(M'M + ||r||^2 I)^{-1/2} At_r|| from the retained SVD."""
    At_r = np.asarray(At_r, dtype=float).ravel()
    z = kwf.right_vectors.T @ At_r
    s = kwf.singular_values
    if norm_r == 0.0:
        if float(np.linalg.norm(At_r)) == 0.0:
            return 0.0
        if np.any(s == 0.0):
            raise ShiftNotPD("regularizer is zero and M is rank-deficient")
    return math.sqrt(float(np.sum(z * z / (s * s + norm_r ** 2))))


def kw(A, r_theta) -> float:
    """The regularized-norm estimate nu = ||(A'A + ||r||^2 I)^{-1/2} A'r||.

    Always within a factor sqrt(2) below the true backward error.  A is
    row-compressed by a QR factorization when m > n + 1; the value is
    unchanged by rotation invariance.
    """
    r = np.asarray(r_theta, dtype=float).ravel()
    if is_sparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    At_r = A.T @ r
    M = np.linalg.qr(A, mode="r") if m > n + 1 else A
    return _kw_eval(kw_factorization(M, "exact_A"), At_r,
                    float(np.linalg.norm(r)))


def kw_multi(A, Rtheta) -> float:
    """Multi-right-hand-side estimate: the root sum of squares of nu over
    the right singular vectors of Rtheta."""
    Rtheta = np.asarray(Rtheta, dtype=float)
    if Rtheta.ndim == 1:
        Rtheta = Rtheta[:, None]
    if is_sparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    M = np.linalg.qr(A, mode="r") if m > n + 1 else A
    kwf = kw_factorization(M, "exact_A")
    At_R = A.T @ Rtheta
    _, sR, Wt = np.linalg.svd(Rtheta, full_matrices=False)
    total = 0.0
    for i in range(Rtheta.shape[1]):
        total += _kw_eval(kwf, At_R @ Wt[i], float(sR[i])) ** 2
    return math.sqrt(total)


def sketched_kw(kwf: KWFactorization, At_r, norm_r: float) -> float:
    """Sketched estimate: nu with A'A replaced by the retained (SA)'(SA).

    Needs only At_r = A'r plus O(n^2) work; never touches A itself.
    """
    return _kw_eval(kwf, At_r, norm_r)


def lb_direction(kwf: KWFactorization, At_r, norm_r: float,
                 mu_est: float = 0.0) -> np.ndarray:
    """Solve ((SA)'(SA) + (||r||^2 - mu_est^2) I) p = A'r for the
    (unnormalized) lower-bound direction.

    Raises ShiftNotPD when mu_est^2 >= ||r||^2 + sigma_min^2(SA); the
    caller should reset mu_est to 0.
    """
    At_r = np.asarray(At_r, dtype=float).ravel()
    s = kwf.singular_values
    shift = norm_r ** 2 - mu_est ** 2
    smin2 = float(s[-1] ** 2)
    if shift + smin2 <= 0.0:
        raise ShiftNotPD(
            "mu_est^2 must stay below ||r||^2 + sigma_min^2 of the sketch")
    z = kwf.right_vectors.T @ At_r
    return kwf.right_vectors @ (z / (s * s + shift))


def lb_evaluate(Ap, r_theta) -> float:
    """Rank-one backward error of (Ap, r_theta); a guaranteed lower bound
    on mu(A, r_theta) whenever p was unit-normalized before forming Ap."""
    return mu_rank_one(Ap, r_theta)


def lb_refine(p_tilde, kwf: KWFactorization, A_ops, r_theta,
              norm_r: float, mu_est: float = 0.0) -> np.ndarray:
    """One iterative-refinement step on the lower-bound direction.

    Uses the sketch factorization as the approximate inverse and costs one
    matvec plus one rmatvec against the true operator.
    """
    p_tilde = np.asarray(p_tilde, dtype=float).ravel()
    r = np.asarray(r_theta, dtype=float).ravel()
    s = kwf.singular_values
    shift = norm_r ** 2 - mu_est ** 2
    if shift + float(s[-1] ** 2) <= 0.0:
        raise ShiftNotPD(
            "mu_est^2 must stay below ||r||^2 + sigma_min^2 of the sketch")
    residual = A_ops.rmatvec(r - A_ops.matvec(p_tilde)) - shift * p_tilde
    z = kwf.right_vectors.T @ residual
    return p_tilde + kwf.right_vectors @ (z / (s * s + shift))


def lb_recycled(direction: RecycledDirection, r_theta) -> float:
    """Lower bound from a frozen direction: zero products with A."""
    return mu_rank_one(direction.Ap, r_theta)


def ub_deflation(Ap_tilde, r_theta, At_u) -> float:
    """Upper bound from deflating along u = Ap - r_theta:
    sqrt((||A'u|| / ||u||)^2 + ||(I - u u+) r_theta||^2).

    At_u must be A'u for u = Ap_tilde - r_theta (one rmatvec).  Raises
    ZeroDeflator when u vanishes.
    """
    Ap_tilde = np.asarray(Ap_tilde, dtype=float).ravel()
    r = np.asarray(r_theta, dtype=float).ravel()
    At_u = np.asarray(At_u, dtype=float).ravel()
    u = Ap_tilde - r
    nu2 = float(u @ u)
    if nu2 == 0.0:
        raise ZeroDeflator("deflation vector Ap - r_theta is zero")
    term_col = float(At_u @ At_u) / nu2
    term_res = float(r @ r) - float(u @ r) ** 2 / nu2
    return math.sqrt(term_col + max(term_res, 0.0))


def ub_generous(A_cols_2, Ur) -> float:
    """Upper bound mu(U'A, U'r_theta) for an orthonormal basis U of
    [Ap, r_theta]; A_cols_2 holds the compressed rows U'A."""
    A2 = np.asarray(A_cols_2, dtype=float)
    Ur = np.asarray(Ur, dtype=float).ravel()
    return mu_exact(A2, Ur[:, None]).mu


def pair_basis(Ap, r_theta, tol: float = TOL_RANK) -> np.ndarray:
    """Orthonormal basis (m x 1 or m x 2) for span{Ap, r_theta}, dropping
    a column when the pair is numerically rank one."""
    a = np.asarray(Ap, dtype=float).ravel()
    r = np.asarray(r_theta, dtype=float).ravel()
    na = float(np.linalg.norm(a))
    nr = float(np.linalg.norm(r))
    if na == 0.0 and nr == 0.0:
        raise BothZero("both Ap and r_theta are zero")
    if na == 0.0:
        return (r / nr)[:, None]
    q1 = a / na
    w = r - q1 * float(q1 @ r)
    nw = float(np.linalg.norm(w))
    if nw <= tol * max(na, nr):
        return q1[:, None]
    return np.column_stack([q1, w / nw])


__all__ = [
    "KWFactorization", "kw_factorization", "RecycledDirection",
    "mu_rank_one", "kw", "kw_multi", "sketched_kw", "lb_direction",
    "lb_evaluate", "lb_refine", "lb_recycled", "ub_deflation",
    "ub_generous", "pair_basis",
]
