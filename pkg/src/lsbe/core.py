"""Least-squares problem containers, weighted residuals, and pair compression.

The central objects are an approximate least-squares solution X for
min ||AX - B||_F together with the weighted residual R_theta, which is the
quantity all backward-error formulas consume.  Everything here is a pure
function of its inputs; values are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, RankDeficient

# Numerical-rank threshold relative to the largest singular value.  Matches
# the backward error of a double-precision factorization.
TOL_RANK = 1e-12


def is_sparse(A) -> bool:
    return sp.issparse(A)


def _as_2d(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be 1- or 2-dimensional")
    return M


def _check_finite(M, name: str) -> None:
    data = M.data if is_sparse(M) else np.asarray(M)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{name} contains non-finite entries")


class MatrixOperator:
    """Minimal matvec/rmatvec view of a dense or sparse matrix."""

    def __init__(self, A):
        self.A = A
        self.shape = A.shape

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.A @ v

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        return self.A.T @ u


def as_operator(A):
    """Return an object exposing matvec/rmatvec/shape for A."""
    if hasattr(A, "matvec") and hasattr(A, "rmatvec") and hasattr(A, "shape"):
        return A
    return MatrixOperator(A)


@dataclass(frozen=True, eq=False)
class LSProblem:
    """A least-squares instance: operator A (m x n), right-hand side(s) B
    (m x d), and weighting theta.

    theta is a positive float; math.inf is the distinguished infinite
    weighting (it is a representable tag, never approximated by a large
    finite value).
    """

    A: object
    B: np.ndarray
    theta: float = math.inf

    def __post_init__(self):
        B = _as_2d(self.B, "B")
        object.__setattr__(self, "B", B)
        if self.A.ndim != 2:
            raise DimensionMismatch("A must be 2-dimensional")
        m, n = self.A.shape
        if m < 1 or n < 1 or B.shape[1] < 1:
            raise DimensionMismatch("all dimensions must be at least 1")
        if B.shape[0] != m:
            raise DimensionMismatch(
                f"B has {B.shape[0]} rows but A has {m}")
        _check_finite(self.A, "A")
        _check_finite(B, "B")
        if not (self.theta > 0):  # rejects NaN and nonpositive values
            raise ValueError("theta must be positive (math.inf allowed)")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class WeightedResidual:
    """Residual data for an approximate solution: R = B - AX and the
    theta-weighted residual Rtheta = R (theta^-2 I + X'X)^{-1/2}."""

    X: np.ndarray
    R: np.ndarray
    Rtheta: np.ndarray
    theta: float

    @property
    def norm_Rtheta(self) -> float:
        return float(np.linalg.norm(self.Rtheta))


@dataclass(frozen=True, eq=False)
class CompressedPair:
    """Row-compressed stand-in (TA, TR) for a pair (A, Rtheta).

    The Gram matrices are preserved: TA'TA = A'A, TR'TR = Rtheta'Rtheta and
    TA'TR = A'Rtheta, so every rotation-invariant quantity downstream (in
    particular the backward error) is unchanged.  normR carries
    ||Rtheta||_F from the original pair.
    """

    TA: np.ndarray
    TR: np.ndarray
    normR: float

    @property
    def k(self) -> int:
        return self.TA.shape[0]


def weighted_residual(problem: LSProblem, X) -> WeightedResidual:
    """Form R = B - AX and the weighted residual Rtheta.

    For a single right-hand side and finite theta this is
    theta * r / sqrt(1 + theta^2 ||x||^2); with theta = inf it is r / ||x||,
    which requires X to have full column rank.  For d > 1 the d x d matrix
    (theta^-2 I + X'X)^{-1/2} is applied on the right, computed from a
    symmetric eigendecomposition of the Gram matrix.

    Raises RankDeficient when theta = inf and X is numerically
    rank-deficient; the caller should supply a finite theta instead.
    """
    X = _as_2d(X, "X")
    m, n, d = problem.m, problem.n, problem.d
    if X.shape != (n, d):
        raise DimensionMismatch(f"X must be {n} x {d}, got {X.shape}")
    _check_finite(X, "X")

    R = problem.B - problem.A @ X
    theta = problem.theta
    infinite = math.isinf(theta)

    if infinite:
        sv = np.linalg.svd(X, compute_uv=False)
        if sv[0] == 0.0 or sv[-1] <= TOL_RANK * sv[0]:
            raise RankDeficient(
                "theta = inf requires X with full column rank; "
                "supply a finite theta")

    if d == 1:
        xnorm = float(np.linalg.norm(X))
        if infinite:
            scale = 1.0 / xnorm
        else:
            scale = theta / math.sqrt(1.0 + theta * theta * xnorm * xnorm)
        Rtheta = scale * R
    else:
        G = X.T @ X
        G = 0.5 * (G + G.T)
        w, V = np.linalg.eigh(G)
        w = np.maximum(w, 0.0)
        if infinite:
            diag = 1.0 / np.sqrt(w)
        else:
            diag = 1.0 / np.sqrt(theta ** -2 + w)
        Rtheta = R @ ((V * diag) @ V.T)

    return WeightedResidual(X=X, R=R, Rtheta=Rtheta, theta=theta)


def compress_pair(A, Rtheta) -> CompressedPair:
    """Compress (A, Rtheta) to min(m, n+d) rows via a thin QR of [A, Rtheta].

    When m <= n + d the pair is returned unchanged.  Rank-deficient inputs
    pass through; downstream code copes via continuity.
    """
    Rtheta = _as_2d(Rtheta, "Rtheta")
    if is_sparse(A):
        A = A.toarray()
    A = _as_2d(A, "A")
    m, n = A.shape
    if Rtheta.shape[0] != m:
        raise DimensionMismatch("A and Rtheta must have the same row count")
    d = Rtheta.shape[1]
    normR = float(np.linalg.norm(Rtheta))
    if m <= n + d:
        return CompressedPair(TA=A.copy(), TR=Rtheta.copy(), normR=normR)
    T = np.linalg.qr(np.hstack([A, Rtheta]), mode="r")
    return CompressedPair(TA=T[:, :n], TR=T[:, n:], normR=normR)
