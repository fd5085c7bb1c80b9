"""Seeded randomized embeddings and distortion measurement.

Operators are immutable descriptions; their action is a deterministic pure
function of (kind, rows, cols, seed, params), so traces built on top of
them reproduce bit for bit.  The dense Gaussian sketch is streamed in row
blocks and never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .core import TOL_RANK, is_sparse
from .errors import RankDeficient, ShapeMismatch

_GAUSS_BLOCK = 256


@dataclass(frozen=True, eq=False)
class SketchOperator:
    """A seeded random embedding S of shape rows x cols.

    kinds:
      gaussian      entries N(0, 1/rows), streamed in row blocks;
      sparse_sign   nnz_per_col entries +-1/sqrt(nnz_per_col) per column;
      identity      pass-through (rows must equal cols);
      synthetic_eta test-only map with exactly known distortion: an
                    orthonormal lift composed with a scaling that acts as
                    (1 + eta) and (1 - eta) on a designated orthonormal
                    pair of directions (seed-random when subspace is None)
                    and as the identity elsewhere.
    """

    kind: str
    rows: int
    cols: int
    seed: int = 0
    nnz_per_col: int = 8
    eta: float = 0.0
    subspace: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in {"gaussian", "sparse_sign", "identity",
                             "synthetic_eta"}:
            raise ValueError(f"unknown sketch kind {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        if self.kind == "identity" and self.rows != self.cols:
            raise ValueError("identity sketch requires rows == cols")
        if self.kind == "sparse_sign" and not (
                1 <= self.nnz_per_col <= self.rows):
            raise ValueError("nnz_per_col must lie in [1, rows]")
        if self.kind == "synthetic_eta":
            if not (0.0 <= self.eta < 1.0):
                raise ValueError("eta must lie in [0, 1)")
            if self.rows < self.cols:
                raise ValueError("synthetic_eta requires rows >= cols")
            if self.cols < 2:
                raise ValueError("synthetic_eta requires cols >= 2")
            if self.subspace is not None:
                U = np.asarray(self.subspace, dtype=float)
                if U.ndim != 2 or U.shape[0] != self.cols or U.shape[1] < 2:
                    raise ValueError("subspace must be cols x (>=2)")
                if np.max(np.abs(U.T @ U - np.eye(U.shape[1]))) > 1e-10:
                    raise ValueError("subspace columns must be orthonormal")
                object.__setattr__(self, "subspace", U)


def _synthetic_parts(S: SketchOperator):
    rng = np.random.default_rng(S.seed)
    lift, _ = np.linalg.qr(rng.standard_normal((S.rows, S.cols)))
    if S.subspace is not None:
        u_plus, u_minus = S.subspace[:, 0], S.subspace[:, 1]
    else:
        pair, _ = np.linalg.qr(rng.standard_normal((S.cols, 2)))
        u_plus, u_minus = pair[:, 0], pair[:, 1]
    return lift, u_plus, u_minus


def _sparse_sign_matrix(S: SketchOperator) -> sp.csr_matrix:
    rng = np.random.default_rng(S.seed)
    nnz = S.nnz_per_col
    rows_idx = np.empty(S.cols * nnz, dtype=np.int64)
    vals = np.empty(S.cols * nnz)
    scale = 1.0 / np.sqrt(nnz)
    for j in range(S.cols):
        sl = slice(j * nnz, (j + 1) * nnz)
        rows_idx[sl] = rng.choice(S.rows, size=nnz, replace=False)
        vals[sl] = scale * (2.0 * rng.integers(0, 2, size=nnz) - 1.0)
    cols_idx = np.repeat(np.arange(S.cols), nnz)
    return sp.csr_matrix((vals, (rows_idx, cols_idx)),
                         shape=(S.rows, S.cols))


def apply_sketch(S: SketchOperator, V) -> np.ndarray:
    """Apply the sketch to an array with S.cols rows; 1-D inputs give 1-D
    outputs.  Identical (kind, rows, cols, seed, params) always produces
    the identical action."""
    squeeze = False
    if not is_sparse(V):
        V = np.asarray(V, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
            squeeze = True
    if V.shape[0] != S.cols:
        raise ShapeMismatch(
            f"sketch expects {S.cols} rows, input has {V.shape[0]}")

    if S.kind == "identity":
        out = V.toarray() if is_sparse(V) else np.array(V, copy=True)
    elif S.kind == "gaussian":
        rng = np.random.default_rng(S.seed)
        scale = 1.0 / np.sqrt(S.rows)
        out = np.empty((S.rows, V.shape[1]))
        for start in range(0, S.rows, _GAUSS_BLOCK):
            stop = min(start + _GAUSS_BLOCK, S.rows)
            block = rng.standard_normal((stop - start, S.cols)) * scale
            if is_sparse(V):
                out[start:stop] = (V.T @ block.T).T
            else:
                out[start:stop] = block @ V
    elif S.kind == "sparse_sign":
        out = _sparse_sign_matrix(S) @ V
        if is_sparse(out):
            out = out.toarray()
    else:  # synthetic_eta
        lift, u_plus, u_minus = _synthetic_parts(S)
        Vd = V.toarray() if is_sparse(V) else V
        scaled = (Vd + S.eta * np.outer(u_plus, u_plus @ Vd)
                  - S.eta * np.outer(u_minus, u_minus @ Vd))
        out = lift @ scaled
    return out[:, 0] if squeeze else out


def measure_distortion(S: SketchOperator, A, trials: int = 0,
                       seed: int = 0) -> tuple[float, float]:
    """One-sided distortions (eta_low, eta_high) of the sketch on the
    column space of A, so that

        (1 - eta_low) ||Ay|| <= ||S(Ay)|| <= (1 + eta_high) ||Ay||.

    With trials == 0 the exact extremal values are computed from the
    generalized eigenvalues of (SA)'(SA) against A'A, which requires A to
    have numerical full column rank (RankDeficient otherwise).  With
    trials > 0 the distortions are sampled over random directions, which
    scales to problems where the exact path is too expensive.
    """
    Ad = A.toarray() if is_sparse(A) else np.asarray(A, dtype=float)
    if trials > 0:
        rng = np.random.default_rng(seed)
        lo, hi = np.inf, -np.inf
        for _ in range(trials):
            y = rng.standard_normal(Ad.shape[1])
            Ay = Ad @ y
            ny = float(np.linalg.norm(Ay))
            if ny == 0.0:
                continue
            ratio = float(np.linalg.norm(apply_sketch(S, Ay))) / ny
            lo, hi = min(lo, ratio), max(hi, ratio)
        return 1.0 - lo, hi - 1.0

    sv = np.linalg.svd(Ad, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= TOL_RANK * sv[0]:
        raise RankDeficient("exact distortion needs full column rank")
    B = apply_sketch(S, Ad)
    G1 = B.T @ B
    G0 = Ad.T @ Ad
    gamma = scipy.linalg.eigh(0.5 * (G1 + G1.T), 0.5 * (G0 + G0.T),
                              eigvals_only=True)
    gamma = np.maximum(gamma, 0.0)
    return 1.0 - float(np.sqrt(gamma[0])), float(np.sqrt(gamma[-1])) - 1.0


__all__ = ["SketchOperator", "apply_sketch", "measure_distortion"]
