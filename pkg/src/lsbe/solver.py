"""LSMR iterative least-squares solver with backward-error estimation hooks.

The solver runs the standard Golub-Kahan bidiagonalization recurrences that
minimize ||A'r|| over a growing Krylov subspace, and every estimate_every
iterations refreshes the residual explicitly, evaluates the configured
estimates and bounds on the weighted residual, and emits a trace row.
Every product with A (including those spent on estimation) is counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .core import as_operator, is_sparse
from .errors import DimensionMismatch, NoConvergence, ShiftNotPD
from .estimates import (KWFactorization, RecycledDirection, lb_direction,
                        lb_refine, pair_basis, sketched_kw, ub_deflation,
                        ub_generous)
from .exact import mu_exact, mu_fixed_point


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for a solver run.

    atol drives the normwise stopping test ||A'r|| <= atol ||A||_F ||r||;
    estimate_every sets the trace cadence; recycle_threshold is compared
    against the recycled bound relative to ||A||_2; refine_steps counts
    refinement passes per trace row (0 disables); compute_true_mu adds the
    exact backward error to each row (desk scale only: it densifies A);
    theta is the residual weighting, math.inf meaning normalization by
    ||x||.  norm_A_2 may supply a known spectral norm, otherwise it is
    estimated by power iteration at setup.
    """

    atol: float = 1e-12
    max_iters: int | None = None
    estimate_every: int = 1
    recycle_threshold: float = 1e-12
    refine_steps: int = 0
    compute_true_mu: bool = False
    theta: float = math.inf
    norm_A_2: float | None = None

    def __post_init__(self):
        if not (self.atol > 0):
            raise ValueError("atol must be positive")
        if self.estimate_every < 1:
            raise ValueError("estimate_every must be at least 1")


TRACE_COLUMNS = [
    "iter", "norm_r", "norm_Atr", "norm_r_theta", "nu_sketched",
    "lb_fresh", "lb_refined", "lb_recycled", "ub_deflation", "ub_generous",
    "mu_true", "matvec_count", "rmatvec_count",
]


@dataclass(frozen=True)
class TraceRow:
    """One traced iteration.  Estimator fields are NaN when not computed
    (no sketch configured, refinement disabled, or true mu off)."""

    iter: int
    norm_r: float
    norm_Atr: float
    norm_r_theta: float
    nu_sketched: float
    lb_fresh: float
    lb_refined: float
    lb_recycled: float
    ub_deflation: float
    ub_generous: float
    mu_true: float
    matvec_count: int
    rmatvec_count: int


@dataclass
class SolverTrace:
    """Trace rows plus run-level diagnostics.

    est_norm_r / est_norm_Atr hold the solver's internal recurrence
    estimates for every iteration (not only traced ones), for drift
    auditing against the explicit values in the rows.
    """

    rows: list[TraceRow] = field(default_factory=list)
    est_norm_r: list[float] = field(default_factory=list)
    est_norm_Atr: list[float] = field(default_factory=list)
    norm_A_fro: float = 0.0
    norm_A_fro_source: str = "recurrence"
    norm_A_2: float = 0.0
    stop_reason: str = ""
    iterations: int = 0
    setup_matvecs: int = 0
    setup_rmatvecs: int = 0


class CountingOperator:
    """Wraps an operator and counts every matvec/rmatvec through it."""

    def __init__(self, A):
        self._op = as_operator(A)
        self.shape = self._op.shape
        self.matvecs = 0
        self.rmatvecs = 0

    def matvec(self, v):
        self.matvecs += 1
        return self._op.matvec(v)

    def rmatvec(self, u):
        self.rmatvecs += 1
        return self._op.rmatvec(u)


@dataclass
class EstimatorHooks:
    """Estimator configuration for a solver run.

    kwf holds the retained sketch factorization (None disables the
    sketch-based estimates); mu_est is the shift estimate fed to the
    direction solves; stop_when, if set, is evaluated on every trace row
    and stops the solver with reason "estimator" when it returns True.
    """

    kwf: KWFactorization | None = None
    mu_est: float = 0.0
    stop_when: Callable[[TraceRow], bool] | None = None


def _sym_ortho(a: float, b: float) -> tuple[float, float, float]:
    """Stable Givens rotation: returns (c, s, r) with c*a + s*b = r,
    -s*a + c*b = 0."""
    if b == 0.0:
        return math.copysign(1.0, a), 0.0, abs(a)
    if a == 0.0:
        return 0.0, math.copysign(1.0, b), abs(b)
    if abs(b) > abs(a):
        tau = a / b
        s = math.copysign(1.0, b) / math.sqrt(1.0 + tau * tau)
        c = s * tau
        r = b / s
    else:
        tau = b / a
        c = math.copysign(1.0, a) / math.sqrt(1.0 + tau * tau)
        s = c * tau
        r = a / c
    return c, s, r


def _frobenius_norm(A) -> float | None:
    if is_sparse(A):
        return float(np.sqrt(np.sum(A.data ** 2)))
    if isinstance(A, np.ndarray):
        return float(np.linalg.norm(A))
    return None


def _power_spectral_norm(ops: CountingOperator, steps: int = 20) -> float:
    """Spectral norm estimate by power iteration on A'A (seeded, so runs
    are reproducible)."""
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(ops.shape[1])
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    sigma2 = 0.0
    for _ in range(steps):
        w = ops.rmatvec(ops.matvec(v))
        sigma2 = float(np.linalg.norm(w))
        if sigma2 == 0.0:
            return 0.0
        v = w / sigma2
    return math.sqrt(sigma2)


def recycle_policy(row: TraceRow, direction: RecycledDirection,
                   config: SolverConfig) -> str:
    """Decide whether a recycled direction is still useful.

    Recompute when the recycled bound, relative to ||A||_2, has fallen
    below the configured threshold; keep otherwise.  config.norm_A_2 must
    be resolved (the solver always passes a resolved config).
    """
    if config.norm_A_2 is None or config.norm_A_2 <= 0.0:
        raise ValueError("recycle_policy needs a resolved norm_A_2")
    rel = row.lb_recycled / config.norm_A_2
    return "recompute" if rel < config.recycle_threshold else "keep"


def _theta_scale(theta: float, normx: float) -> float:
    if math.isinf(theta):
        return 1.0 / normx if normx > 0.0 else math.nan
    return theta / math.sqrt(1.0 + theta * theta * normx * normx)


def _safe_rank_one(a, r) -> float:
    num = 2.0 * abs(float(a @ r))
    den = float(np.linalg.norm(a + r) + np.linalg.norm(a - r))
    return num / den if den > 0.0 else 0.0


class _TrueMu:
    """Cached-SVD exact backward error for trace rows.

    The secular-equation route keeps full relative accuracy when mu is
    tiny, where the eigenvalue formula loses everything to cancellation
    against ||r_theta||^2; the eigenvalue route remains as fallback.
    """

    def __init__(self, A):
        Ad = A.toarray() if is_sparse(A) else np.asarray(A, dtype=float)
        self.A = Ad
        U, s, _ = np.linalg.svd(Ad, full_matrices=False)
        self.svd = (U, s)

    def __call__(self, r_theta: np.ndarray) -> float:
        try:
            return mu_fixed_point(self.A, r_theta, svd=self.svd).mu
        except NoConvergence:
            return mu_exact(self.A, r_theta[:, None]).mu


def _estimate_row(itn, ops, b, x, config, hooks, direction, true_mu):
    """Refresh the residual, evaluate the estimator suite, and build a
    trace row.  Returns (row, direction), where direction may have been
    replaced per the recycle policy."""
    r = b - ops.matvec(x)
    norm_r = float(np.linalg.norm(r))
    At_r = ops.rmatvec(r)
    norm_Atr = float(np.linalg.norm(At_r))
    cth = _theta_scale(config.theta, float(np.linalg.norm(x)))

    nu_sk = lb_f = lb_ref = lb_rec = ub_def = ub_gen = mu_t = math.nan
    norm_rth = math.nan
    fresh: RecycledDirection | None = None
    if math.isfinite(cth):
        r_th = cth * r
        norm_rth = cth * norm_r
        At_rth = cth * At_r
        if true_mu is not None:
            mu_t = true_mu(r_th)
        if hooks.kwf is not None:
            nu_sk = sketched_kw(hooks.kwf, At_rth, norm_rth)
            try:
                p_tilde = lb_direction(hooks.kwf, At_rth, norm_rth,
                                       hooks.mu_est)
                mu_est_used = hooks.mu_est
            except ShiftNotPD:
                p_tilde = lb_direction(hooks.kwf, At_rth, norm_rth, 0.0)
                mu_est_used = 0.0
            np_t = float(np.linalg.norm(p_tilde))
            if np_t > 0.0:
                p_hat = p_tilde / np_t
                Ap = ops.matvec(p_hat)
                fresh = RecycledDirection(p=p_hat, Ap=Ap, born_at=itn,
                                          mu_est_used=mu_est_used)
                lb_f = _safe_rank_one(Ap, r_th)
                if config.refine_steps > 0:
                    q = p_tilde
                    for _ in range(config.refine_steps):
                        q = lb_refine(q, hooks.kwf, ops, r_th, norm_rth,
                                      mu_est_used)
                    nq = float(np.linalg.norm(q))
                    if nq > 0.0:
                        lb_ref = _safe_rank_one(ops.matvec(q / nq), r_th)
                if direction is None:
                    direction = fresh
                lb_rec = _safe_rank_one(direction.Ap, r_th)
                u_def = Ap - r_th
                if float(np.linalg.norm(u_def)) > 0.0:
                    At_u = ops.rmatvec(u_def)
                    ub_def = ub_deflation(Ap, r_th, At_u)
                if norm_rth > 0.0 or float(np.linalg.norm(Ap)) > 0.0:
                    U = pair_basis(Ap, r_th)
                    rows_UA = np.stack(
                        [ops.rmatvec(U[:, i]) for i in range(U.shape[1])])
                    ub_gen = ub_generous(rows_UA, U.T @ r_th)
            else:
                lb_f = lb_rec = 0.0
                if direction is not None:
                    lb_rec = _safe_rank_one(direction.Ap, r_th)

    row = TraceRow(
        iter=itn, norm_r=norm_r, norm_Atr=norm_Atr, norm_r_theta=norm_rth,
        nu_sketched=nu_sk, lb_fresh=lb_f, lb_refined=lb_ref,
        lb_recycled=lb_rec, ub_deflation=ub_def, ub_generous=ub_gen,
        mu_true=mu_t, matvec_count=ops.matvecs, rmatvec_count=ops.rmatvecs)

    if (direction is not None and fresh is not None
            and math.isfinite(row.lb_recycled)
            and recycle_policy(row, direction, config) == "recompute"):
        direction = fresh
    return row, direction


def lsmr(A, b, config: SolverConfig | None = None,
         hooks: EstimatorHooks | None = None):
    """Minimize ||Ax - b|| by LSMR, tracing estimates along the way.

    Returns (x, trace, stop_reason) with stop_reason one of "converged"
    (the ||A'r|| test fired), "estimator" (hooks.stop_when fired),
    "breakdown" (the bidiagonalization produced a zero vector first), or
    "max_iters".
    """
    config = config or SolverConfig()
    hooks = hooks or EstimatorHooks()
    ops = CountingOperator(A)
    m, n = ops.shape
    b = np.asarray(b, dtype=float).ravel()
    if b.shape[0] != m:
        raise DimensionMismatch(f"b must have {m} entries")
    if not np.all(np.isfinite(b)):
        raise ValueError("b contains non-finite entries")

    norm_A_fro = _frobenius_norm(A)
    fro_source = "input" if norm_A_fro is not None else "recurrence"
    if config.norm_A_2 is not None:
        norm_A_2 = config.norm_A_2
    else:
        norm_A_2 = _power_spectral_norm(ops)
    setup_mv, setup_rmv = ops.matvecs, ops.rmatvecs
    config = replace(config, norm_A_2=norm_A_2)
    max_iters = config.max_iters or 5 * min(m, n)
    true_mu = _TrueMu(A) if config.compute_true_mu else None

    trace = SolverTrace(norm_A_fro=norm_A_fro or 0.0,
                        norm_A_fro_source=fro_source, norm_A_2=norm_A_2,
                        setup_matvecs=setup_mv, setup_rmatvecs=setup_rmv)
    x = np.zeros(n)

    normb = float(np.linalg.norm(b))
    if normb == 0.0:
        trace.stop_reason = "converged"
        return x, trace, "converged"

    beta = normb
    u = b / beta
    v = ops.rmatvec(u)
    alpha = float(np.linalg.norm(v))
    if alpha == 0.0:
        # A'b = 0: the zero vector already satisfies the normal equations.
        trace.stop_reason = "converged"
        return x, trace, "converged"
    v = v / alpha

    zetabar = alpha * beta
    alphabar = alpha
    rho = rhobar = cbar = 1.0
    sbar = 0.0
    h = v.copy()
    hbar = np.zeros(n)

    betadd = beta
    betad = 0.0
    rhodold = 1.0
    tautildeold = 0.0
    thetatilde = 0.0
    zeta = 0.0

    normA2 = alpha * alpha
    stop_reason = ""
    direction: RecycledDirection | None = None

    itn = 0
    while itn < max_iters:
        itn += 1
        u = ops.matvec(v) - alpha * u
        beta = float(np.linalg.norm(u))
        zerovec = beta == 0.0
        if not zerovec:
            u = u / beta
            v = ops.rmatvec(u) - beta * v
            alpha = float(np.linalg.norm(v))
            if alpha == 0.0:
                zerovec = True
            else:
                v = v / alpha

        rhoold = rho
        c, s, rho = _sym_ortho(alphabar, beta)
        thetanew = s * alpha
        alphabar = c * alpha

        rhobarold = rhobar
        zetaold = zeta
        thetabar = sbar * rho
        cbar, sbar, rhobar = _sym_ortho(cbar * rho, thetanew)
        zeta = cbar * zetabar
        zetabar = -sbar * zetabar

        if rho == 0.0 or rhobar == 0.0:
            stop_reason = "breakdown"
            break

        hbar = h - (thetabar * rho / (rhoold * rhobarold)) * hbar
        x = x + (zeta / (rho * rhobar)) * hbar
        h = v - (thetanew / rho) * h

        # Residual-norm recurrence (no damping, so the first rotation layer
        # is the identity).
        betahat = c * betadd
        betadd = -s * betadd
        thetatildeold = thetatilde
        ctildeold, stildeold, rhotildeold = _sym_ortho(rhodold, thetabar)
        thetatilde = stildeold * rhobar
        rhodold = ctildeold * rhobar
        betad = -stildeold * betad + ctildeold * betahat
        tautildeold = (zetaold - thetatildeold * tautildeold) / rhotildeold
        taud = (zeta - thetatilde * tautildeold) / rhodold
        normr_est = math.sqrt((betad - taud) ** 2 + betadd ** 2)

        normA2 += beta * beta
        normA_est = math.sqrt(normA2)
        normA2 += alpha * alpha
        normar_est = abs(zetabar)

        trace.est_norm_r.append(normr_est)
        trace.est_norm_Atr.append(normar_est)

        normA_stop = norm_A_fro if norm_A_fro is not None else normA_est
        converged = normar_est <= config.atol * normA_stop * normr_est
        last = converged or zerovec or itn == max_iters

        if itn % config.estimate_every == 0 or last:
            row, direction = _estimate_row(
                itn, ops, b, x, config, hooks, direction, true_mu)
            trace.rows.append(row)
            if hooks.stop_when is not None and hooks.stop_when(row):
                stop_reason = "estimator"
                break
        if converged:
            stop_reason = "converged"
            break
        if zerovec:
            stop_reason = "breakdown"
            break

    if not stop_reason:
        stop_reason = "max_iters"
    trace.stop_reason = stop_reason
    trace.iterations = itn
    return x, trace, stop_reason


__all__ = [
    "SolverConfig", "SolverTrace", "TraceRow", "TRACE_COLUMNS",
    "EstimatorHooks", "CountingOperator", "lsmr", "recycle_policy",
]
