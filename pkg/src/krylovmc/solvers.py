"""Conjugate gradient, MINRES, and their exact per-iteration trace formulas.

Both solvers start from x_0 = 0 and record the squared residual 2-norm at
every step.  For a unit right-hand side the whole trace is a deterministic
function of the bidiagonal Cholesky factor H of the tridiagonalization of
(W, b): with H = bidiag(alpha; beta),

    CG:      ||r_k||_2 = prod_{j<k} beta_j / alpha_j,
             ||e_k||_W = ||r_k||_2 * sqrt((L_k L_k^T)^{-1}_{00}),
             where L_k is the trailing block H[k:, k:];
    MINRES:  ||r_k||_2 = (sum_{j<=k} prod_{l<j} alpha_l^2 / beta_l^2)^{-1/2},

and the iteration is exact at step n (residual zero).  The predicted_*
functions below evaluate these formulas in log-domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .orthopoly import orthonormal_at
from .tridiag import BidiagonalFactor, JacobiMatrix, inverse_first_entry, lanczos


class SolverError(RuntimeError):
    """Raised when an iteration loses positive definiteness or breaks down."""


@dataclass
class SolveTrace:
    """Per-iteration record of one solver run.

    ``r2sq[k]`` is ||r_k||_2^2 for k = 0..iterations (so r2sq[0] = ||b||^2);
    ``ewsq`` the W-norm squared errors when the true solution was supplied;
    ``converged_at`` the first k with ||r_k||_2 < tol (strict), if any.
    """

    r2sq: np.ndarray
    ewsq: np.ndarray | None
    iterations: int
    converged_at: int | None
    x: np.ndarray | None = None
    residuals: np.ndarray | None = None


def _re_vdot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


def cg_solve(apply_w, b: np.ndarray, kmax: int, tol: float = 0.0,
             x_true: np.ndarray | None = None, store_residuals: bool = False) -> SolveTrace:
    """Conjugate gradient for W x = b with x_0 = 0, trace capture.

    ``apply_w`` must act as a positive definite self-adjoint operator on the
    Krylov subspace of b.  When ``x_true`` is given, the W-norm error is
    tracked through the Galerkin identity e_k^* W e_k = e_k^* r_k (no extra
    operator applications).  Iteration stops at ``kmax`` or at the first
    ||r_k|| < tol when tol > 0.
    """
    b = np.asarray(b)
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    x = np.zeros_like(b)
    r = b.astype(b.dtype, copy=True)
    p = r.copy()
    rr = _re_vdot(r, r)
    r2 = [rr]
    ew = None
    if x_true is not None:
        x_true = np.asarray(x_true)
        ew = [_re_vdot(x_true - x, r)]
    res_list = [r.copy()] if store_residuals else None

    converged_at = 0 if (tol > 0 and np.sqrt(rr) < tol) else None
    k = 0
    while k < kmax and converged_at is None:
        k += 1
        wp = apply_w(p)
        denom = _re_vdot(r, wp)
        if denom <= 0:
            raise SolverError(f"nonpositive curvature r*Wp = {denom!r} at step {k}: "
                              "operator is not positive definite on the Krylov subspace")
        a = rr / denom
        x = x + a * p
        r = r - a * wp
        rr_new = _re_vdot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        r2.append(rr)
        if ew is not None:
            ew.append(_re_vdot(x_true - x, r))
        if res_list is not None:
            res_list.append(r.copy())
        if tol > 0 and np.sqrt(rr) < tol:
            converged_at = k

    return SolveTrace(
        r2sq=np.array(r2),
        ewsq=np.array(ew) if ew is not None else None,
        iterations=k,
        converged_at=converged_at,
        x=x,
        residuals=np.column_stack(res_list) if res_list else None,
    )


def minres_solve(apply_w, b: np.ndarray, kmax: int, tol: float = 0.0) -> SolveTrace:
    """MINRES for self-adjoint W x = b with x_0 = 0, trace capture.

    Implements the tridiagonal least-squares minimization with an updated QR
    factorization (Givens rotations); the achieved residual norm after step
    k is |phibar_k| = ||b|| prod |s_i|.  Lanczos breakdown is exact
    convergence and recorded as such.
    """
    b = np.asarray(b)
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    bnorm = np.sqrt(_re_vdot(b, b))
    if bnorm == 0.0:
        raise ValueError("right-hand side must be nonzero")
    x = np.zeros_like(b)
    q = b / bnorm
    q_prev = np.zeros_like(b)
    m_prev = np.zeros_like(b)
    m_prev2 = np.zeros_like(b)
    beta_prev = 0.0
    c1 = c2 = 1.0
    s1 = s2 = 0.0
    phibar = bnorm
    r2 = [bnorm**2]
    converged_at = 0 if (tol > 0 and bnorm < tol) else None
    breakdown_floor = np.finfo(np.float64).eps * bnorm
    w_est = 0.0

    k = 0
    while k < kmax and converged_at is None:
        k += 1
        v = np.asarray(apply_w(q)) - beta_prev * q_prev
        alpha = _re_vdot(v, q)
        v = v - alpha * q
        beta_new = float(np.linalg.norm(v))
        w_est = max(w_est, abs(alpha) + beta_new + beta_prev)
        broke = beta_new <= 1e-13 * max(w_est, breakdown_floor)

        eps_k = s2 * beta_prev
        delta = c2 * beta_prev
        delta2 = c1 * delta + s1 * alpha
        gammabar = -s1 * delta + c1 * alpha
        gamma = np.hypot(gammabar, beta_new)
        if gamma == 0.0:
            raise SolverError(f"singular projected system at step {k}")
        c0 = gammabar / gamma
        s0 = beta_new / gamma
        phi = c0 * phibar
        phibar = -s0 * phibar

        m_k = (q - delta2 * m_prev - eps_k * m_prev2) / gamma
        x = x + phi * m_k
        r2.append(phibar**2)
        if broke:
            converged_at = k
            break
        if tol > 0 and abs(phibar) < tol:
            converged_at = k
        q_prev, q = q, v / beta_new
        m_prev2, m_prev = m_prev, m_k
        beta_prev = beta_new
        c2, s2 = c1, s1
        c1, s1 = c0, s0

    return SolveTrace(r2sq=np.array(r2), ewsq=None, iterations=k,
                      converged_at=converged_at, x=x)


def cg_normal_equations(X: np.ndarray, b_m: np.ndarray, kmax: int,
                        tol: float = 0.0) -> SolveTrace:
    """CG on the covariance system W x = X b with W = X X*, trace capture.

    ``X`` is an n x m data matrix (entries already scaled by 1/sqrt(m)) and
    ``b_m`` a length-m vector.  The true solution for the W-norm error trace
    is obtained by a dense solve, which bounds this routine to desk scale.
    """
    X = np.asarray(X)
    b_m = np.asarray(b_m)
    n, m = X.shape
    if b_m.shape != (m,):
        raise ValueError(f"b_m must have shape ({m},), got {b_m.shape}")
    rhs = X @ b_m
    W = X @ X.conj().T
    x_true = np.linalg.solve(W, rhs)

    def apply_w(y):
        return X @ (X.conj().T @ y)

    return cg_solve(apply_w, rhs, kmax, tol=tol, x_true=x_true)


def normal_equations_error_oracle(X: np.ndarray, b_m: np.ndarray, kmax: int) -> np.ndarray:
    """Independent prediction of ||e_k||_W^2 for CG on the covariance system.

    Builds the scaled spectral measure of the system from the
    eigendecomposition of W = X X* (weights |u_j^* X b|^2 / lambda_j, which
    equals the squared right-singular-vector coefficients of X), runs the
    recurrence for that measure, and returns mass / sum_{j<=k} p_j(0)^2.
    """
    X = np.asarray(X)
    n, m = X.shape
    rhs = X @ np.asarray(b_m)
    lam, U = np.linalg.eigh(X @ X.conj().T)
    coef = np.abs(U.conj().T @ rhs) ** 2
    weights = coef / lam
    mass = float(weights.sum())
    unit = np.sqrt(weights / mass)

    diag_op = lambda v: lam * v
    T = lanczos(diag_op, unit, max_steps=min(kmax + 1, n), store_basis=False).jacobi
    keff = min(kmax, T.n - 1)
    p0 = orthonormal_at(T, keff, 0.0)
    out = np.empty(kmax + 1)
    out[: keff + 1] = mass / np.cumsum(p0**2)
    out[keff + 1:] = 0.0
    return out


def predicted_cg_residuals(H: BidiagonalFactor, kmax: int) -> np.ndarray:
    """CG residual norms ||r_k||_2, k = 0..kmax, from the bidiagonal factor.

    Value 1 at k = 0 (unit b); exact zero for k >= n.  Evaluated as
    exponentiated cumulative log-ratios so long products neither overflow
    nor lose accuracy.
    """
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    out = np.zeros(kmax + 1)
    out[0] = 1.0
    kk = min(kmax, H.n - 1)
    if kk >= 1:
        with np.errstate(divide="ignore"):
            logr = np.log(H.beta[:kk]) - np.log(H.alpha[:kk])
        out[1 : kk + 1] = np.exp(np.cumsum(logr))
    return out


def predicted_cg_errors(H: BidiagonalFactor, kmax: int) -> np.ndarray:
    """CG W-norm errors ||e_k||_W, k = 0..kmax, from the bidiagonal factor.

    ||e_k||_W = ||r_k||_2 sqrt((L_k L_k^T)^{-1}_{00}) with L_k the trailing
    block H[k:, k:].  Requires kmax <= n - 1.
    """
    if not 0 <= kmax <= H.n - 1:
        raise ValueError(f"need 0 <= kmax <= n-1 = {H.n - 1}, got {kmax}")
    resid = predicted_cg_residuals(H, kmax)
    out = np.empty(kmax + 1)
    for k in range(kmax + 1):
        out[k] = resid[k] * np.sqrt(inverse_first_entry(H.trailing(k)))
    return out


def predicted_minres_residuals(H: BidiagonalFactor, kmax: int) -> np.ndarray:
    """MINRES residual norms ||r_k||_2, k = 0..kmax, from the bidiagonal factor.

    (sum_{j<=k} prod_{l<j} alpha_l^2/beta_l^2)^{-1/2} accumulated in
    log-domain.  A zero beta (Krylov breakdown) makes every later residual
    exactly zero, as does k >= n.
    """
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    out = np.zeros(kmax + 1)
    out[0] = 1.0
    kk = min(kmax, H.n - 1)
    if kk >= 1:
        with np.errstate(divide="ignore"):
            logt = 2.0 * np.cumsum(np.log(H.alpha[:kk]) - np.log(H.beta[:kk]))
        # cumulative log-sum-exp of [0, logt_1, ..., logt_kk]
        acc = np.logaddexp.accumulate(np.concatenate([[0.0], logt]))
        with np.errstate(under="ignore"):
            out[1 : kk + 1] = np.exp(-0.5 * acc[1:])
    return out


def trace_formulas_from_instance(apply_w, b: np.ndarray, n_cap: int,
                                 reorthogonalize: bool = True):
    """Lanczos + Cholesky route to the predicted traces for one (W, b).

    Returns (H, predicted cg residual norms, cg error norms, minres residual
    norms) with arrays of length n (the completed Lanczos size).
    """
    from .tridiag import cholesky_jacobi

    result = lanczos(apply_w, b, max_steps=n_cap, reorthogonalize=reorthogonalize,
                     store_basis=reorthogonalize)
    H = cholesky_jacobi(result.jacobi)
    n = H.n
    return (H,
            predicted_cg_residuals(H, n - 1),
            predicted_cg_errors(H, n - 1),
            predicted_minres_residuals(H, n - 1))
