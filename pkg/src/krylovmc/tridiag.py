"""Tridiagonal machinery: Lanczos, bidiagonal chi sampling, Cholesky.

A Jacobi matrix T (symmetric tridiagonal, nonnegative off-diagonal) and its
lower-bidiagonal Cholesky factor H, with

    T = H H^T,   H = bidiag(alpha_0..alpha_{n-1}; beta_0..beta_{n-2}),

are the two coordinate systems everything downstream works in.  alpha sits
on the diagonal of H and beta on the subdiagonal, so

    T[j, j]   = alpha_j^2 + beta_{j-1}^2      (beta_{-1} = 0)
    T[j, j+1] = alpha_j * beta_j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensembles import as_generator, sample_chi


class NotPositiveDefiniteError(ValueError):
    """Raised when a pivot fails during Cholesky factorization."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"matrix is not positive definite (pivot <= 0 at step {step})")


@dataclass(frozen=True)
class JacobiMatrix:
    """Symmetric tridiagonal matrix with nonnegative off-diagonal.

    Strictly positive off-diagonal entries are the generic case (and what a
    non-degenerate spectral measure produces); zeros are tolerated so that
    direct sums such as the identity can be represented.
    """

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.diag, dtype=np.float64))
        e = np.atleast_1d(np.asarray(self.offdiag, dtype=np.float64)) if np.size(self.offdiag) else np.empty(0)
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)
        if d.ndim != 1 or e.ndim != 1 or e.shape[0] != max(d.shape[0] - 1, 0):
            raise ValueError("diag must have length n and offdiag length n-1")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise ValueError("entries must be finite")
        if np.any(e < 0):
            raise ValueError("off-diagonal entries must be nonnegative")

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def to_dense(self) -> np.ndarray:
        T = np.diag(self.diag)
        if self.n > 1:
            T += np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)
        return T

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Tridiagonal matrix-vector product."""
        w = self.diag * v
        if self.n > 1:
            w[:-1] += self.offdiag * v[1:]
            w[1:] += self.offdiag * v[:-1]
        return w


@dataclass(frozen=True)
class BidiagonalFactor:
    """Lower-bidiagonal Cholesky factor: diagonal alpha > 0, subdiagonal beta >= 0."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.beta, dtype=np.float64)) if np.size(self.beta) else np.empty(0)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        if a.ndim != 1 or b.ndim != 1 or b.shape[0] != max(a.shape[0] - 1, 0):
            raise ValueError("alpha must have length n and beta length n-1")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("entries must be finite")
        if np.any(a <= 0):
            raise ValueError("diagonal entries alpha must be strictly positive")
        if np.any(b < 0):
            raise ValueError("subdiagonal entries beta must be nonnegative")

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def to_dense(self) -> np.ndarray:
        H = np.diag(self.alpha)
        if self.n > 1:
            H += np.diag(self.beta, -1)
        return H

    def trailing(self, k: int) -> "BidiagonalFactor":
        """The trailing (n-k) x (n-k) subfactor (rows and columns k..n-1)."""
        if not 0 <= k < self.n:
            raise ValueError(f"need 0 <= k < n, got k={k}, n={self.n}")
        return BidiagonalFactor(self.alpha[k:], self.beta[k:])


@dataclass(frozen=True)
class LanczosResult:
    """Output of the Lanczos iteration.

    ``jacobi`` holds the computed recurrence coefficients; ``basis`` the
    orthonormal vectors as columns (n-of-them); ``final_offdiag`` is the last
    computed coupling norm b_{k-1} (below breakdown tolerance iff
    ``terminated_early``).
    """

    jacobi: JacobiMatrix
    steps_completed: int
    terminated_early: bool
    final_offdiag: float
    basis: np.ndarray | None = None


def lanczos(apply_w, b: np.ndarray, max_steps: int, reorthogonalize: bool = True,
            breakdown_tol: float = 1e-12, store_basis: bool = True) -> LanczosResult:
    """Lanczos iteration for a self-adjoint operator and unit start vector.

    ``apply_w`` maps a vector to W v.  Runs for at most ``max_steps`` steps,
    terminating early when the computed coupling norm falls below
    ``breakdown_tol`` times a running estimate of ||W||.  Full
    reorthogonalization (two Gram-Schmidt passes against the stored basis)
    is on by default; exact-arithmetic coefficients are only reproduced to
    roundoff with it.
    """
    b = np.asarray(b)
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    nrm = np.linalg.norm(b)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"starting vector must have unit norm, got {nrm!r}")
    N = b.shape[0]
    max_steps = min(max_steps, N)

    Q = np.empty((N, max_steps), dtype=b.dtype)
    Q[:, 0] = b / nrm
    diag = np.empty(max_steps)
    off = np.empty(max(max_steps - 1, 0))

    b_prev = 0.0
    w_est = 0.0
    terminated = False
    steps = 0
    bnew = 0.0
    for k in range(max_steps):
        q = Q[:, k]
        v = np.asarray(apply_w(q))
        if k > 0:
            a = float(np.real(np.vdot(v - b_prev * Q[:, k - 1], q)))
            v = v - a * q - b_prev * Q[:, k - 1]
        else:
            a = float(np.real(np.vdot(v, q)))
            v = v - a * q
        if reorthogonalize:
            Qk = Q[:, : k + 1]
            for _ in range(2):
                v = v - Qk @ (Qk.conj().T @ v)
        bnew = float(np.linalg.norm(v))
        diag[k] = a
        steps = k + 1
        w_est = max(w_est, abs(a) + bnew + b_prev)
        if bnew <= breakdown_tol * max(w_est, np.finfo(np.float64).tiny):
            terminated = True
            break
        if k + 1 < max_steps:
            off[k] = bnew
            Q[:, k + 1] = v / bnew
            b_prev = bnew

    T = JacobiMatrix(diag[:steps].copy(), off[: steps - 1].copy())
    basis = Q[:, :steps].copy() if store_basis else None
    return LanczosResult(jacobi=T, steps_completed=steps,
                         terminated_early=terminated, final_offdiag=bnew, basis=basis)


def golub_kahan_sample(n: int, m: int, beta: int, rng) -> BidiagonalFactor:
    """Draw the bidiagonal factor of a Gaussian covariance matrix directly.

    The entries are independent scaled chi variables,

        alpha_j = chi_{beta(m-j)}   / sqrt(beta m),  j = 0..n-1,
        beta_j  = chi_{beta(n-j-1)} / sqrt(beta m),  j = 0..n-2,

    which is the exact law of the Cholesky factor of the tridiagonalization
    of X X* for X an n x m matrix of iid normal(0, 1/m) entries.
    """
    if beta not in (1, 2):
        raise ValueError("beta must be 1 or 2")
    if not 1 <= n <= m:
        raise ValueError(f"need 1 <= n <= m, got n={n}, m={m}")
    gen = as_generator(rng)
    scale = 1.0 / np.sqrt(beta * m)
    alpha = sample_chi(beta * (m - np.arange(n)), gen) * scale
    if n > 1:
        bt = sample_chi(beta * (n - 1 - np.arange(n - 1)), gen) * scale
    else:
        bt = np.empty(0)
    return BidiagonalFactor(np.atleast_1d(alpha), bt)


def cholesky_jacobi(T: JacobiMatrix) -> BidiagonalFactor:
    """Cholesky-factor a positive definite Jacobi matrix into bidiagonal form.

    Raises NotPositiveDefiniteError (with the failing step index) if any
    pivot is nonpositive.
    """
    n = T.n
    alpha = np.empty(n)
    beta = np.empty(max(n - 1, 0))
    piv = T.diag[0]
    if piv <= 0:
        raise NotPositiveDefiniteError(0)
    alpha[0] = np.sqrt(piv)
    for j in range(1, n):
        beta[j - 1] = T.offdiag[j - 1] / alpha[j - 1]
        piv = T.diag[j] - beta[j - 1] ** 2
        if piv <= 0:
            raise NotPositiveDefiniteError(j)
        alpha[j] = np.sqrt(piv)
    return BidiagonalFactor(alpha, beta)


def jacobi_from_bidiagonal(H: BidiagonalFactor) -> JacobiMatrix:
    """Assemble T = H H^T from a bidiagonal factor."""
    diag = H.alpha**2
    if H.n > 1:
        diag = diag + np.concatenate([[0.0], H.beta**2])
        off = H.alpha[:-1] * H.beta
    else:
        off = np.empty(0)
    return JacobiMatrix(diag, off)


def inverse_first_entry(H: BidiagonalFactor) -> float:
    """First diagonal entry of (H H^T)^{-1} via the nested product-sum.

    For T = H H^T,

        (T^{-1})_{00} = (1/alpha_0^2) (1 + sum_{j>=1} prod_{k=1}^{j} beta_{k-1}^2/alpha_k^2).

    Long products decay geometrically for well-conditioned factors; harmless
    underflow to zero is allowed.
    """
    a2 = H.alpha**2
    out = 1.0
    if H.n > 1:
        with np.errstate(under="ignore"):
            ratios = H.beta**2 / a2[1:]
            out += float(np.cumprod(ratios).sum())
    return out / float(a2[0])
