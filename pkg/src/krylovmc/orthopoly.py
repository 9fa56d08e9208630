"""Spectral measures, moments, and three-term recurrence polynomials.

Conventions.  For a measure mu with Jacobi coefficients (a_j, b_j):

    monic:        pi_{j+1}(x) = (x - a_j) pi_j(x) - b_{j-1}^2 pi_{j-1}(x),
                  pi_0 = 1, pi_{-1} = 0;
    orthonormal:  p_{j+1}(x) = ((x - a_j) p_j(x) - b_{j-1} p_{j-1}(x)) / b_j;
    transforms:   c_j(z) = integral of pi_j(x)/(x - z) dmu(x), satisfying
                  c_{j+1}(z) = (z - a_j) c_j(z) - b_{j-1}^2 c_{j-1}(z)
                  with c_{-1} = -1 and b_{-1} = 1.

The complementary sequence pi~_j is the same transfer recurrence as pi_j
started from (0, 1) instead of (1, 0); it satisfies the exact decomposition
c_j(0) = c_0(0) pi_j(0) - pi~_j(0).  Note pi~_1(0) = -1 under this seeding
(signs alternate as (-1)^j, matching the c-recurrence).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_triangular

from .tridiag import BidiagonalFactor, JacobiMatrix, inverse_first_entry


@dataclass(frozen=True)
class SpectralMeasure:
    """Finite atomic measure: strictly increasing nodes, nonnegative weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=np.float64))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def moment(self, k: int) -> float:
        """The k-th power moment (k may be negative if no node is zero)."""
        return float(np.sum(self.weights * self.nodes**float(k)))


def spectral_measure(T: JacobiMatrix, merge_tol: float = 1e-12) -> SpectralMeasure:
    """Eigen-decompose T into its spectral measure at the first coordinate.

    Nodes are the eigenvalues (ascending); weights the squared first
    components of the normalized eigenvectors.  Nodes within ``merge_tol``
    relative spacing are merged (weights added).
    """
    if T.n == 1:
        return SpectralMeasure(np.array([T.diag[0]]), np.array([1.0]))
    lam, vec = eigh_tridiagonal(T.diag, T.offdiag)
    w = np.abs(vec[0, :]) ** 2
    scale = max(abs(lam[0]), abs(lam[-1]), 1e-300)
    nodes, weights = [lam[0]], [w[0]]
    for x, wx in zip(lam[1:], w[1:]):
        if x - nodes[-1] <= merge_tol * scale:
            weights[-1] += wx
        else:
            nodes.append(x)
            weights.append(wx)
    return SpectralMeasure(np.array(nodes), np.array(weights))


def moments_from_jacobi(T: JacobiMatrix, kmax: int) -> np.ndarray:
    """Moments m_0..m_kmax of the spectral measure, m_k = (T^k)_{00}.

    Computed by k-fold tridiagonal application to the first basis vector.
    """
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    v = np.zeros(T.n)
    v[0] = 1.0
    out = np.empty(kmax + 1)
    out[0] = 1.0
    for k in range(1, kmax + 1):
        v = T.apply(v)
        out[k] = v[0]
    return out


def hankel_determinants(m, nmax: int) -> np.ndarray:
    """Determinants D_n = det (m_{i+j})_{0<=i,j<=n} for n = 0..nmax."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1:
        raise ValueError("moments must be a 1-d sequence")
    if m.shape[0] < 2 * nmax + 1:
        raise ValueError(f"need moments m_0..m_{2 * nmax}, got only {m.shape[0]}")
    out = np.empty(nmax + 1)
    for n in range(nmax + 1):
        i, j = np.indices((n + 1, n + 1))
        out[n] = np.linalg.det(m[i + j]) if n > 0 else m[0]
    return out


def jacobi_from_moments(m) -> JacobiMatrix:
    """Recover the Jacobi matrix whose spectral measure has moments ``m``.

    Uses the Cholesky factorization of the moment Gram matrix
    G[i, j] = m_{i+j} together with the shifted Gram S[i, j] = m_{i+j+1}:
    with G = L L^T, the matrix L^{-1} S L^{-T} is tridiagonal and equals the
    Jacobi matrix.  Moments m_0..m_K yield size floor((K+1)/2).  If a
    Cholesky pivot vanishes the measure is supported on fewer points and the
    result is truncated there; a clearly negative pivot means ``m`` is not a
    moment sequence and raises ValueError.

    Numerically meaningful only for small sizes: moment Gram matrices are
    exponentially ill-conditioned.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1 or m.shape[0] < 2:
        raise ValueError("need at least m_0 and m_1")
    if m[0] <= 0:
        raise ValueError("insufficient support / not a moment sequence (m_0 <= 0)")
    nmax = m.shape[0] // 2

    i, j = np.indices((nmax, nmax))
    G = m[i + j]
    S = m[i + j + 1]

    # Pivoted loop so a finitely-supported measure truncates instead of failing.
    L = np.zeros((nmax, nmax))
    size = nmax
    for k in range(nmax):
        piv = G[k, k] - L[k, :k] @ L[k, :k]
        tol = 1e-12 * max(abs(G[k, k]), 1.0)
        if piv <= tol:
            if piv < -tol:
                raise ValueError(
                    f"insufficient support / not a moment sequence (pivot {piv:.3e} at order {k})")
            size = k
            break
        L[k, k] = np.sqrt(piv)
        if k + 1 < nmax:
            L[k + 1:, k] = (G[k + 1:, k] - L[k + 1:, :k] @ L[k, :k]) / L[k, k]
    if size == 0:
        raise ValueError("insufficient support / not a moment sequence")

    Ls = L[:size, :size]
    J = solve_triangular(Ls, S[:size, :size], lower=True)
    J = solve_triangular(Ls, J.T, lower=True).T
    diag = np.diag(J).copy()
    off = np.diag(J, 1).copy() if size > 1 else np.empty(0)
    return JacobiMatrix(diag, off)


def monic_pi_at(T: JacobiMatrix, k: int, x: float) -> float:
    """Value of the monic orthogonal polynomial pi_k at x (0 <= k <= n)."""
    if not 0 <= k <= T.n:
        raise ValueError(f"need 0 <= k <= {T.n}, got {k}")
    p_prev, p = 0.0, 1.0
    for j in range(k):
        b2 = T.offdiag[j - 1] ** 2 if j > 0 else 0.0
        p_prev, p = p, (x - T.diag[j]) * p - b2 * p_prev
    return p


def complementary_pi_at_zero(T: JacobiMatrix, k: int) -> float:
    """Value pi~_k(0) of the complementary polynomial (transfer seed (0, 1)).

    Same recurrence as monic_pi_at with the convention b_{-1} = 1, so the
    first step gives pi~_1(0) = -1.  The ratio pi~_k(0)/pi_k(0) is the
    sign-stable quantity used in error formulas.
    """
    if not 0 <= k <= T.n:
        raise ValueError(f"need 0 <= k <= {T.n}, got {k}")
    p_prev, p = 1.0, 0.0
    for j in range(k):
        b2 = T.offdiag[j - 1] ** 2 if j > 0 else 1.0
        p_prev, p = p, (0.0 - T.diag[j]) * p - b2 * p_prev
    return p


def stieltjes_c_at_zero(T: JacobiMatrix, H: BidiagonalFactor, kmax: int) -> np.ndarray:
    """Values c_0(0)..c_kmax(0) of the transformed polynomials at z = 0.

    Seeded with c_{-1} = -1 and c_0(0) = (T^{-1})_{00} computed from the
    Cholesky factor H of T (positive, with the x - z convention in the
    transform denominator).
    """
    if not 0 <= kmax <= T.n:
        raise ValueError(f"need 0 <= kmax <= {T.n}, got {kmax}")
    out = np.empty(kmax + 1)
    c_prev, c = -1.0, inverse_first_entry(H)
    out[0] = c
    for j in range(kmax):
        b2 = T.offdiag[j - 1] ** 2 if j > 0 else 1.0
        c_prev, c = c, (0.0 - T.diag[j]) * c - b2 * c_prev
        if j + 1 <= kmax:
            out[j + 1] = c
    return out


def orthonormal_at(T: JacobiMatrix, kmax: int, x: float, total_mass: float = 1.0,
                   derivatives: bool = False):
    """Orthonormal polynomial values p_0(x)..p_kmax(x) (kmax <= n-1).

    ``total_mass`` rescales for a non-probability measure (p_0 = mass^-1/2).
    With ``derivatives`` also return p'_j(x) from the differentiated
    recurrence (exact, no finite differences).
    """
    if not 0 <= kmax <= T.n - 1:
        raise ValueError(f"need 0 <= kmax <= n-1 = {T.n - 1}, got {kmax}")
    if total_mass <= 0:
        raise ValueError("total_mass must be positive")
    vals = np.empty(kmax + 1)
    ders = np.empty(kmax + 1) if derivatives else None
    p_prev, p = 0.0, 1.0 / np.sqrt(total_mass)
    dp_prev, dp = 0.0, 0.0
    vals[0] = p
    if derivatives:
        ders[0] = 0.0
    for j in range(kmax):
        bj = T.offdiag[j]
        if bj <= 0:
            raise ValueError(f"zero off-diagonal at index {j}: measure has too few support points")
        b_prev = T.offdiag[j - 1] if j > 0 else 0.0
        p_next = ((x - T.diag[j]) * p - b_prev * p_prev) / bj
        if derivatives:
            dp_next = (p + (x - T.diag[j]) * dp - b_prev * dp_prev) / bj
            dp_prev, dp = dp, dp_next
            ders[j + 1] = dp
        p_prev, p = p, p_next
        vals[j + 1] = p
    return (vals, ders) if derivatives else vals
