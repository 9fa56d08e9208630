"""Closed-form limiting predictions for the solver statistics.

For aspect ratio d = n/m in (0, 1), as m grows the squared traces converge
to deterministic limits,

    cg_residual:      ||r_k||_2^2   -> d^k
    cg_error:         ||e_k||_W^2   -> d^k / (1 - d)
    minres_residual:  ||r_k||_2^2   -> d^k (1 - d) / (1 - d^{k+1})
    cgne_relative:    same as minres_residual (relative error of the
                      normal-equations run)
    cgne_error:       ||e_k||_W^2   -> d^{k+1} (1 - d) / (1 - d^{k+1})

with Gaussian fluctuations of size sqrt(2 / (beta m)) around them whose
variances are in fluctuation_variance.  Halting times concentrate on the
lattice point where the limit crosses the tolerance.  The d = 1 boundary is
handled through the identity (1 - d)/(1 - d^{k+1}) = 1 / sum_{j<=k} d^j,
which is exact for every d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .ensembles import as_generator

ALGORITHMS = ("cg_residual", "cg_error", "minres_residual", "cgne_relative", "cgne_error")

_ALIASES = {
    "cg": "cg_residual",
    "cg-residual": "cg_residual",
    "cg-error": "cg_error",
    "minres": "minres_residual",
    "minres-residual": "minres_residual",
    "cgne": "cgne_relative",
    "cgne-relative": "cgne_relative",
    "cgne-error": "cgne_error",
}


def canonical_algorithm(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    out = _ALIASES.get(key, name if name in ALGORITHMS else None)
    if out is None:
        raise ValueError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")
    return out


# ---------------------------------------------------------------------------
# Marchenko-Pastur law
# ---------------------------------------------------------------------------

def mp_edges(d: float) -> tuple[float, float]:
    """Spectral edges ((1 - sqrt(d))^2, (1 + sqrt(d))^2) of the limit law."""
    if d <= 0:
        raise ValueError("d must be positive")
    s = math.sqrt(d)
    return ((1.0 - s) ** 2, (1.0 + s) ** 2)


def mp_density(x, d: float):
    """Density of the limiting eigenvalue distribution on its support.

    Valid for d in (0, 1] (no atom at zero); zero off the support.
    """
    if not 0 < d <= 1:
        raise ValueError("d must lie in (0, 1]")
    gm, gp = mp_edges(d)
    x = np.asarray(x, dtype=np.float64)
    inside = (x > gm) & (x < gp)
    out = np.zeros_like(x)
    xs = x[inside]
    out[inside] = np.sqrt((xs - gm) * (gp - xs)) / (2.0 * np.pi * d * np.abs(xs))
    if out.ndim == 0:
        return float(out)
    return out


def _mp_theta_integral(f, d: float) -> float:
    """Integral of f against the limit law via the square-root substitution.

    Writing x = (1 + d) + 2 sqrt(d) cos(theta) turns the edge square roots
    into sin^2(theta), so the integrand is smooth and quadrature converges
    fast.
    """
    gm, gp = mp_edges(d)
    c0 = 0.5 * (gp + gm)
    c1 = 0.5 * (gp - gm)
    pref = c1**2 / (2.0 * np.pi * d)

    def integrand(theta):
        x = c0 + c1 * math.cos(theta)
        return pref * math.sin(theta) ** 2 / x * f(x)

    val, _ = quad(integrand, 0.0, math.pi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


def mp_stieltjes(z, d: float) -> complex:
    """Stieltjes transform s(z) = integral of 1/(x - z) against the limit law.

    Evaluated by adaptive quadrature; ``z`` must lie off the support.
    """
    if not 0 < d <= 1:
        raise ValueError("d must lie in (0, 1]")
    z = complex(z)
    gm, gp = mp_edges(d)
    if z.imag == 0.0 and gm - 1e-12 <= z.real <= gp + 1e-12:
        raise ValueError(f"z = {z} lies on the support [{gm}, {gp}]")
    re = _mp_theta_integral(lambda x: ((x - z.conjugate()) / abs(x - z) ** 2).real, d)
    im = _mp_theta_integral(lambda x: ((x - z.conjugate()) / abs(x - z) ** 2).imag, d)
    return complex(re, im)


def mp_moment(k: int, d: float) -> float:
    """Power moment of the limit law by quadrature (oracle-grade, not closed form)."""
    return _mp_theta_integral(lambda x: x**k, d)


# ---------------------------------------------------------------------------
# Leading order, fluctuations, halting
# ---------------------------------------------------------------------------

def _geometric_tail_ratio(d: float, k: int) -> float:
    """(1 - d) / (1 - d^{k+1}), evaluated stably for all d in (0, 1]."""
    if d == 1.0:
        return 1.0 / (k + 1)
    num = -math.expm1((k + 1) * math.log(d))  # 1 - d^{k+1} without cancellation
    return (1.0 - d) / num


def leading_order(algorithm: str, d: float, k: int) -> float:
    """Deterministic large-m limit of the squared statistic at step k."""
    algorithm = canonical_algorithm(algorithm)
    if not 0 < d <= 1:
        raise ValueError("d must lie in (0, 1]")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if algorithm == "cg_residual":
        return d**k
    if algorithm == "cg_error":
        if d == 1.0:
            raise ValueError("cg_error leading order is undefined at d = 1")
        return d**k / (1.0 - d)
    if algorithm == "cgne_error":
        return d ** (k + 1) * _geometric_tail_ratio(d, k)
    # minres_residual / cgne_relative
    return d**k * _geometric_tail_ratio(d, k)


def fluctuation_variance(algorithm: str, d: float, k: int) -> float:
    """Variance of the limiting fluctuation of sqrt(beta m / 2)(stat - limit)."""
    algorithm = canonical_algorithm(algorithm)
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    if algorithm == "cg_error":
        if k < 0:
            raise ValueError("k must be nonnegative")
        return d ** (2 * k) / (1 - d) ** 2 * (1.0 / (d * (1 - d)) + (k - 1) * (1 + 1 / d) + 1.0)
    if k < 1:
        raise ValueError(f"{algorithm} fluctuation variance is defined for k >= 1")
    if algorithm == "cg_residual":
        return k * d ** (2 * k) * (1 + 1 / d)
    if algorithm == "cgne_error":
        raise ValueError("no closed form for absolute normal-equations errors; "
                         "use cgne_relative")
    # minres_residual / cgne_relative
    num = (2 * d ** (k + 1) + 2 * d ** (k + 2) - d ** (2 * k + 2)
           - d**2 * (k + 1) - 2 * d + k)
    return (1 - d) * d ** (2 * k - 1) * num / (1 - d ** (k + 1)) ** 4


def rescaled_variance_prediction(algorithm: str, d: float, k: int) -> float:
    """Predicted variance of (sqrt(beta m)/2)(stat/mean - 1) at step k.

    Equals fluctuation_variance / (2 leading_order^2); zero at k = 0 where
    the statistic is deterministic.  For cg_residual this reduces to the
    tabulated k/2 (1 + 1/d).
    """
    algorithm = canonical_algorithm(algorithm)
    if k == 0 and algorithm != "cg_error":
        return 0.0
    return fluctuation_variance(algorithm, d, k) / (2.0 * leading_order(algorithm, d, k) ** 2)


def table1_prediction(d: float, k: int) -> float:
    """Rescaled CG residual variance k/2 (1 + 1/d) (the tabulated column)."""
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    if k < 1:
        raise ValueError("k must be at least 1")
    return 0.5 * k * (1.0 + 1.0 / d)


@dataclass(frozen=True)
class HaltingPrediction:
    """Predicted halting step; on_boundary marks the probability-1/2 split."""

    steps: int
    on_boundary: bool


def halting_prediction(algorithm: str, d: float, eps: float) -> HaltingPrediction:
    """Almost-sure limiting halting time of the rule ||.|| < eps.

    The prediction is the ceiling of where the leading-order curve crosses
    eps^2; when eps^2 sits exactly on the curve's lattice the halting time
    splits between that step and the next with equal probability, flagged by
    on_boundary.
    """
    algorithm = canonical_algorithm(algorithm)
    if algorithm in ("cgne_relative", "cgne_error"):
        raise ValueError(f"no halting prediction for {algorithm}")
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if algorithm == "cg_residual":
        x = 2.0 * math.log(eps) / math.log(d)
    elif algorithm == "cg_error":
        x = math.log(eps**2 * (1.0 - d)) / math.log(d)
    else:  # minres_residual
        x = math.log(eps**2 / (1.0 - d + eps**2 * d)) / math.log(d)
    nearest = round(x)
    boundary = abs(x - nearest) <= 1e-9 * max(1.0, abs(x))
    steps = int(nearest) if boundary else math.ceil(x)
    return HaltingPrediction(steps=max(steps, 0), on_boundary=boundary)


# ---------------------------------------------------------------------------
# Limit processes and finite-size expectations
# ---------------------------------------------------------------------------

def default_truncation(d: float, tol: float = 1e-10) -> int:
    """Number of geometric terms needed so the tail weight d^J drops below tol."""
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    return max(1, math.ceil(math.log(tol) / math.log(d)))


def sample_limit_process(algorithm: str, d: float, kmax: int, truncation_terms: int | None = None,
                         rng=None, draws: int = 1) -> np.ndarray:
    """Joint draws of the limiting fluctuation process Z_k, k = 0..kmax.

    Each draw builds every Z_k from a single iid standard normal sequence:

        Z_k(cg_residual) = d^k sum_{j<k} (g_{2j+2}/sqrt(d) - g_{2j+1}),
        Z_k(minres)      = ((1-d)/(1-d^{k+1}))^2 sum_{j<=k} d^{2(k-j)} Z_j(cg_residual),
        Z_k(cg_error)    = d^k/(1-d) [ sum_{j>=k} d^{j-k}(g_{2j}/sqrt(d) - g_{2j+1})
                           + sum_{1<=j<k}(g_{2j}/sqrt(d) - g_{2j-1}) - g_{2k-1} ],

    with g_0 := 0 (only the error process at k = 0 touches that index) and
    the infinite sum truncated after ``truncation_terms`` terms.  Returns an
    array of shape (draws, kmax + 1); Z_0 = 0 for the residual processes.
    """
    algorithm = canonical_algorithm(algorithm)
    if algorithm in ("cgne_error",):
        raise ValueError("no limit process for absolute normal-equations errors")
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    if kmax < 0 or draws < 1:
        raise ValueError("kmax must be >= 0 and draws >= 1")
    J = default_truncation(d) if truncation_terms is None else int(truncation_terms)
    gen = as_generator(rng if rng is not None else 0)

    if algorithm in ("cg_residual", "minres_residual", "cgne_relative"):
        g = gen.standard_normal((draws, 2 * kmax + 1)) if kmax > 0 else np.zeros((draws, 1))
        # xi_j = g_{2j+2}/sqrt(d) - g_{2j+1}, j = 0..kmax-1
        xi = g[:, 1::2] / math.sqrt(d) - g[:, 0:-1:2] if kmax > 0 else np.zeros((draws, 0))
        zcg = np.zeros((draws, kmax + 1))
        if kmax > 0:
            powers = d ** np.arange(1, kmax + 1)
            zcg[:, 1:] = np.cumsum(xi, axis=1) * powers
        if algorithm == "cg_residual":
            return zcg
        out = np.zeros((draws, kmax + 1))
        for k in range(kmax + 1):
            w = d ** (2.0 * (k - np.arange(k + 1)))
            ratio = _geometric_tail_ratio(d, k)
            out[:, k] = ratio**2 * (zcg[:, : k + 1] @ w)
        return out

    # cg_error: indices up to 2(kmax + J) + 1
    top = kmax + J
    g = np.empty((draws, 2 * top + 2))
    g[:, 0] = 0.0  # g_0 enters only the k = 0 tail; defined as zero
    g[:, 1:] = gen.standard_normal((draws, 2 * top + 1))
    even = g[:, 0 : 2 * top + 2 : 2]     # g_{2j}, j = 0..top
    odd = g[:, 1 : 2 * top + 2 : 2]      # g_{2j+1}, j = 0..top
    tail_terms = even / math.sqrt(d) - odd          # h_j = g_{2j}/sqrt(d) - g_{2j+1}
    mid_terms = even / math.sqrt(d)                  # g_{2j}/sqrt(d) - g_{2j-1}
    mid_terms = mid_terms[:, 1:] - g[:, 1 : 2 * top : 2]

    out = np.empty((draws, kmax + 1))
    for k in range(kmax + 1):
        jj = np.arange(k, min(k + J, top) + 1)
        tail = tail_terms[:, jj] @ (d ** (jj - k))
        mid = mid_terms[:, : k - 1].sum(axis=1) if k >= 2 else 0.0
        last = g[:, 2 * k - 1] if k >= 1 else 0.0
        out[:, k] = d**k / (1.0 - d) * (tail + mid - last)
    return out


def expected_norms_gamma(beta: int, n: int, m: int, kmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact finite-size means (E||r_k||_2, E||e_k||_W) for CG on a Gaussian instance.

    Each factor is a ratio of gamma functions (moments of chi variables),
    accumulated as log-gamma differences so that m up to 1e9 and beyond
    evaluates without overflow.  E||e_k||_W is infinite when
    beta (m - n + 1) <= 1.
    """
    if beta not in (1, 2):
        raise ValueError("beta must be 1 or 2")
    if not 0 <= kmax < n or n > m:
        raise ValueError(f"need 0 <= kmax < n <= m, got kmax={kmax}, n={n}, m={m}")
    lg = math.lgamma

    def log_chi_mean(nu):  # log E[chi_nu]
        return 0.5 * math.log(2.0) + lg((nu + 1) / 2.0) - lg(nu / 2.0)

    def log_inv_chi_mean(nu):  # log E[1/chi_nu], requires nu > 1
        return lg((nu - 1) / 2.0) - lg(nu / 2.0) - 0.5 * math.log(2.0)

    logfac = np.array([
        log_chi_mean(beta * (n - j - 1)) + log_inv_chi_mean(beta * (m - j))
        for j in range(kmax)
    ])
    e_r = np.ones(kmax + 1)
    if kmax > 0:
        e_r[1:] = np.exp(np.cumsum(logfac))
    nu_sigma = beta * (m - n + 1)
    if nu_sigma <= 1:
        e_e = np.full(kmax + 1, np.inf)
    else:
        log_sigma = 0.5 * math.log(beta * m) + log_inv_chi_mean(nu_sigma)
        e_e = np.exp(log_sigma) * e_r
    return e_r, e_e
