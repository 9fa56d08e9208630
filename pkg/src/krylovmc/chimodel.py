"""Matrix-free distributional sampler of solver statistics.

For a Gaussian covariance matrix W = X X* (n x m, entries normal with
variance 1/m) and any unit right-hand side, the per-iteration solver
statistics are equal in law to explicit functions of independent chi
variables

    alpha_j ~ chi_{beta(m-j)},  beta_j ~ chi_{beta(n-j-1)},
    sigma_inv ~ sqrt(beta m) / chi_{beta(m-n+1)},
    delta_nm ~ chi^2_{beta n} / chi^2_{beta m},

namely ||r_k||^2 (CG) = prod_{j<k} beta_j^2/alpha_j^2, ||e_k||_W^2 (CG) =
sigma_inv^2 ||r_k||^2, and the MINRES residuals / relative errors of the
normal-equations run are the reciprocal partial sums of the inverted
products.  Sampling these directly costs O(kmax) per draw at any (n, m).

Within one draw all four statistic paths share the same alpha, beta
variables, and sigma_inv / delta_nm are drawn independently of them; this
reproduces every per-k marginal law exactly.  The residual path (and hence
halting times of residual-based rules) is exact jointly in k as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensembles import as_generator


@dataclass(frozen=True)
class ChiModelDraw:
    """Arrays indexed by k = 0..kmax for a single sampled instance."""

    cg_r2sq: np.ndarray
    cg_ewsq: np.ndarray
    minres_r2sq: np.ndarray
    cgne_relative_ewsq: np.ndarray
    sigma_inv: float
    delta_nm: float


@dataclass(frozen=True)
class ChiModelBatch:
    """Vectorized draws: statistic arrays have shape (trials, kmax + 1)."""

    cg_r2sq: np.ndarray
    cg_ewsq: np.ndarray
    minres_r2sq: np.ndarray
    cgne_relative_ewsq: np.ndarray
    sigma_inv: np.ndarray
    delta_nm: np.ndarray

    @property
    def trials(self) -> int:
        return self.cg_r2sq.shape[0]


def draw_batch(n: int, m: int, beta: int, kmax: int, trials: int, rng) -> ChiModelBatch:
    """Draw ``trials`` independent chi-model instances at once."""
    if beta not in (1, 2):
        raise ValueError("beta must be 1 or 2")
    if not 0 <= kmax < n or n > m:
        raise ValueError(f"need 0 <= kmax < n <= m, got kmax={kmax}, n={n}, m={m}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    gen = as_generator(rng)

    a_dofs = beta * (m - np.arange(kmax))
    b_dofs = beta * (n - 1 - np.arange(kmax))
    alpha2 = gen.gamma(a_dofs / 2.0, 2.0, size=(trials, kmax))
    beta2 = gen.gamma(b_dofs / 2.0, 2.0, size=(trials, kmax))
    sigma_inv2 = beta * m / gen.gamma(beta * (m - n + 1) / 2.0, 2.0, size=trials)
    delta = (gen.gamma(beta * n / 2.0, 2.0, size=trials)
             / gen.gamma(beta * m / 2.0, 2.0, size=trials))

    ones = np.ones((trials, 1))
    with np.errstate(under="ignore"):
        ratios = beta2 / alpha2
        cg_r2sq = np.hstack([ones, np.cumprod(ratios, axis=1)])
        cg_ewsq = sigma_inv2[:, None] * cg_r2sq
        inv_prods = np.hstack([ones, np.cumprod(alpha2 / beta2, axis=1)])
        minres_r2sq = 1.0 / np.cumsum(inv_prods, axis=1)

    return ChiModelBatch(
        cg_r2sq=cg_r2sq,
        cg_ewsq=cg_ewsq,
        minres_r2sq=minres_r2sq,
        cgne_relative_ewsq=minres_r2sq.copy(),
        sigma_inv=np.sqrt(sigma_inv2),
        delta_nm=delta,
    )


def draw(n: int, m: int, beta: int, kmax: int, rng) -> ChiModelDraw:
    """Draw one chi-model instance (see module docstring for the laws)."""
    batch = draw_batch(n, m, beta, kmax, trials=1, rng=rng)
    return ChiModelDraw(
        cg_r2sq=batch.cg_r2sq[0],
        cg_ewsq=batch.cg_ewsq[0],
        minres_r2sq=batch.minres_r2sq[0],
        cgne_relative_ewsq=batch.cgne_relative_ewsq[0],
        sigma_inv=float(batch.sigma_inv[0]),
        delta_nm=float(batch.delta_nm[0]),
    )


@dataclass(frozen=True)
class CrossValidationReport:
    """Two-sample KS statistics (chi model vs full-matrix Gaussian) per k."""

    ks: dict
    trials: int
    n: int
    m: int
    beta: int

    def max_statistic(self) -> float:
        return max(float(np.max(v)) for v in self.ks.values())


def cross_validate(n: int, m: int, beta: int, kmax: int, trials: int, rng) -> CrossValidationReport:
    """Compare chi-model draws against full-matrix Gaussian solver traces.

    Runs ``trials`` of each and returns, for every statistic and every k in
    1..kmax, the two-sample Kolmogorov-Smirnov statistic.  Desk scale only
    (the full-matrix side runs the actual solvers).
    """
    from .ensembles import EnsembleSpec, RngStream
    from .harness import ExperimentConfig, collect_samples, two_sample_ks

    if isinstance(rng, RngStream):
        seed = rng.seed
    elif isinstance(rng, (int, np.integer)):
        seed = int(rng)
    else:
        raise TypeError("cross_validate needs a seedable stream (RngStream or int)")

    chi = draw_batch(n, m, beta, kmax, trials, RngStream(seed, stream_id=1))
    config = ExperimentConfig(
        ensemble=EnsembleSpec("gaussian", n, m, beta),
        rhs="first_basis",
        algorithms=("cg_residual", "cg_error", "minres_residual"),
        kmax=kmax,
        trials=trials,
        seed=seed + 1,
    )
    full = collect_samples(config)

    pairs = {
        "cg_r2sq": (chi.cg_r2sq, full["cg_residual"]),
        "cg_ewsq": (chi.cg_ewsq, full["cg_error"]),
        "minres_r2sq": (chi.minres_r2sq, full["minres_residual"]),
    }
    ks = {}
    for name, (a, b) in pairs.items():
        stats = np.empty(kmax + 1)
        stats[0] = 0.0 if name != "cg_ewsq" else two_sample_ks(a[:, 0], b[:, 0])
        for k in range(1, kmax + 1):
            stats[k] = two_sample_ks(a[:, k], b[:, k])
        ks[name] = stats
    return CrossValidationReport(ks=ks, trials=trials, n=n, m=m, beta=beta)
