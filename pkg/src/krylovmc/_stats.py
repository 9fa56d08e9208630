"""Small statistics utilities shared by the harness and cross-validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf


def two_sample_ks(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic (sup distance of empirical CDFs)."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


def normal_cdf(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def one_sample_ks_normal(z) -> float:
    """One-sample KS statistic of ``z`` against the standard normal CDF."""
    z = np.sort(np.asarray(z, dtype=np.float64))
    n = z.size
    cdf = normal_cdf(z)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


@dataclass(frozen=True)
class GaussianityReport:
    """Normality diagnostics for a fluctuation sample."""

    ks_statistic: float
    skewness: float
    excess_kurtosis: float
    sample_variance: float
    n: int


def gaussianity_check(samples, predicted_variance: float | None = None,
                      min_samples: int = 10_000) -> GaussianityReport:
    """KS-against-normal plus moment diagnostics of centered samples.

    Samples are centered at their mean and scaled by sqrt(predicted_variance)
    when given (testing both shape and scale), otherwise by the sample
    standard deviation (shape only).  Degenerate (zero-variance) input is an
    error, as is a sample smaller than ``min_samples``.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {x.size}")
    var = float(x.var(ddof=1))
    if var == 0.0:
        raise ValueError("degenerate sample: zero variance")
    centered = x - x.mean()
    scale = np.sqrt(predicted_variance) if predicted_variance is not None else np.sqrt(var)
    if scale <= 0:
        raise ValueError("predicted variance must be positive")
    z = centered / scale
    sd = np.sqrt(var)
    skew = float(np.mean(centered**3) / sd**3)
    kurt = float(np.mean(centered**4) / sd**4 - 3.0)
    return GaussianityReport(
        ks_statistic=one_sample_ks_normal(z),
        skewness=skew,
        excess_kurtosis=kurt,
        sample_variance=var,
        n=x.size,
    )
