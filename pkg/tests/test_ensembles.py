import numpy as np
import pytest
from scipy.special import erf

from krylovmc.ensembles import (
    EnsembleSpec,
    RngStream,
    make_rhs,
    sample_chi,
    sample_data_matrix,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        EnsembleSpec("gaussian", 10, 5)
    with pytest.raises(ValueError):
        EnsembleSpec("bernoulli", 5, 10, beta=2)
    with pytest.raises(ValueError):
        EnsembleSpec("moment_match4", 5, 10, beta=2)
    with pytest.raises(ValueError):
        EnsembleSpec("poisson", 5, 10)
    assert EnsembleSpec("gaussian", 5, 10).d == 0.5


def test_bernoulli_support():
    X = sample_data_matrix(EnsembleSpec("bernoulli", 2, 2), RngStream(3))
    assert np.allclose(np.abs(X), 1 / np.sqrt(2))


def test_mm4_support_and_fourth_moment():
    spec = EnsembleSpec("moment_match4", 1000, 1000)
    X = sample_data_matrix(spec, RngStream(4)) * np.sqrt(1000)
    dist = np.minimum(np.abs(np.abs(X) - np.sqrt(3.0)), np.abs(X))
    assert np.max(dist) < 1e-12
    # E[(sqrt(m) X)^4] = 3; SE of the estimate is sqrt(18/10^6)
    assert abs(np.mean(X**4) - 3.0) < 0.02


def test_gaussian_mean():
    spec = EnsembleSpec("gaussian", 1000, 1000)
    X = sample_data_matrix(spec, RngStream(5)) * np.sqrt(1000)
    assert abs(X.mean()) < 0.004


@pytest.mark.parametrize("kind", ["gaussian", "moment_match4", "bernoulli"])
def test_scaled_entry_moments(kind):
    # mean/variance of sqrt(m) X_ij over 10^6 draws within 5 standard errors
    spec = EnsembleSpec(kind, 1000, 1000)
    X = sample_data_matrix(spec, RngStream(6)) * np.sqrt(1000)
    x = X.ravel()
    n = x.size
    assert abs(x.mean()) < 5 / np.sqrt(n)
    m2 = np.mean(x**2)
    se_m2 = np.std(x**2) / np.sqrt(n)
    assert abs(m2 - 1.0) < 5 * max(se_m2, 1e-12)
    if kind == "moment_match4":
        assert abs(np.mean(x**3)) < 5 * np.std(x**3) / np.sqrt(n)
        assert abs(np.mean(x**4) - 3.0) < 5 * np.std(x**4) / np.sqrt(n)
    if kind == "bernoulli":
        assert np.allclose(x**4, 1.0)


def test_complex_gaussian_parts():
    spec = EnsembleSpec("gaussian", 700, 1400, beta=2)
    X = sample_data_matrix(spec, RngStream(7))
    m = spec.m
    assert X.dtype == np.complex128
    var_re = np.var(X.real)
    var_im = np.var(X.imag)
    assert abs(var_re - 1 / (2 * m)) < 5 * var_re * np.sqrt(2 / X.size)
    assert abs(var_im - 1 / (2 * m)) < 5 * var_im * np.sqrt(2 / X.size)
    corr = np.mean(X.real * X.imag) * 2 * m
    assert abs(corr) < 5 / np.sqrt(X.size)


def test_reproducibility_and_stream_separation():
    spec = EnsembleSpec("gaussian", 20, 40)
    a = sample_data_matrix(spec, RngStream(42, 7))
    b = sample_data_matrix(spec, RngStream(42, 7))
    c = sample_data_matrix(spec, RngStream(42, 8))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_chi_square_mean():
    x = sample_chi(2.0, RngStream(8), size=1_000_000)
    assert abs(np.mean(x**2) - 2.0) < 5 * np.std(x**2) / 1000


def test_chi_dof1_matches_half_normal():
    x = np.sort(sample_chi(1.0, RngStream(9), size=100_000))
    cdf = erf(x / np.sqrt(2.0))  # half-normal CDF
    i = np.arange(1, x.size + 1)
    ks = max(np.max(i / x.size - cdf), np.max(cdf - (i - 1) / x.size))
    assert ks < 0.01


def test_inverse_chi_square_mean():
    # E[1/chi^2_6] = 1/(6-2)
    x = sample_chi(6.0, RngStream(10), size=1_000_000)
    inv = 1.0 / x**2
    assert abs(inv.mean() - 0.25) < 5 * inv.std() / 1000


def test_chi_rejects_bad_dof():
    with pytest.raises(ValueError):
        sample_chi(0.0, RngStream(0))
    with pytest.raises(ValueError):
        sample_chi(-1.0, RngStream(0))


def test_make_rhs():
    assert np.array_equal(make_rhs("first_basis", 3), np.array([1.0, 0, 0]))
    assert np.allclose(make_rhs("explicit", 2, payload=np.array([3.0, 4.0])), [0.6, 0.8])
    b = make_rhs("random_unit", 10_000, rng=RngStream(11))
    assert abs(np.linalg.norm(b) - 1.0) < 1e-12
    bc = make_rhs("random_unit", 100, beta=2, rng=RngStream(12))
    assert bc.dtype == np.complex128
    assert abs(np.linalg.norm(bc) - 1.0) < 1e-12
    with pytest.raises(ValueError):
        make_rhs("explicit", 2, payload=np.zeros(2))
    with pytest.raises(ValueError):
        make_rhs("explicit", 2)
    with pytest.raises(ValueError):
        make_rhs("weird", 2)
