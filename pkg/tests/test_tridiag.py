import numpy as np
import pytest

from conftest import wishart_operator
from krylovmc.ensembles import EnsembleSpec, RngStream, make_rhs, sample_chi
from krylovmc.orthopoly import jacobi_from_moments, spectral_measure
from krylovmc.tridiag import (
    BidiagonalFactor,
    JacobiMatrix,
    NotPositiveDefiniteError,
    cholesky_jacobi,
    golub_kahan_sample,
    inverse_first_entry,
    jacobi_from_bidiagonal,
    lanczos,
)

ULP8 = 8 * np.finfo(np.float64).eps


def random_factor(gen, n, d=0.5):
    """Well-scaled random bidiagonal factor (chi-law shaped).

    Keep d <= 1/2 where roundtrip identities are meaningful: recovering
    alpha_j^2 = T_jj - beta_{j-1}^2 cancels catastrophically as d -> 1.
    """
    m = max(2 * n, int(round(n / d)))
    return golub_kahan_sample(n, m, 1, gen)


# ---------------------------------------------------------------------------
# Lanczos
# ---------------------------------------------------------------------------

def test_lanczos_identity_terminates_immediately():
    b = np.zeros(5)
    b[0] = 1.0
    res = lanczos(lambda v: v, b, max_steps=5)
    assert res.steps_completed == 1
    assert res.terminated_early
    assert np.allclose(res.jacobi.diag, [1.0])


def test_lanczos_two_point_measure():
    W = np.diag([1.0, 2.0])
    b = np.array([1.0, 1.0]) / np.sqrt(2)
    res = lanczos(lambda v: W @ v, b, max_steps=2)
    assert np.allclose(res.jacobi.diag, [1.5, 1.5])
    assert np.allclose(res.jacobi.offdiag, [0.5])


def test_lanczos_rejects_bad_input():
    with pytest.raises(ValueError):
        lanczos(lambda v: v, np.array([1.0, 1.0]), max_steps=2)  # not unit
    with pytest.raises(ValueError):
        lanczos(lambda v: v, np.array([1.0, 0.0]), max_steps=0)


def test_lanczos_three_term_relation_and_orthonormality():
    spec = EnsembleSpec("gaussian", 300, 600)
    apply_w, W, _, gen = wishart_operator(spec, seed=100)
    b = make_rhs("random_unit", 300, rng=gen)
    res = lanczos(apply_w, b, max_steps=300)
    Q = res.basis
    n = res.steps_completed
    assert np.max(np.abs(Q.conj().T @ Q - np.eye(n))) < 1e-10
    T = res.jacobi.to_dense()
    R = W @ Q - Q @ T
    # all columns but the last are exact; the last carries the coupling b_{n-1}
    assert np.max(np.abs(R[:, :-1])) < 1e-8
    assert abs(np.linalg.norm(R[:, -1]) - res.final_offdiag) < 1e-8


def test_lanczos_complex_hermitian():
    spec = EnsembleSpec("gaussian", 40, 80, beta=2)
    apply_w, W, _, gen = wishart_operator(spec, seed=101)
    b = make_rhs("random_unit", 40, beta=2, rng=gen)
    res = lanczos(apply_w, b, max_steps=40)
    assert res.jacobi.diag.dtype == np.float64
    assert np.all(res.jacobi.offdiag > 0)


def test_lanczos_coefficient_means_match_bidiagonal_route():
    # tridiagonal entries from full-matrix Lanczos and from the chi-variable
    # bidiagonal sampler agree in distribution; compare means of the leading
    # entries over a few hundred draws
    n, m, trials, lead = 12, 24, 400, 4
    diag_f = np.zeros((trials, lead))
    off_f = np.zeros((trials, lead))
    diag_c = np.zeros((trials, lead))
    off_c = np.zeros((trials, lead))
    spec = EnsembleSpec("gaussian", n, m)
    for t in range(trials):
        apply_w, _, _, gen = wishart_operator(spec, seed=102, stream=t)
        b = make_rhs("first_basis", n)
        T = lanczos(apply_w, b, max_steps=lead + 1).jacobi
        diag_f[t] = T.diag[:lead]
        off_f[t] = T.offdiag[:lead]
        Tc = jacobi_from_bidiagonal(golub_kahan_sample(n, m, 1, RngStream(103, t)))
        diag_c[t] = Tc.diag[:lead]
        off_c[t] = Tc.offdiag[:lead]
    for full, chi in ((diag_f, diag_c), (off_f, off_c)):
        se = np.sqrt(full.var(axis=0) / trials + chi.var(axis=0) / trials)
        assert np.all(np.abs(full.mean(axis=0) - chi.mean(axis=0)) < 4.5 * se)


# ---------------------------------------------------------------------------
# Bidiagonal chi sampler
# ---------------------------------------------------------------------------

def test_golub_kahan_marginals():
    n, m = 6, 11
    # alpha_0^2 ~ chi^2_m / m has mean 1; beta_0^2 ~ chi^2_{n-1}/m
    a2 = sample_chi(float(m), RngStream(20), size=1_000_000) ** 2 / m
    assert abs(a2.mean() - 1.0) < 5 * a2.std() / 1000
    b2 = sample_chi(float(n - 1), RngStream(21), size=1_000_000) ** 2 / m
    assert abs(b2.mean() - (n - 1) / m) < 5 * b2.std() / 1000
    H = golub_kahan_sample(n, m, 1, RngStream(22))
    assert H.alpha.shape == (n,) and H.beta.shape == (n - 1,)
    assert np.all(H.alpha > 0) and np.all(H.beta > 0)


def test_golub_kahan_size_one():
    H = golub_kahan_sample(1, 5, 2, RngStream(23))
    assert H.alpha.shape == (1,)
    assert H.beta.shape == (0,)
    with pytest.raises(ValueError):
        golub_kahan_sample(6, 5, 1, RngStream(23))


# ---------------------------------------------------------------------------
# Cholesky and assembly
# ---------------------------------------------------------------------------

def test_cholesky_two_by_two():
    T = JacobiMatrix([4.0, 2.0], [2.0])
    H = cholesky_jacobi(T)
    assert np.allclose(H.alpha, [2.0, 1.0])
    assert np.allclose(H.beta, [1.0])


def test_cholesky_identity():
    T = JacobiMatrix(np.ones(4), np.zeros(3))
    H = cholesky_jacobi(T)
    assert np.allclose(H.alpha, 1.0)
    assert np.allclose(H.beta, 0.0)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError) as err:
        cholesky_jacobi(JacobiMatrix([1.0, 1.0], [2.0]))
    assert err.value.step == 1


def test_assembly_example():
    T = jacobi_from_bidiagonal(BidiagonalFactor([2.0, 1.0], [1.0]))
    assert np.allclose(T.to_dense(), [[4.0, 2.0], [2.0, 2.0]])
    T1 = jacobi_from_bidiagonal(BidiagonalFactor(np.ones(3), np.zeros(2)))
    assert np.allclose(T1.to_dense(), np.eye(3))


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 12])
def test_round_trips_to_8ulp(n):
    gen = RngStream(24, n).generator()
    for _ in range(40):
        H = random_factor(gen, n, d=float(gen.uniform(0.2, 0.9)))
        T = jacobi_from_bidiagonal(H)
        H2 = cholesky_jacobi(T)
        np.testing.assert_allclose(H2.alpha, H.alpha, rtol=ULP8, atol=0)
        if n > 1:
            np.testing.assert_allclose(H2.beta, H.beta, rtol=ULP8, atol=0)
        T2 = jacobi_from_bidiagonal(H2)
        np.testing.assert_allclose(T2.diag, T.diag, rtol=ULP8, atol=0)
        if n > 1:
            np.testing.assert_allclose(T2.offdiag, T.offdiag, rtol=ULP8, atol=0)


def test_assembled_matrix_is_positive_definite():
    gen = RngStream(25).generator()
    for _ in range(30):
        H = random_factor(gen, int(gen.integers(2, 10)))
        T = jacobi_from_bidiagonal(H)
        assert np.all(np.linalg.eigvalsh(T.to_dense()) > 0)


# ---------------------------------------------------------------------------
# Inverse first entry
# ---------------------------------------------------------------------------

def test_inverse_first_entry_examples():
    assert inverse_first_entry(BidiagonalFactor(np.ones(3), np.zeros(2))) == 1.0
    val = inverse_first_entry(BidiagonalFactor([2.0, 1.0], [1.0]))
    assert abs(val - 0.5) < 1e-15


def test_inverse_first_entry_vs_dense_solve():
    gen = RngStream(26).generator()
    for _ in range(25):
        n = int(gen.integers(2, 50))
        H = random_factor(gen, n, d=float(gen.uniform(0.2, 0.8)))
        T = jacobi_from_bidiagonal(H).to_dense()
        e1 = np.zeros(n)
        e1[0] = 1.0
        direct = np.linalg.solve(T, e1)[0]
        assert abs(inverse_first_entry(H) - direct) < 1e-10 * abs(direct)


def test_inverse_first_entry_chi_mean():
    # E[(T^{-1})_{00}] = m/(m - n - 1) for the beta=1 chi-law factor
    n, m, trials = 5, 10, 200_000
    gen = RngStream(27).generator()
    a2 = gen.gamma((m - np.arange(n)) / 2.0, 2.0, size=(trials, n)) / m
    b2 = gen.gamma((n - 1 - np.arange(n - 1)) / 2.0, 2.0, size=(trials, n - 1)) / m
    vals = (1.0 + np.cumprod(b2 / a2[:, 1:], axis=1).sum(axis=1)) / a2[:, 0]
    target = m / (m - n - 1)
    assert abs(vals.mean() - target) < 4 * vals.std() / np.sqrt(trials)


def test_muirhead_identity_two_sample():
    # law of 1/(T^{-1})_{00} over full-matrix draws matches chi^2_{m-n+1}/m
    n, m, trials = 8, 16, 30_000
    gen = RngStream(28).generator()
    spec = EnsembleSpec("gaussian", n, m)
    from krylovmc.ensembles import sample_data_matrix
    from krylovmc.harness import two_sample_ks

    X = np.empty((trials, n, m))
    for t in range(trials):
        X[t] = sample_data_matrix(spec, gen)
    W = np.matmul(X, X.transpose(0, 2, 1))
    e1 = np.zeros(n)
    e1[0] = 1.0
    full = 1.0 / np.linalg.solve(W, np.broadcast_to(e1, (trials, n)).copy())[:, 0]
    chi = gen.gamma((m - n + 1) / 2.0, 2.0, size=trials) / m
    assert two_sample_ks(full, chi) < 0.02


def test_lanczos_coefficients_match_moment_route():
    # recurrence coefficients from Lanczos equal those recovered from the
    # moments of the spectral measure (first 6 coefficients, 1e-6)
    spec = EnsembleSpec("gaussian", 30, 75)
    apply_w, W, _, gen = wishart_operator(spec, seed=104)
    b = make_rhs("random_unit", 30, rng=gen)
    T = lanczos(apply_w, b, max_steps=30).jacobi

    lam, U = np.linalg.eigh(W)
    weights = np.abs(U.conj().T @ b) ** 2
    moments = np.array([np.sum(weights * lam**k) for k in range(9)])
    T_m = jacobi_from_moments(moments)
    assert T_m.n >= 4
    assert np.allclose(T_m.diag[:3], T.diag[:3], atol=1e-6)
    assert np.allclose(T_m.offdiag[:3], T.offdiag[:3], atol=1e-6)

    mu = spectral_measure(T)
    mom2 = np.array([mu.moment(k) for k in range(9)])
    assert np.allclose(moments, mom2, rtol=1e-9, atol=1e-12)
