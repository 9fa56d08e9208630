import numpy as np
import pytest

from krylovmc.ensembles import EnsembleSpec, RngStream, make_rhs, sample_data_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def wishart_operator(spec: EnsembleSpec, seed: int, stream: int = 0):
    """One sampled covariance instance (apply, dense W, X, generator)."""
    gen = RngStream(seed, stream).generator()
    X = sample_data_matrix(spec, gen)
    W = X @ X.conj().T

    def apply_w(y):
        return X @ (X.conj().T @ y)

    return apply_w, W, X, gen


def unit_first_basis(n, beta=1):
    return make_rhs("first_basis", n, beta)
