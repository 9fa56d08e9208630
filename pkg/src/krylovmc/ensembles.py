"""Random-matrix ensembles, right-hand sides, and chi variate sampling.

All samplers are pure functions of an explicit random stream, so parallel
Monte Carlo runs are reproducible regardless of scheduling.  Entries of a
data matrix are scaled so that E|X_ij|^2 = 1/m; the associated covariance
matrix X X* then has mean eigenvalue near one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("gaussian", "moment_match4", "bernoulli")
RHS_KINDS = ("first_basis", "random_unit", "explicit")


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Identical keys yield bit-identical variate sequences no matter which
    thread or process consumes them (Philox counter-based generator).
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    """Coerce an RngStream, integer seed, or Generator to a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot interpret {type(rng).__name__} as a random stream")


@dataclass(frozen=True)
class EnsembleSpec:
    """Description of an n x m random data matrix ensemble.

    kind is one of ``gaussian`` (real or complex normal entries),
    ``moment_match4`` (three-point law with the first four moments of a
    standard normal), or ``bernoulli`` (+-1 entries; fails the fourth-moment
    match).  beta = 1 for real entries, 2 for complex.
    """

    kind: str
    n: int
    m: int
    beta: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}; expected one of {KINDS}")
        if self.beta not in (1, 2):
            raise ValueError(f"beta must be 1 (real) or 2 (complex), got {self.beta}")
        if self.n < 1 or self.m < self.n:
            raise ValueError(f"need 1 <= n <= m, got n={self.n}, m={self.m}")
        if self.kind != "gaussian" and self.beta != 1:
            raise ValueError(f"{self.kind} entries are real only (beta=1)")

    @property
    def d(self) -> float:
        """Aspect ratio n/m."""
        return self.n / self.m

    @property
    def dtype(self):
        return np.complex128 if self.beta == 2 else np.float64


def sample_data_matrix(spec: EnsembleSpec, rng) -> np.ndarray:
    """Draw one n x m data matrix with iid entries, E|X_ij|^2 = 1/m.

    For beta=2 the real and imaginary parts are independent with variance
    1/(2m) each.  moment_match4 entries take values {0, +-sqrt(3)/sqrt(m)}
    with probabilities {2/3, 1/6, 1/6}; bernoulli entries are +-1/sqrt(m).
    """
    gen = as_generator(rng)
    n, m = spec.n, spec.m
    scale = 1.0 / np.sqrt(m)
    if spec.kind == "gaussian":
        if spec.beta == 1:
            return gen.standard_normal((n, m)) * scale
        re = gen.standard_normal((n, m))
        im = gen.standard_normal((n, m))
        return (re + 1j * im) * (scale / np.sqrt(2.0))
    if spec.kind == "moment_match4":
        u = gen.integers(0, 6, size=(n, m))
        vals = ((u == 0).astype(np.float64) - (u == 1)) * np.sqrt(3.0)
        return vals * scale
    # bernoulli
    signs = gen.integers(0, 2, size=(n, m)) * 2.0 - 1.0
    return signs * scale


def sample_chi(dof, rng, size=None) -> np.ndarray | float:
    """Draw chi variates with the given degrees of freedom.

    ``dof`` may be a scalar or an array (broadcast against ``size``); the
    draw is the square root of a gamma(dof/2, scale=2) variate, which is
    exact for any real dof > 0.
    """
    dof = np.asarray(dof, dtype=np.float64)
    if np.any(dof <= 0):
        raise ValueError("chi degrees of freedom must be positive")
    gen = as_generator(rng)
    out = np.sqrt(gen.gamma(dof / 2.0, 2.0, size=size))
    if out.ndim == 0:
        return float(out)
    return out


def make_rhs(kind: str, n: int, beta: int = 1, rng=None, payload=None) -> np.ndarray:
    """Build a unit right-hand-side vector of length n.

    ``first_basis`` gives the first standard basis vector, ``random_unit``
    a normalized Gaussian vector, and ``explicit`` normalizes ``payload``.
    """
    if kind not in RHS_KINDS:
        raise ValueError(f"unknown rhs kind {kind!r}; expected one of {RHS_KINDS}")
    if n < 1:
        raise ValueError("rhs length must be at least 1")
    dtype = np.complex128 if beta == 2 else np.float64
    if kind == "first_basis":
        b = np.zeros(n, dtype=dtype)
        b[0] = 1.0
        return b
    if kind == "explicit":
        if payload is None:
            raise ValueError("explicit rhs requires a payload vector")
        b = np.asarray(payload, dtype=dtype)
        if b.shape != (n,):
            raise ValueError(f"payload must have shape ({n},), got {b.shape}")
        nrm = np.linalg.norm(b)
        if nrm == 0.0:
            raise ValueError("explicit rhs payload must be nonzero")
        return b / nrm
    gen = as_generator(rng)
    if beta == 2:
        b = gen.standard_normal(n) + 1j * gen.standard_normal(n)
    else:
        b = gen.standard_normal(n)
    return b / np.linalg.norm(b)
