"""Krylov solvers on random covariance matrices, with exact trace formulas
and a Monte Carlo verification harness."""

from .chimodel import ChiModelBatch, ChiModelDraw, cross_validate, draw, draw_batch
from .ensembles import EnsembleSpec, RngStream, make_rhs, sample_chi, sample_data_matrix
from .harness import (
    ExperimentConfig,
    SummaryTable,
    emit,
    gaussianity_check,
    parse_table,
    run_experiment,
    two_sample_ks,
)
from .orthopoly import (
    SpectralMeasure,
    complementary_pi_at_zero,
    hankel_determinants,
    jacobi_from_moments,
    moments_from_jacobi,
    monic_pi_at,
    spectral_measure,
    stieltjes_c_at_zero,
)
from .solvers import (
    SolveTrace,
    cg_normal_equations,
    cg_solve,
    minres_solve,
    predicted_cg_errors,
    predicted_cg_residuals,
    predicted_minres_residuals,
)
from .theory import (
    expected_norms_gamma,
    fluctuation_variance,
    halting_prediction,
    leading_order,
    mp_density,
    mp_edges,
    mp_stieltjes,
    sample_limit_process,
    table1_prediction,
)
from .tridiag import (
    BidiagonalFactor,
    JacobiMatrix,
    LanczosResult,
    cholesky_jacobi,
    golub_kahan_sample,
    inverse_first_entry,
    jacobi_from_bidiagonal,
    lanczos,
)
from .verify import oracle_suite

__version__ = "0.1.0"
