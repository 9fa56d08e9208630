"""Per-instance check of solver traces against the bidiagonal-factor formulas.

For each sampled instance (W, b) the Lanczos-plus-Cholesky route yields a
bidiagonal factor whose product/sum formulas must reproduce the actual CG
and MINRES traces to near roundoff while the residuals are not yet tiny.
The suite runs a mixed bag of instances and reports the worst relative
mismatch per statistic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensembles import EnsembleSpec, RngStream, make_rhs, sample_data_matrix
from .solvers import cg_solve, minres_solve, trace_formulas_from_instance


@dataclass
class OracleReport:
    instances: int
    max_cg_residual: float
    max_cg_error: float
    max_minres_residual: float
    compared_points: int

    def worst(self) -> float:
        return max(self.max_cg_residual, self.max_cg_error, self.max_minres_residual)


def _rel_err(actual: np.ndarray, predicted: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any():
        return 0.0
    a, p = actual[mask], predicted[mask]
    return float(np.max(np.abs(a - p) / p))


def check_instance(apply_w, b, n_cap: int, norm_floor: float = 1e-6):
    """Compare one instance's solver traces with its factor formulas.

    Returns relative-error maxima (cg residual, cg error, minres residual)
    over all steps where the predicted norm exceeds ``norm_floor``, plus the
    number of compared points.  ``apply_w`` must also work on dense arrays
    for the true-solution solve.
    """
    b = np.asarray(b)
    n = b.shape[0]
    H, pred_r, pred_e, pred_m = trace_formulas_from_instance(apply_w, b, n_cap)
    kmax = H.n - 1

    W_dense = np.column_stack([apply_w(col) for col in np.eye(n, dtype=b.dtype)])
    x_true = np.linalg.solve(W_dense, b)

    cg = cg_solve(apply_w, b, kmax, x_true=x_true)
    mr = minres_solve(apply_w, b, kmax)

    mask_r = pred_r > norm_floor
    mask_e = pred_e > norm_floor
    mask_m = pred_m > norm_floor
    upto = min(cg.iterations, mr.iterations, kmax) + 1
    mask_r[upto:] = mask_e[upto:] = mask_m[upto:] = False

    err_r = _rel_err(np.sqrt(cg.r2sq[:upto]), pred_r[:upto], mask_r[:upto])
    err_e = _rel_err(np.sqrt(cg.ewsq[:upto]), pred_e[:upto], mask_e[:upto])
    err_m = _rel_err(np.sqrt(mr.r2sq[:upto]), pred_m[:upto], mask_m[:upto])
    points = int(mask_r[:upto].sum() + mask_e[:upto].sum() + mask_m[:upto].sum())
    return err_r, err_e, err_m, points


def oracle_suite(instances: int, seed: int, n_max: int = 200,
                 ensemble: str | None = None, beta: int | None = None) -> OracleReport:
    """Run ``instances`` random instances and collect worst-case mismatches.

    By default alternates Gaussian and fourth-moment-matched ensembles, unit
    first-basis and random right-hand sides, and sizes up to ``n_max`` with
    aspect ratios in [0.3, 0.8].
    """
    worst = [0.0, 0.0, 0.0]
    points = 0
    for i in range(instances):
        gen = RngStream(seed, 1000 + i).generator()
        kind = ensemble or ("gaussian" if i % 2 == 0 else "moment_match4")
        bta = beta if beta is not None else (2 if kind == "gaussian" and i % 4 == 0 else 1)
        n = int(gen.integers(10, n_max + 1))
        d = float(gen.uniform(0.3, 0.8))
        m = max(n, int(round(n / d)))
        spec = EnsembleSpec(kind, n, m, bta)
        X = sample_data_matrix(spec, gen)
        rhs_kind = "first_basis" if i % 2 == 0 else "random_unit"
        b = make_rhs(rhs_kind, n, bta, gen)

        def apply_w(y, X=X):
            return X @ (X.conj().T @ y)

        errs = check_instance(apply_w, b, n_cap=n)
        for j in range(3):
            worst[j] = max(worst[j], errs[j])
        points += errs[3]
    return OracleReport(instances=instances, max_cg_residual=worst[0],
                        max_cg_error=worst[1], max_minres_residual=worst[2],
                        compared_points=points)
