"""Monte Carlo experiment driver: run trials, aggregate, compare to theory.

Trials are vectorized in fixed-size batches (the linear algebra is batched,
the per-trial random streams are not shared), so a summary is bit-identical
for a given config and seed no matter how the work is scheduled.  The
rescaled fluctuation statistic tabulated per (algorithm, k) is

    (sqrt(beta m) / 2) * (stat / <stat> - 1),

centered at the ensemble sample mean; its predicted variance is
fluctuation_variance / (2 leading_order^2), which for CG residuals is the
tabulated k/2 (1 + 1/d).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import chimodel, theory
from ._stats import GaussianityReport, gaussianity_check, two_sample_ks  # noqa: F401 (re-export)
from .ensembles import EnsembleSpec, RngStream, make_rhs, sample_data_matrix

STATISTICS = ("cg_residual", "cg_error", "minres_residual", "cgne_relative")


class BudgetExceededError(RuntimeError):
    """Raised when the estimated work for a config exceeds its flop budget."""


class TrialFailureError(RuntimeError):
    """A solver produced a non-finite trace in some trial; never swallowed."""


@dataclass(frozen=True)
class ExperimentConfig:
    ensemble: EnsembleSpec
    rhs: str = "first_basis"
    algorithms: tuple = ("cg_residual",)
    kmax: int = 10
    trials: int = 1000
    seed: int = 0
    eps: float | None = None
    mode: str = "full_matrix"
    batch_size: int = 0          # 0: choose from memory cap
    flop_budget: float = 1e14

    def __post_init__(self):
        algs = tuple(theory.canonical_algorithm(a) for a in self.algorithms)
        object.__setattr__(self, "algorithms", algs)
        for a in algs:
            if a not in STATISTICS:
                raise ValueError(f"{a} is not a per-trial statistic")
        if self.mode not in ("full_matrix", "chi_model"):
            raise ValueError("mode must be full_matrix or chi_model")
        if self.mode == "chi_model" and self.ensemble.kind != "gaussian":
            raise ValueError("chi_model mode reproduces Gaussian-law statistics only")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.kmax < 0 or self.kmax >= self.ensemble.n:
            raise ValueError("need 0 <= kmax < n")
        if self.rhs not in ("first_basis", "random_unit"):
            raise ValueError("rhs must be first_basis or random_unit")
        if self.eps is not None and not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")

    def to_dict(self) -> dict:
        e = self.ensemble
        return {
            "ensemble": e.kind, "n": e.n, "m": e.m, "beta": e.beta,
            "rhs": self.rhs, "algorithms": list(self.algorithms),
            "kmax": self.kmax, "trials": self.trials, "seed": self.seed,
            "eps": self.eps, "mode": self.mode,
        }


@dataclass(frozen=True)
class SummaryRow:
    algorithm: str
    k: int
    sample_mean: float
    predicted_mean: float
    rescaled_var: float
    predicted_rescaled_var: float
    stderr: float
    trials: int


@dataclass
class SummaryTable:
    rows: list = field(default_factory=list)
    halting: list = field(default_factory=list)   # (algorithm, halt_k, count)
    config: dict | None = None
    samples: dict | None = None                   # per-statistic (trials, kmax+1), in memory only

    def row(self, algorithm: str, k: int) -> SummaryRow:
        for r in self.rows:
            if r.algorithm == algorithm and r.k == k:
                return r
        raise KeyError((algorithm, k))

    def halting_histogram(self, algorithm: str) -> dict:
        return {k: c for a, k, c in self.halting if a == algorithm}


def estimate_flops(config: ExperimentConfig) -> float:
    """Rough work estimate used by the budget guard."""
    n, m = config.ensemble.n, config.ensemble.m
    if config.mode == "chi_model":
        return 50.0 * config.trials * (config.kmax + 1)
    per_matvec = 4.0 * n * m
    per_trial = (config.kmax + 2) * per_matvec + 2.0 * n * m  # iterations + generation
    if "cg_error" in config.algorithms or "cgne_relative" in config.algorithms:
        per_trial += 2.0 * n * n * m + n**3  # dense assembly + solve
    nalg = sum(a in config.algorithms for a in ("cg_residual", "minres_residual", "cgne_relative"))
    return config.trials * per_trial * max(nalg, 1)


# ---------------------------------------------------------------------------
# Batched trace runners (vectorized across trials)
# ---------------------------------------------------------------------------

def _re_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("ij,ij->i", a.conj(), b))


def _apply_cov_batch(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Batched W y = X (X* y) for X of shape (B, n, m), y of shape (B, n)."""
    z = np.matmul(y[:, None, :].conj(), X)[:, 0, :]
    return np.matmul(X, z.conj()[:, :, None])[:, :, 0]


def _batched_cg(matvec, b: np.ndarray, kmax: int, x_true: np.ndarray | None,
                trial_offset: int = 0):
    B = b.shape[0]
    r = b.copy()
    p = r.copy()
    x = np.zeros_like(b)
    rr = _re_rows(r, r)
    r2 = np.empty((B, kmax + 1))
    r2[:, 0] = rr
    ew = None
    if x_true is not None:
        ew = np.empty((B, kmax + 1))
        ew[:, 0] = _re_rows(x_true - x, r)
    # Lanes whose residual has collapsed to ~0 are frozen; a nonpositive
    # curvature on a live lane means W was not positive definite there.
    floor = 1e-120 * np.maximum(rr, 1.0)
    for k in range(1, kmax + 1):
        wp = matvec(p)
        denom = _re_rows(r, wp)
        live = rr > floor
        bad = live & (denom <= 0)
        if np.any(bad):
            t = trial_offset + int(np.argwhere(bad)[0][0])
            raise TrialFailureError(
                f"nonpositive curvature in trial {t} at step {k}: operator not positive definite")
        a = np.where(live, rr / np.where(live, denom, 1.0), 0.0)
        x = x + a[:, None] * p
        r = r - a[:, None] * wp
        rr_new = _re_rows(r, r)
        ratio = np.where(live, rr_new / np.where(live, rr, 1.0), 0.0)
        p = r + ratio[:, None] * p
        rr = rr_new
        r2[:, k] = rr
        if ew is not None:
            ew[:, k] = _re_rows(x_true - x, r)
    return r2, ew


def _batched_minres_r2(matvec, b: np.ndarray, kmax: int) -> np.ndarray:
    B, _ = b.shape
    bnorm = np.sqrt(_re_rows(b, b))
    q = b / bnorm[:, None]
    q_prev = np.zeros_like(b)
    beta_prev = np.zeros(B)
    c1 = np.ones(B); s1 = np.zeros(B)
    c2 = np.ones(B); s2 = np.zeros(B)
    phibar = bnorm.copy()
    out = np.empty((B, kmax + 1))
    out[:, 0] = phibar**2
    floor = np.finfo(np.float64).eps
    for k in range(1, kmax + 1):
        v = matvec(q) - beta_prev[:, None] * q_prev
        alpha = _re_rows(v, q)
        v = v - alpha[:, None] * q
        beta_new = np.sqrt(_re_rows(v, v))
        delta = c2 * beta_prev
        gammabar = -s1 * delta + c1 * alpha
        gamma = np.hypot(gammabar, beta_new)
        ok = gamma > 0
        gsafe = np.where(ok, gamma, 1.0)
        c0 = np.where(ok, gammabar / gsafe, 1.0)
        s0 = np.where(ok, beta_new / gsafe, 0.0)
        phibar = -s0 * phibar
        out[:, k] = phibar**2
        live = beta_new > floor * np.maximum(np.abs(alpha) + beta_new + beta_prev, 1.0)
        q_next = np.where(live[:, None], v / np.where(live, beta_new, 1.0)[:, None], 0.0)
        q_prev, q = q, q_next
        beta_prev = np.where(live, beta_new, 0.0)
        c2, s2 = c1, s1
        c1, s1 = c0, s0
    return out


def _pick_batch_size(config: ExperimentConfig) -> int:
    if config.batch_size > 0:
        return config.batch_size
    n, m = config.ensemble.n, config.ensemble.m
    itemsize = 16 if config.ensemble.beta == 2 else 8
    cap = int(2.5e8 / max(n * m * itemsize, 1))
    return max(1, min(cap, 256, config.trials))


def collect_samples(config: ExperimentConfig) -> dict:
    """Per-trial statistic traces, {algorithm: array (trials, kmax + 1)}.

    Statistics are squared norms; cgne_relative is normalized by its k = 0
    value.  Full-matrix mode samples one data matrix per trial from the
    stream (seed, trial_index); chi_model mode draws every trial from the
    stream (seed, 0) vectorized.
    """
    est = estimate_flops(config)
    if est > config.flop_budget:
        raise BudgetExceededError(
            f"estimated {est:.2e} flops exceeds budget {config.flop_budget:.2e}; "
            "raise flop_budget or use chi_model mode")
    if config.mode == "chi_model":
        e = config.ensemble
        batch = chimodel.draw_batch(e.n, e.m, e.beta, config.kmax, config.trials,
                                    RngStream(config.seed, 0))
        return {a: getattr(batch, _CHI_FIELD[a]).copy() for a in config.algorithms}

    e = config.ensemble
    need_cg = ("cg_residual" in config.algorithms) or ("cg_error" in config.algorithms)
    need_err = "cg_error" in config.algorithms
    need_minres = "minres_residual" in config.algorithms
    need_cgne = "cgne_relative" in config.algorithms
    out = {a: np.empty((config.trials, config.kmax + 1)) for a in config.algorithms}

    bsize = _pick_batch_size(config)
    for start in range(0, config.trials, bsize):
        idx = range(start, min(start + bsize, config.trials))
        B = len(idx)
        X = np.empty((B, e.n, e.m), dtype=e.dtype)
        b = np.empty((B, e.n), dtype=e.dtype)
        b_m = np.empty((B, e.m), dtype=e.dtype) if need_cgne else None
        for i, t in enumerate(idx):
            gen = RngStream(config.seed, t).generator()
            X[i] = sample_data_matrix(e, gen)
            b[i] = make_rhs(config.rhs, e.n, e.beta, gen)
            if need_cgne:
                b_m[i] = make_rhs(config.rhs, e.m, e.beta, gen)
        matvec = partial(_apply_cov_batch, X)

        W = None
        if need_err or need_cgne:
            W = np.matmul(X, X.conj().transpose(0, 2, 1))
        if need_cg:
            x_true = np.linalg.solve(W, b[:, :, None])[:, :, 0] if need_err else None
            r2, ew = _batched_cg(matvec, b, config.kmax, x_true, trial_offset=start)
            if "cg_residual" in out:
                out["cg_residual"][start:start + B] = r2
            if need_err:
                out["cg_error"][start:start + B] = ew
        if need_minres:
            out["minres_residual"][start:start + B] = _batched_minres_r2(matvec, b, config.kmax)
        if need_cgne:
            rhs = np.matmul(X, b_m[:, :, None])[:, :, 0]
            xt = np.linalg.solve(W, rhs[:, :, None])[:, :, 0]
            _, ew = _batched_cg(matvec, rhs, config.kmax, xt, trial_offset=start)
            out["cgne_relative"][start:start + B] = ew / ew[:, :1]

    for a, arr in out.items():
        if not np.all(np.isfinite(arr)):
            bad = int(np.argwhere(~np.isfinite(arr))[0][0])
            raise TrialFailureError(f"non-finite {a} trace in trial {bad}")
    return out


_CHI_FIELD = {
    "cg_residual": "cg_r2sq",
    "cg_error": "cg_ewsq",
    "minres_residual": "minres_r2sq",
    "cgne_relative": "cgne_relative_ewsq",
}

_HALTABLE = ("cg_residual", "cg_error", "minres_residual")


def run_experiment(config: ExperimentConfig) -> SummaryTable:
    """Run the configured trials and aggregate statistics against theory.

    Halting histograms (first k with norm < eps, strict; -1 when the trace
    never crosses within kmax) are produced for residual/error statistics
    when ``eps`` is set.
    """
    samples = collect_samples(config)
    d = config.ensemble.d
    beta_m = config.ensemble.beta * config.ensemble.m
    table = SummaryTable(config=config.to_dict(), samples=samples)

    for a in config.algorithms:
        arr = samples[a]
        for k in range(config.kmax + 1):
            col = arr[:, k]
            mean = float(col.mean())
            sd = float(col.std(ddof=1)) if config.trials > 1 else 0.0
            if k == 0 and a != "cg_error":
                pred_mean = 1.0
            else:
                pred_mean = theory.leading_order(a, d, k)
            rescaled = (np.sqrt(beta_m) / 2.0) * (col / mean - 1.0) if mean != 0 else col * 0.0
            rvar = float(rescaled.var(ddof=1)) if config.trials > 1 else 0.0
            pred_rvar = theory.rescaled_variance_prediction(a, d, k) if d < 1 else np.nan
            table.rows.append(SummaryRow(
                algorithm=a, k=k, sample_mean=mean, predicted_mean=pred_mean,
                rescaled_var=rvar, predicted_rescaled_var=pred_rvar,
                stderr=sd / np.sqrt(config.trials), trials=config.trials))

        if config.eps is not None and a in _HALTABLE:
            crossed = arr < config.eps**2
            any_cross = crossed.any(axis=1)
            halt = np.where(any_cross, np.argmax(crossed, axis=1), -1)
            ks, counts = np.unique(halt, return_counts=True)
            for kk, cc in zip(ks.tolist(), counts.tolist()):
                table.halting.append((a, int(kk), int(cc)))
    return table


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

_CSV_HEADER = "algorithm,k,sample_mean,predicted_mean,rescaled_var,predicted_rescaled_var,stderr,trials"
_HALT_HEADER = "algorithm,halt_k,count"


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x), ".17g")


def emit(table: SummaryTable, format: str, path) -> None:
    """Write a summary table to ``path`` as csv or json (UTF-8, LF endings)."""
    if format == "csv":
        lines = []
        if table.config is not None:
            lines.append("# config: " + json.dumps(table.config, sort_keys=True))
        lines.append(_CSV_HEADER)
        for r in table.rows:
            lines.append(",".join([r.algorithm, str(r.k), _fmt(r.sample_mean),
                                   _fmt(r.predicted_mean), _fmt(r.rescaled_var),
                                   _fmt(r.predicted_rescaled_var), _fmt(r.stderr),
                                   str(r.trials)]))
        if table.halting:
            lines.append(_HALT_HEADER)
            for a, k, c in table.halting:
                lines.append(f"{a},{k},{c}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    elif format == "json":
        def san(v):
            if isinstance(v, float) and np.isnan(v):
                return None
            return v

        doc = {
            "config": table.config,
            "rows": [{k: san(v) for k, v in r.__dict__.items()} for r in table.rows],
            "halting": [{"algorithm": a, "halt_k": k, "count": c} for a, k, c in table.halting],
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        raise ValueError("format must be csv or json")


def parse_table(path) -> SummaryTable:
    """Read back a table written by emit (both formats)."""
    text = open(path, encoding="utf-8").read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        table = SummaryTable(config=doc.get("config"))
        for r in doc["rows"]:
            fields = {k: (np.nan if v is None else v) for k, v in r.items()}
            fields["algorithm"] = r["algorithm"]
            table.rows.append(SummaryRow(**fields))
        table.halting = [(h["algorithm"], h["halt_k"], h["count"]) for h in doc.get("halting", [])]
        return table
    table = SummaryTable()
    section = "rows"
    for line in text.splitlines():
        if not line or line.startswith("#"):
            if line.startswith("# config: "):
                table.config = json.loads(line[len("# config: "):])
            continue
        if line == _CSV_HEADER:
            section = "rows"
            continue
        if line == _HALT_HEADER:
            section = "halt"
            continue
        parts = line.split(",")
        if section == "rows":
            vals = [float(p) if p else np.nan for p in parts[2:7]]
            table.rows.append(SummaryRow(parts[0], int(parts[1]), vals[0], vals[1],
                                         vals[2], vals[3], vals[4], int(parts[7])))
        else:
            table.halting.append((parts[0], int(parts[1]), int(parts[2])))
    return table
