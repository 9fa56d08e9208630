"""Command-line front end.

Subcommands: solve (one instance, trace CSV), sample (ensemble draw to
file), verify (per-iteration formulas vs. actual solver runs), table1
(rescaled-variance table per ensemble), halting (halting histogram plus
prediction), predict (closed-form values for given d, k, eps).

Exit codes: 0 success, 1 usage/validation error, 2 runtime failure.  Every
run echoes its resolved configuration, and every output file embeds it.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import theory
from .ensembles import EnsembleSpec, RngStream, make_rhs, sample_data_matrix
from .harness import ExperimentConfig, emit, run_experiment
from .solvers import cg_normal_equations, cg_solve, minres_solve
from .verify import oracle_suite

_ENSEMBLES = {"wishart": "gaussian", "gaussian": "gaussian",
              "mm4": "moment_match4", "bernoulli": "bernoulli"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p):
    p.add_argument("--ensemble", default="wishart", choices=sorted(_ENSEMBLES))
    p.add_argument("--beta", type=int, default=1, choices=(1, 2))
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--m", type=int, default=0, help="columns; default 2n (d = 1/2)")
    p.add_argument("--b", default="e1", choices=("e1", "random"), help="right-hand side")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="csv", choices=("csv", "json"))
    p.add_argument("--config", default=None, help="key=value file; flags override")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker hint (results are identical for any value)")
    p.add_argument("--budget", type=float, default=1e14, help="flop budget guard")


def _build_parser():
    top = _Parser(prog="krylovmc", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[], help="run one instance, write the trace")
    _add_common(p)
    p.add_argument("--alg", default="cg", choices=("cg", "minres", "cgne"))
    p.add_argument("--kmax", type=int, default=0, help="max iterations; default n")
    p.add_argument("--eps", type=float, default=0.0, help="stop at ||r_k|| < eps")

    p = sub.add_parser("sample", help="write one ensemble draw to a file")
    _add_common(p)

    p = sub.add_parser("verify", help="check solver traces against the factor formulas")
    _add_common(p)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("table1", help="rescaled residual variances vs. prediction")
    _add_common(p)
    p.add_argument("--ensembles", default="wishart,mm4,bernoulli")
    p.add_argument("--kmax", type=int, default=6)
    p.add_argument("--trials", type=int, default=50_000)
    p.add_argument("--mode", default="full", choices=("full", "chi"))

    p = sub.add_parser("halting", help="halting histogram and its prediction")
    _add_common(p)
    p.add_argument("--alg", default="cg", choices=("cg", "minres"))
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--kmax", type=int, default=0, help="trace length; default prediction+8")
    p.add_argument("--mode", default="full", choices=("full", "chi"))

    p = sub.add_parser("predict", help="closed-form predictions for d, k, eps")
    p.add_argument("--alg", default="cg-residual")
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    return top


def _load_config_file(path) -> dict:
    out = {}
    for line in open(path, encoding="utf-8"):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _resolve(args, argv) -> argparse.Namespace:
    """Apply config-file values for flags not given on the command line."""
    if getattr(args, "config", None):
        file_vals = _load_config_file(args.config)
        given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
        for key, val in file_vals.items():
            attr = key.replace("-", "_")
            if attr in given or not hasattr(args, attr):
                continue
            current = getattr(args, attr)
            cast = type(current) if current is not None else str
            setattr(args, attr, cast(val) if cast is not bool else val.lower() in ("1", "true", "yes"))
    if getattr(args, "m", 0) == 0 and hasattr(args, "n"):
        args.m = 2 * args.n
    return args


def _echo(args) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    print(f"# config: {json.dumps(resolved, default=str)}", file=sys.stderr)


def _ensemble_spec(args) -> EnsembleSpec:
    return EnsembleSpec(_ENSEMBLES[args.ensemble], args.n, args.m, args.beta)


def _write_trace_csv(path, trace, config: dict) -> None:
    lines = ["# config: " + json.dumps(config, sort_keys=True, default=str)]
    has_ew = trace.ewsq is not None
    lines.append("k,r2sq" + (",ewsq" if has_ew else ""))
    for k in range(trace.iterations + 1):
        row = f"{k},{trace.r2sq[k]:.17g}"
        if has_ew:
            row += f",{trace.ewsq[k]:.17g}"
        lines.append(row)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_solve(args) -> int:
    spec = _ensemble_spec(args)
    gen = RngStream(args.seed, 0).generator()
    X = sample_data_matrix(spec, gen)
    kmax = args.kmax or spec.n
    rhs_kind = "first_basis" if args.b == "e1" else "random_unit"
    if args.alg == "cgne":
        b_m = make_rhs(rhs_kind, spec.m, spec.beta, gen)
        trace = cg_normal_equations(X, b_m, kmax, tol=args.eps)
    else:
        b = make_rhs(rhs_kind, spec.n, spec.beta, gen)
        apply_w = lambda y: X @ (X.conj().T @ y)
        if args.alg == "cg":
            x_true = np.linalg.solve(X @ X.conj().T, b)
            trace = cg_solve(apply_w, b, kmax, tol=args.eps, x_true=x_true)
        else:
            trace = minres_solve(apply_w, b, kmax, tol=args.eps)
    where = args.out or "trace.csv"
    _write_trace_csv(where, trace, vars(args))
    conv = trace.converged_at if trace.converged_at is not None else "never"
    print(f"iterations={trace.iterations} converged_at={conv} final_r2sq={trace.r2sq[-1]:.6e}")
    print(f"wrote {where}")
    return 0


def _cmd_sample(args) -> int:
    spec = _ensemble_spec(args)
    X = sample_data_matrix(spec, RngStream(args.seed, 0))
    where = args.out or "sample.csv"
    header = "# config: " + json.dumps(vars(args), sort_keys=True, default=str)
    with open(where, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, X.view(np.float64) if spec.beta == 2 else X, delimiter=",", fmt="%.17g")
    print(f"wrote {where}")
    return 0


def _cmd_verify(args) -> int:
    report = oracle_suite(instances=args.instances, seed=args.seed,
                          n_max=min(args.n, 200), ensemble=_ENSEMBLES[args.ensemble],
                          beta=args.beta)
    print(f"instances={report.instances} max relative formula error: "
          f"cg_residual={report.max_cg_residual:.3e} "
          f"cg_error={report.max_cg_error:.3e} "
          f"minres_residual={report.max_minres_residual:.3e}")
    if report.worst() < args.tol:
        print(f"PASS (< {args.tol:g})")
        return 0
    print(f"FAIL (>= {args.tol:g})")
    return 2


def _cmd_table1(args) -> int:
    names = [s.strip() for s in args.ensembles.split(",") if s.strip()]
    rc = 0
    for name in names:
        spec = EnsembleSpec(_ENSEMBLES[name], args.n, args.m, args.beta)
        mode = "chi_model" if args.mode == "chi" else "full_matrix"
        config = ExperimentConfig(ensemble=spec, rhs="first_basis" if args.b == "e1" else "random_unit",
                                  algorithms=("cg_residual",), kmax=args.kmax,
                                  trials=args.trials, seed=args.seed, mode=mode,
                                  flop_budget=args.budget)
        table = run_experiment(config)
        print(f"[{name}] k, rescaled variance, predicted")
        for k in range(1, args.kmax + 1):
            row = table.row("cg_residual", k)
            print(f"  {k}  {row.rescaled_var:.4f}  {row.predicted_rescaled_var:.4f}")
        if args.out:
            stem, dot, ext = args.out.rpartition(".")
            where = f"{stem}_{name}.{ext}" if dot else f"{args.out}_{name}"
            emit(table, args.format, where)
            print(f"wrote {where}")
    return rc


def _cmd_halting(args) -> int:
    alg = "cg_residual" if args.alg == "cg" else "minres_residual"
    pred = theory.halting_prediction(alg, args.n / args.m, args.eps)
    kmax = args.kmax or min(pred.steps + 8, args.n - 1)
    spec = EnsembleSpec(_ENSEMBLES[args.ensemble], args.n, args.m, args.beta)
    config = ExperimentConfig(ensemble=spec, rhs="first_basis" if args.b == "e1" else "random_unit",
                              algorithms=(alg,), kmax=kmax, trials=args.trials,
                              seed=args.seed, eps=args.eps,
                              mode="chi_model" if args.mode == "chi" else "full_matrix",
                              flop_budget=args.budget)
    table = run_experiment(config)
    hist = table.halting_histogram(alg)
    print(f"prediction: {pred.steps}" + (" (boundary case)" if pred.on_boundary else ""))
    for k in sorted(hist):
        label = k if k >= 0 else "none"
        print(f"  halt at {label}: {hist[k]} / {args.trials}")
    if args.out:
        emit(table, args.format, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_predict(args) -> int:
    alg = theory.canonical_algorithm(args.alg)
    if args.eps is not None:
        pred = theory.halting_prediction(alg, args.d, args.eps)
        print(pred.steps)
        if pred.on_boundary:
            print("boundary: halting splits between this step and the next", file=sys.stderr)
    if args.k is not None:
        lo = theory.leading_order(alg, args.d, args.k)
        print(f"leading_order {lo:.17g}")
        if args.k >= 1 or alg == "cg_error":
            fv = theory.fluctuation_variance(alg, args.d, args.k)
            print(f"fluctuation_variance {fv:.17g}")
            print(f"rescaled_variance {theory.rescaled_variance_prediction(alg, args.d, args.k):.17g}")
    if args.eps is None and args.k is None:
        print("nothing to predict: pass --k and/or --eps", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = _resolve(args, argv)
        _echo(args)
        handler = {
            "solve": _cmd_solve, "sample": _cmd_sample, "verify": _cmd_verify,
            "table1": _cmd_table1, "halting": _cmd_halting, "predict": _cmd_predict,
        }[args.command]
        return handler(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
