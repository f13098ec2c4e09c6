"""Command-line front end: ``slfpca {simulate,fit,tune,mc,metrics}``.

Every subcommand accepts ``--config FILE`` holding a JSON object whose keys are
the long flag names with dashes replaced by underscores; flags given on the
command line win over the file. Exit codes: 0 success, 2 usage, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace

import numpy as np

from .bspline import build_basis
from .dataset import build_design, load_csv, write_csv
from .errors import DataError, InvalidArgumentError, NumericalSingularityError, SlfpcaError
from .initial import init_from_naive_fpca
from .model import FitConfig, SlfpcaModel
from .penalty import PenaltyConfig
from .simulation import (DOMAIN_END, RUN_COLUMNS, SimScenario, generate, ise, match_components,
                         monte_carlo, support_metrics, true_eigenfunctions, true_mean)
from .solver import fit
from .tuning import TuningGrid, select_kappa_mu, select_tuning

logger = logging.getLogger("slfpca")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
GRID_POINTS = 501

# defaults live here rather than in argparse so that --config can sit between them and the flags
DEFAULTS = {
    "case": 1, "n": 200, "design": "dense", "seed": 0,
    "T": DOMAIN_END, "K": 9, "d": 3, "p": 2,
    "kappa_mu": None, "kappa_theta": 1e-4, "lam": 0.0,
    "max_outer_iter": 100, "sticky_zeros": True,
    # None falls back to the library's default candidate lists
    "kappa_mu_grid": None, "kappa_theta_grid": None, "lambda_grid": None,
    "runs": 20,
}
REQUIRED = {
    "simulate": ("out_data", "out_truth"),
    "fit": ("data", "out_model"),
    "tune": ("data", "out_table"),
    "mc": ("out_runs", "out_summary"),
    "metrics": ("model", "truth"),
}


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _float_list(text, name):
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"--{name.replace('_', '-')}: {exc}") from None
    seen, out = set(), []
    for v in vals:
        if v in seen:
            logger.warning("duplicate value %r in %s dropped", v, name)
            continue
        seen.add(v)
        out.append(v)
    return out


# ---------------------------------------------------------------- parser

def _add_common(sp):
    sp.add_argument("--config", help="JSON file of option values (flags take precedence)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("-v", "--verbose", action="store_true")


def _add_basis(sp):
    sp.add_argument("--T", type=float, dest="T", help="domain end (default 10)")
    sp.add_argument("--K", type=int, dest="K", help="number of interior knots (default 9)")
    sp.add_argument("--d", type=int, dest="d", help="spline degree (default 3)")
    sp.add_argument("--p", type=int, dest="p", help="number of FPCs (default 2)")
    sp.add_argument("--max-outer-iter", type=int)
    sp.add_argument("--no-sticky-zeros", dest="sticky_zeros", action="store_const", const=False,
                    help="let shrunk coefficients re-enter at the next outer iteration")


def _add_grid(sp):
    sp.add_argument("--kappa-mu-grid", help="comma-separated GCV candidates for kappa_mu")
    sp.add_argument("--kappa-theta-grid", help="comma-separated candidates for kappa_theta")
    sp.add_argument("--lambda-grid", help="comma-separated candidates for lambda (must include 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slfpca", argument_default=None,
                                     description="Sparse logistic functional PCA for binary functional data.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate a simulated dataset and its truth")
    _add_common(sp)
    sp.add_argument("--case", type=int, choices=(1, 2, 3, 4))
    sp.add_argument("--n", type=int)
    sp.add_argument("--design", choices=("dense", "sparse"))
    sp.add_argument("--out-data")
    sp.add_argument("--out-truth")

    sp = sub.add_parser("fit", help="fit at fixed penalties")
    _add_common(sp)
    _add_basis(sp)
    sp.add_argument("--data")
    sp.add_argument("--kappa-mu", type=float, help="default: GCV choice at the first surrogate")
    sp.add_argument("--kappa-mu-grid", help="comma-separated GCV candidates when --kappa-mu is absent")
    sp.add_argument("--kappa-theta", type=float)
    sp.add_argument("--lambda", type=float, dest="lam")
    sp.add_argument("--out-model")
    sp.add_argument("--out-grid")

    sp = sub.add_parser("tune", help="BIC grid search followed by the refit at the best cell")
    _add_common(sp)
    _add_basis(sp)
    _add_grid(sp)
    sp.add_argument("--data")
    sp.add_argument("--grid-file", help="JSON object with kappa_mu, kappa_theta and lambda lists")
    sp.add_argument("--out-table")
    sp.add_argument("--out-best")
    sp.add_argument("--out-model")
    sp.add_argument("--out-grid")

    sp = sub.add_parser("mc", help="Monte Carlo study on a simulation case")
    _add_common(sp)
    _add_basis(sp)
    _add_grid(sp)
    sp.add_argument("--case", type=int, choices=(1, 2, 3, 4))
    sp.add_argument("--n", type=int)
    sp.add_argument("--design", choices=("dense", "sparse"))
    sp.add_argument("--runs", type=int)
    sp.add_argument("--out-runs")
    sp.add_argument("--out-summary")

    sp = sub.add_parser("metrics", help="score a fitted model against a truth file")
    _add_common(sp)
    sp.add_argument("--model")
    sp.add_argument("--truth")
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, the ``--config`` file and explicit flags, in increasing precedence."""
    opts = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("--config must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
        opts.update(cfg)
    for key, val in vars(args).items():
        if val is not None and key != "config":
            opts[key] = val
    for key in REQUIRED[args.command]:
        if not opts.get(key):
            raise UsageError(f"--{key.replace('_', '-')} is required")
    if "p" in opts and int(opts["p"]) < 1:
        raise UsageError(f"--p must be at least 1, got {opts['p']}")
    return opts


# ---------------------------------------------------------------- helpers

def _basis(opts):
    return build_basis(float(opts["T"]), int(opts["K"]), int(opts["d"]))


def _fit_config(opts, pen=None):
    return FitConfig(num_fpcs=int(opts["p"]), penalties=pen or PenaltyConfig(),
                     max_outer_iter=int(opts["max_outer_iter"]),
                     sticky_zeros=bool(opts["sticky_zeros"]), seed=int(opts["seed"]))


def _tuning_grid(opts):
    if opts.get("grid_file"):
        try:
            with open(opts["grid_file"]) as fh:
                g = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read grid file {opts['grid_file']}: {exc}") from None
        for key, flag in (("kappa_mu", "kappa_mu_grid"), ("kappa_theta", "kappa_theta_grid"),
                          ("lambda", "lambda_grid")):
            if key in g:
                opts[flag] = g[key]
    lists = {}
    for field in ("kappa_mu", "kappa_theta", "lambda"):
        flag = f"{field}_grid"
        if opts.get(flag) is not None:
            lists[f"{field}_candidates"] = tuple(_float_list(opts[flag], flag))
    return TuningGrid(**lists)


def _model_payload(model, config, report):
    out = model.to_dict()
    out["config"] = config.to_dict()
    out["report"] = report.to_dict()
    return out


def _write_grid(path, model):
    t = np.linspace(0.0, model.basis.T, GRID_POINTS)
    cols = [t, model.mean_function(t)] + list(model.eigenfunctions(t).T)
    header = ["t", "mu_hat"] + [f"phi_{k + 1}" for k in range(model.p)]
    _write_rows(path, header, zip(*cols))


def _print_report(model, report, pen, out=None):
    out = sys.stdout if out is None else out
    print(f"kappa_mu={pen.kappa_mu!r} kappa_theta={pen.kappa_theta!r} lambda={pen.lam!r}", file=out)
    print("sparseness: off" if pen.lam == 0 else "sparseness: on", file=out)
    print(f"iterations: {report.iterations}  converged: {_fmt(report.converged)}", file=out)
    print(f"objective: {report.objective!r}  neg_loglik: {report.neg_loglik!r}", file=out)
    for k in range(model.p):
        nz = int(np.count_nonzero(model.theta[k]))
        print(f"fpc {k + 1}: nonzero coefficients {nz}/{model.basis.L}  df {report.df[k]!r}", file=out)
    if report.dead_components:
        print(f"warning: components collapsed to zero: {report.dead_components}", file=out)


# ---------------------------------------------------------------- commands

def cmd_simulate(opts) -> int:
    sc = SimScenario(case=int(opts["case"]), n=int(opts["n"]), design=opts["design"],
                     seed=int(opts["seed"]))
    data, truth = generate(sc)
    write_csv(data, opts["out_data"])
    t = np.linspace(0.0, truth.T, GRID_POINTS)
    _write_json(opts["out_truth"], {
        "case": truth.case, "T": truth.T, "design": sc.design, "n": sc.n, "seed": sc.seed,
        "eigenvalues": list(truth.eigenvalues),
        "grid": t.tolist(), "mu": truth.mean(t).tolist(),
        "phi": [g(t).tolist() for g in truth.eigenfunctions],
        "scores": truth.scores.tolist(),
    })
    print(f"wrote {data.N} observations for {data.n} subjects to {opts['out_data']}")
    return EXIT_OK


def _prepare(opts):
    basis = _basis(opts)
    data = load_csv(opts["data"], basis.T)
    design = build_design(data, basis)
    init = init_from_naive_fpca(data, basis, int(opts["p"]), seed=int(opts["seed"]))
    return basis, data, design, init


def cmd_fit(opts) -> int:
    basis, data, design, init = _prepare(opts)
    kappa_mu = opts["kappa_mu"]
    if kappa_mu is None:
        cands = TuningGrid().kappa_mu_candidates if opts["kappa_mu_grid"] is None \
            else _float_list(opts["kappa_mu_grid"], "kappa_mu_grid")
        kappa_mu, _ = select_kappa_mu(data, basis, init, cands, design)
    pen = PenaltyConfig(float(kappa_mu), float(opts["kappa_theta"]), float(opts["lam"]))
    config = _fit_config(opts, pen)
    model, report = fit(data, basis, config, init, design)
    _write_json(opts["out_model"], _model_payload(model, config, report))
    if opts.get("out_grid"):
        _write_grid(opts["out_grid"], model)
    _print_report(model, report, pen)
    return EXIT_OK


def cmd_tune(opts) -> int:
    grid = _tuning_grid(opts)
    basis, data, design, init = _prepare(opts)
    config = _fit_config(opts)
    result = select_tuning(data, basis, grid, config, init, design)
    _write_rows(opts["out_table"], ["kappa_theta", "lambda", "bic", "df_total", "converged"],
                [(r["kappa_theta"], r["lambda"], r["bic"], r["df_total"], r["converged"])
                 for r in result.table])
    best = result.best
    print(f"best: kappa_mu={best.kappa_mu!r} kappa_theta={best.kappa_theta!r} lambda={best.lam!r}")
    if opts.get("out_best"):
        _write_json(opts["out_best"], {"kappa_mu": best.kappa_mu, "kappa_theta": best.kappa_theta,
                                       "lambda": best.lam, "a": best.a, "bic": result.best_row()["bic"]})
    if result.best_model is None:
        raise NumericalSingularityError("every tuning cell failed; try larger kappa_theta values")
    config = replace(config, penalties=best)
    if opts.get("out_model"):
        _write_json(opts["out_model"], _model_payload(result.best_model, config, result.best_report))
    if opts.get("out_grid"):
        _write_grid(opts["out_grid"], result.best_model)
    _print_report(result.best_model, result.best_report, best)
    return EXIT_OK


def cmd_mc(opts) -> int:
    grid = _tuning_grid(opts)
    sc = SimScenario(case=int(opts["case"]), n=int(opts["n"]), design=opts["design"])
    runs = int(opts["runs"])
    if runs < 1:
        raise UsageError("--runs must be at least 1")
    result = monte_carlo(sc, _fit_config(opts), grid, runs, base_seed=int(opts["seed"]),
                         basis=_basis(opts))
    _write_rows(opts["out_runs"], RUN_COLUMNS, [[r[c] for c in RUN_COLUMNS] for r in result.rows])
    summary = result.summary()
    _write_rows(opts["out_summary"], ["metric", "mean", "sd", "runs", "failures"],
                [(k, m, s, len(result.rows), result.failures) for k, (m, s) in summary.items()])
    for k, (m, s) in summary.items():
        print(f"{k}: {m:.4f} ({s:.4f})")
    print(f"runs: {len(result.rows)}  failures: {result.failures}")
    return EXIT_OK


def _truth_functions(payload):
    """Exact truth for the built-in cases, otherwise linear interpolation of the stored grid."""
    case = payload.get("case")
    if case in (1, 2, 3, 4):
        return true_mean, list(true_eigenfunctions(case))
    t = np.asarray(payload["grid"], dtype=float)

    def interp(vals):
        vals = np.asarray(vals, dtype=float)
        return lambda s: np.interp(s, t, vals)

    return interp(payload["mu"]), [interp(v) for v in payload["phi"]]


def cmd_metrics(opts) -> int:
    try:
        with open(opts["model"]) as fh:
            model = SlfpcaModel.from_dict(json.load(fh))
        with open(opts["truth"]) as fh:
            truth = json.load(fh)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read model or truth: {exc}") from None
    T = float(truth.get("T", DOMAIN_END))
    if not math.isclose(model.basis.T, T, rel_tol=1e-12):
        raise DataError(f"model domain [0, {model.basis.T}] does not match truth domain [0, {T}]")
    mu, phis = _truth_functions(truth)
    ests = [(lambda t, k=k: model.eigenfunctions(t)[:, k]) for k in range(model.p)]
    if len(ests) >= len(phis):
        ests = match_components(ests, phis, T)
    print(f"ise_mu: {ise(model.mean_function, mu, T=T)!r}")
    for k, (est, g) in enumerate(zip(ests, phis), start=1):
        za, na = support_metrics(est, g, T=T)
        print(f"ise_{k}: {ise(est, g, sign_align=True, T=T)!r}")
        print(f"zero_acc_{k}: {za!r}  nonzero_acc_{k}: {na!r}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "tune": cmd_tune, "mc": cmd_mc,
            "metrics": cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        opts = resolve_options(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"slfpca {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgumentError as exc:
        print(f"slfpca {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"slfpca {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalSingularityError, FloatingPointError) as exc:
        print(f"slfpca {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SlfpcaError as exc:
        print(f"slfpca {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
