"""Command-line interface.

Commands: ``fit``, ``cv``, ``predict``, ``eval``, ``simulate`` and
``replay``. Every command writing to ``--out-dir`` also writes a
``manifest.json`` holding the resolved configuration, input digests and the
argument vector, which ``replay`` re-executes.

Exit codes: 0 success, 2 usage error, 3 data error, 4 the fit did not
converge (outputs are still written and flagged).
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .cross_validation import CvConfig, CvError, select_sigma
from .density import density_grid, log_fitted_vector
from .em_baseline import EmConfig, RandomRestarts, fit_em
from .empirical_bayes import summarize
from .fixtures import FIXTURES, fixture_path
from .fw_solver import FitConfig, FitError, fit_npmle
from .io import (DataError, FitDocument, load_dataset, load_fit, load_json, load_model,
                 file_digest, write_csv, write_json)
from .local_search import SearchConfig
from .metrics import hellinger_fixed, hellinger_random_mc
from .model import (Ball, Box, Design, DimensionError, Linear, Polynomial,
                    RegressionFunction, Trigonometric)
from .simgen import SCENARIOS, Scenario, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOT_CONVERGED = 0, 2, 3, 4
GRID_POINTS = 201
N_SLICES = 6
SLICE_SIGMAS = 6.0

logger = logging.getLogger("npmixreg")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers
# ---------------------------------------------------------------------------


def parse_domain(spec: str, dim: int):
    """``box:lo,hi`` (the cube ``[lo, hi]^dim``) or ``ball:r`` (centred at 0)."""
    kind, _, rest = spec.partition(":")
    try:
        vals = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise UsageError(f"cannot parse domain {spec!r}") from None
    try:
        if kind == "box" and len(vals) == 2:
            return Box.cube(vals[0], vals[1], dim)
        if kind == "ball" and len(vals) == 1:
            return Ball(np.zeros(dim), vals[0])
    except ValueError as exc:
        raise UsageError(f"invalid domain {spec!r}: {exc}") from None
    raise UsageError(f"domain must look like box:LO,HI or ball:R, got {spec!r}")


def parse_regression(spec: str) -> RegressionFunction:
    kind, _, arg = spec.partition(":")
    if kind == "linear" and not arg:
        return Linear()
    if kind == "trigonometric" and not arg:
        return Trigonometric()
    if kind == "polynomial":
        try:
            return Polynomial(int(arg))
        except ValueError:
            raise UsageError(f"polynomial needs a degree, e.g. polynomial:2, got {spec!r}") from None
    raise UsageError(f"regression must be linear, trigonometric or polynomial:DEG, got {spec!r}")


def _floats(text: str, what: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse {what} {text!r}") from None


def _resolve_data_arg(args):
    """Map ``fixture:NAME`` to a path and default column names."""
    x_cols = args.x_cols.split(",") if args.x_cols else None
    y_col = args.y_col
    path = args.data
    if path.startswith("fixture:"):
        name = path.split(":", 1)[1]
        if name not in FIXTURES:
            raise UsageError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}")
        fx = FIXTURES[name]
        path = str(fixture_path(name))
        x_cols = x_cols or [fx.x_col]
        y_col = y_col or fx.y_col
    if not x_cols or not y_col:
        raise UsageError("--x-cols and --y-col are required")
    return path, x_cols, y_col


def _intercept(args, rf) -> bool:
    if args.intercept is None:
        return isinstance(rf, Linear)
    if args.intercept and not isinstance(rf, Linear):
        raise UsageError("--intercept applies to linear regression only")
    return bool(args.intercept)


def _fit_config(args, init: str) -> FitConfig:
    return FitConfig(
        max_outer_iters=args.max_iters,
        gap_tolerance=args.gap_tol,
        search=SearchConfig(num_starts=args.num_starts, rng_seed=args.seed),
        init=init,
        init_seed=args.seed,
    )


def _manifest(command: str, argv, config: dict, inputs: Sequence[str], outputs, status: str):
    return {
        "command": command,
        "argv": list(argv),
        "config": config,
        "inputs": {os.path.abspath(p): file_digest(p) for p in inputs},
        "outputs": sorted(outputs),
        "status": status,
        "tool": {
            "name": "npmixreg",
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def _fit_config_dict(cfg: FitConfig) -> dict:
    s = cfg.search
    return {
        "max_outer_iters": cfg.max_outer_iters, "gap_tolerance": cfg.gap_tolerance,
        "merge_tolerance": cfg.merge_tolerance, "simplex_tol": cfg.simplex_tol,
        "simplex_max_iters": cfg.simplex_max_iters, "init": cfg.init, "init_seed": cfg.init_seed,
        "stall_window": cfg.stall_window, "stall_tolerance": cfg.stall_tolerance,
        "search": {
            "num_starts": s.num_starts, "max_local_iters": s.max_local_iters,
            "x_tolerance": s.x_tolerance, "f_tolerance": s.f_tolerance, "rng_seed": s.rng_seed,
            "line_scan_points": s.line_scan_points, "max_golden_iters": s.max_golden_iters,
        },
    }


def _strip_out_dir(argv):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out-dir":
            skip = True
            continue
        if a.startswith("--out-dir="):
            continue
        out.append(a)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cv_table_rows(table):
    return [(float(s), float(c)) for s, c in table]


def _run_cv(args, data, rf, domain, fcfg):
    grid = _floats(args.grid, "--grid") if getattr(args, "grid", None) else None
    cv = CvConfig(folds=args.folds, sigma_grid=grid, fold_seed=args.seed, fit=fcfg,
                  grid_size=getattr(args, "grid_size", 15))
    try:
        sigma, table = select_sigma(data, rf, domain, cv)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return sigma, table, cv


def cmd_fit(args, argv) -> int:
    rf = parse_regression(args.regression)
    path, x_cols, y_col = _resolve_data_arg(args)
    intercept = _intercept(args, rf)
    data = load_dataset(path, x_cols, y_col, intercept, Design.FIXED)
    dim = rf.n_coef(data.p)
    domain = parse_domain(args.domain, dim)
    init = "least_squares" if args.init == "least_squares" else "random"
    fcfg = _fit_config(args, init)
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = ["fit.json", "trace.csv", "lines.csv", "manifest.json"]
    config = {"regression": rf.to_dict(), "intercept": intercept, "x_cols": x_cols, "y_col": y_col,
              "domain": domain.to_dict(), "method": args.method, "seed": args.seed}

    if args.sigma_cv:
        sigma, table, cv = _run_cv(args, data, rf, domain, fcfg)
        write_csv(os.path.join(args.out_dir, "cv.csv"), ["sigma", "criterion"], _cv_table_rows(table))
        outputs.append("cv.csv")
        config["cv"] = {"folds": cv.n_folds(data.n), "fold_seed": cv.fold_seed, "grid": list(cv.grid(data, rf))}
        print(f"selected sigma {sigma!r}")
    else:
        sigma = args.sigma
    config["sigma"] = sigma

    if args.method == "npmle":
        config["fit"] = _fit_config_dict(fcfg)
        res = fit_npmle(data, rf, sigma, domain, fcfg)
        measure, converged, stop = res.measure, res.converged, res.stop_reason
        logf = res.log_fitted
        trace_rows = [(r.iteration, r.loglik, r.gap, r.gap_raw, r.psi, r.n_atoms,
                       r.subproblem_value, r.simplex_residual, r.simplex_converged) for r in res.trace]
        trace_header = ["k", "loglik", "gap", "gap_raw", "psi", "n_atoms",
                        "subproblem_value", "simplex_residual", "simplex_converged"]
    else:
        if not isinstance(rf, Linear):
            raise UsageError("--method em supports linear regression only")
        ecfg = EmConfig(k=args.k, init=RandomRestarts(args.em_restarts, args.seed),
                        fixed_sigma=None if args.sigma_cv else sigma)
        config["em"] = {"k": ecfg.k, "restarts": args.em_restarts, "max_iters": ecfg.max_iters,
                        "loglik_tol": ecfg.loglik_tol, "fixed_sigma": ecfg.fixed_sigma}
        res = fit_em(data, ecfg)
        measure, converged = res.measure, res.converged
        stop = "loglik_tol" if converged else "max_iters"
        sigma = res.sigma
        logf = log_fitted_vector(rf, sigma, measure, data.X, data.y)
        trace_rows = [(k, L / data.n, "", "") for k, L in enumerate(res.trace)]
        trace_header = ["k", "loglik", "gap", "psi"]

    doc = FitDocument(
        method=args.method, regression=rf.to_dict(), intercept=intercept, x_cols=tuple(x_cols),
        y_col=y_col, domain=domain.to_dict(), sigma=float(sigma),
        atoms=tuple(tuple(float(v) for v in a) for a in measure.atoms),
        weights=tuple(float(w) for w in measure.weights),
        loglik_mean=float(np.mean(logf)), loglik_sum=float(np.sum(logf)),
        converged=bool(converged), stop_reason=stop, n=data.n,
    )
    write_json(os.path.join(args.out_dir, "fit.json"), doc.to_dict())
    write_csv(os.path.join(args.out_dir, "trace.csv"), trace_header, trace_rows)
    coef_names = [f"beta_{j}" for j in range(measure.dim)]
    write_csv(os.path.join(args.out_dir, "lines.csv"), ["component", "weight"] + coef_names,
              [(j, float(w), *map(float, a)) for j, (a, w) in enumerate(zip(measure.atoms, measure.weights))])
    status = "ok" if converged else "not_converged"
    write_json(os.path.join(args.out_dir, "manifest.json"),
               _manifest("fit", _strip_out_dir(argv), config, [path], outputs, status))
    print(f"atoms {measure.k}  loglik_mean {doc.loglik_mean!r}  loglik_sum {doc.loglik_sum!r}  "
          f"converged {converged} ({stop})")
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_cv(args, argv) -> int:
    rf = parse_regression(args.regression)
    path, x_cols, y_col = _resolve_data_arg(args)
    intercept = _intercept(args, rf)
    data = load_dataset(path, x_cols, y_col, intercept, Design.FIXED)
    domain = parse_domain(args.domain, rf.n_coef(data.p))
    init = "least_squares" if args.init == "least_squares" else "random"
    fcfg = _fit_config(args, init)
    os.makedirs(args.out_dir, exist_ok=True)
    sigma, table, cv = _run_cv(args, data, rf, domain, fcfg)
    write_csv(os.path.join(args.out_dir, "cv.csv"), ["sigma", "criterion"], _cv_table_rows(table))
    config = {"regression": rf.to_dict(), "intercept": intercept, "x_cols": x_cols, "y_col": y_col,
              "domain": domain.to_dict(), "seed": args.seed, "folds": cv.n_folds(data.n),
              "fold_seed": cv.fold_seed, "grid": list(cv.grid(data, rf)),
              "fit": _fit_config_dict(fcfg), "selected_sigma": sigma}
    write_json(os.path.join(args.out_dir, "manifest.json"),
               _manifest("cv", _strip_out_dir(argv), config, [path], ["cv.csv", "manifest.json"], "ok"))
    print(repr(sigma))
    return EXIT_OK


def cmd_predict(args, argv) -> int:
    doc = load_fit(args.fit)
    x_cols = args.x_cols.split(",") if args.x_cols else list(doc.x_cols)
    y_col = args.y_col or doc.y_col
    data = load_dataset(args.data, x_cols, y_col, doc.intercept, Design.FIXED)
    measure = doc.measure
    post = summarize(measure, doc.rf, doc.sigma, data.X, data.y)
    header = ["row"] + [f"post_mean_{j}" for j in range(measure.dim)] + ["map_atom", "map_weight"]
    rows = []
    for i in range(data.n):
        row = [i, *map(float, post.mean[i]), int(post.map_index[i]), float(post.map_weight[i])]
        if args.full_posterior:
            row += list(map(float, post.weights[i]))
        rows.append(row)
    if args.full_posterior:
        header += [f"post_weight_{j}" for j in range(measure.k)]
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "predictions.csv")
    write_csv(out, header, rows)
    config = {"x_cols": x_cols, "y_col": y_col, "full_posterior": bool(args.full_posterior)}
    write_json(os.path.join(args.out_dir, "manifest.json"),
               _manifest("predict", _strip_out_dir(argv), config, [args.fit, args.data],
                         ["predictions.csv", "manifest.json"], "ok"))
    print(f"wrote {data.n} rows to {out}")
    return EXIT_OK


def _design_sampler(truth_doc: dict, intercept: bool):
    design = truth_doc.get("design")
    if not design or design.get("kind") != "uniform":
        return None
    lo, hi = float(design["low"]), float(design["high"])

    def sampler(rng, m):
        x = rng.uniform(lo, hi, size=m)
        return np.column_stack([np.ones(m), x]) if intercept else x[:, None]

    return sampler


def cmd_eval(args, argv) -> int:
    if not os.path.exists(args.truth):
        raise DataError(f"truth sidecar {args.truth!r} not found")
    rf_a, sig_a, G_a, int_a = load_model(args.fit)
    rf_b, sig_b, G_b, int_b = load_model(args.truth)
    truth_doc = load_json(args.truth)
    if rf_a.to_dict() != rf_b.to_dict() or int_a != int_b:
        raise DataError("fit and truth use different regression functions or intercept settings")
    os.makedirs(args.out_dir, exist_ok=True)
    inputs = [args.fit, args.truth]
    result = {"hellinger_fixed": None, "hellinger_random": None, "hellinger_random_se": None}

    xs_data = None
    if args.data:
        fit_doc = load_json(args.fit)
        x_cols = args.x_cols.split(",") if args.x_cols else fit_doc.get("x_cols", ["x"])
        y_col = args.y_col or fit_doc.get("y_col", "y")
        data = load_dataset(args.data, x_cols, y_col, int_a, Design.FIXED)
        result["hellinger_fixed"] = hellinger_fixed(rf_a, sig_a, G_a, sig_b, G_b, data)
        xs_data = data.X[:, -1]
        inputs.append(args.data)
    sampler = _design_sampler(truth_doc, int_a)
    if sampler is not None and args.mc > 0:
        est, se = hellinger_random_mc(rf_a, sig_a, G_a, sig_b, G_b, sampler, args.mc, args.seed)
        result["hellinger_random"], result["hellinger_random_se"] = est, se

    # ridgeline data: densities on a y-grid at a few covariate values
    if args.x_slices:
        slices = _floats(args.x_slices, "--x-slices")
    elif truth_doc.get("design"):
        d = truth_doc["design"]
        slices = np.linspace(float(d["low"]), float(d["high"]), N_SLICES).tolist()
    elif xs_data is not None:
        slices = np.linspace(xs_data.min(), xs_data.max(), N_SLICES).tolist()
    else:
        slices = []
    outputs = ["eval.json", "manifest.json"]
    if slices:
        rows = []
        smax = float(max(np.max(sig_a), np.max(sig_b)))
        for s_idx, xv in enumerate(slices):
            x = np.array([1.0, xv]) if int_a else np.array([xv])
            means = np.concatenate([rf_a.mean_matrix(x[None, :], G_a.atoms)[0],
                                    rf_b.mean_matrix(x[None, :], G_b.atoms)[0]])
            ygrid = np.linspace(means.min() - SLICE_SIGMAS * smax, means.max() + SLICE_SIGMAS * smax,
                                GRID_POINTS)
            dt = density_grid(rf_b, sig_b, G_b, x, ygrid)
            df = density_grid(rf_a, sig_a, G_a, x, ygrid)
            rows += [(s_idx, float(xv), float(y), float(a), float(b)) for y, a, b in zip(ygrid, dt, df)]
        write_csv(os.path.join(args.out_dir, "density_grid.csv"),
                  ["slice", "x", "y", "density_truth", "density_fit"], rows)
        outputs.append("density_grid.csv")
    write_json(os.path.join(args.out_dir, "eval.json"), result)
    config = {"mc_draws": args.mc, "seed": args.seed, "x_slices": slices, "grid_points": GRID_POINTS}
    write_json(os.path.join(args.out_dir, "manifest.json"),
               _manifest("eval", _strip_out_dir(argv), config, inputs, outputs, "ok"))
    for k in sorted(result):
        print(f"{k} {result[k]!r}")
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    try:
        sc = Scenario(args.scenario, n=args.n, seed=args.seed, sigma=args.sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data, truth = generate(sc)
    os.makedirs(args.out_dir, exist_ok=True)
    x = data.X[:, -1]
    write_csv(os.path.join(args.out_dir, "data.csv"), ["x", "y", "label"],
              [(float(a), float(b), int(c)) for a, b, c in zip(x, data.y, truth.labels)])
    write_json(os.path.join(args.out_dir, "truth.json"), truth.to_dict())
    config = {"scenario": sc.kind, "n": sc.n, "seed": sc.seed, "sigma": sc.sigma,
              "x_low": sc.x_low, "x_high": sc.x_high}
    write_json(os.path.join(args.out_dir, "manifest.json"),
               _manifest("simulate", _strip_out_dir(argv), config, [],
                         ["data.csv", "truth.json", "manifest.json"], "ok"))
    print(f"wrote {data.n} rows to {os.path.join(args.out_dir, 'data.csv')}")
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    man = load_json(args.manifest)
    if "argv" not in man:
        raise DataError(f"{args.manifest}: manifest has no argv")
    for p, digest in man.get("inputs", {}).items():
        if not os.path.exists(p) or file_digest(p) != digest:
            raise DataError(f"input {p} is missing or changed since the manifest was written")
    return main(list(man["argv"]) + ["--out-dir", args.out_dir])


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header, or fixture:NAME")
    p.add_argument("--x-cols", help="comma-separated covariate columns")
    p.add_argument("--y-col", help="response column")


def _add_model_args(p):
    p.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=None,
                   help="prepend a constant covariate (default: on for linear regression)")
    p.add_argument("--regression", default="linear",
                   help="linear | trigonometric | polynomial:DEG (default linear)")
    p.add_argument("--domain", default="box:-10,10", help="box:LO,HI or ball:R (default box:-10,10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100, help="outer iteration cap")
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.add_argument("--num-starts", type=int, default=20, help="local search starts per iteration")
    p.add_argument("--init", choices=["least_squares", "random"], default="least_squares")
    p.add_argument("--folds", type=int, default=None, help="cross-validation folds")
    p.add_argument("--grid", help="comma-separated ascending sigma grid for cross-validation")
    p.add_argument("--grid-size", type=int, default=15)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npmixreg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"npmixreg {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a mixture of regressions")
    _add_data_args(p)
    _add_model_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sigma", type=float, help="known noise scale")
    g.add_argument("--sigma-cv", action="store_true", help="select sigma by cross-validation")
    p.add_argument("--method", choices=["npmle", "em"], default="npmle")
    p.add_argument("--k", type=int, default=3, help="components (em only)")
    p.add_argument("--em-restarts", type=int, default=10)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="cross-validate sigma")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="empirical Bayes posterior summaries per row")
    p.add_argument("--fit", required=True, help="fit.json")
    p.add_argument("--data", required=True)
    p.add_argument("--x-cols")
    p.add_argument("--y-col")
    p.add_argument("--full-posterior", action="store_true", help="also write posterior weights")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="Hellinger distances and density grids against a truth sidecar")
    p.add_argument("--fit", required=True, help="fit.json (or a truth.json)")
    p.add_argument("--truth", required=True, help="truth.json from simulate")
    p.add_argument("--data", help="CSV with the design points for the fixed-design distance")
    p.add_argument("--x-cols")
    p.add_argument("--y-col")
    p.add_argument("--mc", type=int, default=1000, help="Monte-Carlo draws (0 disables)")
    p.add_argument("--x-slices", help="comma-separated covariate values for the density grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="generate a simulated dataset and its truth")
    p.add_argument("--scenario", required=True, help=f"one of {', '.join(SCENARIOS)}")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=None, help="override the noise scale")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"npmixreg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError, ValueError) as exc:
        print(f"npmixreg {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, CvError) as exc:
        print(f"npmixreg {args.command}: fit failed: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
