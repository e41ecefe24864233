"""Command-line interface: ``drmreg fit | predict | gof | simulate``.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 partial result.
Errors are reported on one stderr line, ``drmreg: error[E_CODE]: message``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings

import numpy as np

from . import __version__
from .core import DRMError, DegenerateDataError, DimensionError
from .diagnostics import gof_report
from .estimation import ConvergenceError, ConvergenceWarning, FitOptions, fit
from .inference import asymptotic_covariance, standard_errors, wald_test
from .io import DataFormatError, load_model, read_data, read_table, save_model
from .regression import DEFAULT_BANDWIDTH, nadaraya_watson, ols_fit, predict_many
from .simulation import load_scenario, run_study

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, message, status):
        super().__init__(message)
        self.code = code
        self.status = status


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _fmt(v):
    return repr(float(v))


def cmd_fit(args) -> int:
    data, columns = read_data(args.data, args.reference, args.group_column)
    opts = FitOptions(tol=args.tol, max_iter=args.max_iter, standardize=args.standardize)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = fit(data, opts)
    cov = asymptotic_covariance(model)
    inference = {
        "se": standard_errors(model, cov),
        "wald_per_group": {lab: wald_test(model, cov, lab) for lab in model.labels[:-1]},
        "wald_joint": wald_test(model, cov),
        "covariance_form": cov.form,
    }
    save_model(model, args.out, columns, inference)

    se = inference["se"]
    out = sys.stdout
    out.write(f"density ratio fit: reference={model.reference} n={model.n} "
              f"L={model.dimension} q={model.q}\n")
    out.write(f"converged={model.converged} iterations={model.iterations} "
              f"max|score|={model.grad_norm:.3g} log_lik={model.log_lik:.10g}\n")
    names = ["const"] + list(columns)
    out.write(f"{'group':<12}{'term':<12}{'estimate':>14}{'se':>12}\n")
    for j, lab in enumerate(model.labels[:-1]):
        ests = [model.params.alpha[j], *model.params.beta[j]]
        ses = [se.alpha[j], *se.beta[j]]
        for name, est, s in zip(names, ests, ses):
            out.write(f"{lab:<12}{name:<12}{est:>14.6g}{s:>12.4g}\n")
        w = inference["wald_per_group"][lab]
        out.write(f"{lab:<12}{'wald':<12}{w.statistic:>14.6g}{'p=' + format(w.pvalue, '.4g'):>12}\n")
    wj = inference["wald_joint"]
    out.write(f"joint Wald: statistic={wj.statistic:.6g} dof={wj.dof} p={wj.pvalue:.4g}\n")
    res = model.constraint_residuals()
    out.write("constraint residuals: " + " ".join(f"{r:.2e}" for r in res) + "\n")
    if not model.converged:
        raise CliError("E_NOCONV", f"fit did not converge (max|score|={model.grad_norm:.3g}); "
                       f"best iterate written to {args.out}", EXIT_NUMERIC)
    return EXIT_OK


def cmd_predict(args) -> int:
    model, raw = load_model(args.model)
    j = model.group_index(args.group)
    names, X, _ = read_table(args.queries, ())
    k = model.dimension - 1
    columns = raw.get("columns")
    if columns and all(c in names for c in columns[:k]):
        X = X[:, [names.index(c) for c in columns[:k]]]
        names = list(columns[:k])
    elif X.shape[1] != k:
        raise DataFormatError(f"queries need {k} covariate column(s), found {X.shape[1]}", 1)
    else:
        names = names[:k]
    own = model.group_points(j)
    if args.method == "drm":
        pred = predict_many(model, X, j, args.bandwidth, args.kernel,
                            args.candidate_set, errors="nan")
    elif args.method == "nw":
        pred = np.array([_nw_or_nan(own, x, args.bandwidth * model.scale[:-1], args.kernel)
                         for x in X])
    else:
        pred = ols_fit(own).predict(X)
    flagged = int(np.count_nonzero(np.isnan(pred)))
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names + ["group", "method", "prediction"])
        for x, p in zip(X, pred):
            writer.writerow([_fmt(v) for v in x] + [model.labels[j], args.method,
                                                     "NA" if np.isnan(p) else _fmt(p)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    if flagged:
        sys.stderr.write(f"drmreg: warning[W_NO_SUPPORT]: {flagged} query row(s) have no "
                         "effective support and were written as NA\n")
        return EXIT_PARTIAL
    return EXIT_OK


def _nw_or_nan(sample, x, h, kernel):
    try:
        return nadaraya_watson(sample, x, h, kernel)
    except DRMError:
        return np.nan


def cmd_gof(args) -> int:
    model, _ = load_model(args.model)
    if args.data:
        data, _ = read_data(args.data, model.reference, args.group_column)
        points, _ = data.combined()
        if (tuple(data.ordered_labels) != tuple(model.labels)
                or points.shape != model.points.shape
                or not np.array_equal(points, model.points)):
            raise DataFormatError("data file does not match the data the model was fitted on")
    report = gof_report(model, h=args.bandwidth, kernel=args.kernel, alpha=args.alpha,
                        k=args.k, band=args.band, r2_3_n=args.r2_3_n,
                        candidate_set=args.candidate_set)
    doc = report.to_dict()
    doc["settings"]["variant"] = args.variant
    key = {"max": "r2_3", "median": "r2_3_median", "meansq": "r2_3_meansq"}[args.variant]
    for g in doc["groups"]:
        g["r2_3_selected"] = g[key]
    text = json.dumps(doc, indent=1)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if args.plot_data:
        with open(args.plot_data, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["group", "point_index", "empirical", "semiparametric"])
            for label, i, e, s in report.plot_rows():
                writer.writerow([label, i, _fmt(e), _fmt(s)])
    out = sys.stdout
    out.write(f"{'group':<12}{'n_i':>6}{'x':>6}{'R2_alpha_k':>12}{'R2_1':>9}{'R2_2':>9}"
              f"{'R2_3':>9}{'MSE drm':>11}{'MSE ols':>11}\n")
    for g in report.groups:
        mse = {m: v[0] for m, v in g.errors.items()}
        out.write(f"{g.label:<12}{g.n_i:>6}{g.x_count:>6}{g.r2_alpha_k:>12.4f}"
                  f"{_opt(g.r2_1):>9}{_opt(g.r2_2):>9}{doc_value(doc, g.label, key):>9.4f}"
                  f"{_opt(mse.get('drm')):>11}{_opt(mse.get('ols')):>11}\n")
    return EXIT_OK


def doc_value(doc, label, key):
    return next(g[key] for g in doc["groups"] if g["label"] == label)


def _opt(v):
    return "-" if v is None else f"{v:.4f}"


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.replications is not None:
        changes["replications"] = args.replications
    if changes:
        from dataclasses import replace
        scenario = replace(scenario, **changes)
    result = run_study(scenario, workers=args.workers)
    text = result.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if result.failures:
        sys.stderr.write(f"drmreg: warning[W_PARTIAL]: {result.failures} of "
                         f"{scenario.replications} replication(s) failed\n")
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drmreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the density ratio model to a data CSV")
    p.add_argument("data")
    p.add_argument("--reference", help="label of the reference group (default: last seen)")
    p.add_argument("--group-column", default="group")
    p.add_argument("--standardize", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict the response at query covariates")
    p.add_argument("model")
    p.add_argument("queries")
    p.add_argument("--group", required=True)
    p.add_argument("--bandwidth", type=float, default=DEFAULT_BANDWIDTH)
    p.add_argument("--method", choices=["drm", "nw", "ols"], default="drm")
    p.add_argument("--candidate-set", choices=["combined", "group"], default="combined")
    p.add_argument("--kernel", choices=["gaussian", "epanechnikov"], default="gaussian")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gof", help="goodness-of-fit report and plot data")
    p.add_argument("model")
    p.add_argument("data", nargs="?")
    p.add_argument("--group-column", default="group")
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--variant", choices=["max", "median", "meansq"], default="max")
    p.add_argument("--band", choices=["binomial", "dkw"], default="binomial")
    p.add_argument("--r2-3-n", dest="r2_3_n", choices=["combined", "group"], default="combined")
    p.add_argument("--bandwidth", type=float, default=DEFAULT_BANDWIDTH)
    p.add_argument("--candidate-set", choices=["combined", "group"], default="combined")
    p.add_argument("--kernel", choices=["gaussian", "epanechnikov"], default="gaussian")
    p.add_argument("--out")
    p.add_argument("--plot-data")
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("simulate", help="run a Monte Carlo study from a scenario file")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return parser


def _error(code, message, status):
    if isinstance(message, KeyError) and message.args:
        message = message.args[0]
    sys.stderr.write(f"drmreg: error[{code}]: {' '.join(str(message).split())}\n")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        return _error(exc.code, exc, exc.status)
    except (DataFormatError, DimensionError, DegenerateDataError, KeyError, IndexError) as exc:
        return _error("E_INPUT", exc, EXIT_INPUT)
    except (OSError, ValueError) as exc:
        return _error("E_INPUT", exc, EXIT_INPUT)
    except (ConvergenceError, DRMError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _error("E_NUMERIC", exc, EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
