"""Command-line front end: ``fdakit <subcommand> --in data.csv [flags]``.

Every analysis writes one JSON document (stdout or ``--out``) holding the
results and a run manifest. Exit codes: 0 success, 2 input error,
3 numerical degeneracy, 64 unknown subcommand.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .align import SLOPE_CAP, align_to_mean
from .basis import make_bspline_basis, smooth_sample
from .cluster import DEFAULT_RESTARTS, distance_matrix, hclust_complete, kmeans_scores, score_embedding
from .depth import FENCE_FACTOR, functional_boxplot
from .exceptions import InputError, NumericalError
from .fanova import DEFAULT_PROJECTIONS, DEFAULT_RESAMPLES, METHODS, GroupedSample, run_test, test_random_projections
from .fdcore import FunctionalSample, Grid
from .fpca import fit_fpca, fit_fpca_sparse
from .funreg import (DEFAULT_K, SofrDesign, fit_fofr_concurrent, fit_fofr_linear, fit_fosr, fit_sofr_linear,
                     fit_sofr_logit, pointwise_ci, window_weights)
from .io import FORMATS, align_table, file_digest, ingest, numeric_column, read_table, read_wide, sort_ids
from .npfda import (DEFAULT_SCORES_M, KERNELS, SEMIMETRICS, KernelSpec, Semimetric, loo_cv_bandwidth, np_classify,
                    np_regress, outer_loo)
from .svg import PLOT_KINDS, render_svg

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_USAGE = 0, 2, 3, 64
ANALYSES = ("smooth", "fboxplot", "align", "fpca", "sofr", "fosr", "fofr", "fanova", "npreg", "npclass", "cluster")
SUBCOMMANDS = ANALYSES + ("predict", "render")
MULTIPLICITY_WARNING = (
    "running all five FANOVA tests and rejecting when any of them rejects inflates the type I "
    "error well above the nominal level"
)
# flags that do not change the numerical output and so stay out of the manifest
_UNRECORDED = {"out", "svg", "threads", "record_time", "handler"}


# -- helpers -----------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _floats(text, what):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"{what} must be a comma-separated list of numbers") from None
    if not vals:
        raise InputError(f"{what} is empty")
    return np.array(vals)


def _threads(args):
    if args.threads is not None:
        n = args.threads
    elif os.environ.get("FDAKIT_THREADS"):
        try:
            n = int(os.environ["FDAKIT_THREADS"])
        except ValueError:
            raise InputError("FDAKIT_THREADS must be an integer") from None
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise InputError("thread count must be at least 1")
    return n


def _seed(args):
    if args.seed is None:
        print("notice: no --seed given, using seed 0", file=sys.stderr)
        args.seed = 0
    return args.seed


def _load(args):
    domain = None
    if getattr(args, "domain", None):
        d = _floats(args.domain, "--domain")
        if d.size != 2:
            raise InputError("--domain needs two numbers a,b")
        domain = (float(d[0]), float(d[1]))
    return ingest(args.input, args.format, domain)


def _dense(data, what):
    if not isinstance(data, FunctionalSample):
        raise InputError(f"{what} needs dense (wide) input")
    return data


def _curves(sample):
    return {"ids": list(sample.curve_ids), "values": sample.values}


def _basis(args, domain):
    return make_bspline_basis(domain, args.basis_k, args.basis_order)


def _lambda_grid(args):
    return None if args.lambda_grid is None else _floats(args.lambda_grid, "--lambda-grid")


def _column(path, ids):
    _, table = read_table(path)
    return numeric_column(align_table(table, ids, path), path)


def _write_svg(args, result, kind):
    if getattr(args, "svg", None):
        Path(args.svg).write_text(render_svg(result, kind), encoding="utf-8")


def _presmooth(args, sample):
    """GCV P-spline smooth of every covariate curve, evaluated back on its grid."""
    if not getattr(args, "presmooth", False):
        return sample
    basis = make_bspline_basis(sample.grid.domain, args.basis_k, args.basis_order)
    fits = smooth_sample(sample, basis, None, None, args.penalty_order)
    return sample.with_values(np.array([f(sample.grid.points) for f in fits]))


def _ci(fit, j, level):
    lo, hi = pointwise_ci(fit, j, level)
    return {"lower": lo, "upper": hi, "level": level}


# -- subcommands ---------------------------------------------------------------


def cmd_smooth(args):
    data = _load(args)
    if isinstance(data, FunctionalSample):
        domain = data.grid.domain
        grid = data.grid
    else:
        domain = data.domain
        grid = Grid.linspace(*domain, args.eval_points)
    basis = _basis(args, domain)
    fits = smooth_sample(data, basis, args.lam, _lambda_grid(args), args.penalty_order)
    values = np.array([f(grid.points) for f in fits])
    result = {
        "grid": grid.points,
        "curves": {"ids": list(data.curve_ids), "values": values},
        "fits": [
            {"id": cid, "lambda": f.lam, "gcv": f.gcv, "edf": f.edf, "coef": f.coef}
            for cid, f in zip(data.curve_ids, fits)
        ],
        "basis": {"n_basis": basis.n_basis, "order": basis.order, "knots": basis.knots},
    }
    return result, "curves"


def cmd_fboxplot(args):
    sample = _dense(_load(args), "fboxplot")
    box = functional_boxplot(sample, args.factor)
    ids = sample.curve_ids
    return {
        "grid": sample.grid.points,
        "curves": _curves(sample),
        "depth": box.depth.depths,
        "ordering": [ids[i] for i in box.depth.ordering],
        "median_id": ids[box.median],
        "median_index": box.median,
        "central_ids": [ids[i] for i in box.central],
        "outliers": box.outliers,
        "outlier_ids": [ids[i] for i in np.flatnonzero(box.outliers)],
        "envelope": {"lower": box.lower, "upper": box.upper,
                     "lower_fence": box.lower_fence, "upper_fence": box.upper_fence},
    }, "boxplot"


def cmd_align(args):
    sample = _dense(_load(args), "align")
    res = align_to_mean(sample, args.max_iter, args.tol, args.slope_cap, threads=_threads(args))
    return {
        "grid": sample.grid.points,
        "curves": _curves(sample),
        "aligned": res.aligned.values,
        "warps": np.array([w.gamma for w in res.warps]),
        "mean": res.mean,
        "costs": res.costs,
        "warp_costs": {"ids": list(sample.curve_ids), "values": res.warp_costs},
        "converged": res.converged,
        "n_iter": res.n_iter,
    }, "warps"


def cmd_fpca(args):
    data = _load(args)
    n_comp = args.components
    if isinstance(data, FunctionalSample):
        model = fit_fpca(data, args.pve, n_comp, smooth_mean=args.smooth_mean, basis_k=args.surface_k)
    else:
        grid = Grid.linspace(*data.domain, args.grid_points)
        model = fit_fpca_sparse(data, grid, args.pve, n_comp, basis_k=args.surface_k)
    total = np.sum(model.all_eigenvalues)
    pve = model.all_eigenvalues / total
    return {
        "grid": model.grid.points,
        "mean": model.mean,
        "n_components": model.n_components,
        "eigenvalues": model.eigenvalues,
        "eigenfunctions": model.eigenfunctions,
        "pve": pve,
        "cumulative_pve": np.cumsum(pve),
        "noise_variance": model.noise_variance,
        "curve_ids": list(data.curve_ids),
        "scores": model.scores,
    }, "eigenfunctions"


def _scalar_covariates(path, ids):
    names, table = read_table(path)
    rows = align_table(table, ids, path)
    Z = np.column_stack([numeric_column(rows, path, c) for c in range(len(names))])
    return names, Z


def cmd_sofr(args):
    X = _presmooth(args, _dense(_load(args), "sofr"))
    y = _column(args.response, X.curve_ids)
    names, Z = ([], None) if args.covariates is None else _scalar_covariates(args.covariates, X.curve_ids)
    basis = _basis(args, X.grid.domain)
    design = SofrDesign(y, [X], Z, [basis], args.penalty_order)
    if args.family == "gaussian":
        fit = fit_sofr_linear(design, args.lam, _lambda_grid(args))
    else:
        fit = fit_sofr_logit(design, args.lam, _lambda_grid(args))
    out = {
        "family": fit.family,
        "intercept": fit.intercept,
        "gamma": dict(zip(names, fit.gamma)),
        "grid": X.grid.points,
        "beta": fit.betas[0],
        "ci": _ci(fit, 0, args.level),
        "lambda": fit.lams,
        "edf": fit.edf,
        "sigma2": fit.sigma2,
        "fitted": {"ids": list(X.curve_ids), "values": fit.fitted},
    }
    if fit.family == "binomial":
        out.update(converged=fit.converged, n_iter=fit.n_iter)
    out["gamma_names"] = names
    return out, None


def cmd_fosr(args):
    Y = _dense(_load(args), "fosr")
    names, Z = _scalar_covariates(args.covariates, Y.curve_ids)
    fit = fit_fosr(Y, Z, _basis(args, Y.grid.domain), args.lam, _lambda_grid(args), args.penalty_order)
    return {
        "grid": Y.grid.points,
        "alpha": fit.alpha,
        "alpha_ci": _ci(fit, 0, args.level),
        "covariate_names": names,
        "betas": {name: fit.betas[j] for j, name in enumerate(names)},
        "beta_ci": {name: _ci(fit, j + 1, args.level) for j, name in enumerate(names)},
        "lambda": fit.lams,
        "edf": fit.edf,
        "residual_variance": fit.residual_variance,
    }, None


def cmd_fofr(args):
    Y = _dense(_load(args), "fofr")
    X = _presmooth(args, read_wide(args.covariate))
    if X.curve_ids != Y.curve_ids:
        raise InputError("covariate and response files must hold the same curve ids")
    if args.model == "concurrent":
        fit = fit_fofr_concurrent(Y, [X], _basis(args, Y.grid.domain), args.lam, _lambda_grid(args),
                                  args.penalty_order)
        out = {"beta": fit.betas[0], "beta_ci": _ci(fit, 1, args.level)}
    else:
        lam_s = lam_t = None
        if args.lam is not None:
            lam_s = lam_t = args.lam
        fit = fit_fofr_linear(Y, [X], lam_s=lam_s, lam_t=lam_t, limits=args.limits, lag=args.lag,
                              lambda_grid=_lambda_grid(args), penalty_order=args.penalty_order,
                              k_s=args.basis_k_s, k_t=args.basis_k_t, lam_alpha=args.lam)
        out = {"s_grid": X.grid.points, "surface": fit.surfaces[0], "limits": fit.limits, "lag": fit.lag}
    return {"model": args.model, "grid": Y.grid.points, "alpha": fit.alpha, **out,
            "lambda": fit.lams, "edf": fit.edf}, None


def cmd_fanova(args):
    sample = _dense(_load(args), "fanova")
    names, table = read_table(args.groups)
    labels = [r[0] for r in align_table(table, sample.curve_ids, args.groups)]
    grouped = GroupedSample.from_labels(sample, np.array(labels))
    seed = _seed(args)
    threads = _threads(args)
    if args.method == "all":
        if not args.multiplicity_warning:
            raise InputError(f"--method all: {MULTIPLICITY_WARNING}; pass --multiplicity-warning to proceed")
        methods = METHODS
    else:
        methods = (args.method,)
    tests = []
    for m in methods:
        if m == "projections":
            r = test_random_projections(grouped, args.projections, seed, threads, args.adjust)
        else:
            r = run_test(m, grouped, args.resamples, seed, threads)
        tests.append({"method": r.method, "statistic": r.statistic, "p_value": r.p_value,
                      "resamples": r.resamples, **r.details})
    out = {
        "groups": {"levels": [str(v) for v in grouped.levels], "sizes": grouped.sizes},
        "tests": tests,
    }
    if args.method == "all":
        out["multiplicity_warning"] = MULTIPLICITY_WARNING
    return out, None


def _np_common(args, train):
    if args.semimetric == "fpca_scores":
        sm = Semimetric.fpca_scores(train, args.scores_m)
    else:
        sm = Semimetric(args.semimetric, train.grid)
    return sm


def _diagnostics(W, train_ids, query_ids, top=5):
    out = []
    for qid, w in zip(query_ids, W):
        order = np.lexsort((np.arange(w.size), -w))[:top]
        out.append({
            "id": qid,
            "effective_neighbors": 1.0 / float(np.sum(w**2)),
            "top": [{"id": train_ids[i], "weight": w[i]} for i in order],
        })
    return out


def _np_run(args, task):
    train = _dense(_load(args), f"np{'reg' if task == 'regression' else 'class'}")
    if task == "regression":
        response = _column(args.response, train.curve_ids)
    else:
        _, table = read_table(args.labels)
        response = np.array([r[0] for r in align_table(table, train.curve_ids, args.labels)])
    sm = _np_common(args, train)
    h_grid = None if args.h_grid is None else _floats(args.h_grid, "--h-grid")
    out = {"semimetric": args.semimetric, "kernel": args.kernel}
    if args.bandwidth is not None:
        h = args.bandwidth
    else:
        sel = loo_cv_bandwidth(train, response, args.kernel, sm, h_grid, task)
        h = sel.bandwidth
        out["cv"] = {"h_grid": sel.h_grid, "scores": sel.scores}
    out["bandwidth"] = h
    new = read_wide(args.new) if args.new else train
    if new.grid != train.grid:
        raise InputError("new curves must share the training grid")
    kernel = KernelSpec(args.kernel, h)
    if task == "regression":
        pred = np_regress(train, response, new, kernel, sm)
        out["predictions"] = {"ids": list(new.curve_ids), "values": pred.values}
    else:
        pred = np_classify(train, response, new, kernel, sm)
        out["classes"] = [str(c) for c in pred.classes]
        out["predictions"] = {"ids": list(new.curve_ids), "labels": [str(c) for c in pred.predicted],
                              "probabilities": pred.probabilities}
    out["diagnostics"] = _diagnostics(pred.weights, train.curve_ids, new.curve_ids)
    if args.outer_loo:
        o = outer_loo(train, response, args.kernel, args.semimetric, args.scores_m, h_grid, task)
        preds = o.predictions if task == "regression" else [str(c) for c in o.predictions]
        out["outer_loo"] = {"ids": list(train.curve_ids), "predictions": preds,
                            "bandwidths": o.bandwidths, "error": o.error}
    return out, None


def cmd_npreg(args):
    return _np_run(args, "regression")


def cmd_npclass(args):
    return _np_run(args, "classification")


def cmd_cluster(args):
    sample = _dense(_load(args), "cluster")
    ids = list(sample.curve_ids)
    if args.method == "hclust":
        dist = distance_matrix(sample, args.distance, args.scores_m)
        res = hclust_complete(dist, args.k)
        out = {"merges": [{"left": l, "right": r, "height": h} for l, r, h in res.merges],
               "distance": args.distance}
    else:
        res = kmeans_scores(sample, args.scores_m, args.k, args.restarts, _seed(args), _threads(args))
        out = {"centroids": res.centroids, "wcss": res.wcss, "history": res.history,
               "run_wcss": res.run_wcss}
    scores, _ = score_embedding(sample, max(args.scores_m, 2)) if sample.n > 2 else (None, None)
    return {"method": args.method, "k": args.k, "curve_ids": ids, "labels": res.labels, **out,
            "scores": scores}, "scores"


def _load_model(path):
    try:
        model = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"model file {path!r} does not exist") from None
    except json.JSONDecodeError as err:
        raise InputError(f"model file is not valid JSON: {err}") from None
    kind = model.get("manifest", {}).get("subcommand")
    if kind not in ("sofr", "fosr", "fofr"):
        raise InputError("predict needs a result saved by sofr, fosr or fofr")
    return kind, model


def _on_grid(values, grid_from, grid_to: Grid):
    src = np.asarray(grid_from, dtype=float)
    if src.shape == grid_to.points.shape and np.array_equal(src, grid_to.points):
        return np.asarray(values, dtype=float)
    if grid_to.points[0] < src[0] or grid_to.points[-1] > src[-1]:
        raise InputError("new curves extend beyond the fitted domain")
    return np.interp(grid_to.points, src, np.asarray(values, dtype=float))


def cmd_predict(args):
    kind, model = _load_model(args.model_file)
    if kind == "fosr":
        if args.covariates is None:
            raise InputError("fosr prediction needs --covariates")
        names, table = read_table(args.covariates)
        if names != model["covariate_names"]:
            raise InputError(f"covariate columns {names} differ from the model's {model['covariate_names']}")
        ids = sort_ids(table)
        Z = np.column_stack([numeric_column(align_table(table, ids, args.covariates), args.covariates, c)
                             for c in range(len(names))])
        B = np.array([model["betas"][k] for k in names])
        Yhat = np.asarray(model["alpha"]) + Z @ B
        return {"grid": model["grid"], "predictions": {"ids": ids, "values": Yhat}}, None
    if args.input is None:
        raise InputError(f"{kind} prediction needs --in with the new functional covariate")
    X = _dense(_load(args), "predict")
    if kind == "sofr":
        eta = model["intercept"] + (X.values * X.grid.weights) @ _on_grid(model["beta"], model["grid"], X.grid)
        names = model.get("gamma_names", [])
        if names:
            if args.covariates is None:
                raise InputError("this model has scalar covariates; pass --covariates")
            _, table = read_table(args.covariates)
            rows = align_table(table, X.curve_ids, args.covariates)
            Z = np.column_stack([numeric_column(rows, args.covariates, c) for c in range(len(names))])
            eta = eta + Z @ np.array([model["gamma"][k] for k in names])
        values = 1 / (1 + np.exp(-eta)) if model["family"] == "binomial" else eta
        return {"family": model["family"], "predictions": {"ids": list(X.curve_ids), "values": values}}, None
    t_grid = Grid(model["grid"])
    alpha = np.asarray(model["alpha"], dtype=float)
    if model["model"] == "concurrent":
        if X.grid != t_grid:
            raise InputError("concurrent prediction needs covariates on the model grid")
        Yhat = alpha + X.values * np.asarray(model["beta"])
    else:
        s_grid = Grid(model["s_grid"])
        if X.grid != s_grid:
            raise InputError("new covariate curves must be on the model's s grid")
        W = window_weights(s_grid, t_grid, model["limits"], model["lag"])
        Yhat = alpha + X.values @ (W * np.asarray(model["surface"]))
    return {"grid": t_grid.points, "predictions": {"ids": list(X.curve_ids), "values": Yhat}}, None


def cmd_render(args):
    try:
        result = json.loads(Path(args.result).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"result file {args.result!r} does not exist") from None
    except json.JSONDecodeError as err:
        raise InputError(f"result file is not valid JSON: {err}") from None
    Path(args.out).write_text(render_svg(result, args.kind), encoding="utf-8")
    return None, None


# -- parser --------------------------------------------------------------------


def _common(p, svg=False):
    p.add_argument("--in", dest="input", required=True, help="input CSV")
    p.add_argument("--format", choices=FORMATS, default="wide")
    p.add_argument("--domain", help="a,b domain for long-format input (default: range of t)")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0, with a notice)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: FDAKIT_THREADS or all cores)")
    p.add_argument("--record-time", action="store_true", help="add wall time to the manifest")
    if svg:
        p.add_argument("--svg", help="also render a plot to this SVG file")


def _basis_flags(p, k=10):
    p.add_argument("--basis-k", type=int, default=k)
    p.add_argument("--basis-order", type=int, default=4)
    p.add_argument("--penalty-order", type=int, default=2)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed smoothing parameter (default: GCV)")
    p.add_argument("--lambda-grid", default=None, help="comma-separated GCV candidates")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdakit", description="Functional data analysis toolkit.")
    parser.add_argument("--version", action="version", version=f"fdakit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")

    p = sub.add_parser("smooth", help="penalized B-spline smoothing of each curve")
    _common(p, svg=True)
    _basis_flags(p)
    p.add_argument("--eval-points", type=int, default=101, help="evaluation grid size for long input")
    p.set_defaults(handler=cmd_smooth)

    p = sub.add_parser("fboxplot", help="modified band depth and functional boxplot")
    _common(p, svg=True)
    p.add_argument("--factor", type=float, default=FENCE_FACTOR)
    p.set_defaults(handler=cmd_fboxplot)

    p = sub.add_parser("align", help="elastic alignment to the SRVF mean")
    _common(p, svg=True)
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--slope-cap", type=int, default=SLOPE_CAP)
    p.set_defaults(handler=cmd_align)

    p = sub.add_parser("fpca", help="functional principal components")
    _common(p, svg=True)
    p.add_argument("--pve", type=float, default=0.99)
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--smooth-mean", action="store_true")
    p.add_argument("--surface-k", type=int, default=10)
    p.add_argument("--grid-points", type=int, default=51, help="output grid size for long input")
    p.set_defaults(handler=cmd_fpca)

    p = sub.add_parser("sofr", help="scalar-on-function regression")
    _common(p)
    _basis_flags(p, DEFAULT_K)
    p.add_argument("--response", required=True, help="CSV with id and response columns")
    p.add_argument("--covariates", help="CSV with id and scalar covariate columns")
    p.add_argument("--family", choices=("gaussian", "binomial"), default="gaussian")
    p.add_argument("--presmooth", action="store_true", help="P-spline smooth the covariate curves first")
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(handler=cmd_sofr)

    p = sub.add_parser("fosr", help="function-on-scalar regression")
    _common(p)
    _basis_flags(p, DEFAULT_K)
    p.add_argument("--covariates", required=True, help="CSV with id and scalar covariate columns")
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(handler=cmd_fosr)

    p = sub.add_parser("fofr", help="function-on-function regression")
    _common(p)
    _basis_flags(p, DEFAULT_K)
    p.add_argument("--covariate", required=True, help="wide CSV with the functional covariate")
    p.add_argument("--model", choices=("concurrent", "linear"), default="concurrent")
    p.add_argument("--presmooth", action="store_true", help="P-spline smooth the covariate curves first")
    p.add_argument("--limits", choices=("full", "past", "lag"), default="full")
    p.add_argument("--lag", type=float, default=None)
    p.add_argument("--basis-k-s", type=int, default=8)
    p.add_argument("--basis-k-t", type=int, default=8)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(handler=cmd_fofr)

    p = sub.add_parser("fanova", help="one-way functional ANOVA")
    _common(p)
    p.add_argument("--groups", required=True, help="CSV with id and group columns")
    p.add_argument("--method", choices=METHODS + ("all",), default="globalF")
    p.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    p.add_argument("--projections", type=int, default=DEFAULT_PROJECTIONS)
    p.add_argument("--adjust", choices=("by", "bh"), default="by")
    p.add_argument("--multiplicity-warning", action="store_true",
                   help="acknowledge the multiplicity problem of --method all")
    p.set_defaults(handler=cmd_fanova)

    for name, target in (("npreg", "--response"), ("npclass", "--labels")):
        p = sub.add_parser(name, help=f"kernel {'regression' if name == 'npreg' else 'classification'}")
        _common(p)
        p.add_argument(target, required=True, help="CSV with id and response/label columns")
        p.add_argument("--new", help="wide CSV of curves to predict (default: the training curves)")
        p.add_argument("--semimetric", choices=SEMIMETRICS, default="fpca_scores")
        p.add_argument("--scores-m", type=int, default=DEFAULT_SCORES_M)
        p.add_argument("--kernel", choices=KERNELS, default="gaussian")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--bandwidth", type=float, default=None)
        g.add_argument("--cv", action="store_true", help="leave-one-out bandwidth (the default)")
        p.add_argument("--h-grid", default=None, help="comma-separated bandwidth candidates")
        p.add_argument("--outer-loo", action="store_true", help="also report an outer leave-one-out error")
        p.set_defaults(handler=cmd_npreg if name == "npreg" else cmd_npclass)

    p = sub.add_parser("cluster", help="hierarchical or k-means clustering")
    _common(p, svg=True)
    p.add_argument("--method", choices=("hclust", "kmeans"), default="hclust")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--distance", choices=("raw_l2", "fpca_scores"), default="raw_l2")
    p.add_argument("--scores-m", type=int, default=2)
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("predict", help="predict from a saved sofr/fosr/fofr result")
    p.add_argument("--model", dest="model_file", required=True, help="result JSON written by sofr, fosr or fofr")
    p.add_argument("--in", dest="input", help="wide CSV of new functional covariates (sofr, fofr)")
    p.add_argument("--format", choices=("wide",), default="wide")
    p.add_argument("--covariates", help="CSV with id and scalar covariates (fosr, or sofr with Z)")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--record-time", action="store_true")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("render", help="draw an SVG from a result JSON")
    p.add_argument("--result", required=True)
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_render)
    return parser


def _manifest(args, start):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _UNRECORDED}
    manifest = {
        "subcommand": args.subcommand,
        "version": __version__,
        "config": config,
        "inputs": {},
        "seed": args.seed,
    }
    for key in ("input", "response", "covariates", "covariate", "groups", "labels", "new", "model_file"):
        path = getattr(args, key, None)
        if path:
            manifest["inputs"][path] = file_digest(path)
    if args.record_time:
        manifest["wall_time_s"] = time.perf_counter() - start
    return manifest


def run(argv) -> int:
    argv = list(argv)
    parser = build_parser()
    if not argv or (argv[0] not in SUBCOMMANDS and not argv[0].startswith("-")):
        if argv:
            print(f"fdakit: unknown subcommand {argv[0]!r}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    start = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result, plot = args.handler(args)
        if result is None:
            return EXIT_OK
        notes = sorted({str(w.message) for w in caught})
        for msg in notes:
            print(f"warning: {msg}", file=sys.stderr)
        doc = {"manifest": _manifest(args, start), **result}
        if notes:
            doc["warnings"] = notes
        doc = _jsonable(doc)
        _write_svg(args, doc, plot)
        text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    except InputError as err:
        print(f"fdakit {args.subcommand}: input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as err:
        print(f"fdakit {args.subcommand}: numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"fdakit {args.subcommand}: {err}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
