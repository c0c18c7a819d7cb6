"""Command-line front end.

Exit codes: 0 success, 1 assertion failure, 2 usage or parse error, 3 resource cap.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import acceptance, bounds, distribution, io, moments, smoothness, statcore, stein
from .errors import NumericError, ResourceError, SteinChiError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["kind", "r"],
                 "properties": {"kind": {"const": "rank"}, "r": {"type": "integer", "minimum": 2}}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "probs"],
                 "properties": {"kind": {"const": "pearson"},
                                "probs": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                                          "minItems": 2}}},
            ]
        },
        "statistic": {
            "oneOf": [
                {"enum": ["friedman", "pearson"]},
                {"type": "object", "additionalProperties": False, "required": ["pd"],
                 "properties": {"pd": {"type": "number"}}},
            ]
        },
        "test_function": {"type": "string"},
        "n_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3},
        "mode": {"enum": ["exact", "mc"]},
        "reps": {"type": "integer", "minimum": 100},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "bound": {"type": "boolean"},
        "beta_window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "deltas": {"type": "array", "minItems": 3,
                   "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3}},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"dir": {"type": "string"}, "name": {"type": "string"}}},
    },
    "anyOf": [{"required": ["deltas"]}, {"required": ["model", "statistic", "test_function", "n_grid"]}],
}

DEFAULTS = {"mode": "exact", "reps": 100_000, "seed": 0, "workers": 1, "bound": True, "test_function": "sine:a=0.5"}


class UsageError(SteinChiError):
    pass


# --------------------------------------------------------------------------
# helpers


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _probs(args, r=None):
    if args.probs is None:
        if r is None:
            raise UsageError("--probs is required")
        return np.full(r, 1.0 / r)
    return statcore.check_probs(np.array(_floats(args.probs)))


def _model(args):
    if args.model == "rank":
        if args.r is None:
            raise UsageError("--r is required for the rank model")
        return moments.TrialModel.rank(args.r)
    return moments.TrialModel.pearson(_probs(args))


def _statistic(args):
    if args.model == "rank":
        return "friedman"
    return "pearson" if args.lam is None else float(args.lam)


def _out_dir(args):
    return Path(args.out) if getattr(args, "out", None) else None


def _emit_csv(args, name, header, rows, gnuplot=False):
    out = _out_dir(args)
    if out is None:
        print(",".join(header))
        for row in rows:
            print(",".join(io.fmt(v) for v in row))
        return
    io.write_csv(out / f"{name}.csv", header, rows)
    if gnuplot:
        io.write_gnuplot(out / f"{name}.dat", header, rows)


# --------------------------------------------------------------------------
# subcommands


def cmd_stat(args):
    if args.ranks:
        rm = io.read_ranks(args.ranks)
        print(f"friedman={statcore.friedman(rm)!r}")
        return EXIT_OK
    if args.counts is None and args.cells is None:
        raise UsageError("give --ranks, --counts or --cells")
    counts = io.read_counts(args.counts) if args.counts else np.array([int(v) for v in _floats(args.cells)])
    cc = statcore.CellCounts(counts, _probs(args, len(counts)))
    if args.lam is None:
        print(f"pearson={statcore.pearson(cc)!r}")
    else:
        print(f"pd={statcore.power_divergence(cc, float(args.lam))!r}")
    return EXIT_OK


def cmd_cov(args):
    model = _model(args)
    cov = model.covariance()
    if cov.exact is not None:
        rows = [[str(v) for v in row] for row in cov.exact]
    else:
        rows = [list(row) for row in cov.entries]
    _emit_csv(args, "covariance", [f"c{j + 1}" for j in range(cov.r)], rows)
    return EXIT_OK


def cmd_moments(args):
    r = args.r or 3
    table = moments.closed_form_moments(r)
    rows = []
    for m in (2, 4, 6, 8):
        exact = moments.rank_moment_exact(r, m)
        rows.append([f"E X^{m}", str(table[m]), str(exact), float(exact), table[m] == exact])
    n = args.n or 1
    w4 = moments.w4_moment_exact(r, n)
    rows.append([f"E W^4 (n={n})", str(w4), str(w4), float(w4), True])
    _emit_csv(args, "moments", ["quantity", "closed_form", "enumeration", "value", "match"], rows)
    return EXIT_OK if all(row[-1] for row in rows) else EXIT_FAIL


BOUND_KINDS = ("friedman", "halfrate", "halfrate_pd", "even_M", "zero_third", "relaxed_even")


def cmd_bound(args):
    tf = smoothness.parse_test_function(args.h)
    n = args.n or 100
    if args.which == "friedman":
        rep = bounds.friedman_bound(args.r or 3, n, tf)
    else:
        model = _model(args)
        if args.lam is not None:
            inputs = bounds.power_divergence_inputs(model.probs, n, tf, args.lam)
        else:
            order = "order3" if args.which in ("halfrate", "halfrate_pd", "zero_third") else "order6"
            inputs = bounds.BoundInputs(model, n, smoothness.dominating_quadratic_g(order, model.d), tf)
        fn = {
            "halfrate": bounds.bound_general_halfrate,
            "halfrate_pd": bounds.bound_general_halfrate_pd,
            "even_M": bounds.bound_even_M,
            "zero_third": lambda i: bounds.bound_zero_third_moment(i, crude=args.crude),
            "relaxed_even": bounds.bound_relaxed_even,
        }[args.which]
        rep = fn(inputs)
    print(rep.to_text())
    out = _out_dir(args)
    if out is not None:
        io.write_csv(out / "bound.csv", rep.csv_header(), [rep.csv_row()])
    return EXIT_OK


def cmd_dist(args):
    model = _model(args)
    n = args.n or 8
    law = distribution.exact_law(model, _statistic(args), n)
    _emit_csv(args, "distribution", ["value", "probability"], law.rows())
    return EXIT_OK


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise UsageError(f"config {path}: {exc.message}") from None
    return {**DEFAULTS, **cfg}


def _config_model(cfg):
    m = cfg["model"]
    return moments.TrialModel.rank(m["r"]) if m["kind"] == "rank" else moments.TrialModel.pearson(m["probs"])


def _config_statistic(cfg):
    s = cfg["statistic"]
    return float(s["pd"]) if isinstance(s, dict) else s


def _rate_bound(model, statistic, tf, n):
    try:
        if model.kind == "rank":
            return bounds.friedman_bound(model.r, n, tf).value
        if statistic == "pearson" or statistic == 1.0:
            return bounds.bound_even_M(bounds.pearson_inputs(model.probs, n, tf)).value
        return bounds.bound_relaxed_even(bounds.power_divergence_inputs(model.probs, n, tf, statistic)).value
    except bounds.PreconditionError:
        return math.nan


def rate_rows(cfg):
    """``(n, delta, stderr, bound)`` rows for an experiment config, in grid order."""
    if "deltas" in cfg:
        return [(int(d[0]), float(d[1]), float(d[2]) if len(d) > 2 else 0.0, math.nan) for d in cfg["deltas"]]
    model = _config_model(cfg)
    statistic = _config_statistic(cfg)
    tf = smoothness.parse_test_function(cfg["test_function"])
    grid = list(cfg["n_grid"])
    if cfg["mode"] == "exact":
        if model.kind == "rank":
            est = {d.n: d for d in distribution.exact_distances(model, statistic, tf, grid)}
            ests = [est[n] for n in grid]
        else:
            with ThreadPoolExecutor(cfg["workers"]) as ex:
                ests = list(ex.map(lambda n: distribution.smooth_distance(model, statistic, tf, n), grid))
    else:
        def job(n):
            return distribution.smooth_distance(model, statistic, tf, n, "mc", cfg["reps"], [cfg["seed"], n])

        with ThreadPoolExecutor(cfg["workers"]) as ex:
            ests = list(ex.map(job, grid))
    rows = []
    for e in ests:
        bound = _rate_bound(model, statistic, tf, e.n) if cfg["bound"] else math.nan
        rows.append((e.n, e.delta, e.stderr, bound))
    return rows


def cmd_rate(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = dict(DEFAULTS)
        cfg["model"] = {"kind": "rank", "r": args.r or 3} if args.model == "rank" else {
            "kind": "pearson", "probs": list(_probs(args))}
        cfg["statistic"] = "friedman" if args.model == "rank" else (
            "pearson" if args.lam is None else {"pd": float(args.lam)})
        cfg["test_function"] = args.h
        cfg["n_grid"] = [int(v) for v in _floats(args.grid)]
    if args.mode:
        cfg["mode"] = args.mode
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.reps is not None:
        cfg["reps"] = args.reps
    rows = rate_rows(cfg)
    fit = distribution.fit_rate([(n, d, s) for n, d, s, _ in rows])
    out = _out_dir(args) or (Path(cfg["output"]["dir"]) if "output" in cfg and "dir" in cfg["output"] else None)
    name = cfg.get("output", {}).get("name", "rate")
    header = ["n", "delta", "stderr", "bound"]
    if out is None:
        _emit_csv(args, name, header, rows)
    else:
        io.write_csv(out / f"{name}.csv", header, rows)
        io.write_gnuplot(out / f"{name}.dat", header, rows)
    print(f"beta={fit.beta:.3f} ci=[{fit.ci95[0]:.3f},{fit.ci95[1]:.3f}]")
    window = cfg.get("beta_window")
    if window is not None and not (window[0] <= fit.beta <= window[1]):
        print(f"beta {fit.beta:.4f} outside window [{window[0]}, {window[1]}]", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_stein_check(args):
    tf = smoothness.parse_test_function(args.h)
    if args.model == "pearson" and args.probs is not None:
        p = _probs(args)
        cov = moments.pearson_covariance(p)
        direction = np.zeros(p.size)
        direction[0], direction[1] = math.sqrt(p[1]), -math.sqrt(p[0])
        direction /= np.linalg.norm(direction)
    else:
        cov = moments.CovarianceMatrix(np.array([[1.0]]))
        direction = np.ones(1)
    sp = stein.quadratic_problem(tf, cov)
    pts = [a * direction for a in _floats(args.points)]
    P = smoothness.dominating_quadratic_g("order3", max(2, sp.d))
    P = smoothness.DominatingFunction(P.A, P.B[: sp.d], P.r[: sp.d])
    rows = []
    ok = True
    for w in pts:
        res = stein.stein_residual(sp, w)
        ok &= abs(res) <= 1e-3
        rows.append((tuple(w.tolist()), "residual", res, 1e-3, 1e-3 - abs(res)))
    for m in (1, 2, 3):
        rep = stein.check_derivative_bounds(sp, P, m, pts)
        ok &= rep.passed
        rows.extend(rep.csv_rows())
    _emit_csv(args, "stein_check", ["point", "quantity", "value", "bound", "margin"], rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args):
    results = acceptance.run(acceptance.SUITES[args.suite])
    for r in results:
        print(r.line)
    out = _out_dir(args)
    if out is not None:
        io.write_csv(out / "verify.csv", ["criterion", "title", "passed", "seconds", "detail"],
                     [(r.number, r.title, r.passed, r.seconds, r.detail) for r in results])
    failed = [r for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(f"{r.number} ({r.title})" for r in failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory for CSV files")
    common.add_argument("--mode", choices=["exact", "mc"])
    common.add_argument("--reps", type=int)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", choices=["rank", "pearson"], default="rank")
    model.add_argument("--r", type=int)
    model.add_argument("--probs", help="comma-separated cell probabilities")
    model.add_argument("--lam", type=float, help="power divergence index")
    model.add_argument("--n", type=int)

    parser = argparse.ArgumentParser(prog="steinchi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stat", parents=[common], help="statistic of observed data")
    p.add_argument("--ranks", help="CSV of rank rows")
    p.add_argument("--counts", help="CSV of per-trial counts")
    p.add_argument("--cells", help="inline comma-separated cell counts")
    p.add_argument("--probs")
    p.add_argument("--lam", type=float)
    p.set_defaults(func=cmd_stat)

    p = sub.add_parser("cov", parents=[common, model], help="limiting covariance matrix")
    p.set_defaults(func=cmd_cov)

    p = sub.add_parser("moments", parents=[common, model], help="rank-variable moments")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("bound", parents=[common, model], help="evaluate a distance bound")
    p.add_argument("--which", choices=BOUND_KINDS, default="friedman")
    p.add_argument("--h", default="sine:a=1", help="test function, e.g. sine:a=0.5")
    p.add_argument("--crude", action="store_true")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("dist", parents=[common, model], help="exact null distribution")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("rate", parents=[common, model], help="distance over an n-grid and fitted rate")
    p.add_argument("--h", default="sine:a=0.5")
    p.add_argument("--grid", default="8,16,32,64,128")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("stein-check", parents=[common, model], help="Stein residual and derivative bounds")
    p.add_argument("--h", default="sine:a=0.5")
    p.add_argument("--points", default="-2,-1,0,1,2")
    p.set_defaults(func=cmd_stein_check)

    p = sub.add_parser("verify", parents=[common], help="run acceptance criteria")
    p.add_argument("suite", nargs="?", default="all", choices=sorted(acceptance.SUITES))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (SteinChiError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
