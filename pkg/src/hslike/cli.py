"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 numerical failure.  Diagnostics
go to stderr; machine-readable outputs go to ``--output-dir`` only.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .em import EmConfig, em_normal_means, em_regression
from .errors import DomainError, NumericalError
from .harness import METHODS, HarnessConfig, preset, run_comparison
from .lla import LlaConfig, one_step_hslike
from .mcmc import McmcConfig, run_chain, run_chain_regression
from .prior import (PenaltySpec, horseshoe_density_quadrature, hs_bounds, hslike_density,
                    hslike_penalty, hslike_penalty_deriv)
from .problems import NormalMeansProblem, RegressionProblem

__all__ = ["IngestError", "ingest_csv", "write_problem_csv", "emit_outputs", "svg_scatter", "main"]


class IngestError(DomainError):
    pass


def _num(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _parse_cell(text, row, col):
    try:
        v = float(text)
    except ValueError:
        raise IngestError(f"row {row}, column {col!r}: non-numeric value {text!r}") from None
    if not math.isfinite(v):
        raise IngestError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return v


def ingest_csv(path, y_column: str = "y"):
    """Read a means (``y``) or regression (``y,x1..xp``) CSV.

    Rows are counted from 1 at the first data line.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        if y_column not in header:
            raise IngestError(f"{path}: missing column {y_column!r}")
        xcols = sorted((h for h in header if h[:1] == "x" and h[1:].isdigit()), key=lambda h: int(h[1:]))
        if xcols and xcols != [f"x{j}" for j in range(1, len(xcols) + 1)]:
            raise IngestError(f"{path}: design columns must be x1..xp without gaps")
        iy = header.index(y_column)
        ix = [header.index(c) for c in xcols]
        ys, xs = [], []
        for row, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise IngestError(f"row {row}: expected {len(header)} fields, got {len(rec)}")
            ys.append(_parse_cell(rec[iy], row, y_column))
            xs.append([_parse_cell(rec[i], row, c) for i, c in zip(ix, xcols)])
    if not ys:
        raise IngestError(f"{path}: no data rows")
    if xcols:
        return RegressionProblem(np.array(xs), np.array(ys))
    return NormalMeansProblem(np.array(ys))


def write_problem_csv(problem, path):
    """Inverse of :func:`ingest_csv`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(problem, NormalMeansProblem):
            w.writerow(["y"])
            w.writerows([_num(v)] for v in problem.y)
        else:
            w.writerow(["y"] + [f"x{j}" for j in range(1, problem.p + 1)])
            for yi, xi in zip(problem.y, problem.X):
                w.writerow([_num(yi)] + [_num(v) for v in xi])


def svg_scatter(x, y, path, xlabel="observed", ylabel="estimated", title="", identity=True):
    """Write a small self-contained SVG scatter plot."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    W, H, m = 480, 480, 50
    lo = float(min(x.min(), y.min())) if identity else None
    hi = float(max(x.max(), y.max())) if identity else None
    xlo, xhi = (lo, hi) if identity else (float(x.min()), float(x.max()))
    ylo, yhi = (lo, hi) if identity else (float(y.min()), float(y.max()))
    xr = (xhi - xlo) or 1.0
    yr = (yhi - ylo) or 1.0

    def px(v):
        return m + (v - xlo) / xr * (W - 2 * m)

    def py(v):
        return H - m - (v - ylo) / yr * (H - 2 * m)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" fill="none" stroke="black"/>']
    if identity:
        parts.append(f'<line x1="{px(lo):.2f}" y1="{py(lo):.2f}" x2="{px(hi):.2f}" y2="{py(hi):.2f}" '
                     'stroke="grey" stroke-dasharray="4,3"/>')
    parts += [f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="steelblue" fill-opacity="0.7"/>'
              for a, b in zip(x, y)]
    parts += [f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="13">{xlabel}</text>',
              f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="13" '
              f'transform="rotate(-90 14 {H / 2})">{ylabel}</text>',
              f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="14">{title}</text>',
              f'<text x="{m}" y="{H - m + 16}" font-size="10">{xlo:.3g}</text>',
              f'<text x="{W - m}" y="{H - m + 16}" font-size="10" text-anchor="end">{xhi:.3g}</text>',
              "</svg>"]
    Path(path).write_text("\n".join(parts) + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) if not isinstance(v, str) else v for v in r])


def emit_outputs(output_dir, manifest: dict, estimates=None, metrics=None, plot=None, extra=None):
    """Write ``estimates.csv``, ``metrics.csv``, ``manifest.json`` and ``plot.svg``.

    ``estimates`` is ``(header, rows)``; ``metrics`` a dict written as
    ``name,value`` rows; ``plot`` a ``(x, y, kwargs)`` triple; ``extra`` maps
    file names to ``(header, rows)``.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if estimates is not None:
            _write_rows(out / "estimates.csv", *estimates)
        if metrics is not None:
            _write_rows(out / "metrics.csv", ["metric", "value"], list(metrics.items()))
        for name, table in (extra or {}).items():
            _write_rows(out / name, *table)
        if plot is not None:
            x, y, kw = plot
            svg_scatter(x, y, out / "plot.svg", **kw)
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write outputs to {exc.filename or out}: {exc.strerror}") from exc
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p, stochastic=False, needs_input=True):
    if needs_input:
        p.add_argument("--input", "-i", required=True, help="CSV with column y (and x1..xp)")
    p.add_argument("--output-dir", "-o", required=True)
    if stochastic:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hslike", description="Horseshoe-like shrinkage: densities, EM/LLA modes and MCMC.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("density", help="tabulate densities, penalty and bounds")
    _add_common(d, needs_input=False)
    d.add_argument("--theta", type=float, nargs="+", help="evaluation points (default: log grid)")
    g = d.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float, default=1.0)
    g.add_argument("--a", type=float)

    for name, help_ in (("em-means", "EM mode, normal means"), ("em-reg", "EM mode, linear regression")):
        e = sub.add_parser(name, help=help_)
        _add_common(e, stochastic=True)
        e.add_argument("--a", type=float, default=1.0, help="initial global scale a")
        e.add_argument("--tol", type=float, default=1e-8)
        e.add_argument("--max-iter", type=int, default=10000)
        e.add_argument("--zero-threshold", type=float, default=1e-6)
        e.add_argument("--restarts", type=int, default=3)

    l = sub.add_parser("lla", help="one-step LLA estimate")
    _add_common(l)
    l.add_argument("--tau", type=float, default=1.0)
    l.add_argument("--zero-threshold", type=float, default=0.0)
    l.add_argument("--theta0", choices=["OLS", "Ridge", "Data"], default=None)

    m = sub.add_parser("mcmc", help="posterior sampling")
    _add_common(m, stochastic=True)
    m.add_argument("--iters", type=int, default=10000)
    m.add_argument("--burn-in", type=int, default=2000)
    m.add_argument("--thin", type=int, default=1)
    m.add_argument("--tau", type=float, default=None, help="fix tau instead of sampling it")

    s = sub.add_parser("simulate", help="replicated method comparison on a preset design")
    _add_common(s, stochastic=True, needs_input=False)
    s.add_argument("--design", required=True, choices=["table1", "table2", "theta1", "theta2"])
    s.add_argument("--methods", default=",".join(METHODS), help="comma-separated subset of " + ",".join(METHODS))
    s.add_argument("--replications", type=int, default=10)
    s.add_argument("--iters", type=int, default=10000)
    s.add_argument("--burn-in", type=int, default=2000)
    s.add_argument("--thin", type=int, default=1)
    s.add_argument("--tau", type=float, default=1.0, help="tau for the one-step LLA column")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=10000)
    s.add_argument("--zero-threshold", type=float, default=1e-6)
    s.add_argument("--n-jobs", type=int, default=1)
    return ap


def _manifest(args, argv):
    params = {k: v for k, v in vars(args).items() if k not in ("command", "input", "output_dir")}
    return {
        "command": args.command,
        "input_paths": [os.path.abspath(args.input)] if getattr(args, "input", None) else [],
        "output_dir": os.path.abspath(args.output_dir),
        "seed": getattr(args, "seed", None),
        "parameters": params,
        "argv": list(argv),
        "version": __version__,
    }


def _point_outputs(problem, est, extra_cols=None):
    """estimates table and plot for a point estimate (plus optional interval columns)."""
    extra_cols = extra_cols or {}
    names = list(extra_cols)
    if isinstance(problem, NormalMeansProblem):
        obs = problem.y
        rows = [[i + 1, obs[i], est[i]] + [extra_cols[k][i] for k in names] for i in range(est.size)]
        plot = (obs, est, {"xlabel": "observed y", "ylabel": "estimate", "title": "estimate vs observation"})
        return (["coordinate", "observed", "estimated"] + names, rows), plot, None
    rows = [[j + 1, "NA", est[j]] + [extra_cols[k][j] for k in names] for j in range(est.size)]
    fitted = problem.X @ est
    fit_rows = [[i + 1, problem.y[i], fitted[i]] for i in range(problem.n)]
    plot = (problem.y, fitted, {"xlabel": "observed y", "ylabel": "fitted X theta", "title": "fitted vs actual"})
    return (["coordinate", "observed", "estimated"] + names, rows), plot, \
        {"fitted.csv": (["row", "observed", "fitted"], fit_rows)}


def _cmd_density(args, argv):
    spec = PenaltySpec(args.a) if args.a is not None else PenaltySpec.from_tau(args.tau)
    thetas = np.array(args.theta) if args.theta else np.logspace(-2, 2, 41)
    rows = []
    for t in thetas:
        if t == 0:
            rows.append([t, math.inf, -math.inf, "NA", "NA", "NA", "NA"])
            continue
        lo, hi = hs_bounds(t, spec.tau)
        rows.append([t, hslike_density(t, spec), hslike_penalty(t, spec), hslike_penalty_deriv(t, spec),
                     horseshoe_density_quadrature(t, spec.tau), lo, hi])
    header = ["theta", "hslike_density", "penalty", "penalty_deriv", "horseshoe_density", "hs_lower", "hs_upper"]
    emit_outputs(args.output_dir, _manifest(args, argv), estimates=(header, rows),
                 metrics={"a": spec.a, "tau": spec.tau, "points": len(rows)})


def _cmd_em(args, argv):
    problem = ingest_csv(args.input)
    cfg = EmConfig(a_init=args.a, tol=args.tol, max_iter=args.max_iter, zero_threshold=args.zero_threshold,
                   restarts=args.restarts, rng_seed=args.seed)
    if args.command == "em-means":
        if not isinstance(problem, NormalMeansProblem):
            raise DomainError("em-means expects a single y column")
        sol = em_normal_means(problem, cfg)
    else:
        if not isinstance(problem, RegressionProblem):
            raise DomainError("em-reg expects columns y,x1..xp")
        sol = em_regression(problem, cfg)
    est_table, plot, extra = _point_outputs(problem, sol.theta_hat)
    metrics = {"a_hat": sol.a_hat, "iterations": sol.iterations, "converged": sol.converged,
               "support_size": int(sol.support.size), "objective": sol.objective_trace[-1],
               "restarts_used": sol.restarts_used}
    emit_outputs(args.output_dir, _manifest(args, argv), est_table, metrics, plot, extra)
    if not sol.converged:
        print(f"warning: EM stopped at max_iter={args.max_iter} without converging", file=sys.stderr)


def _cmd_lla(args, argv):
    problem = ingest_csv(args.input)
    cfg = LlaConfig(tau=args.tau, theta0_rule=args.theta0, zero_threshold=args.zero_threshold)
    res = one_step_hslike(problem, cfg)
    est_table, plot, extra = _point_outputs(problem, res.coef)
    metrics = {"converged": res.converged, "passes": res.passes, "kkt_violation": res.kkt,
               "support_size": int(np.count_nonzero(res.coef))}
    emit_outputs(args.output_dir, _manifest(args, argv), est_table, metrics, plot, extra)


def _cmd_mcmc(args, argv):
    problem = ingest_csv(args.input)
    cfg = McmcConfig(n_iter=args.iters, burn_in=args.burn_in, thin=args.thin, rng_seed=args.seed,
                     tau_mode="Fixed" if args.tau is not None else "HalfCauchyFull", tau=args.tau)
    chain = (run_chain if isinstance(problem, NormalMeansProblem) else run_chain_regression)(problem, cfg)
    est_table, plot, extra = _point_outputs(problem, chain.posterior_mean,
                                            {"ci_lower": chain.ci_lower, "ci_upper": chain.ci_upper})
    p = chain.theta_draws.shape[1]
    extra = dict(extra or {})
    extra["chain.csv"] = (["iteration", "eta"] + [f"theta{j}" for j in range(1, p + 1)],
                          [[k + 1, chain.eta_draws[k], *chain.theta_draws[k]] for k in range(chain.n_kept)])
    metrics = {"kept_draws": chain.n_kept, "eta_mean": float(chain.eta_draws.mean()),
               "tau_median": float(np.median(1.0 / np.sqrt(chain.eta_draws))),
               "ess_min": float(chain.ess.min()), "ess_median": float(np.median(chain.ess))}
    out = emit_outputs(args.output_dir, _manifest(args, argv), est_table, metrics, plot, extra)
    summary = {"posterior_mean": chain.posterior_mean.tolist(), "ci_lower": chain.ci_lower.tolist(),
               "ci_upper": chain.ci_upper.tolist(), "ess": chain.ess.tolist(),
               "eta_mean": float(chain.eta_draws.mean())}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh)
        fh.write("\n")


def _cmd_simulate(args, argv):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    cfg = HarnessConfig(
        em=EmConfig(tol=args.tol, max_iter=args.max_iter, zero_threshold=args.zero_threshold),
        mcmc=McmcConfig(n_iter=args.iters, burn_in=args.burn_in, thin=args.thin),
        lla=LlaConfig(tau=args.tau),
        zero_threshold=args.zero_threshold,
    )
    t0 = time.perf_counter()
    table = run_comparison(preset(args.design), methods, args.replications, args.seed, cfg, args.n_jobs)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "metrics.csv")
    (out / "table.txt").write_text(table.to_text() + "\n")
    emit_outputs(out, _manifest(args, argv))
    print(table.to_text())
    print(f"elapsed {time.perf_counter() - t0:.1f} s", file=sys.stderr)


_COMMANDS = {"density": _cmd_density, "em-means": _cmd_em, "em-reg": _cmd_em, "lla": _cmd_lla,
             "mcmc": _cmd_mcmc, "simulate": _cmd_simulate}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args, argv)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"hslike {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ValueError, OSError) as exc:
        print(f"hslike {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
