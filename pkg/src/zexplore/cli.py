"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 data validation, 3 convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import mixedlogit, npml, paperdata, render, simtest
from .cohortfile import format_binomial, read_cohort
from .likelihood import Family, SchemaError
from .zmatrix import (OrderSpec, ZMatrix, compute_z, density_weights, diagnostics,
                      reorder, shrink_estimates, smooth_covariates)

EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 1, 2, 3
OUTPUT_DIR_ENV = "ZEXPLORE_OUTPUT_DIR"
EMBEDDED_PREFIX = "embedded:"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------- helpers

def _out_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(text: str, output: str | None):
    if output is None:
        sys.stdout.write(text)
    else:
        _out_path(output).write_text(text, encoding="utf-8", newline="\n")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _load(args):
    if args.input.startswith(EMBEDDED_PREFIX):
        return paperdata.load(args.input[len(EMBEDDED_PREFIX):]), Family.binomial()
    try:
        return read_cohort(args.input, args.family, getattr(args, "covariates_file", None))
    except OSError as exc:
        raise SchemaError(f"cannot read {args.input}: {exc.strerror}") from None


def parse_order(order: str | None, within: str = "estimate-asc", component: int = 0) -> OrderSpec | None:
    """``estimate-asc``, ``estimate-desc``, ``ids:a,b``, ``NAME`` or ``NAME:l1,l2,...``."""
    if order is None or order == "input":
        return None
    if within not in ("estimate-asc", "estimate-desc"):
        raise UsageError(f"unknown within-order {within!r}")
    desc = within == "estimate-desc"
    if order in ("estimate-asc", "estimate-desc"):
        return OrderSpec(by="estimate", component=component, descending=order == "estimate-desc")
    name, _, rest = order.partition(":")
    if name == "ids":
        return OrderSpec(by="explicit", ids=tuple(s.strip() for s in rest.split(",") if s.strip()))
    levels = None
    if rest:
        try:
            levels = tuple(float(v) for v in rest.split(","))
        except ValueError:
            raise UsageError(f"covariate levels must be numbers: {rest!r}") from None
    return OrderSpec(by="covariate", covariate=name, levels=levels,
                     component=component, descending=desc)


def _cohort_z(args) -> ZMatrix:
    units, family = _load(args)
    z = compute_z(units, family)
    spec = parse_order(args.order, args.within_order, args.component)
    return reorder(z, spec) if spec else z


def _add_input(p, family=True):
    p.add_argument("input", help=f"cohort CSV, or {EMBEDDED_PREFIX}NAME for a built-in cohort")
    if family:
        p.add_argument("--family", choices=("binomial", "multinomial"), default="binomial")
        p.add_argument("--covariates-file", help="per-unit covariate CSV for multinomial input")


def _add_order(p):
    p.add_argument("--order", help="estimate-asc | estimate-desc | ids:a,b,... | COVARIATE[:levels]")
    p.add_argument("--within-order", default="estimate-asc",
                   help="ordering inside covariate groups (estimate-asc | estimate-desc)")
    p.add_argument("--component", type=int, default=0, help="estimate component used for ordering")


# ---------------------------------------------------------------- commands

def cmd_zmatrix(args) -> int:
    z = _cohort_z(args)
    diag = diagnostics(z)
    label = args.label
    if label is None and args.order and ":" in args.order and not args.order.startswith("ids:"):
        label = args.order.split(":")[0]
    opts = render.TableOptions(transpose=args.transpose, scale=args.scale,
                               suppress_below=args.suppress_below,
                               post_rounding=not args.pre_rounding_suppression,
                               label_covariate=label)
    if args.format == "text":
        lines = [render.table_text(z, opts), "", "unit  estimate  z_ii  z_+j  z_+j-z_jj  z_jj/z_+j"]
        for uid, est, d, c, e, r in zip(z.order, z.estimates, diag.diag, diag.colsum,
                                        diag.excess, diag.ratio):
            lines.append(f"{uid}  {' '.join(f'{v:.6g}' for v in est)}  {d:.4f}  {c:.4f}  "
                         f"{e:.4f}  {r:.4f}")
        lines.append(f"trace/n  {diag.trace_over_n:.6f}")
        out = "\n".join(lines) + "\n"
    elif args.format == "json":
        out = _dumps({"order": list(z.order), "estimates": z.estimates.tolist(),
                      "entries": z.entries.tolist(), "diagnostics": diag.to_dict()})
    elif args.format == "csv":
        out = render.matrix_csv(z)
    else:
        out = render.symbols_svg(z, transpose=args.transpose_plot)
    _emit(out, args.output)
    if args.density_plot:
        zs = reorder(z, OrderSpec(by="estimate", component=args.component))
        density, cdf = density_weights(zs)
        svg = render.cdf_density_svg(density, cdf, zs.estimates[:, args.component],
                                     log10_x=not args.linear_x)
        _emit(svg, args.density_plot)
    return 0


def _atoms_config(value: str) -> npml.EMConfig:
    if value == "auto":
        return npml.EMConfig()
    if value == "npml":
        return npml.EMConfig(selection="npml")
    try:
        k = int(value)
    except ValueError:
        raise UsageError("--atoms must be auto, npml or a positive integer") from None
    if k < 1:
        raise UsageError("--atoms must be >= 1")
    return npml.EMConfig(selection="npml", max_atoms=k)


def cmd_npml(args) -> int:
    units, family = _load(args)
    cfg = _atoms_config(args.atoms)
    if args.max_iter:
        cfg = npml.EMConfig(**{**cfg.__dict__, "max_iter": args.max_iter})
    alt = npml.em_fit(units, family, cfg)
    null = npml.degenerate_fit(units, family)
    lr = npml.lr_test(alt, null)
    if args.format == "json":
        out = _dumps({"alternative": alt.to_dict(), "degenerate": null.to_dict(),
                      "lr_test": lr.to_dict()})
    else:
        lines = []
        for title, f in (("alternative", alt), ("degenerate", null)):
            lines.append(f"{title}: k={f.k} loglik={f.loglik:.3f} iterations={f.iterations} "
                         f"converged={f.converged}")
            for a, m in zip(f.atoms, f.masses):
                lines.append(f"  atom {' '.join(f'{v:.4f}' for v in a)}  mass {m:.3f}")
        lines.append(f"LR statistic {lr.statistic:.3f}  p-value {lr.p_value:.3g}  "
                     f"reference {lr.df_convention}")
        out = "\n".join(lines) + "\n"
    _emit(out, args.output)
    return 0


def cmd_mixedlogit(args) -> int:
    units, _ = _load(args)
    if args.covariates:
        design = mixedlogit.covariate_design(units, [c.strip() for c in args.covariates.split(",")])
    else:
        design = mixedlogit.experience_design(units, args.experience, cut=args.experience_cut,
                                              center_level=args.center_level)
    mixed = mixedlogit.fit(design, args.nodes, adaptive=not args.non_adaptive)
    fixed = mixedlogit.fixed_logit_fit(design)
    if args.format == "json":
        f = fixed.to_dict()
        f["ln_sigma2"] = None
        out = _dumps({"mixed": _finite(mixed.to_dict()), "fixed": _finite(f)})
    else:
        lines = ["term                 OR (lo95 OR hi95)"]
        for name, o, lo, hi in mixedlogit.odds_ratios(mixed):
            lines.append(f"{name:<20} {o:.2f} ({mixedlogit.format_or(o, lo, hi)})")
        se = mixed.se[-1]
        lines.append(f"ln sigma^2           {mixed.ln_sigma2:.2f}"
                     + (f" (se {se:.2f})" if np.isfinite(se) else " (se n/a)"))
        lines.append(f"boundary             {mixed.boundary_flag}")
        lines.append(f"loglik               {mixed.loglik:.3f}  nodes {mixed.quad_nodes}")
        lines.append("fixed-effects logit:")
        for name, o, lo, hi in mixedlogit.odds_ratios(fixed):
            lines.append(f"{name:<20} {o:.2f} ({mixedlogit.format_or(o, lo, hi)})")
        out = "\n".join(lines) + "\n"
    _emit(out, args.output)
    return 0


def _finite(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


def cmd_simtest(args) -> int:
    units, family = _load(args)
    observed = compute_z(units, family)
    if args.order_rule == "descending":
        observed = reorder(observed, OrderSpec(by="estimate", descending=True))
    cfg = simtest.SimConfig(seed=args.seed, replicates=args.replicates, order_rule=args.order_rule)
    sims = simtest.simulate_null(units, family, cfg)
    lineup = simtest.lineup_panels(observed, sims, args.seed, fixed_position=args.fixed_position)
    svg = render.lineup_svg([p.entries for p in lineup.panels], lineup.rows, lineup.cols)
    _emit(svg, args.output)
    answer = lineup.answer()
    answer["observed_trace_over_n"] = simtest.trace_over_n(observed)
    answer["simulated_trace_over_n"] = [simtest.trace_over_n(s) for s in sims]
    if args.answer:
        _emit(_dumps(answer), args.answer)
    elif args.output:
        _emit(_dumps(answer), str(Path(args.output).with_suffix(".answer.json")))
    else:
        sys.stderr.write(_dumps(answer))
    return 0


def cmd_shrink(args) -> int:
    z = _cohort_z(args)
    shrunk = shrink_estimates(z)
    cols = {"unit_id": list(z.order)}
    for c in range(z.estimates.shape[1]):
        suffix = "" if z.estimates.shape[1] == 1 else f"_{c}"
        cols[f"estimate{suffix}"] = z.estimates[:, c].tolist()
        cols[f"shrunk{suffix}"] = shrunk[:, c].tolist()
    if args.format == "json":
        _emit(_dumps(cols), args.output)
    else:
        _emit(render.vectors_csv(cols), args.output)
    if args.svg:
        _emit(render.scatter_svg(z.estimates[:, 0], shrunk[:, 0], list(z.order),
                                 xlabel="estimate", ylabel="shrunk estimate"), args.svg)
    return 0


def cmd_smooth(args) -> int:
    z = _cohort_z(args)
    x = z.covariate(args.covariate)
    sm = smooth_covariates(z, x, literal=args.literal_smoothing)
    other = smooth_covariates(z, x, literal=not args.literal_smoothing)
    convention = "literal" if args.literal_smoothing else "normalized"
    meta = {"covariate": args.covariate, "convention": convention,
            "differs_from_other_convention": bool(np.max(np.abs(sm - other)) > 1e-12),
            "max_abs_difference": float(np.max(np.abs(sm - other)))}
    cols = {"unit_id": list(z.order), "estimate": z.estimates[:, 0].tolist(),
            args.covariate: x.tolist(), f"smoothed_{args.covariate}": sm.tolist()}
    if args.format == "json":
        _emit(_dumps({"metadata": meta, **cols}), args.output)
    else:
        header = "".join(f"# {k}: {json.dumps(v)}\n" for k, v in meta.items())
        _emit(header + render.vectors_csv(cols), args.output)
    if args.svg:
        labels = [f"{u.covariates.get(args.label, 0):g}" if args.label else "o" for u in z.units]
        _emit(render.scatter_svg(z.estimates[:, 0], sm, labels, xlabel="estimate",
                                 ylabel=f"expected {args.covariate}"), args.svg)
    return 0


def cmd_reproduce(args) -> int:
    rep = paperdata.reproduce_all()
    _emit(_dumps(rep.to_dict()) if args.format == "json" else rep.to_text(), args.output)
    return 0 if rep.passed else EXIT_DATA


def cmd_export(args) -> int:
    _emit(format_binomial(paperdata.load(args.name)), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zexplore", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    z = sub.add_parser("zmatrix", help="compute and render a z-matrix with diagnostics")
    _add_input(z)
    _add_order(z)
    z.add_argument("--transpose", action=argparse.BooleanOptionalAction, default=True)
    z.add_argument("--transpose-plot", action="store_true", help="transpose the SVG symbols plot")
    z.add_argument("--scale", type=int, default=1000)
    z.add_argument("--suppress-below", type=float, default=1.0)
    z.add_argument("--pre-rounding-suppression", action="store_true",
                   help="blank cells whose scaled value is below the threshold before rounding")
    z.add_argument("--label", help="covariate used to label rows and columns")
    z.add_argument("--format", choices=("text", "json", "csv", "svg"), default="text")
    z.add_argument("--density-plot", help="write the distribution/column-sum SVG here")
    z.add_argument("--linear-x", action="store_true", help="linear x axis on the density plot")
    z.add_argument("-o", "--output")
    z.set_defaults(func=cmd_zmatrix)

    n = sub.add_parser("npml", help="NPML mixture fit and LR test against one atom")
    _add_input(n)
    n.add_argument("--atoms", default="auto", help="auto (LR selection) | npml | max atom count")
    n.add_argument("--max-iter", type=int, default=0, help="EM iteration cap")
    n.add_argument("--format", choices=("text", "json"), default="text")
    n.add_argument("-o", "--output")
    n.set_defaults(func=cmd_npml)

    m = sub.add_parser("mixedlogit", help="random-intercept logistic regression odds ratios")
    _add_input(m, family=False)
    m.set_defaults(family="binomial")
    m.add_argument("--experience", choices=mixedlogit.EXPERIENCE_CODINGS, default="gt6")
    m.add_argument("--experience-cut", type=float, default=7.0,
                   help="gt6 indicator is experience > cut")
    m.add_argument("--center-level", type=float, default=2.0)
    m.add_argument("--covariates", help="comma-separated raw covariates instead of the experience design")
    m.add_argument("--nodes", type=int, default=16)
    m.add_argument("--non-adaptive", action="store_true", help="plain (non-adaptive) Gauss-Hermite")
    m.add_argument("--format", choices=("text", "json"), default="text")
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_mixedlogit)

    s = sub.add_parser("simtest", help="null-simulation lineup of z-matrices")
    _add_input(s)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--replicates", type=int, default=3)
    s.add_argument("--order-rule", choices=simtest.ORDER_RULES, default="descending")
    s.add_argument("--fixed-position", action="store_true", help="observed panel top-left")
    s.add_argument("--answer", help="answer record JSON path")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simtest)

    sh = sub.add_parser("shrink", help="z-weighted shrinkage predictions")
    _add_input(sh)
    _add_order(sh)
    sh.add_argument("--format", choices=("csv", "json"), default="csv")
    sh.add_argument("--svg", help="scatter of shrunk vs original estimates")
    sh.add_argument("-o", "--output")
    sh.set_defaults(func=cmd_shrink)

    sm = sub.add_parser("smooth", help="expected covariate given each estimate")
    _add_input(sm)
    _add_order(sm)
    sm.add_argument("--covariate", required=True)
    sm.add_argument("--literal-smoothing", action="store_true",
                    help="weights z[i,k]/z[+,k] instead of the normalised z[k,i]/z[+,i]")
    sm.add_argument("--label", help="covariate used as plot glyph")
    sm.add_argument("--format", choices=("csv", "json"), default="csv")
    sm.add_argument("--svg", help="scatter of smoothed covariate vs estimate")
    sm.add_argument("-o", "--output")
    sm.set_defaults(func=cmd_smooth)

    r = sub.add_parser("reproduce", help="check the embedded data against published values")
    r.add_argument("--format", choices=("text", "json"), default="text")
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_reproduce)

    e = sub.add_parser("export", help="write an embedded cohort as CSV")
    e.add_argument("name", choices=paperdata.COHORTS)
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"zexplore: error: {exc}\n")
        return EXIT_USAGE
    except SchemaError as exc:
        sys.stderr.write(f"zexplore: data error: {exc}\n")
        return EXIT_DATA
    except (npml.ConvergenceError, mixedlogit.FitError) as exc:
        sys.stderr.write(f"zexplore: convergence failure: {exc}\n")
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
