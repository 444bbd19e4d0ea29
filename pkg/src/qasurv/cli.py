"""Command-line driver: ``qasurv {ingest,km,logrank,coxfit,diagnose,predict,report}``.

Exit codes: 0 success, 1 failure, 2 usage error, 3 Cox fit did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifact import BEYOND_HORIZON, dumps, fit_from_dict, model_to_dict, predict_median
from .cox import DEFAULT_MODEL, Term, build_design, cox_fit
from .errors import (DegenerateCovariateError, InvalidInputError, QasurvError,
                     SchemaError)
from .inference import (TIME_TRANSFORMS, effect_curve, effect_grid,
                        hazard_ratio_summary, schoenfeld_test)
from .ingest import file_sha256, ingest_dump, read_features_csv, write_features_csv
from .survival import km_fit, logrank_test
from .svg import effect_svg, hazard_ratio_svg, km_svg

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3

log = logging.getLogger("qasurv")


class UsageError(Exception):
    pass


def format_p(p: float) -> str:
    return "<1e-16" if p < 1e-16 else f"{p:.3g}"


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _level(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return value


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _load_sites(paths):
    """Rows from every CSV grouped by site label, sites in sorted order."""
    by_site = {}
    for path in paths:
        rows = read_features_csv(path)
        if not rows:
            raise InvalidInputError(f"{path}: no feature rows")
        for row in rows:
            by_site.setdefault(row.site, []).append(row)
    return dict(sorted(by_site.items()))


def _times(rows):
    return (np.array([r.tanswer for r in rows], dtype=float),
            np.array([r.solved for r in rows], dtype=bool))


def _num(v):
    return None if v is None else float(v)


def km_summary(rows, level):
    time, event = _times(rows)
    curve = km_fit(time, event, confidence_level=level)
    return curve, {
        "records": curve.n_records,
        "events": curve.n_events,
        "median": _num(curve.median),
        "lcl": _num(curve.median_ci[0]),
        "ucl": _num(curve.median_ci[1]),
    }


def cmd_ingest(args):
    rows, meta = ingest_dump(args.posts, args.site, sample=args.sample, seed=args.seed)
    write_features_csv(rows, args.out)
    meta_path = args.meta or f"{args.out}.meta.json"
    _write(meta_path, dumps(meta))
    c = meta["counters"]
    print(f"questions={c['questions']} closed={c['excluded_closed']} invalid={c['excluded_invalid']} "
          f"emitted={c['emitted']} sampled={c['sampled']} skipped_rows={c['rows_skipped']}")
    return EXIT_OK


def cmd_km(args):
    sites = _load_sites(args.features)
    table, series = [], []
    for site, rows in sites.items():
        curve, summary = km_summary(rows, args.level)
        table.append({"site": site, **summary,
                      "curve": {"time": curve.time.tolist(), "survival": curve.survival.tolist(),
                                "lower": curve.lower.tolist(), "upper": curve.upper.tolist()}})
        series.append((site, curve.time, curve.survival))
    if args.out_json:
        _write(args.out_json, dumps({"level": args.level, "sites": table}))
    if args.out_svg:
        _write(args.out_svg, km_svg(series, log_time=args.log_time))
    pct = f"{args.level:g}"
    print(f"{'':<16}{'records':>8}{'events':>8}{'median':>9}{pct + 'LCL':>9}{pct + 'UCL':>9}")
    for row in table:
        cells = [("NA" if row[k] is None else f"{row[k]:.1f}") for k in ("median", "lcl", "ucl")]
        print(f"{row['site']:<16}{row['records']:>8}{row['events']:>8}"
              f"{cells[0]:>9}{cells[1]:>9}{cells[2]:>9}")
    return EXIT_OK


def cmd_logrank(args):
    sites = _load_sites(args.features)
    if len(sites) < 2:
        raise UsageError("log-rank test needs at least two sites")
    time, event, group = [], [], []
    for site, rows in sites.items():
        t, e = _times(rows)
        time.append(t)
        event.append(e)
        group.extend([site] * len(rows))
    res = logrank_test(np.concatenate(time), np.concatenate(event), np.array(group, dtype=object))
    out = {
        "chi_square": res.chi_square,
        "df": res.degrees_of_freedom,
        "p_value": res.p_value,
        "p_value_text": format_p(res.p_value),
        "groups": [{"site": g, "records": len(sites[g]), "observed": o, "expected": e}
                   for g, o, e in res.per_group],
    }
    if args.out_json:
        _write(args.out_json, dumps(out))
    print(f"Chisq= {res.chi_square:.1f} on {res.degrees_of_freedom} degrees of freedom, "
          f"p= {format_p(res.p_value)}")
    return EXIT_OK


def _plan(path):
    if path is None:
        return DEFAULT_MODEL
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    return tuple(Term(t["name"], t.get("kind", "linear"), t.get("pre_transform", "identity"),
                      t.get("knots", 3)) for t in spec)


def _single_site(paths):
    sites = _load_sites(paths)
    if len(sites) != 1:
        raise UsageError(f"expected one site per invocation, found {len(sites)}: {list(sites)}")
    return next(iter(sites.items()))


def hr_to_dict(summary, site):
    return {
        "site": site,
        "levels": list(summary.levels),
        "rows": [{"covariate": r.covariate, "low": r.low, "high": r.high,
                  "contrast": r.contrast, "hazard_ratio": r.hazard_ratio,
                  "log_hr": r.log_hr, "se": r.se,
                  "ci": {f"{lv:g}": list(iv) for lv, iv in r.intervals.items()}}
                 for r in summary.per_covariate],
    }


def cmd_coxfit(args):
    site, rows = _single_site([args.features])
    time, event = _times(rows)
    design = build_design(rows, _plan(args.formula_json))
    fit = cox_fit(design, time, event, ties=args.ties).with_baseline()
    _write(args.out_model, dumps(model_to_dict(fit, site, args.seed)))
    if not fit.converged:
        print(f"Cox fit did not converge after {fit.iterations} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    summary = hazard_ratio_summary(fit, rows)
    if args.out_hr:
        _write(args.out_hr, dumps(hr_to_dict(summary, site)))
    if args.out_svg_effects:
        outdir = Path(args.out_svg_effects)
        outdir.mkdir(parents=True, exist_ok=True)
        effects = {}
        for term in fit.design.terms:
            curve = effect_curve(fit, term.name, effect_grid(fit, rows, term.name))
            effects[term.name] = {"reference": curve.reference, "x": curve.x.tolist(),
                                  "log_hr": curve.log_hr.tolist(), "lower": curve.lower.tolist(),
                                  "upper": curve.upper.tolist()}
            _write(outdir / f"effect_{term.name}.svg",
                   effect_svg(curve, log_x=term.pre_transform == "log"))
        _write(outdir / "effects.json", dumps({"site": site, "level": 0.95, "effects": effects}))
        _write(outdir / "hazard_ratios.svg", hazard_ratio_svg(summary))
    print(f"{site}: n={fit.time.size} events={int(fit.event.sum())} loglik={fit.log_partial_likelihood:.3f} "
          f"iterations={fit.iterations}")
    for r in summary.per_covariate:
        lo, hi = r.intervals[0.95]
        print(f"  {r.covariate:<12} {r.contrast:>18}  HR={r.hazard_ratio:.2f}  95% CI ({lo:.2f}, {hi:.2f})")
    return EXIT_OK


def _load_model(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a model artifact ({exc})") from None


def diagnostics_to_dict(diag, site):
    def row(r):
        return {"covariate": r.covariate, "rho": None if np.isnan(r.rho) else r.rho,
                "chisq": r.chi_square, "df": r.df, "p": r.p_value}
    return {"site": site, "transform": diag.time_transform,
            "rows": [row(r) for r in diag.per_covariate],
            "columns": [row(r) for r in diag.per_column],
            "global": row(diag.global_test)}


def cmd_diagnose(args):
    model = _load_model(args.model)
    rows = read_features_csv(args.features)
    fit = fit_from_dict(model, rows)
    diag = schoenfeld_test(fit, transform=args.transform)
    text = dumps(diagnostics_to_dict(diag, model.get("site")))
    if args.out_json:
        _write(args.out_json, text)
        print(diag.table())
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_predict(args):
    model = _load_model(args.model)
    rows = read_features_csv(args.features)
    fit = fit_from_dict(model, rows)
    medians = predict_median(fit, fit.design.values)
    lines = ["question_id,predicted_median"]
    for row, m in zip(rows, medians):
        lines.append(f"{row.question_id},{BEYOND_HORIZON if m is None else f'{m:.4f}'}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_report(args):
    """One-site analysis report: KM summary, Cox fit, hazard ratios, PH test."""
    site, rows = _single_site([args.features])
    _, summary = km_summary(rows, args.level)
    time, event = _times(rows)
    fit = cox_fit(build_design(rows, _plan(args.formula_json)), time, event)
    report = {"site": site, "km_summary": summary, "logrank": None, "cox": None,
              "provenance": {"inputs": {Path(args.features).name: file_sha256(args.features)},
                             "seed": args.seed, "version": __version__}}
    if fit.converged:
        report["cox"] = {
            "loglik": fit.log_partial_likelihood, "iterations": fit.iterations,
            "beta": fit.beta.tolist(), "columns": fit.design.names,
            "hazard_ratios": hr_to_dict(hazard_ratio_summary(fit, rows), site)["rows"],
            "ph_diagnostics": diagnostics_to_dict(schoenfeld_test(fit), site),
        }
    _write(args.out_json, dumps(report))
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def build_parser():
    p = argparse.ArgumentParser(prog="qasurv", description="Survival analysis of question resolution times.")
    p.add_argument("--version", action="version", version=f"qasurv {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="Posts XML dump -> feature CSV")
    s.add_argument("--posts", required=True)
    s.add_argument("--site", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--meta", help="metadata JSON path (default: OUT.meta.json)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sample", type=_positive_int, default=None)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("km", help="Kaplan-Meier summary per site")
    s.add_argument("--features", nargs="+", required=True)
    s.add_argument("--level", type=_level, default=0.95)
    s.add_argument("--out-json")
    s.add_argument("--out-svg")
    s.add_argument("--log-time", action="store_true")
    s.set_defaults(func=cmd_km)

    s = sub.add_parser("logrank", help="log-rank test across sites")
    s.add_argument("--features", nargs="+", required=True)
    s.add_argument("--out-json")
    s.set_defaults(func=cmd_logrank)

    s = sub.add_parser("coxfit", help="fit the Cox model for one site")
    s.add_argument("--features", required=True)
    s.add_argument("--out-model", required=True)
    s.add_argument("--out-hr")
    s.add_argument("--out-svg-effects")
    s.add_argument("--formula-json")
    s.add_argument("--ties", choices=("efron", "breslow"), default="efron")
    s.add_argument("--seed", type=int, default=None, help="recorded in the artifact only")
    s.set_defaults(func=cmd_coxfit)

    s = sub.add_parser("diagnose", help="Schoenfeld PH test for a stored model")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--transform", choices=TIME_TRANSFORMS, default="km")
    s.add_argument("--out-json")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("predict", help="predicted median resolution time per question")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("report", help="combined analysis report for one site")
    s.add_argument("--features", required=True)
    s.add_argument("--out-json", required=True)
    s.add_argument("--level", type=_level, default=0.95)
    s.add_argument("--formula-json")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qasurv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateCovariateError as exc:
        print(f"qasurv: degenerate covariate {exc.covariate}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except SchemaError as exc:
        print(f"qasurv: schema error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (QasurvError, OSError) as exc:
        print(f"qasurv: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
