"""JSON model artifacts and prediction from a stored fit."""

from __future__ import annotations

import json

import numpy as np

from . import __version__
from .cox import CoxFit, Term, build_design
from .errors import InvalidStateError, SchemaError
from .splines import SplineSpec

BEYOND_HORIZON = "censored-beyond-horizon"


def model_to_dict(fit: CoxFit, site: str, seed=None) -> dict:
    design = fit.design
    baseline = fit.baseline
    return {
        "site": site,
        "version": __version__,
        "seed": seed,
        "ties": fit.ties,
        "terms": [{"name": t.name, "kind": t.kind, "pre_transform": t.pre_transform,
                   "knots": t.knots} for t in design.terms],
        "columns": [{"covariate": c, "kind": k} for c, k in design.columns],
        "knots": {name: list(spec.knots) for name, spec in design.splines.items()},
        "pre_transforms": {t.name: t.pre_transform for t in design.terms},
        "column_means": [float(v) for v in design.column_means],
        "ranges": {k: list(v) for k, v in design.ranges.items()},
        "references": dict(design.references),
        "beta": [float(v) for v in fit.beta],
        "covariance": [[float(v) for v in row] for row in fit.covariance],
        "baseline": None if baseline is None else
        [{"t": float(t), "H": float(h)} for t, h in zip(*baseline)],
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "loglik": float(fit.log_partial_likelihood),
        "n": int(fit.time.size),
        "events": int(fit.event.sum()),
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def terms_from_dict(model: dict):
    try:
        return tuple(Term(t["name"], t["kind"], t.get("pre_transform", "identity"),
                          t.get("knots", 3)) for t in model["terms"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"model artifact is missing term information: {exc}") from None


def fit_from_dict(model: dict, rows, time=None, event=None) -> CoxFit:
    """Rebuild a :class:`CoxFit` from an artifact, encoding ``rows`` with the
    stored knots and centring so diagnostics run on the same columns."""
    terms = terms_from_dict(model)
    splines = {name: SplineSpec(tuple(knots), name, model["pre_transforms"][name])
               for name, knots in model.get("knots", {}).items()}
    try:
        design = build_design(rows, terms, splines=splines, column_means=model["column_means"])
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"feature data does not match the model: {exc}") from None
    stored = [(c["covariate"], c["kind"]) for c in model["columns"]]
    if list(design.columns) != stored:
        raise SchemaError("feature data does not produce the model's columns")
    design = type(design)(design.columns, design.values, design.column_means, design.terms,
                          design.splines,
                          {k: tuple(v) for k, v in model.get("ranges", {}).items()},
                          dict(model.get("references", {})))
    if time is None:
        time = np.array([r.tanswer for r in rows], dtype=float)
        event = np.array([r.solved for r in rows], dtype=bool)
    baseline = model.get("baseline")
    if baseline is not None:
        baseline = (np.array([b["t"] for b in baseline]), np.array([b["H"] for b in baseline]))
    beta = np.asarray(model["beta"], dtype=float)
    cov = np.asarray(model["covariance"], dtype=float)
    if beta.shape != (design.values.shape[1],) or cov.shape != (beta.size, beta.size):
        raise SchemaError("coefficient dimensions do not match the design")
    return CoxFit(beta, cov, float(model["loglik"]), int(model["iterations"]),
                  bool(model["converged"]), design, time, event,
                  model.get("ties", "efron"), baseline=baseline)


def predict_median(fit: CoxFit, x_centered):
    """Median of ``S(t) = exp(-H0(t) exp(x'beta))`` per row of centred
    covariates; ``None`` where the curve stays above 0.5."""
    if fit.baseline is None:
        raise InvalidStateError("model artifact carries no baseline hazard")
    t, h = fit.baseline
    x = np.atleast_2d(np.asarray(x_centered, dtype=float))
    risk = np.exp(x @ np.asarray(fit.beta))
    out = []
    for r in risk:
        surv = np.exp(-h * r)
        hit = np.flatnonzero(surv <= 0.5)
        out.append(float(t[hit[0]]) if hit.size else None)
    return out
