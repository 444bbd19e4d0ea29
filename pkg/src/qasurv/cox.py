"""Cox proportional-hazards regression.

The design matrix is built from a per-covariate plan (spline, binary or
linear terms) and centred before fitting. Coefficients maximise the partial
likelihood with Efron's correction for tied event times (Breslow is kept as
an option) using Newton-Raphson with step-halving.
"""

from __future__ import annotations

from collections.abc import Mapping
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (DegenerateCovariateError, InvalidInputError,
                     NonIdentifiableError)
from .splines import SplineSpec, apply_pre_transform, make_spline_spec

log = logging.getLogger(__name__)

# largest leftover Newton step (in covariate standard deviations) still
# compatible with a finite maximum
_DIVERGENCE_STEP = 1e-2

TERM_KINDS = ("rcs", "binary", "linear")


@dataclass(frozen=True)
class Term:
    """How one raw covariate enters the model."""

    name: str
    kind: str = "linear"
    pre_transform: str = "identity"
    knots: int = 3

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise InvalidInputError(f"unknown term kind {self.kind!r}")


DEFAULT_MODEL = (
    Term("zscore", "rcs"),
    Term("bodylength", "rcs", "log"),
    Term("titlelength", "rcs", "log"),
    Term("hasexample", "binary"),
    Term("tagscount", "linear"),
    Term("sumpeople", "rcs", "log"),
)


def column_of(rows, name):
    """Pull one covariate out of a mapping of arrays or a sequence of rows."""
    if isinstance(rows, Mapping):
        if name not in rows:
            raise InvalidInputError(f"missing covariate {name!r}")
        return np.asarray(rows[name], dtype=float)
    try:
        return np.array([float(getattr(r, name)) for r in rows])
    except AttributeError:
        raise InvalidInputError(f"missing covariate {name!r}") from None


def _n_rows(rows):
    if isinstance(rows, Mapping):
        return len(next(iter(rows.values()))) if rows else 0
    return len(rows)


@dataclass(frozen=True)
class DesignMatrix:
    """Centred model matrix plus everything needed to re-encode raw values.

    ``columns`` lists ``(covariate, kind)`` pairs where kind is ``linear``,
    ``binary`` or ``spline-j`` for the j-th restricted cubic term.
    """

    columns: tuple
    values: np.ndarray
    column_means: np.ndarray
    terms: tuple
    splines: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)

    @property
    def names(self):
        return [f"{c}" if k in ("linear", "binary") else f"{c}'{k[7:]}"
                for c, k in self.columns]

    @property
    def shape(self):
        return self.values.shape

    def term(self, name) -> Term:
        for t in self.terms:
            if t.name == name:
                return t
        raise InvalidInputError(f"unknown covariate {name!r}")

    def term_slice(self, name) -> slice:
        idx = [i for i, (c, _) in enumerate(self.columns) if c == name]
        if not idx:
            raise InvalidInputError(f"unknown covariate {name!r}")
        return slice(idx[0], idx[-1] + 1)

    def encode_term(self, name, raw):
        """Uncentred basis block of one covariate evaluated at raw values."""
        return _encode(self.term(name), np.atleast_1d(np.asarray(raw, dtype=float)),
                       self.splines.get(name))

    def encode(self, rows):
        """Centred model matrix for new rows, reusing knots and means."""
        blocks = [_encode(t, column_of(rows, t.name), self.splines.get(t.name))
                  for t in self.terms]
        return np.column_stack(blocks) - self.column_means

    @classmethod
    def from_array(cls, values, names=None, center=True):
        """Plain linear design from a raw matrix (one column per covariate)."""
        x = np.asarray(values, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        names = list(names or [f"x{i + 1}" for i in range(x.shape[1])])
        rows = {n: x[:, i] for i, n in enumerate(names)}
        return build_design(rows, [Term(n, "linear") for n in names], center=center)


def _encode(term: Term, raw, spec: Optional[SplineSpec]):
    if term.kind == "rcs":
        return spec.transform(raw)
    if term.kind == "binary":
        return (raw != 0).astype(float)[:, None]
    return apply_pre_transform(raw, term.pre_transform, term.name)[:, None]


def build_design(rows, plan: Sequence[Term] = DEFAULT_MODEL, *, splines=None,
                 column_means=None, center=True) -> DesignMatrix:
    """Expand raw covariates into a centred design matrix.

    Knots are placed from the data unless ``splines`` supplies them; when
    ``column_means`` is given the matrix is centred on those instead of the
    sample means, which is how a stored model re-encodes new data.
    """
    n = _n_rows(rows)
    if n == 0:
        raise InvalidInputError("cannot build a design from zero rows")
    refit = splines is None
    splines = dict(splines or {})
    columns, blocks = [], []
    ranges, references = {}, {}
    for term in plan:
        raw = column_of(rows, term.name)
        if raw.shape != (n,) or not np.all(np.isfinite(raw)):
            raise InvalidInputError(f"covariate {term.name!r} has missing or non-finite values")
        if term.kind == "rcs":
            if refit:
                splines[term.name] = make_spline_spec(raw, term.knots, term.pre_transform, term.name)
            spec = splines[term.name]
            kinds = ["linear"] + [f"spline-{j}" for j in range(1, spec.n_columns)]
        elif term.kind == "binary":
            kinds = ["binary"]
        else:
            kinds = ["linear"]
        block = _encode(term, raw, splines.get(term.name))
        if column_means is None and np.any(np.ptp(block, axis=0) == 0):
            raise DegenerateCovariateError(term.name, f"covariate {term.name!r} is constant")
        blocks.append(block)
        columns.extend((term.name, k) for k in kinds)
        ranges[term.name] = (float(raw.min()), float(raw.max()))
        references[term.name] = 0.0 if term.kind == "binary" else float(np.median(raw))

    x = np.column_stack(blocks)
    if column_means is not None:
        means = np.asarray(column_means, dtype=float)
        if means.shape != (x.shape[1],):
            raise InvalidInputError("column_means does not match the design width")
    else:
        means = x.mean(axis=0) if center else np.zeros(x.shape[1])
    values = x - means
    values.setflags(write=False)
    return DesignMatrix(tuple(columns), values, means, tuple(plan), splines, ranges, references)


class _RiskSets:
    """Sorted-time bookkeeping shared by every likelihood evaluation."""

    def __init__(self, x, time, event):
        order = np.argsort(time, kind="stable")
        self.x = x[order]
        self.time = time[order]
        self.event = event[order]
        self.order = order
        ev = np.flatnonzero(self.event)
        self.ev = ev
        ev_time = self.time[ev]
        self.group_time, first, counts = np.unique(ev_time, return_index=True, return_counts=True)
        self.group_first = first
        self.group_size = counts
        self.risk_start = np.searchsorted(self.time, self.group_time, side="left")
        # per event: its tie group and rank within the group
        self.gi = np.repeat(np.arange(counts.size), counts)
        self.rank = np.arange(ev.size) - first[self.gi]


def _reverse_cumsum(a):
    return np.cumsum(a[::-1], axis=0)[::-1]


def _efron_pieces(rs: _RiskSets, beta, ties="efron", second=True):
    x = rs.x
    eta = x @ beta
    shift = eta.max()
    w = np.exp(eta - shift)
    ev = rs.ev
    gi = rs.gi

    s0 = _reverse_cumsum(w)[rs.risk_start]
    wx = w[:, None] * x
    s1 = _reverse_cumsum(wx)[rs.risk_start]
    d0 = np.add.reduceat(w[ev], rs.group_first)
    d1 = np.add.reduceat(wx[ev], rs.group_first, axis=0)
    if ties == "efron":
        frac = rs.rank / rs.group_size[gi]
    elif ties == "breslow":
        frac = np.zeros(ev.size)
    else:
        raise InvalidInputError(f"unknown tie method {ties!r}")

    den0 = s0[gi] - frac * d0[gi]
    den1 = s1[gi] - frac[:, None] * d1[gi]
    mean = den1 / den0[:, None]
    out = {"eta": eta, "shift": shift, "den0": den0, "mean": mean}
    if second:
        wxx = wx[:, :, None] * x[:, None, :]
        s2 = _reverse_cumsum(wxx)[rs.risk_start]
        d2 = np.add.reduceat(wxx[ev], rs.group_first, axis=0)
        den2 = s2[gi] - frac[:, None, None] * d2[gi]
        out["second"] = den2 / den0[:, None, None]
    return out


def log_partial_likelihood(x, time, event, beta, ties="efron", derivatives=True):
    """Log partial likelihood and, optionally, its score and information.

    Returns ``loglik`` or ``(loglik, score, information)`` where information
    is the negative Hessian.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    rs = _RiskSets(x, np.asarray(time, dtype=float), np.asarray(event, dtype=bool))
    return _evaluate(rs, np.asarray(beta, dtype=float), ties, derivatives)


def _evaluate(rs, beta, ties, derivatives=True):
    p = _efron_pieces(rs, beta, ties, second=derivatives)
    ll = float(np.sum(p["eta"][rs.ev] - p["shift"]) - np.sum(np.log(p["den0"])))
    if not derivatives:
        return ll
    mean = p["mean"]
    score = rs.x[rs.ev].sum(axis=0) - mean.sum(axis=0)
    info = p["second"].sum(axis=0) - mean.T @ mean
    return ll, score, (info + info.T) / 2


@dataclass(frozen=True)
class CoxFit:
    beta: np.ndarray
    covariance: np.ndarray
    log_partial_likelihood: float
    iterations: int
    converged: bool
    design: DesignMatrix
    time: np.ndarray
    event: np.ndarray
    ties: str = "efron"
    loglik_trace: tuple = ()
    null_log_partial_likelihood: float = float("nan")
    baseline: Optional[tuple] = None  # (event times, cumulative hazard)

    @property
    def std_errors(self):
        return np.sqrt(np.diag(self.covariance))

    def linear_predictor(self, x=None):
        x = self.design.values if x is None else x
        return x @ self.beta

    def with_baseline(self) -> "CoxFit":
        return replace(self, baseline=baseline_cumulative_hazard(self))


def cox_fit(design, time, event, ties="efron", tol=1e-9, max_iter=50,
            max_halvings=20, beta0=None) -> CoxFit:
    """Fit a Cox model by Newton-Raphson with step-halving.

    Iteration stops once the relative change in log partial likelihood drops
    below ``tol``; a fit that hits ``max_iter`` is returned with
    ``converged=False``. ``design`` may be a :class:`DesignMatrix` or a raw
    array, which is wrapped as linear centred columns.
    """
    if not isinstance(design, DesignMatrix):
        design = DesignMatrix.from_array(design)
    x = np.asarray(design.values, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(bool)
    n, p = x.shape
    if time.shape != (n,) or event.shape != (n,):
        raise InvalidInputError("time and event must match the design rows")
    if not np.all(np.isfinite(time)) or np.any(time < 0):
        raise InvalidInputError("survival times must be finite and non-negative")
    if n < p + 1:
        raise InvalidInputError(f"need at least p + 1 = {p + 1} rows, got {n}")
    if not event.any():
        raise InvalidInputError("cannot fit a Cox model without events")

    rs = _RiskSets(x, time, event)
    beta = np.zeros(p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    ll, score, info = _evaluate(rs, beta, ties)
    null_ll = ll if beta0 is None else _evaluate(rs, np.zeros(p), ties, False)
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= 1e-10 * max(eig[-1], 1e-300):
        raise NonIdentifiableError("information matrix is singular; covariates are collinear")

    trace = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise NonIdentifiableError("information matrix became singular") from None
        for _ in range(max_halvings + 1):
            cand = beta + step
            ll_new = _evaluate(rs, cand, ties, derivatives=False)
            if np.isfinite(ll_new) and ll_new >= ll:
                break
            step = step / 2
        else:
            # no ascent left to take: rounding noise at the optimum
            converged = abs(ll_new - ll) <= tol * max(abs(ll), 1.0)
            break
        beta = cand
        change = ll_new - ll
        ll, score, info = _evaluate(rs, beta, ties)
        trace.append(ll)
        if change <= tol * max(abs(ll), 1.0):
            converged = True
            break

    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        raise NonIdentifiableError("information matrix is singular at the optimum") from None
    if converged:
        # monotone likelihood (separation): the log likelihood flattens while a
        # coefficient keeps running off to infinity, so Newton still wants a
        # sizeable step once the stopping rule fires
        remaining = np.abs(cov @ score) * x.std(axis=0)
        if np.any(remaining > _DIVERGENCE_STEP):
            log.warning("coefficients %s appear infinite; fit marked as not converged",
                        [design.names[j] for j in np.flatnonzero(remaining > _DIVERGENCE_STEP)])
            converged = False
    cov = (cov + cov.T) / 2
    beta.setflags(write=False)
    cov.setflags(write=False)
    return CoxFit(beta, cov, ll, iterations, converged, design, time, event,
                  ties, tuple(trace), null_ll)


def baseline_cumulative_hazard(fit: CoxFit):
    """Breslow-type baseline cumulative hazard with the Efron adjustment.

    The baseline refers to a subject at the column means (the centring
    point), so ``exp(-H0(t) * exp(x_c' beta))`` is the survival of a subject
    with centred covariates ``x_c``.
    """
    rs = _RiskSets(np.asarray(fit.design.values), fit.time, fit.event)
    p = _efron_pieces(rs, np.asarray(fit.beta), fit.ties, second=False)
    contrib = np.exp(-p["shift"]) / p["den0"]
    dh = np.bincount(rs.gi, weights=contrib, minlength=rs.group_time.size)
    return rs.group_time.copy(), np.cumsum(dh)


def schoenfeld_residuals(fit: CoxFit, time=None, event=None):
    """Unscaled Schoenfeld residuals, one row per event in time order.

    Each row is the event subject's centred covariates minus the Efron
    weighted risk-set average for its tie group. Returns ``(event_times,
    residuals)``.
    """
    time = fit.time if time is None else np.asarray(time, dtype=float)
    event = fit.event if event is None else np.asarray(event).astype(bool)
    rs = _RiskSets(np.asarray(fit.design.values), time, event)
    p = _efron_pieces(rs, np.asarray(fit.beta), fit.ties, second=False)
    sums = np.zeros((rs.group_time.size, rs.x.shape[1]))
    np.add.at(sums, rs.gi, p["mean"])
    group_mean = sums / rs.group_size[:, None]
    resid = rs.x[rs.ev] - group_mean[rs.gi]
    return rs.time[rs.ev], resid
