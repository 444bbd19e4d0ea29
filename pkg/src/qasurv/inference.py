"""Post-fit summaries for Cox models.

Hazard ratios over inter-quartile contrasts, effect curves on the original
covariate scale, and the scaled-Schoenfeld test of proportional hazards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .cox import CoxFit, column_of, schoenfeld_residuals
from .errors import InvalidInputError, InvalidStateError
from .splines import invert_pre_transform
from .survival import chi_square_sf, km_fit

DEFAULT_LEVELS = (0.90, 0.95, 0.99)
TIME_TRANSFORMS = ("identity", "km", "rank", "log")


def _require_converged(fit: CoxFit):
    if not fit.converged:
        raise InvalidStateError("the Cox fit did not converge")


def _z(level):
    return float(stats.norm.ppf(0.5 + level / 2))


def _contrast(fit: CoxFit, name, low, high):
    design = fit.design
    sl = design.term_slice(name)
    delta = np.zeros(fit.beta.size)
    delta[sl] = design.encode_term(name, high)[0] - design.encode_term(name, low)[0]
    return delta


@dataclass(frozen=True)
class HazardRatio:
    covariate: str
    low: float
    high: float
    log_hr: float
    se: float
    hazard_ratio: float
    intervals: dict  # level -> (lower, upper) on the hazard-ratio scale

    @property
    def contrast(self) -> str:
        return f"{self.high:g}:{self.low:g}"


@dataclass(frozen=True)
class HazardRatioSummary:
    per_covariate: list
    levels: tuple

    def __getitem__(self, name) -> HazardRatio:
        for row in self.per_covariate:
            if row.covariate == name:
                return row
        raise KeyError(name)


def hazard_ratio_summary(fit: CoxFit, rows, levels=DEFAULT_LEVELS) -> HazardRatioSummary:
    """Hazard ratio of each covariate between its upper and lower quartile.

    Binary covariates compare the two categories (1 against 0). The contrast
    spans every column of a spline-expanded covariate, so linear and
    non-linear parts are combined into one Wald interval per level.
    """
    _require_converged(fit)
    levels = tuple(sorted(levels))
    beta = np.asarray(fit.beta)
    cov = np.asarray(fit.covariance)
    out = []
    for term in fit.design.terms:
        if term.kind == "binary":
            low, high = 0.0, 1.0
        else:
            raw = column_of(rows, term.name)
            low, high = (float(v) for v in np.percentile(raw, [25, 75]))
        delta = _contrast(fit, term.name, low, high)
        est = float(delta @ beta)
        se = float(np.sqrt(max(delta @ cov @ delta, 0.0)))
        intervals = {lv: (float(np.exp(est - _z(lv) * se)), float(np.exp(est + _z(lv) * se)))
                     for lv in levels}
        out.append(HazardRatio(term.name, low, high, est, se, float(np.exp(est)), intervals))
    return HazardRatioSummary(out, levels)


@dataclass(frozen=True)
class EffectCurve:
    covariate: str
    reference: float
    level: float
    x: np.ndarray
    log_hr: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def rows(self):
        return list(zip(self.x.tolist(), self.log_hr.tolist(),
                        self.lower.tolist(), self.upper.tolist()))


def effect_curve(fit: CoxFit, covariate: str, grid, level: float = 0.95) -> EffectCurve:
    """Log hazard ratio of ``covariate`` along ``grid`` against its median.

    Grid values are on the original (untransformed) scale and must lie in
    the observed range of the covariate.
    """
    _require_converged(fit)
    design = fit.design
    design.term(covariate)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    lo, hi = design.ranges[covariate]
    slack = 1e-9 * max(abs(lo), abs(hi), 1.0)
    if np.any(grid < lo - slack) or np.any(grid > hi + slack):
        raise InvalidInputError(f"grid for {covariate!r} leaves the observed range [{lo}, {hi}]")
    ref = design.references[covariate]
    sl = design.term_slice(covariate)
    delta = design.encode_term(covariate, grid) - design.encode_term(covariate, ref)
    b = np.asarray(fit.beta)[sl]
    v = np.asarray(fit.covariance)[sl, sl]
    est = delta @ b
    se = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", delta, v, delta), 0.0))
    z = _z(level)
    return EffectCurve(covariate, ref, level, grid, est, est - z * se, est + z * se)


def effect_grid(fit: CoxFit, rows, covariate: str, points: int = 100):
    """Grid over the 1st-99th percentile range on the original scale.

    Spline covariates with a log pre-transform are spaced evenly on the log
    scale and mapped back.
    """
    term = fit.design.term(covariate)
    if term.kind == "binary":
        return np.array([0.0, 1.0])
    raw = column_of(rows, covariate)
    lo, hi = np.percentile(raw, [1, 99])
    if term.pre_transform == "log":
        return invert_pre_transform(np.linspace(np.log(lo), np.log(hi), points), "log")
    return np.linspace(lo, hi, points)


@dataclass(frozen=True)
class PHRow:
    covariate: str
    rho: float
    chi_square: float
    df: int
    p_value: float


@dataclass(frozen=True)
class PHDiagnostics:
    per_covariate: list
    per_column: list
    global_test: PHRow
    time_transform: str

    def table(self) -> str:
        """Text table in the layout of R's ``cox.zph`` print method."""
        width = max(len(r.covariate) for r in self.per_covariate + [self.global_test])
        lines = [f"{'':<{width}} {'rho':>9} {'chisq':>8} {'p':>8}"]
        for r in self.per_covariate + [self.global_test]:
            rho = "NA" if np.isnan(r.rho) else f"{r.rho:.5f}"
            lines.append(f"{r.covariate:<{width}} {rho:>9} {r.chi_square:>8.3f} {r.p_value:>8.3f}")
        return "\n".join(lines)


def _transform_times(fit: CoxFit, time, event, event_times, kind):
    if kind == "identity":
        return event_times
    if kind == "log":
        if np.any(event_times <= 0):
            raise InvalidInputError("log time transform needs positive event times")
        return np.log(event_times)
    if kind == "rank":
        return stats.rankdata(event_times)
    if kind == "km":
        curve = km_fit(time, event)
        # left-continuous KM at each event time: the value just before it
        idx = np.searchsorted(curve.time, event_times, side="left")
        before = np.concatenate(([1.0], curve.survival))[idx]
        return 1.0 - before
    raise InvalidInputError(f"unknown time transform {kind!r}; choose from {TIME_TRANSFORMS}")


def schoenfeld_test(fit: CoxFit, time=None, event=None, transform: str = "km") -> PHDiagnostics:
    """Test proportional hazards with scaled Schoenfeld residuals.

    Residuals are scaled by ``d * covariance`` (``d`` = number of events)
    and correlated with the transformed event times. Each column gets a
    one-degree-of-freedom score test for zero slope and the global test
    uses all columns jointly. Spline columns of one covariate are pooled by
    summing their chi-squares; the reported rho is that of the linear column.
    """
    _require_converged(fit)
    time = fit.time if time is None else np.asarray(time, dtype=float)
    event = fit.event if event is None else np.asarray(event).astype(bool)
    if event.sum() < 2:
        raise InvalidInputError("need at least two events for the PH test")
    event_times, resid = schoenfeld_residuals(fit, time, event)
    tt = _transform_times(fit, time, event, event_times, transform)
    xx = tt - tt.mean()
    sxx = float(xx @ xx)
    if sxx == 0:
        raise InvalidInputError("transformed event times are constant")
    cov = np.asarray(fit.covariance)
    ndead = resid.shape[0]
    scaled = resid @ cov * ndead

    test = xx @ scaled
    chi = test ** 2 / (np.diag(cov) * ndead * sxx)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.array([np.corrcoef(xx, scaled[:, j])[0, 1] for j in range(scaled.shape[1])])

    names = fit.design.names
    per_column = [PHRow(names[j], float(rho[j]), float(chi[j]), 1, chi_square_sf(float(chi[j]), 1))
                  for j in range(chi.size)]
    per_covariate = []
    for term in fit.design.terms:
        sl = fit.design.term_slice(term.name)
        total = float(chi[sl].sum())
        df = sl.stop - sl.start
        per_covariate.append(PHRow(term.name, float(rho[sl.start]), total, df,
                                   chi_square_sf(total, df)))

    u = xx @ resid
    g = float(u @ cov @ u) * ndead / sxx
    p = cov.shape[0]
    global_row = PHRow("GLOBAL", float("nan"), g, p, chi_square_sf(max(g, 0.0), p))
    return PHDiagnostics(per_covariate, per_column, global_row, transform)
