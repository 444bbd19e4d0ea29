"""Non-parametric survival estimation for right-censored durations.

Kaplan-Meier product-limit curves with Greenwood variance and log-transformed
confidence bands, median survival with its confidence interval, and the
k-sample log-rank (Mantel-Haenszel) test.

Ties between an event and a censoring at the same time are resolved by
treating the event first, i.e. the censored subject is still at risk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy import special, stats

from .errors import InvalidInputError

# Absorbs rounding in products such as (3/4)*(2/3) when testing S <= 0.5.
_HALF_TOL = 1e-12


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: observed time in minutes, event flag, optional group."""

    time: float
    event: bool
    group: Any = None
    covariates: tuple = ()

    def __post_init__(self):
        if not math.isfinite(self.time) or self.time < 0:
            raise InvalidInputError(f"invalid survival time: {self.time!r}")


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SurvivalCurve:
    """Step-function estimate of S(t).

    Arrays are aligned on the distinct event times. ``variance`` is the
    Greenwood variance of ``log S`` and is ``inf`` at a step where S drops
    to zero. ``median_ci`` bounds are ``None`` when the band never crosses
    0.5 (unbounded on that side).
    """

    time: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    survival: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    confidence_level: float
    n_records: int
    median: Optional[float] = None
    median_ci: tuple = field(default=(None, None))

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    @property
    def steps(self):
        return list(zip(self.time.tolist(), self.at_risk.tolist(),
                        self.events.tolist(), self.survival.tolist(),
                        self.variance.tolist(), self.lower.tolist(),
                        self.upper.tolist()))


@dataclass(frozen=True)
class LogRankResult:
    chi_square: float
    degrees_of_freedom: int
    p_value: float
    per_group: list  # (label, observed, expected)


def as_arrays(data, event=None, group=None):
    """Normalise survival input into ``(time, event, group)`` arrays.

    ``data`` is either a sequence of :class:`SurvivalRecord` or an array of
    times, in which case ``event`` (and optionally ``group``) give the
    remaining columns.
    """
    if event is None:
        records = list(data)
        if records and not isinstance(records[0], SurvivalRecord):
            raise InvalidInputError("event indicators are required with raw times")
        time = np.array([r.time for r in records], dtype=float)
        event = np.array([bool(r.event) for r in records], dtype=bool)
        group = np.array([r.group for r in records], dtype=object)
    else:
        time = np.asarray(data, dtype=float)
        event = np.asarray(event).astype(bool)
        if group is not None:
            group = np.asarray(group, dtype=object)
    if time.ndim != 1 or event.shape != time.shape:
        raise InvalidInputError("time and event must be 1-D arrays of equal length")
    if group is not None and group.shape != time.shape:
        raise InvalidInputError("group must have the same length as time")
    if time.size and (not np.all(np.isfinite(time)) or np.any(time < 0)):
        raise InvalidInputError("survival times must be finite and non-negative")
    return time, event, group


def _first_at_or_below_half(time, values):
    hit = np.flatnonzero(values <= 0.5 + _HALF_TOL)
    return float(time[hit[0]]) if hit.size else None


def km_fit(data, event=None, confidence_level: float = 0.95) -> SurvivalCurve:
    """Kaplan-Meier estimate of the survival function.

    Parameters
    ----------
    data : sequence of SurvivalRecord or array_like
        Records, or observed times when ``event`` is given.
    event : array_like of bool, optional
        ``True`` where the event was observed, ``False`` if right-censored.
    confidence_level : float
        Coverage of the pointwise log-transformed confidence band.
    """
    if not 0 < confidence_level < 1:
        raise InvalidInputError("confidence_level must lie in (0, 1)")
    time, event, _ = as_arrays(data, event)
    if time.size == 0:
        raise InvalidInputError("cannot fit a survival curve to an empty dataset")

    sorted_time = np.sort(time)
    t, d = np.unique(time[event], return_counts=True)
    n = time.size - np.searchsorted(sorted_time, t, side="left")

    surv = np.cumprod(1.0 - d / n)
    with np.errstate(divide="ignore"):
        increments = np.where(n > d, d / (n * np.maximum(n - d, 1)), np.inf)
    var = np.cumsum(increments)

    z = stats.norm.ppf(0.5 + confidence_level / 2)
    positive = surv > 0
    log_s = np.log(np.where(positive, surv, 1.0))
    half_width = z * np.sqrt(np.where(positive, var, 0.0))
    lower = np.where(positive, np.exp(log_s - half_width), 0.0)
    upper = np.where(positive, np.minimum(np.exp(log_s + half_width), 1.0), 0.0)

    median = _first_at_or_below_half(t, surv)
    # the lower band reaches 0.5 first, so it gives the lower time bound
    median_ci = (_first_at_or_below_half(t, lower), _first_at_or_below_half(t, upper))

    return SurvivalCurve(
        time=_frozen(t.astype(float)), at_risk=_frozen(n), events=_frozen(d),
        survival=_frozen(surv), variance=_frozen(var),
        lower=_frozen(lower), upper=_frozen(upper),
        confidence_level=float(confidence_level), n_records=int(time.size),
        median=median, median_ci=median_ci,
    )


def km_survival_at(curve: SurvivalCurve, t):
    """Evaluate the right-continuous step function at ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise InvalidInputError("t must be finite and non-negative")
    idx = np.searchsorted(curve.time, t_arr, side="right") - 1
    padded = np.concatenate(([1.0], curve.survival))
    out = padded[idx + 1]
    return float(out) if out.ndim == 0 else out


def logrank_test(data, event=None, group=None) -> LogRankResult:
    """k-sample log-rank test for equality of survival curves.

    The statistic is ``u' V^-1 u`` where ``u`` holds observed minus expected
    events for all groups but the last and ``V`` is the hypergeometric
    covariance of those counts, accumulated over distinct event times.
    """
    time, event, group = as_arrays(data, event, group)
    if group is None:
        raise InvalidInputError("group labels are required")
    labels = sorted(set(group.tolist()), key=lambda g: (str(type(g)), g))
    if len(labels) < 2:
        raise InvalidInputError("log-rank test needs at least two groups")
    if not event.any():
        raise InvalidInputError("log-rank test needs at least one event")

    t = np.unique(time[event])
    k, m = len(labels), t.size
    at_risk = np.empty((k, m))
    observed = np.empty((k, m))
    for g, label in enumerate(labels):
        mask = group == label
        tg = np.sort(time[mask])
        eg = np.sort(time[mask & event])
        at_risk[g] = tg.size - np.searchsorted(tg, t, side="left")
        observed[g] = (np.searchsorted(eg, t, side="right")
                       - np.searchsorted(eg, t, side="left"))

    n = at_risk.sum(axis=0)
    d = observed.sum(axis=0)
    frac = at_risk / n
    expected = (d * frac).sum(axis=1)
    obs = observed.sum(axis=1)

    w = np.zeros(m)
    multi = n > 1
    w[multi] = d[multi] * (n[multi] - d[multi]) / (n[multi] - 1)
    cov = np.diag((w * frac).sum(axis=1)) - np.einsum("m,gm,hm->gh", w, frac, frac)

    u = (obs - expected)[:-1]
    v = cov[:-1, :-1]
    try:
        chi2 = float(u @ np.linalg.solve(v, u))
    except np.linalg.LinAlgError:
        # a group with nobody at risk at any event time leaves V singular
        chi2 = float(u @ np.linalg.pinv(v) @ u)
    chi2 = max(chi2, 0.0)
    df = k - 1
    per_group = [(label, float(o), float(e)) for label, o, e in zip(labels, obs, expected)]
    return LogRankResult(chi2, df, chi_square_sf(chi2, df), per_group)


def chi_square_sf(x: float, df: float) -> float:
    """Upper tail probability of the chi-square distribution.

    Evaluated as the regularized upper incomplete gamma function
    ``Q(df/2, x/2)``.
    """
    if not (x >= 0) or not math.isfinite(x):
        raise InvalidInputError(f"x must be finite and non-negative, got {x!r}")
    if not df >= 1:
        raise InvalidInputError(f"degrees of freedom must be >= 1, got {df!r}")
    if x == 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))

