"""Restricted cubic spline (natural spline) covariate transforms.

Knots default to Harrell's quantile placement. The basis uses the truncated
power form, linear below the first and above the last knot, with every cubic
term divided by ``(t_k - t_1)**2`` so spline columns share the scale of the
linear column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovariateError, DomainError, InvalidInputError

HARRELL_QUANTILES = {
    3: (0.10, 0.50, 0.90),
    4: (0.05, 0.35, 0.65, 0.95),
    5: (0.05, 0.275, 0.50, 0.725, 0.95),
}

PRE_TRANSFORMS = ("identity", "log")


def apply_pre_transform(values, pre_transform: str, name: str = "x"):
    values = np.asarray(values, dtype=float)
    if pre_transform == "identity":
        return values
    if pre_transform == "log":
        if np.any(values <= 0):
            raise DomainError(f"log transform of non-positive {name} value")
        return np.log(values)
    raise InvalidInputError(f"unknown pre_transform {pre_transform!r}")


def invert_pre_transform(values, pre_transform: str):
    values = np.asarray(values, dtype=float)
    return np.exp(values) if pre_transform == "log" else values


@dataclass(frozen=True)
class SplineSpec:
    knots: tuple
    source_covariate: str = "x"
    pre_transform: str = "identity"

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        if len(knots) < 3:
            raise InvalidInputError("a restricted cubic spline needs at least 3 knots")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise DegenerateCovariateError(self.source_covariate,
                                           f"knots for {self.source_covariate!r} are not strictly increasing")
        if self.pre_transform not in PRE_TRANSFORMS:
            raise InvalidInputError(f"unknown pre_transform {self.pre_transform!r}")
        object.__setattr__(self, "knots", knots)

    @property
    def n_columns(self) -> int:
        return len(self.knots) - 1

    def transform(self, raw):
        """Pre-transform raw values then expand them into the basis."""
        x = apply_pre_transform(raw, self.pre_transform, self.source_covariate)
        return spline_basis(self, x)


def make_spline_spec(values, k: int = 3, pre_transform: str = "identity",
                     name: str = "x") -> SplineSpec:
    """Place ``k`` knots at Harrell's default quantiles of ``values``."""
    if k not in HARRELL_QUANTILES:
        raise InvalidInputError(f"k must be one of 3, 4, 5, got {k!r}")
    x = apply_pre_transform(values, pre_transform, name)
    x = x[np.isfinite(x)]
    if np.unique(x).size < k:
        raise DegenerateCovariateError(name, f"{name!r} has fewer than {k} distinct values")
    knots = np.quantile(x, HARRELL_QUANTILES[k])
    if np.any(np.diff(knots) <= 0):
        raise DegenerateCovariateError(name, f"duplicate spline knots for {name!r}")
    return SplineSpec(tuple(knots.tolist()), name, pre_transform)


def spline_basis(spec: SplineSpec, x):
    """Evaluate the ``k - 1`` basis columns at already pre-transformed ``x``.

    Returns a vector for scalar input, else an ``(n, k - 1)`` matrix.
    """
    t = np.asarray(spec.knots)
    k = t.size
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    if not np.all(np.isfinite(xa)):
        raise InvalidInputError("spline basis needs finite inputs")

    def cube(u):
        return np.maximum(u, 0.0) ** 3

    norm = (t[-1] - t[0]) ** 2
    span = t[-1] - t[-2]
    cols = [xa]
    tail_km1 = cube(xa - t[-2])
    tail_k = cube(xa - t[-1])
    for j in range(k - 2):
        term = (cube(xa - t[j])
                - tail_km1 * (t[-1] - t[j]) / span
                + tail_k * (t[-2] - t[j]) / span)
        cols.append(term / norm)
    out = np.column_stack(cols)
    return out[0] if scalar else out
