import dataclasses

import numpy as np
import pytest

from simulate import exponential_ph, sign_flip
from qasurv import (DEFAULT_MODEL, InvalidInputError, InvalidStateError, Term, build_design,
                    cox_fit, effect_curve, hazard_ratio_summary, schoenfeld_test)
from qasurv.inference import effect_grid


def question_data(seed, n=1500):
    """Synthetic questions with effects on bodylength, sumpeople and hasexample."""
    rng = np.random.default_rng(seed)
    rows = {
        "zscore": rng.normal(0, 2, n),
        "bodylength": rng.lognormal(6.5, 0.8, n).round() + 1,
        "titlelength": rng.integers(15, 150, n).astype(float),
        "hasexample": (rng.random(n) < 0.4).astype(float),
        "tagscount": rng.integers(1, 6, n).astype(float),
        "sumpeople": rng.lognormal(9, 1.2, n).round() + 1,
    }
    lp = (-0.3 * np.log(rows["bodylength"]) + 0.25 * np.log(rows["sumpeople"])
          - 0.35 * rows["hasexample"] - 0.05 * rows["tagscount"])
    t = rng.exponential(60 / np.exp(lp - lp.mean()))
    c = rng.exponential(300, n)
    return rows, np.minimum(t, c), t <= c


@pytest.fixture(scope="module")
def model_fit():
    rows, t, e = question_data(1)
    return rows, cox_fit(build_design(rows, DEFAULT_MODEL), t, e)


def test_hazard_ratio_summary_shape(model_fit):
    rows, fit = model_fit
    hr = hazard_ratio_summary(fit, rows)
    assert [r.covariate for r in hr.per_covariate] == [t.name for t in DEFAULT_MODEL]
    assert hr["bodylength"].hazard_ratio < 1
    assert hr["sumpeople"].hazard_ratio > 1
    assert hr["hasexample"].hazard_ratio < 1
    assert (hr["hasexample"].low, hr["hasexample"].high) == (0.0, 1.0)
    q1, q3 = np.percentile(rows["bodylength"], [25, 75])
    assert (hr["bodylength"].low, hr["bodylength"].high) == (q1, q3)


def test_intervals_are_nested(model_fit):
    rows, fit = model_fit
    for r in hazard_ratio_summary(fit, rows).per_covariate:
        (a90, b90), (a95, b95), (a99, b99) = (r.intervals[lv] for lv in (0.90, 0.95, 0.99))
        assert a99 <= a95 <= a90 <= r.hazard_ratio <= b90 <= b95 <= b99
        assert r.hazard_ratio > 0


def test_hazard_ratio_combines_spline_columns(model_fit):
    rows, fit = model_fit
    d = fit.design
    sl = d.term_slice("sumpeople")
    q1, q3 = np.percentile(rows["sumpeople"], [25, 75])
    basis = d.splines["sumpeople"].transform([q1, q3])
    delta = basis[1] - basis[0]
    est = delta @ fit.beta[sl]
    se = np.sqrt(delta @ fit.covariance[sl, sl] @ delta)
    r = hazard_ratio_summary(fit, rows)["sumpeople"]
    assert r.hazard_ratio == pytest.approx(np.exp(est), rel=1e-12)
    assert r.intervals[0.95][1] == pytest.approx(np.exp(est + 1.959963984540054 * se), rel=1e-9)


def test_zero_beta_gives_unit_ratios(model_fit):
    rows, fit = model_fit
    flat = dataclasses.replace(fit, beta=np.zeros_like(fit.beta))
    for r in hazard_ratio_summary(flat, rows).per_covariate:
        assert r.hazard_ratio == 1.0
        for lo, hi in r.intervals.values():
            assert lo <= 1.0 <= hi


def test_non_converged_fit_is_rejected(model_fit):
    rows, fit = model_fit
    stale = dataclasses.replace(fit, converged=False)
    with pytest.raises(InvalidStateError):
        hazard_ratio_summary(stale, rows)
    with pytest.raises(InvalidStateError):
        schoenfeld_test(stale)
    with pytest.raises(InvalidStateError):
        effect_curve(stale, "zscore", [0.0])


def test_effect_curve_self_contrast(model_fit):
    _, fit = model_fit
    ref = fit.design.references["bodylength"]
    curve = effect_curve(fit, "bodylength", [ref])
    assert curve.log_hr[0] == 0.0
    assert curve.lower[0] <= 0.0 <= curve.upper[0]


def test_effect_curve_shape(model_fit):
    rows, fit = model_fit
    grid = effect_grid(fit, rows, "bodylength", 50)
    curve = effect_curve(fit, "bodylength", grid)
    # simulated effect is -0.3 * log(bodylength): decreasing on the log scale
    assert curve.log_hr[0] > 0 > curve.log_hr[-1]
    assert np.all(curve.lower <= curve.log_hr) and np.all(curve.log_hr <= curve.upper)
    np.testing.assert_allclose(curve.x, grid)


def test_effect_curve_errors(model_fit):
    _, fit = model_fit
    with pytest.raises(InvalidInputError):
        effect_curve(fit, "views", [1.0])
    with pytest.raises(InvalidInputError):
        effect_curve(fit, "bodylength", [fit.design.ranges["bodylength"][1] * 10])


@pytest.mark.parametrize("name", ["zscore", "bodylength", "tagscount"])
def test_rescaling_a_covariate_leaves_ratios_and_effects_unchanged(name):
    rows, t, e = question_data(3, n=800)
    c = 37.5
    scaled = dict(rows)
    scaled[name] = rows[name] * c
    fit_a = cox_fit(build_design(rows, DEFAULT_MODEL), t, e)
    fit_b = cox_fit(build_design(scaled, DEFAULT_MODEL), t, e)
    lin = fit_a.design.term_slice(name).start
    # a log term only shifts under rescaling, so its coefficient is unchanged
    factor = 1.0 if fit_a.design.term(name).pre_transform == "log" else c
    assert fit_b.beta[lin] == pytest.approx(fit_a.beta[lin] / factor, rel=1e-6)
    hr_a = hazard_ratio_summary(fit_a, rows)
    hr_b = hazard_ratio_summary(fit_b, scaled)
    for ra, rb in zip(hr_a.per_covariate, hr_b.per_covariate):
        assert rb.hazard_ratio == pytest.approx(ra.hazard_ratio, rel=1e-6)
        assert rb.intervals[0.95][0] == pytest.approx(ra.intervals[0.95][0], rel=1e-6)
    grid = effect_grid(fit_a, rows, name, 25)
    ca = effect_curve(fit_a, name, grid)
    cb = effect_curve(fit_b, name, grid * c)
    np.testing.assert_allclose(cb.log_hr, ca.log_hr, atol=1e-6)
    np.testing.assert_allclose(cb.upper, ca.upper, atol=1e-6)


def test_effect_band_covers_quadratic_truth():
    # true log hazard is 0.2 * (log x - 5)^2; check pointwise band coverage
    hits = total = 0
    for seed in range(100):
        rng = np.random.default_rng(500 + seed)
        x = np.exp(rng.normal(5, 0.7, 600))
        f = 0.2 * (np.log(x) - 5) ** 2
        t = rng.exponential(1 / np.exp(f))
        fit = cox_fit(build_design({"x": x}, [Term("x", "rcs", "log")]), t, np.ones(600, bool))
        grid = np.exp(np.linspace(*np.quantile(np.log(x), [0.1, 0.9]), 15))
        curve = effect_curve(fit, "x", grid)
        truth = 0.2 * ((np.log(grid) - 5) ** 2 - (np.log(curve.reference) - 5) ** 2)
        hits += np.sum((curve.lower <= truth) & (truth <= curve.upper))
        total += grid.size
    assert hits / total >= 0.90


def test_schoenfeld_rows_per_covariate(model_fit):
    _, fit = model_fit
    diag = schoenfeld_test(fit)
    assert [r.covariate for r in diag.per_covariate] == [t.name for t in DEFAULT_MODEL]
    assert [r.df for r in diag.per_covariate] == [2, 2, 2, 1, 1, 2]
    assert len(diag.per_column) == 10
    assert diag.global_test.df == 10
    for r in diag.per_covariate + diag.per_column + [diag.global_test]:
        assert 0 <= r.p_value <= 1 and r.chi_square >= 0
    zs = diag.per_column[0:2]
    assert diag.per_covariate[0].chi_square == pytest.approx(zs[0].chi_square + zs[1].chi_square)
    assert "GLOBAL" in diag.table()


@pytest.mark.parametrize("transform", ["identity", "km", "rank", "log"])
def test_schoenfeld_transforms(transform):
    rng = np.random.default_rng(42)
    x, t, e = exponential_ph(rng, 300, [0.5, 0.2], censor_rate=0.3)
    diag = schoenfeld_test(cox_fit(x, t, e), transform=transform)
    assert diag.time_transform == transform
    assert 0 <= diag.global_test.p_value <= 1


def test_schoenfeld_single_column_matches_global():
    rng = np.random.default_rng(8)
    x, t, e = exponential_ph(rng, 400, [0.6], censor_rate=0.2)
    diag = schoenfeld_test(cox_fit(x, t, e))
    assert diag.per_column[0].chi_square == pytest.approx(diag.global_test.chi_square, rel=1e-10)


def test_schoenfeld_detects_sign_flip():
    rng = np.random.default_rng(77)
    x, t, e = sign_flip(rng, 1000)
    assert schoenfeld_test(cox_fit(x, t, e)).global_test.p_value < 0.01


def test_schoenfeld_unknown_transform():
    rng = np.random.default_rng(0)
    x, t, e = exponential_ph(rng, 50, [0.2])
    with pytest.raises(InvalidInputError):
        schoenfeld_test(cox_fit(x, t, e), transform="sqrt")
