"""Slow, loop-based reference computations used to check the fast code paths.

Nothing here imports qasurv.
"""

import math

import numpy as np


def km_brute_force(time, event):
    """Product-limit estimate by direct counting at each distinct event time."""
    out = []
    s = 1.0
    green = 0.0
    for t in sorted(set(float(v) for v, e in zip(time, event) if e)):
        n = sum(1 for v in time if v >= t)
        d = sum(1 for v, e in zip(time, event) if e and v == t)
        s *= 1.0 - d / n
        green = green + d / (n * (n - d)) if n > d else math.inf
        out.append((t, n, d, s, green))
    return out


def logrank_two_group(time, event, group, first):
    """Two-sample log-rank chi-square by accumulating one 2x2 table per
    distinct event time."""
    o_minus_e = 0.0
    var = 0.0
    for t in sorted(set(float(v) for v, e in zip(time, event) if e)):
        n1 = n2 = d1 = d2 = 0
        for v, e, g in zip(time, event, group):
            if v >= t:
                if g == first:
                    n1 += 1
                    d1 += int(bool(e) and v == t)
                else:
                    n2 += 1
                    d2 += int(bool(e) and v == t)
        n, d = n1 + n2, d1 + d2
        o_minus_e += d1 - d * n1 / n
        if n > 1:
            var += n1 * n2 * d * (n - d) / (n * n * (n - 1))
    return o_minus_e ** 2 / var


def gamma_q(a, x):
    """Regularized upper incomplete gamma Q(a, x): series for x < a + 1,
    Lentz continued fraction otherwise."""
    if x == 0:
        return 1.0
    log_pre = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1:
        term = total = 1.0 / a
        ap = a
        for _ in range(10000):
            ap += 1
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return 1.0 - total * math.exp(log_pre)
    tiny = 1e-300
    b = x + 1 - a
    c = 1 / tiny
    d = 1 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < 1e-17:
            break
    return math.exp(log_pre) * h


def chi2_sf(x, df):
    return gamma_q(df / 2.0, x / 2.0)


def partial_loglik_no_ties(beta, x, time, event):
    """Cox log partial likelihood for one covariate, distinct event times."""
    total = 0.0
    for i in range(len(time)):
        if not event[i]:
            continue
        risk = sum(math.exp(beta * x[j]) for j in range(len(time)) if time[j] >= time[i])
        total += beta * x[i] - math.log(risk)
    return total


def golden_max(f, lo, hi, tol=1e-10):
    """Maximise a unimodal function on [lo, hi] after a coarse grid scan."""
    grid = np.linspace(lo, hi, 2001)
    vals = [f(g) for g in grid]
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    r = (math.sqrt(5) - 1) / 2
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = f(d)
    return (a + b) / 2


def empirical_quantile(values, q):
    """Linear-interpolation quantile (Hyndman-Fan type 7) by hand."""
    v = sorted(values)
    h = (len(v) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (h - lo) * (v[hi] - v[lo])


def grid_max(f, lo, hi, points=2001, tol=1e-8):
    """Maximise ``f`` by repeated grid scans, each refining around the best
    point of the previous one until the spacing drops below ``tol``."""
    while True:
        grid = np.linspace(lo, hi, points)
        k = int(np.argmax([f(g) for g in grid]))
        step = grid[1] - grid[0]
        if step < tol:
            return float(grid[k])
        lo, hi = grid[k] - step, grid[k] + step
        points = 201
