"""Minimal SVG 1.1 charts for survival curves, hazard ratios and effects.

Every plotted series is exactly one ``<path>`` element; bands, interval bars
and reference lines use other elements.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape, quoteattr

import numpy as np

WIDTH, HEIGHT = 720, 440
MARGIN = {"left": 70, "right": 170, "top": 40, "bottom": 55}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22")
BLUES = {0.90: "#08306b", 0.95: "#2171b5", 0.99: "#9ecae1"}


def _fmt(v):
    return f"{v:.2f}"


def _tick_label(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}"
    return f"{v:g}"


class _Axes:
    def __init__(self, xlim, ylim, log_x=False, height=HEIGHT):
        self.log_x = log_x
        self.height = height
        self.x0, self.x1 = (math.log10(v) for v in xlim) if log_x else xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1

    def px(self, x):
        x = math.log10(x) if self.log_x else x
        inner = WIDTH - MARGIN["left"] - MARGIN["right"]
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * inner

    def py(self, y):
        inner = self.height - MARGIN["top"] - MARGIN["bottom"]
        return self.height - MARGIN["bottom"] - (y - self.y0) / (self.y1 - self.y0) * inner

    def xticks(self):
        if self.log_x:
            return [10.0 ** e for e in range(math.ceil(self.x0), math.floor(self.x1) + 1)]
        return [float(v) for v in np.linspace(self.x0, self.x1, 6)]

    def yticks(self):
        return [float(v) for v in np.linspace(self.y0, self.y1, 6)]


def _frame(ax: _Axes, title, xlabel, ylabel):
    bottom = ax.height - MARGIN["bottom"]
    right = WIDTH - MARGIN["right"]
    out = [
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{MARGIN["left"]}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"]}" x2="{MARGIN["left"]}" y2="{bottom}" stroke="black"/>',
    ]
    for v in ax.xticks():
        x = _fmt(ax.px(v))
        out.append(f'<line x1="{x}" y1="{bottom}" x2="{x}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{bottom + 19}" text-anchor="middle" font-size="11">{_tick_label(v)}</text>')
    for v in ax.yticks():
        y = _fmt(ax.py(v))
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{y}" x2="{MARGIN["left"]}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{y}" text-anchor="end" '
                   f'dominant-baseline="middle" font-size="11">{v:.2f}</text>')
    out.append(f'<text x="{(MARGIN["left"] + right) / 2:.0f}" y="{ax.height - 12}" '
               f'text-anchor="middle" font-size="13">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(MARGIN["top"] + bottom) / 2:.0f}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 16 {(MARGIN["top"] + bottom) / 2:.0f})">{escape(ylabel)}</text>')
    return out


def _document(body, height=HEIGHT):
    head = (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" '
            f'font-family="Helvetica, Arial, sans-serif">\n'
            f'<rect width="{WIDTH}" height="{height}" fill="white"/>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def _legend(entries):
    out = []
    x = WIDTH - MARGIN["right"] + 15
    for i, (label, color) in enumerate(entries):
        y = MARGIN["top"] + 10 + 18 * i
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 20}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x + 26}" y="{y}" dominant-baseline="middle" font-size="12">{escape(str(label))}</text>')
    return out


def km_svg(series, log_time=False, title="Kaplan-Meier estimates"):
    """Step curves from ``[(label, times, survival), ...]``."""
    all_t = np.concatenate([np.asarray(t, dtype=float) for _, t, _ in series] + [np.zeros(1)])
    t_max = float(all_t.max()) or 1.0
    if log_time:
        positive = all_t[all_t > 0]
        t_min = float(positive.min()) if positive.size else 1.0
        ax = _Axes((t_min, max(t_max, t_min * 10)), (0.0, 1.0), log_x=True)
    else:
        t_min = 0.0
        ax = _Axes((0.0, t_max), (0.0, 1.0))
    body = _frame(ax, title, "time (minutes)" + (", log scale" if log_time else ""), "proportion unsolved")
    legend = []
    for i, (label, times, surv) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        level = 1.0
        start = t_min
        cmds = [f"M{_fmt(ax.px(start))},{_fmt(ax.py(level))}"]
        for t, s in zip(np.asarray(times, dtype=float), np.asarray(surv, dtype=float)):
            t = max(t, t_min)
            cmds.append(f"H{_fmt(ax.px(t))}")
            cmds.append(f"V{_fmt(ax.py(s))}")
            level = s
        cmds.append(f"H{_fmt(ax.px(ax_max(ax)))}")
        body.append(f'<path d="{" ".join(cmds)}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5" data-series={quoteattr(str(label))}/>')
        legend.append((label, color))
    return _document(body + _legend(legend))


def ax_max(ax: _Axes):
    return 10 ** ax.x1 if ax.log_x else ax.x1


def effect_svg(curve, log_x=False):
    """Effect curve with its confidence band and a zero reference line."""
    x = np.asarray(curve.x, dtype=float)
    lo, hi = np.asarray(curve.lower), np.asarray(curve.upper)
    ymin, ymax = float(min(lo.min(), 0.0)), float(max(hi.max(), 0.0))
    pad = 0.05 * (ymax - ymin or 1.0)
    ax = _Axes((float(x.min()), float(x.max())), (ymin - pad, ymax + pad), log_x=log_x)
    body = _frame(ax, f"Effect of {curve.covariate}", curve.covariate, "log hazard ratio")
    band = [f"{_fmt(ax.px(a))},{_fmt(ax.py(b))}" for a, b in zip(x, hi)]
    band += [f"{_fmt(ax.px(a))},{_fmt(ax.py(b))}" for a, b in zip(x[::-1], lo[::-1])]
    body.append(f'<polygon points="{" ".join(band)}" fill="#cccccc" stroke="none"/>')
    zero = _fmt(ax.py(0.0))
    body.append(f'<line x1="{MARGIN["left"]}" y1="{zero}" x2="{WIDTH - MARGIN["right"]}" y2="{zero}" '
                f'stroke="black" stroke-dasharray="4 3"/>')
    cmds = [f"{'M' if i == 0 else 'L'}{_fmt(ax.px(a))},{_fmt(ax.py(b))}"
            for i, (a, b) in enumerate(zip(x, curve.log_hr))]
    body.append(f'<path d="{" ".join(cmds)}" fill="none" stroke="black" stroke-width="1.5" '
                f'data-series={quoteattr(curve.covariate)}/>')
    return _document(body)


def hazard_ratio_svg(summary, title="Hazard ratios (inter-quartile contrasts)"):
    """Point estimates with nested interval bars on a log hazard-ratio axis."""
    rows = summary.per_covariate
    height = MARGIN["top"] + MARGIN["bottom"] + 34 * len(rows)
    values = [v for r in rows for iv in r.intervals.values() for v in iv] + [1.0]
    values = [v for v in values if v > 0 and math.isfinite(v)]
    lo, hi = min(values), max(values)
    ax = _Axes((lo / 1.05, hi * 1.05), (0.0, float(len(rows))), log_x=True, height=height)
    body = [f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>']
    one = _fmt(ax.px(1.0))
    body.append(f'<line x1="{one}" y1="{MARGIN["top"]}" x2="{one}" y2="{height - MARGIN["bottom"]}" '
                f'stroke="black" stroke-dasharray="4 3"/>')
    for i, row in enumerate(rows):
        yc = ax.py(len(rows) - i - 0.5)
        body.append(f'<text x="{MARGIN["left"] - 8}" y="{_fmt(yc)}" text-anchor="end" '
                    f'dominant-baseline="middle" font-size="11">{escape(row.covariate)} '
                    f'{escape(row.contrast)}</text>')
        for level in sorted(row.intervals, reverse=True):
            a, b = row.intervals[level]
            h = {0.99: 6, 0.95: 10}.get(level, 14)
            color = BLUES.get(level, "#6baed6")
            body.append(f'<rect x="{_fmt(ax.px(a))}" y="{_fmt(yc - h / 2)}" '
                        f'width="{_fmt(ax.px(b) - ax.px(a))}" height="{h}" fill="{color}"/>')
        xp = ax.px(row.hazard_ratio)
        body.append(f'<path d="M{_fmt(xp)},{_fmt(yc - 6)} L{_fmt(xp - 5)},{_fmt(yc + 5)} '
                    f'L{_fmt(xp + 5)},{_fmt(yc + 5)} Z" fill="red" data-series={quoteattr(row.covariate)}/>')
    bottom = height - MARGIN["bottom"]
    for v in ax.xticks():
        x = _fmt(ax.px(v))
        body.append(f'<text x="{x}" y="{bottom + 18}" text-anchor="middle" font-size="11">{v:g}</text>')
    for v in (0.5, 0.7, 0.8, 0.9, 1.5, 2.0):
        if lo / 1.05 <= v <= hi * 1.05:
            body.append(f'<text x="{_fmt(ax.px(v))}" y="{bottom + 18}" text-anchor="middle" '
                        f'font-size="11">{v:g}</text>')
    body.append(f'<text x="{WIDTH / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="13">hazard ratio</text>')
    return _document(body, height)
