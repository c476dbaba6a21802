"""Standalone SVG curves of run metrics, mean and standard-error bands per method."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .harness import read_run_csv

LOG_FLOOR = 1e-12
METRICS = ("simple", "cumulative", "coverage", "lengthscale")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 50


class PlotInputError(ValueError):
    pass


def method_of(path) -> str:
    parts = Path(path).stem.split("__")
    return parts[1] if len(parts) == 3 else Path(path).stem


def metric_series(records, metric: str) -> np.ndarray:
    if metric == "simple":
        return np.log10(np.maximum([r.simple_regret for r in records], LOG_FLOOR))
    if metric == "cumulative":
        return np.log10(np.maximum([r.cum_regret for r in records], LOG_FLOOR))
    if metric == "coverage":
        cov = np.array([r.covered for r in records], dtype=float)
        return np.cumsum(cov) / np.arange(1, cov.size + 1)
    if metric == "lengthscale":
        return np.array([r.theta[0] for r in records], dtype=float)
    raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")


def collect(paths, metric: str) -> dict:
    """Group runs by method and return ``{method: (mean, se)}``.

    All files in one panel must share the same number of rounds.
    """
    series: dict = {}
    lengths: dict = {}
    for p in paths:
        recs = read_run_csv(p)
        if not recs:
            raise PlotInputError(f"{p} has no rounds")
        lengths[str(p)] = len(recs)
        series.setdefault(method_of(p), []).append(metric_series(recs, metric))
    if len(set(lengths.values())) > 1:
        detail = ", ".join(f"{k} (T={v})" for k, v in sorted(lengths.items()))
        raise PlotInputError(f"inconsistent T across files: {detail}")
    out = {}
    for m, rows in sorted(series.items()):
        a = np.vstack(rows)
        se = a.std(axis=0, ddof=1) / math.sqrt(len(a)) if len(a) > 1 else np.zeros(a.shape[1])
        out[m] = (a.mean(axis=0), se)
    return out


def _f(v: float) -> str:
    return f"{v:.2f}"


def render_svg(curves: dict, metric: str) -> str:
    T = len(next(iter(curves.values()))[0])
    lo = min(float(np.min(m - s)) for m, s in curves.values())
    hi = max(float(np.max(m + s)) for m, s in curves.values())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(t):
        return LEFT + (t - 1) / max(T - 1, 1) * pw

    def sy(v):
        return TOP + (hi - v) / (hi - lo) * ph

    ylabel = {"simple": "log10 simple regret", "cumulative": "log10 cumulative regret",
              "coverage": "running coverage", "lengthscale": "lengthscale"}[metric]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>']
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        y = sy(v)
        out.append(f'<line x1="{LEFT - 4}" y1="{_f(y)}" x2="{LEFT}" y2="{_f(y)}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_f(y + 4)}" text-anchor="end">{v:.3g}</text>')
        t = 1 + (T - 1) * k / 4
        x = sx(t)
        out.append(f'<line x1="{_f(x)}" y1="{TOP + ph}" x2="{_f(x)}" y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_f(x)}" y="{TOP + ph + 18}" text-anchor="middle">{t:.0f}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle">round</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2})">{ylabel}</text>')
    ts = np.arange(1, T + 1)
    for i, (name, (mean, se)) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        upper = [f"{_f(sx(t))},{_f(sy(v))}" for t, v in zip(ts, mean + se)]
        lower = [f"{_f(sx(t))},{_f(sy(v))}" for t, v in zip(ts[::-1], (mean - se)[::-1])]
        out.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                   f'fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{_f(sx(t))},{_f(sy(v))}" for t, v in zip(ts, mean))
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = TOP + 14 + 18 * i
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 38}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_svg(paths, metric: str, out) -> Path:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    if not paths:
        raise PlotInputError("no run files given")
    out = Path(out)
    out.write_text(render_svg(collect(paths, metric), metric), encoding="utf-8")
    return out
