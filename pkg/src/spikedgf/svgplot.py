"""Dependency-free SVG line charts of correlation trajectories."""

import math
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["trajectory_svg", "line_chart"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
            "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def line_chart(x, series, path, highlight=(), log_x=False, title="", xlabel="t", ylabel="",
               ylim=None, width=720, height=440):
    """Write a line chart to ``path``.

    Parameters
    ----------
    x : (T,) array
    series : dict
        Label -> (T,) array, drawn in insertion order.
    highlight : collection
        Labels drawn thick; the others are drawn thin and grey-toned.
    log_x : bool
        Logarithmic x axis; points with ``x <= 0`` are dropped.
    """
    x = np.asarray(x, dtype=float)
    keep = x > 0 if log_x else np.ones(x.size, bool)
    xs = np.log10(x[keep]) if log_x else x[keep]
    if xs.size == 0:
        xs, keep = np.zeros(1), np.zeros(x.size, bool)
    ys = {k: np.asarray(v, dtype=float)[keep] for k, v in series.items()}
    if ylim is None:
        allv = np.concatenate([v for v in ys.values()]) if ys else np.zeros(1)
        allv = allv[np.isfinite(allv)] if allv.size else np.zeros(1)
        ylim = (min(0.0, float(allv.min(initial=0.0))), max(1.0, float(allv.max(initial=1.0))))
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 == x0:
        x1 = x0 + 1.0
    y0, y1 = ylim
    L, R, T, B = 60, 150, 30, 45
    pw, ph = width - L - R, height - T - B

    def px(v):
        return L + (v - x0) / (x1 - x0) * pw

    def py(v):
        return T + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for tv in _ticks(x0, x1):
        lab = f"1e{tv:g}" if log_x else f"{tv:g}"
        out.append(f'<line x1="{px(tv):.2f}" y1="{T + ph}" x2="{px(tv):.2f}" y2="{T + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(tv):.2f}" y="{T + ph + 16}" text-anchor="middle">{lab}</text>')
    for tv in _ticks(y0, y1):
        out.append(f'<line x1="{L - 4}" y1="{py(tv):.2f}" x2="{L}" y2="{py(tv):.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 7}" y="{py(tv) + 4:.2f}" text-anchor="end">{tv:g}</text>')
    out.append(f'<text x="{L + pw / 2}" y="{height - 8}" text-anchor="middle">'
               f'{escape(xlabel)}{" (log scale)" if log_x else ""}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{T + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {T + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{L + pw / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    for n, (label, v) in enumerate(ys.items()):
        color = _PALETTE[n % len(_PALETTE)]
        hl = label in highlight
        ok = np.isfinite(v)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs[ok], v[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="{2.5 if hl else 1}" '
                   f'stroke-opacity="{1 if hl else 0.6}" points="{pts}"/>')
        ly = T + 14 * n + 8
        out.append(f'<line x1="{L + pw + 10}" y1="{ly}" x2="{L + pw + 30}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="{2.5 if hl else 1}"/>')
        weight = ' font-weight="bold"' if hl else ""
        out.append(f'<text x="{L + pw + 35}" y="{ly + 4}"{weight}>{escape(str(label))}</text>')
    out.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def trajectory_svg(traj, path, selection=None, log_time=False, title=""):
    """Plot every ``m_ij(t)`` of a trajectory; pairs in ``selection`` are highlighted."""
    r = traj.r
    series = {f"({i + 1},{j + 1})": traj.snapshots[:, i, j] for i in range(r) for j in range(r)}
    hl = set()
    if selection is not None:
        hl = {f"({i + 1},{j + 1})" for i, j in selection.pairs}
    lo = float(traj.snapshots.min())
    y_lo = -1.0 if lo < -0.1 else min(0.0, lo)
    y_hi = max(1.0, float(traj.snapshots.max()))
    line_chart(traj.times, series, path, highlight=hl, log_x=log_time, title=title,
               ylabel="m_ij", ylim=(y_lo, y_hi))
