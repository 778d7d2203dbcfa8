"""CSV emission/parsing and deterministic SVG line charts.

CSV files carry a header row and 17-significant-digit floats so reruns with
the same seed reproduce files byte for byte. Charts are plain hand-written
SVG with fixed geometry: same input, same bytes.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ParseError
from .multilevel import rate_fit

__all__ = [
    "emit_plots",
    "format_value",
    "line_chart",
    "read_csv",
    "write_csv",
]


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        raise ParseError(f"booleans are not a CSV value: {value!r}")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    width = len(header)
    for row in rows:
        row = list(row)
        if len(row) != width:
            raise ParseError(f"row has {len(row)} cells, header has {width}")
        lines.append(",".join(format_value(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Read header + float rows; raises ParseError with the 1-based row."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    lines = [line for line in lines if line != ""]
    if not lines:
        raise ParseError("empty CSV file", row=1)
    header = lines[0].split(",")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(
                f"expected {len(header)} columns, got {len(cells)}", row=i)
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(f"non-numeric cell: {exc}", row=i) from None
    return header, rows


_WIDTH, _HEIGHT = 720, 480
_LEFT, _RIGHT, _TOP, _BOTTOM = 72, 24, 40, 56
_PALETTE = ("#1f6fb2", "#c24d2c", "#3a7d44", "#7a4fa3", "#9c7a1c")


def _fmt(x: float) -> str:
    return format(x, ".2f")


def _tick_label(x: float) -> str:
    if x == 0:
        return "0"
    if abs(x) >= 1e4 or abs(x) < 1e-3:
        return format(x, ".2e")
    return format(x, ".6g")


def _transform(value, lo, hi, log):
    if log:
        value, lo, hi = math.log10(value), math.log10(lo), math.log10(hi)
    if hi == lo:
        return 0.5
    return (value - lo) / (hi - lo)


def _ticks(lo, hi, log):
    if log:
        lo_e, hi_e = math.log10(lo), math.log10(hi)
        return [10.0**e for e in np.linspace(lo_e, hi_e, 5)]
    return list(np.linspace(lo, hi, 5))


def line_chart(series, title="", x_label="", y_label="", log_x=False,
               log_y=False, annotations=()) -> str:
    """Render named (x, y) series to an SVG string.

    series is a list of (name, x_values, y_values). Non-finite points are
    dropped; on a log axis so are non-positive ones. With no drawable
    points the chart still renders its axes and labels.
    """
    cleaned = []
    for name, xs, ys in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.shape != ys.shape:
            raise ParseError(f"series {name!r} has mismatched lengths")
        keep = np.isfinite(xs) & np.isfinite(ys)
        if log_x:
            keep &= xs > 0
        if log_y:
            keep &= ys > 0
        cleaned.append((name, xs[keep], ys[keep]))

    xs_all = np.concatenate([xs for _, xs, _ in cleaned]) if cleaned else np.array([])
    ys_all = np.concatenate([ys for _, _, ys in cleaned]) if cleaned else np.array([])
    if xs_all.size:
        x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
        y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
        if x_lo == x_hi:
            x_lo, x_hi = x_lo - 1, x_hi + 1
        if y_lo == y_hi:
            y_lo, y_hi = y_lo - 1, y_hi + 1
    else:
        x_lo, x_hi = (0.1, 10.0) if log_x else (0.0, 1.0)
        y_lo, y_hi = (0.1, 10.0) if log_y else (0.0, 1.0)

    plot_w = _WIDTH - _LEFT - _RIGHT
    plot_h = _HEIGHT - _TOP - _BOTTOM

    def px(x):
        return _LEFT + plot_w * _transform(x, x_lo, x_hi, log_x)

    def py(y):
        return _TOP + plot_h * (1 - _transform(y, y_lo, y_hi, log_y))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="#ffffff"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
    ]
    axis = (f'<rect x="{_LEFT}" y="{_TOP}" width="{plot_w}" height="{plot_h}" '
            f'fill="none" stroke="#444444"/>')
    parts.append(axis)
    for tick in _ticks(x_lo, x_hi, log_x):
        x = px(tick)
        parts.append(f'<line x1="{_fmt(x)}" y1="{_TOP + plot_h}" '
                     f'x2="{_fmt(x)}" y2="{_TOP + plot_h + 5}" stroke="#444444"/>')
        parts.append(f'<text x="{_fmt(x)}" y="{_TOP + plot_h + 20}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{_tick_label(tick)}</text>')
    for tick in _ticks(y_lo, y_hi, log_y):
        y = py(tick)
        parts.append(f'<line x1="{_LEFT - 5}" y1="{_fmt(y)}" x2="{_LEFT}" '
                     f'y2="{_fmt(y)}" stroke="#444444"/>')
        parts.append(f'<text x="{_LEFT - 8}" y="{_fmt(y + 4)}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{_tick_label(tick)}</text>')
    parts.append(f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">{x_label}</text>')
    parts.append(f'<text x="18" y="{_TOP + plot_h / 2:.1f}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13" transform="rotate(-90 18 '
                 f'{_TOP + plot_h / 2:.1f})">{y_label}</text>')

    for i, (name, xs, ys) in enumerate(cleaned):
        color = _PALETTE[i % len(_PALETTE)]
        if xs.size:
            points = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}"
                              for x, y in zip(xs, ys))
            parts.append(f'<polyline points="{points}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
            for x, y in zip(xs, ys):
                parts.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" '
                             f'r="2.5" fill="{color}"/>')
        ly = _TOP + 16 + 16 * i
        parts.append(f'<line x1="{_WIDTH - 170}" y1="{ly - 4}" '
                     f'x2="{_WIDTH - 146}" y2="{ly - 4}" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{_WIDTH - 140}" y="{ly}" '
                     f'font-family="sans-serif" font-size="12">{name}</text>')

    for i, note in enumerate(annotations):
        parts.append(f'<text x="{_LEFT + 10}" y="{_TOP + 18 + 16 * i}" '
                     f'font-family="sans-serif" font-size="12" '
                     f'fill="#333333">{note}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _column(header, rows, name):
    idx = header.index(name)
    return np.array([row[idx] for row in rows])


def _plot_rates(header, rows) -> str:
    h = _column(header, rows, "h")
    variance = _column(header, rows, "variance")
    cost = _column(header, rows, "cost_units")
    annotations = []
    if h.size >= 2:
        if h.size >= 3:
            v_slope, _, _ = rate_fit(h, variance)
            c_slope, _, _ = rate_fit(h, cost)
        else:
            # two points define the least-squares line exactly, below
            # rate_fit's minimum
            span = np.log2(h[1]) - np.log2(h[0])
            v_slope = float((np.log2(variance[1]) - np.log2(variance[0]))
                            / span)
            c_slope = float((np.log2(cost[1]) - np.log2(cost[0])) / span)
        annotations = [f"variance slope {v_slope:.3f}",
                       f"cost slope {c_slope:.3f}"]
    return line_chart(
        [("variance", h, variance), ("cost", h, cost)],
        title="Coupled increment variance and per-sample cost",
        x_label="step size h_l", y_label="value", log_x=True, log_y=True,
        annotations=annotations,
    )


def _plot_mse(header, rows, skip_first=0, cost_offset=0.0) -> str:
    rows = rows[skip_first:]
    cost = _column(header, rows, "cumulative_cost") + cost_offset
    mse_ml = _column(header, rows, "mse_ml")
    mse_hl = _column(header, rows, "mse_highest")
    annotations = []
    if cost_offset:
        annotations = [f"map-build cost {cost_offset:.3g} units included"]
    return line_chart(
        [("multilevel", cost, mse_ml), ("highest level", cost, mse_hl)],
        title="MSE against cumulative cost",
        x_label="cumulative cost (Euler units)", y_label="MSE",
        log_y=True, annotations=annotations,
    )


def _plot_mlpf_compare(header, rows) -> str:
    level = _column(header, rows, "level")
    transport = _column(header, rows, "transport_variance")
    mlpf = _column(header, rows, "mlpf_variance")
    h = 2.0**-level
    annotations = []
    if level.size >= 3:
        t_slope, _, _ = rate_fit(h, transport)
        m_slope, _, _ = rate_fit(h, mlpf)
        annotations = [f"transport slope {t_slope:.3f}",
                       f"particle filter slope {m_slope:.3f}"]
    return line_chart(
        [("transport", h, transport), ("particle filter", h, mlpf)],
        title="Increment variance by method",
        x_label="step size h_l", y_label="variance", log_x=True, log_y=True,
        annotations=annotations,
    )


def emit_plots(csv_path, out_path, skip_first=0, cost_offset=0.0) -> str:
    """Render the chart matching a known CSV schema; returns the SVG text.

    skip_first hides leading rows of the MSE chart only, and cost_offset
    shifts its displayed cost axis (combined-cost view); stored data is
    never altered.
    """
    header, rows = read_csv(csv_path)
    cols = set(header)
    if {"h", "variance", "cost_units"} <= cols:
        svg = _plot_rates(header, rows)
    elif {"cumulative_cost", "mse_ml", "mse_highest"} <= cols:
        svg = _plot_mse(header, rows, skip_first=skip_first,
                        cost_offset=cost_offset)
    elif {"level", "transport_variance", "mlpf_variance"} <= cols:
        svg = _plot_mlpf_compare(header, rows)
    else:
        raise ParseError(f"no chart for CSV columns {header}", row=1)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return svg
