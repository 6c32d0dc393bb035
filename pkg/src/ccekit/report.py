"""CSV and SVG emitters. Output is locale-independent and newline = LF."""
import hashlib
import json
import math
from xml.sax.saxutils import escape


def fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.6f}"
    return str(value)


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def header_line(meta):
    return "# " + " ".join(f"{k}={meta[k]}" for k in meta)


def csv_text(fields, rows, meta=None):
    lines = [] if meta is None else [header_line(meta)]
    lines.append(",".join(fields))
    for row in rows:
        lines.append(",".join(fmt(row[f]) for f in fields))
    return "\n".join(lines) + "\n"


def write_csv(path, fields, rows, meta=None):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(csv_text(fields, rows, meta))


def read_csv(path):
    """Rows of a file written by :func:`write_csv`, values kept as strings."""
    with open(path, encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    fields = lines[0].split(",")
    return [dict(zip(fields, ln.split(","))) for ln in lines[1:]]


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_chart(series, xlabel, ylabel, title="", width=640, height=400):
    """Self-contained SVG with one polyline per entry of ``series``.

    ``series`` maps a label to a list of (x, y) points.
    """
    left, right, top, bottom = 60, 170, 30, 50
    pts = [p for s in series.values() for p in s if math.isfinite(p[1])]
    if not pts:
        raise ValueError("nothing to plot")
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(0.0, min(p[1] for p in pts)), max(p[1] for p in pts)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for j in range(5):
        xv = x0 + (x1 - x0) * j / 4
        yv = y0 + (y1 - y0) * j / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" font-size="11" '
                   f'text-anchor="middle">{xv:.2f}</text>')
        out.append(f'<text x="{left - 6}" y="{sy(yv) + 4:.1f}" font-size="11" '
                   f'text-anchor="end">{yv:.2f}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" font-size="13" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{top + ph / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="18" font-size="14" '
                   f'text-anchor="middle">{escape(title)}</text>')
    for i, (label, s) in enumerate(series.items()):
        colour = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s if math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{coords}"/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
