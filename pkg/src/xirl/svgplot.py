"""Hand-rolled SVG line plots and strict CSV I/O.

SVG is emitted as deterministic text: identical inputs give identical
bytes, which makes plots testable with plain equality. No external
plotting stack is involved.
"""

from __future__ import annotations

from pathlib import Path

WIDTH, HEIGHT = 720, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 24, 40, 48
PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)


class CsvError(ValueError):
    """Malformed CSV; message names the offending line."""


def write_csv(path: str | Path, header: list[str], rows) -> None:
    """Plain comma-separated text; floats keep full roundtrip precision."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                # repr of the builtin float roundtrips exactly; casting first
                # keeps numpy scalars from leaking their wrapper repr
                cells.append(repr(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path: str | Path) -> tuple[list[str], list[list[float]]]:
    """Header plus all-numeric rows; anything else raises CsvError."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise CsvError(f"{path}: line 1: empty file")
    header = lines[0].split(",")
    if len(header) < 2:
        raise CsvError(f"{path}: line 1: need at least two columns")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise CsvError(
                f"{path}: line {i}: expected {len(header)} fields, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as e:
            raise CsvError(f"{path}: line {i}: non-numeric value") from e
    if not rows:
        raise CsvError(f"{path}: line 2: no data rows")
    return header, rows


def _fmt(v: float) -> str:
    """Fixed-notation coordinate formatting, stable across platforms."""
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(
    series: list[tuple[str, list[float], list[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> str:
    """One polyline per (label, xs, ys) series, with axes and a legend."""
    if not series:
        raise ValueError("nothing to plot")
    for label, xs, ys in series:
        if len(xs) != len(ys) or not xs:
            raise ValueError(f"series {label!r} must pair at least one x with one y")
    all_x = [v for _, xs, _ in series for v in xs]
    all_y = [v for _, _, ys in series for v in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        # screen y grows downward; data y grows upward
        return MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{_esc(title)}</text>'
        )
    ax = (
        f'<path d="M {MARGIN_L} {MARGIN_T} V {MARGIN_T + plot_h} '
        f'H {MARGIN_L + plot_w}" fill="none" stroke="black" stroke-width="1"/>'
    )
    out.append(ax)
    for tick in _ticks(x_lo, x_hi):
        px = sx(tick)
        out.append(
            f'<line x1="{_fmt(px)}" y1="{MARGIN_T + plot_h}" x2="{_fmt(px)}" '
            f'y2="{MARGIN_T + plot_h + 5}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_fmt(px)}" y="{MARGIN_T + plot_h + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt_tick(tick)}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        py = sy(tick)
        out.append(
            f'<line x1="{MARGIN_L - 5}" y1="{_fmt(py)}" x2="{MARGIN_L}" '
            f'y2="{_fmt(py)}" stroke="black"/>'
        )
        out.append(
            f'<text x="{MARGIN_L - 8}" y="{_fmt(py + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt_tick(tick)}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{MARGIN_L + plot_w // 2}" y="{HEIGHT - 10}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{_esc(xlabel)}</text>'
        )
    if ylabel:
        cy = MARGIN_T + plot_h // 2
        out.append(
            f'<text x="16" y="{cy}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="13" transform="rotate(-90 16 {cy})">{_esc(ylabel)}</text>'
        )
    for k, (label, xs, ys) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        points = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        ly = MARGIN_T + 14 + 16 * k
        lx = MARGIN_L + plot_w - 150
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{_esc(label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 10_000 or abs(v) < 0.01:
        return f"{v:.2e}"
    return f"{v:.4g}"


def plot_csvs(
    paths: list[str | Path],
    kind: str,
    out_path: str | Path,
) -> None:
    """Render learning curves or reward traces from CSV files.

    curve: x = step, y = success_rate, one series per file.
    reward-trace: x = frame_index, y = learned and env reward series."""
    if kind not in ("curve", "reward-trace"):
        raise ValueError(f"unknown plot kind {kind!r}")
    series = []
    for path in paths:
        header, rows = read_csv(path)
        cols = {name: [r[i] for r in rows] for i, name in enumerate(header)}
        stem = Path(path).stem
        if kind == "curve":
            for need in ("step", "success_rate"):
                if need not in cols:
                    raise CsvError(f"{path}: line 1: missing column {need!r}")
            series.append((stem, cols["step"], cols["success_rate"]))
        else:
            for need in ("frame_index", "learned_reward", "env_reward"):
                if need not in cols:
                    raise CsvError(f"{path}: line 1: missing column {need!r}")
            series.append((f"{stem} learned", cols["frame_index"], cols["learned_reward"]))
            series.append((f"{stem} env", cols["frame_index"], cols["env_reward"]))
    labels = {
        "curve": ("environment steps", "success rate"),
        "reward-trace": ("frame", "reward"),
    }[kind]
    svg = render_svg(series, title="", xlabel=labels[0], ylabel=labels[1])
    Path(out_path).write_text(svg, encoding="utf-8")
