"""Static HTML/SVG report over a run directory's CSV and JSON artifacts.

Rendering is a pure function of the files on disk: every number shown is
read from an analysis CSV/JSON, and sections whose inputs are missing are
listed as "not run" rather than failing.
"""

from __future__ import annotations

import html
import json
import os
from typing import List, Optional, Sequence

# -- tiny SVG helpers --------------------------------------------------------

_PALETTE = ("#2a7fb8", "#e0a025", "#4caf50", "#b05fa0")


def _svg_header(width: int, height: int) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}" '
            f'font-family="sans-serif" font-size="11">')


def bar_chart(title: str, labels: Sequence[str], series: dict,
              width: int = 520, height: int = 260) -> str:
    """Grouped vertical bars; series maps legend name -> list of values."""
    pad_l, pad_b, pad_t = 50, 60, 28
    plot_w, plot_h = width - pad_l - 15, height - pad_b - pad_t
    names = list(series)
    vmax = max((max(v) for v in series.values() if len(v)), default=1.0) or 1.0
    group_w = plot_w / max(len(labels), 1)
    bar_w = group_w * 0.8 / max(len(names), 1)
    parts = [_svg_header(width, height),
             f'<text x="{width / 2}" y="16" text-anchor="middle" '
             f'font-weight="bold">{html.escape(title)}</text>']
    for i, vtick in enumerate((0.0, 0.5, 1.0)):
        y = pad_t + plot_h * (1 - vtick)
        parts.append(f'<line x1="{pad_l}" y1="{y:.1f}" x2="{width - 15}" '
                     f'y2="{y:.1f}" stroke="#ddd"/>')
        parts.append(f'<text x="{pad_l - 6}" y="{y + 4:.1f}" '
                     f'text-anchor="end">{vtick * vmax:.3g}</text>')
    for gi, label in enumerate(labels):
        gx = pad_l + gi * group_w
        for si, name in enumerate(names):
            vals = series[name]
            v = vals[gi] if gi < len(vals) else 0.0
            bh = plot_h * (v / vmax if vmax else 0.0)
            x = gx + group_w * 0.1 + si * bar_w
            y = pad_t + plot_h - bh
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" '
                f'height="{bh:.1f}" fill="{_PALETTE[si % len(_PALETTE)]}">'
                f'<title>{html.escape(name)} {html.escape(label)}: {v:.4g}</title></rect>')
        parts.append(
            f'<text x="{gx + group_w / 2:.1f}" y="{height - pad_b + 14}" '
            f'text-anchor="end" transform="rotate(-35 {gx + group_w / 2:.1f} '
            f'{height - pad_b + 14})">{html.escape(label)}</text>')
    for si, name in enumerate(names):
        parts.append(f'<rect x="{pad_l + si * 130}" y="{height - 16}" width="10" '
                     f'height="10" fill="{_PALETTE[si % len(_PALETTE)]}"/>')
        parts.append(f'<text x="{pad_l + si * 130 + 14}" y="{height - 7}">'
                     f'{html.escape(name)}</text>')
    parts.append("</svg>")
    return "".join(parts)


def scatter_diag(title: str, series: dict, width: int = 420,
                 height: int = 420, xlabel: str = "clean",
                 ylabel: str = "noisy") -> str:
    """Scatter of (x, y) points per series with the y=x reference diagonal."""
    pad = 48
    plot = width - 2 * pad
    pts = [p for v in series.values() for p in v]
    vmax = max((max(x, y) for x, y in pts), default=1.0) or 1.0
    vmax *= 1.05

    def sx(v):
        return pad + plot * v / vmax

    def sy(v):
        return height - pad - (height - 2 * pad) * v / vmax

    parts = [_svg_header(width, height),
             f'<text x="{width / 2}" y="16" text-anchor="middle" '
             f'font-weight="bold">{html.escape(title)}</text>',
             f'<line x1="{sx(0):.1f}" y1="{sy(0):.1f}" x2="{sx(vmax):.1f}" '
             f'y2="{sy(vmax):.1f}" stroke="#999" stroke-dasharray="4 3"/>',
             f'<rect x="{pad}" y="{pad}" width="{plot}" '
             f'height="{height - 2 * pad}" fill="none" stroke="#ccc"/>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">'
             f'{html.escape(xlabel)}</text>',
             f'<text x="12" y="{height / 2}" text-anchor="middle" '
             f'transform="rotate(-90 12 {height / 2})">{html.escape(ylabel)}</text>']
    for si, (name, points) in enumerate(series.items()):
        color = _PALETTE[si % len(_PALETTE)]
        for x, y in points:
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" '
                         f'fill="{color}" fill-opacity="0.65"/>')
        parts.append(f'<circle cx="{pad + 10 + si * 150}" cy="{pad - 14}" r="4" '
                     f'fill="{color}"/>')
        parts.append(f'<text x="{pad + 18 + si * 150}" y="{pad - 10}">'
                     f'{html.escape(name)}</text>')
    parts.append("</svg>")
    return "".join(parts)


# -- CSV/JSON access ---------------------------------------------------------

def _read_csv(path) -> Optional[List[dict]]:
    if not os.path.exists(path):
        return None
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def _read_json(path) -> Optional[dict]:
    if not os.path.exists(path):
        return None
    with open(path) as f:
        return json.load(f)


def _seed_dirs(run_dir) -> List[str]:
    return sorted(d for d in os.listdir(run_dir)
                  if d.startswith("seed")
                  and os.path.isdir(os.path.join(run_dir, d)))


def _not_run(section: str) -> str:
    return (f'<section><h2>{html.escape(section)}</h2>'
            f'<p class="notrun">not run</p></section>')


def _table(rows: List[dict], columns: List[str]) -> str:
    head = "".join(f"<th>{html.escape(c)}</th>" for c in columns)
    body = "".join(
        "<tr>" + "".join(f"<td>{html.escape(str(r.get(c, '')))}</td>"
                         for c in columns) + "</tr>"
        for r in rows)
    return f'<table><thead><tr>{head}</tr></thead><tbody>{body}</tbody></table>'


# -- the report itself -------------------------------------------------------

def render_report(run_dir) -> str:
    """Write report/index.html (+SVG files); returns the index path."""
    out_dir = os.path.join(run_dir, "report")
    os.makedirs(out_dir, exist_ok=True)
    sections: List[str] = []
    svg_files = {}

    def add_svg(name: str, svg: str) -> str:
        svg_files[name] = svg
        return f'<object data="{name}" type="image/svg+xml"></object>'

    seeds = _seed_dirs(run_dir)

    # accuracy table (clean/adversarial)
    rows = []
    for sd in seeds:
        got = _read_csv(os.path.join(run_dir, sd, "analysis", "adv.csv"))
        if got:
            rows += got
    if rows:
        sections.append("<section><h2>Clean vs adversarial accuracy</h2>"
                        + _table(rows, ["model", "regime", "clean_acc",
                                        "adv_acc", "epsilon"]) + "</section>")
    else:
        sections.append(_not_run("Clean vs adversarial accuracy"))

    # shape bias
    rows = []
    for sd in seeds:
        got = _read_csv(os.path.join(run_dir, sd, "analysis", "bias.csv"))
        if got:
            rows += got
    if rows:
        labels = [r["model"] for r in rows]
        chart = add_svg("bias.svg", bar_chart(
            "Shape bias on cue-conflict images", labels,
            {"shape_bias": [float(r["shape_bias"]) for r in rows]}))
        sections.append("<section><h2>Shape bias</h2>" + chart
                        + _table(rows, ["model", "regime", "n", "shape",
                                        "texture", "shape_bias"]) + "</section>")
    else:
        sections.append(_not_run("Shape bias"))

    # distortion battery
    rows = []
    for sd in seeds:
        got = _read_csv(os.path.join(run_dir, sd, "analysis", "distort.csv"))
        if got:
            rows += got
    if rows:
        sections.append("<section><h2>Distorted-image accuracy "
                        "(both-correct subset)</h2>"
                        + _table(rows, ["model", "regime", "distortion",
                                        "accuracy", "n"]) + "</section>")
    else:
        sections.append(_not_run("Distorted-image accuracy"))

    # filter TV
    rows = []
    for sd in seeds:
        got = _read_csv(os.path.join(run_dir, sd, "analysis", "tv.csv"))
        if got:
            rows += got
    if rows:
        layers = sorted({r["layer"] for r in rows})
        series = {}
        for r in rows:
            series.setdefault(r["model"], [0.0] * len(layers))
            series[r["model"]][layers.index(r["layer"])] = float(r["mean_tv"])
        chart = add_svg("tv.svg", bar_chart("Mean filter total variation",
                                            layers, series))
        sections.append("<section><h2>Filter smoothness (TV)</h2>" + chart
                        + _table(rows, ["model", "regime", "layer", "mean_tv"])
                        + "</section>")
    else:
        sections.append(_not_run("Filter smoothness (TV)"))

    # clean vs noisy activation TV scatter
    per_seed_svgs = []
    for sd in seeds:
        got = _read_csv(os.path.join(run_dir, sd, "analysis", "noise_tv.csv"))
        if got:
            series = {}
            for r in got:
                series.setdefault(r["model"], []).append(
                    (float(r["tv_clean"]), float(r["tv_noisy"])))
            per_seed_svgs.append(add_svg(
                f"noise_tv_{sd}.svg",
                scatter_diag(f"Activation TV, clean vs noisy ({sd})", series,
                             xlabel="TV on clean", ylabel="TV on noisy")))
    if per_seed_svgs:
        sections.append("<section><h2>Noise blocking (activation TV)</h2>"
                        + "".join(per_seed_svgs) + "</section>")
    else:
        sections.append(_not_run("Noise blocking (activation TV)"))

    # dissection categories + diversity
    cat_rows = []
    div_rows = []
    for sd in seeds:
        summary = _read_json(os.path.join(run_dir, sd, "analysis", "dissect.json"))
        if summary:
            for regime, entry in summary.items():
                if not isinstance(entry, dict) or "category_counts" not in entry:
                    continue
                cat_rows.append((f"{sd}-{regime}", entry["category_counts"]))
                div_rows.append((f"{sd}-{regime}", entry["mean_diversity"]))
    if cat_rows:
        cats = ["shape", "texture", "color", "none"]
        chart = add_svg("dissect.svg", bar_chart(
            "Main-label category counts", cats,
            {name: [counts.get(c, 0) for c in cats] for name, counts in cat_rows}))
        chart2 = add_svg("diversity.svg", bar_chart(
            "Mean diversity score", [name for name, _ in div_rows],
            {"diversity": [v for _, v in div_rows]}))
        sections.append("<section><h2>Concept dissection</h2>"
                        + chart + chart2 + "</section>")
    else:
        sections.append(_not_run("Concept dissection"))

    # ablation summary
    rows = []
    for sd in seeds:
        summary = _read_json(os.path.join(run_dir, sd, "analysis", "ablate.json"))
        if summary:
            for regime, per_cat in summary.items():
                if not isinstance(per_cat, dict):
                    continue
                for cat, vals in per_cat.items():
                    if isinstance(vals, dict):
                        rows.append({"model": f"{sd}-{regime}", "category": cat,
                                     "n": vals["n"],
                                     "mean_shape_score": f"{vals['mean_shape_score']:.2f}",
                                     "mean_texture_score": f"{vals['mean_texture_score']:.2f}"})
    if rows:
        sections.append("<section><h2>Channel-ablation importance</h2>"
                        + _table(rows, ["model", "category", "n",
                                        "mean_shape_score", "mean_texture_score"])
                        + "</section>")
    else:
        sections.append(_not_run("Channel-ablation importance"))

    # acceptance summary
    acc = _read_json(os.path.join(run_dir, "acceptance.json"))
    if acc:
        rows = [{"id": c["id"], "passed": "PASS" if c["passed"] else "FAIL",
                 "detail": c["detail"]} for c in acc["checks"]]
        sections.append("<section><h2>Acceptance checks</h2>"
                        f"<p>wall time: {acc['wall_seconds']:.0f} s; all passed: "
                        f"{acc['all_passed']}</p>"
                        + _table(rows, ["id", "passed", "detail"]) + "</section>")
    else:
        sections.append(_not_run("Acceptance checks"))

    for name, svg in svg_files.items():
        with open(os.path.join(out_dir, name), "w") as f:
            f.write(svg)

    page = ("<!DOCTYPE html><html><head><meta charset='utf-8'>"
            "<title>robustlab report</title><style>"
            "body{font-family:sans-serif;margin:2em;max-width:1100px}"
            "table{border-collapse:collapse;margin:1em 0}"
            "td,th{border:1px solid #bbb;padding:3px 8px;font-size:13px}"
            "th{background:#eee}.notrun{color:#a33;font-style:italic}"
            "object{margin:6px}section{margin-bottom:2em}"
            "</style></head><body><h1>robustlab run report</h1>"
            + "".join(sections) + "</body></html>")
    index = os.path.join(out_dir, "index.html")
    with open(index, "w") as f:
        f.write(page)
    return index
